#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "slicebf/table.hpp"

namespace slicebf {

/// Maximal run of equal response values, as a half-open interval of
/// 0-based ranks.
struct TieBlock {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  friend bool operator==(const TieBlock&, const TieBlock&) = default;
};

/// A categorical column with dense codes 0..levels-1 in observation order.
struct Categorical {
  std::vector<int> codes;
  int levels = 1;
  std::vector<std::string> labels;  // labels[c] names code c; may be empty

  std::size_t size() const { return codes.size(); }
};

/// Codes labels by order of first appearance.
Categorical encode_labels(std::span<const std::string> values);

/// Wraps pre-coded integers; every code must lie in [0, levels).
Categorical make_categorical(std::vector<int> codes, int levels);

/// Constant single-level column (the unconditional Z = 0).
Categorical constant_categorical(std::size_t n);

/// Mixed-radix joint coding z = z1 + |Z1| z2 + |Z1||Z2| z3 + ... with
/// |Z| = product of the part sizes. Labels of the result join part labels
/// with '|'.
Categorical encode_super_variable(std::span<const Categorical> parts);

/// Response ordering shared by every covariate measured on the same rows.
struct Ranking {
  std::vector<std::size_t> order;  // order[r] = original row with rank r
  std::vector<double> sorted;      // responses in rank order
  std::vector<TieBlock> blocks;

  std::size_t size() const { return order.size(); }
};

/// Stable ascending sort of the response; throws InputError on non-finite
/// values or an empty response.
Ranking rank_response(std::span<const double> y);

/// Observations ranked by response with X and Z stored in rank order.
/// Immutable after construction.
class SlicedDataset {
 public:
  SlicedDataset(std::span<const double> y, const Categorical& x, const Categorical& z);
  SlicedDataset(Ranking ranking, const Categorical& x, const Categorical& z);

  /// Unconditional data set: Z is constant.
  static SlicedDataset unconditional(std::span<const double> y, const Categorical& x);

  std::size_t size() const { return x_.size(); }
  int x_levels() const { return x_levels_; }
  int z_levels() const { return z_levels_; }
  std::span<const int> x() const { return x_; }
  std::span<const int> z() const { return z_; }
  std::span<const double> y() const { return ranking_.sorted; }
  std::span<const std::size_t> y_order() const { return ranking_.order; }
  std::span<const TieBlock> tie_blocks() const { return ranking_.blocks; }
  const Ranking& ranking() const { return ranking_; }
  const std::vector<std::string>& x_labels() const { return x_labels_; }
  const std::vector<std::string>& z_labels() const { return z_labels_; }

  /// Same responses and groups, X replaced by `ranked_x` (rank order).
  SlicedDataset with_ranked_x(std::vector<int> ranked_x) const;

  /// Responses of observations with X == level, in rank order.
  std::vector<double> responses_where_x(int level) const;

 private:
  SlicedDataset() = default;
  void validate() const;

  Ranking ranking_;
  std::vector<int> x_;
  std::vector<int> z_;
  int x_levels_ = 1;
  int z_levels_ = 1;
  std::vector<std::string> x_labels_;
  std::vector<std::string> z_labels_;
};

/// Builds a data set from named table columns. Several covariate columns
/// are jointly coded; several group columns form a super variable; no
/// group columns gives the unconditional test.
SlicedDataset load_table(const Table& table, const std::string& response_col,
                         const std::vector<std::string>& covariate_cols,
                         const std::vector<std::string>& group_cols);

/// Parses a response column; throws InputError on unparsable or non-finite
/// cells.
std::vector<double> parse_response(const Table& table, const std::string& response_col);

/// Cumulative counts cum[t][j][k] of observations with rank < t, z = j and
/// x = k, for t = 0..n. Cells are laid out j * |X| + k.
class PrefixCountTable {
 public:
  PrefixCountTable(std::span<const int> x, int x_levels, std::span<const int> z, int z_levels);
  explicit PrefixCountTable(const SlicedDataset& d);

  std::size_t size() const { return n_; }
  int x_levels() const { return x_levels_; }
  int z_levels() const { return z_levels_; }
  std::size_t cells() const { return cells_; }

  int count(std::size_t t, int j, int k) const { return cum_[t * cells_ + cell(j, k)]; }
  std::span<const int> row(std::size_t t) const {
    return {cum_.data() + t * cells_, cells_};
  }

  /// Count of z = j, x = k among ranks [begin, end), i.e. the 1-based
  /// inclusive segment begin+1 .. end.
  int segment(std::size_t begin, std::size_t end, int j, int k) const {
    return count(end, j, k) - count(begin, j, k);
  }

  /// All cells of the segment [begin, end).
  std::vector<int> segment_counts(std::size_t begin, std::size_t end) const;

 private:
  std::size_t cell(int j, int k) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(x_levels_) +
           static_cast<std::size_t>(k);
  }

  std::size_t n_ = 0;
  int x_levels_ = 1;
  int z_levels_ = 1;
  std::size_t cells_ = 1;
  std::vector<int> cum_;
};

}  // namespace slicebf
