#include "slicebf/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "slicebf/error.hpp"

namespace slicebf {

namespace {

constexpr long long kMaxSuperLevels = 1LL << 24;

std::vector<int> rank_order(const std::vector<int>& codes, const Ranking& ranking) {
  std::vector<int> out(codes.size());
  for (std::size_t r = 0; r < ranking.order.size(); ++r) out[r] = codes[ranking.order[r]];
  return out;
}

}  // namespace

Categorical encode_labels(std::span<const std::string> values) {
  Categorical out;
  std::unordered_map<std::string, int> index;
  out.codes.reserve(values.size());
  for (const auto& v : values) {
    auto [it, inserted] = index.try_emplace(v, static_cast<int>(out.labels.size()));
    if (inserted) out.labels.push_back(v);
    out.codes.push_back(it->second);
  }
  out.levels = std::max<int>(1, static_cast<int>(out.labels.size()));
  return out;
}

Categorical make_categorical(std::vector<int> codes, int levels) {
  if (levels < 1) throw InputError("a categorical variable needs at least one level");
  for (int c : codes) {
    if (c < 0 || c >= levels) {
      throw InputError("category code " + std::to_string(c) + " outside [0, " +
                       std::to_string(levels) + ")");
    }
  }
  Categorical out;
  out.codes = std::move(codes);
  out.levels = levels;
  return out;
}

Categorical constant_categorical(std::size_t n) {
  Categorical out;
  out.codes.assign(n, 0);
  out.levels = 1;
  return out;
}

Categorical encode_super_variable(std::span<const Categorical> parts) {
  if (parts.empty()) throw InputError("super variable needs at least one part");
  const std::size_t n = parts.front().size();
  long long levels = 1;
  for (const auto& p : parts) {
    if (p.size() != n) throw InputError("super variable parts differ in length");
    levels *= p.levels;
    if (levels > kMaxSuperLevels) throw CapacityError("super variable has too many levels");
  }

  Categorical out;
  out.levels = static_cast<int>(levels);
  out.codes.assign(n, 0);
  int radix = 1;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < n; ++i) out.codes[i] += radix * p.codes[i];
    radix *= p.levels;
  }

  const bool labelled = std::all_of(parts.begin(), parts.end(), [](const Categorical& p) {
    return static_cast<int>(p.labels.size()) == p.levels;
  });
  if (labelled) {
    out.labels.resize(static_cast<std::size_t>(levels));
    for (int code = 0; code < out.levels; ++code) {
      std::string label;
      int rest = code;
      for (std::size_t q = 0; q < parts.size(); ++q) {
        if (q > 0) label += '|';
        label += parts[q].labels[static_cast<std::size_t>(rest % parts[q].levels)];
        rest /= parts[q].levels;
      }
      out.labels[static_cast<std::size_t>(code)] = std::move(label);
    }
  }
  return out;
}

Ranking rank_response(std::span<const double> y) {
  if (y.empty()) throw InputError("no observations");
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) {
      throw InputError("non-finite response at observation " + std::to_string(i + 1));
    }
  }
  Ranking r;
  r.order.resize(y.size());
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
  r.sorted.reserve(y.size());
  for (auto i : r.order) r.sorted.push_back(y[i]);

  std::size_t begin = 0;
  for (std::size_t t = 1; t <= r.sorted.size(); ++t) {
    if (t == r.sorted.size() || r.sorted[t] != r.sorted[begin]) {
      r.blocks.push_back({begin, t});
      begin = t;
    }
  }
  return r;
}

SlicedDataset::SlicedDataset(std::span<const double> y, const Categorical& x, const Categorical& z)
    : SlicedDataset(rank_response(y), x, z) {}

SlicedDataset::SlicedDataset(Ranking ranking, const Categorical& x, const Categorical& z)
    : ranking_(std::move(ranking)),
      x_levels_(x.levels),
      z_levels_(z.levels),
      x_labels_(x.labels),
      z_labels_(z.labels) {
  if (x.size() != ranking_.size() || z.size() != ranking_.size()) {
    throw InputError("response, covariate and group lengths differ");
  }
  x_ = rank_order(x.codes, ranking_);
  z_ = rank_order(z.codes, ranking_);
  validate();
}

SlicedDataset SlicedDataset::unconditional(std::span<const double> y, const Categorical& x) {
  return SlicedDataset(y, x, constant_categorical(y.size()));
}

void SlicedDataset::validate() const {
  if (x_levels_ < 1 || z_levels_ < 1) throw InputError("level counts must be positive");
  for (std::size_t i = 0; i < x_.size(); ++i) {
    if (x_[i] < 0 || x_[i] >= x_levels_) throw InputError("covariate code out of range");
    if (z_[i] < 0 || z_[i] >= z_levels_) throw InputError("group code out of range");
  }
}

SlicedDataset SlicedDataset::with_ranked_x(std::vector<int> ranked_x) const {
  if (ranked_x.size() != size()) throw InputError("replacement covariate has wrong length");
  SlicedDataset out;
  out.ranking_ = ranking_;
  out.x_ = std::move(ranked_x);
  out.z_ = z_;
  out.x_levels_ = x_levels_;
  out.z_levels_ = z_levels_;
  out.x_labels_ = x_labels_;
  out.z_labels_ = z_labels_;
  out.validate();
  return out;
}

std::vector<double> SlicedDataset::responses_where_x(int level) const {
  std::vector<double> out;
  for (std::size_t r = 0; r < size(); ++r) {
    if (x_[r] == level) out.push_back(ranking_.sorted[r]);
  }
  return out;
}

std::vector<double> parse_response(const Table& table, const std::string& response_col) {
  const std::size_t c = table.column(response_col);
  if (table.rows.empty()) throw InputError("table has no data rows");
  std::vector<double> y;
  y.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string& cell = table.rows[r][c];
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (cell.empty() || ec != std::errc() || ptr != last) {
      throw InputError("response '" + cell + "' in row " + std::to_string(r + 2) +
                       " is not a number");
    }
    if (!std::isfinite(v)) {
      throw InputError("non-finite response in row " + std::to_string(r + 2));
    }
    y.push_back(v);
  }
  return y;
}

SlicedDataset load_table(const Table& table, const std::string& response_col,
                         const std::vector<std::string>& covariate_cols,
                         const std::vector<std::string>& group_cols) {
  if (covariate_cols.empty()) throw InputError("no covariate column given");
  for (const auto& name : covariate_cols) table.column(name);
  for (const auto& name : group_cols) table.column(name);
  const auto y = parse_response(table, response_col);

  auto encode_columns = [&](const std::vector<std::string>& names) {
    std::vector<Categorical> parts;
    for (const auto& name : names) {
      const auto values = table.column_values(name);
      for (std::size_t r = 0; r < values.size(); ++r) {
        if (values[r].empty()) {
          throw InputError("missing value in column '" + name + "' row " + std::to_string(r + 2));
        }
      }
      parts.push_back(encode_labels(values));
    }
    return parts.size() == 1 ? parts.front() : encode_super_variable(parts);
  };

  const Categorical x = encode_columns(covariate_cols);
  std::vector<char> seen(static_cast<std::size_t>(x.levels), 0);
  for (int c : x.codes) seen[static_cast<std::size_t>(c)] = 1;
  if (std::count(seen.begin(), seen.end(), 1) < 2) {
    throw DegenerateError("covariate has fewer than 2 distinct levels");
  }
  const Categorical z =
      group_cols.empty() ? constant_categorical(y.size()) : encode_columns(group_cols);
  return SlicedDataset(y, x, z);
}

PrefixCountTable::PrefixCountTable(std::span<const int> x, int x_levels, std::span<const int> z,
                                   int z_levels)
    : n_(x.size()),
      x_levels_(x_levels),
      z_levels_(z_levels),
      cells_(static_cast<std::size_t>(x_levels) * static_cast<std::size_t>(z_levels)),
      cum_((x.size() + 1) * cells_, 0) {
  if (z.size() != x.size()) throw InputError("covariate and group lengths differ");
  for (std::size_t t = 0; t < n_; ++t) {
    std::copy_n(cum_.begin() + static_cast<std::ptrdiff_t>(t * cells_), cells_,
                cum_.begin() + static_cast<std::ptrdiff_t>((t + 1) * cells_));
    ++cum_[(t + 1) * cells_ + cell(z[t], x[t])];
  }
}

PrefixCountTable::PrefixCountTable(const SlicedDataset& d)
    : PrefixCountTable(d.x(), d.x_levels(), d.z(), d.z_levels()) {}

std::vector<int> PrefixCountTable::segment_counts(std::size_t begin, std::size_t end) const {
  std::vector<int> out(cells_);
  const auto hi = row(end);
  const auto lo = row(begin);
  for (std::size_t c = 0; c < cells_; ++c) out[c] = hi[c] - lo[c];
  return out;
}

}  // namespace slicebf
