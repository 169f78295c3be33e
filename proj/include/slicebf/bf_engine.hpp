#pragma once

#include <chrono>
#include <cstddef>
#include <span>
#include <vector>

#include "slicebf/dataset.hpp"

namespace slicebf {

/// Dirichlet concentration and slicing-prior exponent.
struct Hyperparams {
  double alpha0 = 1.0;
  double lambda0 = 1.0;

  /// Boundary probability 1 / (1 + n^lambda0); log-odds are -lambda0 log n.
  double pi0(std::size_t n) const;
  double log_pi0(std::size_t n) const;
  double log_one_minus_pi0(std::size_t n) const;

  /// Throws InputError unless alpha0 > 0 and both values are finite.
  void validate() const;
};

struct BfResult {
  double log_bf = 0.0;  // natural log
  Hyperparams hyper;
  double pi0 = 0.0;
  std::size_t n = 0;
  int x_levels = 1;
  int z_levels = 1;
  std::chrono::duration<double> elapsed{0.0};
};

/// Slice start positions (0-based ranks in 1..n-1, strictly increasing).
/// An empty list is the single-slice scheme.
struct SlicingScheme {
  std::vector<std::size_t> boundaries;
  std::size_t slices() const { return boundaries.size() + 1; }
};

/// Log Dirichlet-multinomial marginal likelihood of one segment. `counts`
/// holds n_{j,k} at index j * x_levels + k.
double log_psi_segment(std::span<const int> counts, int x_levels, int z_levels,
                       const Hyperparams& hyper);

/// Computes log BF by forward dynamic programming over slice end points.
///
/// Only tie-block boundaries are admissible cut points. For block end t the
/// recursion keeps G(t) = log(F(t) / psi(1, t)), where F(t) sums
/// prod(psi over slices) * (pi0 / (1 - pi0))^(cuts) over all slicings of
/// ranks 1..t. Then log BF = (n - 1) log(1 - pi0) + G(n). Segment
/// likelihoods come from cumulative counts and log-gamma tables indexed by
/// the integer counts, so each (s, t) pair costs O(|Z| |X|) table lookups.
///
/// The evaluator owns its scratch buffers; reuse one instance per thread to
/// avoid reallocating inside Monte Carlo loops.
class BfEvaluator {
 public:
  explicit BfEvaluator(Hyperparams hyper);

  const Hyperparams& hyper() const { return hyper_; }

  double log_bf(std::span<const int> x, int x_levels, std::span<const int> z, int z_levels,
                std::span<const TieBlock> blocks);
  double log_bf(const SlicedDataset& d);

 private:
  void prepare_tables(std::size_t n, int x_levels);
  double log_psi(const int* hi, const int* lo, int x_levels, int z_levels) const;

  Hyperparams hyper_;
  std::size_t table_n_ = 0;
  int table_x_levels_ = 0;
  std::vector<double> lg_cell_;   // logGamma(m + alpha0/|X|) - logGamma(alpha0/|X|)
  std::vector<double> lg_group_;  // logGamma(m + alpha0) - logGamma(alpha0)
  std::vector<int> cum_;          // cumulative counts at block ends
  std::vector<double> log_psi_prefix_;
  std::vector<double> g_;
  std::vector<double> terms_;
};

BfResult bf_dynamic_program(const SlicedDataset& d, const Hyperparams& hyper);

/// Sums every admissible slicing explicitly. Limited to 20 cut points;
/// throws CapacityError beyond that.
BfResult bf_bruteforce(const SlicedDataset& d, const Hyperparams& hyper);

inline constexpr std::size_t kBruteforceMaxGaps = 20;

/// Plug-in conditional mutual information between X and the slices given
/// Z, in nats. Throws InputError for empty slices or cuts inside a tie
/// block.
double mi_plugin(const SlicedDataset& d, const SlicingScheme& scheme);

}  // namespace slicebf
