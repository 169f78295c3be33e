#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "slicebf/bf_engine.hpp"
#include "slicebf/dataset.hpp"
#include "slicebf/rng.hpp"

namespace slicebf {

/// Which labels a permutation moves. Shuffling X within Z-groups and
/// shuffling Y within Z-groups induce the same null for a single covariate;
/// the response variant keeps several covariates aligned with each other.
enum class ShuffleScheme { kCovariateWithinGroups, kResponseWithinGroups };

struct PermutationPlan {
  std::size_t replicates = 1000;
  std::uint64_t seed = 0;
  ShuffleScheme scheme = ShuffleScheme::kCovariateWithinGroups;
  unsigned jobs = 1;

  void validate() const;
};

/// Rank positions of each group, groups[j] ascending.
std::vector<std::vector<std::size_t>> group_positions(std::span<const int> z, int z_levels);

/// Permutes `values` uniformly within each group, independently across
/// groups.
void shuffle_within_groups(std::span<int> values,
                           const std::vector<std::vector<std::size_t>>& groups, Rng& rng);

/// X permuted within each Z-group; Y and Z untouched. Deterministic in
/// `seed`.
SlicedDataset conditional_shuffle(const SlicedDataset& d, std::uint64_t seed);

/// log BF of each conditional-shuffle replicate. Replicate r draws from
/// stream r of plan.seed, so the sample does not depend on plan.jobs.
std::vector<double> shuffle_null(const SlicedDataset& d, const Hyperparams& hyper,
                                 const PermutationPlan& plan);

/// (1 + exceed) / (1 + replicates).
double add_one_pvalue(std::size_t exceed, std::size_t replicates);

/// Number of null values at or above `observed`, allowing for rounding
/// differences between algebraically equal statistics.
std::size_t count_at_least(std::span<const double> null_sample, double observed);

struct McPvalue {
  double p_value = 1.0;
  std::size_t exceed = 0;
  std::vector<double> null_log_bf;
};

McPvalue mc_pvalue(double observed_log_bf, const SlicedDataset& d, const Hyperparams& hyper,
                   const PermutationPlan& plan);

/// Constants of the type-I error approximation gamma / (b^alpha n^beta).
struct EmpiricalFormulaConstants {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;

  void validate() const;
};

/// Published constants: unconditional test with |X| = 2 and marginal
/// frequency 0.5, and the conditional test with |X| = |Z| = 2 and uniform
/// configuration frequencies. Both at alpha0 = lambda0 = 1.
inline constexpr EmpiricalFormulaConstants kUnconditionalHalf{1.12, 0.6, 0.76};
inline constexpr EmpiricalFormulaConstants kConditionalUniform{1.07, 0.86, 3.8};

/// Approximate Pr(BF > b) under the shuffle null, clamped to (0, 1].
double formula_pvalue(double b, std::size_t n, const EmpiricalFormulaConstants& constants);

struct RatePoint {
  double b = 1.0;
  double n = 1.0;
  double rate = 0.0;
};

struct FormulaFit {
  EmpiricalFormulaConstants constants;
  double residual_rms = 0.0;
};

/// Least squares of log(rate) = log(gamma) - alpha log(b) - beta log(n).
FormulaFit fit_formula(std::span<const RatePoint> grid);

}  // namespace slicebf
