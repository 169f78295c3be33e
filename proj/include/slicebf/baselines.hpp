#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace slicebf {

struct TestReport {
  std::string method;
  double statistic = 0.0;
  double p_value = 1.0;
  double df1 = std::numeric_limits<double>::quiet_NaN();
  double df2 = std::numeric_limits<double>::quiet_NaN();
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

/// Welch's unequal-variance t-test, two-sided, Satterthwaite df.
TestReport welch_t(std::span<const double> a, std::span<const double> b);

/// Rank-sum W of sample a with midranks; two-sided normal approximation
/// with tie-corrected variance and continuity correction.
TestReport wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b);

/// Mean and variance of the rank sum of a sample of size n_a drawn without
/// replacement from the pooled midranks (the normal approximation's moments).
struct RankSumMoments {
  double mean = 0.0;
  double variance = 0.0;
};
RankSumMoments rank_sum_moments(std::size_t n_a, std::span<const std::size_t> tie_sizes);

/// Two-sample KS: D = sup |F_a - F_b|, asymptotic Kolmogorov p-value at
/// sqrt(n_a n_b / (n_a + n_b)) D.
TestReport ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Survival function of the Kolmogorov distribution, Pr(K > lambda).
double kolmogorov_sf(double lambda);

/// k-sample Anderson-Darling (k = 2), midrank form. `statistic` is the
/// standardized value (A2 - (k - 1)) / sigma; the p-value interpolates the
/// asymptotic percentile table on the log scale and is clamped to [0, 1].
TestReport anderson_darling_2sample(std::span<const double> a, std::span<const double> b);

/// Unstandardized midrank A2 statistic.
double anderson_darling_a2(std::span<const double> a, std::span<const double> b);

/// One-way ANOVA F test of equal group means. `groups` holds codes in
/// [0, levels); empty levels are ignored.
TestReport anova_one_way(std::span<const double> y, std::span<const int> groups, int levels);

/// Tests all X terms (main effect and X:Z interaction) given Z: compares the
/// model {Z} with the cell-means model {Z, X, X:Z}. Every (x, z) cell must
/// be observed.
TestReport anova_two_way(std::span<const double> y, std::span<const int> x, int x_levels,
                         std::span<const int> z, int z_levels);

/// Interaction-only test: {X, Z} against {X, Z, X:Z}.
TestReport anova_interaction(std::span<const double> y, std::span<const int> x, int x_levels,
                             std::span<const int> z, int z_levels);

/// Row-major design matrix.
struct DesignMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  DesignMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Intercept plus treatment-coded dummies for X and Z, optionally with
/// their products.
DesignMatrix factorial_design(std::span<const int> x, int x_levels, std::span<const int> z,
                              int z_levels, bool interaction);

/// Nested least-squares model comparison F test. Column ranks are
/// determined numerically, so aliased columns are tolerated.
TestReport anova_compare(std::span<const double> y, const DesignMatrix& reduced,
                         const DesignMatrix& full);

}  // namespace slicebf
