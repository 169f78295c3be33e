#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slicebf/dataset.hpp"

namespace slicebf {

enum class Family {
  kMeanShift,    // s1
  kScaleChange,  // s2
  kSymMixture,   // s3
  kAsymMixture,  // s4
  kCase1,
  kCase2,
  kCase3,
  kCase4,
  kCase5,
  kCase6,
};

/// Accepts "s1".."s4", "case1".."case6" and the long names
/// (mean_shift, scale_change, sym_mixture, asym_mixture).
std::optional<Family> parse_family(std::string_view name);
std::string family_name(Family f);
bool is_two_sample(Family f);

struct ScenarioSpec {
  Family family = Family::kMeanShift;
  std::size_t n = 400;
  std::uint64_t seed = 1;
  double mu = 0.1;
  double sigma = 1.2;
  double theta = 0.5;
  double gamma = 0.2;
  double p0 = 0.5;

  /// Published parameter values for the family.
  static ScenarioSpec defaults(Family f, std::size_t n = 400, std::uint64_t seed = 1);
  void validate() const;
};

/// X ~ Bern(0.5); Y | X per scenario 1-4:
///   s1  N(-mu, 1) vs N(mu, 1)
///   s2  N(0, 1) vs N(0, sigma^2)
///   s3/s4  mixture (1-theta) N(-mu,1) + theta N(mu,1) vs the moment-matched
///          N((2 theta - 1) mu, 1 + 4 theta (1 - theta) mu^2)
SlicedDataset gen_two_sample(const ScenarioSpec& spec);

/// Z ~ Bern(0.5); X | Z=0 ~ Bern(p0), X | Z=1 ~ Bern(1 - p0); Y per case:
///   1  mu Z + mu X + N(0,1)          2  mu Z X + N(0,1)
///   3  mu Z + mu X + Cauchy(0,1)     4  mu Z X + Cauchy(0,1)
///   5  mu Z + mu X + N(0, (1 + gamma X)^2)
///   6  mu Z X + N(0, (1 + gamma Z X)^2)
SlicedDataset gen_conditional(const ScenarioSpec& spec);

SlicedDataset generate(const ScenarioSpec& spec);

/// Binary markers along a chain: marker 0 ~ Bern(0.5), marker j+1 copies
/// marker j and flips with probability flip_prob. Neighbour correlation is
/// 1 - 2 flip_prob.
std::vector<Categorical> gen_qtl_markers(std::size_t m, std::size_t n, double flip_prob,
                                         std::uint64_t seed);

/// Markers from gen_qtl_markers with response
/// y = mu (marker[causal_a] + marker[causal_b]) + N(0, 1).
struct QtlSample {
  std::vector<Categorical> markers;
  std::vector<double> y;
};
QtlSample gen_qtl_sample(std::size_t m, std::size_t n, double flip_prob, std::size_t causal_a,
                         std::size_t causal_b, double mu, std::uint64_t seed);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0, 0) to (1, 1)
  double auc = 0.0;
};

/// Larger score = stronger evidence. Thresholds sweep the distinct scores
/// in descending order; ties move diagonally, so AUC counts tied pairs as
/// one half.
RocCurve roc(std::span<const double> scores_h1, std::span<const double> scores_h0);

// ---- experiment harness ----

enum class Method { kBf, kWelchT, kRankSum, kKs, kAd, kAnova };

struct MethodSpec {
  Method method = Method::kBf;
  double alpha0 = 1.0;  // kBf only
  std::string name;
};

/// Comma-separated tokens: bf, bf:<alpha0>, t, ranksum, ks, ad, anova.
std::vector<MethodSpec> parse_methods(std::string_view list);

struct MethodScore {
  double score = 0.0;
  double p_value = 1.0;  // NaN when the method has no analytic p-value
};

/// Scores one data set. BF scores are log BF; t and rank-sum use -log p;
/// KS the scaled distance sqrt(n_a n_b / N) D; AD the standardized
/// statistic; ANOVA -log p (one-way when |Z| = 1, else X given Z).
MethodScore score_method(const MethodSpec& m, const SlicedDataset& d, double lambda0);

struct ExperimentConfig {
  ScenarioSpec spec;
  std::size_t reps = 500;
  std::vector<MethodSpec> methods;
  double lambda0 = 1.0;
  unsigned jobs = 1;
};

struct ScoreRow {
  std::string method;
  std::size_t replicate = 0;
  int hypothesis = 1;  // 1 = alternative, 0 = null
  double score = 0.0;
  double p_value = 1.0;
};

struct MethodSummary {
  std::string method;
  double auc = 0.5;
  double reject_h1 = 0.0;  // fraction with p < 0.05 in the alternative arm
  double reject_h0 = 0.0;
};

struct ExperimentResult {
  std::vector<ScoreRow> rows;
  std::vector<MethodSummary> summary;
};

/// Replicate r scores an alternative data set drawn from stream 2r and a
/// null data set: the stream 2r+1 draw with X shuffled within Z-groups.
/// Methods without analytic p-values are calibrated against the null arm:
/// p = (1 + #{null >= s}) / (reps + 1), leave-one-out within the null arm.
ExperimentResult run_experiment(const ExperimentConfig& config);

}  // namespace slicebf
