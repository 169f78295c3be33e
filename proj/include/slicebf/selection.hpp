#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "slicebf/bf_engine.hpp"
#include "slicebf/dataset.hpp"

namespace slicebf {

/// Acceptance rule for a stepwise candidate.
struct StopRule {
  enum class Kind { kPermutation, kFixedBf };

  Kind kind = Kind::kPermutation;
  double p_cutoff = 0.05;
  /// b_t for steps 2, 3, ...; the last value repeats.
  std::vector<double> bf_thresholds{150.0};

  /// "perm:<cutoff>" or "bf:<b2>[,<b3>...]".
  static StopRule parse(std::string_view text);
  std::string to_string() const;
  double threshold_for(std::size_t step) const;
  void validate() const;
};

struct SelectionConfig {
  double b0 = 10.0;
  StopRule stop;
  std::size_t permutations = 1000;
  std::size_t max_steps = 10;
  int max_super_levels = 64;
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  void validate() const;
};

/// Covariates measured on the same observations. Codes are stored in rank
/// order of the shared response.
class CovariatePanel {
 public:
  CovariatePanel(std::span<const double> y, std::vector<Categorical> covariates,
                 std::vector<std::string> names = {});

  std::size_t size() const { return covariates_.size(); }
  std::size_t observations() const { return ranking_.size(); }
  const Ranking& ranking() const { return ranking_; }
  const Categorical& covariate(std::size_t j) const { return covariates_[j]; }
  const std::string& name(std::size_t j) const { return names_[j]; }

  /// Super variable of the given covariates (rank order); constant when
  /// `indices` is empty.
  Categorical super_variable(std::span<const std::size_t> indices) const;

 private:
  Ranking ranking_;
  std::vector<Categorical> covariates_;
  std::vector<std::string> names_;
};

/// Loads the response and every covariate column from a table.
CovariatePanel load_panel(const Table& table, const std::string& response_col,
                          const std::vector<std::string>& covariate_cols);

struct ScreenedCovariate {
  std::size_t index = 0;
  double log_bf = 0.0;
  std::size_t rank = 0;  // 1 = largest BF among all covariates
};

struct ScreenResult {
  std::vector<ScreenedCovariate> all;       // every covariate, by index
  std::vector<std::size_t> screened;        // BF > b0, by index
};

/// Unconditional BF of every covariate; keeps those with BF > b0 strictly.
ScreenResult screen(const CovariatePanel& panel, const Hyperparams& hyper,
                    const SelectionConfig& config);

/// Null sample of max_j log BF(X_j | Y*, Z) over `candidates`, with Y
/// shuffled within Z-groups. Replicate r uses stream r of `seed`; one
/// permutation is shared by all candidates of a replicate.
std::vector<double> max_bf_null(const CovariatePanel& panel, std::span<const std::size_t> candidates,
                                const Categorical& z, const Hyperparams& hyper,
                                std::size_t replicates, std::uint64_t seed, unsigned jobs);

enum class StepDecision { kAccept, kReject, kCapacity };

struct SelectionStep {
  std::size_t step = 0;  // 1-based
  std::optional<std::size_t> index;  // absent for a capacity stop
  double log_bf = 0.0;
  std::optional<double> p_value;  // permutation rule, steps >= 2
  int z_levels = 1;               // levels of the conditioning variable
  StepDecision decision = StepDecision::kAccept;
  std::string note;
};

struct SelectionTrace {
  std::vector<ScreenedCovariate> screened;
  std::vector<SelectionStep> steps;
  std::vector<std::size_t> final_set;
  std::string stop_reason;  // empty_screen, stop_rule, max_steps, exhausted, capacity
};

/// Forward selection over the screened set. Step 1 takes the largest
/// unconditional BF; step t >= 2 takes the largest BF conditional on the
/// super variable of the selected covariates and accepts it under the stop
/// rule. Candidates whose inclusion would push the super variable beyond
/// max_super_levels are not considered.
SelectionTrace stepwise(const CovariatePanel& panel, const ScreenResult& screened,
                        const Hyperparams& hyper, const SelectionConfig& config);

SelectionTrace select(const CovariatePanel& panel, const Hyperparams& hyper,
                      const SelectionConfig& config);

std::string decision_name(StepDecision d);
nlohmann::json trace_to_json(const SelectionTrace& trace, const CovariatePanel& panel);

}  // namespace slicebf
