#include "slicebf/selection.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "slicebf/error.hpp"
#include "slicebf/parallel.hpp"
#include "slicebf/permutation.hpp"
#include "slicebf/rng.hpp"

namespace slicebf {

namespace {

double parse_number(std::string_view s, std::string_view what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw InputError("bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

// Codes of covariate j permuted by `perm` (perm[r] = source rank).
void gather(std::span<const int> codes, std::span<const int> perm, std::vector<int>& out) {
  out.resize(perm.size());
  for (std::size_t r = 0; r < perm.size(); ++r) out[r] = codes[static_cast<std::size_t>(perm[r])];
}

}  // namespace

StopRule StopRule::parse(std::string_view text) {
  StopRule rule;
  const auto colon = text.find(':');
  const std::string_view kind = text.substr(0, colon);
  const std::string_view rest = colon == std::string_view::npos ? "" : text.substr(colon + 1);
  if (colon != std::string_view::npos && rest.empty()) {
    throw InputError("stop rule '" + std::string(text) + "' is missing its value");
  }
  if (kind == "perm") {
    rule.kind = Kind::kPermutation;
    if (!rest.empty()) rule.p_cutoff = parse_number(rest, "p-value cutoff");
  } else if (kind == "bf") {
    rule.kind = Kind::kFixedBf;
    if (!rest.empty()) {
      rule.bf_thresholds.clear();
      std::size_t start = 0;
      while (start <= rest.size()) {
        const std::size_t comma = std::min(rest.find(',', start), rest.size());
        rule.bf_thresholds.push_back(parse_number(rest.substr(start, comma - start), "BF threshold"));
        start = comma + 1;
      }
    }
  } else {
    throw InputError("unknown stop rule '" + std::string(text) + "' (use perm:<p> or bf:<b>)");
  }
  rule.validate();
  return rule;
}

std::string StopRule::to_string() const {
  std::ostringstream out;
  if (kind == Kind::kPermutation) {
    out << "perm:" << p_cutoff;
  } else {
    out << "bf:";
    for (std::size_t i = 0; i < bf_thresholds.size(); ++i) out << (i ? "," : "") << bf_thresholds[i];
  }
  return out.str();
}

double StopRule::threshold_for(std::size_t step) const {
  const std::size_t i = step < 2 ? 0 : step - 2;
  return bf_thresholds[std::min(i, bf_thresholds.size() - 1)];
}

void StopRule::validate() const {
  if (kind == Kind::kPermutation) {
    if (!(p_cutoff > 0.0 && p_cutoff < 1.0)) throw InputError("p-value cutoff must lie in (0, 1)");
  } else {
    if (bf_thresholds.empty()) throw InputError("fixed stop rule needs a threshold");
    for (double b : bf_thresholds) {
      if (!(b > 0.0) || !std::isfinite(b)) throw InputError("BF thresholds must be positive");
    }
  }
}

void SelectionConfig::validate() const {
  if (!(b0 > 0.0) || !std::isfinite(b0)) throw InputError("screening threshold b0 must be positive");
  stop.validate();
  if (max_steps < 1) throw InputError("max_steps must be at least 1");
  if (max_super_levels < 1) throw InputError("max_super_levels must be at least 1");
  if (stop.kind == StopRule::Kind::kPermutation && permutations < 1) {
    throw InputError("the permutation stop rule needs at least one permutation");
  }
}

CovariatePanel::CovariatePanel(std::span<const double> y, std::vector<Categorical> covariates,
                               std::vector<std::string> names)
    : ranking_(rank_response(y)), names_(std::move(names)) {
  if (covariates.empty()) throw InputError("no covariates given");
  if (names_.empty()) {
    for (std::size_t j = 0; j < covariates.size(); ++j) names_.push_back("x" + std::to_string(j + 1));
  }
  if (names_.size() != covariates.size()) throw InputError("covariate names and columns differ in count");
  covariates_.reserve(covariates.size());
  for (auto& c : covariates) {
    if (c.size() != y.size()) throw InputError("covariate and response lengths differ");
    Categorical ranked;
    ranked.levels = c.levels;
    ranked.labels = std::move(c.labels);
    ranked.codes.resize(c.size());
    for (std::size_t r = 0; r < c.size(); ++r) ranked.codes[r] = c.codes[ranking_.order[r]];
    make_categorical(ranked.codes, ranked.levels);  // range check
    covariates_.push_back(std::move(ranked));
  }
}

Categorical CovariatePanel::super_variable(std::span<const std::size_t> indices) const {
  if (indices.empty()) return constant_categorical(observations());
  std::vector<Categorical> parts;
  parts.reserve(indices.size());
  for (std::size_t j : indices) parts.push_back(covariates_.at(j));
  return parts.size() == 1 ? parts.front() : encode_super_variable(parts);
}

CovariatePanel load_panel(const Table& table, const std::string& response_col,
                          const std::vector<std::string>& covariate_cols) {
  if (covariate_cols.empty()) throw InputError("no covariate column given");
  for (const auto& name : covariate_cols) table.column(name);
  const auto y = parse_response(table, response_col);
  std::vector<Categorical> covs;
  covs.reserve(covariate_cols.size());
  for (const auto& name : covariate_cols) {
    const auto values = table.column_values(name);
    for (std::size_t r = 0; r < values.size(); ++r) {
      if (values[r].empty()) {
        throw InputError("missing value in column '" + name + "' row " + std::to_string(r + 2));
      }
    }
    covs.push_back(encode_labels(values));
  }
  return CovariatePanel(y, std::move(covs), covariate_cols);
}

ScreenResult screen(const CovariatePanel& panel, const Hyperparams& hyper,
                    const SelectionConfig& config) {
  config.validate();
  const std::size_t m = panel.size();
  const unsigned workers = std::max(1u, config.jobs);
  std::vector<BfEvaluator> evaluators(workers, BfEvaluator(hyper));
  const std::vector<int> zero(panel.observations(), 0);
  ScreenResult out;
  out.all.resize(m);
  parallel_for(m, workers, [&](unsigned w, std::size_t j) {
    const Categorical& x = panel.covariate(j);
    out.all[j] = {j, evaluators[w].log_bf(x.codes, x.levels, zero, 1, panel.ranking().blocks), 0};
  });

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.all[a].log_bf > out.all[b].log_bf; });
  for (std::size_t r = 0; r < m; ++r) out.all[order[r]].rank = r + 1;

  const double log_b0 = std::log(config.b0);
  for (std::size_t j = 0; j < m; ++j) {
    if (out.all[j].log_bf > log_b0) out.screened.push_back(j);
  }
  return out;
}

std::vector<double> max_bf_null(const CovariatePanel& panel, std::span<const std::size_t> candidates,
                                const Categorical& z, const Hyperparams& hyper,
                                std::size_t replicates, std::uint64_t seed, unsigned jobs) {
  if (candidates.empty()) throw InputError("max-BF null needs at least one candidate");
  const std::size_t n = panel.observations();
  const auto groups = group_positions(z.codes, z.levels);
  const unsigned workers = std::max(1u, jobs);
  std::vector<BfEvaluator> evaluators(workers, BfEvaluator(hyper));
  std::vector<std::vector<int>> perms(workers), xs(workers);
  std::vector<double> out(replicates);

  parallel_for(replicates, workers, [&](unsigned w, std::size_t r) {
    auto& perm = perms[w];
    perm.resize(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed, r);
    shuffle_within_groups(perm, groups, rng);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j : candidates) {
      const Categorical& x = panel.covariate(j);
      gather(x.codes, perm, xs[w]);
      best = std::max(best, evaluators[w].log_bf(xs[w], x.levels, z.codes, z.levels,
                                                 panel.ranking().blocks));
    }
    out[r] = best;
  });
  return out;
}

SelectionTrace stepwise(const CovariatePanel& panel, const ScreenResult& screened,
                        const Hyperparams& hyper, const SelectionConfig& config) {
  config.validate();
  SelectionTrace trace;
  trace.screened = screened.all;
  if (screened.screened.empty()) {
    trace.stop_reason = "empty_screen";
    return trace;
  }

  // Step 1: largest unconditional BF; it already passed the screen.
  std::size_t first = screened.screened.front();
  for (std::size_t j : screened.screened) {
    if (screened.all[j].log_bf > screened.all[first].log_bf) first = j;
  }
  trace.steps.push_back({1, first, screened.all[first].log_bf, std::nullopt, 1,
                         StepDecision::kAccept, ""});
  trace.final_set.push_back(first);

  const unsigned workers = std::max(1u, config.jobs);
  std::vector<BfEvaluator> evaluators(workers, BfEvaluator(hyper));

  for (std::size_t step = 2;; ++step) {
    if (trace.final_set.size() >= config.max_steps) {
      trace.stop_reason = "max_steps";
      break;
    }
    const Categorical z = panel.super_variable(trace.final_set);

    std::vector<std::size_t> remaining;
    std::vector<std::size_t> candidates;
    for (std::size_t j : screened.screened) {
      if (std::find(trace.final_set.begin(), trace.final_set.end(), j) != trace.final_set.end()) continue;
      remaining.push_back(j);
      const long long grown = static_cast<long long>(z.levels) * panel.covariate(j).levels;
      if (grown <= config.max_super_levels) candidates.push_back(j);
    }
    if (remaining.empty()) {
      trace.stop_reason = "exhausted";
      break;
    }
    if (candidates.empty()) {
      SelectionStep s;
      s.step = step;
      s.z_levels = z.levels;
      s.decision = StepDecision::kCapacity;
      s.note = "conditioning variable would exceed " + std::to_string(config.max_super_levels) +
               " levels";
      trace.steps.push_back(std::move(s));
      trace.stop_reason = "capacity";
      break;
    }

    std::vector<double> log_bf(candidates.size());
    parallel_for(candidates.size(), workers, [&](unsigned w, std::size_t i) {
      const Categorical& x = panel.covariate(candidates[i]);
      log_bf[i] = evaluators[w].log_bf(x.codes, x.levels, z.codes, z.levels, panel.ranking().blocks);
    });
    std::size_t best = 0;  // first maximum = smallest index
    for (std::size_t i = 1; i < candidates.size(); ++i) {
      if (log_bf[i] > log_bf[best]) best = i;
    }

    SelectionStep s;
    s.step = step;
    s.index = candidates[best];
    s.log_bf = log_bf[best];
    s.z_levels = z.levels;
    bool accept = false;
    if (config.stop.kind == StopRule::Kind::kPermutation) {
      const auto null = max_bf_null(panel, candidates, z, hyper, config.permutations,
                                    stream_seed(config.seed, step), workers);
      s.p_value = add_one_pvalue(count_at_least(null, s.log_bf), config.permutations);
      accept = *s.p_value < config.stop.p_cutoff;
    } else {
      accept = s.log_bf > std::log(config.stop.threshold_for(step));
    }
    s.decision = accept ? StepDecision::kAccept : StepDecision::kReject;
    trace.steps.push_back(s);
    if (!accept) {
      trace.stop_reason = "stop_rule";
      break;
    }
    trace.final_set.push_back(candidates[best]);
  }
  return trace;
}

SelectionTrace select(const CovariatePanel& panel, const Hyperparams& hyper,
                      const SelectionConfig& config) {
  hyper.validate();
  config.validate();
  return stepwise(panel, screen(panel, hyper, config), hyper, config);
}

std::string decision_name(StepDecision d) {
  switch (d) {
    case StepDecision::kAccept: return "accept";
    case StepDecision::kReject: return "reject";
    case StepDecision::kCapacity: return "capacity";
  }
  return "unknown";
}

nlohmann::json trace_to_json(const SelectionTrace& trace, const CovariatePanel& panel) {
  using nlohmann::json;
  json screened = json::array();
  for (const auto& s : trace.screened) {
    screened.push_back({{"index", s.index},
                        {"label", panel.name(s.index)},
                        {"log_bf", s.log_bf},
                        {"rank", s.rank}});
  }
  json steps = json::array();
  for (const auto& s : trace.steps) {
    json e{{"step", s.step},
           {"index", s.index ? json(*s.index) : json(nullptr)},
           {"label", s.index ? json(panel.name(*s.index)) : json(nullptr)},
           {"log_bf", s.index ? json(s.log_bf) : json(nullptr)},
           {"p_value", s.p_value ? json(*s.p_value) : json(nullptr)},
           {"z_levels", s.z_levels},
           {"decision", decision_name(s.decision)}};
    if (!s.note.empty()) e["note"] = s.note;
    steps.push_back(std::move(e));
  }
  json final_set = json::array();
  json final_labels = json::array();
  for (std::size_t j : trace.final_set) {
    final_set.push_back(j);
    final_labels.push_back(panel.name(j));
  }
  return json{{"screened", screened},
              {"steps", steps},
              {"final_set", final_set},
              {"final_labels", final_labels},
              {"stop_reason", trace.stop_reason}};
}

}  // namespace slicebf
