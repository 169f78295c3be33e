#include "slicebf/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "slicebf/baselines.hpp"
#include "slicebf/bf_engine.hpp"
#include "slicebf/error.hpp"
#include "slicebf/parallel.hpp"
#include "slicebf/permutation.hpp"
#include "slicebf/rng.hpp"

namespace slicebf {

namespace {

const std::map<std::string, Family, std::less<>>& family_names() {
  static const std::map<std::string, Family, std::less<>> names{
      {"s1", Family::kMeanShift},     {"mean_shift", Family::kMeanShift},
      {"s2", Family::kScaleChange},   {"scale_change", Family::kScaleChange},
      {"s3", Family::kSymMixture},    {"sym_mixture", Family::kSymMixture},
      {"s4", Family::kAsymMixture},   {"asym_mixture", Family::kAsymMixture},
      {"case1", Family::kCase1},      {"case2", Family::kCase2},
      {"case3", Family::kCase3},      {"case4", Family::kCase4},
      {"case5", Family::kCase5},      {"case6", Family::kCase6},
  };
  return names;
}

double neg_log_p(double p) { return -std::log(std::max(p, 1e-300)); }

}  // namespace

std::optional<Family> parse_family(std::string_view name) {
  const auto& names = family_names();
  const auto it = names.find(name);
  if (it == names.end()) return std::nullopt;
  return it->second;
}

std::string family_name(Family f) {
  switch (f) {
    case Family::kMeanShift: return "s1";
    case Family::kScaleChange: return "s2";
    case Family::kSymMixture: return "s3";
    case Family::kAsymMixture: return "s4";
    case Family::kCase1: return "case1";
    case Family::kCase2: return "case2";
    case Family::kCase3: return "case3";
    case Family::kCase4: return "case4";
    case Family::kCase5: return "case5";
    case Family::kCase6: return "case6";
  }
  return "unknown";
}

bool is_two_sample(Family f) {
  return f == Family::kMeanShift || f == Family::kScaleChange || f == Family::kSymMixture ||
         f == Family::kAsymMixture;
}

ScenarioSpec ScenarioSpec::defaults(Family f, std::size_t n, std::uint64_t seed) {
  ScenarioSpec s;
  s.family = f;
  s.n = n;
  s.seed = seed;
  switch (f) {
    case Family::kMeanShift: s.mu = 0.1; break;
    case Family::kScaleChange: s.mu = 0.0; s.sigma = 1.2; break;
    case Family::kSymMixture: s.mu = 1.2; s.theta = 0.5; break;
    case Family::kAsymMixture: s.mu = 1.2; s.theta = 0.9; break;
    case Family::kCase1:
    case Family::kCase2:
    case Family::kCase5:
    case Family::kCase6: s.mu = 0.2; break;
    case Family::kCase3:
    case Family::kCase4: s.mu = 0.4; break;
  }
  return s;
}

void ScenarioSpec::validate() const {
  if (n < 1) throw InputError("scenario sample size must be at least 1");
  if (!(theta >= 0.0 && theta <= 1.0)) throw InputError("theta must lie in [0, 1]");
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw InputError("p0 must lie in [0, 1]");
  if (!(sigma > 0.0)) throw InputError("sigma must be positive");
  if (!std::isfinite(mu) || !std::isfinite(gamma)) throw InputError("mu and gamma must be finite");
}

SlicedDataset gen_two_sample(const ScenarioSpec& spec) {
  spec.validate();
  if (!is_two_sample(spec.family)) throw InputError("not a two-sample scenario");
  Rng rng(spec.seed);
  std::vector<int> x(spec.n);
  std::vector<double> y(spec.n);
  const double matched_mean = (2.0 * spec.theta - 1.0) * spec.mu;
  const double matched_sd = std::sqrt(1.0 + 4.0 * spec.theta * (1.0 - spec.theta) * spec.mu * spec.mu);
  for (std::size_t i = 0; i < spec.n; ++i) {
    x[i] = rng.bernoulli(0.5) ? 1 : 0;
    switch (spec.family) {
      case Family::kMeanShift:
        y[i] = rng.normal(x[i] ? spec.mu : -spec.mu, 1.0);
        break;
      case Family::kScaleChange:
        y[i] = rng.normal(0.0, x[i] ? spec.sigma : 1.0);
        break;
      default:
        if (x[i] == 0) {
          const bool upper = rng.bernoulli(spec.theta);
          y[i] = rng.normal(upper ? spec.mu : -spec.mu, 1.0);
        } else {
          y[i] = rng.normal(matched_mean, matched_sd);
        }
        break;
    }
  }
  return SlicedDataset::unconditional(y, make_categorical(std::move(x), 2));
}

SlicedDataset gen_conditional(const ScenarioSpec& spec) {
  spec.validate();
  if (is_two_sample(spec.family)) throw InputError("not a conditional scenario");
  Rng rng(spec.seed);
  std::vector<int> x(spec.n), z(spec.n);
  std::vector<double> y(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) {
    z[i] = rng.bernoulli(0.5) ? 1 : 0;
    x[i] = rng.bernoulli(z[i] == 0 ? spec.p0 : 1.0 - spec.p0) ? 1 : 0;
    const double zx = z[i] * x[i];
    switch (spec.family) {
      case Family::kCase1: y[i] = spec.mu * (z[i] + x[i]) + rng.normal(); break;
      case Family::kCase2: y[i] = spec.mu * zx + rng.normal(); break;
      case Family::kCase3: y[i] = spec.mu * (z[i] + x[i]) + rng.cauchy(); break;
      case Family::kCase4: y[i] = spec.mu * zx + rng.cauchy(); break;
      case Family::kCase5:
        y[i] = spec.mu * (z[i] + x[i]) + (1.0 + spec.gamma * x[i]) * rng.normal();
        break;
      case Family::kCase6: y[i] = spec.mu * zx + (1.0 + spec.gamma * zx) * rng.normal(); break;
      default: break;
    }
  }
  return SlicedDataset(y, make_categorical(std::move(x), 2), make_categorical(std::move(z), 2));
}

SlicedDataset generate(const ScenarioSpec& spec) {
  return is_two_sample(spec.family) ? gen_two_sample(spec) : gen_conditional(spec);
}

std::vector<Categorical> gen_qtl_markers(std::size_t m, std::size_t n, double flip_prob,
                                         std::uint64_t seed) {
  if (m < 2) throw InputError("need at least 2 markers");
  if (!(flip_prob >= 0.0 && flip_prob <= 0.5)) throw InputError("flip probability must lie in [0, 0.5]");
  Rng rng(seed);
  std::vector<std::vector<int>> codes(m, std::vector<int>(n));
  for (std::size_t i = 0; i < n; ++i) {
    int v = rng.bernoulli(0.5) ? 1 : 0;
    codes[0][i] = v;
    for (std::size_t j = 1; j < m; ++j) {
      if (rng.bernoulli(flip_prob)) v = 1 - v;
      codes[j][i] = v;
    }
  }
  std::vector<Categorical> out;
  out.reserve(m);
  for (auto& c : codes) {
    Categorical cat = make_categorical(std::move(c), 2);
    cat.labels = {"0", "1"};
    out.push_back(std::move(cat));
  }
  return out;
}

QtlSample gen_qtl_sample(std::size_t m, std::size_t n, double flip_prob, std::size_t causal_a,
                         std::size_t causal_b, double mu, std::uint64_t seed) {
  if (causal_a >= m || causal_b >= m) throw InputError("causal marker index out of range");
  QtlSample s;
  s.markers = gen_qtl_markers(m, n, flip_prob, stream_seed(seed, 0));
  Rng rng(seed, 1);
  s.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.y[i] = mu * (s.markers[causal_a].codes[i] + s.markers[causal_b].codes[i]) + rng.normal();
  }
  return s;
}

RocCurve roc(std::span<const double> scores_h1, std::span<const double> scores_h0) {
  if (scores_h1.empty() || scores_h0.empty()) throw InputError("ROC needs scores in both arms");
  std::vector<std::pair<double, int>> all;
  all.reserve(scores_h1.size() + scores_h0.size());
  for (double s : scores_h1) all.emplace_back(s, 1);
  for (double s : scores_h0) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  const double pos = static_cast<double>(scores_h1.size());
  const double neg = static_cast<double>(scores_h0.size());
  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) {
      (all[j].second ? tp : fp) += 1.0;
      ++j;
    }
    const RocPoint next{fp / neg, tp / pos};
    const RocPoint& prev = curve.points.back();
    curve.auc += (next.fpr - prev.fpr) * (next.tpr + prev.tpr) / 2.0;
    curve.points.push_back(next);
    i = j;
  }
  return curve;
}

std::vector<MethodSpec> parse_methods(std::string_view list) {
  std::vector<MethodSpec> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const std::size_t comma = std::min(list.find(',', start), list.size());
    std::string token(list.substr(start, comma - start));
    start = comma + 1;
    if (token.empty()) continue;
    MethodSpec m;
    m.name = token;
    if (token == "bf") {
      m.method = Method::kBf;
    } else if (token.rfind("bf:", 0) == 0) {
      m.method = Method::kBf;
      try {
        m.alpha0 = std::stod(token.substr(3));
      } catch (const std::exception&) {
        throw InputError("bad alpha0 in method '" + token + "'");
      }
      if (!(m.alpha0 > 0.0)) throw InputError("alpha0 must be positive in '" + token + "'");
    } else if (token == "t") {
      m.method = Method::kWelchT;
    } else if (token == "ranksum") {
      m.method = Method::kRankSum;
    } else if (token == "ks") {
      m.method = Method::kKs;
    } else if (token == "ad") {
      m.method = Method::kAd;
    } else if (token == "anova") {
      m.method = Method::kAnova;
    } else {
      throw InputError("unknown method '" + token + "'");
    }
    out.push_back(std::move(m));
  }
  if (out.empty()) throw InputError("no methods given");
  return out;
}

MethodScore score_method(const MethodSpec& m, const SlicedDataset& d, double lambda0) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (m.method == Method::kBf) {
    BfEvaluator eval({m.alpha0, lambda0});
    return {eval.log_bf(d), nan};
  }
  if (m.method == Method::kAnova) {
    const TestReport r =
        d.z_levels() == 1 ? anova_one_way(d.y(), d.x(), d.x_levels())
                          : anova_two_way(d.y(), d.x(), d.x_levels(), d.z(), d.z_levels());
    return {neg_log_p(r.p_value), r.p_value};
  }
  if (d.z_levels() != 1 || d.x_levels() != 2) {
    throw InputError("method '" + m.name + "' needs a binary covariate without groups");
  }
  const auto a = d.responses_where_x(1);
  const auto b = d.responses_where_x(0);
  switch (m.method) {
    case Method::kWelchT: {
      const auto r = welch_t(a, b);
      return {neg_log_p(r.p_value), r.p_value};
    }
    case Method::kRankSum: {
      const auto r = wilcoxon_rank_sum(a, b);
      return {neg_log_p(r.p_value), r.p_value};
    }
    case Method::kKs: {
      const auto r = ks_two_sample(a, b);
      const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
      return {std::sqrt(na * nb / (na + nb)) * r.statistic, r.p_value};
    }
    case Method::kAd: {
      const auto r = anderson_darling_2sample(a, b);
      return {r.statistic, r.p_value};
    }
    default: break;
  }
  throw InputError("unsupported method");
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.spec.validate();
  if (config.reps < 1) throw InputError("need at least one replicate");
  if (config.methods.empty()) throw InputError("no methods given");
  const std::size_t nm = config.methods.size();
  const std::size_t reps = config.reps;
  // scores[(arm * reps + r) * nm + m]
  std::vector<MethodScore> scores(2 * reps * nm);

  parallel_for(reps, config.jobs, [&](unsigned, std::size_t r) {
    ScenarioSpec alt = config.spec;
    alt.seed = stream_seed(config.spec.seed, 2 * r);
    ScenarioSpec null_src = config.spec;
    null_src.seed = stream_seed(config.spec.seed, 2 * r + 1);
    const SlicedDataset h1 = generate(alt);
    const SlicedDataset h0 =
        conditional_shuffle(generate(null_src), stream_seed(null_src.seed, 0x5eed));
    for (std::size_t m = 0; m < nm; ++m) {
      scores[(reps + r) * nm + m] = score_method(config.methods[m], h1, config.lambda0);
      scores[r * nm + m] = score_method(config.methods[m], h0, config.lambda0);
    }
  });

  ExperimentResult result;
  for (std::size_t m = 0; m < nm; ++m) {
    std::vector<double> s1(reps), s0(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      s0[r] = scores[r * nm + m].score;
      s1[r] = scores[(reps + r) * nm + m].score;
    }
    std::vector<double> sorted0(s0);
    std::sort(sorted0.begin(), sorted0.end());
    auto null_at_least = [&](double s) {
      return static_cast<std::size_t>(sorted0.end() - std::lower_bound(sorted0.begin(), sorted0.end(), s));
    };

    MethodSummary summary;
    summary.method = config.methods[m].name;
    summary.auc = roc(s1, s0).auc;
    std::size_t rej1 = 0, rej0 = 0;
    for (int arm = 0; arm < 2; ++arm) {
      for (std::size_t r = 0; r < reps; ++r) {
        MethodScore& ms = scores[(static_cast<std::size_t>(arm) * reps + r) * nm + m];
        if (std::isnan(ms.p_value)) {
          ms.p_value = arm == 1 ? add_one_pvalue(null_at_least(ms.score), reps)
                                : static_cast<double>(null_at_least(ms.score)) / static_cast<double>(reps);
        }
        const bool reject = ms.p_value < 0.05;
        (arm == 1 ? rej1 : rej0) += reject ? 1 : 0;
        result.rows.push_back({config.methods[m].name, r, arm, ms.score, ms.p_value});
      }
    }
    summary.reject_h1 = static_cast<double>(rej1) / static_cast<double>(reps);
    summary.reject_h0 = static_cast<double>(rej0) / static_cast<double>(reps);
    result.summary.push_back(summary);
  }
  return result;
}

}  // namespace slicebf
