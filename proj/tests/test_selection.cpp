#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "slicebf/baselines.hpp"
#include "slicebf/error.hpp"
#include "slicebf/permutation.hpp"
#include "slicebf/rng.hpp"
#include "slicebf/selection.hpp"

using namespace slicebf;

namespace {

const Hyperparams kHyper{1.0, 1.0};

Categorical bernoulli_covariate(Rng& rng, std::size_t n) {
  std::vector<int> c(n);
  for (auto& v : c) v = rng.bernoulli(0.5) ? 1 : 0;
  return make_categorical(std::move(c), 2);
}

struct Sample {
  std::vector<double> y;
  std::vector<Categorical> covs;
};

// covs[0..extra) noise; the response depends on covs[a], covs[b] through `f`.
template <class F>
Sample planted(Rng& rng, std::size_t n, std::size_t m, std::size_t a, std::size_t b, F f) {
  Sample s;
  for (std::size_t j = 0; j < m; ++j) s.covs.push_back(bernoulli_covariate(rng, n));
  s.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.y[i] = f(s.covs[a].codes[i], s.covs[b].codes[i]) + rng.normal();
  return s;
}

SelectionConfig quick_config(std::uint64_t seed, std::size_t permutations = 99) {
  SelectionConfig c;
  c.permutations = permutations;
  c.seed = seed;
  return c;
}

void check_trace_invariants(const SelectionTrace& t, const SelectionConfig& c) {
  std::set<std::size_t> screened;
  for (const auto& s : t.screened)
    if (s.log_bf > std::log(c.b0)) screened.insert(s.index);
  const std::set<std::size_t> chosen(t.final_set.begin(), t.final_set.end());
  CHECK(chosen.size() == t.final_set.size());
  CHECK(t.final_set.size() <= std::min(c.max_steps, screened.size()));
  for (std::size_t j : t.final_set) CHECK(screened.count(j) == 1);
  for (const auto& s : t.steps)
    if (s.index) CHECK(screened.count(*s.index) == 1);
}

}  // namespace

TEST_CASE("stop rule parsing") {
  const StopRule p = StopRule::parse("perm:0.01");
  CHECK(p.kind == StopRule::Kind::kPermutation);
  CHECK(p.p_cutoff == 0.01);
  const StopRule f = StopRule::parse("bf:150,100");
  CHECK(f.kind == StopRule::Kind::kFixedBf);
  CHECK(f.threshold_for(2) == 150.0);
  CHECK(f.threshold_for(3) == 100.0);
  CHECK(f.threshold_for(9) == 100.0);
  CHECK(StopRule::parse(f.to_string()).bf_thresholds == f.bf_thresholds);
  for (const char* bad : {"perm:0", "perm:1", "perm:x", "bf:", "bf:-3", "walk:1", ""}) {
    CHECK_THROWS_AS(StopRule::parse(bad), InputError);
  }
}

TEST_CASE("selection config validation") {
  SelectionConfig c;
  CHECK_NOTHROW(c.validate());
  c.b0 = 0.0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = SelectionConfig{};
  c.max_steps = 0;
  CHECK_THROWS_AS(c.validate(), InputError);
  c = SelectionConfig{};
  c.stop.p_cutoff = 1.5;
  CHECK_THROWS_AS(c.validate(), InputError);
}

TEST_CASE("panel super variable matches level products") {
  Rng rng(1);
  std::vector<Categorical> covs{bernoulli_covariate(rng, 30), make_categorical(std::vector<int>(30, 0), 1)};
  std::vector<int> three(30);
  for (std::size_t i = 0; i < 30; ++i) three[i] = static_cast<int>(i % 3);
  covs[1] = make_categorical(three, 3);
  std::vector<double> y(30);
  for (auto& v : y) v = rng.normal();
  const CovariatePanel panel(y, covs);
  CHECK(panel.name(1) == "x2");
  const std::vector<std::size_t> both{0, 1};
  CHECK(panel.super_variable(both).levels == 6);
  CHECK(panel.super_variable(std::vector<std::size_t>{}).levels == 1);
}

TEST_CASE("screening under the null rarely keeps anything") {
  Rng rng(100);
  int empty = 0;
  for (int sim = 0; sim < 100; ++sim) {
    std::vector<Categorical> covs;
    for (int j = 0; j < 10; ++j) covs.push_back(bernoulli_covariate(rng, 400));
    std::vector<double> y(400);
    for (auto& v : y) v = rng.normal();
    const CovariatePanel panel(y, covs);
    empty += screen(panel, kHyper, SelectionConfig{}).screened.empty();
  }
  CHECK(empty >= 95);
}

TEST_CASE("screening keeps a strong mean-shift covariate") {
  Rng rng(200);
  int kept = 0;
  for (int sim = 0; sim < 100; ++sim) {
    Sample s = planted(rng, 400, 1, 0, 0, [](int x, int) { return x ? 1.0 : -1.0; });
    const CovariatePanel panel(s.y, s.covs);
    const ScreenResult r = screen(panel, kHyper, SelectionConfig{});
    kept += r.screened == std::vector<std::size_t>{0};
    CHECK(r.all[0].rank == 1);
  }
  CHECK(kept >= 99);
}

TEST_CASE("screening threshold is strict") {
  Rng rng(3);
  Sample s = planted(rng, 60, 1, 0, 0, [](int x, int) { return 2.0 * x; });
  const CovariatePanel panel(s.y, s.covs);
  const double lbf = screen(panel, kHyper, SelectionConfig{}).all[0].log_bf;
  REQUIRE(lbf > 5.0);
  // Find b0 with log(b0) == log BF exactly.
  double b0 = std::exp(lbf);
  for (int k = 0; k < 64 && std::log(b0) != lbf; ++k)
    b0 = std::log(b0) < lbf ? std::nextafter(b0, INFINITY) : std::nextafter(b0, 0.0);
  REQUIRE(std::log(b0) == lbf);
  SelectionConfig c;
  c.b0 = b0;
  CHECK(screen(panel, kHyper, c).screened.empty());
  c.b0 = std::nextafter(b0, 0.0);
  while (std::log(c.b0) == lbf) c.b0 = std::nextafter(c.b0, 0.0);
  CHECK(screen(panel, kHyper, c).screened.size() == 1);
}

TEST_CASE("max-BF null over one candidate is the single-covariate shuffle null") {
  Rng rng(5);
  Sample s = planted(rng, 150, 2, 0, 1, [](int a, int b) { return 0.5 * a + 0.5 * b; });
  const CovariatePanel panel(s.y, s.covs);
  const std::vector<std::size_t> given{1}, candidate{0};
  const Categorical z = panel.super_variable(given);
  const auto maxnull = max_bf_null(panel, candidate, z, kHyper, 200, 17, 1);

  const SlicedDataset d(s.y, s.covs[0], s.covs[1]);
  PermutationPlan plan;
  plan.replicates = 200;
  plan.seed = 17;
  const auto single = shuffle_null(d, kHyper, plan);
  REQUIRE(single.size() == maxnull.size());
  for (std::size_t r = 0; r < single.size(); ++r) CHECK(maxnull[r] == doctest::Approx(single[r]).epsilon(1e-12));
}

TEST_CASE("max-BF null is exchangeable across seeds") {
  Rng rng(6);
  Sample s = planted(rng, 200, 4, 0, 1, [](int a, int) { return 0.8 * a; });
  const CovariatePanel panel(s.y, s.covs);
  const std::vector<std::size_t> given{0}, candidates{1, 2, 3};
  const Categorical z = panel.super_variable(given);
  const auto a = max_bf_null(panel, candidates, z, kHyper, 1000, 1, 1);
  const auto b = max_bf_null(panel, candidates, z, kHyper, 1000, 2, 1);
  CHECK(ks_two_sample(a, b).p_value > 0.01);
  CHECK(max_bf_null(panel, candidates, z, kHyper, 50, 1, 3) ==
        std::vector<double>(a.begin(), a.begin() + 50));
  CHECK_THROWS_AS(max_bf_null(panel, std::vector<std::size_t>{}, z, kHyper, 10, 1, 1), InputError);
}

TEST_CASE("single strong covariate gives a trace of length one") {
  Rng rng(7);
  Sample s = planted(rng, 300, 1, 0, 0, [](int x, int) { return 1.5 * x; });
  const CovariatePanel panel(s.y, s.covs);
  const SelectionTrace t = select(panel, kHyper, quick_config(1));
  REQUIRE(t.steps.size() == 1);
  CHECK(t.final_set == std::vector<std::size_t>{0});
  CHECK(t.stop_reason == "exhausted");
  CHECK(t.steps[0].z_levels == 1);
  CHECK(!t.steps[0].p_value);
}

TEST_CASE("null data stops at the screen") {
  Rng rng(8);
  std::vector<Categorical> covs;
  for (int j = 0; j < 10; ++j) covs.push_back(bernoulli_covariate(rng, 400));
  std::vector<double> y(400);
  for (auto& v : y) v = rng.normal();
  const CovariatePanel panel(y, covs);
  const SelectionTrace t = select(panel, kHyper, quick_config(1));
  CHECK(t.final_set.empty());
  CHECK(t.stop_reason == "empty_screen");
  CHECK(trace_to_json(t, panel)["final_set"].empty());
}

TEST_CASE("additive causal pair is recovered within two steps") {
  Rng rng(9);
  int both = 0;
  const int runs = 50;
  for (int run = 0; run < runs; ++run) {
    Sample s = planted(rng, 400, 2, 0, 1, [](int a, int b) { return 1.0 * a + 1.0 * b; });
    const CovariatePanel panel(s.y, s.covs);
    SelectionConfig c = quick_config(static_cast<std::uint64_t>(run), 199);
    c.max_steps = 2;
    const SelectionTrace t = select(panel, kHyper, c);
    check_trace_invariants(t, c);
    both += std::set<std::size_t>(t.final_set.begin(), t.final_set.end()) == std::set<std::size_t>{0, 1};
  }
  CHECK(both >= 45);
}

TEST_CASE("pure interaction pair is selected before noise") {
  Rng rng(10);
  int first_two = 0;
  const int runs = 50;
  for (int run = 0; run < runs; ++run) {
    // Causal covariates at positions 3 and 7 among 10.
    Sample s = planted(rng, 400, 10, 3, 7, [](int a, int b) { return 1.5 * a * b; });
    const CovariatePanel panel(s.y, s.covs);
    SelectionConfig c = quick_config(static_cast<std::uint64_t>(run));
    c.max_steps = 2;
    const SelectionTrace t = select(panel, kHyper, c);
    check_trace_invariants(t, c);
    first_two += std::set<std::size_t>(t.final_set.begin(), t.final_set.end()) == std::set<std::size_t>{3, 7};
  }
  CHECK(first_two >= 40);
}

TEST_CASE("trace is deterministic and independent of the job count") {
  Rng rng(11);
  Sample s = planted(rng, 300, 6, 1, 4, [](int a, int b) { return 0.9 * a + 0.9 * b; });
  const CovariatePanel panel(s.y, s.covs);
  SelectionConfig c = quick_config(42);
  const SelectionTrace a = select(panel, kHyper, c);
  c.jobs = 3;
  const SelectionTrace b = select(panel, kHyper, c);
  CHECK(trace_to_json(a, panel).dump() == trace_to_json(b, panel).dump());
  check_trace_invariants(a, c);

  // z_levels of each conditional step equals the product of selected levels.
  for (std::size_t k = 1; k < a.steps.size(); ++k) {
    CHECK(a.steps[k].z_levels == (1 << k));
  }
}

TEST_CASE("super-variable cap stops selection with a capacity step") {
  Rng rng(12);
  Sample s = planted(rng, 400, 3, 0, 1, [](int a, int b) { return 1.5 * a + 1.5 * b; });
  const CovariatePanel panel(s.y, s.covs);
  SelectionConfig c = quick_config(3);
  c.max_super_levels = 2;
  const SelectionTrace t = select(panel, kHyper, c);
  REQUIRE(!t.steps.empty());
  CHECK(t.stop_reason == "capacity");
  CHECK(t.steps.back().decision == StepDecision::kCapacity);
  CHECK(!t.steps.back().index);
  CHECK(t.final_set.size() == 1);
}

TEST_CASE("fixed Bayes factor stop rule") {
  Rng rng(13);
  Sample s = planted(rng, 400, 5, 0, 2, [](int a, int b) { return 1.2 * a + 1.2 * b; });
  const CovariatePanel panel(s.y, s.covs);
  SelectionConfig c;
  c.stop = StopRule::parse("bf:150");
  const SelectionTrace t = select(panel, kHyper, c);
  check_trace_invariants(t, c);
  CHECK(std::set<std::size_t>(t.final_set.begin(), t.final_set.end()) == std::set<std::size_t>{0, 2});
  for (const auto& step : t.steps) {
    CHECK(!step.p_value);
    if (step.step >= 2 && step.decision == StepDecision::kAccept) CHECK(step.log_bf > std::log(150.0));
    if (step.decision == StepDecision::kReject) CHECK(step.log_bf <= std::log(150.0));
  }
  CHECK(t.stop_reason != "max_steps");
}
