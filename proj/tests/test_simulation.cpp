#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "slicebf/error.hpp"
#include "slicebf/rng.hpp"
#include "slicebf/simulation.hpp"

using namespace slicebf;

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
  std::size_t n = 0;
};

Moments moments_where(const SlicedDataset& d, int x_code) {
  Moments m;
  double s = 0, ss = 0;
  for (std::size_t r = 0; r < d.size(); ++r) {
    if (d.x()[r] != x_code) continue;
    s += d.y()[r];
    ss += d.y()[r] * d.y()[r];
    ++m.n;
  }
  m.mean = s / m.n;
  m.var = (ss - m.n * m.mean * m.mean) / (m.n - 1.0);
  return m;
}

double correlation(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("family names") {
  CHECK(parse_family("s2") == Family::kScaleChange);
  CHECK(parse_family("scale_change") == Family::kScaleChange);
  CHECK(parse_family("case6") == Family::kCase6);
  CHECK(!parse_family("s5"));
  CHECK(!parse_family("case0"));
  CHECK(is_two_sample(Family::kAsymMixture));
  CHECK(!is_two_sample(Family::kCase1));
  CHECK(parse_family(family_name(Family::kCase3)) == Family::kCase3);
}

TEST_CASE("scenario defaults and validation") {
  CHECK(ScenarioSpec::defaults(Family::kMeanShift).mu == 0.1);
  CHECK(ScenarioSpec::defaults(Family::kScaleChange).sigma == 1.2);
  CHECK(ScenarioSpec::defaults(Family::kSymMixture).theta == 0.5);
  CHECK(ScenarioSpec::defaults(Family::kAsymMixture).theta == 0.9);
  CHECK(ScenarioSpec::defaults(Family::kAsymMixture).mu == 1.2);
  ScenarioSpec s;
  s.p0 = 1.5;
  CHECK_THROWS_AS(s.validate(), InputError);
  s = ScenarioSpec{};
  s.n = 0;
  CHECK_THROWS_AS(s.validate(), InputError);
  s = ScenarioSpec{};
  s.sigma = -1;
  CHECK_THROWS_AS(s.validate(), InputError);
}

TEST_CASE("mean shift with mu = 0 is the null") {
  ScenarioSpec s = ScenarioSpec::defaults(Family::kMeanShift, 100000, 3);
  s.mu = 0.0;
  const SlicedDataset d = generate(s);
  const Moments a = moments_where(d, 0), b = moments_where(d, 1);
  CHECK(std::abs(a.mean - b.mean) < 3.0 * std::sqrt(1.0 / a.n + 1.0 / b.n));
  CHECK(a.var == doctest::Approx(1.0).epsilon(0.03));
  CHECK(b.var == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("symmetric mixture groups share the first two moments") {
  const ScenarioSpec s = ScenarioSpec::defaults(Family::kSymMixture, 100000, 4);
  const SlicedDataset d = generate(s);
  const double mean = (2 * s.theta - 1) * s.mu;
  const double var = 1 + 4 * s.theta * (1 - s.theta) * s.mu * s.mu;
  for (int g : {0, 1}) {
    const Moments m = moments_where(d, g);
    CHECK(std::abs(m.mean - mean) < 3.0 * std::sqrt(var / m.n));
    // Var of the sample variance is about 2 var^2 / n for a normal; the
    // mixture's is smaller, so this bound is loose on that side.
    CHECK(std::abs(m.var - var) < 3.0 * var * std::sqrt(2.0 / m.n) * 1.5);
  }
}

TEST_CASE("asymmetric mixture group moments") {
  const ScenarioSpec s = ScenarioSpec::defaults(Family::kAsymMixture, 100000, 5);
  const SlicedDataset d = generate(s);
  const double mean = (2 * s.theta - 1) * s.mu;
  const double var = 1 + 4 * s.theta * (1 - s.theta) * s.mu * s.mu;
  for (int g : {0, 1}) {
    const Moments m = moments_where(d, g);
    CHECK(std::abs(m.mean - mean) < 3.0 * std::sqrt(var / m.n));
  }
}

TEST_CASE("scale change variance ratio") {
  const SlicedDataset d = generate(ScenarioSpec::defaults(Family::kScaleChange, 100000, 6));
  const double ratio = moments_where(d, 1).var / moments_where(d, 0).var;
  CHECK(ratio >= 1.3);
  CHECK(ratio <= 1.6);
}

TEST_CASE("conditional generators") {
  SUBCASE("Cauchy noise has unit median absolute value") {
    ScenarioSpec s = ScenarioSpec::defaults(Family::kCase4, 100000, 7);
    s.mu = 0.0;
    const SlicedDataset d = generate(s);
    std::vector<double> abs_y;
    for (double v : d.y()) abs_y.push_back(std::abs(v));
    std::nth_element(abs_y.begin(), abs_y.begin() + abs_y.size() / 2, abs_y.end());
    CHECK(abs_y[abs_y.size() / 2] == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("correlated design has negative correlation") {
    ScenarioSpec s = ScenarioSpec::defaults(Family::kCase1, 20000, 8);
    s.p0 = 0.75;
    const SlicedDataset d = generate(s);
    const std::vector<int> x(d.x().begin(), d.x().end()), z(d.z().begin(), d.z().end());
    CHECK(correlation(x, z) == doctest::Approx(-0.5).epsilon(0.05));
    s.p0 = 0.5;
    const SlicedDataset u = generate(s);
    CHECK(std::abs(correlation(std::vector<int>(u.x().begin(), u.x().end()),
                               std::vector<int>(u.z().begin(), u.z().end()))) < 0.03);
  }
  SUBCASE("mu = 0 leaves y independent of the cells") {
    ScenarioSpec s = ScenarioSpec::defaults(Family::kCase1, 40000, 9);
    s.mu = 0.0;
    const SlicedDataset d = generate(s);
    double cell_sum[2][2] = {}, cell_n[2][2] = {};
    for (std::size_t r = 0; r < d.size(); ++r) {
      cell_sum[d.z()[r]][d.x()[r]] += d.y()[r];
      cell_n[d.z()[r]][d.x()[r]] += 1;
    }
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) CHECK(std::abs(cell_sum[j][k] / cell_n[j][k]) < 4.0 / std::sqrt(cell_n[j][k]));
  }
  SUBCASE("heteroscedastic noise scales with x") {
    ScenarioSpec s = ScenarioSpec::defaults(Family::kCase5, 100000, 10);
    s.mu = 0.0;
    s.gamma = 0.5;
    const SlicedDataset d = generate(s);
    CHECK(std::sqrt(moments_where(d, 1).var) == doctest::Approx(1.5).epsilon(0.02));
    CHECK(std::sqrt(moments_where(d, 0).var) == doctest::Approx(1.0).epsilon(0.02));
  }
  SUBCASE("interaction mean") {
    ScenarioSpec s = ScenarioSpec::defaults(Family::kCase2, 40000, 11);
    s.mu = 2.0;
    const SlicedDataset d = generate(s);
    double sum = 0, n = 0;
    for (std::size_t r = 0; r < d.size(); ++r)
      if (d.x()[r] == 1 && d.z()[r] == 1) sum += d.y()[r], n += 1;
    CHECK(sum / n == doctest::Approx(2.0).epsilon(0.03));
  }
}

TEST_CASE("generators are deterministic") {
  for (const char* name : {"s1", "s3", "case3", "case6"}) {
    const ScenarioSpec s = ScenarioSpec::defaults(*parse_family(name), 300, 99);
    const SlicedDataset a = generate(s), b = generate(s);
    CHECK(std::equal(a.y().begin(), a.y().end(), b.y().begin(), b.y().end()));
    CHECK(std::equal(a.x().begin(), a.x().end(), b.x().begin(), b.x().end()));
  }
}

TEST_CASE("marker chain") {
  const auto m = gen_qtl_markers(3, 100000, 0.1, 12);
  REQUIRE(m.size() == 3);
  const double r = correlation(m[0].codes, m[1].codes);
  CHECK(r >= 0.77);
  CHECK(r <= 0.83);
  CHECK(correlation(m[0].codes, m[2].codes) == doctest::Approx(0.64).epsilon(0.05));

  const auto indep = gen_qtl_markers(2, 100000, 0.5, 13);
  CHECK(std::abs(correlation(indep[0].codes, indep[1].codes)) < 0.02);

  const auto same = gen_qtl_markers(5, 1000, 0.0, 14);
  for (const auto& c : same) CHECK(c.codes == same[0].codes);

  CHECK_THROWS_AS(gen_qtl_markers(3, 10, 0.7, 1), InputError);
  CHECK(gen_qtl_markers(4, 50, 0.1, 3)[2].codes == gen_qtl_markers(4, 50, 0.1, 3)[2].codes);
}

TEST_CASE("QTL response follows the causal markers") {
  const QtlSample s = gen_qtl_sample(10, 40000, 0.1, 2, 7, 1.0, 15);
  double sum[3] = {}, n[3] = {};
  for (std::size_t i = 0; i < s.y.size(); ++i) {
    const int k = s.markers[2].codes[i] + s.markers[7].codes[i];
    sum[k] += s.y[i];
    n[k] += 1;
  }
  for (int k = 0; k < 3; ++k) CHECK(sum[k] / n[k] == doctest::Approx(static_cast<double>(k)).epsilon(0.05));
  CHECK(std::abs(sum[0] / n[0]) < 0.05);
}

TEST_CASE("ROC curves") {
  const std::vector<double> h1{3, 1}, h0{2, 0};
  const RocCurve c = roc(h1, h0);
  CHECK(c.auc == doctest::Approx(0.75));
  CHECK(c.points.front().fpr == 0.0);
  CHECK(c.points.front().tpr == 0.0);
  CHECK(c.points.back().fpr == 1.0);
  CHECK(c.points.back().tpr == 1.0);

  CHECK(roc(std::vector<double>{5, 6}, std::vector<double>{1, 2, 3}).auc == 1.0);
  CHECK(roc(std::vector<double>{1}, std::vector<double>{1}).auc == 0.5);
  CHECK_THROWS_AS(roc(std::vector<double>{}, std::vector<double>{1}), InputError);

  Rng rng(16);
  std::vector<double> a(10000), b(10000);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  const RocCurve null = roc(a, b);
  CHECK(std::abs(null.auc - 0.5) < 0.02);
  for (std::size_t i = 1; i < null.points.size(); ++i) {
    CHECK(null.points[i].fpr >= null.points[i - 1].fpr);
    CHECK(null.points[i].tpr >= null.points[i - 1].tpr);
  }

  // Pairwise concordance oracle on tied integer scores.
  std::vector<double> p(200), q(150);
  for (auto& v : p) v = std::floor(rng.normal() * 2 + 1);
  for (auto& v : q) v = std::floor(rng.normal() * 2);
  double concordant = 0;
  for (double u : p)
    for (double v : q) concordant += u > v ? 1.0 : (u == v ? 0.5 : 0.0);
  CHECK(roc(p, q).auc == doctest::Approx(concordant / (p.size() * q.size())).epsilon(1e-12));
}

TEST_CASE("method lists") {
  const auto m = parse_methods("bf,bf:2,t,ranksum,ks,ad,anova");
  REQUIRE(m.size() == 7);
  CHECK(m[1].method == Method::kBf);
  CHECK(m[1].alpha0 == 2.0);
  CHECK(m[1].name != m[0].name);
  CHECK(m[6].method == Method::kAnova);
  CHECK_THROWS_AS(parse_methods("bf,chisq"), InputError);
  CHECK_THROWS_AS(parse_methods(""), InputError);
  CHECK_THROWS_AS(parse_methods("bf:0"), InputError);
}

TEST_CASE("two-sample methods need a two-sample design") {
  const SlicedDataset d = generate(ScenarioSpec::defaults(Family::kCase1, 100, 1));
  CHECK_THROWS_AS(score_method(parse_methods("t")[0], d, 1.0), InputError);
  CHECK(std::isfinite(score_method(parse_methods("anova")[0], d, 1.0).p_value));
  CHECK(std::isnan(score_method(parse_methods("bf")[0], d, 1.0).p_value));
}

TEST_CASE("experiment null calibration and determinism") {
  ExperimentConfig c;
  c.spec = ScenarioSpec::defaults(Family::kMeanShift, 400, 17);
  c.spec.mu = 0.0;
  c.reps = 2000;
  c.methods = parse_methods("bf,t,ranksum,ks,ad");
  const ExperimentResult r = run_experiment(c);
  REQUIRE(r.summary.size() == 5);
  for (const auto& s : r.summary) {
    INFO(s.method);
    CHECK(s.reject_h1 >= 0.03);
    CHECK(s.reject_h1 <= 0.07);
    CHECK(std::abs(s.auc - 0.5) < 0.05);
  }
  CHECK(r.rows.size() == 5 * 2 * 2000);

  ExperimentConfig small = c;
  small.reps = 40;
  const ExperimentResult a = run_experiment(small);
  small.jobs = 3;
  const ExperimentResult b = run_experiment(small);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].method == b.rows[i].method);
    CHECK(a.rows[i].score == b.rows[i].score);
  }
}
