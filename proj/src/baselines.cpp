#include "slicebf/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numbers>
#include <numeric>

#include "slicebf/error.hpp"

namespace slicebf {

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

double normal_two_sided(double z) { return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0))); }

double f_upper_tail(double f, double df1, double df2) {
  if (!(f > 0.0)) return 1.0;
  boost::math::fisher_f_distribution<double> dist(df1, df2);
  return boost::math::cdf(boost::math::complement(dist, f));
}

void require_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) throw InputError("sample contains a non-finite value");
  }
}

// Pooled values sorted, with the sample each came from.
struct Pooled {
  std::vector<double> values;
  std::vector<int> from_a;
};

Pooled pool(std::span<const double> a, std::span<const double> b) {
  std::vector<std::pair<double, int>> all;
  all.reserve(a.size() + b.size());
  for (double v : a) all.emplace_back(v, 1);
  for (double v : b) all.emplace_back(v, 0);
  std::sort(all.begin(), all.end());
  Pooled p;
  for (auto& [v, s] : all) {
    p.values.push_back(v);
    p.from_a.push_back(s);
  }
  return p;
}

}  // namespace

TestReport welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InputError("Welch t-test needs at least 2 per sample");
  require_finite(a);
  require_finite(b);
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = sample_variance(a, ma) / static_cast<double>(a.size());
  const double vb = sample_variance(b, mb) / static_cast<double>(b.size());
  const double se2 = va + vb;
  if (!(se2 > 0.0)) throw DegenerateError("Welch t-test: both samples have zero variance");

  TestReport r;
  r.method = "welch_t";
  r.n_a = a.size();
  r.n_b = b.size();
  r.statistic = (ma - mb) / std::sqrt(se2);
  r.df1 = se2 * se2 /
          (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  boost::math::students_t_distribution<double> dist(r.df1);
  r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.statistic))));
  return r;
}

RankSumMoments rank_sum_moments(std::size_t n_a, std::span<const std::size_t> tie_sizes) {
  const double big_n = static_cast<double>(std::accumulate(tie_sizes.begin(), tie_sizes.end(), std::size_t{0}));
  const double na = static_cast<double>(n_a);
  const double nb = big_n - na;
  double ties = 0.0;
  for (auto t : tie_sizes) {
    const double td = static_cast<double>(t);
    ties += td * td * td - td;
  }
  RankSumMoments m;
  m.mean = na * (big_n + 1.0) / 2.0;
  m.variance = big_n > 1.0 ? na * nb / 12.0 * ((big_n + 1.0) - ties / (big_n * (big_n - 1.0))) : 0.0;
  return m;
}

TestReport wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InputError("rank-sum test needs two nonempty samples");
  require_finite(a);
  require_finite(b);
  const Pooled p = pool(a, b);
  double w = 0.0;
  std::vector<std::size_t> ties;
  for (std::size_t i = 0; i < p.values.size();) {
    std::size_t j = i;
    while (j < p.values.size() && p.values[j] == p.values[i]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t q = i; q < j; ++q) {
      if (p.from_a[q]) w += midrank;
    }
    ties.push_back(j - i);
    i = j;
  }
  const RankSumMoments m = rank_sum_moments(a.size(), ties);

  TestReport r;
  r.method = "wilcoxon_rank_sum";
  r.n_a = a.size();
  r.n_b = b.size();
  r.statistic = w;
  if (!(m.variance > 0.0)) {
    r.p_value = 1.0;
    return r;
  }
  double diff = w - m.mean;
  diff -= diff > 0.0 ? 0.5 : (diff < 0.0 ? -0.5 : 0.0);
  r.p_value = normal_two_sided(diff / std::sqrt(m.variance));
  return r;
}

double kolmogorov_sf(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  if (lambda < 1.0) {
    // Jacobi theta form converges quickly for small arguments.
    const double c = -std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int k = 1; k <= 20; ++k) {
      const double odd = 2.0 * k - 1.0;
      s += std::exp(c * odd * odd);
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1) ? term : -term;
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

TestReport ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InputError("KS test needs two nonempty samples");
  require_finite(a);
  require_finite(b);
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size()), nb = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == v) ++i;
    while (j < sb.size() && sb[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  TestReport r;
  r.method = "ks";
  r.n_a = sa.size();
  r.n_b = sb.size();
  r.statistic = d;
  r.p_value = kolmogorov_sf(std::sqrt(na * nb / (na + nb)) * d);
  return r;
}

double anderson_darling_a2(std::span<const double> a, std::span<const double> b) {
  std::array<std::vector<double>, 2> samples{std::vector<double>(a.begin(), a.end()),
                                             std::vector<double>(b.begin(), b.end())};
  for (auto& s : samples) std::sort(s.begin(), s.end());
  std::vector<double> pooled(samples[0]);
  pooled.insert(pooled.end(), samples[1].begin(), samples[1].end());
  std::sort(pooled.begin(), pooled.end());
  const double big_n = static_cast<double>(pooled.size());

  double a2 = 0.0;
  for (std::size_t u = 0; u < pooled.size();) {
    const double zv = pooled[u];
    const auto hi = std::upper_bound(pooled.begin(), pooled.end(), zv);
    const auto left = static_cast<double>(u);
    const double lj = static_cast<double>(hi - pooled.begin()) - left;
    const double bj = left + lj / 2.0;
    const double denom = bj * (big_n - bj) - big_n * lj / 4.0;
    for (const auto& s : samples) {
      const auto s_lo = std::lower_bound(s.begin(), s.end(), zv) - s.begin();
      const auto s_hi = std::upper_bound(s.begin(), s.end(), zv) - s.begin();
      const double mij = static_cast<double>(s_hi) - static_cast<double>(s_hi - s_lo) / 2.0;
      const double ni = static_cast<double>(s.size());
      const double dev = big_n * mij - bj * ni;
      a2 += lj / big_n * dev * dev / denom / ni;
    }
    u = static_cast<std::size_t>(hi - pooled.begin());
  }
  return a2 * (big_n - 1.0) / big_n;
}

TestReport anderson_darling_2sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InputError("AD test needs two nonempty samples");
  if (a.size() + b.size() < 4) throw InputError("AD test needs a pooled size of at least 4");
  require_finite(a);
  require_finite(b);
  const auto [mn, mx] = std::minmax_element(a.begin(), a.end());
  if (*mn == *mx && std::all_of(b.begin(), b.end(), [&](double v) { return v == *mn; })) {
    throw DegenerateError("AD test: all pooled values are equal");
  }

  const double a2 = anderson_darling_a2(a, b);
  const double k = 2.0;
  const double big_n = static_cast<double>(a.size() + b.size());
  const double h_sum = 1.0 / static_cast<double>(a.size()) + 1.0 / static_cast<double>(b.size());
  double h = 0.0;  // sum_{i=1}^{N-1} 1/i
  for (std::size_t i = 1; i < a.size() + b.size(); ++i) h += 1.0 / static_cast<double>(i);
  double g = 0.0;  // sum_{i=1}^{N-2} sum_{j=i+1}^{N-1} 1 / ((N - i) j)
  double partial = 0.0;
  for (std::size_t q = 0; q + 3 <= a.size() + b.size(); ++q) {
    partial += 1.0 / (big_n - 1.0 - static_cast<double>(q));
    g += partial / static_cast<double>(q + 2);
  }
  const double ca = (4.0 * g - 6.0) * (k - 1.0) + (10.0 - 6.0 * g) * h_sum;
  const double cb = (2.0 * g - 4.0) * k * k + 8.0 * h * k + (2.0 * g - 14.0 * h - 4.0) * h_sum -
                    8.0 * h + 4.0 * g - 6.0;
  const double cc = (6.0 * h + 2.0 * g - 2.0) * k * k + (4.0 * h - 4.0 * g + 6.0) * k +
                    (2.0 * h - 6.0) * h_sum + 4.0 * h;
  const double cd = (2.0 * h + 6.0) * k * k - 4.0 * h * k;
  const double sigma2 = (ca * big_n * big_n * big_n + cb * big_n * big_n + cc * big_n + cd) /
                        ((big_n - 1.0) * (big_n - 2.0) * (big_n - 3.0));
  const double m = k - 1.0;
  const double t = (a2 - m) / std::sqrt(sigma2);

  // Percentile table interpolation coefficients for k - 1 = m.
  static constexpr std::array<double, 7> b0{0.675, 1.281, 1.645, 1.96, 2.326, 2.573, 3.085};
  static constexpr std::array<double, 7> b1{-0.245, 0.25, 0.678, 1.149, 1.822, 2.364, 3.615};
  static constexpr std::array<double, 7> b2{-0.105, -0.305, -0.362, -0.396, -0.426, -0.437, -0.466};
  static constexpr std::array<double, 7> sig{0.25, 0.1, 0.05, 0.025, 0.01, 0.005, 0.001};
  Eigen::Matrix<double, 7, 3> design;
  Eigen::Matrix<double, 7, 1> target;
  for (int i = 0; i < 7; ++i) {
    const double crit = b0[i] + b1[i] / std::sqrt(m) + b2[i] / m;
    design(i, 0) = crit * crit;
    design(i, 1) = crit;
    design(i, 2) = 1.0;
    target(i) = std::log(sig[i]);
  }
  const Eigen::Vector3d q = design.colPivHouseholderQr().solve(target);
  // The fitted parabola turns upward far in the right tail; evaluate no
  // further than its vertex so the p-value stays monotone.
  const double vertex = -q(1) / (2.0 * q(0));
  const double at = q(0) > 0.0 ? std::min(t, vertex) : t;

  TestReport r;
  r.method = "anderson_darling";
  r.n_a = a.size();
  r.n_b = b.size();
  r.statistic = t;
  r.df1 = m;
  r.p_value = std::clamp(std::exp(q(0) * at * at + q(1) * at + q(2)), 0.0, 1.0);
  return r;
}

TestReport anova_one_way(std::span<const double> y, std::span<const int> groups, int levels) {
  if (y.size() != groups.size()) throw InputError("response and group lengths differ");
  require_finite(y);
  std::vector<double> sum(static_cast<std::size_t>(levels), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(levels), 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (groups[i] < 0 || groups[i] >= levels) throw InputError("group code out of range");
    sum[static_cast<std::size_t>(groups[i])] += y[i];
    ++count[static_cast<std::size_t>(groups[i])];
  }
  const auto g = static_cast<std::size_t>(std::count_if(count.begin(), count.end(), [](std::size_t c) { return c > 0; }));
  if (g < 2) throw InputError("one-way ANOVA needs at least 2 nonempty groups");
  if (y.size() <= g) throw InputError("one-way ANOVA needs residual degrees of freedom");
  const double grand = mean_of(y);
  double ssb = 0.0, ssw = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto c = static_cast<std::size_t>(groups[i]);
    const double gm = sum[c] / static_cast<double>(count[c]);
    ssw += (y[i] - gm) * (y[i] - gm);
  }
  for (std::size_t c = 0; c < sum.size(); ++c) {
    if (count[c] == 0) continue;
    const double gm = sum[c] / static_cast<double>(count[c]);
    ssb += static_cast<double>(count[c]) * (gm - grand) * (gm - grand);
  }
  const double scale = std::inner_product(y.begin(), y.end(), y.begin(), 0.0);
  if (ssw <= 1e-14 * std::max(scale, 1e-300)) {
    throw DegenerateError("one-way ANOVA: zero residual variance");
  }
  TestReport r;
  r.method = "anova_one_way";
  r.df1 = static_cast<double>(g - 1);
  r.df2 = static_cast<double>(y.size() - g);
  r.statistic = (ssb / r.df1) / (ssw / r.df2);
  r.p_value = f_upper_tail(r.statistic, r.df1, r.df2);
  r.n_a = y.size();
  return r;
}

TestReport anova_two_way(std::span<const double> y, std::span<const int> x, int x_levels,
                         std::span<const int> z, int z_levels) {
  if (y.size() != x.size() || y.size() != z.size()) throw InputError("lengths differ");
  require_finite(y);
  const auto cells = static_cast<std::size_t>(x_levels * z_levels);
  std::vector<double> cell_sum(cells, 0.0), group_sum(static_cast<std::size_t>(z_levels), 0.0);
  std::vector<std::size_t> cell_n(cells, 0), group_n(static_cast<std::size_t>(z_levels), 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (x[i] < 0 || x[i] >= x_levels || z[i] < 0 || z[i] >= z_levels) {
      throw InputError("category code out of range");
    }
    const auto c = static_cast<std::size_t>(z[i] * x_levels + x[i]);
    cell_sum[c] += y[i];
    ++cell_n[c];
    group_sum[static_cast<std::size_t>(z[i])] += y[i];
    ++group_n[static_cast<std::size_t>(z[i])];
  }
  if (std::any_of(cell_n.begin(), cell_n.end(), [](std::size_t c) { return c == 0; })) {
    throw DegenerateError("two-way ANOVA: empty (x, z) cell makes the full model rank-deficient");
  }
  if (x_levels < 2) throw DegenerateError("two-way ANOVA: covariate has a single level");
  if (y.size() <= cells) throw InputError("two-way ANOVA needs residual degrees of freedom");

  double rss_full = 0.0, rss_reduced = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto c = static_cast<std::size_t>(z[i] * x_levels + x[i]);
    const auto j = static_cast<std::size_t>(z[i]);
    const double fc = y[i] - cell_sum[c] / static_cast<double>(cell_n[c]);
    const double fr = y[i] - group_sum[j] / static_cast<double>(group_n[j]);
    rss_full += fc * fc;
    rss_reduced += fr * fr;
  }
  const double scale = std::inner_product(y.begin(), y.end(), y.begin(), 0.0);
  if (rss_full <= 1e-14 * std::max(scale, 1e-300)) {
    throw DegenerateError("two-way ANOVA: zero residual variance");
  }
  TestReport r;
  r.method = "anova_two_way";
  r.df1 = static_cast<double>(z_levels * (x_levels - 1));
  r.df2 = static_cast<double>(y.size() - cells);
  r.statistic = std::max(0.0, (rss_reduced - rss_full) / r.df1) / (rss_full / r.df2);
  r.p_value = f_upper_tail(r.statistic, r.df1, r.df2);
  r.n_a = y.size();
  return r;
}

DesignMatrix factorial_design(std::span<const int> x, int x_levels, std::span<const int> z,
                              int z_levels, bool interaction) {
  const std::size_t px = static_cast<std::size_t>(x_levels - 1);
  const std::size_t pz = static_cast<std::size_t>(z_levels - 1);
  DesignMatrix m(x.size(), 1 + px + pz + (interaction ? px * pz : 0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    m.at(i, 0) = 1.0;
    if (x[i] > 0) m.at(i, static_cast<std::size_t>(x[i])) = 1.0;
    if (z[i] > 0) m.at(i, px + static_cast<std::size_t>(z[i])) = 1.0;
    if (interaction && x[i] > 0 && z[i] > 0) {
      m.at(i, 1 + px + pz + static_cast<std::size_t>(x[i] - 1) * pz + static_cast<std::size_t>(z[i] - 1)) = 1.0;
    }
  }
  return m;
}

namespace {

struct LsFit {
  double rss = 0.0;
  Eigen::Index rank = 0;
};

LsFit least_squares(std::span<const double> y, const DesignMatrix& d) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(d.rows), static_cast<Eigen::Index>(d.cols));
  for (std::size_t r = 0; r < d.rows; ++r) {
    for (std::size_t c = 0; c < d.cols; ++c) {
      a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = d.at(r, c);
    }
  }
  const Eigen::Map<const Eigen::VectorXd> b(y.data(), static_cast<Eigen::Index>(y.size()));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  const Eigen::VectorXd coef = qr.solve(b);
  return {(b - a * coef).squaredNorm(), qr.rank()};
}

}  // namespace

TestReport anova_compare(std::span<const double> y, const DesignMatrix& reduced,
                         const DesignMatrix& full) {
  if (reduced.rows != y.size() || full.rows != y.size()) {
    throw InputError("design rows must match the response length");
  }
  require_finite(y);
  const LsFit fr = least_squares(y, reduced);
  const LsFit ff = least_squares(y, full);
  if (ff.rank <= fr.rank) throw DegenerateError("full model adds no estimable terms");
  const auto n = static_cast<Eigen::Index>(y.size());
  if (n <= ff.rank) throw InputError("model comparison needs residual degrees of freedom");
  const double scale = std::inner_product(y.begin(), y.end(), y.begin(), 0.0);
  if (ff.rss <= 1e-14 * std::max(scale, 1e-300)) {
    throw DegenerateError("model comparison: zero residual variance");
  }
  TestReport r;
  r.method = "anova_compare";
  r.df1 = static_cast<double>(ff.rank - fr.rank);
  r.df2 = static_cast<double>(n - ff.rank);
  r.statistic = std::max(0.0, (fr.rss - ff.rss) / r.df1) / (ff.rss / r.df2);
  r.p_value = f_upper_tail(r.statistic, r.df1, r.df2);
  r.n_a = y.size();
  return r;
}

TestReport anova_interaction(std::span<const double> y, std::span<const int> x, int x_levels,
                             std::span<const int> z, int z_levels) {
  if (y.size() != x.size() || y.size() != z.size()) throw InputError("lengths differ");
  TestReport r = anova_compare(y, factorial_design(x, x_levels, z, z_levels, false),
                               factorial_design(x, x_levels, z, z_levels, true));
  r.method = "anova_interaction";
  return r;
}

}  // namespace slicebf
