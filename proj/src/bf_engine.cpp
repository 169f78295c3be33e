#include "slicebf/bf_engine.hpp"

#include <cmath>
#include <limits>

#include "slicebf/error.hpp"
#include "slicebf/special.hpp"

namespace slicebf {

namespace {

// exp(-50) is below 2e-22; dropping such terms leaves the sum unchanged
// at double precision for any realistic n.
constexpr double kNegligibleLogTerm = -50.0;

void check_blocks(std::span<const TieBlock> blocks, std::size_t n) {
  if (blocks.empty() || blocks.front().begin != 0 || blocks.back().end != n) {
    throw InputError("tie blocks do not cover the observations");
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].end <= blocks[b].begin || (b > 0 && blocks[b].begin != blocks[b - 1].end)) {
      throw InputError("tie blocks are not contiguous");
    }
  }
}

}  // namespace

double Hyperparams::pi0(std::size_t n) const {
  return 1.0 / (1.0 + std::pow(static_cast<double>(n), lambda0));
}

double Hyperparams::log_pi0(std::size_t n) const {
  return -std::log1p(std::pow(static_cast<double>(n), lambda0));
}

double Hyperparams::log_one_minus_pi0(std::size_t n) const {
  return -std::log1p(std::pow(static_cast<double>(n), -lambda0));
}

void Hyperparams::validate() const {
  if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) throw InputError("alpha0 must be positive");
  if (!std::isfinite(lambda0)) throw InputError("lambda0 must be finite");
}

double log_psi_segment(std::span<const int> counts, int x_levels, int z_levels,
                       const Hyperparams& hyper) {
  const auto cells = static_cast<std::size_t>(x_levels) * static_cast<std::size_t>(z_levels);
  if (counts.size() != cells) throw InputError("segment count table has the wrong shape");
  const double a = hyper.alpha0;
  const double a_cell = a / x_levels;
  const double lg_a = log_gamma(a);
  const double lg_cell = log_gamma(a_cell);
  double out = 0.0;
  for (int j = 0; j < z_levels; ++j) {
    long total = 0;
    double group = lg_a;
    for (int k = 0; k < x_levels; ++k) {
      const int c = counts[static_cast<std::size_t>(j * x_levels + k)];
      if (c < 0) throw InputError("negative segment count");
      total += c;
      group += log_gamma(c + a_cell) - lg_cell;
    }
    out += group - log_gamma(a + static_cast<double>(total));
  }
  return out;
}

BfEvaluator::BfEvaluator(Hyperparams hyper) : hyper_(hyper) { hyper_.validate(); }

void BfEvaluator::prepare_tables(std::size_t n, int x_levels) {
  if (n <= table_n_ && x_levels == table_x_levels_) return;
  const double a = hyper_.alpha0;
  const double a_cell = a / x_levels;
  const double lg_a = log_gamma(a);
  const double lg_cell = log_gamma(a_cell);
  lg_cell_.resize(n + 1);
  lg_group_.resize(n + 1);
  for (std::size_t m = 0; m <= n; ++m) {
    lg_cell_[m] = log_gamma(static_cast<double>(m) + a_cell) - lg_cell;
    lg_group_[m] = log_gamma(static_cast<double>(m) + a) - lg_a;
  }
  table_n_ = n;
  table_x_levels_ = x_levels;
}

double BfEvaluator::log_psi(const int* hi, const int* lo, int x_levels, int z_levels) const {
  double out = 0.0;
  for (int j = 0; j < z_levels; ++j) {
    int total = 0;
    for (int k = 0; k < x_levels; ++k) {
      const int c = *hi++ - *lo++;
      total += c;
      out += lg_cell_[static_cast<std::size_t>(c)];
    }
    out -= lg_group_[static_cast<std::size_t>(total)];
  }
  return out;
}

double BfEvaluator::log_bf(std::span<const int> x, int x_levels, std::span<const int> z,
                           int z_levels, std::span<const TieBlock> blocks) {
  const std::size_t n = x.size();
  if (n == 0) throw InputError("no observations");
  if (z.size() != n) throw InputError("covariate and group lengths differ");
  if (x_levels < 1 || z_levels < 1) throw InputError("level counts must be positive");
  check_blocks(blocks, n);
  prepare_tables(n, x_levels);

  const std::size_t cells = static_cast<std::size_t>(x_levels) * static_cast<std::size_t>(z_levels);
  const std::size_t nb = blocks.size();

  // Row b holds counts over ranks [0, end of block b); row 0 is all zero.
  cum_.assign((nb + 1) * cells, 0);
  for (std::size_t b = 0; b < nb; ++b) {
    int* row = cum_.data() + (b + 1) * cells;
    std::copy_n(row - cells, cells, row);
    for (std::size_t r = blocks[b].begin; r < blocks[b].end; ++r) {
      const int xi = x[r];
      const int zi = z[r];
      if (xi < 0 || xi >= x_levels || zi < 0 || zi >= z_levels) {
        throw InputError("category code out of range");
      }
      ++row[static_cast<std::size_t>(zi * x_levels + xi)];
    }
  }

  const int* zero = cum_.data();
  log_psi_prefix_.resize(nb + 1);
  log_psi_prefix_[0] = 0.0;
  for (std::size_t b = 1; b <= nb; ++b) {
    log_psi_prefix_[b] = log_psi(cum_.data() + b * cells, zero, x_levels, z_levels);
  }

  const double log_odds = hyper_.log_pi0(n) - hyper_.log_one_minus_pi0(n);
  g_.assign(nb + 1, 0.0);
  terms_.resize(nb);
  for (std::size_t b = 2; b <= nb; ++b) {
    const int* hi = cum_.data() + b * cells;
    const double base = log_odds - log_psi_prefix_[b];
    double top = 0.0;  // the single-slice term contributes exp(0)
    for (std::size_t a = 1; a < b; ++a) {
      const double term = g_[a] + log_psi_prefix_[a] + base +
                          log_psi(hi, cum_.data() + a * cells, x_levels, z_levels);
      terms_[a] = term;
      top = std::max(top, term);
    }
    double sum = std::exp(-top);
    for (std::size_t a = 1; a < b; ++a) {
      const double shifted = terms_[a] - top;
      if (shifted > kNegligibleLogTerm) sum += std::exp(shifted);
    }
    g_[b] = top + std::log(sum);
  }
  return static_cast<double>(n - 1) * hyper_.log_one_minus_pi0(n) + g_[nb];
}

double BfEvaluator::log_bf(const SlicedDataset& d) {
  return log_bf(d.x(), d.x_levels(), d.z(), d.z_levels(), d.tie_blocks());
}

namespace {

BfResult make_result(const SlicedDataset& d, const Hyperparams& hyper, double log_bf,
                     std::chrono::steady_clock::time_point start) {
  BfResult r;
  r.log_bf = log_bf;
  r.hyper = hyper;
  r.pi0 = hyper.pi0(d.size());
  r.n = d.size();
  r.x_levels = d.x_levels();
  r.z_levels = d.z_levels();
  r.elapsed = std::chrono::steady_clock::now() - start;
  return r;
}

std::vector<int> direct_counts(const SlicedDataset& d, std::size_t begin, std::size_t end) {
  std::vector<int> counts(static_cast<std::size_t>(d.x_levels() * d.z_levels()), 0);
  for (std::size_t r = begin; r < end; ++r) {
    ++counts[static_cast<std::size_t>(d.z()[r] * d.x_levels() + d.x()[r])];
  }
  return counts;
}

}  // namespace

BfResult bf_dynamic_program(const SlicedDataset& d, const Hyperparams& hyper) {
  const auto start = std::chrono::steady_clock::now();
  BfEvaluator eval(hyper);
  const double value = eval.log_bf(d);
  return make_result(d, hyper, value, start);
}

BfResult bf_bruteforce(const SlicedDataset& d, const Hyperparams& hyper) {
  const auto start = std::chrono::steady_clock::now();
  hyper.validate();
  const auto blocks = d.tie_blocks();
  const std::size_t gaps = blocks.size() - 1;
  if (gaps > kBruteforceMaxGaps) {
    throw CapacityError("brute-force enumeration limited to " +
                        std::to_string(kBruteforceMaxGaps) + " admissible cut points");
  }
  const std::size_t n = d.size();
  const int xl = d.x_levels();
  const int zl = d.z_levels();
  const double log_null = log_psi_segment(direct_counts(d, 0, n), xl, zl, hyper);
  const double log_cut = hyper.log_pi0(n);
  const double log_keep = hyper.log_one_minus_pi0(n);

  std::vector<double> scheme_terms;
  scheme_terms.reserve(std::size_t{1} << gaps);
  for (std::size_t mask = 0; mask < (std::size_t{1} << gaps); ++mask) {
    double log_alt = 0.0;
    std::size_t cuts = 0;
    std::size_t begin = 0;
    for (std::size_t g = 0; g <= gaps; ++g) {
      const bool closes = g == gaps || ((mask >> g) & 1U);
      if (!closes) continue;
      const std::size_t end = blocks[g].end;
      log_alt += log_psi_segment(direct_counts(d, begin, end), xl, zl, hyper);
      begin = end;
      if (g < gaps) ++cuts;
    }
    const double log_prior = static_cast<double>(cuts) * log_cut +
                             static_cast<double>(n - 1 - cuts) * log_keep;
    scheme_terms.push_back(log_alt - log_null + log_prior);
  }
  return make_result(d, hyper, log_sum_exp(scheme_terms), start);
}

double mi_plugin(const SlicedDataset& d, const SlicingScheme& scheme) {
  const std::size_t n = d.size();
  std::vector<std::size_t> edges{0};
  for (auto cut : scheme.boundaries) {
    if (cut <= edges.back() || cut >= n) throw InputError("slicing scheme has an empty slice");
    if (d.y()[cut] == d.y()[cut - 1]) throw InputError("slice boundary splits a tie block");
    edges.push_back(cut);
  }
  edges.push_back(n);

  const int xl = d.x_levels();
  const int zl = d.z_levels();
  auto entropy_sum = [&](const std::vector<int>& counts) {
    double s = 0.0;
    for (int j = 0; j < zl; ++j) {
      int total = 0;
      for (int k = 0; k < xl; ++k) total += counts[static_cast<std::size_t>(j * xl + k)];
      for (int k = 0; k < xl; ++k) {
        const int c = counts[static_cast<std::size_t>(j * xl + k)];
        if (c > 0) s += c * std::log(static_cast<double>(c) / total);
      }
    }
    return s;
  };

  double within = 0.0;
  for (std::size_t h = 0; h + 1 < edges.size(); ++h) {
    within += entropy_sum(direct_counts(d, edges[h], edges[h + 1]));
  }
  const double overall = entropy_sum(direct_counts(d, 0, n));
  return std::max(0.0, (within - overall) / static_cast<double>(n));
}

}  // namespace slicebf
