#include "slicebf/permutation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "slicebf/error.hpp"
#include "slicebf/parallel.hpp"

namespace slicebf {

void PermutationPlan::validate() const {
  if (replicates < 1) throw InputError("permutation replicates must be at least 1");
}

std::vector<std::vector<std::size_t>> group_positions(std::span<const int> z, int z_levels) {
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(z_levels));
  for (std::size_t r = 0; r < z.size(); ++r) groups[static_cast<std::size_t>(z[r])].push_back(r);
  return groups;
}

void shuffle_within_groups(std::span<int> values,
                           const std::vector<std::vector<std::size_t>>& groups, Rng& rng) {
  for (const auto& pos : groups) {
    for (std::size_t i = pos.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.below(i));
      std::swap(values[pos[i - 1]], values[pos[j]]);
    }
  }
}

SlicedDataset conditional_shuffle(const SlicedDataset& d, std::uint64_t seed) {
  std::vector<int> x(d.x().begin(), d.x().end());
  Rng rng(seed);
  shuffle_within_groups(x, group_positions(d.z(), d.z_levels()), rng);
  return d.with_ranked_x(std::move(x));
}

std::vector<double> shuffle_null(const SlicedDataset& d, const Hyperparams& hyper,
                                 const PermutationPlan& plan) {
  plan.validate();
  const auto groups = group_positions(d.z(), d.z_levels());
  const unsigned workers = std::max(1u, plan.jobs);
  std::vector<BfEvaluator> evaluators(workers, BfEvaluator(hyper));
  std::vector<std::vector<int>> scratch(workers);
  std::vector<double> out(plan.replicates);

  parallel_for(plan.replicates, workers, [&](unsigned w, std::size_t r) {
    auto& x = scratch[w];
    x.assign(d.x().begin(), d.x().end());
    Rng rng(plan.seed, r);
    shuffle_within_groups(x, groups, rng);
    out[r] = evaluators[w].log_bf(x, d.x_levels(), d.z(), d.z_levels(), d.tie_blocks());
  });
  return out;
}

double add_one_pvalue(std::size_t exceed, std::size_t replicates) {
  return (1.0 + static_cast<double>(exceed)) / (1.0 + static_cast<double>(replicates));
}

std::size_t count_at_least(std::span<const double> null_sample, double observed) {
  const double slack = 1e-10 * std::max(1.0, std::abs(observed));
  return static_cast<std::size_t>(std::count_if(null_sample.begin(), null_sample.end(),
                                                [&](double v) { return v >= observed - slack; }));
}

McPvalue mc_pvalue(double observed_log_bf, const SlicedDataset& d, const Hyperparams& hyper,
                   const PermutationPlan& plan) {
  McPvalue out;
  out.null_log_bf = shuffle_null(d, hyper, plan);
  out.exceed = count_at_least(out.null_log_bf, observed_log_bf);
  out.p_value = add_one_pvalue(out.exceed, out.null_log_bf.size());
  return out;
}

void EmpiricalFormulaConstants::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !(gamma > 0.0)) {
    throw InputError("formula constants must be positive");
  }
}

double formula_pvalue(double b, std::size_t n, const EmpiricalFormulaConstants& c) {
  c.validate();
  if (!(b >= 1.0)) throw InputError("BF cutoff must be at least 1");
  if (n < 1) throw InputError("sample size must be at least 1");
  const double log_p =
      std::log(c.gamma) - c.alpha * std::log(b) - c.beta * std::log(static_cast<double>(n));
  return std::min(1.0, std::exp(log_p));
}

FormulaFit fit_formula(std::span<const RatePoint> grid) {
  if (grid.size() < 3) throw InputError("formula fit needs at least 3 grid points");
  std::set<double> bs, ns;
  for (const auto& p : grid) {
    if (!(p.rate > 0.0 && p.rate < 1.0)) throw InputError("grid rates must lie in (0, 1)");
    if (!(p.b > 0.0) || !(p.n > 0.0)) throw InputError("grid b and n must be positive");
    bs.insert(p.b);
    ns.insert(p.n);
  }
  if (bs.size() < 2 || ns.size() < 2) {
    throw InputError("formula fit needs at least two distinct b and two distinct n values");
  }

  const auto m = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd design(m, 3);
  Eigen::VectorXd target(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto& p = grid[static_cast<std::size_t>(i)];
    design(i, 0) = 1.0;
    design(i, 1) = -std::log(p.b);
    design(i, 2) = -std::log(p.n);
    target(i) = std::log(p.rate);
  }
  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(target);
  const Eigen::VectorXd resid = target - design * coef;

  FormulaFit fit;
  fit.constants = {coef(1), coef(2), std::exp(coef(0))};
  fit.residual_rms = std::sqrt(resid.squaredNorm() / static_cast<double>(m));
  if (!(fit.constants.alpha > 0.0) || !(fit.constants.beta > 0.0)) {
    throw DegenerateError("fitted formula has nonpositive exponents");
  }
  return fit;
}

}  // namespace slicebf
