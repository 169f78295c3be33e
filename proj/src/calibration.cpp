#include "slicebf/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>

#include "slicebf/error.hpp"

namespace slicebf {

using nlohmann::json;

bool CalibrationKey::matches(const CalibrationKey& other) const {
  if (x_levels != other.x_levels || z_levels != other.z_levels) return false;
  if (std::abs(lambda0 - other.lambda0) > 1e-9 || std::abs(alpha0 - other.alpha0) > 1e-9) {
    return false;
  }
  if (frequencies.size() != other.frequencies.size()) return false;
  for (std::size_t i = 0; i < frequencies.size(); ++i) {
    if (std::abs(frequencies[i] - other.frequencies[i]) > 1e-9) return false;
  }
  return true;
}

std::vector<double> round_frequencies(std::vector<double> f) {
  for (auto& v : f) v = std::round(v * 100.0) / 100.0;
  return f;
}

CalibrationKey calibration_key(const SlicedDataset& d, const Hyperparams& hyper) {
  CalibrationKey key;
  key.x_levels = d.x_levels();
  key.z_levels = d.z_levels();
  key.lambda0 = hyper.lambda0;
  key.alpha0 = hyper.alpha0;
  std::vector<double> f(static_cast<std::size_t>(d.x_levels() * d.z_levels()), 0.0);
  for (std::size_t r = 0; r < d.size(); ++r) {
    f[static_cast<std::size_t>(d.z()[r] * d.x_levels() + d.x()[r])] += 1.0;
  }
  for (auto& v : f) v /= static_cast<double>(d.size());
  key.frequencies = round_frequencies(std::move(f));
  return key;
}

CalibrationTable CalibrationTable::builtin() {
  CalibrationTable t;
  t.entries_.push_back({{2, 1, {0.5, 0.5}, 1.0, 1.0}, kUnconditionalHalf, "published", 0.0});
  t.entries_.push_back(
      {{2, 2, {0.25, 0.25, 0.25, 0.25}, 1.0, 1.0}, kConditionalUniform, "published", 0.0});
  return t;
}

json CalibrationTable::to_json() const {
  json entries = json::array();
  for (const auto& e : entries_) {
    entries.push_back({{"x_levels", e.key.x_levels},
                       {"z_levels", e.key.z_levels},
                       {"frequencies", e.key.frequencies},
                       {"lambda0", e.key.lambda0},
                       {"alpha0", e.key.alpha0},
                       {"alpha", e.constants.alpha},
                       {"beta", e.constants.beta},
                       {"gamma", e.constants.gamma},
                       {"residual_rms", e.residual_rms},
                       {"source", e.source}});
  }
  return {{"schema", 1}, {"entries", entries}};
}

CalibrationTable CalibrationTable::from_json(const json& j) {
  CalibrationTable t;
  try {
    if (j.at("schema").get<int>() != 1) throw InputError("unsupported calibration schema");
    for (const auto& e : j.at("entries")) {
      CalibrationEntry entry;
      entry.key.x_levels = e.at("x_levels").get<int>();
      entry.key.z_levels = e.at("z_levels").get<int>();
      entry.key.frequencies = round_frequencies(e.at("frequencies").get<std::vector<double>>());
      entry.key.lambda0 = e.at("lambda0").get<double>();
      entry.key.alpha0 = e.at("alpha0").get<double>();
      entry.constants = {e.at("alpha").get<double>(), e.at("beta").get<double>(),
                         e.at("gamma").get<double>()};
      entry.constants.validate();
      entry.residual_rms = e.value("residual_rms", 0.0);
      entry.source = e.value("source", std::string("file"));
      t.upsert(std::move(entry));
    }
  } catch (const json::exception& ex) {
    throw InputError(std::string("malformed calibration table: ") + ex.what());
  }
  return t;
}

CalibrationTable CalibrationTable::load(const std::filesystem::path& path) {
  CalibrationTable t = builtin();
  std::ifstream in(path);
  if (!in) throw InputError("cannot open calibration table '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw InputError("calibration table is not valid JSON: " + std::string(ex.what()));
  }
  for (auto& e : from_json(j).entries_) t.upsert(std::move(e));
  return t;
}

void CalibrationTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write calibration table '" + path.string() + "'");
  out << to_json().dump(2) << '\n';
}

const CalibrationEntry* CalibrationTable::find(const CalibrationKey& key) const {
  for (const auto& e : entries_) {
    if (e.key.matches(key)) return &e;
  }
  return nullptr;
}

void CalibrationTable::upsert(CalibrationEntry entry) {
  for (auto& e : entries_) {
    if (e.key.matches(entry.key)) {
      e = std::move(entry);
      return;
    }
  }
  entries_.push_back(std::move(entry));
}

std::optional<std::filesystem::path> calibration_path_from_env() {
  const char* v = std::getenv("SLICEBF_CALIBRATION");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::filesystem::path(v);
}

void CalibrationDesign::validate() const {
  if (x_levels < 2 || z_levels < 1) throw InputError("calibration needs |X| >= 2 and |Z| >= 1");
  if (frequencies.size() != static_cast<std::size_t>(x_levels * z_levels)) {
    throw InputError("frequency vector must have |X| * |Z| entries");
  }
  const double total = std::accumulate(frequencies.begin(), frequencies.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-6 ||
      std::any_of(frequencies.begin(), frequencies.end(), [](double f) { return f < 0.0; })) {
    throw InputError("frequencies must be nonnegative and sum to 1");
  }
  if (n_grid.size() < 2 || b_grid.size() < 2 || n_grid.size() * b_grid.size() < 3) {
    throw InputError("calibration grid too small: need at least 2 sample sizes and 2 cutoffs");
  }
  if (std::any_of(b_grid.begin(), b_grid.end(), [](double b) { return !(b >= 1.0); })) {
    throw InputError("BF cutoffs must be at least 1");
  }
  if (std::any_of(n_grid.begin(), n_grid.end(), [](std::size_t n) { return n < 4; })) {
    throw InputError("calibration sample sizes must be at least 4");
  }
  if (shuffles < 1) throw InputError("calibration needs at least one shuffle");
}

SlicedDataset calibration_dataset(const CalibrationDesign& design, std::size_t n, Rng& rng) {
  const std::size_t cells = design.frequencies.size();
  std::vector<std::size_t> counts(cells);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < cells; ++c) {
    const double exact = design.frequencies[c] * static_cast<double>(n);
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[remainders[i].second];

  std::vector<int> x, z;
  x.reserve(n);
  z.reserve(n);
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t i = 0; i < counts[c]; ++i) {
      z.push_back(static_cast<int>(c) / design.x_levels);
      x.push_back(static_cast<int>(c) % design.x_levels);
    }
  }
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = design.group_shift * z[i] + rng.normal();
  return SlicedDataset(y, make_categorical(std::move(x), design.x_levels),
                       make_categorical(std::move(z), design.z_levels));
}

CalibrationRun run_calibration(const CalibrationDesign& design, const Hyperparams& hyper) {
  design.validate();
  hyper.validate();
  CalibrationRun run;
  for (std::size_t i = 0; i < design.n_grid.size(); ++i) {
    const std::size_t n = design.n_grid[i];
    Rng data_rng(design.seed, 0x100000000ULL + i);
    const SlicedDataset d = calibration_dataset(design, n, data_rng);
    PermutationPlan plan;
    plan.replicates = design.shuffles;
    plan.seed = stream_seed(design.seed, i);
    plan.jobs = design.jobs;
    const auto null = shuffle_null(d, hyper, plan);
    for (double b : design.b_grid) {
      const double log_b = std::log(b);
      const auto above = std::count_if(null.begin(), null.end(), [&](double v) { return v > log_b; });
      const RatePoint p{b, static_cast<double>(n),
                        static_cast<double>(above) / static_cast<double>(null.size())};
      run.grid.push_back(p);
      if (p.rate > 0.0 && p.rate < 1.0) run.usable.push_back(p);
    }
  }
  if (run.usable.size() < 3) {
    throw DegenerateError("too few grid cells with observed exceedances; increase --shuffles");
  }
  run.fit = fit_formula(run.usable);
  return run;
}

}  // namespace slicebf
