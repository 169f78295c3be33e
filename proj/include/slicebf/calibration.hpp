#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "slicebf/bf_engine.hpp"
#include "slicebf/dataset.hpp"
#include "slicebf/permutation.hpp"

namespace slicebf {

/// Identifies the setting a set of formula constants was fitted for.
/// Frequencies are over (Z, X) configurations, index j * |X| + k, rounded
/// to two decimals.
struct CalibrationKey {
  int x_levels = 2;
  int z_levels = 1;
  std::vector<double> frequencies;
  double lambda0 = 1.0;
  double alpha0 = 1.0;

  bool matches(const CalibrationKey& other) const;
};

struct CalibrationEntry {
  CalibrationKey key;
  EmpiricalFormulaConstants constants;
  std::string source;  // "published" or "calibrate"
  double residual_rms = 0.0;
};

std::vector<double> round_frequencies(std::vector<double> f);
CalibrationKey calibration_key(const SlicedDataset& d, const Hyperparams& hyper);

/// Persisted as {"schema": 1, "entries": [...]}.
class CalibrationTable {
 public:
  /// The two published entries.
  static CalibrationTable builtin();
  /// Built-in entries overlaid with the file's entries.
  static CalibrationTable load(const std::filesystem::path& path);

  void save(const std::filesystem::path& path) const;
  nlohmann::json to_json() const;
  static CalibrationTable from_json(const nlohmann::json& j);

  const CalibrationEntry* find(const CalibrationKey& key) const;
  /// Replaces an entry with a matching key, or appends.
  void upsert(CalibrationEntry entry);
  const std::vector<CalibrationEntry>& entries() const { return entries_; }

 private:
  std::vector<CalibrationEntry> entries_;
};

/// Table path from $SLICEBF_CALIBRATION, if set.
std::optional<std::filesystem::path> calibration_path_from_env();

/// Shuffle-null simulation over an (n, b) grid.
struct CalibrationDesign {
  int x_levels = 2;
  int z_levels = 1;
  std::vector<double> frequencies{0.5, 0.5};  // over (Z, X) configurations
  std::vector<std::size_t> n_grid{100, 200, 400, 800};
  std::vector<double> b_grid{1.0, 3.0, 10.0, 30.0};
  std::size_t shuffles = 2000;
  double group_shift = 0.4;  // response mean shift per Z level
  std::uint64_t seed = 1;
  unsigned jobs = 1;

  void validate() const;
};

struct CalibrationRun {
  std::vector<RatePoint> grid;     // every (b, n) cell
  std::vector<RatePoint> usable;   // rates strictly inside (0, 1)
  FormulaFit fit;
};

/// Builds a data set with configuration counts proportional to the design
/// frequencies (largest-remainder rounding), responses
/// group_shift * z + N(0, 1).
SlicedDataset calibration_dataset(const CalibrationDesign& design, std::size_t n, Rng& rng);

/// Estimates Pr(BF > b) for every grid cell by conditional shuffling and
/// fits the formula constants to the usable cells.
CalibrationRun run_calibration(const CalibrationDesign& design, const Hyperparams& hyper);

}  // namespace slicebf
