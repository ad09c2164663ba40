#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rbmsem/datagen.hpp"
#include "rbmsem/estimators.hpp"

namespace rbmsem {

struct SimSetting {
  std::string model = "gcm";  // preset name
  int n = 100;
  presets::Reliability reliability = presets::Reliability::High;
  DistributionSpec dist;
  int replications = 200;
  std::uint64_t seed = 1;  // master seed
  std::uint64_t cell = 0;  // cell counter inside the grid
  std::vector<Estimator> estimators{Estimator::ML, Estimator::ERBM, Estimator::IRBM};
  int bootstrap_T = 200;
  std::optional<TrimQuantiles> trim;  // resampling estimators only
  bool strict_resampling = false;
  Parallelism parallelism = Parallelism::OpenMP;
};

/// Seed of replication r's dataset; every estimator sees the same data.
std::uint64_t replication_seed(const SimSetting& setting, int r);

struct EstimatorRun {
  Estimator estimator = Estimator::ML;
  std::vector<bool> accepted;                  // per replication
  std::vector<RejectionReason> reasons;        // per replication
  Matrix estimates;                            // replications x m, NaN when the fit failed
  Matrix ses;                                  // replications x m
  std::vector<double> wall_times;              // per replication
  int accepted_count() const;
};

struct CellRun {
  SimSetting setting;
  std::vector<std::string> names;
  Vector truth;
  std::vector<EstimatorRun> runs;
  double wall_time = 0.0;
  const EstimatorRun& run(Estimator est) const;
};

/// Simulates and fits every replication; replication r only depends on
/// (seed, cell, r), so serial and parallel runs agree exactly.
CellRun run_cell_raw(const SimSetting& setting);

struct ParameterMetrics {
  Estimator estimator = Estimator::ML;
  std::string parameter;
  double truth = 0.0;
  int R = 0;  // accepted replications
  double acceptance_rate = 0.0;
  // NaN when R == 0 (metrics unavailable); rel_mean_bias also NaN when truth == 0.
  double mean_bias = 0.0;
  double rel_mean_bias = 0.0;
  double pu = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;
  double mc_se_bias = 0.0;
};

struct SimMetrics {
  SimSetting setting;
  std::vector<ParameterMetrics> rows;  // estimator-major, parameters in model order
  double wall_time = 0.0;
  const ParameterMetrics& at(Estimator est, const std::string& parameter) const;
};

SimMetrics summarize_cell(const CellRun& run);
SimMetrics run_cell(const SimSetting& setting);

struct GridConfig {
  std::vector<std::string> models{"two_factor", "gcm"};
  std::vector<int> ns{15, 20, 50, 100, 1000};
  std::vector<presets::Reliability> reliabilities{presets::Reliability::High, presets::Reliability::Low};
  std::vector<DistributionSpec> dists{DistributionSpec::normal(), DistributionSpec::nonnormal()};
  int replications = 200;
  std::vector<Estimator> estimators{Estimator::ML, Estimator::ERBM, Estimator::IRBM};
  int bootstrap_T = 200;
  std::uint64_t master_seed = 1;
  std::string output_dir = "results";
  std::optional<TrimQuantiles> trim;
  bool strict_resampling = false;
  int jobs = 0;  // 0 = all available cores
};

/// Throws std::invalid_argument on unknown keys or invalid values.
GridConfig grid_config_from_json(const nlohmann::json& doc);
nlohmann::json grid_config_to_json(const GridConfig& config);

/// Cells in run order (models x ns x reliabilities x dists), with cell counters set.
std::vector<SimSetting> grid_cells(const GridConfig& config);

struct GridOutcome {
  int cells = 0;
  int resumed = 0;  // cells read back from checkpoints
  int failed = 0;
  std::size_t rows = 0;
};

/// Runs every cell, writing output_dir/results.csv, output_dir/manifest.json
/// and per-cell checkpoints under output_dir/cells. Finished cells are reused.
/// Progress goes to `log` when non-null.
GridOutcome run_grid(const GridConfig& config, std::ostream* log = nullptr);

std::string results_csv_header();
std::vector<std::string> results_csv_rows(const SimMetrics& metrics);

}  // namespace rbmsem
