#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace spatarch {

inline constexpr std::uint64_t kDefaultBaseSeed = 20240501ULL;

struct ModelSpec {
  std::string name;
  double rho = 0.0;
  double gamma = 0.0;
  double delta = 0.0;
  Eigen::VectorXd beta;
  double sigma_mu = 1.0;
  bool time_effects = false;
  double sigma_alpha = 1.0;
};

struct McConfig {
  std::vector<ModelSpec> models;
  std::vector<int> sides;     // lattice side lengths
  std::vector<int> periods;   // panel lengths T
  std::vector<std::string> estimators;
  int replications = 1000;
  std::uint64_t seed = kDefaultBaseSeed;
  int burn_in = 100;
  int workers = 0;            // 0 picks the hardware concurrency
};

McConfig default_mc_config();  // the full three-model lattice study
McConfig quick_mc_config();    // small smoke-test subset of the study

struct ParamMetric {
  std::string parameter;
  double truth = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
};

struct EstimatorCell {
  std::string estimator;
  std::vector<ParamMetric> params;
  int n_reps = 0;
  int n_converged = 0;
  int n_failed = 0;
};

struct CellResult {
  int cell_index = 0;
  std::string model;
  int side = 0;
  int n = 0;
  int T = 0;
  std::vector<EstimatorCell> estimators;
};

struct McReport {
  McConfig config;
  std::vector<CellResult> cells;
};

// Run every design cell. Replications are distributed over a worker pool but
// written into replication-indexed slots, so results are byte-identical for
// any worker count. The SPATARCH_THREADS environment variable overrides the
// configured worker count.
McReport run_experiment(const McConfig& config, std::ostream* log = nullptr);

// bias.csv / rmse.csv / mae.csv in the wide layout.
void emit_tables(const McReport& report, const std::string& dir);
// raw_cells.csv and seeds.csv with full-precision values.
void emit_raw(const McReport& report, const std::string& dir);
// One SVG per parameter, RMSE and bias panels across design cells.
void emit_plots(const McReport& report, const std::string& dir);

// Rebuild a report from raw_cells.csv (design lists are inferred).
McReport read_raw_cells(const std::string& path);

struct CompareRow {
  std::string parameter, model, method, cell;
  double ours = 0.0;
  double reference = 0.0;
  double abs_diff = 0.0;
};

struct CompareResult {
  std::string metric;  // bias, rmse or mae
  std::vector<CompareRow> rows;
  double max_abs_diff = 0.0;
};

// Compare one of the report's wide tables against a reference CSV carrying a
// "# metric=..." comment line.
CompareResult compare_to_reference(const McReport& report,
                                   const std::string& reference_path);
void write_compare_csv(const CompareResult& cmp, const std::string& path);

}  // namespace spatarch
