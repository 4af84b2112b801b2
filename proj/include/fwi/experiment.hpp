#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fwi/config.hpp"
#include "fwi/error.hpp"
#include "fwi/metrics.hpp"

namespace fwi {

/// Models and data the commands share, resolved from a config.
struct Workspace {
  VelocityModel truth;
  VelocityModel initial;
  FwiProblem problem;
};

FwiProblem make_problem(const ExperimentConfig& cfg, const VelocityModel& truth);
/// Loads the true and initial models; the initial model defaults to a
/// Gaussian smoothing of the truth.
std::pair<VelocityModel, VelocityModel> load_models(const ExperimentConfig& cfg);

std::filesystem::path shot_path(const std::filesystem::path& dir, std::size_t shot);

/// Forward-models every shot of the true model, adds noise, writes
/// shot_NNN.fwis plus manifest.json into the data directory.
DataSet cmd_simulate(const ExperimentConfig& cfg, std::ostream& log);

/// Reads shots from the data directory (missing_input when absent).
DataSet load_data(const ExperimentConfig& cfg);

/// Phase 1 only: writes params.fwip, generated.fwig and pretrain.csv into
/// output/pretrain.
void cmd_pretrain(const ExperimentConfig& cfg, std::ostream& log);

struct MethodOutcome {
  Grid2 estimate;
  MetricReport metrics;
  double final_loss_data = 0.0;
  std::filesystem::path dir;
};

/// Runs cfg.method end to end and writes its artifacts into
/// output/<method>.
MethodOutcome cmd_invert(const ExperimentConfig& cfg, std::ostream& log);

/// Prints the report with 4 decimals and appends a CSV row when csv is set.
MetricReport cmd_metrics(const std::filesystem::path& estimate, const std::filesystem::path& truth,
                         const std::optional<std::filesystem::path>& csv, std::ostream& out);

/// Nearest-column depth profiles; one column per (grid, position).
void cmd_export_profiles(const std::vector<std::filesystem::path>& grids, const std::vector<double>& x_km,
                         const std::filesystem::path& out_csv);

/// Column index for lateral position x_km; throws when outside the model.
std::size_t profile_column(double x_km, double dx_m, std::size_t nx);

/// Runs all four methods on the same data; writes output/compare/table.csv.
std::vector<std::pair<Method, MethodOutcome>> cmd_compare(const ExperimentConfig& cfg, std::ostream& log);

/// Layered (optionally smoothed) model written as a grid file.
void cmd_make_model(std::size_t nz, std::size_t nx, double dx, const std::vector<double>& velocities,
                    const std::vector<std::size_t>& interfaces, double smooth_sigma,
                    const std::filesystem::path& out);

/// Maps a failure kind onto the documented process exit code.
int exit_code(ErrorKind kind);

}  // namespace fwi
