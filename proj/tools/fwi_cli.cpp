// fwi: command-line driver for the inversion toolkit.
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "fwi/experiment.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "experiment config (JSON)")->required();
  cmd->add_option("--out", f.out, "output directory (overrides the config)");
  cmd->add_option("--seed", f.seed, "base seed; reassigns every component seed");
  cmd->add_option("--threads", f.threads, "shot-parallel worker count")->check(CLI::PositiveNumber);
}

fwi::ExperimentConfig resolve(const CommonFlags& f) {
  fwi::ExperimentConfig cfg = fwi::load_config(f.config);
  if (!f.out.empty()) cfg.output = f.out;
  if (f.seed) cfg.apply_seed(*f.seed);
  if (f.threads > 0) cfg.threads = f.threads;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Full-waveform inversion toolkit"};
  app.require_subcommand(1);

  CommonFlags common;
  auto* simulate = app.add_subcommand("simulate", "forward-model the true model and write shot records");
  add_common(simulate, common);
  auto* pretrain = app.add_subcommand("pretrain", "fit the generator to the initial model");
  add_common(pretrain, common);
  auto* invert = app.add_subcommand("invert", "run the configured method end to end");
  add_common(invert, common);
  std::string method;
  invert->add_option("--method", method, "ours, grid_l2, grid_w1 or dnn_fwi (overrides the config)");
  auto* compare = app.add_subcommand("compare", "run all four methods and write a summary table");
  add_common(compare, common);

  auto* metrics = app.add_subcommand("metrics", "SNR, SSIM and relative l2 error of a grid against the truth");
  std::string estimate, truth, csv;
  metrics->add_option("estimate", estimate, "estimated model (FWIG)")->required();
  metrics->add_option("truth", truth, "true model (FWIG)")->required();
  metrics->add_option("--csv", csv, "append a row to this CSV file");

  auto* profiles = app.add_subcommand("export-profiles", "depth profiles at lateral positions");
  std::vector<std::string> grids;
  std::vector<double> xs;
  std::string profile_out;
  profiles->add_option("grids", grids, "model grids (FWIG)")->required();
  profiles->add_option("--x", xs, "lateral positions in km")->required();
  profiles->add_option("--csv", profile_out, "output CSV")->required();

  auto* make_model = app.add_subcommand("make-model", "write a layered model grid");
  std::size_t nz = 0, nx = 0;
  double dx = 0.0, smooth = 0.0;
  std::vector<double> velocities;
  std::vector<std::size_t> interfaces;
  std::string model_out;
  make_model->add_option("--nz", nz)->required();
  make_model->add_option("--nx", nx)->required();
  make_model->add_option("--dx", dx, "grid spacing in m")->required();
  make_model->add_option("--velocities", velocities, "layer velocities, top to bottom")->required()->delimiter(',');
  make_model->add_option("--interfaces", interfaces, "first row of each deeper layer")->delimiter(',');
  make_model->add_option("--smooth", smooth, "Gaussian smoothing sigma in cells");
  make_model->add_option("--out", model_out, "output grid file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*simulate) fwi::cmd_simulate(resolve(common), std::cout);
    if (*pretrain) fwi::cmd_pretrain(resolve(common), std::cout);
    if (*invert) {
      fwi::ExperimentConfig cfg = resolve(common);
      if (!method.empty()) cfg.method = fwi::parse_method(method);
      fwi::cmd_invert(cfg, std::cout);
    }
    if (*compare) fwi::cmd_compare(resolve(common), std::cout);
    if (*metrics)
      fwi::cmd_metrics(estimate, truth, csv.empty() ? std::nullopt : std::optional<std::filesystem::path>(csv), std::cout);
    if (*profiles) {
      std::vector<std::filesystem::path> paths(grids.begin(), grids.end());
      fwi::cmd_export_profiles(paths, xs, profile_out);
    }
    if (*make_model) fwi::cmd_make_model(nz, nx, dx, velocities, interfaces, smooth, model_out);
  } catch (const fwi::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fwi::exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 5;
  }
  return 0;
}
