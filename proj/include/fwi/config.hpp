#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fwi/bayes.hpp"
#include "fwi/skipnet.hpp"
#include "fwi/wave.hpp"

namespace fwi {

enum class Method { ours, grid_l2, grid_w1, dnn_fwi };

Method parse_method(const std::string& name);
std::string to_string(Method m);

struct GeometryConfig {
  int num_sources = 30;
  std::vector<int> source_x;  // explicit indices override num_sources
  int num_receivers = 0;      // 0 = one receiver per column
  std::vector<int> receiver_x;
  int margin = 0;             // cells kept free at both lateral ends
  double dt = 0.003;
  int nt = 2001;
  double peak_freq = 5.0;
  std::optional<double> delay;  // default 1 / peak_freq
  double amplitude = 1.0;
  int source_depth = 1;
  int receiver_depth = 1;

  AcquisitionGeometry resolve(std::size_t nx) const;
};

struct AbsorberBlock {
  int layer_cells = 20;
  std::optional<double> strength;  // default from the nominal reflection
  double profile_power = 3.0;
  double reflection = 1e-3;

  AbsorberConfig resolve(double v_max, double dx) const;
};

struct NoiseConfig {
  double rel_level = 0.05;
  std::uint64_t seed = 0;
};

/// Whole-experiment description, one JSON document. Relative paths are
/// resolved against the directory holding the config file.
struct ExperimentConfig {
  std::filesystem::path true_model;
  std::optional<std::filesystem::path> initial_model;
  double initial_smoothing = 4.0;  // Gaussian sigma in cells when no initial model is given
  std::optional<std::filesystem::path> data_dir;
  std::optional<std::filesystem::path> pretrained_params;
  GeometryConfig geometry;
  AbsorberBlock absorber;
  int substeps = 1;
  std::size_t history_budget_mb = 512;
  SkipNetConfig net;
  InversionConfig inversion;
  NoiseConfig noise;
  Method method = Method::ours;
  std::filesystem::path output = "out";
  std::uint64_t seed = 0;
  int threads = 1;

  /// Rejects invalid fields, naming the field path.
  void validate() const;
  /// Reassigns every component seed from one base seed.
  void apply_seed(std::uint64_t base);

  std::filesystem::path data_directory() const { return data_dir ? *data_dir : output / "data"; }
};

ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of the resolved config (sorted keys, fixed formatting).
std::string to_json(const ExperimentConfig& cfg);
/// FNV-1a 64 of to_json, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace fwi
