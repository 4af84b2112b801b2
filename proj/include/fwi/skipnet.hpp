#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fwi/ad/graph.hpp"
#include "fwi/grid.hpp"

namespace fwi {

/// Encoder-decoder generator with skip connections.
///
/// Level i (0 = finest) has a down block (stride-2 conv, norm, leaky), a
/// skip block (k_s conv, norm, leaky, channel mask) and an up block
/// (upsample x2, concat [upsampled, skip], conv, norm, leaky). A 1x1 head
/// with bias maps the finest up output to one channel, then scaled_sigmoid
/// into [v_min, v_max].
struct SkipNetConfig {
  int depth = 5;
  std::vector<int> channels = std::vector<int>(5, 128);     // c_d[i] = c_u[i]
  std::vector<int> skip_channels = std::vector<int>(5, 4);  // c_s[i]
  int kernel = 3;
  int skip_kernel = 1;
  double slope = 0.1;
  // Keep probabilities (1 - dropout probability).
  double keep_down = 1.0;
  double keep_up = 1.0;
  double keep_skip = 0.7;
  double v_min = 1500.0;
  double v_max = 4500.0;
  std::uint64_t z0_seed = 0;
  double z0_amplitude = 0.1;

  void validate() const;
  /// Copy with every keep probability set to one.
  SkipNetConfig deterministic() const;
};

/// Learnable arrays in construction order.
struct ParamVector {
  std::vector<ad::Array4> arrays;
  std::vector<std::string> names;
  bool pretrained = false;

  std::size_t count() const;
};

/// Channel masks, each (1, c, 1, 1). A block class whose keep probability
/// is one has no entries.
struct MaskSet {
  std::vector<ad::Array4> down;
  std::vector<ad::Array4> skip;
  std::vector<ad::Array4> up;
  std::uint64_t seed = 0;
};

/// Closed-form parameter count of the architecture.
std::size_t parameter_count(const SkipNetConfig& cfg);

ParamVector build(const SkipNetConfig& cfg, std::uint64_t init_seed);

MaskSet sample_masks(const SkipNetConfig& cfg, std::uint64_t seed);
MaskSet ones_masks(const SkipNetConfig& cfg);

/// Net bound to an output grid size, holding the fixed input z0.
class SkipNet {
 public:
  SkipNet(SkipNetConfig cfg, std::size_t nz, std::size_t nx);

  const SkipNetConfig& config() const noexcept { return cfg_; }
  std::size_t nz() const noexcept { return nz_; }
  std::size_t nx() const noexcept { return nx_; }
  /// (1, 1, H, W), H and W the padded sizes.
  const ad::Array4& z0() const noexcept { return z0_; }

  struct Pass {
    ad::Graph graph;
    std::vector<ad::Var> params;
    ad::Var output;  // (1, 1, nz, nx)
  };

  /// Builds the graph. masks == nullptr skips the mask ops entirely.
  Pass forward(const ParamVector& params, const MaskSet* masks) const;
  Grid2 generate(const ParamVector& params, const MaskSet* masks) const;

  /// Gradients of sum(dv .* output) with respect to every parameter array.
  static std::vector<ad::Array4> backprop(Pass& pass, const Grid2& dv);

 private:
  SkipNetConfig cfg_;
  std::size_t nz_, nx_;
  ad::Array4 z0_;
};

Grid2 to_grid(const ad::Array4& a);
ad::Array4 to_array(const Grid2& g);

}  // namespace fwi
