#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "fwi/grid.hpp"
#include "fwi/misfit.hpp"
#include "fwi/model.hpp"

namespace fwi {

/// Convolutional PML on the left, right and bottom edges. The top edge is
/// always a pressure-release free surface.
///
/// Each axis derivative is stretched by 1 / (1 + sigma / (i omega)), with
/// sigma = strength * (d / layer_cells)^profile_power, d the distance (in
/// cells) into the layer.
struct AbsorberConfig {
  int layer_cells = 20;
  double strength = 0.0;  // 1/s
  double profile_power = 3.0;

  void validate() const;
};

/// Strength giving a nominal round-trip amplitude decay `reflection` for a
/// normally incident wave travelling at v_max.
AbsorberConfig default_absorber(double v_max, double dx, int layer_cells = 20, double profile_power = 3.0,
                                double reflection = 1e-3);

struct PropagatorOptions {
  /// Inner time steps per record sample. The stability check applies to
  /// dt / substeps.
  int substeps = 1;
  /// Full wavefield storage is used when it fits; otherwise checkpoints are
  /// stored every `stride` steps and segments are recomputed in the adjoint.
  std::size_t history_budget_bytes = std::size_t{512} << 20;
  int finite_check_every = 50;
  int threads = 1;
  /// Off only for stability experiments near the bound.
  bool enforce_cfl = true;
};

/// Stored forward wavefields for one shot, padded domain plus stencil halo.
/// With stride == 1 every field u^0..u^M is kept; otherwise `fields` holds
/// (u^{jS-1}, u^{jS}) pairs for each segment j and the adjoint recomputes the
/// segment on demand.
struct WavefieldHistory {
  std::size_t field_size = 0;
  int total_steps = 0;
  int stride = 1;
  std::uint64_t fingerprint = 0;
  std::vector<std::vector<double>> fields;

  std::size_t bytes() const noexcept { return fields.size() * field_size * sizeof(double); }
};

struct ShotResult {
  ShotRecord record;
  std::optional<WavefieldHistory> history;
};

/// 8th-order second-derivative stencil in both axes. Ghost cells are
/// antisymmetric about row 0 (pressure-release surface; row 0 itself is
/// treated as zero) and zero beyond the other three edges.
Grid2 laplacian8(const Grid2& field, double dx);

ShotResult forward_shot(const VelocityModel& v, const AcquisitionGeometry& geom, const AbsorberConfig& absorber,
                        int source, bool record_history, const PropagatorOptions& opts = {});

/// Gradient of a record-space functional J with respect to the velocity
/// grid, given dJ/d(record) as `adjoint_source` (n_r x n_T).
Grid2 adjoint_gradient(const VelocityModel& v, const AcquisitionGeometry& geom, const AbsorberConfig& absorber,
                       int source, const Grid2& adjoint_source, const WavefieldHistory& history,
                       const PropagatorOptions& opts = {});

/// Exact linearization of the discrete forward map: returns J dv.
ShotRecord linearized_shot(const VelocityModel& v, const AcquisitionGeometry& geom,
                           const AbsorberConfig& absorber, int source, const Grid2& dv,
                           const PropagatorOptions& opts = {});

DataSet simulate(const VelocityModel& v, const AcquisitionGeometry& geom, const AbsorberConfig& absorber,
                 const PropagatorOptions& opts = {});

struct MisfitGradient {
  double loss = 0.0;
  Grid2 gradient;
  std::vector<double> shot_losses;
  std::vector<Grid2> shot_gradients;
};

/// Sum over shots of per-shot misfits and their velocity gradients. Shots
/// run on `opts.threads` workers; the reduction is always in shot order.
MisfitGradient misfit_and_gradient(const VelocityModel& v, const AcquisitionGeometry& geom,
                                   const AbsorberConfig& absorber, const DataSet& observed,
                                   const RecordMisfit& misfit, const PropagatorOptions& opts = {});

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace fwi
