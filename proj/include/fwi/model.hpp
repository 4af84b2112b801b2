#pragma once

#include <cstdint>
#include <vector>

#include "fwi/grid.hpp"

namespace fwi {

/// Wave-speed grid (m/s) on a uniform mesh. Rows are depth, columns lateral.
///
/// Invariants, checked on construction: nz, nx >= 8, dx > 0, every value
/// finite and strictly positive.
class VelocityModel {
 public:
  VelocityModel(Grid2 values, double dx);

  std::size_t nz() const noexcept { return values_.rows(); }
  std::size_t nx() const noexcept { return values_.cols(); }
  double dx() const noexcept { return dx_; }
  const Grid2& values() const noexcept { return values_; }
  double operator()(std::size_t iz, std::size_t ix) const noexcept { return values_(iz, ix); }
  double max_velocity() const { return values_.max(); }
  double min_velocity() const { return values_.min(); }

 private:
  Grid2 values_;
  double dx_;
};

/// Surface acquisition: sources and receivers at fixed depth rows, Ricker
/// source signature and the recording time axis.
struct AcquisitionGeometry {
  std::vector<int> source_x;    // lateral cell indices
  std::vector<int> receiver_x;  // lateral cell indices
  double dt = 0.003;            // record sample interval (s)
  int nt = 2001;                // samples per trace
  double peak_freq = 5.0;       // Hz
  double delay = 0.2;           // wavelet onset shift (s)
  double amplitude = 1.0;       // source scale
  int source_depth = 1;         // depth row of every source
  int receiver_depth = 1;       // depth row of every receiver

  std::size_t num_sources() const noexcept { return source_x.size(); }
  std::size_t num_receivers() const noexcept { return receiver_x.size(); }

  /// Source signature at absolute time t.
  double wavelet(double t) const;

  /// Throws ErrorKind::config naming the offending field.
  void validate(std::size_t nz, std::size_t nx) const;
};

/// `count` lateral indices spread evenly over [margin, nx - 1 - margin].
std::vector<int> equally_spaced(int count, int nx, int margin = 0);
std::vector<int> all_columns(int nx);

/// Receiver traces for one shot, n_r rows by n_T columns.
struct ShotRecord {
  int source_index = 0;
  Grid2 traces;
  double dt = 0.0;

  std::size_t num_receivers() const noexcept { return traces.rows(); }
  std::size_t num_samples() const noexcept { return traces.cols(); }
};

struct DataSet {
  std::vector<ShotRecord> shots;
  double noise_sigma = 0.0;

  /// Throws ErrorKind::shape when the records do not match `geom`.
  void check_against(const AcquisitionGeometry& geom) const;
  double rms() const;
};

/// (1 - 2 pi^2 f^2 t^2) exp(-pi^2 f^2 t^2)
double ricker(double t, double f);

struct CflVerdict {
  double courant;      // v_max dt / dx
  double courant_max;  // stability bound of the scheme
  bool stable;
};

/// Largest stable Courant number of the 2D eighth-order-space,
/// second-order-time leapfrog scheme: 2 / sqrt(2 * max_theta S(theta)),
/// S being the symbol of the 1D eighth-order second-derivative stencil.
double courant_limit();

CflVerdict validate_cfl(double v_max, double dx, double dt);

/// Adds N(0, sigma^2) noise with sigma = rel_level * rms(clean). Each shot
/// draws from its own stream seeded by (seed, shot index).
DataSet add_noise(const DataSet& clean, double rel_level, std::uint64_t seed);

/// Separable Gaussian blur with edge replication (used to build smooth
/// starting models).
Grid2 smooth_gaussian(const Grid2& grid, double sigma_cells);

/// Horizontally layered model: `velocities[i]` fills rows from
/// `interfaces[i-1]` (or 0) to `interfaces[i]` (or nz).
Grid2 layered_model(std::size_t nz, std::size_t nx, const std::vector<double>& velocities,
                    const std::vector<std::size_t>& interfaces);

}  // namespace fwi
