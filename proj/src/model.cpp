#include "fwi/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <string>

#include "fwi/error.hpp"

namespace fwi {

Grid2::Grid2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows * cols, ErrorKind::shape, "grid data size does not match dims");
}

double Grid2::min() const { return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end()); }
double Grid2::max() const { return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end()); }

bool Grid2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Grid2& Grid2::operator+=(const Grid2& o) {
  require(same_shape(o), ErrorKind::shape, "grid += shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Grid2& Grid2::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

double dot(const Grid2& a, const Grid2& b) {
  require(a.same_shape(b), ErrorKind::shape, "dot: shape mismatch");
  double s = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return s;
}

double norm(const Grid2& a) { return std::sqrt(dot(a, a)); }

VelocityModel::VelocityModel(Grid2 values, double dx) : values_(std::move(values)), dx_(dx) {
  require(values_.rows() >= 8 && values_.cols() >= 8, ErrorKind::config,
          "velocity model: nz and nx must be >= 8");
  require(dx_ > 0.0 && std::isfinite(dx_), ErrorKind::config, "velocity model: dx must be > 0");
  for (double v : values_.values())
    require(std::isfinite(v) && v > 0.0, ErrorKind::config,
            "velocity model: values must be finite and > 0");
}

double ricker(double t, double f) {
  const double a = std::numbers::pi * std::numbers::pi * f * f * t * t;
  return (1.0 - 2.0 * a) * std::exp(-a);
}

double AcquisitionGeometry::wavelet(double t) const { return amplitude * ricker(t - delay, peak_freq); }

void AcquisitionGeometry::validate(std::size_t nz, std::size_t nx) const {
  auto check_indices = [nx](const std::vector<int>& idx, const char* field) {
    require(!idx.empty(), ErrorKind::config, std::string("geometry.") + field + ": must not be empty");
    std::set<int> seen;
    for (int i : idx) {
      require(i >= 0 && static_cast<std::size_t>(i) < nx, ErrorKind::config,
              std::string("geometry.") + field + ": index " + std::to_string(i) + " outside [0, nx)");
      require(seen.insert(i).second, ErrorKind::config,
              std::string("geometry.") + field + ": duplicate index " + std::to_string(i));
    }
  };
  check_indices(source_x, "source_x");
  check_indices(receiver_x, "receiver_x");
  require(dt > 0.0, ErrorKind::config, "geometry.dt: must be > 0");
  require(nt >= 2, ErrorKind::config, "geometry.nt: must be >= 2");
  require(peak_freq > 0.0, ErrorKind::config, "geometry.peak_freq: must be > 0");
  require(std::isfinite(delay), ErrorKind::config, "geometry.delay: must be finite");
  require(source_depth >= 1 && static_cast<std::size_t>(source_depth) < nz, ErrorKind::config,
          "geometry.source_depth: must be in [1, nz)");
  require(receiver_depth >= 1 && static_cast<std::size_t>(receiver_depth) < nz, ErrorKind::config,
          "geometry.receiver_depth: must be in [1, nz)");
}

std::vector<int> equally_spaced(int count, int nx, int margin) {
  require(count >= 1, ErrorKind::config, "equally_spaced: count must be >= 1");
  require(nx - 2 * margin >= count, ErrorKind::config, "equally_spaced: not enough columns");
  std::vector<int> out;
  if (count == 1) return {nx / 2};
  const double span = static_cast<double>(nx - 1 - 2 * margin);
  for (int i = 0; i < count; ++i)
    out.push_back(margin + static_cast<int>(std::lround(span * i / (count - 1))));
  return out;
}

std::vector<int> all_columns(int nx) {
  std::vector<int> out(static_cast<std::size_t>(nx));
  for (int i = 0; i < nx; ++i) out[static_cast<std::size_t>(i)] = i;
  return out;
}

void DataSet::check_against(const AcquisitionGeometry& geom) const {
  require(shots.size() == geom.num_sources(), ErrorKind::shape,
          "data set has " + std::to_string(shots.size()) + " shots, geometry has " +
              std::to_string(geom.num_sources()) + " sources");
  for (const auto& s : shots) {
    require(s.num_receivers() == geom.num_receivers() &&
                s.num_samples() == static_cast<std::size_t>(geom.nt),
            ErrorKind::shape, "shot record dims do not match geometry");
    require(std::abs(s.dt - geom.dt) <= 1e-12 * geom.dt, ErrorKind::shape,
            "shot record dt does not match geometry");
  }
}

double DataSet::rms() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : shots) {
    for (double v : s.traces.values()) sum += v * v;
    n += s.traces.size();
  }
  return n == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(n));
}

double courant_limit() {
  // The 1D symbol -(c0 + 2 sum_k c_k cos(k theta)) peaks at theta = pi, where
  // it equals -(c0 + 2 sum_k (-1)^k c_k).
  constexpr double c0 = -205.0 / 72.0, c1 = 8.0 / 5.0, c2 = -1.0 / 5.0, c3 = 8.0 / 315.0,
                   c4 = -1.0 / 560.0;
  const double peak = -(c0 + 2.0 * (-c1 + c2 - c3 + c4));
  return 2.0 / std::sqrt(2.0 * peak);
}

CflVerdict validate_cfl(double v_max, double dx, double dt) {
  require(v_max > 0.0 && dx > 0.0 && dt > 0.0, ErrorKind::config, "validate_cfl: inputs must be positive");
  const double c = v_max * dt / dx;
  const double cmax = courant_limit();
  return {c, cmax, c <= cmax};
}

DataSet add_noise(const DataSet& clean, double rel_level, std::uint64_t seed) {
  require(rel_level >= 0.0, ErrorKind::config, "noise.rel_level: must be >= 0");
  DataSet out = clean;
  if (rel_level == 0.0) {
    out.noise_sigma = 0.0;
    return out;
  }
  const double sigma = rel_level * clean.rms();
  out.noise_sigma = sigma;
  for (std::size_t s = 0; s < out.shots.size(); ++s) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(s), 0x6e6f6973u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> gauss(0.0, sigma);
    for (double& v : out.shots[s].traces.values()) v += gauss(rng);
  }
  return out;
}

Grid2 smooth_gaussian(const Grid2& grid, double sigma_cells) {
  if (sigma_cells <= 0.0) return grid;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_cells));
  std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    w[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma_cells * sigma_cells));
    total += w[static_cast<std::size_t>(k + radius)];
  }
  for (double& x : w) x /= total;

  const auto rows = static_cast<long>(grid.rows());
  const auto cols = static_cast<long>(grid.cols());
  auto clampl = [](long i, long n) { return std::clamp(i, 0L, n - 1); };
  Grid2 tmp(grid.rows(), grid.cols());
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k)
        s += w[static_cast<std::size_t>(k + radius)] * grid(r, clampl(c + k, cols));
      tmp(r, c) = s;
    }
  Grid2 out(grid.rows(), grid.cols());
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k)
        s += w[static_cast<std::size_t>(k + radius)] * tmp(clampl(r + k, rows), c);
      out(r, c) = s;
    }
  return out;
}

Grid2 layered_model(std::size_t nz, std::size_t nx, const std::vector<double>& velocities,
                    const std::vector<std::size_t>& interfaces) {
  require(!velocities.empty() && interfaces.size() + 1 == velocities.size(), ErrorKind::config,
          "layered_model: need one more velocity than interfaces");
  Grid2 out(nz, nx);
  for (std::size_t r = 0; r < nz; ++r) {
    std::size_t layer = 0;
    while (layer < interfaces.size() && r >= interfaces[layer]) ++layer;
    for (std::size_t c = 0; c < nx; ++c) out(r, c) = velocities[layer];
  }
  return out;
}

}  // namespace fwi
