#include "fwi/wave.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "fwi/error.hpp"

namespace fwi {
namespace {

constexpr int kHalo = 4;
constexpr double kC0 = -205.0 / 72.0;
constexpr double kC[4] = {8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0};

constexpr double kD[4] = {4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0};

using Band = std::pair<std::size_t, std::size_t>;

// Memory variables of the convolutional PML, one pair per axis.
struct Pml {
  std::vector<double> px, zx, pz, zz;
  void reset(std::size_t n) {
    for (auto* f : {&px, &zx, &pz, &zz}) f->assign(n, 0.0);
  }
};

// Padded medium: the model extended by `layer_cells` on the left, right and
// bottom (edge-replicated velocities), stored with a kHalo ghost border so the
// stencil needs no branches. Row 0 is the free surface.
class Medium {
 public:
  Medium(const VelocityModel& v, const AbsorberConfig& ab, double dt) : nz(v.nz()), nx(v.nx()) {
    layer = static_cast<std::size_t>(ab.layer_cells);
    NZ = nz + layer;
    NX = nx + 2 * layer;
    SX = NX + 2 * kHalo;
    SZ = NZ + 2 * kHalo;
    size = SZ * SX;
    inv_dx = 1.0 / v.dx();
    inv_dx2 = inv_dx * inv_dx;
    vel.assign(size, 0.0);
    c.assign(size, 0.0);
    for (std::size_t i = 0; i < NZ; ++i)
      for (std::size_t j = 0; j < NX; ++j) {
        const auto [mi, mj] = model_cell(i, j);
        const double vp = v(mi, mj);
        const std::size_t k = idx(i, j);
        vel[k] = vp;
        c[k] = vp * vp * dt * dt;
      }
    const double L = static_cast<double>(layer);
    auto coeffs = [&](double d, double& b, double& a) {
      const double sigma = layer > 0 ? ab.strength * std::pow(d / L, ab.profile_power) : 0.0;
      b = std::exp(-sigma * dt);
      a = b - 1.0;
    };
    bx.assign(NX, 1.0);
    ax.assign(NX, 0.0);
    bz.assign(NZ, 1.0);
    az.assign(NZ, 0.0);
    for (std::size_t j = 0; j < NX; ++j) {
      if (j < layer) coeffs(static_cast<double>(layer - j), bx[j], ax[j]);
      if (j >= layer + nx) coeffs(static_cast<double>(j - (layer + nx - 1)), bx[j], ax[j]);
    }
    for (std::size_t i = nz; i < NZ; ++i) coeffs(static_cast<double>(i - (nz - 1)), bz[i], az[i]);
    xband = {{0, layer}, {layer + nx, NX}};
    xreach = {{0, std::min(NX, layer + kHalo)}, {layer + nx - kHalo, NX}};
  }

  std::size_t idx(std::size_t i, std::size_t j) const noexcept { return (i + kHalo) * SX + j + kHalo; }

  std::pair<std::size_t, std::size_t> model_cell(std::size_t i, std::size_t j) const noexcept {
    const std::size_t mi = std::min(i, nz - 1);
    const std::size_t mj = j < layer ? 0 : std::min(j - layer, nx - 1);
    return {mi, mj};
  }

  bool in_x(std::size_t j) const noexcept { return j < layer || j >= layer + nx; }

  // Antisymmetric ghosts about row 0: u(-k) = -u(k).
  void fill_top_halo(std::vector<double>& u) const {
    for (int k = 1; k <= kHalo; ++k) {
      double* ghost = u.data() + (kHalo - k) * SX;
      const double* src = u.data() + (kHalo + k) * SX;
      for (std::size_t j = 0; j < SX; ++j) ghost[j] = -src[j];
    }
  }

  // out = lap(u) on rows 1..NZ-1; u must have its top halo filled.
  void laplacian(const std::vector<double>& u, std::vector<double>& out) const {
    const double* p = u.data();
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(SX);
    for (std::size_t i = 1; i < NZ; ++i) {
      const std::size_t row = idx(i, 0);
      for (std::size_t j = 0; j < NX; ++j) {
        const std::size_t k = row + j;
        const double* q = p + k;
        double acc = 2.0 * kC0 * q[0];
        acc += kC[0] * (q[1] + q[-1] + q[s] + q[-s]);
        acc += kC[1] * (q[2] + q[-2] + q[2 * s] + q[-2 * s]);
        acc += kC[2] * (q[3] + q[-3] + q[3 * s] + q[-3 * s]);
        acc += kC[3] * (q[4] + q[-4] + q[4 * s] + q[-4 * s]);
        out[k] = acc * inv_dx2;
      }
    }
  }

  double d1(const double* q, std::ptrdiff_t s) const noexcept {
    return (kD[0] * (q[s] - q[-s]) + kD[1] * (q[2 * s] - q[-2 * s]) + kD[2] * (q[3 * s] - q[-3 * s]) +
            kD[3] * (q[4 * s] - q[-4 * s])) *
           inv_dx;
  }

  double d2(const double* q, std::ptrdiff_t s) const noexcept {
    return (kC0 * q[0] + kC[0] * (q[s] + q[-s]) + kC[1] * (q[2 * s] + q[-2 * s]) + kC[2] * (q[3 * s] + q[-3 * s]) +
            kC[3] * (q[4 * s] + q[-4 * s])) *
           inv_dx2;
  }

  // Advances the memory variables with u = u^n and adds the PML terms to out:
  //   psi = b psi + a D1 u,  zeta = b zeta + a (D2 u + D1 psi),  out += D1 psi + zeta.
  void absorb(const std::vector<double>& u, Pml& s, std::vector<double>& out) const {
    if (layer == 0) return;
    const double* p = u.data();
    const std::ptrdiff_t sz = static_cast<std::ptrdiff_t>(SX);
    for (std::size_t i = 1; i < NZ; ++i)
      for (const auto& [j0, j1] : xband)
        for (std::size_t j = j0; j < j1; ++j) {
          const std::size_t k = idx(i, j);
          s.px[k] = bx[j] * s.px[k] + ax[j] * d1(p + k, 1);
        }
    for (std::size_t i = 1; i < NZ; ++i)
      for (const auto& [j0, j1] : xreach)
        for (std::size_t j = j0; j < j1; ++j) {
          const std::size_t k = idx(i, j);
          double t = d1(s.px.data() + k, 1);
          if (in_x(j)) {
            s.zx[k] = bx[j] * s.zx[k] + ax[j] * (d2(p + k, 1) + t);
            t += s.zx[k];
          }
          out[k] += t;
        }
    for (std::size_t i = nz; i < NZ; ++i)
      for (std::size_t j = 0; j < NX; ++j) {
        const std::size_t k = idx(i, j);
        s.pz[k] = bz[i] * s.pz[k] + az[i] * d1(p + k, sz);
      }
    for (std::size_t i = nz - kHalo; i < NZ; ++i)
      for (std::size_t j = 0; j < NX; ++j) {
        const std::size_t k = idx(i, j);
        double t = d1(s.pz.data() + k, sz);
        if (i >= nz) {
          s.zz[k] = bz[i] * s.zz[k] + az[i] * (d2(p + k, sz) + t);
          t += s.zz[k];
        }
        out[k] += t;
      }
  }

  // Transpose of absorb for one step. g is c times the adjoint of u^{n+1};
  // s carries the adjoint memory variables backwards; ubar receives the
  // contribution to the adjoint of u^n. h and w are scratch.
  void absorb_adjoint(const std::vector<double>& g, Pml& s, Pml& scratch, std::vector<double>& ubar) const {
    if (layer == 0) return;
    const double* pg = g.data();
    auto& hx = scratch.px;
    auto& wx = scratch.zx;
    auto& hz = scratch.pz;
    auto& wz = scratch.zz;
    const std::ptrdiff_t sz = static_cast<std::ptrdiff_t>(SX);
    for (std::size_t i = 1; i < NZ; ++i)
      for (const auto& [j0, j1] : xband)
        for (std::size_t j = j0; j < j1; ++j) {
          const std::size_t k = idx(i, j);
          const double zt = s.zx[k] + g[k];
          hx[k] = ax[j] * zt;
          s.zx[k] = bx[j] * zt;
          s.px[k] -= d1(pg + k, 1);
        }
    for (std::size_t i = 1; i < NZ; ++i)
      for (const auto& [j0, j1] : xband)
        for (std::size_t j = j0; j < j1; ++j) {
          const std::size_t k = idx(i, j);
          const double pt = s.px[k] - d1(hx.data() + k, 1);
          wx[k] = ax[j] * pt;
          s.px[k] = bx[j] * pt;
        }
    for (std::size_t i = 1; i < NZ; ++i)
      for (const auto& [j0, j1] : xreach)
        for (std::size_t j = j0; j < j1; ++j) {
          const std::size_t k = idx(i, j);
          ubar[k] += d2(hx.data() + k, 1) - d1(wx.data() + k, 1);
        }
    for (std::size_t i = nz; i < NZ; ++i)
      for (std::size_t j = 0; j < NX; ++j) {
        const std::size_t k = idx(i, j);
        const double zt = s.zz[k] + g[k];
        hz[k] = az[i] * zt;
        s.zz[k] = bz[i] * zt;
        s.pz[k] -= d1(pg + k, sz);
      }
    for (std::size_t i = nz; i < NZ; ++i)
      for (std::size_t j = 0; j < NX; ++j) {
        const std::size_t k = idx(i, j);
        const double pt = s.pz[k] - d1(hz.data() + k, sz);
        wz[k] = az[i] * pt;
        s.pz[k] = bz[i] * pt;
      }
    for (std::size_t i = nz - kHalo; i < NZ; ++i)
      for (std::size_t j = 0; j < NX; ++j) {
        const std::size_t k = idx(i, j);
        ubar[k] += d2(hz.data() + k, sz) - d1(wz.data() + k, sz);
      }
  }

  Pml make_pml() const {
    Pml s;
    if (layer > 0) s.reset(size);
    return s;
  }

  void zero_surface(std::vector<double>& u) const {
    std::fill_n(u.data() + idx(0, 0), NX, 0.0);
  }

  std::size_t nz, nx, layer, NZ, NX, SX, SZ, size;
  double inv_dx, inv_dx2;
  std::vector<double> vel, c;
  std::vector<double> bx, ax, bz, az;
  std::vector<Band> xband, xreach;
};

struct Layout {
  int substeps;
  double dt_inner;
  int total_steps;
  std::size_t source_idx;
  std::vector<std::size_t> receiver_idx;
};

Layout make_layout(const VelocityModel& v, const AcquisitionGeometry& geom, const AbsorberConfig& ab,
                   const Medium& med, int source, const PropagatorOptions& opts) {
  geom.validate(v.nz(), v.nx());
  ab.validate();
  require(source >= 0 && static_cast<std::size_t>(source) < geom.num_sources(), ErrorKind::config,
          "source index " + std::to_string(source) + " out of range");
  require(opts.substeps >= 1, ErrorKind::config, "propagator.substeps: must be >= 1");
  Layout lay;
  lay.substeps = opts.substeps;
  lay.dt_inner = geom.dt / opts.substeps;
  const CflVerdict cfl = validate_cfl(v.max_velocity(), v.dx(), lay.dt_inner);
  if (!cfl.stable && opts.enforce_cfl)
    fail(ErrorKind::numerical, "CFL violated: Courant number " + std::to_string(cfl.courant) + " > " +
                                   std::to_string(cfl.courant_max) + " (raise substeps or reduce dt)");
  lay.total_steps = (geom.nt - 1) * opts.substeps;
  lay.source_idx = med.idx(static_cast<std::size_t>(geom.source_depth),
                           static_cast<std::size_t>(geom.source_x[static_cast<std::size_t>(source)]) + med.layer);
  for (int rx : geom.receiver_x)
    lay.receiver_idx.push_back(
        med.idx(static_cast<std::size_t>(geom.receiver_depth), static_cast<std::size_t>(rx) + med.layer));
  return lay;
}

std::uint64_t fnv(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

template <class T>
std::uint64_t fnv_value(std::uint64_t h, T v) {
  return fnv(h, &v, sizeof v);
}

std::uint64_t fingerprint(const VelocityModel& v, const AcquisitionGeometry& g, const AbsorberConfig& ab,
                          int source, int substeps) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  h = fnv(h, v.values().values().data(), v.values().size() * sizeof(double));
  h = fnv_value(h, v.dx());
  h = fnv(h, g.source_x.data(), g.source_x.size() * sizeof(int));
  h = fnv(h, g.receiver_x.data(), g.receiver_x.size() * sizeof(int));
  for (double x : {g.dt, g.peak_freq, g.delay, g.amplitude}) h = fnv_value(h, x);
  for (int x : {g.nt, g.source_depth, g.receiver_depth, source, substeps, ab.layer_cells}) h = fnv_value(h, x);
  h = fnv_value(h, ab.strength);
  h = fnv_value(h, ab.profile_power);
  return h;
}

// u_next = P (2 u - u_prev + c (lap(u) + pml + f)); `lap` receives the bracket.
// u must have its top halo filled; u_next gets its halo filled on return.
void step(const Medium& med, const Layout& lay, const AcquisitionGeometry& geom, int m,
          const std::vector<double>& u_prev, const std::vector<double>& u, std::vector<double>& u_next,
          std::vector<double>& lap, Pml& pml) {
  med.laplacian(u, lap);
  med.absorb(u, pml, lap);
  const double f = geom.wavelet(m * lay.dt_inner) * med.inv_dx2;
  lap[lay.source_idx] += f;
  for (std::size_t i = 1; i < med.NZ; ++i) {
    const std::size_t row = med.idx(i, 0);
    for (std::size_t k = row; k < row + med.NX; ++k)
      u_next[k] = 2.0 * u[k] - u_prev[k] + med.c[k] * lap[k];
  }
  med.zero_surface(u_next);
  med.fill_top_halo(u_next);
}

void check_finite(const std::vector<double>& u, int m) {
  for (double x : u)
    if (!std::isfinite(x)) fail(ErrorKind::numerical, "non-finite wavefield at time step " + std::to_string(m));
}

// A checkpoint holds u^{m-1}, u^m and the four memory variables before step m.
constexpr std::size_t kCheckpointFields = 6;

// Serves u^q for the adjoint sweep, recomputing checkpoint segments as needed.
class HistoryView {
 public:
  HistoryView(const WavefieldHistory& h, const Medium& med, const Layout& lay, const AcquisitionGeometry& geom)
      : h_(h), med_(med), lay_(lay), geom_(geom), zeros_(med.size, 0.0) {
    if (h_.stride > 1) {
      buffer_.assign(static_cast<std::size_t>(h_.stride) + 2, std::vector<double>(med.size, 0.0));
      lap_.assign(med.size, 0.0);
      pml_ = med.make_pml();
    }
  }

  // Makes u^{m-1}, u^m, u^{m+1} available.
  void prepare(int m) {
    if (h_.stride == 1) return;
    const int seg = m / h_.stride;
    if (seg == loaded_) return;
    const int start = seg * h_.stride;
    const std::size_t base = kCheckpointFields * static_cast<std::size_t>(seg);
    buffer_[0] = h_.fields[base];
    buffer_[1] = h_.fields[base + 1];
    if (med_.layer > 0) {
      pml_.px = h_.fields[base + 2];
      pml_.zx = h_.fields[base + 3];
      pml_.pz = h_.fields[base + 4];
      pml_.zz = h_.fields[base + 5];
    }
    const int last = std::min(start + h_.stride, h_.total_steps);
    for (int q = start; q < last; ++q) {
      const std::size_t bq = static_cast<std::size_t>(q - start + 1);
      step(med_, lay_, geom_, q, buffer_[bq - 1], buffer_[bq], buffer_[bq + 1], lap_, pml_);
    }
    loaded_ = seg;
    base_ = start - 1;
  }

  const std::vector<double>& field(int q) const {
    if (q < 0) return zeros_;
    if (h_.stride == 1) return h_.fields[static_cast<std::size_t>(q)];
    return buffer_[static_cast<std::size_t>(q - base_)];
  }

 private:
  const WavefieldHistory& h_;
  const Medium& med_;
  const Layout& lay_;
  const AcquisitionGeometry& geom_;
  std::vector<double> zeros_;
  std::vector<std::vector<double>> buffer_;
  std::vector<double> lap_;
  Pml pml_;
  int loaded_ = -1;
  int base_ = 0;
};

Grid2 fold_to_model(const Medium& med, const std::vector<double>& padded) {
  Grid2 out(med.nz, med.nx);
  for (std::size_t i = 0; i < med.NZ; ++i)
    for (std::size_t j = 0; j < med.NX; ++j) {
      const auto [mi, mj] = med.model_cell(i, j);
      out(mi, mj) += padded[med.idx(i, j)];
    }
  return out;
}

std::vector<double> pad_from_model(const Medium& med, const Grid2& g) {
  std::vector<double> out(med.size, 0.0);
  for (std::size_t i = 0; i < med.NZ; ++i)
    for (std::size_t j = 0; j < med.NX; ++j) {
      const auto [mi, mj] = med.model_cell(i, j);
      out[med.idx(i, j)] = g(mi, mj);
    }
  return out;
}

}  // namespace

void AbsorberConfig::validate() const {
  require(layer_cells >= 0, ErrorKind::config, "absorber.layer_cells: must be >= 0");
  require(strength >= 0.0 && std::isfinite(strength), ErrorKind::config, "absorber.strength: must be >= 0");
  require(profile_power >= 1.0, ErrorKind::config, "absorber.profile_power: must be >= 1");
}

AbsorberConfig default_absorber(double v_max, double dx, int layer_cells, double profile_power,
                                double reflection) {
  AbsorberConfig ab;
  ab.layer_cells = layer_cells;
  ab.profile_power = profile_power;
  ab.strength = layer_cells > 0 ? (profile_power + 1.0) * v_max * std::log(1.0 / reflection) /
                                      (2.0 * layer_cells * dx)
                                : 0.0;
  return ab;
}

Grid2 laplacian8(const Grid2& field, double dx) {
  require(field.rows() >= 9 && field.cols() >= 9, ErrorKind::shape, "laplacian8: needs nz, nx >= 9");
  require(field.all_finite(), ErrorKind::numerical, "laplacian8: non-finite input");
  const VelocityModel unit(Grid2(field.rows(), field.cols(), 1.0), dx);
  const Medium med(unit, AbsorberConfig{0, 0.0, 1.0}, 1.0);
  std::vector<double> u(med.size, 0.0), out(med.size, 0.0);
  for (std::size_t i = 1; i < field.rows(); ++i)
    for (std::size_t j = 0; j < field.cols(); ++j) u[med.idx(i, j)] = field(i, j);
  med.fill_top_halo(u);
  med.laplacian(u, out);
  Grid2 res(field.rows(), field.cols());
  for (std::size_t i = 1; i < field.rows(); ++i)
    for (std::size_t j = 0; j < field.cols(); ++j) res(i, j) = out[med.idx(i, j)];
  return res;
}

ShotResult forward_shot(const VelocityModel& v, const AcquisitionGeometry& geom, const AbsorberConfig& absorber,
                        int source, bool record_history, const PropagatorOptions& opts) {
  const Medium med(v, absorber, geom.dt / std::max(opts.substeps, 1));
  const Layout lay = make_layout(v, geom, absorber, med, source, opts);
  const int M = lay.total_steps;
  const int k = lay.substeps;

  ShotResult res;
  res.record.source_index = source;
  res.record.dt = geom.dt;
  res.record.traces = Grid2(geom.num_receivers(), static_cast<std::size_t>(geom.nt));

  WavefieldHistory hist;
  if (record_history) {
    hist.field_size = med.size;
    hist.total_steps = M;
    hist.fingerprint = fingerprint(v, geom, absorber, source, k);
    const std::size_t full_bytes = (static_cast<std::size_t>(M) + 1) * med.size * sizeof(double);
    if (full_bytes <= opts.history_budget_bytes) {
      hist.stride = 1;
      hist.fields.reserve(static_cast<std::size_t>(M) + 1);
    } else {
      hist.stride = std::max(2, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(M)))));
      const std::size_t segs = static_cast<std::size_t>((M + hist.stride - 1) / hist.stride);
      const std::size_t need =
          (kCheckpointFields * segs + static_cast<std::size_t>(hist.stride) + 7) * med.size * sizeof(double);
      require(need <= opts.history_budget_bytes, ErrorKind::numerical,
              "wavefield history does not fit history_budget_bytes even with checkpointing");
    }
  }

  std::vector<double> u_prev(med.size, 0.0), u(med.size, 0.0), u_next(med.size, 0.0), lap(med.size, 0.0);
  Pml pml = med.make_pml();
  auto record = [&](int m, const std::vector<double>& field) {
    if (m % k != 0) return;
    const std::size_t n = static_cast<std::size_t>(m / k);
    for (std::size_t r = 0; r < lay.receiver_idx.size(); ++r) res.record.traces(r, n) = field[lay.receiver_idx[r]];
  };
  record(0, u);
  if (record_history && hist.stride == 1) hist.fields.push_back(u);
  for (int m = 0; m < M; ++m) {
    if (record_history && hist.stride > 1 && m % hist.stride == 0) {
      hist.fields.push_back(u_prev);
      hist.fields.push_back(u);
      for (const auto* f : {&pml.px, &pml.zx, &pml.pz, &pml.zz}) hist.fields.push_back(*f);
    }
    step(med, lay, geom, m, u_prev, u, u_next, lap, pml);
    if (opts.finite_check_every > 0 && ((m + 1) % opts.finite_check_every == 0 || m + 1 == M))
      check_finite(u_next, m + 1);
    std::swap(u_prev, u);
    std::swap(u, u_next);
    record(m + 1, u);
    if (record_history && hist.stride == 1) hist.fields.push_back(u);
  }
  if (record_history) res.history = std::move(hist);
  return res;
}

Grid2 adjoint_gradient(const VelocityModel& v, const AcquisitionGeometry& geom, const AbsorberConfig& absorber,
                       int source, const Grid2& adjoint_source, const WavefieldHistory& history,
                       const PropagatorOptions& opts) {
  const Medium med(v, absorber, geom.dt / std::max(opts.substeps, 1));
  const Layout lay = make_layout(v, geom, absorber, med, source, opts);
  require(adjoint_source.rows() == geom.num_receivers() &&
              adjoint_source.cols() == static_cast<std::size_t>(geom.nt),
          ErrorKind::shape, "adjoint source dims do not match geometry");
  require(history.fingerprint == fingerprint(v, geom, absorber, source, lay.substeps) &&
              history.total_steps == lay.total_steps && history.field_size == med.size,
          ErrorKind::shape, "wavefield history was recorded for a different model, geometry or source");
  const int M = lay.total_steps;
  const int k = lay.substeps;

  HistoryView hv(history, med, lay, geom);
  std::vector<double> lam2(med.size, 0.0), lam1(med.size, 0.0), lam0(med.size, 0.0);
  std::vector<double> y(med.size, 0.0), ly(med.size, 0.0), image(med.size, 0.0);

  // ubar^m += R^T g_{m/k} on record samples.
  auto inject = [&](int m, std::vector<double>& ubar) {
    if (m % k != 0) return;
    const std::size_t n = static_cast<std::size_t>(m / k);
    for (std::size_t r = 0; r < lay.receiver_idx.size(); ++r) ubar[lay.receiver_idx[r]] += adjoint_source(r, n);
  };
  Pml pml_bar = med.make_pml(), scratch = med.make_pml();

  std::fill(lam1.begin(), lam1.end(), 0.0);
  inject(M, lam1);
  med.zero_surface(lam1);

  for (int m = M - 1; m >= 0; --m) {
    hv.prepare(m);
    const auto& un = hv.field(m + 1);
    const auto& uc = hv.field(m);
    const auto& up = hv.field(m - 1);
    for (std::size_t i = 1; i < med.NZ; ++i) {
      const std::size_t row = med.idx(i, 0);
      for (std::size_t q = row; q < row + med.NX; ++q)
        image[q] += lam1[q] * (un[q] - 2.0 * uc[q] + up[q]);
    }
    if (m == 0) break;
    for (std::size_t q = 0; q < med.size; ++q) y[q] = med.c[q] * lam1[q];
    med.fill_top_halo(y);
    med.laplacian(y, ly);
    std::fill(lam0.begin(), lam0.end(), 0.0);
    for (std::size_t i = 1; i < med.NZ; ++i) {
      const std::size_t row = med.idx(i, 0);
      for (std::size_t q = row; q < row + med.NX; ++q) lam0[q] = 2.0 * lam1[q] + ly[q] - lam2[q];
    }
    med.absorb_adjoint(y, pml_bar, scratch, lam0);
    inject(m, lam0);
    med.zero_surface(lam0);
    std::swap(lam2, lam1);
    std::swap(lam1, lam0);
  }

  for (std::size_t q = 0; q < med.size; ++q) image[q] = med.vel[q] > 0.0 ? 2.0 * image[q] / med.vel[q] : 0.0;
  Grid2 grad = fold_to_model(med, image);
  require(grad.all_finite(), ErrorKind::numerical, "non-finite adjoint gradient");
  return grad;
}

ShotRecord linearized_shot(const VelocityModel& v, const AcquisitionGeometry& geom,
                           const AbsorberConfig& absorber, int source, const Grid2& dv,
                           const PropagatorOptions& opts) {
  require(dv.rows() == v.nz() && dv.cols() == v.nx(), ErrorKind::shape, "linearized_shot: dv dims mismatch");
  const Medium med(v, absorber, geom.dt / std::max(opts.substeps, 1));
  const Layout lay = make_layout(v, geom, absorber, med, source, opts);
  const int M = lay.total_steps;
  const int k = lay.substeps;
  const std::vector<double> dvp = pad_from_model(med, dv);
  std::vector<double> dc(med.size, 0.0);
  for (std::size_t q = 0; q < med.size; ++q) dc[q] = 2.0 * med.vel[q] * lay.dt_inner * lay.dt_inner * dvp[q];

  ShotRecord out{source, Grid2(geom.num_receivers(), static_cast<std::size_t>(geom.nt)), geom.dt};
  std::vector<double> u_prev(med.size, 0.0), u(med.size, 0.0), u_next(med.size, 0.0), lap(med.size, 0.0);
  std::vector<double> d_prev(med.size, 0.0), d(med.size, 0.0), d_next(med.size, 0.0), dlap(med.size, 0.0);
  Pml pml = med.make_pml(), dpml = med.make_pml();
  for (int m = 0; m < M; ++m) {
    step(med, lay, geom, m, u_prev, u, u_next, lap, pml);  // lap now holds the full bracket for u^m
    med.laplacian(d, dlap);
    med.absorb(d, dpml, dlap);
    for (std::size_t i = 1; i < med.NZ; ++i) {
      const std::size_t row = med.idx(i, 0);
      for (std::size_t q = row; q < row + med.NX; ++q)
        d_next[q] = 2.0 * d[q] - d_prev[q] + med.c[q] * dlap[q] + dc[q] * lap[q];
    }
    med.zero_surface(d_next);
    med.fill_top_halo(d_next);
    std::swap(u_prev, u);
    std::swap(u, u_next);
    std::swap(d_prev, d);
    std::swap(d, d_next);
    if ((m + 1) % k == 0) {
      const std::size_t n = static_cast<std::size_t>((m + 1) / k);
      for (std::size_t r = 0; r < lay.receiver_idx.size(); ++r) out.traces(r, n) = d[lay.receiver_idx[r]];
    }
  }
  return out;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

DataSet simulate(const VelocityModel& v, const AcquisitionGeometry& geom, const AbsorberConfig& absorber,
                 const PropagatorOptions& opts) {
  DataSet ds;
  ds.shots.resize(geom.num_sources());
  parallel_for(geom.num_sources(), opts.threads, [&](std::size_t s) {
    ds.shots[s] = forward_shot(v, geom, absorber, static_cast<int>(s), false, opts).record;
  });
  return ds;
}

MisfitGradient misfit_and_gradient(const VelocityModel& v, const AcquisitionGeometry& geom,
                                   const AbsorberConfig& absorber, const DataSet& observed,
                                   const RecordMisfit& misfit, const PropagatorOptions& opts) {
  observed.check_against(geom);
  const std::size_t ns = geom.num_sources();
  MisfitGradient out;
  out.shot_losses.assign(ns, 0.0);
  out.shot_gradients.assign(ns, Grid2());
  parallel_for(ns, opts.threads, [&](std::size_t s) {
    const int src = static_cast<int>(s);
    ShotResult fw = forward_shot(v, geom, absorber, src, true, opts);
    const MisfitValue mv = misfit(fw.record, observed.shots[s]);
    out.shot_losses[s] = mv.value;
    out.shot_gradients[s] = adjoint_gradient(v, geom, absorber, src, mv.adjoint_source, *fw.history, opts);
  });
  out.gradient = Grid2(v.nz(), v.nx());
  for (std::size_t s = 0; s < ns; ++s) {
    out.loss += out.shot_losses[s];
    out.gradient += out.shot_gradients[s];
  }
  require(std::isfinite(out.loss), ErrorKind::numerical, "non-finite misfit value");
  return out;
}

}  // namespace fwi
