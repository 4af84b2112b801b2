#include "fwi/misfit.hpp"

#include <algorithm>
#include <cmath>

#include "fwi/error.hpp"

namespace fwi {
namespace {

void check_shapes(const ShotRecord& sim, const ShotRecord& obs) {
  require(sim.traces.same_shape(obs.traces), ErrorKind::shape,
          "misfit: simulated and observed records differ in shape");
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

MisfitKind parse_misfit_kind(const std::string& name) {
  if (name == "l2") return MisfitKind::l2;
  if (name == "w1") return MisfitKind::w1;
  fail(ErrorKind::config, "misfit: unknown kind '" + name + "' (expected l2 or w1)");
}

std::string to_string(MisfitKind kind) { return kind == MisfitKind::l2 ? "l2" : "w1"; }

MisfitValue l2_misfit(const ShotRecord& sim, const ShotRecord& obs) {
  check_shapes(sim, obs);
  MisfitValue out{0.0, Grid2(sim.traces.rows(), sim.traces.cols())};
  auto s = sim.traces.values();
  auto o = obs.traces.values();
  auto g = out.adjoint_source.values();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double r = s[i] - o[i];
    out.value += r * r * sim.dt;
    g[i] = 2.0 * r * sim.dt;
  }
  return out;
}

NormalizedPair normalize_positive(std::span<const double> sim, std::span<const double> obs, double dt,
                                  const W1Options& opts) {
  require(sim.size() == obs.size() && sim.size() >= 2, ErrorKind::shape,
          "normalize_positive: traces must have equal length >= 2");
  const auto [smin, smax] = std::minmax_element(sim.begin(), sim.end());
  const auto [omin, omax] = std::minmax_element(obs.begin(), obs.end());
  const double lo = std::min(*smin, *omin);
  const double hi = std::max(*smax, *omax);
  const std::size_t n = sim.size();

  NormalizedPair out;
  out.sim.dt = out.obs.dt = dt;
  if (!(hi > lo)) {
    out.degenerate = true;
    out.sim.masses.assign(n, 1.0 / static_cast<double>(n));
    out.obs.masses = out.sim.masses;
    return out;
  }
  out.shift = -lo + opts.beta * (hi - lo) + opts.eps0;
  auto fill = [&](std::span<const double> a, TraceDistribution& d, double& z) {
    z = 0.0;
    for (double x : a) z += x + out.shift;
    d.masses.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.masses[i] = (a[i] + out.shift) / z;
  };
  fill(sim, out.sim, out.z_sim);
  fill(obs, out.obs, out.z_obs);
  return out;
}

double w1_trace(const TraceDistribution& p, const TraceDistribution& q) {
  require(p.masses.size() == q.masses.size(), ErrorKind::shape, "w1_trace: length mismatch");
  double cp = 0.0, cq = 0.0, total = 0.0;
  // The final CDF difference is identically zero and is left out.
  for (std::size_t t = 0; t + 1 < p.masses.size(); ++t) {
    cp += p.masses[t];
    cq += q.masses[t];
    total += std::abs(cp - cq);
  }
  return total * p.dt;
}

MisfitValue w1_misfit(const ShotRecord& sim, const ShotRecord& obs, const W1Options& opts) {
  check_shapes(sim, obs);
  const std::size_t nr = sim.traces.rows();
  const std::size_t nt = sim.traces.cols();
  MisfitValue out{0.0, Grid2(nr, nt)};
  std::vector<double> tail(nt);
  for (std::size_t r = 0; r < nr; ++r) {
    const NormalizedPair np = normalize_positive(sim.traces.row(r), obs.traces.row(r), sim.dt, opts);
    out.value += w1_trace(np.sim, np.obs);
    if (np.degenerate) continue;

    // dW/dp_i = dt * sum_{t >= i} sign(P_t - Q_t)
    std::vector<double> diff_sign(nt, 0.0);
    double cp = 0.0, cq = 0.0;
    for (std::size_t t = 0; t + 1 < nt; ++t) {
      cp += np.sim.masses[t];
      cq += np.obs.masses[t];
      diff_sign[t] = sign(cp - cq);
    }
    double acc = 0.0;
    for (std::size_t i = nt; i-- > 0;) {
      acc += diff_sign[i];
      tail[i] = acc * sim.dt;
    }
    // Pull back through p_i = (a_i + c) / Z: dp_i/da_k = (delta_ik - p_i) / Z.
    double mean = 0.0;
    for (std::size_t i = 0; i < nt; ++i) mean += tail[i] * np.sim.masses[i];
    auto g = out.adjoint_source.row(r);
    for (std::size_t k = 0; k < nt; ++k) g[k] = (tail[k] - mean) / np.z_sim;
  }
  return out;
}

RecordMisfit make_misfit(MisfitKind kind) {
  if (kind == MisfitKind::l2) return [](const ShotRecord& s, const ShotRecord& o) { return l2_misfit(s, o); };
  return [](const ShotRecord& s, const ShotRecord& o) { return w1_misfit(s, o); };
}

TvValue total_variation(const Grid2& grid, double eps) {
  require(eps > 0.0, ErrorKind::config, "tv: eps must be > 0");
  const std::size_t nz = grid.rows(), nx = grid.cols();
  TvValue out{0.0, Grid2(nz, nx)};
  Grid2& g = out.gradient;
  for (std::size_t i = 0; i < nz; ++i)
    for (std::size_t j = 0; j < nx; ++j) {
      const double dxv = j + 1 < nx ? grid(i, j + 1) - grid(i, j) : 0.0;
      const double dzv = i + 1 < nz ? grid(i + 1, j) - grid(i, j) : 0.0;
      const double mag = std::sqrt(dxv * dxv + dzv * dzv + eps * eps);
      out.value += mag;
      const double gx = dxv / mag, gz = dzv / mag;
      if (j + 1 < nx) {
        g(i, j + 1) += gx;
        g(i, j) -= gx;
      }
      if (i + 1 < nz) {
        g(i + 1, j) += gz;
        g(i, j) -= gz;
      }
    }
  return out;
}

}  // namespace fwi
