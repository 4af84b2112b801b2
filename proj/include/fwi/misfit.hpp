#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fwi/grid.hpp"
#include "fwi/model.hpp"

namespace fwi {

struct MisfitValue {
  double value = 0.0;
  Grid2 adjoint_source;  // d value / d sim, same shape as sim.traces
};

using RecordMisfit = std::function<MisfitValue(const ShotRecord& sim, const ShotRecord& obs)>;

enum class MisfitKind { l2, w1 };

MisfitKind parse_misfit_kind(const std::string& name);
std::string to_string(MisfitKind kind);

/// sum (sim - obs)^2 dt, adjoint 2 (sim - obs) dt.
MisfitValue l2_misfit(const ShotRecord& sim, const ShotRecord& obs);

/// Nonnegative masses on a uniform time grid, summing to one.
struct TraceDistribution {
  std::vector<double> masses;
  double dt = 1.0;
};

struct W1Options {
  double beta = 0.1;   // margin as a fraction of the joint range
  double eps0 = 1e-12;
};

/// p_i = (a_i + c) / Z with a shift c shared by the pair. The shift is
/// treated as a constant when differentiating.
struct NormalizedPair {
  TraceDistribution sim;
  TraceDistribution obs;
  double shift = 0.0;
  double z_sim = 1.0;
  double z_obs = 1.0;
  bool degenerate = false;  // zero joint range; both distributions uniform
};

NormalizedPair normalize_positive(std::span<const double> sim, std::span<const double> obs, double dt,
                                  const W1Options& opts = {});

/// sum_t |CDF_p(t) - CDF_q(t)| dt.
double w1_trace(const TraceDistribution& p, const TraceDistribution& q);

/// Sum of trace-wise W1 distances between normalized trace pairs, with the
/// exact derivative with respect to the raw simulated samples.
MisfitValue w1_misfit(const ShotRecord& sim, const ShotRecord& obs, const W1Options& opts = {});

RecordMisfit make_misfit(MisfitKind kind);

struct TvValue {
  double value = 0.0;
  Grid2 gradient;
};

/// Smoothed isotropic total variation sum sqrt(dx^2 + dz^2 + eps^2) with
/// forward differences; the difference past the last row/column is zero.
TvValue total_variation(const Grid2& grid, double eps);

}  // namespace fwi
