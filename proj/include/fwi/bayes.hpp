#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fwi/ad/adam.hpp"
#include "fwi/metrics.hpp"
#include "fwi/misfit.hpp"
#include "fwi/skipnet.hpp"
#include "fwi/wave.hpp"

namespace fwi {

struct InversionConfig {
  double alpha = 6e-7;  // TV weight
  double lr_pretrain = 0.01;
  double lr_invert = 5e-4;
  double lr_grid = 10.0;  // m/s per Adam step, grid baselines only
  int pretrain_iters = 5000;
  int invert_iters = 1000;
  /// Pretraining stops once mean |m - v_ini| / (v_max - v_min) falls below this.
  double pretrain_eps = 1e-3;
  int mc_samples = 50;
  MisfitKind misfit = MisfitKind::w1;
  double tv_eps = 1e-3;
  std::uint64_t init_seed = 1;
  std::uint64_t mask_seed = 2;
  std::uint64_t cm_seed = 3;
  int log_every = 1;

  void validate() const;
};

/// Everything the data term needs: geometry, boundary, observations.
struct FwiProblem {
  AcquisitionGeometry geom;
  AbsorberConfig absorber;
  DataSet observed;
  double dx = 1.0;
  PropagatorOptions prop;
  std::optional<Grid2> truth;  // enables metric logging
};

struct IterationLog {
  int iter = 0;
  double loss_data = 0.0;
  double loss_tv = 0.0;  // alpha * TV
  std::optional<MetricReport> metrics;
};

struct PretrainResult {
  ParamVector mu;
  int iterations = 0;
  std::vector<double> losses;
};

struct InvertResult {
  ParamVector mu;
  std::vector<IterationLog> log;
};

struct GridResult {
  Grid2 estimate;
  std::vector<IterationLog> log;
};

/// Mask seed of step `iter` in the stream `stream`.
std::uint64_t step_seed(std::uint64_t base, std::uint32_t stream, std::uint64_t iter);

PretrainResult pretrain(const SkipNet& net, ParamVector mu, const Grid2& v_ini, const InversionConfig& cfg);

struct Objective {
  double loss_data = 0.0;
  double loss_tv = 0.0;
  Grid2 velocity;
  std::vector<ad::Array4> grads;  // d(loss_data + loss_tv) / d mu
};

/// Data misfit + alpha * TV of m(z0; mu . b) and its gradient with respect
/// to mu. masks == nullptr evaluates the unmasked net.
Objective objective(const SkipNet& net, const ParamVector& mu, const MaskSet* masks, const FwiProblem& problem,
                    MisfitKind misfit, double alpha, double tv_eps);

/// Variational inversion. Refuses a mu0 that was not pretrained unless
/// allow_unpretrained is set.
InvertResult invert(const SkipNet& net, ParamVector mu0, const FwiProblem& problem, const InversionConfig& cfg,
                    bool allow_unpretrained = false);

/// Mean of M mask-sampled generations.
Grid2 infer_cm(const SkipNet& net, const ParamVector& mu, int samples, std::uint64_t seed);

/// Adam on the velocity grid itself, clamped to [v_lo, v_hi] after each step.
GridResult run_grid_fwi(const Grid2& v_ini, const FwiProblem& problem, MisfitKind misfit, const InversionConfig& cfg,
                        double v_lo, double v_hi);

/// Deterministic reparametrized FWI: unmasked net, l2 misfit, no TV.
InvertResult run_dnn_fwi(const SkipNet& net, ParamVector mu0, const FwiProblem& problem, const InversionConfig& cfg);

}  // namespace fwi
