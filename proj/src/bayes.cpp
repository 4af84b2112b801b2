#include "fwi/bayes.hpp"

#include <algorithm>
#include <cmath>

#include "fwi/ad/ops.hpp"
#include "fwi/error.hpp"

namespace fwi {
namespace {

constexpr std::uint32_t pretrain_stream = 0x70726574;
constexpr std::uint32_t invert_stream = 0x696e7672;
constexpr std::uint32_t cm_stream = 0x636d3030;

void check_finite(double x, const std::string& what, int iter) {
  require(std::isfinite(x), ErrorKind::numerical, what + " is not finite at iteration " + std::to_string(iter));
}

bool log_due(const InversionConfig& cfg, int iter, int last) {
  return iter == 1 || iter == last || (iter - 1) % cfg.log_every == 0;
}

IterationLog make_log(int iter, double data, double tv, const Grid2& v, const FwiProblem& problem) {
  IterationLog l{iter, data, tv, std::nullopt};
  if (problem.truth) l.metrics = evaluate(v, *problem.truth);
  return l;
}

// One Adam-driven net loop shared by the proposed method and DNN-FWI.
InvertResult net_loop(const SkipNet& net, ParamVector mu, const FwiProblem& problem, const InversionConfig& cfg,
                      MisfitKind misfit, double alpha, bool masked) {
  ad::AdamState adam;
  InvertResult out;
  for (int it = 1; it <= cfg.invert_iters; ++it) {
    std::optional<MaskSet> masks;
    if (masked) masks = sample_masks(net.config(), step_seed(cfg.mask_seed, invert_stream, static_cast<std::uint64_t>(it)));
    Objective obj = objective(net, mu, masks ? &*masks : nullptr, problem, misfit, alpha, cfg.tv_eps);
    check_finite(obj.loss_data + obj.loss_tv, "inversion loss", it);
    for (const auto& g : obj.grads) require(g.all_finite(), ErrorKind::numerical,
                                            "inversion gradient is not finite at iteration " + std::to_string(it));
    if (log_due(cfg, it, cfg.invert_iters)) out.log.push_back(make_log(it, obj.loss_data, obj.loss_tv, obj.velocity, problem));
    ad::adam_step(mu.arrays, obj.grads, adam, cfg.lr_invert);
  }
  out.mu = std::move(mu);
  return out;
}

}  // namespace

void InversionConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    fail(ErrorKind::config, "inversion." + field + ": " + why);
  };
  if (!(alpha >= 0.0 && std::isfinite(alpha))) bad("alpha", "must be >= 0");
  if (!(lr_pretrain > 0.0)) bad("lr_pretrain", "must be > 0");
  if (!(lr_invert > 0.0)) bad("lr_invert", "must be > 0");
  if (!(lr_grid > 0.0)) bad("lr_grid", "must be > 0");
  if (pretrain_iters < 1) bad("pretrain_iters", "must be >= 1");
  if (invert_iters < 1) bad("invert_iters", "must be >= 1");
  if (!(pretrain_eps > 0.0)) bad("pretrain_eps", "must be > 0");
  if (mc_samples < 1) bad("mc_samples", "must be >= 1");
  if (!(tv_eps > 0.0)) bad("tv_eps", "must be > 0");
  if (log_every < 1) bad("log_every", "must be >= 1");
}

std::uint64_t step_seed(std::uint64_t base, std::uint32_t stream, std::uint64_t iter) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = base ^ (static_cast<std::uint64_t>(stream) << 32) ^ (iter * 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

PretrainResult pretrain(const SkipNet& net, ParamVector mu, const Grid2& v_ini, const InversionConfig& cfg) {
  cfg.validate();
  require(v_ini.rows() == net.nz() && v_ini.cols() == net.nx(), ErrorKind::shape,
          "pretrain: v_ini is " + std::to_string(v_ini.rows()) + "x" + std::to_string(v_ini.cols()) +
              " but the net generates " + std::to_string(net.nz()) + "x" + std::to_string(net.nx()));
  const double range = net.config().v_max - net.config().v_min;
  const ad::Array4 target = to_array(v_ini);
  ad::AdamState adam;
  PretrainResult out;
  for (int it = 1; it <= cfg.pretrain_iters; ++it) {
    const MaskSet masks = sample_masks(net.config(), step_seed(cfg.mask_seed, pretrain_stream, static_cast<std::uint64_t>(it)));
    SkipNet::Pass pass = net.forward(mu, &masks);
    const ad::Var loss = ad::mean_abs_diff(pass.graph, pass.output, target);
    const double value = pass.graph.value(loss)[0] / range;
    check_finite(value, "pretraining loss", it);
    out.losses.push_back(value);
    out.iterations = it;
    if (value < cfg.pretrain_eps) break;
    pass.graph.backward(loss, ad::Array4(1, 1, 1, 1, 1.0 / range));
    std::vector<ad::Array4> grads;
    for (ad::Var p : pass.params) grads.push_back(pass.graph.grad(p));
    ad::adam_step(mu.arrays, grads, adam, cfg.lr_pretrain);
  }
  mu.pretrained = true;
  out.mu = std::move(mu);
  return out;
}

Objective objective(const SkipNet& net, const ParamVector& mu, const MaskSet* masks, const FwiProblem& problem,
                    MisfitKind misfit, double alpha, double tv_eps) {
  SkipNet::Pass pass = net.forward(mu, masks);
  Objective obj;
  obj.velocity = to_grid(pass.graph.value(pass.output));
  const VelocityModel v(obj.velocity, problem.dx);
  MisfitGradient mg = misfit_and_gradient(v, problem.geom, problem.absorber, problem.observed, make_misfit(misfit),
                                          problem.prop);
  obj.loss_data = mg.loss;
  Grid2 dv = std::move(mg.gradient);
  const TvValue tv = total_variation(obj.velocity, tv_eps);
  obj.loss_tv = alpha * tv.value;
  for (std::size_t i = 0; i < dv.size(); ++i) dv.values()[i] += alpha * tv.gradient.values()[i];
  obj.grads = SkipNet::backprop(pass, dv);
  return obj;
}

InvertResult invert(const SkipNet& net, ParamVector mu0, const FwiProblem& problem, const InversionConfig& cfg,
                    bool allow_unpretrained) {
  cfg.validate();
  require(mu0.pretrained || allow_unpretrained, ErrorKind::config,
          "invert: parameters were not pretrained (run pretraining first or set allow_unpretrained)");
  problem.observed.check_against(problem.geom);
  InvertResult out = net_loop(net, std::move(mu0), problem, cfg, cfg.misfit, cfg.alpha, true);
  out.mu.pretrained = true;
  return out;
}

Grid2 infer_cm(const SkipNet& net, const ParamVector& mu, int samples, std::uint64_t seed) {
  require(samples >= 1, ErrorKind::config, "infer_cm: samples must be >= 1");
  Grid2 mean(net.nz(), net.nx());
  for (int k = 1; k <= samples; ++k) {
    const MaskSet masks = sample_masks(net.config(), step_seed(seed, cm_stream, static_cast<std::uint64_t>(k)));
    const Grid2 x = net.generate(mu, &masks);
    const double inv_k = 1.0 / static_cast<double>(k);
    for (std::size_t i = 0; i < mean.size(); ++i) mean.values()[i] += (x.values()[i] - mean.values()[i]) * inv_k;
  }
  for (double& x : mean.values()) x = std::clamp(x, net.config().v_min, net.config().v_max);
  return mean;
}

GridResult run_grid_fwi(const Grid2& v_ini, const FwiProblem& problem, MisfitKind misfit, const InversionConfig& cfg,
                        double v_lo, double v_hi) {
  cfg.validate();
  require(v_lo > 0.0 && v_lo < v_hi, ErrorKind::config, "grid fwi: need 0 < v_lo < v_hi");
  problem.observed.check_against(problem.geom);
  const RecordMisfit fn = make_misfit(misfit);
  std::vector<ad::Array4> params{to_array(v_ini)};
  ad::AdamState adam;
  GridResult out;
  for (int it = 1; it <= cfg.invert_iters; ++it) {
    const Grid2 cur = to_grid(params[0]);
    MisfitGradient mg = misfit_and_gradient(VelocityModel(cur, problem.dx), problem.geom, problem.absorber,
                                            problem.observed, fn, problem.prop);
    check_finite(mg.loss, "grid fwi loss", it);
    if (log_due(cfg, it, cfg.invert_iters)) out.log.push_back(make_log(it, mg.loss, 0.0, cur, problem));
    ad::adam_step(params, {to_array(mg.gradient)}, adam, cfg.lr_grid);
    for (double& x : params[0].values()) x = std::clamp(x, v_lo, v_hi);
  }
  out.estimate = to_grid(params[0]);
  return out;
}

InvertResult run_dnn_fwi(const SkipNet& net, ParamVector mu0, const FwiProblem& problem, const InversionConfig& cfg) {
  cfg.validate();
  problem.observed.check_against(problem.geom);
  return net_loop(net, std::move(mu0), problem, cfg, MisfitKind::l2, 0.0, false);
}

}  // namespace fwi
