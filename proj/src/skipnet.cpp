#include "fwi/skipnet.hpp"

#include <cmath>
#include <random>

#include "fwi/ad/ops.hpp"
#include "fwi/error.hpp"

namespace fwi {
namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  return std::mt19937_64(seq);
}

std::size_t in_channels(const SkipNetConfig& cfg, int level) {
  return level == 0 ? 1 : static_cast<std::size_t>(cfg.channels[level - 1]);
}

std::size_t up_in_channels(const SkipNetConfig& cfg, int level) {
  const int below = level == cfg.depth - 1 ? cfg.channels[level] : cfg.channels[level + 1];
  return static_cast<std::size_t>(below + cfg.skip_channels[level]);
}

std::size_t padded(std::size_t n, int depth) {
  const std::size_t m = std::size_t{1} << depth;
  return (n + m - 1) / m * m;
}

std::vector<ad::Array4> draw_masks(const std::vector<int>& channels, double keep, std::mt19937_64& rng) {
  std::vector<ad::Array4> out;
  if (keep >= 1.0) return out;
  std::bernoulli_distribution b(keep);
  for (int c : channels) {
    ad::Array4 m(1, static_cast<std::size_t>(c), 1, 1);
    for (double& x : m.values()) x = b(rng) ? 1.0 : 0.0;
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

void SkipNetConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) { fail(ErrorKind::config, "net." + field + ": " + why); };
  if (depth < 1) bad("depth", "must be >= 1");
  if (channels.size() != static_cast<std::size_t>(depth)) bad("channels", "needs one entry per level");
  if (skip_channels.size() != static_cast<std::size_t>(depth)) bad("skip_channels", "needs one entry per level");
  for (int c : channels)
    if (c < 1) bad("channels", "entries must be >= 1");
  for (int c : skip_channels)
    if (c < 1) bad("skip_channels", "entries must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) bad("kernel", "must be odd and >= 1");
  if (skip_kernel < 1 || skip_kernel % 2 == 0) bad("skip_kernel", "must be odd and >= 1");
  if (!(slope >= 0.0 && slope < 1.0)) bad("slope", "must be in [0, 1)");
  for (auto [name, p] : {std::pair{"keep_down", keep_down}, {"keep_up", keep_up}, {"keep_skip", keep_skip}})
    if (!(p > 0.0 && p <= 1.0)) bad(name, "must be in (0, 1]");
  if (!(std::isfinite(v_min) && std::isfinite(v_max) && v_min > 0.0 && v_min < v_max))
    bad("v_min", "need 0 < v_min < v_max");
  if (!(z0_amplitude > 0.0 && std::isfinite(z0_amplitude))) bad("z0_amplitude", "must be > 0");
}

SkipNetConfig SkipNetConfig::deterministic() const {
  SkipNetConfig c = *this;
  c.keep_down = c.keep_up = c.keep_skip = 1.0;
  return c;
}

std::size_t ParamVector::count() const {
  std::size_t n = 0;
  for (const auto& a : arrays) n += a.size();
  return n;
}

std::size_t parameter_count(const SkipNetConfig& cfg) {
  cfg.validate();
  const auto k2 = static_cast<std::size_t>(cfg.kernel * cfg.kernel);
  const auto ks2 = static_cast<std::size_t>(cfg.skip_kernel * cfg.skip_kernel);
  std::size_t n = 0;
  for (int i = 0; i < cfg.depth; ++i) {
    const auto cd = static_cast<std::size_t>(cfg.channels[i]);
    const auto cs = static_cast<std::size_t>(cfg.skip_channels[i]);
    n += cd * in_channels(cfg, i) * k2 + 2 * cd;
    n += cs * in_channels(cfg, i) * ks2 + 2 * cs;
    n += cd * up_in_channels(cfg, i) * k2 + 2 * cd;
  }
  return n + static_cast<std::size_t>(cfg.channels[0]) + 1;
}

ParamVector build(const SkipNetConfig& cfg, std::uint64_t init_seed) {
  cfg.validate();
  ParamVector pv;
  auto rng = make_rng(init_seed, 0x696e6974);
  std::normal_distribution<double> normal;
  auto kernel = [&](const std::string& name, std::size_t cout, std::size_t cin, int k, double gain) {
    ad::Array4 w(cout, cin, static_cast<std::size_t>(k), static_cast<std::size_t>(k));
    const double std = std::sqrt(gain / static_cast<double>(cin * static_cast<std::size_t>(k * k)));
    for (double& x : w.values()) x = std * normal(rng);
    pv.arrays.push_back(std::move(w));
    pv.names.push_back(name);
  };
  auto norm = [&](const std::string& name, std::size_t c) {
    pv.arrays.emplace_back(1, c, 1, 1, 1.0);
    pv.names.push_back(name + ".gain");
    pv.arrays.emplace_back(1, c, 1, 1, 0.0);
    pv.names.push_back(name + ".shift");
  };
  const double leaky_gain = 2.0 / (1.0 + cfg.slope * cfg.slope);
  for (int i = 0; i < cfg.depth; ++i) {
    const std::string lv = std::to_string(i);
    const auto cd = static_cast<std::size_t>(cfg.channels[i]);
    const auto cs = static_cast<std::size_t>(cfg.skip_channels[i]);
    kernel("down" + lv + ".kernel", cd, in_channels(cfg, i), cfg.kernel, leaky_gain);
    norm("down" + lv + ".norm", cd);
    kernel("skip" + lv + ".kernel", cs, in_channels(cfg, i), cfg.skip_kernel, leaky_gain);
    norm("skip" + lv + ".norm", cs);
    kernel("up" + lv + ".kernel", cd, up_in_channels(cfg, i), cfg.kernel, leaky_gain);
    norm("up" + lv + ".norm", cd);
  }
  kernel("head.kernel", 1, static_cast<std::size_t>(cfg.channels[0]), 1, 1.0);
  pv.arrays.emplace_back(1, 1, 1, 1, 0.0);
  pv.names.push_back("head.bias");
  return pv;
}

MaskSet sample_masks(const SkipNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  MaskSet ms;
  ms.seed = seed;
  auto rng = make_rng(seed, 0x6d61736b);
  ms.skip = draw_masks(cfg.skip_channels, cfg.keep_skip, rng);
  ms.down = draw_masks(cfg.channels, cfg.keep_down, rng);
  ms.up = draw_masks(cfg.channels, cfg.keep_up, rng);
  return ms;
}

MaskSet ones_masks(const SkipNetConfig& cfg) {
  MaskSet ms;
  for (int c : cfg.skip_channels) ms.skip.emplace_back(1, static_cast<std::size_t>(c), 1, 1, 1.0);
  for (int c : cfg.channels) {
    ms.down.emplace_back(1, static_cast<std::size_t>(c), 1, 1, 1.0);
    ms.up.emplace_back(1, static_cast<std::size_t>(c), 1, 1, 1.0);
  }
  return ms;
}

SkipNet::SkipNet(SkipNetConfig cfg, std::size_t nz, std::size_t nx) : cfg_(std::move(cfg)), nz_(nz), nx_(nx) {
  cfg_.validate();
  const std::size_t H = padded(nz, cfg_.depth), W = padded(nx, cfg_.depth);
  const std::size_t bottom_h = H >> cfg_.depth, bottom_w = W >> cfg_.depth;
  if (nz == 0 || nx == 0 || bottom_h < 2 || bottom_w < 2)
    fail(ErrorKind::config, "net.depth: grid " + std::to_string(nz) + "x" + std::to_string(nx) + " is too small for " +
                                std::to_string(cfg_.depth) + " halvings (coarsest level must be at least 2x2)");
  z0_ = ad::Array4(1, 1, H, W);
  auto rng = make_rng(cfg_.z0_seed, 0x7a30);
  std::uniform_real_distribution<double> u(0.0, cfg_.z0_amplitude);
  for (std::size_t y = 0; y < nz; ++y)
    for (std::size_t x = 0; x < nx; ++x) z0_(0, 0, y, x) = u(rng);
}

SkipNet::Pass SkipNet::forward(const ParamVector& params, const MaskSet* masks) const {
  const std::size_t expected = static_cast<std::size_t>(cfg_.depth) * 9 + 2;
  require(params.arrays.size() == expected, ErrorKind::shape,
          "skipnet: expected " + std::to_string(expected) + " parameter arrays, got " +
              std::to_string(params.arrays.size()));
  Pass pass;
  ad::Graph& g = pass.graph;
  for (const auto& a : params.arrays) pass.params.push_back(g.parameter(a));
  auto P = [&](std::size_t i) { return pass.params[i]; };
  auto mask = [&](ad::Var x, const std::vector<ad::Array4>* set, int level) {
    if (masks == nullptr || set->empty()) return x;
    return ad::apply_mask(g, x, set->at(static_cast<std::size_t>(level)));
  };
  auto block = [&](ad::Var x, std::size_t base, int stride) {
    ad::Var y = ad::conv2d(g, x, P(base), std::nullopt, stride);
    y = ad::channel_norm(g, y, P(base + 1), P(base + 2));
    return ad::leaky_relu(g, y, cfg_.slope);
  };

  std::vector<ad::Var> skips(static_cast<std::size_t>(cfg_.depth));
  ad::Var x = g.constant(z0_);
  for (int i = 0; i < cfg_.depth; ++i) {
    const std::size_t base = static_cast<std::size_t>(i) * 9;
    skips[static_cast<std::size_t>(i)] = mask(block(x, base + 3, 1), masks ? &masks->skip : nullptr, i);
    x = mask(block(x, base, 2), masks ? &masks->down : nullptr, i);
  }
  for (int i = cfg_.depth - 1; i >= 0; --i) {
    const std::size_t base = static_cast<std::size_t>(i) * 9;
    ad::Var y = ad::concat_channels(g, ad::upsample2x(g, x), skips[static_cast<std::size_t>(i)]);
    x = mask(block(y, base + 6, 1), masks ? &masks->up : nullptr, i);
  }
  const std::size_t head = static_cast<std::size_t>(cfg_.depth) * 9;
  ad::Var out = ad::conv2d(g, x, P(head), P(head + 1), 1);
  out = ad::crop(g, out, nz_, nx_);
  pass.output = ad::scaled_sigmoid(g, out, cfg_.v_min, cfg_.v_max);
  return pass;
}

Grid2 SkipNet::generate(const ParamVector& params, const MaskSet* masks) const {
  Pass pass = forward(params, masks);
  return to_grid(pass.graph.value(pass.output));
}

std::vector<ad::Array4> SkipNet::backprop(Pass& pass, const Grid2& dv) {
  pass.graph.backward(pass.output, to_array(dv));
  std::vector<ad::Array4> grads;
  grads.reserve(pass.params.size());
  for (ad::Var p : pass.params) grads.push_back(pass.graph.grad(p));
  return grads;
}

Grid2 to_grid(const ad::Array4& a) {
  require(a.n() == 1 && a.c() == 1, ErrorKind::shape, "to_grid: expected a single plane");
  return Grid2(a.h(), a.w(), std::vector<double>(a.values().begin(), a.values().end()));
}

ad::Array4 to_array(const Grid2& g) {
  return ad::Array4({1, 1, g.rows(), g.cols()}, std::vector<double>(g.values().begin(), g.values().end()));
}

}  // namespace fwi
