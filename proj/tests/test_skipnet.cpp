#include <gtest/gtest.h>

#include <cmath>

#include "fwi/ad/checkpoint.hpp"
#include "fwi/error.hpp"
#include "fwi/skipnet.hpp"
#include "test_util.hpp"

using namespace fwi;
using fwi::testing::random_grid;
using fwi::testing::rel_err;

namespace {

SkipNetConfig small_config(int depth = 3, int channels = 4) {
  SkipNetConfig c;
  c.depth = depth;
  c.channels.assign(static_cast<std::size_t>(depth), channels);
  c.skip_channels.assign(static_cast<std::size_t>(depth), 2);
  c.keep_skip = 0.5;
  c.keep_down = 0.8;
  c.keep_up = 0.8;
  return c;
}

}  // namespace

TEST(SkipNet, ReferenceParameterCount) {
  const SkipNetConfig c;
  EXPECT_EQ(parameter_count(c), 1356077u);
  EXPECT_EQ(build(c, 1).count(), 1356077u);
}

TEST(SkipNet, CountMatchesBuildForOtherShapes) {
  SkipNetConfig c = small_config(2, 3);
  c.channels = {3, 5};
  c.skip_channels = {1, 2};
  c.skip_kernel = 3;
  const ParamVector p = build(c, 7);
  EXPECT_EQ(p.count(), parameter_count(c));
  EXPECT_EQ(p.arrays.size(), 9u * 2 + 2);
  EXPECT_EQ(p.names.front(), "down0.kernel");
  EXPECT_EQ(p.names.back(), "head.bias");
}

TEST(SkipNet, BuildIsSeedDeterministic) {
  const SkipNetConfig c = small_config();
  EXPECT_EQ(build(c, 3).arrays, build(c, 3).arrays);
  EXPECT_NE(build(c, 3).arrays, build(c, 4).arrays);
  const SkipNet a(c, 20, 24), b(c, 20, 24);
  EXPECT_EQ(a.z0(), b.z0());
}

TEST(SkipNet, KernelInitScale) {
  SkipNetConfig c = small_config(1, 64);
  const ParamVector p = build(c, 9);
  const auto& k = p.arrays[6];  // up0.kernel, fan-in (64 + 2) * 9
  double s2 = 0.0;
  for (double v : k.values()) s2 += v * v;
  s2 /= static_cast<double>(k.size());
  EXPECT_NEAR(s2, 2.0 / 1.01 / (66.0 * 9.0), 0.1 * 2.0 / 1.01 / (66.0 * 9.0));
}

TEST(SkipNet, OutputShapeAndRange) {
  for (int depth : {1, 2, 3}) {
    const SkipNetConfig c = small_config(depth);
    const SkipNet net(c, 19, 27);
    const Grid2 m = net.generate(build(c, 1), nullptr);
    EXPECT_EQ(m.rows(), 19u);
    EXPECT_EQ(m.cols(), 27u);
    for (double v : m.values()) {
      EXPECT_GE(v, c.v_min);
      EXPECT_LE(v, c.v_max);
    }
  }
}

TEST(SkipNet, DepthOnePreservesShape) {
  const SkipNetConfig c = small_config(1);
  const SkipNet net(c, 8, 8);
  EXPECT_EQ(net.z0().dims(), (ad::Array4::Dims{1, 1, 8, 8}));
  EXPECT_EQ(net.generate(build(c, 1), nullptr).rows(), 8u);
}

TEST(SkipNet, PaddingAndTooSmallGrid) {
  const SkipNetConfig c = small_config(3);
  const SkipNet net(c, 17, 30);
  EXPECT_EQ(net.z0().dims(), (ad::Array4::Dims{1, 1, 24, 32}));
  EXPECT_EQ(net.z0()(0, 0, 20, 5), 0.0);
  for (std::size_t y = 0; y < 17; ++y)
    for (std::size_t x = 0; x < 30; ++x) {
      EXPECT_GE(net.z0()(0, 0, y, x), 0.0);
      EXPECT_LE(net.z0()(0, 0, y, x), c.z0_amplitude);
    }
  EXPECT_THROW(SkipNet(small_config(5), 16, 64), Error);
}

TEST(SkipNet, OnesMasksMatchUnmaskedPath) {
  const SkipNetConfig c = small_config();
  const SkipNet net(c, 16, 16);
  const ParamVector p = build(c, 2);
  const MaskSet ones = ones_masks(c);
  EXPECT_EQ(net.generate(p, nullptr), net.generate(p, &ones));
  const MaskSet empty = sample_masks(c.deterministic(), 5);
  EXPECT_TRUE(empty.skip.empty() && empty.down.empty() && empty.up.empty());
  EXPECT_EQ(net.generate(p, nullptr), net.generate(p, &empty));
}

TEST(SkipNet, DifferentMasksGiveDifferentOutputs) {
  const SkipNetConfig c = small_config();
  const SkipNet net(c, 16, 16);
  const ParamVector p = build(c, 2);
  const MaskSet a = sample_masks(c, 10), b = sample_masks(c, 11), a2 = sample_masks(c, 10);
  EXPECT_EQ(net.generate(p, &a), net.generate(p, &a2));
  EXPECT_NE(net.generate(p, &a), net.generate(p, &b));
}

TEST(SkipNet, MaskKeepFraction) {
  SkipNetConfig c = SkipNetConfig{};
  c.keep_skip = 0.7;
  std::size_t kept = 0, total = 0;
  for (std::uint64_t s = 0; total < 100000; ++s) {
    const MaskSet m = sample_masks(c, s);
    ASSERT_EQ(m.skip.size(), 5u);
    EXPECT_TRUE(m.down.empty());
    for (const auto& a : m.skip)
      for (double v : a.values()) {
        ASSERT_TRUE(v == 0.0 || v == 1.0);
        kept += v == 1.0;
        ++total;
      }
  }
  EXPECT_NEAR(static_cast<double>(kept) / static_cast<double>(total), 0.7, 0.01);
}

TEST(SkipNet, EveryParameterReceivesGradient) {
  const SkipNetConfig c = small_config();
  const SkipNet net(c, 16, 20);
  const ParamVector p = build(c, 3);
  SkipNet::Pass pass = net.forward(p, nullptr);
  const auto grads = SkipNet::backprop(pass, random_grid(16, 20, 4));
  ASSERT_EQ(grads.size(), p.arrays.size());
  for (std::size_t i = 0; i < grads.size(); ++i) {
    double mx = 0.0;
    for (double v : grads[i].values()) mx = std::max(mx, std::abs(v));
    EXPECT_GT(mx, 0.0) << p.names[i];
  }
}

TEST(SkipNet, GradientMatchesFiniteDifferences) {
  const SkipNetConfig c = small_config(3, 3);
  const SkipNet net(c, 16, 16);
  const ParamVector p = build(c, 5);
  const MaskSet masks = sample_masks(c, 6);
  const Grid2 w = random_grid(16, 16, 7);
  auto loss = [&](const ParamVector& q) {
    const Grid2 m = net.generate(q, &masks);
    double s = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) s += w.values()[i] * m.values()[i];
    return s;
  };
  SkipNet::Pass pass = net.forward(p, &masks);
  const auto grads = SkipNet::backprop(pass, w);

  std::mt19937_64 rng(8);
  int checked = 0;
  for (int trial = 0; checked < 20 && trial < 200; ++trial) {
    const std::size_t a = rng() % p.arrays.size();
    const std::size_t i = rng() % p.arrays[a].size();
    const double g = grads[a][i];
    if (std::abs(g) < 1e-3) continue;  // includes masked-out channels
    ParamVector hi = p, lo = p;
    const double h = 1e-6 * std::max(1.0, std::abs(p.arrays[a][i]));
    hi.arrays[a][i] += h;
    lo.arrays[a][i] -= h;
    const double fd = (loss(hi) - loss(lo)) / (2.0 * h);
    EXPECT_LT(rel_err(fd, g), 1e-5) << p.names[a] << "[" << i << "]";
    ++checked;
  }
  EXPECT_EQ(checked, 20);
}

TEST(SkipNet, SaveReloadReproducesOutput) {
  const SkipNetConfig c = small_config();
  const SkipNet net(c, 16, 16);
  const ParamVector p = build(c, 12);
  const auto path = fwi::testing::scratch_dir("skipnet") / "p.fwip";
  ad::save_params(path, p.arrays);
  ParamVector q = p;
  q.arrays = ad::load_params(path);
  const MaskSet m = sample_masks(c, 1);
  EXPECT_EQ(net.generate(p, &m), net.generate(q, &m));
}

TEST(SkipNet, ForwardRejectsWrongParameterList) {
  const SkipNetConfig c = small_config();
  const SkipNet net(c, 16, 16);
  ParamVector p = build(c, 1);
  p.arrays.pop_back();
  EXPECT_THROW(net.forward(p, nullptr), Error);
}

TEST(SkipNet, ConfigValidationNamesField) {
  SkipNetConfig c;
  c.keep_skip = 0.0;
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("net.keep_skip"), std::string::npos);
  }
  c = SkipNetConfig{};
  c.channels.pop_back();
  EXPECT_THROW(c.validate(), Error);
}
