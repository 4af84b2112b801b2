#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <functional>

#include "fwi/ad/adam.hpp"
#include "fwi/ad/checkpoint.hpp"
#include "fwi/ad/ops.hpp"
#include "fwi/error.hpp"
#include "test_util.hpp"

using namespace fwi;
using namespace fwi::ad;
using fwi::testing::random_array;
using fwi::testing::rel_err;

namespace {

using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

// loss = sum(w .* f(inputs)) with fixed random w.
double weighted_loss(const Builder& f, const std::vector<Array4>& inputs, const Array4* weights,
                     std::vector<Array4>* grads) {
  Graph g;
  std::vector<Var> vars;
  for (const auto& a : inputs) vars.push_back(g.parameter(a));
  const Var out = f(g, vars);
  const Array4 w = weights ? *weights : random_array(g.value(out).dims(), 999);
  const Var loss = sum(g, mul(g, out, g.constant(w)));
  if (grads) {
    g.backward(loss);
    grads->clear();
    for (Var v : vars) grads->push_back(g.grad(v));
  }
  return g.value(loss)[0];
}

// Fourth-order central differences keep roundoff low enough for the
// tighter per-op tolerances.
void check_gradients(const Builder& f, const std::vector<Array4>& inputs, double tol, double h = 1e-3) {
  Array4 w;
  {
    Graph g;
    std::vector<Var> vars;
    for (const auto& a : inputs) vars.push_back(g.constant(a));
    w = random_array(g.value(f(g, vars)).dims(), 999);
  }
  std::vector<Array4> grads;
  weighted_loss(f, inputs, &w, &grads);
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto at = [&](double step) {
        std::vector<Array4> x = inputs;
        x[k][i] += step;
        return weighted_loss(f, x, &w, nullptr);
      };
      const double fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      const double ad = grads[k][i];
      if (std::abs(fd) < 1e-9 && std::abs(ad) < 1e-9) continue;
      ASSERT_LT(rel_err(fd, ad), tol) << "input " << k << " element " << i << " fd " << fd << " ad " << ad;
    }
}

// <A x, y> against <x, A^T y> for a linear op of one input.
void check_adjoint(const Builder& f, const Array4& x, std::uint64_t seed, double tol = 1e-12) {
  Graph g;
  const Var vx = g.parameter(x);
  const Var out = f(g, {vx});
  const Array4 y = random_array(g.value(out).dims(), seed);
  g.backward(out, y);
  const double lhs = dot(g.value(out), y), rhs = dot(x, g.grad(vx));
  EXPECT_LT(rel_err(lhs, rhs), tol);
}

}  // namespace

TEST(Conv2d, IdentityKernel) {
  Graph g;
  const Array4 x = random_array({1, 1, 5, 7}, 1);
  const Var y = conv2d(g, g.constant(x), g.constant(Array4(1, 1, 1, 1, 1.0)), std::nullopt, 1);
  EXPECT_EQ(g.value(y), x);
}

TEST(Conv2d, OnesKernelCountsValidTaps) {
  Graph g;
  const Var y = conv2d(g, g.constant(Array4(1, 1, 6, 6, 1.0)), g.constant(Array4(1, 1, 3, 3, 1.0)),
                       g.constant(Array4(1, 1, 1, 1, 0.0)), 1);
  const Array4& v = g.value(y);
  EXPECT_EQ(v(0, 0, 0, 0), 4.0);
  EXPECT_EQ(v(0, 0, 0, 3), 6.0);
  EXPECT_EQ(v(0, 0, 3, 3), 9.0);
}

TEST(Conv2d, StrideTwoHalvesWithCeil) {
  Graph g;
  const Var y = conv2d(g, g.constant(Array4(1, 2, 7, 8)), g.constant(Array4(3, 2, 3, 3)), std::nullopt, 2);
  EXPECT_EQ(g.value(y).dims(), (Array4::Dims{1, 3, 4, 4}));
}

TEST(Conv2d, ShapeErrors) {
  Graph g;
  const Var x = g.constant(Array4(1, 2, 6, 6));
  EXPECT_THROW(conv2d(g, x, g.constant(Array4(1, 3, 3, 3)), std::nullopt, 1), Error);
  EXPECT_THROW(conv2d(g, x, g.constant(Array4(1, 2, 2, 2)), std::nullopt, 1), Error);
  EXPECT_THROW(conv2d(g, x, g.constant(Array4(1, 2, 3, 3)), std::nullopt, 3), Error);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  for (int stride : {1, 2}) {
    const Builder f = [stride](Graph& g, const std::vector<Var>& in) { return conv2d(g, in[0], in[1], in[2], stride); };
    check_gradients(f, {random_array({1, 2, 6, 6}, 2), random_array({3, 2, 3, 3}, 3), random_array({1, 3, 1, 1}, 4)},
                    1e-7);
  }
}

TEST(Conv2d, AdjointDotTest) {
  const Array4 k = random_array({3, 2, 3, 3}, 5);
  for (int stride : {1, 2})
    check_adjoint([&](Graph& g, const std::vector<Var>& in) { return conv2d(g, in[0], g.constant(k), std::nullopt, stride); },
                  random_array({2, 2, 7, 6}, 6), 7, 1e-11);
}

TEST(Upsample, ConstantStaysConstant) {
  Graph g;
  const Var y = upsample2x(g, g.constant(Array4(1, 2, 3, 4, 2.5)));
  EXPECT_EQ(g.value(y).dims(), (Array4::Dims{1, 2, 6, 8}));
  for (double v : g.value(y).values()) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(Upsample, HalfPixelWeights) {
  Graph g;
  Array4 x(1, 1, 2, 2);
  x(0, 0, 0, 0) = 0.0;
  x(0, 0, 0, 1) = 4.0;
  x(0, 0, 1, 0) = 0.0;
  x(0, 0, 1, 1) = 4.0;
  const Array4& y = g.value(upsample2x(g, g.constant(x)));
  // Output column o samples input (o + 0.5) / 2 - 0.5, clamped at 0.
  EXPECT_DOUBLE_EQ(y(0, 0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(y(0, 0, 0, 1), 1.0);
  EXPECT_DOUBLE_EQ(y(0, 0, 0, 2), 3.0);
  EXPECT_DOUBLE_EQ(y(0, 0, 0, 3), 4.0);
}

TEST(Upsample, AdjointAndGradient) {
  const Builder f = [](Graph& g, const std::vector<Var>& in) { return upsample2x(g, in[0]); };
  check_adjoint(f, random_array({2, 3, 5, 4}, 8), 9);
  check_gradients(f, {random_array({1, 2, 4, 3}, 10)}, 1e-8);
}

TEST(LeakyRelu, ValuesAndGradient) {
  Graph g;
  Array4 x(1, 1, 1, 3);
  x[0] = 2.0;
  x[1] = -1.0;
  x[2] = 0.0;
  const Array4& y = g.value(leaky_relu(g, g.constant(x)));
  EXPECT_EQ(y[0], 2.0);
  EXPECT_DOUBLE_EQ(y[1], -0.1);
  EXPECT_EQ(y[2], 0.0);
  Array4 a = random_array({1, 2, 4, 4}, 11);
  for (double& v : a.values())
    if (std::abs(v) < 0.05) v = 0.5;  // keep the stencil off the kink
  check_gradients([](Graph& gr, const std::vector<Var>& in) { return leaky_relu(gr, in[0]); }, {a}, 1e-10);
}

TEST(ChannelNorm, StandardizesEachPlane) {
  Graph g;
  const Array4 x = random_array({2, 3, 5, 6}, 12, -4.0, 9.0);
  const Var y = channel_norm(g, g.constant(x), g.constant(Array4(1, 3, 1, 1, 1.0)), g.constant(Array4(1, 3, 1, 1, 0.0)));
  const Array4& v = g.value(y);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0.0, s = 0.0;
      for (std::size_t i = 0; i < 30; ++i) m += v.plane(n, c)[i];
      m /= 30;
      for (std::size_t i = 0; i < 30; ++i) s += std::pow(v.plane(n, c)[i] - m, 2);
      s /= 30;
      EXPECT_NEAR(m, 0.0, 1e-10);
      // variance var / (var + eps)
      EXPECT_NEAR(s, 1.0, 1e-5);
    }
}

TEST(ChannelNorm, StandardizedInputPassesThrough) {
  Array4 x = random_array({1, 1, 8, 8}, 13);
  double m = 0.0, s = 0.0;
  for (double v : x.values()) m += v;
  m /= 64;
  for (double v : x.values()) s += (v - m) * (v - m);
  s = std::sqrt(s / 64);
  for (double& v : x.values()) v = (v - m) / s;
  Graph g;
  const Array4& y = g.value(channel_norm(g, g.constant(x), g.constant(Array4(1, 1, 1, 1, 1.0)), g.constant(Array4(1, 1, 1, 1, 0.0))));
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(y[i], x[i], 1e-5);
}

TEST(ChannelNorm, GradientsMatchFiniteDifferences) {
  check_gradients([](Graph& g, const std::vector<Var>& in) { return channel_norm(g, in[0], in[1], in[2]); },
                  {random_array({2, 2, 3, 4}, 14), random_array({1, 2, 1, 1}, 15, 0.5, 1.5),
                   random_array({1, 2, 1, 1}, 16)},
                  1e-6);
}

TEST(ScaledSigmoid, RangeAndGradient) {
  Graph g;
  Array4 x(1, 1, 1, 3);
  x[0] = 0.0;
  x[1] = 40.0;
  x[2] = -800.0;
  const Array4& y = g.value(scaled_sigmoid(g, g.constant(x), 1500.0, 4500.0));
  EXPECT_EQ(y[0], 3000.0);
  EXPECT_LE(y[1], 4500.0);
  EXPECT_GT(y[1], 4499.99);
  EXPECT_EQ(y[2], 1500.0);
  double prev = 0.0;
  for (double t = -10; t <= 10; t += 0.5) {
    Graph h;
    const double v = h.value(scaled_sigmoid(h, h.constant(Array4(1, 1, 1, 1, t)), 1.0, 2.0))[0];
    EXPECT_GE(v, prev);
    prev = v;
  }
  check_gradients([](Graph& gr, const std::vector<Var>& in) { return scaled_sigmoid(gr, in[0], -1.0, 3.0); },
                  {random_array({1, 2, 3, 3}, 17, -3.0, 3.0)}, 1e-9);
  EXPECT_THROW(scaled_sigmoid(g, g.constant(x), 2.0, 1.0), Error);
}

TEST(Mask, OnesIdentityZerosKill) {
  const Array4 x = random_array({1, 3, 4, 4}, 18);
  Graph g;
  const Var vx = g.parameter(x);
  EXPECT_EQ(g.value(apply_mask(g, vx, Array4(1, 3, 1, 1, 1.0))), x);
  const Var z = apply_mask(g, vx, Array4(1, 3, 1, 1, 0.0));
  for (double v : g.value(z).values()) EXPECT_EQ(v, 0.0);
  g.backward(sum(g, z));
  for (double v : g.grad(vx).values()) EXPECT_EQ(v, 0.0);
}

TEST(Mask, PerChannelAndAdjoint) {
  Array4 m(1, 3, 1, 1, 1.0);
  m[1] = 0.0;
  const Array4 x = random_array({1, 3, 2, 2}, 19);
  Graph g;
  const Array4& y = g.value(apply_mask(g, g.constant(x), m));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(y.plane(0, 0)[i], x.plane(0, 0)[i]);
    EXPECT_EQ(y.plane(0, 1)[i], 0.0);
  }
  check_adjoint([&](Graph& gr, const std::vector<Var>& in) { return apply_mask(gr, in[0], m); }, x, 20);
  EXPECT_THROW(apply_mask(g, g.constant(x), Array4(1, 2, 1, 1, 1.0)), Error);
  Array4 bad(1, 3, 1, 1, 0.5);
  EXPECT_THROW(apply_mask(g, g.constant(x), bad), Error);
}

TEST(Shape, ConcatCropAddMulGradients) {
  check_gradients([](Graph& g, const std::vector<Var>& in) { return concat_channels(g, in[0], in[1]); },
                  {random_array({1, 2, 3, 3}, 21), random_array({1, 1, 3, 3}, 22)}, 1e-9);
  check_gradients([](Graph& g, const std::vector<Var>& in) { return crop(g, in[0], 2, 3); },
                  {random_array({1, 2, 4, 5}, 23)}, 1e-9);
  check_gradients([](Graph& g, const std::vector<Var>& in) { return mul(g, add(g, in[0], in[1]), in[0]); },
                  {random_array({1, 1, 3, 3}, 24), random_array({1, 1, 3, 3}, 25)}, 1e-8);
}

TEST(Backward, SumAndSquare) {
  const Array4 x = random_array({1, 2, 3, 3}, 26);
  Graph g;
  const Var vx = g.parameter(x);
  g.backward(sum(g, vx));
  for (double v : g.grad(vx).values()) EXPECT_EQ(v, 1.0);
  g.backward(sum(g, mul(g, vx, vx)));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(g.grad(vx)[i], 2.0 * x[i]);
}

TEST(Backward, FanOutAccumulatesPathSum) {
  // y = x used by three consumers vs three separate copies of x.
  const Array4 x = random_array({1, 1, 4, 4}, 27);
  const Array4 k = random_array({1, 1, 3, 3}, 28);
  Graph shared;
  const Var s = shared.parameter(x);
  const Var out1 = add(shared, add(shared, leaky_relu(shared, s), crop(shared, upsample2x(shared, s), 4, 4)),
                       conv2d(shared, s, shared.constant(k), std::nullopt, 1));
  shared.backward(sum(shared, out1));

  Graph split;
  const Var a = split.parameter(x), b = split.parameter(x), c = split.parameter(x);
  const Var out2 = add(split, add(split, leaky_relu(split, a), crop(split, upsample2x(split, b), 4, 4)),
                       conv2d(split, c, split.constant(k), std::nullopt, 1));
  split.backward(sum(split, out2));
  for (std::size_t i = 0; i < x.size(); ++i)
    EXPECT_NEAR(shared.grad(s)[i], split.grad(a)[i] + split.grad(b)[i] + split.grad(c)[i], 1e-14);
}

TEST(Backward, RejectsNonScalarLoss) {
  Graph g;
  const Var x = g.parameter(Array4(1, 1, 2, 2));
  EXPECT_THROW(g.backward(x), Error);
}

TEST(MeanAbsDiff, ValueAndGradient) {
  const Array4 t = random_array({1, 1, 4, 4}, 29);
  check_gradients([&](Graph& g, const std::vector<Var>& in) { return mean_abs_diff(g, in[0], t); },
                  {random_array({1, 1, 4, 4}, 30)}, 1e-8);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  std::vector<Array4> p{Array4(1, 1, 1, 3, 1.0)};
  Array4 g(1, 1, 1, 3);
  g[0] = 0.5;
  g[1] = -2.0;
  g[2] = 1e-3;
  AdamState s;
  adam_step(p, {g}, s, 0.01);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[0][i], 1.0 - 0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  const Array4 init = random_array({1, 2, 2, 2}, 31);
  std::vector<Array4> p{init};
  AdamState s;
  for (int k = 0; k < 50; ++k) adam_step(p, {Array4(1, 2, 2, 2)}, s, 0.1);
  EXPECT_EQ(p[0], init);
}

TEST(Adam, DeterministicTrajectory) {
  auto run = [] {
    std::vector<Array4> p{random_array({1, 1, 3, 3}, 32)};
    AdamState s;
    for (int k = 0; k < 30; ++k) {
      Array4 g = p[0];
      for (double& v : g.values()) v = 2.0 * v - 0.3;
      adam_step(p, {g}, s, 0.05);
    }
    return p[0];
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, DimsMismatchThrows) {
  std::vector<Array4> p{Array4(1, 1, 2, 2)};
  AdamState s;
  EXPECT_THROW(adam_step(p, {Array4(1, 1, 2, 3)}, s, 0.1), Error);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = fwi::testing::scratch_dir("params");
  std::vector<Array4> a{random_array({2, 3, 3, 3}, 33), random_array({1, 1, 1, 1}, 34),
                        Array4(1, 4, 1, 1, -0.0)};
  a[1][0] = 1.0 / 3.0;
  save_params(dir / "p.fwip", a);
  const auto b = load_params(dir / "p.fwip");
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].dims(), b[i].dims());
    EXPECT_EQ(0, std::memcmp(a[i].data(), b[i].data(), a[i].size() * sizeof(double)));
  }
  std::string bytes = encode_params(a);
  EXPECT_EQ(bytes.substr(0, 4), "FWIP");
  EXPECT_THROW(decode_params(bytes.substr(0, bytes.size() - 3)), Error);
  bytes[0] = 'X';
  EXPECT_THROW(decode_params(bytes), Error);
}
