#include "fwi/ad/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <memory>

#include "fwi/error.hpp"

namespace fwi::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

struct ConvGeom {
  std::size_t cin, cout, k, pad, stride, h, w, ho, wo;
  std::size_t patch() const { return cin * k * k; }
  std::size_t pixels() const { return ho * wo; }
};

void im2col(const double* x, const ConvGeom& cg, double* cols) {
  const auto h = static_cast<long>(cg.h), w = static_cast<long>(cg.w);
  const long pad = static_cast<long>(cg.pad), stride = static_cast<long>(cg.stride);
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < cg.cin; ++ci)
    for (std::size_t ky = 0; ky < cg.k; ++ky)
      for (std::size_t kx = 0; kx < cg.k; ++kx, ++row) {
        double* out = cols + row * cg.pixels();
        const double* plane = x + ci * cg.h * cg.w;
        for (std::size_t oy = 0; oy < cg.ho; ++oy) {
          const long iy = static_cast<long>(oy) * stride + static_cast<long>(ky) - pad;
          for (std::size_t ox = 0; ox < cg.wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride + static_cast<long>(kx) - pad;
            out[oy * cg.wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0;
          }
        }
      }
}

void col2im_add(const double* cols, const ConvGeom& cg, double* dx) {
  const auto h = static_cast<long>(cg.h), w = static_cast<long>(cg.w);
  const long pad = static_cast<long>(cg.pad), stride = static_cast<long>(cg.stride);
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < cg.cin; ++ci)
    for (std::size_t ky = 0; ky < cg.k; ++ky)
      for (std::size_t kx = 0; kx < cg.k; ++kx, ++row) {
        const double* in = cols + row * cg.pixels();
        double* plane = dx + ci * cg.h * cg.w;
        for (std::size_t oy = 0; oy < cg.ho; ++oy) {
          const long iy = static_cast<long>(oy) * stride + static_cast<long>(ky) - pad;
          if (iy < 0 || iy >= h) continue;
          for (std::size_t ox = 0; ox < cg.wo; ++ox) {
            const long ix = static_cast<long>(ox) * stride + static_cast<long>(kx) - pad;
            if (ix >= 0 && ix < w) plane[iy * w + ix] += in[oy * cg.wo + ox];
          }
        }
      }
}

// Half-pixel linear interpolation taps for doubling a length-n axis.
struct Tap {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<Tap> upsample_taps(std::size_t n) {
  std::vector<Tap> taps(2 * n);
  for (std::size_t o = 0; o < 2 * n; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0.0) src = 0.0;
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const double frac = src - static_cast<double>(i0);
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    taps[o] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var conv2d(Graph& g, Var input, Var kernel, std::optional<Var> bias, int stride) {
  const Array4& x = g.value(input);
  const Array4& k = g.value(kernel);
  require(stride == 1 || stride == 2, ErrorKind::shape, "conv2d: stride must be 1 or 2");
  require(k.h() == k.w() && k.h() % 2 == 1, ErrorKind::shape, "conv2d: kernel must be square with odd size");
  require(k.c() == x.c(), ErrorKind::shape,
          "conv2d: kernel expects " + std::to_string(k.c()) + " input channels, got " + std::to_string(x.c()));
  if (bias) require(g.value(*bias).dims() == Array4::Dims{1, k.n(), 1, 1}, ErrorKind::shape, "conv2d: bias dims");
  const auto s = static_cast<std::size_t>(stride);
  ConvGeom cg{x.c(), k.n(), k.h(), k.h() / 2, s, x.h(), x.w(), (x.h() + s - 1) / s, (x.w() + s - 1) / s};

  Array4 out(x.n(), cg.cout, cg.ho, cg.wo);
  std::vector<double> cols(cg.patch() * cg.pixels());
  CMapMat W(k.data(), static_cast<long>(cg.cout), static_cast<long>(cg.patch()));
  for (std::size_t n = 0; n < x.n(); ++n) {
    im2col(x.plane(n, 0), cg, cols.data());
    CMapMat C(cols.data(), static_cast<long>(cg.patch()), static_cast<long>(cg.pixels()));
    MapMat O(out.plane(n, 0), static_cast<long>(cg.cout), static_cast<long>(cg.pixels()));
    O.noalias() = W * C;
    if (bias) {
      const Array4& b = g.value(*bias);
      for (std::size_t co = 0; co < cg.cout; ++co) O.row(static_cast<long>(co)).array() += b[co];
    }
  }

  std::vector<Var> inputs{input, kernel};
  if (bias) inputs.push_back(*bias);
  return g.add_node("conv2d", std::move(out), inputs, [cg](Graph& gr, std::size_t self) {
    const auto& ins = gr.inputs_of(self);
    const Array4& dout = gr.grad_of(self);
    const Array4& xv = gr.value(ins[0]);
    const Array4& kv = gr.value(ins[1]);
    const bool need_x = gr.requires_grad(ins[0]);
    const bool need_k = gr.requires_grad(ins[1]);
    const bool need_b = ins.size() > 2 && gr.requires_grad(ins[2]);
    std::vector<double> cols(cg.patch() * cg.pixels());
    CMapMat W(kv.data(), static_cast<long>(cg.cout), static_cast<long>(cg.patch()));
    for (std::size_t n = 0; n < xv.n(); ++n) {
      CMapMat DO(dout.plane(n, 0), static_cast<long>(cg.cout), static_cast<long>(cg.pixels()));
      if (need_k) {
        im2col(xv.plane(n, 0), cg, cols.data());
        CMapMat C(cols.data(), static_cast<long>(cg.patch()), static_cast<long>(cg.pixels()));
        MapMat DW(gr.grad_acc(ins[1]).data(), static_cast<long>(cg.cout), static_cast<long>(cg.patch()));
        DW.noalias() += DO * C.transpose();
      }
      if (need_b) {
        Array4& db = gr.grad_acc(ins[2]);
        for (std::size_t co = 0; co < cg.cout; ++co) db[co] += DO.row(static_cast<long>(co)).sum();
      }
      if (need_x) {
        MapMat DC(cols.data(), static_cast<long>(cg.patch()), static_cast<long>(cg.pixels()));
        DC.noalias() = W.transpose() * DO;
        col2im_add(cols.data(), cg, gr.grad_acc(ins[0]).plane(n, 0));
      }
    }
  });
}

Var upsample2x(Graph& g, Var input) {
  const Array4& x = g.value(input);
  require(x.h() >= 2 && x.w() >= 2, ErrorKind::shape, "upsample2x: needs h, w >= 2");
  const std::size_t H = 2 * x.h(), W = 2 * x.w();
  auto ty = std::make_shared<std::vector<Tap>>(upsample_taps(x.h()));
  auto tx = std::make_shared<std::vector<Tap>>(upsample_taps(x.w()));
  Array4 out(x.n(), x.c(), H, W);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c) {
      const double* p = x.plane(n, c);
      double* q = out.plane(n, c);
      for (std::size_t oy = 0; oy < H; ++oy) {
        const Tap& a = (*ty)[oy];
        const double* r0 = p + a.i0 * x.w();
        const double* r1 = p + a.i1 * x.w();
        for (std::size_t ox = 0; ox < W; ++ox) {
          const Tap& b = (*tx)[ox];
          q[oy * W + ox] = a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) + a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
        }
      }
    }
  return g.add_node("upsample2x", std::move(out), {input}, [ty, tx](Graph& gr, std::size_t self) {
    const Var in = gr.inputs_of(self)[0];
    const Array4& dout = gr.grad_of(self);
    Array4& dx = gr.grad_acc(in);
    const std::size_t w = dx.w(), H = dout.h(), W = dout.w();
    for (std::size_t n = 0; n < dx.n(); ++n)
      for (std::size_t c = 0; c < dx.c(); ++c) {
        const double* q = dout.plane(n, c);
        double* p = dx.plane(n, c);
        for (std::size_t oy = 0; oy < H; ++oy) {
          const Tap& a = (*ty)[oy];
          for (std::size_t ox = 0; ox < W; ++ox) {
            const Tap& b = (*tx)[ox];
            const double d = q[oy * W + ox];
            p[a.i0 * w + b.i0] += a.w0 * b.w0 * d;
            p[a.i0 * w + b.i1] += a.w0 * b.w1 * d;
            p[a.i1 * w + b.i0] += a.w1 * b.w0 * d;
            p[a.i1 * w + b.i1] += a.w1 * b.w1 * d;
          }
        }
      }
  });
}

Var leaky_relu(Graph& g, Var input, double slope) {
  Array4 out = g.value(input);
  for (double& v : out.values()) v = v >= 0.0 ? v : slope * v;
  return g.add_node("leaky_relu", std::move(out), {input}, [slope](Graph& gr, std::size_t self) {
    const Var in = gr.inputs_of(self)[0];
    const Array4& x = gr.value(in);
    const Array4& dout = gr.grad_of(self);
    Array4& dx = gr.grad_acc(in);
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] += x[i] >= 0.0 ? dout[i] : slope * dout[i];
  });
}

Var channel_norm(Graph& g, Var input, Var gain, Var shift, double eps) {
  const Array4& x = g.value(input);
  const Array4& ga = g.value(gain);
  const Array4& sh = g.value(shift);
  const Array4::Dims pd{1, x.c(), 1, 1};
  require(ga.dims() == pd && sh.dims() == pd, ErrorKind::shape, "channel_norm: gain/shift must be (1, c, 1, 1)");
  const std::size_t hw = x.h() * x.w();
  require(hw >= 2, ErrorKind::shape, "channel_norm: needs h * w >= 2");

  auto xhat = std::make_shared<Array4>(x.dims(), std::vector<double>(x.size()));
  auto inv_std = std::make_shared<std::vector<double>>(x.n() * x.c());
  Array4 out(x.dims(), std::vector<double>(x.size()));
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c) {
      const double* p = x.plane(n, c);
      double mean = 0.0;
      for (std::size_t i = 0; i < hw; ++i) mean += p[i];
      mean /= static_cast<double>(hw);
      double var = 0.0;
      for (std::size_t i = 0; i < hw; ++i) var += (p[i] - mean) * (p[i] - mean);
      var /= static_cast<double>(hw);
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[n * x.c() + c] = is;
      double* xh = xhat->plane(n, c);
      double* o = out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) {
        xh[i] = (p[i] - mean) * is;
        o[i] = ga[c] * xh[i] + sh[c];
      }
    }
  return g.add_node("channel_norm", std::move(out), {input, gain, shift},
                    [xhat, inv_std, hw](Graph& gr, std::size_t self) {
                      const auto& ins = gr.inputs_of(self);
                      const Array4& dout = gr.grad_of(self);
                      const Array4& ga = gr.value(ins[1]);
                      const std::size_t C = ga.c();
                      const bool need_x = gr.requires_grad(ins[0]);
                      const bool need_g = gr.requires_grad(ins[1]);
                      const bool need_s = gr.requires_grad(ins[2]);
                      for (std::size_t n = 0; n < dout.n(); ++n)
                        for (std::size_t c = 0; c < C; ++c) {
                          const double* dy = dout.plane(n, c);
                          const double* xh = xhat->plane(n, c);
                          double sdy = 0.0, sdyx = 0.0;
                          for (std::size_t i = 0; i < hw; ++i) {
                            sdy += dy[i];
                            sdyx += dy[i] * xh[i];
                          }
                          if (need_g) gr.grad_acc(ins[1])[c] += sdyx;
                          if (need_s) gr.grad_acc(ins[2])[c] += sdy;
                          if (need_x) {
                            const double is = (*inv_std)[n * C + c];
                            const double m1 = ga[c] * sdy / static_cast<double>(hw);
                            const double m2 = ga[c] * sdyx / static_cast<double>(hw);
                            double* dx = gr.grad_acc(ins[0]).plane(n, c);
                            for (std::size_t i = 0; i < hw; ++i) dx[i] += is * (ga[c] * dy[i] - m1 - xh[i] * m2);
                          }
                        }
                    });
}

Var scaled_sigmoid(Graph& g, Var input, double v_min, double v_max) {
  require(v_min < v_max, ErrorKind::config, "scaled_sigmoid: v_min must be < v_max");
  const Array4& x = g.value(input);
  auto sig = std::make_shared<std::vector<double>>(x.size());
  Array4 out(x.dims(), std::vector<double>(x.size()));
  const double range = v_max - v_min;
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*sig)[i] = sigmoid(x[i]);
    out[i] = v_min + range * (*sig)[i];
  }
  return g.add_node("scaled_sigmoid", std::move(out), {input}, [sig, range](Graph& gr, std::size_t self) {
    const Var in = gr.inputs_of(self)[0];
    const Array4& dout = gr.grad_of(self);
    Array4& dx = gr.grad_acc(in);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dout[i] * range * (*sig)[i] * (1.0 - (*sig)[i]);
  });
}

Var apply_mask(Graph& g, Var input, const Array4& mask) {
  const Array4& x = g.value(input);
  require(mask.c() == x.c() && mask.h() == 1 && mask.w() == 1 && (mask.n() == 1 || mask.n() == x.n()),
          ErrorKind::shape, "apply_mask: mask must be (1 or n, c, 1, 1)");
  for (double m : mask.values())
    require(m == 0.0 || m == 1.0, ErrorKind::config, "apply_mask: mask values must be 0 or 1");
  auto mk = std::make_shared<Array4>(mask);
  Array4 out = x;
  const std::size_t hw = x.h() * x.w();
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c) {
      const double m = (*mk)(mask.n() == 1 ? 0 : n, c, 0, 0);
      double* p = out.plane(n, c);
      for (std::size_t i = 0; i < hw; ++i) p[i] *= m;
    }
  return g.add_node("apply_mask", std::move(out), {input}, [mk, hw](Graph& gr, std::size_t self) {
    const Var in = gr.inputs_of(self)[0];
    const Array4& dout = gr.grad_of(self);
    Array4& dx = gr.grad_acc(in);
    for (std::size_t n = 0; n < dx.n(); ++n)
      for (std::size_t c = 0; c < dx.c(); ++c) {
        const double m = (*mk)(mk->n() == 1 ? 0 : n, c, 0, 0);
        const double* q = dout.plane(n, c);
        double* p = dx.plane(n, c);
        for (std::size_t i = 0; i < hw; ++i) p[i] += m * q[i];
      }
  });
}

Var concat_channels(Graph& g, Var a, Var b) {
  const Array4& x = g.value(a);
  const Array4& y = g.value(b);
  require(x.n() == y.n() && x.h() == y.h() && x.w() == y.w(), ErrorKind::shape,
          "concat_channels: batch/spatial dims differ");
  Array4 out(x.n(), x.c() + y.c(), x.h(), x.w());
  const std::size_t hw = x.h() * x.w();
  for (std::size_t n = 0; n < x.n(); ++n) {
    std::copy_n(x.plane(n, 0), x.c() * hw, out.plane(n, 0));
    std::copy_n(y.plane(n, 0), y.c() * hw, out.plane(n, x.c()));
  }
  return g.add_node("concat", std::move(out), {a, b}, [](Graph& gr, std::size_t self) {
    const auto& ins = gr.inputs_of(self);
    const Array4& dout = gr.grad_of(self);
    const std::size_t ca = gr.value(ins[0]).c();
    const std::size_t cb = gr.value(ins[1]).c();
    const std::size_t hw = dout.h() * dout.w();
    for (std::size_t n = 0; n < dout.n(); ++n) {
      if (gr.requires_grad(ins[0])) {
        double* p = gr.grad_acc(ins[0]).plane(n, 0);
        const double* q = dout.plane(n, 0);
        for (std::size_t i = 0; i < ca * hw; ++i) p[i] += q[i];
      }
      if (gr.requires_grad(ins[1])) {
        double* p = gr.grad_acc(ins[1]).plane(n, 0);
        const double* q = dout.plane(n, ca);
        for (std::size_t i = 0; i < cb * hw; ++i) p[i] += q[i];
      }
    }
  });
}

Var crop(Graph& g, Var input, std::size_t h, std::size_t w) {
  const Array4& x = g.value(input);
  require(h >= 1 && w >= 1 && h <= x.h() && w <= x.w(), ErrorKind::shape, "crop: window exceeds input");
  Array4 out(x.n(), x.c(), h, w);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (std::size_t y = 0; y < h; ++y) std::copy_n(x.plane(n, c) + y * x.w(), w, out.plane(n, c) + y * w);
  return g.add_node("crop", std::move(out), {input}, [](Graph& gr, std::size_t self) {
    const Var in = gr.inputs_of(self)[0];
    const Array4& dout = gr.grad_of(self);
    Array4& dx = gr.grad_acc(in);
    for (std::size_t n = 0; n < dout.n(); ++n)
      for (std::size_t c = 0; c < dout.c(); ++c)
        for (std::size_t y = 0; y < dout.h(); ++y) {
          const double* q = dout.plane(n, c) + y * dout.w();
          double* p = dx.plane(n, c) + y * dx.w();
          for (std::size_t x = 0; x < dout.w(); ++x) p[x] += q[x];
        }
  });
}

Var add(Graph& g, Var a, Var b) {
  const Array4& x = g.value(a);
  const Array4& y = g.value(b);
  require(x.dims() == y.dims(), ErrorKind::shape, "add: shape mismatch");
  Array4 out = x;
  out += y;
  return g.add_node("add", std::move(out), {a, b}, [](Graph& gr, std::size_t self) {
    const auto& ins = gr.inputs_of(self);
    for (Var in : ins)
      if (gr.requires_grad(in)) gr.grad_acc(in) += gr.grad_of(self);
  });
}

Var mul(Graph& g, Var a, Var b) {
  const Array4& x = g.value(a);
  const Array4& y = g.value(b);
  require(x.dims() == y.dims(), ErrorKind::shape, "mul: shape mismatch");
  Array4 out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return g.add_node("mul", std::move(out), {a, b}, [](Graph& gr, std::size_t self) {
    const auto& ins = gr.inputs_of(self);
    const Array4& dout = gr.grad_of(self);
    // Copies: a and b may be the same node.
    const Array4 xa = gr.value(ins[0]);
    const Array4 xb = gr.value(ins[1]);
    if (gr.requires_grad(ins[0])) {
      Array4& d = gr.grad_acc(ins[0]);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dout[i] * xb[i];
    }
    if (gr.requires_grad(ins[1])) {
      Array4& d = gr.grad_acc(ins[1]);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dout[i] * xa[i];
    }
  });
}

Var sum(Graph& g, Var input) {
  double s = 0.0;
  for (double v : g.value(input).values()) s += v;
  return g.add_node("sum", Array4(1, 1, 1, 1, s), {input}, [](Graph& gr, std::size_t self) {
    const Var in = gr.inputs_of(self)[0];
    const double d = gr.grad_of(self)[0];
    for (double& v : gr.grad_acc(in).values()) v += d;
  });
}

Var mean_abs_diff(Graph& g, Var input, const Array4& target) {
  const Array4& x = g.value(input);
  require(x.dims() == target.dims(), ErrorKind::shape, "mean_abs_diff: target dims differ");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - target[i]);
  const double inv_n = 1.0 / static_cast<double>(x.size());
  auto tg = std::make_shared<Array4>(target);
  return g.add_node("mean_abs_diff", Array4(1, 1, 1, 1, s * inv_n), {input}, [tg, inv_n](Graph& gr, std::size_t self) {
    const Var in = gr.inputs_of(self)[0];
    const Array4& xv = gr.value(in);
    const double d = gr.grad_of(self)[0] * inv_n;
    Array4& dx = gr.grad_acc(in);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      const double r = xv[i] - (*tg)[i];
      dx[i] += r > 0.0 ? d : (r < 0.0 ? -d : 0.0);
    }
  });
}

}  // namespace fwi::ad
