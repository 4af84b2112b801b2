#include "fwi/metrics.hpp"

#include <cmath>
#include <limits>

#include "fwi/error.hpp"

namespace fwi {
namespace {

void check_pair(const Grid2& a, const Grid2& b, const char* op) {
  require(a.same_shape(b), ErrorKind::shape, std::string(op) + ": grids differ in shape");
  require(a.size() > 0, ErrorKind::shape, std::string(op) + ": empty grid");
}

double truth_norm(const Grid2& truth, const char* op) {
  const double n = norm(truth);
  require(n > 0.0, ErrorKind::numerical, std::string(op) + ": truth has zero norm");
  return n;
}

double diff_norm(const Grid2& a, const Grid2& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// Reflect (without edge repeat) index into [0, n).
std::size_t reflect(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < n ? i : period - i);
}

// 7x7 box mean of `g` with reflect padding.
Grid2 box_mean(const Grid2& g) {
  const long nz = static_cast<long>(g.rows()), nx = static_cast<long>(g.cols());
  const long r = ssim_window / 2;
  Grid2 tmp(g.rows(), g.cols()), out(g.rows(), g.cols());
  for (long i = 0; i < nz; ++i)
    for (long j = 0; j < nx; ++j) {
      double s = 0.0;
      for (long k = -r; k <= r; ++k) s += g(static_cast<std::size_t>(i), reflect(j + k, nx));
      tmp(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = s / ssim_window;
    }
  for (long i = 0; i < nz; ++i)
    for (long j = 0; j < nx; ++j) {
      double s = 0.0;
      for (long k = -r; k <= r; ++k) s += tmp(reflect(i + k, nz), static_cast<std::size_t>(j));
      out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = s / ssim_window;
    }
  return out;
}

Grid2 product(const Grid2& a, const Grid2& b) {
  Grid2 out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
  return out;
}

}  // namespace

double rel_l2(const Grid2& estimate, const Grid2& truth) {
  check_pair(estimate, truth, "rel_l2");
  return diff_norm(estimate, truth) / truth_norm(truth, "rel_l2");
}

double snr(const Grid2& estimate, const Grid2& truth) {
  check_pair(estimate, truth, "snr");
  const double t = truth_norm(truth, "snr");
  const double d = diff_norm(estimate, truth);
  if (d == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10((t * t) / (d * d));
}

double ssim(const Grid2& estimate, const Grid2& truth) {
  check_pair(estimate, truth, "ssim");
  require(estimate.rows() >= static_cast<std::size_t>(ssim_window) &&
              estimate.cols() >= static_cast<std::size_t>(ssim_window),
          ErrorKind::shape, "ssim: grid smaller than the 7x7 window");
  double L = truth.max() - truth.min();
  if (!(L > 0.0)) L = std::max(std::abs(truth.max()), std::abs(truth.min()));
  if (!(L > 0.0)) L = 1.0;
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);

  const Grid2 ma = box_mean(estimate), mb = box_mean(truth);
  const Grid2 saa = box_mean(product(estimate, estimate));
  const Grid2 sbb = box_mean(product(truth, truth));
  const Grid2 sab = box_mean(product(estimate, truth));
  double total = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double mua = ma.values()[i], mub = mb.values()[i];
    const double va = saa.values()[i] - mua * mua;
    const double vb = sbb.values()[i] - mub * mub;
    const double cov = sab.values()[i] - mua * mub;
    total += ((2.0 * mua * mub + c1) * (2.0 * cov + c2)) / ((mua * mua + mub * mub + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(estimate.size());
}

MetricReport evaluate(const Grid2& estimate, const Grid2& truth) {
  return {snr(estimate, truth), ssim(estimate, truth), rel_l2(estimate, truth)};
}

}  // namespace fwi
