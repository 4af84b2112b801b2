#pragma once

#include "fwi/grid.hpp"

namespace fwi {

struct MetricReport {
  double snr = 0.0;  // dB
  double ssim = 0.0;
  double rel_l2 = 0.0;
};

/// ||estimate - truth|| / ||truth||
double rel_l2(const Grid2& estimate, const Grid2& truth);

/// 10 log10(||truth||^2 / ||estimate - truth||^2); +infinity when equal.
double snr(const Grid2& estimate, const Grid2& truth);

/// Mean SSIM over 7x7 uniform windows centred on every cell (reflect
/// padding). c1 = (0.01 L)^2 and c2 = (0.03 L)^2 with L the range of
/// `truth`; a constant truth uses L = max |truth| (or 1 if that is zero).
double ssim(const Grid2& estimate, const Grid2& truth);

constexpr int ssim_window = 7;

MetricReport evaluate(const Grid2& estimate, const Grid2& truth);

}  // namespace fwi
