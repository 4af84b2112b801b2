#pragma once

#include <vector>

#include "fwi/ad/array4.hpp"

namespace fwi::ad {

struct AdamState {
  std::vector<Array4> m;
  std::vector<Array4> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of every array in `params`. Moment
/// buffers are allocated on the first call.
void adam_step(std::vector<Array4>& params, const std::vector<Array4>& grads, AdamState& state, double lr);

}  // namespace fwi::ad
