#include "fwi/ad/adam.hpp"

#include <cmath>

#include "fwi/error.hpp"

namespace fwi::ad {

void adam_step(std::vector<Array4>& params, const std::vector<Array4>& grads, AdamState& state, double lr) {
  require(params.size() == grads.size(), ErrorKind::shape, "adam: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const Array4& p : params) {
      state.m.emplace_back(p.dims(), std::vector<double>(p.size(), 0.0));
      state.v.emplace_back(p.dims(), std::vector<double>(p.size(), 0.0));
    }
  }
  require(state.m.size() == params.size(), ErrorKind::shape, "adam: state does not match parameters");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Array4& p = params[k];
    const Array4& g = grads[k];
    require(g.dims() == p.dims() && state.m[k].dims() == p.dims(), ErrorKind::shape, "adam: dims mismatch");
    Array4& m = state.m[k];
    Array4& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mh = m[i] / bc1;
      const double vh = v[i] / bc2;
      p[i] -= lr * mh / (std::sqrt(vh) + state.eps);
    }
  }
}

}  // namespace fwi::ad
