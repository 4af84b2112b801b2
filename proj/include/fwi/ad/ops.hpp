#pragma once

#include <optional>

#include "fwi/ad/graph.hpp"

namespace fwi::ad {

/// Cross-correlation with zero "same" padding (k/2 on every side). Output
/// spatial dims are ceil(h / stride), ceil(w / stride). kernel is
/// (c_out, c_in, k, k) with k odd; bias, when present, is (1, c_out, 1, 1).
Var conv2d(Graph& g, Var input, Var kernel, std::optional<Var> bias, int stride);

/// Bilinear x2 upsampling, half-pixel (align_corners = false) sampling with
/// edge clamping.
Var upsample2x(Graph& g, Var input);

Var leaky_relu(Graph& g, Var input, double slope = 0.1);

/// Per-(sample, channel) standardization over the spatial dims followed by
/// a learned gain and shift, both (1, c, 1, 1).
Var channel_norm(Graph& g, Var input, Var gain, Var shift, double eps = 1e-5);

/// v_min + (v_max - v_min) * sigmoid(x)
Var scaled_sigmoid(Graph& g, Var input, double v_min, double v_max);

/// Multiplies every plane (n, c) by mask(n or 0, c). The mask holds 0/1 and
/// is a constant of the graph; there is no 1/keep rescaling.
Var apply_mask(Graph& g, Var input, const Array4& mask);

/// Channel concatenation [a, b].
Var concat_channels(Graph& g, Var a, Var b);

/// Top-left (h, w) window.
Var crop(Graph& g, Var input, std::size_t h, std::size_t w);

Var add(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var sum(Graph& g, Var input);

/// mean |x - target| over all elements.
Var mean_abs_diff(Graph& g, Var input, const Array4& target);

}  // namespace fwi::ad
