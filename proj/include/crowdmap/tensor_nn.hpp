#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "crowdmap/errors.hpp"
#include "crowdmap/tensor.hpp"

namespace crowdmap {

/// 2-D convolution with "same" zero padding: padding = (kernel - 1) / 2,
/// so spatial extent is preserved. Weights are (out, in, k, k), bias (out).
struct ConvLayer {
  int kernel = 3;
  int in_channels = 1;
  int out_channels = 1;
  int padding = 1;
  std::vector<double> weights;
  std::vector<double> bias;

  std::size_t weight_index(int oc, int ic, int ky, int kx) const {
    return ((static_cast<std::size_t>(oc) * in_channels + ic) * kernel + ky) *
               kernel +
           kx;
  }
  std::size_t param_count() const { return weights.size() + bias.size(); }
};

inline ConvLayer make_conv(int kernel, int in_channels, int out_channels) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ValidationError("conv kernel size must be odd and positive");
  }
  if (in_channels < 1 || out_channels < 1) {
    throw ValidationError("conv channel counts must be positive");
  }
  ConvLayer layer;
  layer.kernel = kernel;
  layer.in_channels = in_channels;
  layer.out_channels = out_channels;
  layer.padding = (kernel - 1) / 2;
  layer.weights.assign(static_cast<std::size_t>(out_channels) * in_channels *
                           kernel * kernel,
                       0.0);
  layer.bias.assign(static_cast<std::size_t>(out_channels), 0.0);
  return layer;
}

/// Cross-correlation of x (C,H,W) with the layer kernels.
inline Tensor conv2d_forward(const Tensor& x, const ConvLayer& layer) {
  if (x.rank() != 3) throw ValidationError("conv2d_forward: rank-3 input expected");
  if (x.dim(0) != layer.in_channels) {
    throw ValidationError("conv2d_forward: input has " +
                          std::to_string(x.dim(0)) + " channels, layer wants " +
                          std::to_string(layer.in_channels));
  }
  const int H = x.dim(1), W = x.dim(2);
  const int K = layer.kernel, P = layer.padding;
  const int Ho = H + 2 * P - K + 1, Wo = W + 2 * P - K + 1;
  if (Ho < 1 || Wo < 1) throw ValidationError("conv2d_forward: input too small");

  Tensor out({layer.out_channels, Ho, Wo});
  for (int oc = 0; oc < layer.out_channels; ++oc) {
    double* out_plane = &out.values[static_cast<std::size_t>(oc) * Ho * Wo];
    std::fill(out_plane, out_plane + static_cast<std::size_t>(Ho) * Wo,
              layer.bias[static_cast<std::size_t>(oc)]);
    for (int ic = 0; ic < layer.in_channels; ++ic) {
      const double* in_plane =
          &x.values[static_cast<std::size_t>(ic) * H * W];
      for (int ky = 0; ky < K; ++ky) {
        const int y0 = std::max(0, P - ky);
        const int y1 = std::min(Ho, H + P - ky);
        for (int kx = 0; kx < K; ++kx) {
          const double w = layer.weights[layer.weight_index(oc, ic, ky, kx)];
          if (w == 0.0) continue;
          const int x0 = std::max(0, P - kx);
          const int x1 = std::min(Wo, W + P - kx);
          for (int y = y0; y < y1; ++y) {
            const double* src =
                in_plane + static_cast<std::size_t>(y + ky - P) * W + (x0 + kx - P);
            double* dst = out_plane + static_cast<std::size_t>(y) * Wo + x0;
            for (int t = 0; t < x1 - x0; ++t) dst[t] += w * src[t];
          }
        }
      }
    }
  }
  return out;
}

struct ConvGrads {
  Tensor grad_x;
  std::vector<double> grad_weights;
  std::vector<double> grad_bias;
};

/// Exact gradients of conv2d_forward with respect to input, weights, bias.
inline ConvGrads conv2d_backward(const Tensor& x, const ConvLayer& layer,
                                 const Tensor& grad_out) {
  if (x.rank() != 3 || grad_out.rank() != 3) {
    throw ValidationError("conv2d_backward: rank-3 tensors expected");
  }
  const int H = x.dim(1), W = x.dim(2);
  const int K = layer.kernel, P = layer.padding;
  const int Ho = H + 2 * P - K + 1, Wo = W + 2 * P - K + 1;
  if (x.dim(0) != layer.in_channels || grad_out.dim(0) != layer.out_channels ||
      grad_out.dim(1) != Ho || grad_out.dim(2) != Wo) {
    throw ValidationError("conv2d_backward: shape mismatch with forward");
  }

  ConvGrads g;
  g.grad_x = Tensor(x.shape);
  g.grad_weights.assign(layer.weights.size(), 0.0);
  g.grad_bias.assign(layer.bias.size(), 0.0);

  for (int oc = 0; oc < layer.out_channels; ++oc) {
    const double* go_plane =
        &grad_out.values[static_cast<std::size_t>(oc) * Ho * Wo];
    double bias_sum = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(Ho) * Wo; ++i) {
      bias_sum += go_plane[i];
    }
    g.grad_bias[static_cast<std::size_t>(oc)] = bias_sum;

    for (int ic = 0; ic < layer.in_channels; ++ic) {
      const double* in_plane = &x.values[static_cast<std::size_t>(ic) * H * W];
      double* gx_plane =
          &g.grad_x.values[static_cast<std::size_t>(ic) * H * W];
      for (int ky = 0; ky < K; ++ky) {
        const int y0 = std::max(0, P - ky);
        const int y1 = std::min(Ho, H + P - ky);
        for (int kx = 0; kx < K; ++kx) {
          const int x0 = std::max(0, P - kx);
          const int x1 = std::min(Wo, W + P - kx);
          const double w = layer.weights[layer.weight_index(oc, ic, ky, kx)];
          double wgrad = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* go_row = go_plane + static_cast<std::size_t>(y) * Wo + x0;
            const std::size_t in_off =
                static_cast<std::size_t>(y + ky - P) * W + (x0 + kx - P);
            const double* in_row = in_plane + in_off;
            double* gx_row = gx_plane + in_off;
            for (int t = 0; t < x1 - x0; ++t) {
              wgrad += go_row[t] * in_row[t];
              gx_row[t] += w * go_row[t];
            }
          }
          g.grad_weights[layer.weight_index(oc, ic, ky, kx)] += wgrad;
        }
      }
    }
  }
  return g;
}

struct PoolResult {
  Tensor out;
  std::vector<std::int32_t> argmax;  // flat input index per output cell
};

/// Non-overlapping 2x2 max pool, stride 2. Odd extents behave as if padded
/// with -inf; padded cells never win. Ties go to the first cell in
/// row-major scan order.
inline PoolResult maxpool2_forward(const Tensor& x) {
  if (x.rank() != 3) throw ValidationError("maxpool2_forward: rank-3 input expected");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int Ho = (H + 1) / 2, Wo = (W + 1) / 2;
  PoolResult res{Tensor({C, Ho, Wo}), {}};
  res.argmax.assign(static_cast<std::size_t>(C) * Ho * Wo, 0);
  for (int c = 0; c < C; ++c) {
    const double* in_plane = &x.values[static_cast<std::size_t>(c) * H * W];
    for (int oy = 0; oy < Ho; ++oy) {
      for (int ox = 0; ox < Wo; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::int32_t best_idx = -1;
        for (int dy = 0; dy < 2; ++dy) {
          const int iy = 2 * oy + dy;
          if (iy >= H) break;
          for (int dx = 0; dx < 2; ++dx) {
            const int ix = 2 * ox + dx;
            if (ix >= W) break;
            const double v = in_plane[static_cast<std::size_t>(iy) * W + ix];
            if (v > best) {
              best = v;
              best_idx = static_cast<std::int32_t>(
                  (static_cast<std::size_t>(c) * H + iy) * W + ix);
            }
          }
        }
        const std::size_t o =
            (static_cast<std::size_t>(c) * Ho + oy) * Wo + ox;
        res.out.values[o] = best;
        res.argmax[o] = best_idx;
      }
    }
  }
  return res;
}

/// Routes each output gradient to the input cell that won its window.
inline Tensor maxpool2_backward(const Tensor& grad_out,
                                const std::vector<std::int32_t>& argmax,
                                const std::vector<int>& input_shape) {
  if (grad_out.size() != argmax.size()) {
    throw ValidationError("maxpool2_backward: argmax size mismatch");
  }
  Tensor grad_x(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    grad_x.values[static_cast<std::size_t>(argmax[i])] += grad_out.values[i];
  }
  return grad_x;
}

inline Tensor relu_forward(const Tensor& x) {
  Tensor out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.values[i] = x.values[i] > 0.0 ? x.values[i] : 0.0;
  }
  return out;
}

/// Masks grad_out by x > 0, where x is the rectifier's input.
inline Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  if (!same_shape(x, grad_out)) {
    throw ValidationError("relu_backward: shape mismatch");
  }
  Tensor grad_x(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    grad_x.values[i] = x.values[i] > 0.0 ? grad_out.values[i] : 0.0;
  }
  return grad_x;
}

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates for one flat parameter vector.
struct AdamState {
  std::int64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Standard bias-corrected Adam update over a flat parameter vector.
inline void adam_step(double* params, const double* grads, std::size_t n,
                      AdamState& state, const AdamConfig& cfg) {
  if (state.m.size() != n || state.v.size() != n) {
    throw ValidationError("adam_step: state size mismatch");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

}  // namespace crowdmap
