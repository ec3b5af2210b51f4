/*
 * Copyright 2026 The ssdg Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SSDG_NETWORK_HPP_
#define SSDG_NETWORK_HPP_

// Small multilayer perceptron with a single dropout layer between the feature
// extractor and the linear classifier, plus its reverse-mode gradients and a
// Nesterov-momentum SGD optimizer.
//
// Layer order:  x -> [Linear -> ReLU] * H -> features -> Dropout -> Linear
//               -> softmax.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssdg/error.hpp"
#include "ssdg/random.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg {

struct NetworkSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 0;
  double dropout_rate = 0.0;

  // Width of the penultimate (feature) layer.
  std::size_t feature_dim() const {
    return hidden_dims.empty() ? input_dim : hidden_dims.back();
  }

  void validate() const {
    if (input_dim == 0) throw Error("network: input_dim must be positive");
    for (std::size_t h : hidden_dims) {
      if (h == 0) throw Error("network: hidden widths must be positive");
    }
    if (num_classes < 2) throw Error("network: need at least 2 classes");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
      throw Error("network: dropout rate must lie in [0, 1)");
    }
  }

  bool operator==(const NetworkSpec&) const = default;
};

enum class ForwardMode { kEval, kTrain, kMcDropout };

inline bool dropout_active(ForwardMode mode) {
  return mode != ForwardMode::kEval;
}

inline std::string hidden_weight_name(std::size_t l) {
  return "layer" + std::to_string(l) + ".weight";
}
inline std::string hidden_bias_name(std::size_t l) {
  return "layer" + std::to_string(l) + ".bias";
}
inline const char* kClassifierWeight = "classifier.weight";
inline const char* kClassifierBias = "classifier.bias";

// All-zero parameters with the layout implied by `spec`.
inline ParamSet zero_params(const NetworkSpec& spec) {
  spec.validate();
  ParamSet p;
  std::size_t in = spec.input_dim;
  for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
    p.insert(hidden_weight_name(l), Tensor({spec.hidden_dims[l], in}));
    p.insert(hidden_bias_name(l), Tensor({spec.hidden_dims[l]}));
    in = spec.hidden_dims[l];
  }
  p.insert(kClassifierWeight, Tensor({spec.num_classes, in}));
  p.insert(kClassifierBias, Tensor({spec.num_classes}));
  return p;
}

// He-normal weights for ReLU layers, Glorot-scaled classifier, zero biases.
inline ParamSet init_params(const NetworkSpec& spec, Rng& rng) {
  ParamSet p = zero_params(spec);
  std::size_t in = spec.input_dim;
  for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    for (double& w : p.at(hidden_weight_name(l)).data()) w = scale * rng.normal();
    in = spec.hidden_dims[l];
  }
  const double scale =
      std::sqrt(2.0 / static_cast<double>(in + spec.num_classes));
  for (double& w : p.at(kClassifierWeight).data()) w = scale * rng.normal();
  return p;
}

inline void check_params(const NetworkSpec& spec, const ParamSet& params) {
  zero_params(spec).require_layout(params, "parameters do not match network");
}

// Multipliers for inverted dropout: 0 with probability p, else 1/(1-p).
// Eval mode yields an all-ones mask without consuming randomness.
inline Tensor dropout_mask(const std::vector<std::size_t>& shape, double p,
                           ForwardMode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw Error("dropout: rate must lie in [0, 1), got " + std::to_string(p));
  }
  Tensor mask(shape);
  if (!dropout_active(mode)) {
    std::fill(mask.data().begin(), mask.data().end(), 1.0);
    return mask;
  }
  const double keep_scale = 1.0 / (1.0 - p);
  for (double& m : mask.data()) m = rng.uniform() < p ? 0.0 : keep_scale;
  return mask;
}

inline Tensor dropout_apply(const Tensor& x, double p, ForwardMode mode,
                            Rng& rng) {
  Tensor mask = dropout_mask(x.shape(), p, mode, rng);
  if (!dropout_active(mode)) return x;
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return out;
}

// Row-wise numerically stable softmax.
inline Tensor softmax_rows(const Tensor& logits) {
  Tensor out = logits;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double m = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - m);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return out;
}

inline constexpr double kLogFloor = 1e-12;

// -log(max(p[target], 1e-12)).
inline double cross_entropy(std::span<const double> probs,
                            std::size_t target_class) {
  if (target_class >= probs.size()) {
    throw Error("cross_entropy: class " + std::to_string(target_class) +
                " out of range for " + std::to_string(probs.size()) +
                " classes");
  }
  return -std::log(std::max(probs[target_class], kLogFloor));
}

// Lowest index wins ties.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// Everything the backward pass needs from one batched forward.
struct ForwardTrace {
  std::vector<Tensor> layer_inputs;  // input to hidden layer l
  std::vector<Tensor> activations;   // post-ReLU output of hidden layer l
  Tensor features;                   // pre-dropout penultimate activation
  Tensor mask;                       // dropout multipliers
  Tensor dropped;                    // features * mask
  Tensor logits;
  Tensor probs;
};

namespace detail {

// out[b, o] = bias[o] + sum_i weight[o, i] * x[b, i]
inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const std::size_t batch = x.rows();
  const std::size_t in = weight.dim(1);
  const std::size_t out_dim = weight.dim(0);
  Tensor out = Tensor::matrix(batch, out_dim);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.data().data() + b * in;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wr = weight.data().data() + o * in;
      double acc = bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      out(b, o) = acc;
    }
  }
  return out;
}

// Accumulates weight/bias gradients and returns d(input).
inline Tensor linear_backward(const Tensor& x, const Tensor& weight,
                              const Tensor& dout, Tensor& dweight,
                              Tensor& dbias, bool need_dinput) {
  const std::size_t batch = x.rows();
  const std::size_t in = weight.dim(1);
  const std::size_t out_dim = weight.dim(0);
  Tensor dx;
  if (need_dinput) dx = Tensor::matrix(batch, in);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.data().data() + b * in;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double g = dout(b, o);
      if (g == 0.0) continue;
      dbias[o] += g;
      double* dw = dweight.data().data() + o * in;
      const double* wr = weight.data().data() + o * in;
      for (std::size_t i = 0; i < in; ++i) dw[i] += g * xr[i];
      if (need_dinput) {
        double* dxr = dx.data().data() + b * in;
        for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
      }
    }
  }
  return dx;
}

inline void check_input(const NetworkSpec& spec, const Tensor& x) {
  if (x.rank() != 2 || x.cols() != spec.input_dim) {
    throw ShapeError("x", "expected [batch, " + std::to_string(spec.input_dim) +
                              "], got " + shape_string(x.shape()));
  }
}

}  // namespace detail

// Feature extractor only (no dropout, no classifier).
inline Tensor extract_features(const NetworkSpec& spec, const ParamSet& params,
                               const Tensor& x) {
  detail::check_input(spec, x);
  Tensor h = x;
  for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
    h = detail::linear(h, params.at(hidden_weight_name(l)),
                       params.at(hidden_bias_name(l)));
    for (double& v : h.data()) v = std::max(v, 0.0);
  }
  return h;
}

// Dropout + classifier + softmax over precomputed features. Because the only
// dropout layer sits after the feature extractor, repeated stochastic passes
// over the same input can share one feature computation.
inline Tensor classify_features(const NetworkSpec& spec, const ParamSet& params,
                                const Tensor& features, ForwardMode mode,
                                Rng& rng) {
  Tensor dropped = dropout_apply(features, spec.dropout_rate, mode, rng);
  return softmax_rows(
      detail::linear(dropped, params.at(kClassifierWeight), params.at(kClassifierBias)));
}

inline ForwardTrace forward_trace(const NetworkSpec& spec,
                                  const ParamSet& params, const Tensor& x,
                                  ForwardMode mode, Rng& rng) {
  check_params(spec, params);
  detail::check_input(spec, x);
  ForwardTrace t;
  Tensor h = x;
  for (std::size_t l = 0; l < spec.hidden_dims.size(); ++l) {
    t.layer_inputs.push_back(h);
    h = detail::linear(h, params.at(hidden_weight_name(l)),
                       params.at(hidden_bias_name(l)));
    for (double& v : h.data()) v = std::max(v, 0.0);
    t.activations.push_back(h);
  }
  t.features = h;
  t.mask = dropout_mask(h.shape(), spec.dropout_rate, mode, rng);
  t.dropped = h;
  if (dropout_active(mode)) {
    for (std::size_t i = 0; i < h.size(); ++i) t.dropped[i] *= t.mask[i];
  }
  t.logits = detail::linear(t.dropped, params.at(kClassifierWeight),
                            params.at(kClassifierBias));
  t.probs = softmax_rows(t.logits);
  return t;
}

struct ForwardResult {
  Tensor probs;     // [batch, C]
  Tensor features;  // [batch, feature_dim], pre-dropout
};

inline ForwardResult forward(const NetworkSpec& spec, const ParamSet& params,
                             const Tensor& x, ForwardMode mode, Rng& rng) {
  ForwardTrace t = forward_trace(spec, params, x, mode, rng);
  return {std::move(t.probs), std::move(t.features)};
}

// Convenience for Eval mode, which draws no randomness.
inline ForwardResult forward_eval(const NetworkSpec& spec,
                                  const ParamSet& params, const Tensor& x) {
  Rng unused(0);
  return forward(spec, params, x, ForwardMode::kEval, unused);
}

// Gradient of sum_b weight_b * -log(max(p_b[target_b], eps)) w.r.t. the
// logits. The floor is flat, so rows below it contribute nothing.
inline void add_cross_entropy_grad(const Tensor& probs, std::size_t row,
                                   std::size_t target, double weight,
                                   Tensor& dlogits) {
  if (probs(row, target) < kLogFloor || weight == 0.0) return;
  for (std::size_t c = 0; c < probs.cols(); ++c) {
    dlogits(row, c) += weight * (probs(row, c) - (c == target ? 1.0 : 0.0));
  }
}

// Reverse pass from d(loss)/d(logits) to parameter gradients.
inline ParamSet backward(const NetworkSpec& spec, const ParamSet& params,
                         const ForwardTrace& trace, const Tensor& dlogits,
                         const std::string& context = "backward") {
  if (dlogits.shape() != trace.logits.shape()) {
    throw ShapeError("dlogits", "expected " + shape_string(trace.logits.shape()) +
                                    ", got " + shape_string(dlogits.shape()));
  }
  ParamSet grads = params.zeros_like();
  const bool need_hidden = !spec.hidden_dims.empty();
  Tensor d = detail::linear_backward(
      trace.dropped, params.at(kClassifierWeight), dlogits,
      grads.at(kClassifierWeight), grads.at(kClassifierBias), need_hidden);
  if (need_hidden) {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= trace.mask[i];
    for (std::size_t l = spec.hidden_dims.size(); l-- > 0;) {
      const Tensor& act = trace.activations[l];
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (act[i] <= 0.0) d[i] = 0.0;
      }
      d = detail::linear_backward(trace.layer_inputs[l],
                                  params.at(hidden_weight_name(l)), d,
                                  grads.at(hidden_weight_name(l)),
                                  grads.at(hidden_bias_name(l)), l > 0);
    }
  }
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) throw NumericError(context, "gradient of '" + name + "'");
  }
  return grads;
}

inline void add_scaled(ParamSet& acc, const ParamSet& other, double scale) {
  acc.require_layout(other, "add_scaled");
  for (auto& [name, t] : acc) {
    const Tensor& o = other.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += scale * o[i];
  }
}

struct OptimizerState {
  ParamSet velocity;
  double lr = 0.03;
  double momentum = 0.9;

  static OptimizerState for_params(const ParamSet& params, double lr,
                                   double momentum) {
    if (!(lr > 0.0)) throw Error("optimizer: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw Error("optimizer: momentum must lie in [0, 1)");
    }
    return {params.zeros_like(), lr, momentum};
  }
};

// Nesterov momentum:  v' = m v + g ;  w' = w - lr (g + m v').
inline void sgd_nesterov_step(ParamSet& params, const ParamSet& grads,
                              OptimizerState& state,
                              const std::string& context = "sgd step") {
  params.require_layout(grads, "sgd step gradients");
  params.require_layout(state.velocity, "sgd step velocity");
  const double m = state.momentum;
  for (auto& [name, w] : params) {
    const Tensor& g = grads.at(name);
    Tensor& v = state.velocity.at(name);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double nv = m * v[i] + g[i];
      const double nw = w[i] - state.lr * (g[i] + m * nv);
      if (!std::isfinite(nw) || !std::isfinite(nv)) {
        throw NumericError(context, "update of '" + name + "'");
      }
      v[i] = nv;
      w[i] = nw;
    }
  }
}

}  // namespace ssdg

#endif  // SSDG_NETWORK_HPP_
