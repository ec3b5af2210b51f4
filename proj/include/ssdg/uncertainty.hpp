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

#ifndef SSDG_UNCERTAINTY_HPP_
#define SSDG_UNCERTAINTY_HPP_

// Uncertainty-guided pseudo-label selection.
//
// For a weak view u' the network is run N times with dropout active, giving
// probability rows c[N, C]. The per-class population variance V over the
// passes is mapped to a certainty kappa = 1 - tanh(V). A pseudo-label is kept
// only when the max probability of the deterministic prediction reaches tau
// AND the certainty of the predicted class reaches eta.
//
// Note: each V[j] is the variance of values in [0, 1], so V[j] <= 1/4 and
// kappa >= 1 - tanh(0.25) ~= 0.7551. Thresholds eta below that never reject.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ssdg/error.hpp"
#include "ssdg/network.hpp"
#include "ssdg/random.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg {

// Smallest certainty reachable by a probability-valued variance.
inline const double kMinCertainty = 1.0 - std::tanh(0.25);

struct UncertaintyProfile {
  Tensor mc_probs;                // [N, C]
  std::vector<double> variance;   // V, length C
  std::vector<double> certainty;  // kappa, length C
};

struct GateDecision {
  std::size_t pseudo_label = 0;
  double confidence = 0.0;
  double certainty_at_label = 1.0;
  bool passed_confidence = false;
  bool passed_certainty = false;
  bool selected = false;
};

// Seed of MC pass `pass` for example `example_id`.
inline std::uint64_t mc_pass_seed(std::uint64_t base_seed, std::uint64_t example_id,
                                  std::uint64_t pass) {
  return derive_seed(base_seed, {tag("mc_pass"), example_id, pass});
}

// N dropout-active forwards of one example's precomputed features.
inline Tensor mc_passes_from_features(const NetworkSpec& spec, const ParamSet& params,
                                      std::span<const double> features, std::size_t passes,
                                      std::uint64_t base_seed, std::uint64_t example_id) {
  if (passes == 0) throw Error("mc_passes: need at least one pass");
  const std::size_t width = features.size();
  Tensor f({1, width}, std::vector<double>(features.begin(), features.end()));
  Tensor out = Tensor::matrix(passes, spec.num_classes);
  for (std::size_t i = 0; i < passes; ++i) {
    Rng rng(mc_pass_seed(base_seed, example_id, i));
    Tensor p = classify_features(spec, params, f, ForwardMode::kMcDropout, rng);
    std::copy(p.data().begin(), p.data().end(), out.row(i).begin());
  }
  return out;
}

// N McDropout forwards of a single input row u'.
inline Tensor mc_passes(const NetworkSpec& spec, const ParamSet& params,
                        std::span<const double> x, std::size_t passes,
                        std::uint64_t base_seed, std::uint64_t example_id) {
  check_params(spec, params);
  Tensor in({1, x.size()}, std::vector<double>(x.begin(), x.end()));
  Tensor features = extract_features(spec, params, in);
  return mc_passes_from_features(spec, params, features.row(0), passes, base_seed,
                                 example_id);
}

// Population variance along the pass dimension: V[j] = mean_i (c[i,j] - m_j)^2.
inline std::vector<double> predictive_variance(const Tensor& c) {
  if (c.rank() != 2 || c.rows() == 0) {
    throw ShapeError("mc_probs", "expected non-empty [N, C], got " + shape_string(c.shape()));
  }
  const std::size_t n = c.rows(), k = c.cols();
  // Deviations are taken from the first row before averaging, so identical
  // rows give a variance of exactly zero.
  std::vector<double> shift(k, 0.0), var(k, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) shift[j] += c(i, j) - c(0, j);
  }
  for (double& m : shift) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double d = (c(i, j) - c(0, j)) - shift[j];
      var[j] += d * d;
    }
  }
  for (double& v : var) v /= static_cast<double>(n);
  return var;
}

// kappa = 1 - tanh(V), elementwise.
inline std::vector<double> certainty(std::span<const double> variance) {
  std::vector<double> k;
  k.reserve(variance.size());
  for (double v : variance) {
    if (!(v >= 0.0)) throw Error("certainty: negative or NaN variance " + std::to_string(v));
    k.push_back(1.0 - std::tanh(v));
  }
  return k;
}

inline UncertaintyProfile uncertainty_profile(Tensor mc_probs) {
  UncertaintyProfile p;
  p.variance = predictive_variance(mc_probs);
  p.certainty = certainty(p.variance);
  p.mc_probs = std::move(mc_probs);
  return p;
}

// Confidence-only gate: max(q) >= tau.
inline bool confidence_gate(std::span<const double> q, double tau) {
  double m = q.empty() ? 0.0 : q[0];
  for (double v : q) m = std::max(m, v);
  return m >= tau;
}

// Decision of the confidence-only policy; the certainty test is vacuous.
inline GateDecision confidence_decision(std::span<const double> q, double tau) {
  GateDecision d;
  d.pseudo_label = argmax(q);
  d.confidence = q[d.pseudo_label];
  d.passed_confidence = d.confidence >= tau;
  d.passed_certainty = true;
  d.selected = d.passed_confidence;
  return d;
}

// g = 1[max(q) >= tau] * 1[kappa(argmax q) >= eta].
inline GateDecision upl_gate(std::span<const double> q, std::span<const double> kappa,
                             double tau, double eta) {
  if (kappa.size() != q.size()) {
    throw ShapeError("kappa", "length " + std::to_string(kappa.size()) + " vs " +
                                  std::to_string(q.size()) + " classes");
  }
  GateDecision d = confidence_decision(q, tau);
  d.certainty_at_label = kappa[d.pseudo_label];
  d.passed_certainty = d.certainty_at_label >= eta;
  d.selected = d.passed_confidence && d.passed_certainty;
  return d;
}

}  // namespace ssdg

#endif  // SSDG_UNCERTAINTY_HPP_
