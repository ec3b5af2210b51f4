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

#ifndef SSDG_AVERAGING_HPP_
#define SSDG_AVERAGING_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "ssdg/error.hpp"
#include "ssdg/tensor.hpp"

namespace ssdg {

struct CheckpointTriple {
  ParamSet best;
  ParamSet last;
  ParamSet ema;

  void validate() const {
    best.require_layout(last, "checkpoint triple (best vs last)");
    best.require_layout(ema, "checkpoint triple (best vs ema)");
  }
};

struct EmaState {
  ParamSet shadow;
  double decay = 0.999;
};

// shadow' = decay * shadow + (1 - decay) * live
inline void ema_update(EmaState& state, const ParamSet& live) {
  if (!(state.decay >= 0.0 && state.decay <= 1.0)) {
    throw Error("ema_update: decay must lie in [0, 1]");
  }
  state.shadow.require_layout(live, "ema_update");
  const double d = state.decay;
  for (auto& [name, s] : state.shadow) {
    const Tensor& w = live.at(name);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = d * s[i] + (1.0 - d) * w[i];
  }
}

// Index of the epoch with maximal validation accuracy; earliest wins ties.
inline std::size_t best_epoch_index(const std::vector<double>& accuracies) {
  if (accuracies.empty()) throw Error("select_best: empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < accuracies.size(); ++i) {
    if (accuracies[i] > accuracies[best]) best = i;
  }
  return best;
}

inline const ParamSet& select_best(const std::vector<double>& accuracies,
                                   const std::vector<ParamSet>& checkpoints) {
  if (accuracies.size() != checkpoints.size()) {
    throw Error("select_best: " + std::to_string(accuracies.size()) + " accuracies for " +
                std::to_string(checkpoints.size()) + " checkpoints");
  }
  return checkpoints[best_epoch_index(accuracies)];
}

struct AveragingWeights {
  double alpha = 1.0 / 3.0;  // best
  double beta = 1.0 / 3.0;   // last
  double gamma = 1.0 / 3.0;  // ema

  void validate() const {
    if (!(alpha >= 0.0 && beta >= 0.0 && gamma >= 0.0)) {
      throw Error("averaging weights must be non-negative");
    }
    if (std::abs(alpha + beta + gamma - 1.0) > 1e-12) {
      throw Error("averaging weights must sum to 1");
    }
  }
};

// Elementwise sum_k w_k * theta_k. Terms are accumulated in argument order.
inline ParamSet weighted_sum(const std::vector<const ParamSet*>& sets,
                             const std::vector<double>& weights) {
  if (sets.empty()) throw Error("weighted_sum: no checkpoints");
  for (std::size_t k = 1; k < sets.size(); ++k) {
    sets[0]->require_layout(*sets[k], "model averaging");
  }
  ParamSet out = sets[0]->zeros_like();
  for (auto& [name, t] : out) {
    for (std::size_t k = 0; k < sets.size(); ++k) {
      const Tensor& src = sets[k]->at(name);
      for (std::size_t i = 0; i < t.size(); ++i) t[i] += weights[k] * src[i];
    }
  }
  return out;
}

// theta_avg = alpha * theta_best + beta * theta_last + gamma * theta_ema
inline ParamSet model_average(const CheckpointTriple& triple,
                              const AveragingWeights& weights = {}) {
  weights.validate();
  return weighted_sum({&triple.best, &triple.last, &triple.ema},
                      {weights.alpha, weights.beta, weights.gamma});
}

enum class CheckpointKind { kBest, kLast, kEma };

inline std::string to_string(CheckpointKind k) {
  switch (k) {
    case CheckpointKind::kBest: return "best";
    case CheckpointKind::kLast: return "last";
    case CheckpointKind::kEma: return "ema";
  }
  return "?";
}

inline const ParamSet& checkpoint_of(const CheckpointTriple& t, CheckpointKind k) {
  switch (k) {
    case CheckpointKind::kBest: return t.best;
    case CheckpointKind::kLast: return t.last;
    case CheckpointKind::kEma: return t.ema;
  }
  return t.best;
}

// Equal-weight average over a subset. The subset is canonicalized first, so
// listing order and duplicates do not change the result.
inline ParamSet variant_average(const CheckpointTriple& triple,
                                std::vector<CheckpointKind> subset) {
  std::sort(subset.begin(), subset.end());
  subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
  if (subset.empty()) throw Error("variant_average: empty subset");
  if (subset.size() == 1) return checkpoint_of(triple, subset.front());
  std::vector<const ParamSet*> sets;
  for (auto k : subset) sets.push_back(&checkpoint_of(triple, k));
  return weighted_sum(sets, std::vector<double>(sets.size(), 1.0 / static_cast<double>(sets.size())));
}

}  // namespace ssdg

#endif  // SSDG_AVERAGING_HPP_
