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

#ifndef SSDG_FIXMATCH_HPP_
#define SSDG_FIXMATCH_HPP_

// Semi-supervised training loop over pooled source domains:
//   L_final = L_s + lambda * L_u
// with L_s the mean cross entropy on labelled examples and L_u the
// gate-masked cross entropy between pseudo-labels from weak views and
// predictions on strong views, normalized by the unlabelled batch size.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssdg/averaging.hpp"
#include "ssdg/data.hpp"
#include "ssdg/error.hpp"
#include "ssdg/metrics.hpp"
#include "ssdg/network.hpp"
#include "ssdg/random.hpp"
#include "ssdg/tensor.hpp"
#include "ssdg/uncertainty.hpp"

namespace ssdg {

enum class GatePolicy { kConfidenceOnly, kUpl };

inline std::string to_string(GatePolicy g) {
  return g == GatePolicy::kUpl ? "upl" : "confidence";
}

struct TrainConfig {
  double tau = 0.95;
  double lambda = 1.0;
  std::size_t batch_size = 8;
  std::size_t mu = 5;
  double lr = 0.03;
  double momentum = 0.9;
  std::size_t epochs = 10;
  std::size_t iterations_per_epoch = 50;
  double eta = 0.5;
  std::size_t mc_passes = 10;
  double dropout_rate = 0.5;
  double ema_decay = 0.999;
  AveragingWeights ma_weights;
  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t num_classes = 0;  // 0: infer from the labelled data
  AugmentationConfig augmentation;
  std::size_t ece_bins = 10;
  // Skip the unlabelled branch entirely (supervised reference runs).
  bool supervised_only = false;
  // Run MC passes under the confidence-only policy too, for metrics.
  bool track_uncertainty = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(tau > 0.0 && tau <= 1.0)) throw Error("config: tau must lie in (0, 1]");
    if (!(lambda >= 0.0)) throw Error("config: lambda must be >= 0");
    if (batch_size == 0 || mu == 0) throw Error("config: batch_size and mu must be positive");
    if (epochs == 0 || iterations_per_epoch == 0) {
      throw Error("config: epochs and iterations_per_epoch must be positive");
    }
    if (!(eta > 0.0 && eta <= 1.0)) throw Error("config: eta must lie in (0, 1]");
    if (mc_passes == 0) throw Error("config: mc_passes must be positive");
    if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw Error("config: ema_decay must lie in [0, 1]");
    if (ece_bins == 0) throw Error("config: ece_bins must be positive");
    ma_weights.validate();
    augmentation.validate();
  }
};

// Training-side view of one source domain. Unlabelled examples carry no
// labels; validation examples are labelled.
struct SourceDomain {
  std::string domain_id;
  std::vector<Example> labelled;
  std::vector<Example> unlabelled;
  std::vector<Example> validation;
};

struct Batch {
  Tensor labelled_x;  // [B, d]
  std::vector<std::size_t> labels;
  Tensor raw_u;     // [mu * B, d]
  Tensor weak_u;    // u'
  Tensor strong_u;  // u''
  std::vector<std::size_t> unlabelled_ids;
};

// Uniform sampling with replacement from the pooled sets. Draw order: B
// labelled indices, then per unlabelled slot its index, weak view and strong
// view.
inline Batch compose_batch(std::span<const Example> labelled_pool,
                           std::span<const Example> unlabelled_pool, std::size_t batch_size,
                           std::size_t mu, const AugmentationConfig& aug, Rng& rng) {
  if (labelled_pool.empty()) throw Error("compose_batch: empty labelled pool");
  if (unlabelled_pool.empty()) throw Error("compose_batch: empty unlabelled pool");
  const std::size_t d = labelled_pool.front().features.size();
  Batch b;
  b.labelled_x = Tensor::matrix(batch_size, d);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const Example& e = labelled_pool[rng.index(labelled_pool.size())];
    if (!e.label) throw Error("compose_batch: labelled pool example " + std::to_string(e.id) + " has no label");
    if (e.features.size() != d) throw ShapeError("features", "inconsistent dimension in labelled pool");
    std::copy(e.features.begin(), e.features.end(), b.labelled_x.row(i).begin());
    b.labels.push_back(*e.label);
  }
  const std::size_t n_u = mu * batch_size;
  b.raw_u = Tensor::matrix(n_u, d);
  b.weak_u = Tensor::matrix(n_u, d);
  b.strong_u = Tensor::matrix(n_u, d);
  for (std::size_t i = 0; i < n_u; ++i) {
    const Example& e = unlabelled_pool[rng.index(unlabelled_pool.size())];
    if (e.features.size() != d) throw ShapeError("features", "inconsistent dimension in unlabelled pool");
    std::copy(e.features.begin(), e.features.end(), b.raw_u.row(i).begin());
    const auto weak = weak_augment(e.features, aug, rng);
    const auto strong = strong_augment(e.features, aug, rng);
    std::copy(weak.begin(), weak.end(), b.weak_u.row(i).begin());
    std::copy(strong.begin(), strong.end(), b.strong_u.row(i).begin());
    b.unlabelled_ids.push_back(e.id);
  }
  return b;
}

// -(1/|S|) sum_j log p_j[y_j]
inline double supervised_loss(const Tensor& probs, std::span<const std::size_t> labels) {
  if (labels.empty()) throw Error("supervised_loss: empty batch");
  if (probs.rank() != 2 || probs.rows() != labels.size()) {
    throw ShapeError("probs", "expected one row per label");
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < labels.size(); ++j) sum += cross_entropy(probs.row(j), labels[j]);
  return sum / static_cast<double>(labels.size());
}

// (1/|U|) sum_u g_u * CE(pseudo_label_u, q_u''), |U| = number of decisions.
inline double unsupervised_loss(std::span<const GateDecision> gates, const Tensor& strong_probs) {
  if (gates.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < gates.size(); ++i) {
    if (gates[i].selected) sum += cross_entropy(strong_probs.row(i), gates[i].pseudo_label);
  }
  return sum / static_cast<double>(gates.size());
}

inline double total_loss(double l_s, double l_u, double lambda) { return l_s + lambda * l_u; }

struct LossBreakdown {
  double l_s = 0.0;
  double l_u = 0.0;
  double l_final = 0.0;
  std::size_t gated_count = 0;
};

// Which scalar objective_gradients differentiates.
enum class LossComposition { kSupervised, kUnsupervised, kFinal };

struct ObjectiveResult {
  LossBreakdown losses;
  double objective = 0.0;  // the differentiated scalar
  ParamSet grads;
};

// Seeds of the two dropout streams used in one training iteration.
struct DropoutSeeds {
  std::uint64_t labelled = 0;
  std::uint64_t strong = 0;
};

// Losses and their gradient for one batch. Pseudo-labels and gates are
// constants (no gradient flows through the weak-view prediction).
inline ObjectiveResult objective_gradients(const NetworkSpec& spec, const ParamSet& params,
                                           const Batch& batch, std::span<const GateDecision> gates,
                                           double lambda, DropoutSeeds seeds,
                                           LossComposition composition = LossComposition::kFinal,
                                           const std::string& context = "objective") {
  if (gates.size() != batch.strong_u.rows() && !gates.empty()) {
    throw ShapeError("gates", "one decision per unlabelled example expected");
  }
  const double w_s = composition == LossComposition::kUnsupervised ? 0.0 : 1.0;
  const double w_u = composition == LossComposition::kSupervised ? 0.0
                     : composition == LossComposition::kUnsupervised ? 1.0
                                                                     : lambda;
  ObjectiveResult r;
  Rng lab_rng(seeds.labelled);
  const ForwardTrace lab = forward_trace(spec, params, batch.labelled_x, ForwardMode::kTrain, lab_rng);
  r.losses.l_s = supervised_loss(lab.probs, batch.labels);
  Tensor dlab(lab.logits.shape());
  const double scale_s = w_s / static_cast<double>(batch.labels.size());
  for (std::size_t j = 0; j < batch.labels.size(); ++j) {
    add_cross_entropy_grad(lab.probs, j, batch.labels[j], scale_s, dlab);
  }
  r.grads = backward(spec, params, lab, dlab, context);

  for (const auto& g : gates) r.losses.gated_count += g.selected ? 1 : 0;
  if (r.losses.gated_count > 0) {
    Rng strong_rng(seeds.strong);
    const ForwardTrace st = forward_trace(spec, params, batch.strong_u, ForwardMode::kTrain, strong_rng);
    r.losses.l_u = unsupervised_loss(gates, st.probs);
    if (w_u != 0.0) {
      Tensor dst(st.logits.shape());
      const double scale_u = w_u / static_cast<double>(gates.size());
      for (std::size_t i = 0; i < gates.size(); ++i) {
        if (gates[i].selected) add_cross_entropy_grad(st.probs, i, gates[i].pseudo_label, scale_u, dst);
      }
      add_scaled(r.grads, backward(spec, params, st, dst, context), 1.0);
    }
  }
  r.losses.l_final = total_loss(r.losses.l_s, r.losses.l_u, lambda);
  r.objective = w_s * r.losses.l_s + w_u * r.losses.l_u;
  if (!std::isfinite(r.losses.l_final) || !std::isfinite(r.objective)) {
    throw NumericError(context, "loss");
  }
  return r;
}

// Gate decisions for the unlabelled part of a batch plus the uncertainty
// data behind them.
struct GatingResult {
  Tensor weak_probs;                             // Eval-mode q_{u'}
  std::vector<GateDecision> decisions;
  std::vector<std::vector<double>> variances;    // empty when MC passes skipped
  std::vector<std::vector<double>> certainties;  // empty when MC passes skipped
};

inline GatingResult gate_batch(const NetworkSpec& spec, const ParamSet& params, const Batch& batch,
                               GatePolicy policy, double tau, double eta, std::size_t mc_passes,
                               std::uint64_t mc_seed, bool run_mc,
                               const std::string& context = "gating") {
  GatingResult g;
  const Tensor features = extract_features(spec, params, batch.weak_u);
  Rng unused(0);
  g.weak_probs = classify_features(spec, params, features, ForwardMode::kEval, unused);
  if (!g.weak_probs.all_finite()) throw NumericError(context, "weak-view predictions");
  const bool need_mc = run_mc || policy == GatePolicy::kUpl;
  for (std::size_t i = 0; i < batch.weak_u.rows(); ++i) {
    const auto q = g.weak_probs.row(i);
    if (need_mc) {
      const Tensor c = mc_passes_from_features(spec, params, features.row(i), mc_passes, mc_seed,
                                               batch.unlabelled_ids[i]);
      g.variances.push_back(predictive_variance(c));
      g.certainties.push_back(certainty(g.variances.back()));
    }
    g.decisions.push_back(policy == GatePolicy::kUpl ? upl_gate(q, g.certainties.back(), tau, eta)
                                                     : confidence_decision(q, tau));
  }
  return g;
}

// Read-only view handed to per-iteration hooks.
struct IterationReport {
  std::size_t iteration = 0;  // global, 0-based
  std::size_t epoch = 0;      // 1-based
  const Batch* batch = nullptr;
  const GatingResult* gating = nullptr;  // null in supervised-only runs
  LossBreakdown losses;
  double lambda = 0.0;
};

struct TrainHooks {
  std::function<void(const IterationReport&)> on_iteration;
  std::function<void(const MetricsRecord&)> on_epoch;
  std::function<void(const std::string&)> on_warning;
};

// Evaluation-only inputs. Nothing here influences training or model
// selection.
struct EvalChannel {
  const HiddenLabels* hidden = nullptr;
  std::span<const Example> target;
};

struct TrainResult {
  NetworkSpec spec;
  CheckpointTriple checkpoints;
  std::size_t best_epoch = 0;  // 1-based
  std::vector<MetricsRecord> metrics;
  std::vector<BatchCalibrationRecord> calibration;
};

namespace detail {

template <typename Member>
std::vector<Example> pool(std::span<const SourceDomain> sources, Member member) {
  std::vector<Example> out;
  for (const auto& s : sources) out.insert(out.end(), (s.*member).begin(), (s.*member).end());
  return out;
}

inline std::size_t infer_num_classes(const std::vector<Example>& a, const std::vector<Example>& b) {
  std::size_t c = 0;
  for (const auto* v : {&a, &b}) {
    for (const auto& e : *v) {
      if (e.label) c = std::max(c, *e.label + 1);
    }
  }
  return c;
}

}  // namespace detail

inline TrainResult train_run(std::span<const SourceDomain> sources, const TrainConfig& config,
                             GatePolicy policy, const TrainHooks& hooks = {},
                             const EvalChannel& eval = {}) {
  config.validate();
  if (sources.empty()) throw Error("train_run: no source domains");
  if (sources.size() < 2 && hooks.on_warning) {
    hooks.on_warning("training on a single source domain");
  }
  const auto labelled = detail::pool(sources, &SourceDomain::labelled);
  const auto unlabelled = detail::pool(sources, &SourceDomain::unlabelled);
  const auto validation = detail::pool(sources, &SourceDomain::validation);
  if (labelled.empty()) throw Error("train_run: no labelled examples");
  if (validation.empty()) throw Error("train_run: no validation examples");
  if (unlabelled.empty() && !config.supervised_only) throw Error("train_run: no unlabelled examples");
  for (const auto& e : unlabelled) {
    if (e.label) throw Error("train_run: unlabelled example " + std::to_string(e.id) + " carries a label");
  }

  TrainResult result;
  NetworkSpec& spec = result.spec;
  spec.input_dim = labelled.front().features.size();
  spec.hidden_dims = config.hidden_dims;
  spec.num_classes = config.num_classes ? config.num_classes
                                        : detail::infer_num_classes(labelled, validation);
  spec.dropout_rate = config.dropout_rate;
  spec.validate();

  Rng init_rng(derive_seed(config.seed, {tag("init")}));
  ParamSet params = init_params(spec, init_rng);
  OptimizerState opt = OptimizerState::for_params(params, config.lr, config.momentum);
  EmaState ema{params, config.ema_decay};
  std::vector<ParamSet> epoch_checkpoints;
  std::vector<double> val_history;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<GateDecision> epoch_decisions;
    std::vector<std::size_t> epoch_ids;
    double unc_sum = 0.0;
    std::size_t unc_count = 0;
    double ece_sum = 0.0;
    std::size_t ece_batches = 0;

    for (std::size_t it = 0; it < config.iterations_per_epoch; ++it) {
      const std::size_t t = (epoch - 1) * config.iterations_per_epoch + it;
      const std::string context = "epoch " + std::to_string(epoch) + ", iteration " + std::to_string(t);
      Rng batch_rng(derive_seed(config.seed, {tag("batch"), t}));
      const Batch batch = config.supervised_only
                              ? compose_batch(labelled, labelled, config.batch_size, config.mu,
                                              config.augmentation, batch_rng)
                              : compose_batch(labelled, unlabelled, config.batch_size, config.mu,
                                              config.augmentation, batch_rng);
      const DropoutSeeds seeds{derive_seed(config.seed, {tag("dropout_labelled"), t}),
                               derive_seed(config.seed, {tag("dropout_strong"), t})};

      std::optional<GatingResult> gating;
      if (!config.supervised_only) {
        gating = gate_batch(spec, params, batch, policy, config.tau, config.eta, config.mc_passes,
                            derive_seed(config.seed, {tag("mc"), t}), config.track_uncertainty,
                            context);
        epoch_decisions.insert(epoch_decisions.end(), gating->decisions.begin(),
                               gating->decisions.end());
        epoch_ids.insert(epoch_ids.end(), batch.unlabelled_ids.begin(), batch.unlabelled_ids.end());
        if (!gating->variances.empty()) {
          BatchCalibrationRecord rec;
          rec.epoch = epoch;
          for (const auto& v : gating->variances) {
            double m = 0.0;
            for (double x : v) m += x;
            rec.example_uncertainty.push_back(m / static_cast<double>(v.size()));
            unc_sum += rec.example_uncertainty.back();
            ++unc_count;
          }
          if (eval.hidden) {
            if (auto e = hidden_ece(gating->weak_probs, batch.unlabelled_ids, *eval.hidden, config.ece_bins)) {
              rec.ece = *e;
              ece_sum += *e;
              ++ece_batches;
              result.calibration.push_back(std::move(rec));
            }
          }
        }
      }

      const std::vector<GateDecision> none;
      ObjectiveResult obj = objective_gradients(
          spec, params, batch, gating ? std::span<const GateDecision>(gating->decisions) : none,
          config.supervised_only ? 0.0 : config.lambda, seeds, LossComposition::kFinal, context);
      sgd_nesterov_step(params, obj.grads, opt, context);
      ema_update(ema, params);

      if (hooks.on_iteration) {
        IterationReport rep;
        rep.iteration = t;
        rep.epoch = epoch;
        rep.batch = &batch;
        rep.gating = gating ? &*gating : nullptr;
        rep.losses = obj.losses;
        rep.lambda = config.lambda;
        hooks.on_iteration(rep);
      }
    }

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.val_accuracy = evaluate_accuracy(spec, params, validation);
    if (!eval.target.empty()) rec.target_accuracy = evaluate_accuracy(spec, params, eval.target);
    if (!epoch_decisions.empty()) {
      static const HiddenLabels kNoTruth;
      const PlStats pl = pl_stats(epoch_decisions, epoch_ids, eval.hidden ? *eval.hidden : kNoTruth);
      rec.pl_precision = pl.precision;
      rec.pl_coverage = pl.coverage;
    }
    if (unc_count) rec.mean_uncertainty = unc_sum / static_cast<double>(unc_count);
    if (ece_batches) rec.ece = ece_sum / static_cast<double>(ece_batches);
    val_history.push_back(rec.val_accuracy);
    epoch_checkpoints.push_back(params);
    result.metrics.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }

  result.best_epoch = best_epoch_index(val_history) + 1;
  result.checkpoints.best = select_best(val_history, epoch_checkpoints);
  result.checkpoints.last = params;
  result.checkpoints.ema = ema.shadow;
  return result;
}

}  // namespace ssdg

#endif  // SSDG_FIXMATCH_HPP_
