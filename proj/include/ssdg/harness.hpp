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

#ifndef SSDG_HARNESS_HPP_
#define SSDG_HARNESS_HPP_

// Leave-one-domain-out protocol, multi-seed trials, the four-method grid and
// the ablations built on top of them.

#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssdg/averaging.hpp"
#include "ssdg/config.hpp"
#include "ssdg/data.hpp"
#include "ssdg/error.hpp"
#include "ssdg/fixmatch.hpp"
#include "ssdg/metrics.hpp"

namespace ssdg {

// Values reported for the full-scale (ResNet-50, real-image) setting. They
// are carried as metadata in report files and are not expected to be
// reproduced by the synthetic benchmarks.
namespace reference {
inline const std::vector<std::pair<std::string, double>> kOptimalEta{
    {"PACS", 0.2}, {"TerraIncognita", 0.5}, {"OfficeHome", 0.5}, {"VLCS", 0.7}};
// Average PACS accuracy for mu = 1..6.
inline const std::array<double, 6> kMuSweep{65.25, 71.90, 75.47, 73.7, 78.94, 78.22};
inline const std::array<std::size_t, 7> kTimingPasses{1, 5, 10, 20, 40, 80, 160};
inline const std::array<double, 7> kTimingMs{134.6, 135.1, 135.6, 137.5, 138.5, 141.7, 146.6};
// PACS average row of the averaging-variant ablation, in variant order.
inline const std::array<double, 7> kMaVariants{75.82, 75.76, 73.51, 77.26, 78.41, 75.86, 78.54};
}  // namespace reference

enum class InferenceModel { kBest, kAverage };

struct MethodPlan {
  GatePolicy gate;
  InferenceModel inference;
};

inline MethodPlan method_dispatch(Method m) {
  switch (m) {
    case Method::kFixMatch: return {GatePolicy::kConfidenceOnly, InferenceModel::kBest};
    case Method::kUpl: return {GatePolicy::kUpl, InferenceModel::kBest};
    case Method::kMa: return {GatePolicy::kConfidenceOnly, InferenceModel::kAverage};
    case Method::kUplm: return {GatePolicy::kUpl, InferenceModel::kAverage};
  }
  throw Error("method_dispatch: unknown method");
}

struct LodoSplit {
  std::vector<DomainSamples> sources;
  DomainSamples target;  // evaluation only
  std::vector<std::string> warnings;
};

inline LodoSplit leave_one_domain_out(const std::vector<DomainSamples>& benchmark,
                                      const std::string& target_id) {
  LodoSplit out;
  bool found = false;
  for (const auto& d : benchmark) {
    if (d.domain_id == target_id) {
      out.target = d;
      found = true;
    } else {
      out.sources.push_back(d);
    }
  }
  if (!found) throw Error("unknown target domain '" + target_id + "'");
  if (out.sources.empty()) throw Error("no source domains left after holding out '" + target_id + "'");
  if (out.sources.size() < 2) {
    out.warnings.push_back("only one source domain remains after holding out '" + target_id + "'");
  }
  return out;
}

struct PreparedSources {
  std::vector<SourceDomain> domains;
  HiddenLabels hidden;
};

// Per source domain: 90/10 train/validation split, then n labels per class
// from the training part; the rest of the training part is unlabelled.
inline PreparedSources prepare_sources(const std::vector<DomainSamples>& sources,
                                       std::size_t labels_per_class, double train_fraction,
                                       std::uint64_t seed) {
  PreparedSources out;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    auto [train, val] = train_val_split(sources[k], train_fraction, derive_seed(seed, {tag("val_split"), k}));
    DomainDataset ds = split_labelled(train, labels_per_class, derive_seed(seed, {tag("label_split"), k}));
    std::erase_if(val.examples, [](const Example& e) { return !e.label; });
    out.domains.push_back({sources[k].domain_id, std::move(ds.labelled), std::move(ds.unlabelled),
                           std::move(val.examples)});
    out.hidden.merge(ds.hidden);
  }
  return out;
}

// Fully supervised reference: every training-part example of every source is
// labelled.
inline PreparedSources prepare_supervised_sources(const std::vector<DomainSamples>& sources,
                                                  double train_fraction, std::uint64_t seed) {
  PreparedSources out;
  for (std::size_t k = 0; k < sources.size(); ++k) {
    auto [train, val] = train_val_split(sources[k], train_fraction, derive_seed(seed, {tag("val_split"), k}));
    std::erase_if(train.examples, [](const Example& e) { return !e.label; });
    std::erase_if(val.examples, [](const Example& e) { return !e.label; });
    out.domains.push_back({sources[k].domain_id, std::move(train.examples), {}, std::move(val.examples)});
  }
  return out;
}

inline ParamSet inference_params(const TrainResult& r, InferenceModel m, const AveragingWeights& w) {
  return m == InferenceModel::kBest ? r.checkpoints.best : model_average(r.checkpoints, w);
}

struct TrialRecord {
  std::string target;
  Method method = Method::kFixMatch;
  std::uint64_t seed = 0;
  double target_accuracy = 0.0;
  double best_val_accuracy = 0.0;
  TrainResult train;
  ParamSet inference;
};

struct TrialHooks {
  TrainHooks train;  // forwarded to every train_run
  std::function<void(const TrialRecord&)> on_trial;
  // Called with (target, method, seed) before each train_run. The returned
  // hooks, if any, replace `train` for that run.
  std::function<std::optional<TrainHooks>(const std::string&, Method, std::uint64_t)> per_run;
};

struct ResultRow {
  std::string target;
  Method method = Method::kFixMatch;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over seeds
  std::vector<double> per_seed;
};

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

// One (target, method) cell: a fresh label split, initialization and
// training run per seed; accuracy of the method's inference model on the
// held-out target.
inline ResultRow run_trials(const std::vector<DomainSamples>& benchmark, const std::string& target,
                            Method method, const ExperimentConfig& config,
                            const TrialHooks& hooks = {}) {
  if (config.seeds.empty()) throw Error("run_trials: no seeds");
  const LodoSplit split = leave_one_domain_out(benchmark, target);
  if (hooks.train.on_warning) {
    for (const auto& w : split.warnings) hooks.train.on_warning(w);
  }
  const MethodPlan plan = method_dispatch(method);
  ResultRow row{target, method, 0.0, 0.0, {}};
  for (std::uint64_t seed : config.seeds) {
    try {
      PreparedSources prepared = prepare_sources(split.sources, config.labels_per_class,
                                                 config.train_fraction, seed);
      TrainConfig tc = config.train;
      tc.seed = seed;
      TrainHooks th = hooks.train;
      if (hooks.per_run) {
        if (auto h = hooks.per_run(target, method, seed)) th = *h;
      }
      EvalChannel eval{&prepared.hidden, split.target.examples};
      TrialRecord rec;
      rec.target = target;
      rec.method = method;
      rec.seed = seed;
      rec.train = train_run(prepared.domains, tc, plan.gate, th, eval);
      rec.inference = inference_params(rec.train, plan.inference, tc.ma_weights);
      rec.target_accuracy = evaluate_accuracy(rec.train.spec, rec.inference, split.target.examples);
      rec.best_val_accuracy = rec.train.metrics[rec.train.best_epoch - 1].val_accuracy;
      row.per_seed.push_back(rec.target_accuracy);
      if (hooks.on_trial) hooks.on_trial(rec);
    } catch (const Error& e) {
      throw Error("trial (target '" + target + "', method " + to_string(method) + ", seed " +
                  std::to_string(seed) + ") failed: " + e.what());
    }
  }
  std::tie(row.mean, row.std) = mean_std(row.per_seed);
  return row;
}

// Target accuracy of a supervised model trained on all source labels.
inline ResultRow run_supervised_reference(const std::vector<DomainSamples>& benchmark,
                                          const std::string& target, const ExperimentConfig& config) {
  const LodoSplit split = leave_one_domain_out(benchmark, target);
  ResultRow row{target, Method::kFixMatch, 0.0, 0.0, {}};
  for (std::uint64_t seed : config.seeds) {
    PreparedSources prepared = prepare_supervised_sources(split.sources, config.train_fraction, seed);
    TrainConfig tc = config.train;
    tc.seed = seed;
    tc.supervised_only = true;
    TrainResult r = train_run(prepared.domains, tc, GatePolicy::kConfidenceOnly);
    row.per_seed.push_back(evaluate_accuracy(r.spec, r.checkpoints.best, split.target.examples));
  }
  std::tie(row.mean, row.std) = mean_std(row.per_seed);
  return row;
}

struct ResultsTable {
  std::vector<ResultRow> rows;

  // One row per method: mean of its per-target means; std over seeds of the
  // seed-wise mean across targets.
  std::vector<ResultRow> average_rows() const {
    std::vector<ResultRow> out;
    for (Method m : all_methods()) {
      std::vector<const ResultRow*> mine;
      for (const auto& r : rows) {
        if (r.method == m) mine.push_back(&r);
      }
      if (mine.empty()) continue;
      ResultRow avg{"average", m, 0.0, 0.0, {}};
      for (const auto* r : mine) avg.mean += r->mean;
      avg.mean /= static_cast<double>(mine.size());
      const std::size_t seeds = mine.front()->per_seed.size();
      bool aligned = true;
      for (const auto* r : mine) aligned = aligned && r->per_seed.size() == seeds;
      if (aligned) {
        for (std::size_t s = 0; s < seeds; ++s) {
          double v = 0.0;
          for (const auto* r : mine) v += r->per_seed[s];
          avg.per_seed.push_back(v / static_cast<double>(mine.size()));
        }
        avg.std = mean_std(avg.per_seed).second;
      }
      out.push_back(std::move(avg));
    }
    return out;
  }
};

inline const char* kResultsHeader = "target,method,mean_accuracy,std_accuracy,seeds";

inline void write_results_csv(const std::string& path, const ResultsTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << kResultsHeader << '\n';
  auto emit = [&](const ResultRow& r) {
    out << r.target << ',' << to_string(r.method) << ',' << format_number(r.mean) << ','
        << format_number(r.std) << ',' << r.per_seed.size() << '\n';
  };
  for (const auto& r : table.rows) emit(r);
  for (const auto& r : table.average_rows()) emit(r);
  if (!out) throw Error("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Certainty-threshold grid search.

struct GridPoint {
  double eta = 0.0;
  double mean_val_accuracy = 0.0;
};

struct GridSearchResult {
  std::vector<GridPoint> points;
  double best_eta = 0.0;
  std::size_t runs = 0;
};

// Trains UPL once per (eta, seed) and picks the eta with the highest mean
// best-epoch validation accuracy; ties go to the smallest eta.
inline GridSearchResult grid_search_eta(const std::vector<DomainSamples>& benchmark,
                                        const std::string& target, const ExperimentConfig& config,
                                        const std::vector<double>& values) {
  if (values.empty()) throw Error("grid_search_eta: empty grid");
  GridSearchResult out;
  std::optional<GridPoint> best;
  for (double eta : values) {
    if (!(eta > 0.0 && eta <= 1.0)) throw Error("grid_search_eta: eta values must lie in (0, 1]");
    ExperimentConfig c = config;
    c.train.eta = eta;
    double sum = 0.0;
    TrialHooks hooks;
    hooks.on_trial = [&](const TrialRecord& r) {
      sum += r.best_val_accuracy;
      ++out.runs;
    };
    run_trials(benchmark, target, Method::kUpl, c, hooks);
    GridPoint p{eta, sum / static_cast<double>(c.seeds.size())};
    out.points.push_back(p);
    if (!best || p.mean_val_accuracy > best->mean_val_accuracy ||
        (p.mean_val_accuracy == best->mean_val_accuracy && p.eta < best->eta)) {
      best = p;
    }
  }
  out.best_eta = best->eta;
  return out;
}

// ---------------------------------------------------------------------------
// Unlabelled-ratio sweep.

struct MuRow {
  std::size_t mu = 0;
  double mean = 0.0;
  double std = 0.0;
};

inline std::vector<MuRow> ablate_mu(const std::vector<DomainSamples>& benchmark, const std::string& target,
                                    Method method, const ExperimentConfig& config,
                                    const std::vector<std::size_t>& values) {
  std::vector<MuRow> out;
  for (std::size_t mu : values) {
    if (mu == 0) throw Error("ablate_mu: mu must be positive");
    ExperimentConfig c = config;
    c.train.mu = mu;
    const ResultRow r = run_trials(benchmark, target, method, c);
    out.push_back({mu, r.mean, r.std});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Averaging-variant ablation.

inline const std::array<const char*, 7> kMaVariantNames{
    "last", "best", "ema", "last+ema", "last+best", "best+ema", "avg"};

inline std::array<ParamSet, 7> ma_variants(const CheckpointTriple& t, const AveragingWeights& w) {
  using K = CheckpointKind;
  return {variant_average(t, {K::kLast}),
          variant_average(t, {K::kBest}),
          variant_average(t, {K::kEma}),
          variant_average(t, {K::kLast, K::kEma}),
          variant_average(t, {K::kLast, K::kBest}),
          variant_average(t, {K::kBest, K::kEma}),
          model_average(t, w)};
}

// Target accuracy of every variant, in kMaVariantNames order.
inline std::array<double, 7> ablate_ma_variants(const NetworkSpec& spec, const CheckpointTriple& triple,
                                                std::span<const Example> target,
                                                const AveragingWeights& weights = {}) {
  triple.validate();
  const auto variants = ma_variants(triple, weights);
  std::array<double, 7> acc{};
  for (std::size_t i = 0; i < variants.size(); ++i) acc[i] = evaluate_accuracy(spec, variants[i], target);
  return acc;
}

// ---------------------------------------------------------------------------
// MC-pass overhead.

struct TimingRow {
  std::size_t mc_passes = 0;
  double ms_per_iteration = 0.0;
  std::optional<double> reference_ms;
};

inline std::optional<double> reference_timing(std::size_t passes) {
  for (std::size_t i = 0; i < reference::kTimingPasses.size(); ++i) {
    if (reference::kTimingPasses[i] == passes) return reference::kTimingMs[i];
  }
  return std::nullopt;
}

// Mean wall-clock milliseconds per UPL training iteration for each pass
// count, after `warmup` untimed iterations.
inline std::vector<TimingRow> measure_mc_overhead(const std::vector<SourceDomain>& sources,
                                                  const TrainConfig& config,
                                                  const std::vector<std::size_t>& passes,
                                                  std::size_t warmup = 5, std::size_t timed = 50) {
  if (timed == 0) throw Error("measure_mc_overhead: need at least one timed iteration");
  std::vector<TimingRow> out;
  for (std::size_t n : passes) {
    if (n == 0) throw Error("measure_mc_overhead: pass counts must be positive");
    TrainConfig c = config;
    c.mc_passes = n;
    c.epochs = 1;
    c.iterations_per_epoch = warmup + timed + 1;
    std::vector<std::chrono::steady_clock::time_point> stamps;
    TrainHooks hooks;
    hooks.on_iteration = [&](const IterationReport&) { stamps.push_back(std::chrono::steady_clock::now()); };
    train_run(sources, c, GatePolicy::kUpl, hooks);
    // Iteration i (i >= 1) spans stamps[i-1] .. stamps[i].
    const auto span = stamps[warmup + timed] - stamps[warmup];
    const double ms = std::chrono::duration<double, std::milli>(span).count() / static_cast<double>(timed);
    out.push_back({n, ms, reference_timing(n)});
  }
  return out;
}

}  // namespace ssdg

#endif  // SSDG_HARNESS_HPP_
