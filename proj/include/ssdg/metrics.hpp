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

#ifndef SSDG_METRICS_HPP_
#define SSDG_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ssdg/data.hpp"
#include "ssdg/error.hpp"
#include "ssdg/network.hpp"
#include "ssdg/tensor.hpp"
#include "ssdg/text.hpp"
#include "ssdg/uncertainty.hpp"

namespace ssdg {

// The only reader of HiddenLabels.
class EvaluationAccess {
 public:
  static std::optional<std::size_t> truth(const HiddenLabels& hidden, std::size_t example_id) {
    auto it = hidden.truth_.find(example_id);
    if (it == hidden.truth_.end()) return std::nullopt;
    return it->second;
  }
};

// 100 * correct / total over probability rows.
inline double top1_accuracy(const Tensor& probs, std::span<const std::size_t> labels) {
  if (probs.rank() != 2 || probs.rows() != labels.size()) {
    throw ShapeError("probs", "expected one row per label");
  }
  if (labels.empty()) throw Error("top1_accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (argmax(probs.row(i)) == labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

// Eval-mode accuracy of `params` on labelled examples.
inline double evaluate_accuracy(const NetworkSpec& spec, const ParamSet& params,
                                std::span<const Example> examples) {
  std::vector<std::size_t> labels;
  for (const auto& e : examples) {
    if (!e.label) throw Error("evaluate_accuracy: example " + std::to_string(e.id) + " has no label");
    labels.push_back(*e.label);
  }
  if (labels.empty()) throw Error("top1_accuracy: empty input");
  return top1_accuracy(forward_eval(spec, params, stack_features(examples)).probs, labels);
}

struct EceBin {
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

struct EceBins {
  std::size_t num_bins = 0;
  std::vector<EceBin> bins;
};

// Bin m covers (m/M, (m+1)/M]; a confidence on an edge belongs to the lower
// bin. Confidences at or below 0 fall into bin 0.
inline std::size_t ece_bin_index(double confidence, std::size_t num_bins) {
  const double m = static_cast<double>(num_bins);
  auto edge = [m](std::size_t k) { return static_cast<double>(k) / m; };
  std::size_t b = 0;
  if (confidence > 0.0) {
    const double raw = std::ceil(confidence * m) - 1.0;
    b = raw <= 0.0 ? 0 : std::min(static_cast<std::size_t>(raw), num_bins - 1);
  }
  while (b > 0 && confidence <= edge(b)) --b;
  while (b + 1 < num_bins && confidence > edge(b + 1)) ++b;
  return b;
}

inline EceBins ece_bins(std::span<const double> confidences, std::span<const std::uint8_t> correct,
                        std::size_t num_bins) {
  if (num_bins == 0) throw Error("ece: need at least one bin");
  if (confidences.size() != correct.size()) throw Error("ece: length mismatch");
  EceBins out{num_bins, std::vector<EceBin>(num_bins)};
  std::vector<double> conf_sum(num_bins, 0.0), hits(num_bins, 0.0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const std::size_t b = ece_bin_index(confidences[i], num_bins);
    out.bins[b].count++;
    conf_sum[b] += confidences[i];
    hits[b] += correct[i] ? 1.0 : 0.0;
  }
  for (std::size_t b = 0; b < num_bins; ++b) {
    if (out.bins[b].count == 0) continue;
    const double n = static_cast<double>(out.bins[b].count);
    out.bins[b].mean_confidence = conf_sum[b] / n;
    out.bins[b].accuracy = hits[b] / n;
  }
  return out;
}

// sum_m (|B_m| / n) * |acc(B_m) - conf(B_m)|; 0 for empty input.
inline double ece(std::span<const double> confidences, std::span<const std::uint8_t> correct,
                  std::size_t num_bins = 10) {
  const EceBins bins = ece_bins(confidences, correct, num_bins);
  if (confidences.empty()) return 0.0;
  const double n = static_cast<double>(confidences.size());
  double total = 0.0;
  for (const auto& b : bins.bins) {
    if (b.count == 0) continue;
    total += (static_cast<double>(b.count) / n) * std::abs(b.accuracy - b.mean_confidence);
  }
  return total;
}

struct PlStats {
  std::optional<double> precision;  // percent; empty when nothing selected
  double coverage = 0.0;            // selected / total
};

// Precision and coverage of selected pseudo-labels against hidden truth.
// Decisions whose example has no recorded truth count toward coverage only.
inline PlStats pl_stats(std::span<const GateDecision> decisions,
                        std::span<const std::size_t> example_ids, const HiddenLabels& hidden) {
  if (decisions.size() != example_ids.size()) throw Error("pl_stats: length mismatch");
  std::size_t selected = 0, judged = 0, correct = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    if (!decisions[i].selected) continue;
    ++selected;
    if (auto t = EvaluationAccess::truth(hidden, example_ids[i])) {
      ++judged;
      if (*t == decisions[i].pseudo_label) ++correct;
    }
  }
  PlStats s;
  if (!decisions.empty()) {
    s.coverage = static_cast<double>(selected) / static_cast<double>(decisions.size());
  }
  if (judged > 0) s.precision = 100.0 * static_cast<double>(correct) / static_cast<double>(judged);
  return s;
}

// ECE of predictions on unlabelled examples, judged against hidden truth.
// Empty when no example has recorded truth.
inline std::optional<double> hidden_ece(const Tensor& probs, std::span<const std::size_t> example_ids,
                                        const HiddenLabels& hidden, std::size_t num_bins) {
  std::vector<double> conf;
  std::vector<std::uint8_t> ok;
  for (std::size_t i = 0; i < example_ids.size(); ++i) {
    auto t = EvaluationAccess::truth(hidden, example_ids[i]);
    if (!t) continue;
    const std::size_t pred = argmax(probs.row(i));
    conf.push_back(probs(i, pred));
    ok.push_back(pred == *t);
  }
  if (conf.empty()) return std::nullopt;
  return ece(conf, ok, num_bins);
}

struct MetricsRecord {
  std::size_t epoch = 0;
  double val_accuracy = 0.0;
  std::optional<double> target_accuracy;
  std::optional<double> pl_precision;
  double pl_coverage = 0.0;
  double mean_uncertainty = 0.0;
  std::optional<double> ece;

  bool operator==(const MetricsRecord&) const = default;
};

// One training iteration's contribution to the uncertainty/ECE series.
struct BatchCalibrationRecord {
  std::size_t epoch = 0;
  std::vector<double> example_uncertainty;  // per example: mean over classes of V
  double ece = 0.0;
};

struct CalibrationPoint {
  std::size_t epoch = 0;
  double mean_uncertainty = 0.0;
  double mean_ece = 0.0;
};

struct CalibrationSeries {
  std::vector<CalibrationPoint> points;  // ascending by mean_uncertainty
};

// Per epoch: mean over all examples seen of their mean-over-classes
// uncertainty, and the mean of per-batch ECE. Points are sorted by
// uncertainty (stable, so equal values keep epoch order).
inline CalibrationSeries uncertainty_ece_series(std::span<const BatchCalibrationRecord> records) {
  if (records.empty()) throw Error("uncertainty_ece_series: no records");
  struct Acc {
    double unc_sum = 0.0;
    std::size_t unc_count = 0;
    double ece_sum = 0.0;
    std::size_t batches = 0;
  };
  std::map<std::size_t, Acc> by_epoch;
  for (const auto& r : records) {
    Acc& a = by_epoch[r.epoch];
    for (double u : r.example_uncertainty) a.unc_sum += u;
    a.unc_count += r.example_uncertainty.size();
    a.ece_sum += r.ece;
    a.batches++;
  }
  CalibrationSeries s;
  for (const auto& [epoch, a] : by_epoch) {
    s.points.push_back({epoch,
                        a.unc_count ? a.unc_sum / static_cast<double>(a.unc_count) : 0.0,
                        a.ece_sum / static_cast<double>(a.batches)});
  }
  std::stable_sort(s.points.begin(), s.points.end(),
                   [](const auto& a, const auto& b) { return a.mean_uncertainty < b.mean_uncertainty; });
  return s;
}

// Spearman rank correlation with average ranks for ties. Returns 0 when either
// side is constant.
inline double spearman_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("spearman: need two equal series of length >= 2");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Report files.

inline const char* kMetricsHeader =
    "epoch,val_acc,target_acc,pl_precision,pl_coverage,mean_uncertainty,ece";

inline void write_metrics_csv(const std::string& path, std::span<const MetricsRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << kMetricsHeader << '\n';
  for (const auto& r : records) {
    out << r.epoch << ',' << format_number(r.val_accuracy) << ','
        << format_optional(r.target_accuracy) << ',' << format_optional(r.pl_precision) << ','
        << format_number(r.pl_coverage) << ',' << format_number(r.mean_uncertainty) << ','
        << format_optional(r.ece) << '\n';
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

inline void write_calibration_series(const std::string& path, const CalibrationSeries& series) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "mean_uncertainty,mean_ece\n";
  for (const auto& p : series.points) {
    out << format_number(p.mean_uncertainty) << ',' << format_number(p.mean_ece) << '\n';
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

// Penultimate (pre-dropout) features, one row per example:
//   example_id,domain,label,f0,...,f{d-1}
inline void feature_dump(const NetworkSpec& spec, const ParamSet& params,
                         std::span<const Example> examples, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "example_id,domain,label";
  for (std::size_t k = 0; k < spec.feature_dim(); ++k) out << ",f" << k;
  out << '\n';
  if (!examples.empty()) {
    check_params(spec, params);
    const Tensor features = extract_features(spec, params, stack_features(examples));
    for (std::size_t i = 0; i < examples.size(); ++i) {
      out << examples[i].id << ',' << examples[i].domain_id << ',';
      if (examples[i].label) out << *examples[i].label;
      for (double v : features.row(i)) out << ',' << format_number(v);
      out << '\n';
    }
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace ssdg

#endif  // SSDG_METRICS_HPP_
