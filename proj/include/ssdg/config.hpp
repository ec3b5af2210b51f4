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

#ifndef SSDG_CONFIG_HPP_
#define SSDG_CONFIG_HPP_

// Experiment configuration and its flat `key = value` text form. See
// docs/file_formats.md for the key list.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ssdg/data.hpp"
#include "ssdg/error.hpp"
#include "ssdg/fixmatch.hpp"
#include "ssdg/text.hpp"

namespace ssdg {

enum class Method { kFixMatch, kUpl, kMa, kUplm };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::kFixMatch: return "FixMatch";
    case Method::kUpl: return "UPL";
    case Method::kMa: return "MA";
    case Method::kUplm: return "UPLM";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (auto m : {Method::kFixMatch, Method::kUpl, Method::kMa, Method::kUplm}) {
    if (to_string(m) == s) return m;
  }
  throw Error("unknown method '" + s + "' (expected FixMatch, UPL, MA or UPLM)");
}

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> m{Method::kFixMatch, Method::kUpl, Method::kMa, Method::kUplm};
  return m;
}

// How the synthetic benchmark is built when no data file is given.
struct BenchmarkConfig {
  struct Domain {
    std::string id;
    ShiftFamily family = ShiftFamily::kStyle;
    double magnitude = 0.0;
  };
  std::vector<Domain> domains{{"texture", ShiftFamily::kTexture, 0.5},
                              {"corruption", ShiftFamily::kCorruption, 1.0},
                              {"background", ShiftFamily::kBackground, 2.0},
                              {"style", ShiftFamily::kStyle, 0.5}};
  std::size_t num_classes = 7;
  std::size_t examples_per_class = 60;
  std::size_t feature_dim = 8;
  double class_separation = 2.0;
  double cluster_std = 1.0;
  std::uint64_t prototype_seed = 0;
  std::uint64_t data_seed = 0;

  std::vector<DomainSpec> specs() const {
    std::vector<DomainSpec> out;
    for (std::size_t k = 0; k < domains.size(); ++k) {
      DomainSpec s;
      s.domain_id = domains[k].id;
      s.num_classes = num_classes;
      s.examples_per_class = examples_per_class;
      s.feature_dim = feature_dim;
      s.shift_family = domains[k].family;
      s.shift_magnitude = domains[k].magnitude;
      s.seed = data_seed + k;
      s.class_separation = class_separation;
      s.cluster_std = cluster_std;
      s.prototype_seed = prototype_seed;
      out.push_back(s);
    }
    return out;
  }
};

struct ExperimentConfig {
  BenchmarkConfig benchmark;
  std::string data_file;     // if set, replaces the synthetic benchmark
  std::string target = "all";  // domain id or "all"
  std::vector<Method> methods{Method::kFixMatch, Method::kUpl, Method::kMa, Method::kUplm};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t labels_per_class = 10;
  double train_fraction = 0.9;
  TrainConfig train;
  std::string output_dir = "ssdg_out";
  bool save_checkpoints = true;
  bool gate_log = false;
};

namespace detail {

template <typename T, typename F>
std::string join(const std::vector<T>& v, char sep, F f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += f(v[i]);
  }
  return s;
}

inline double to_double(const std::string& key, const std::string& v) {
  auto d = parse_double(v);
  if (!d) throw Error("config '" + key + "': expected a number, got '" + v + "'");
  return *d;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  auto d = parse_uint(v);
  if (!d) throw Error("config '" + key + "': expected a non-negative integer, got '" + v + "'");
  return *d;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error("config '" + key + "': expected true/false, got '" + v + "'");
}

inline std::vector<std::string> list(const std::string& v, char sep = ',') {
  std::vector<std::string> out;
  for (auto& s : split(v, sep)) {
    auto t = std::string(trim(s));
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

}  // namespace detail

// Applies one setting. Unknown keys are errors.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& raw) {
  using namespace detail;
  const std::string v(trim(raw));
  TrainConfig& t = c.train;
  BenchmarkConfig& b = c.benchmark;
  if (key == "data_file") c.data_file = v;
  else if (key == "domains") {
    b.domains.clear();
    for (const auto& item : list(v, ';')) {
      auto parts = split(item, ':');
      if (parts.size() != 3) throw Error("config 'domains': expected id:family:magnitude, got '" + item + "'");
      b.domains.push_back({std::string(trim(parts[0])), parse_shift_family(std::string(trim(parts[1]))),
                           to_double(key, parts[2])});
    }
  } else if (key == "num_classes") b.num_classes = to_uint(key, v);
  else if (key == "examples_per_class") b.examples_per_class = to_uint(key, v);
  else if (key == "feature_dim") b.feature_dim = to_uint(key, v);
  else if (key == "class_separation") b.class_separation = to_double(key, v);
  else if (key == "cluster_std") b.cluster_std = to_double(key, v);
  else if (key == "prototype_seed") b.prototype_seed = to_uint(key, v);
  else if (key == "data_seed") b.data_seed = to_uint(key, v);
  else if (key == "target") c.target = v;
  else if (key == "methods") {
    c.methods.clear();
    for (const auto& m : list(v)) c.methods.push_back(parse_method(m));
  } else if (key == "seeds") {
    c.seeds.clear();
    for (const auto& s : list(v)) c.seeds.push_back(to_uint(key, s));
  } else if (key == "labels_per_class") c.labels_per_class = to_uint(key, v);
  else if (key == "train_fraction") c.train_fraction = to_double(key, v);
  else if (key == "tau") t.tau = to_double(key, v);
  else if (key == "lambda") t.lambda = to_double(key, v);
  else if (key == "batch_size") t.batch_size = to_uint(key, v);
  else if (key == "mu") t.mu = to_uint(key, v);
  else if (key == "lr") t.lr = to_double(key, v);
  else if (key == "momentum") t.momentum = to_double(key, v);
  else if (key == "epochs") t.epochs = to_uint(key, v);
  else if (key == "iterations_per_epoch") t.iterations_per_epoch = to_uint(key, v);
  else if (key == "eta") t.eta = to_double(key, v);
  else if (key == "mc_passes") t.mc_passes = to_uint(key, v);
  else if (key == "dropout_rate") t.dropout_rate = to_double(key, v);
  else if (key == "ema_decay") t.ema_decay = to_double(key, v);
  else if (key == "ma_weights") {
    auto w = list(v);
    if (w.size() != 3) throw Error("config 'ma_weights': expected alpha,beta,gamma");
    t.ma_weights = {to_double(key, w[0]), to_double(key, w[1]), to_double(key, w[2])};
  } else if (key == "hidden_dims") {
    t.hidden_dims.clear();
    for (const auto& h : list(v)) t.hidden_dims.push_back(to_uint(key, h));
  } else if (key == "num_classes_override") t.num_classes = to_uint(key, v);
  else if (key == "weak_noise_sigma") t.augmentation.weak_noise_sigma = to_double(key, v);
  else if (key == "strong_noise_sigma") t.augmentation.strong_noise_sigma = to_double(key, v);
  else if (key == "strong_mask_count") t.augmentation.strong_mask_count = to_uint(key, v);
  else if (key == "ece_bins") t.ece_bins = to_uint(key, v);
  else if (key == "track_uncertainty") t.track_uncertainty = to_bool(key, v);
  else if (key == "output_dir") c.output_dir = v;
  else if (key == "save_checkpoints") c.save_checkpoints = to_bool(key, v);
  else if (key == "gate_log") c.gate_log = to_bool(key, v);
  else throw Error("unknown config key '" + key + "'");
}

// Every setting, in a fixed order. Feeding the result back through
// apply_setting reproduces the configuration exactly.
inline std::vector<std::pair<std::string, std::string>> to_settings(const ExperimentConfig& c) {
  using detail::join;
  const TrainConfig& t = c.train;
  const BenchmarkConfig& b = c.benchmark;
  auto num = [](double d) { return format_number(d); };
  auto uint = [](auto u) { return std::to_string(u); };
  auto boolean = [](bool x) { return std::string(x ? "true" : "false"); };
  return {
      {"data_file", c.data_file},
      {"domains", join(b.domains, ';',
                       [&](const auto& d) { return d.id + ":" + to_string(d.family) + ":" + num(d.magnitude); })},
      {"num_classes", uint(b.num_classes)},
      {"examples_per_class", uint(b.examples_per_class)},
      {"feature_dim", uint(b.feature_dim)},
      {"class_separation", num(b.class_separation)},
      {"cluster_std", num(b.cluster_std)},
      {"prototype_seed", uint(b.prototype_seed)},
      {"data_seed", uint(b.data_seed)},
      {"target", c.target},
      {"methods", join(c.methods, ',', [](Method m) { return to_string(m); })},
      {"seeds", join(c.seeds, ',', [&](std::uint64_t s) { return uint(s); })},
      {"labels_per_class", uint(c.labels_per_class)},
      {"train_fraction", num(c.train_fraction)},
      {"tau", num(t.tau)},
      {"lambda", num(t.lambda)},
      {"batch_size", uint(t.batch_size)},
      {"mu", uint(t.mu)},
      {"lr", num(t.lr)},
      {"momentum", num(t.momentum)},
      {"epochs", uint(t.epochs)},
      {"iterations_per_epoch", uint(t.iterations_per_epoch)},
      {"eta", num(t.eta)},
      {"mc_passes", uint(t.mc_passes)},
      {"dropout_rate", num(t.dropout_rate)},
      {"ema_decay", num(t.ema_decay)},
      {"ma_weights", num(t.ma_weights.alpha) + "," + num(t.ma_weights.beta) + "," + num(t.ma_weights.gamma)},
      {"hidden_dims", join(t.hidden_dims, ',', [&](std::size_t h) { return uint(h); })},
      {"num_classes_override", uint(t.num_classes)},
      {"weak_noise_sigma", num(t.augmentation.weak_noise_sigma)},
      {"strong_noise_sigma", num(t.augmentation.strong_noise_sigma)},
      {"strong_mask_count", uint(t.augmentation.strong_mask_count)},
      {"ece_bins", uint(t.ece_bins)},
      {"track_uncertainty", boolean(t.track_uncertainty)},
      {"output_dir", c.output_dir},
      {"save_checkpoints", boolean(c.save_checkpoints)},
      {"gate_log", boolean(c.gate_log)},
  };
}

// Parses `key = value` lines; '#' starts a comment. Later keys win.
inline std::vector<std::pair<std::string, std::string>> parse_settings(std::istream& in,
                                                                       const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path, line_no, "expected 'key = value'");
    std::string key(trim(std::string_view(line).substr(0, eq)));
    if (key.empty()) throw ParseError(path, line_no, "empty key");
    out.emplace_back(std::move(key), std::string(trim(std::string_view(line).substr(eq + 1))));
  }
  return out;
}

inline void apply_settings(ExperimentConfig& c,
                           const std::vector<std::pair<std::string, std::string>>& settings,
                           const std::string& origin = "config") {
  for (const auto& [k, v] : settings) {
    try {
      apply_setting(c, k, v);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw Error(origin + ": " + e.what());
    }
  }
}

inline ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  apply_settings(base, parse_settings(in, path), path);
  return base;
}

}  // namespace ssdg

#endif  // SSDG_CONFIG_HPP_
