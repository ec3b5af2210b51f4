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

#ifndef SSDG_DATA_HPP_
#define SSDG_DATA_HPP_

// Synthetic multi-domain data: generation under four shift families,
// labelled/unlabelled and train/validation splitting, weak/strong views, and
// the delimited-text dataset format.

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
#include <utility>
#include <vector>

#include "ssdg/error.hpp"
#include "ssdg/random.hpp"
#include "ssdg/tensor.hpp"
#include "ssdg/text.hpp"

namespace ssdg {

enum class ShiftFamily { kStyle, kBackground, kCorruption, kTexture };

inline std::string to_string(ShiftFamily f) {
  switch (f) {
    case ShiftFamily::kStyle: return "style";
    case ShiftFamily::kBackground: return "background";
    case ShiftFamily::kCorruption: return "corruption";
    case ShiftFamily::kTexture: return "texture";
  }
  return "?";
}

inline ShiftFamily parse_shift_family(const std::string& s) {
  for (auto f : {ShiftFamily::kStyle, ShiftFamily::kBackground,
                 ShiftFamily::kCorruption, ShiftFamily::kTexture}) {
    if (to_string(f) == s) return f;
  }
  throw Error("unknown shift family '" + s +
              "' (expected style, background, corruption or texture)");
}

// One synthetic domain. Class prototypes depend only on prototype_seed,
// num_classes, feature_dim and class_separation, so domains built with the
// same values share a label space; `seed` drives the per-domain samples.
struct DomainSpec {
  std::string domain_id;
  std::size_t num_classes = 7;
  std::size_t examples_per_class = 60;
  std::size_t feature_dim = 8;
  ShiftFamily shift_family = ShiftFamily::kStyle;
  // style: rotation angle (radians) applied to consecutive coordinate pairs;
  // background: offset along a fixed unit direction;
  // corruption: std of additive Gaussian noise;
  // texture: per-feature scale 1 + magnitude * s_i, s_i in [-1, 1].
  double shift_magnitude = 0.0;
  std::uint64_t seed = 0;
  double class_separation = 2.0;
  double cluster_std = 1.0;
  std::uint64_t prototype_seed = 0;

  void validate() const {
    if (num_classes < 2) throw Error("domain '" + domain_id + "': need >= 2 classes");
    if (examples_per_class == 0) {
      throw Error("domain '" + domain_id + "': examples_per_class must be positive");
    }
    if (feature_dim == 0) throw Error("domain '" + domain_id + "': feature_dim must be positive");
    if (!std::isfinite(shift_magnitude)) {
      throw Error("domain '" + domain_id + "': shift magnitude must be finite");
    }
    if (!(cluster_std >= 0.0)) throw Error("domain '" + domain_id + "': cluster_std must be >= 0");
  }
};

struct Example {
  std::size_t id = 0;
  std::vector<double> features;
  std::optional<std::size_t> label;
  std::string domain_id;

  bool operator==(const Example&) const = default;
};

// All examples of one domain, as generated or loaded.
struct DomainSamples {
  std::string domain_id;
  std::vector<Example> examples;

  bool operator==(const DomainSamples&) const = default;
};

class EvaluationAccess;

// Ground truth of unlabelled examples. Training code receives unlabelled
// examples with their labels stripped; the truth lives here and is read only
// through EvaluationAccess (eval-metrics).
class HiddenLabels {
 public:
  void record(std::size_t example_id, std::size_t label) { truth_[example_id] = label; }
  void merge(const HiddenLabels& other) {
    truth_.insert(other.truth_.begin(), other.truth_.end());
  }
  std::size_t size() const { return truth_.size(); }
  bool contains(std::size_t example_id) const { return truth_.count(example_id) != 0; }
  bool operator==(const HiddenLabels&) const = default;

 private:
  friend class EvaluationAccess;
  std::map<std::size_t, std::size_t> truth_;
};

// One domain after labelled/unlabelled splitting.
struct DomainDataset {
  std::string domain_id;
  std::vector<Example> labelled;
  std::vector<Example> unlabelled;  // labels stripped
  HiddenLabels hidden;
};

namespace detail {

struct CanonicalFrame {
  std::vector<std::vector<double>> means;
  std::vector<double> background_direction;
  std::vector<double> texture_pattern;
};

inline CanonicalFrame canonical_frame(const DomainSpec& spec) {
  CanonicalFrame f;
  Rng proto(derive_seed(spec.prototype_seed,
                        {tag("prototypes"), spec.num_classes, spec.feature_dim}));
  f.means.assign(spec.num_classes, std::vector<double>(spec.feature_dim));
  for (auto& m : f.means) {
    for (double& v : m) v = spec.class_separation * proto.normal();
  }
  Rng dir(derive_seed(spec.prototype_seed, {tag("background"), spec.feature_dim}));
  f.background_direction.resize(spec.feature_dim);
  double norm = 0.0;
  for (double& v : f.background_direction) {
    v = dir.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : f.background_direction) v /= norm;
  Rng tex(derive_seed(spec.prototype_seed, {tag("texture"), spec.feature_dim}));
  f.texture_pattern.resize(spec.feature_dim);
  for (double& v : f.texture_pattern) v = 2.0 * tex.uniform() - 1.0;
  return f;
}

}  // namespace detail

// Rotates consecutive coordinate pairs (0,1), (2,3), ... by `angle`.
inline void rotate_pairs(std::span<double> x, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t i = 0; i + 1 < x.size(); i += 2) {
    const double a = x[i], b = x[i + 1];
    x[i] = c * a - s * b;
    x[i + 1] = s * a + c * b;
  }
}

// Class-major examples (all of class 0, then class 1, ...), ids 0..n-1.
inline DomainSamples generate_domain(const DomainSpec& spec) {
  spec.validate();
  const auto frame = detail::canonical_frame(spec);
  Rng samples(derive_seed(spec.seed, {tag("samples")}));
  Rng corruption(derive_seed(spec.seed, {tag("corruption")}));
  DomainSamples out{spec.domain_id, {}};
  out.examples.reserve(spec.num_classes * spec.examples_per_class);
  const double mag = spec.shift_magnitude;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < spec.examples_per_class; ++i) {
      std::vector<double> x(spec.feature_dim);
      for (std::size_t d = 0; d < x.size(); ++d) {
        x[d] = frame.means[c][d] + spec.cluster_std * samples.normal();
      }
      if (mag != 0.0) {
        switch (spec.shift_family) {
          case ShiftFamily::kStyle:
            rotate_pairs(x, mag);
            break;
          case ShiftFamily::kBackground:
            for (std::size_t d = 0; d < x.size(); ++d) x[d] += mag * frame.background_direction[d];
            break;
          case ShiftFamily::kCorruption:
            for (double& v : x) v += mag * corruption.normal();
            break;
          case ShiftFamily::kTexture:
            for (std::size_t d = 0; d < x.size(); ++d) x[d] *= 1.0 + mag * frame.texture_pattern[d];
            break;
        }
      }
      out.examples.push_back({out.examples.size(), std::move(x), c, spec.domain_id});
    }
  }
  return out;
}

// Renumbers example ids consecutively across domains so ids are unique
// benchmark-wide.
inline void assign_global_ids(std::vector<DomainSamples>& domains) {
  std::size_t next = 0;
  for (auto& d : domains) {
    for (auto& e : d.examples) e.id = next++;
  }
}

inline std::vector<DomainSamples> generate_benchmark(const std::vector<DomainSpec>& specs) {
  std::vector<DomainSamples> out;
  for (const auto& s : specs) out.push_back(generate_domain(s));
  assign_global_ids(out);
  return out;
}

namespace detail {

// Groups example indices by label; unlabelled rows go to the std::nullopt key.
inline std::map<std::optional<std::size_t>, std::vector<std::size_t>> strata(
    const std::vector<Example>& examples) {
  std::map<std::optional<std::size_t>, std::vector<std::size_t>> by;
  for (std::size_t i = 0; i < examples.size(); ++i) by[examples[i].label].push_back(i);
  return by;
}

}  // namespace detail

// Draws exactly n_per_class labelled examples per class uniformly without
// replacement; everything else becomes unlabelled with its label moved to
// the hidden ground truth. Rows that carry no label are always unlabelled.
inline DomainDataset split_labelled(const DomainSamples& samples,
                                    std::size_t n_per_class,
                                    std::uint64_t seed) {
  auto by = detail::strata(samples.examples);
  std::size_t num_classes = 0;
  for (const auto& [label, idx] : by) {
    if (label) num_classes = std::max(num_classes, *label + 1);
  }
  std::vector<char> is_labelled(samples.examples.size(), 0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto it = by.find(c);
    const std::size_t have = it == by.end() ? 0 : it->second.size();
    if (have < n_per_class) {
      throw Error("split_labelled: class " + std::to_string(c) + " in domain '" +
                  samples.domain_id + "' has " + std::to_string(have) +
                  " examples, need " + std::to_string(n_per_class));
    }
    if (have == 0) continue;
    auto idx = it->second;
    Rng rng(derive_seed(seed, {tag("split_labelled"), c}));
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    for (std::size_t k = 0; k < n_per_class; ++k) is_labelled[idx[k]] = 1;
  }
  DomainDataset out;
  out.domain_id = samples.domain_id;
  for (std::size_t i = 0; i < samples.examples.size(); ++i) {
    Example e = samples.examples[i];
    if (is_labelled[i]) {
      out.labelled.push_back(std::move(e));
    } else {
      if (e.label) out.hidden.record(e.id, *e.label);
      e.label.reset();
      out.unlabelled.push_back(std::move(e));
    }
  }
  return out;
}

// Stratified split: round(fraction * n) examples go to train, the rest to
// validation, spread over classes by largest remainder (ties to the lower
// class). Order inside each part follows the input order.
inline std::pair<DomainSamples, DomainSamples> train_val_split(
    const DomainSamples& samples, double fraction, std::uint64_t seed) {
  if (samples.examples.empty()) throw Error("train_val_split: empty input");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw Error("train_val_split: fraction must lie in (0, 1)");
  }
  const std::size_t n = samples.examples.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  const std::size_t n_val = n - std::min(n_train, n);
  auto by = detail::strata(samples.examples);

  struct Quota {
    std::size_t take, remainder, order;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [label, idx] : by) {
    const std::size_t prod = idx.size() * n_val;
    quotas.push_back({prod / n, prod % n, quotas.size()});
    assigned += prod / n;
  }
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return quotas[a].remainder > quotas[b].remainder;
  });
  for (std::size_t k = 0; assigned < n_val; ++k, ++assigned) quotas[order[k]].take++;

  std::vector<char> is_val(n, 0);
  std::size_t s = 0;
  for (const auto& [label, idx] : by) {
    auto shuffled = idx;
    Rng rng(derive_seed(seed, {tag("train_val_split"), label ? *label : ~std::size_t{0}}));
    std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
    for (std::size_t k = 0; k < quotas[s].take; ++k) is_val[shuffled[k]] = 1;
    ++s;
  }
  DomainSamples train{samples.domain_id, {}}, val{samples.domain_id, {}};
  for (std::size_t i = 0; i < n; ++i) {
    (is_val[i] ? val : train).examples.push_back(samples.examples[i]);
  }
  return {std::move(train), std::move(val)};
}

struct AugmentationConfig {
  double weak_noise_sigma = 0.1;
  double strong_noise_sigma = 0.5;
  std::size_t strong_mask_count = 2;

  void validate() const {
    if (!(weak_noise_sigma >= 0.0)) throw Error("augmentation: weak sigma must be >= 0");
    if (!(strong_noise_sigma >= weak_noise_sigma)) {
      throw Error("augmentation: strong sigma must be >= weak sigma");
    }
  }
};

// u' = x + N(0, weak_sigma^2) per coordinate.
inline std::vector<double> weak_augment(std::span<const double> x,
                                        const AugmentationConfig& config,
                                        Rng& rng) {
  config.validate();
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v += config.weak_noise_sigma * rng.normal();
  return out;
}

// u'' = x + N(0, strong_sigma^2), then exactly m coordinates zeroed.
inline std::vector<double> strong_augment(std::span<const double> x,
                                          const AugmentationConfig& config,
                                          Rng& rng) {
  config.validate();
  if (config.strong_mask_count > x.size()) {
    throw Error("strong_augment: mask count " + std::to_string(config.strong_mask_count) +
                " exceeds feature dimension " + std::to_string(x.size()));
  }
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v += config.strong_noise_sigma * rng.normal();
  // Partial Fisher-Yates picks m distinct coordinates.
  std::vector<std::size_t> idx(out.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t k = 0; k < config.strong_mask_count; ++k) {
    const std::size_t j = k + rng.index(idx.size() - k);
    std::swap(idx[k], idx[j]);
    out[idx[k]] = 0.0;
  }
  return out;
}

// Stacks example features into a [n, d] tensor.
inline Tensor stack_features(std::span<const Example> examples) {
  if (examples.empty()) return Tensor({0, 0});
  const std::size_t d = examples.front().features.size();
  Tensor t = Tensor::matrix(examples.size(), d);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].features.size() != d) {
      throw ShapeError("features", "example " + std::to_string(examples[i].id) +
                                       " has dimension " +
                                       std::to_string(examples[i].features.size()));
    }
    std::copy(examples[i].features.begin(), examples[i].features.end(), t.row(i).begin());
  }
  return t;
}

// ---------------------------------------------------------------------------
// Delimited-text dataset format:
//   domain,label,f0,f1,...,f{d-1}
// one example per row; an empty label field marks an unlabelled example.

struct TableSchema {
  std::optional<std::size_t> feature_dim;
  std::optional<std::size_t> num_classes;
};

// Parses the dataset format. Domains are returned in order of first
// appearance; example ids are the 0-based data-row index.
inline std::vector<DomainSamples> load_external_table(const std::string& path,
                                                      const TableSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> dim = schema.feature_dim;
  std::vector<DomainSamples> out;
  std::map<std::string, std::size_t> index;
  bool header_seen = false;
  std::size_t next_id = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cols = split(line, ',');
    if (!header_seen) {
      header_seen = true;
      if (cols.size() < 3 || trim(cols[0]) != "domain" || trim(cols[1]) != "label") {
        throw ParseError(path, line_no, "expected header 'domain,label,f0,...'");
      }
      const std::size_t header_dim = cols.size() - 2;
      if (dim && *dim != header_dim) {
        throw ParseError(path, line_no, "header declares " + std::to_string(header_dim) +
                                            " features, schema expects " + std::to_string(*dim));
      }
      dim = header_dim;
      continue;
    }
    if (cols.size() != *dim + 2) {
      throw ParseError(path, line_no, "expected " + std::to_string(*dim) +
                                          " feature columns, found " +
                                          std::to_string(cols.size() < 2 ? 0 : cols.size() - 2));
    }
    Example e;
    e.id = next_id++;
    e.domain_id = std::string(trim(cols[0]));
    if (e.domain_id.empty()) throw ParseError(path, line_no, "empty domain field");
    if (!trim(cols[1]).empty()) {
      auto lab = parse_uint(cols[1]);
      if (!lab) throw ParseError(path, line_no, "unknown label '" + cols[1] + "'");
      if (schema.num_classes && *lab >= *schema.num_classes) {
        throw ParseError(path, line_no, "unknown label " + std::to_string(*lab) + " (schema has " +
                                            std::to_string(*schema.num_classes) + " classes)");
      }
      e.label = static_cast<std::size_t>(*lab);
    }
    e.features.reserve(*dim);
    for (std::size_t k = 0; k < *dim; ++k) {
      auto v = parse_double(cols[k + 2]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError(path, line_no, "feature f" + std::to_string(k) + " is not a finite number");
      }
      e.features.push_back(*v);
    }
    auto [it, inserted] = index.emplace(e.domain_id, out.size());
    if (inserted) out.push_back({e.domain_id, {}});
    out[it->second].examples.push_back(std::move(e));
  }
  if (out.empty()) throw ParseError(path, 0, "no rows");
  return out;
}

// Writes the dataset format. Labels present on examples are written; absent
// labels produce an empty field. Ids are not stored; loading renumbers rows.
inline void export_table(const std::vector<DomainSamples>& domains, const std::string& path) {
  std::size_t dim = 0;
  for (const auto& d : domains) {
    if (!d.examples.empty()) {
      dim = d.examples.front().features.size();
      break;
    }
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "domain,label";
  for (std::size_t k = 0; k < dim; ++k) out << ",f" << k;
  out << '\n';
  for (const auto& d : domains) {
    for (const auto& e : d.examples) {
      if (e.features.size() != dim) {
        throw ShapeError("features", "example " + std::to_string(e.id) + " has inconsistent dimension");
      }
      out << d.domain_id << ',';
      if (e.label) out << *e.label;
      for (double v : e.features) out << ',' << format_number(v);
      out << '\n';
    }
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace ssdg

#endif  // SSDG_DATA_HPP_
