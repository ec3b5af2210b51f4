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

#ifndef SSDG_REPORTS_HPP_
#define SSDG_REPORTS_HPP_

// End-to-end experiment runs and their on-disk artifacts: results table,
// per-run metrics, calibration series, gate logs, checkpoints and the run
// manifest.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "ssdg/checkpoint.hpp"
#include "ssdg/config.hpp"
#include "ssdg/error.hpp"
#include "ssdg/harness.hpp"
#include "ssdg/metrics.hpp"

namespace ssdg {

inline constexpr const char* kArtifactVersion = "ssdg 1.0.0";
inline constexpr const char* kOutputRootEnv = "SSDG_OUTPUT_ROOT";

struct RunManifest {
  std::string version = kArtifactVersion;
  std::string command;
  std::vector<std::pair<std::string, std::string>> settings;
  std::vector<std::uint64_t> seeds;
  std::vector<std::pair<std::string, double>> timings_seconds;
  std::vector<std::string> outputs;  // relative to the output directory
};

inline void write_manifest(const std::string& path, const RunManifest& m) {
  nlohmann::ordered_json j;
  j["artifact_version"] = m.version;
  j["command"] = m.command;
  nlohmann::ordered_json settings = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.settings) settings[k] = v;
  j["settings"] = settings;
  j["seeds"] = m.seeds;
  nlohmann::ordered_json timings = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.timings_seconds) timings[k] = v;
  j["timings_seconds"] = timings;
  j["outputs"] = m.outputs;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed for '" + path + "'");
}

inline RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest '" + path + "'");
  RunManifest m;
  try {
    const auto j = nlohmann::ordered_json::parse(in);
    m.version = j.at("artifact_version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    for (const auto& [k, v] : j.at("settings").items()) m.settings.emplace_back(k, v.get<std::string>());
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& [k, v] : j.at("timings_seconds").items()) m.timings_seconds.emplace_back(k, v.get<double>());
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 0, std::string("invalid manifest: ") + e.what());
  }
  return m;
}

// Relative output directories are placed under $SSDG_OUTPUT_ROOT when set.
inline std::filesystem::path resolve_output_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) return std::filesystem::path(root) / p;
  }
  return p;
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw Error("cannot create output directory '" + dir.string() + "'");
  }
}

// results.csv plus manifest.json in `dir`.
inline void emit_reports(const ResultsTable& results, RunManifest manifest, const std::filesystem::path& dir) {
  ensure_directory(dir);
  write_results_csv((dir / "results.csv").string(), results);
  manifest.outputs.insert(manifest.outputs.begin(), "results.csv");
  write_manifest((dir / "manifest.json").string(), manifest);
}

inline std::vector<DomainSamples> load_benchmark(const ExperimentConfig& c) {
  if (!c.data_file.empty()) return load_external_table(c.data_file);
  return generate_benchmark(c.benchmark.specs());
}

inline std::vector<std::string> resolve_targets(const std::vector<DomainSamples>& benchmark,
                                                const std::string& target) {
  std::vector<std::string> out;
  if (target == "all") {
    for (const auto& d : benchmark) out.push_back(d.domain_id);
  } else {
    for (const auto& t : split(target, ',')) out.emplace_back(trim(t));
  }
  return out;
}

inline std::string run_stem(const std::string& target, Method m, std::uint64_t seed) {
  return target + "__" + to_string(m) + "__seed" + std::to_string(seed);
}

inline void write_gate_log(const std::string& path,
                           const std::vector<std::pair<std::size_t, GateDecision>>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "example_id,pseudo_label,confidence,certainty,selected\n";
  for (const auto& [id, d] : rows) {
    out << id << ',' << d.pseudo_label << ',' << format_number(d.confidence) << ','
        << format_number(d.certainty_at_label) << ',' << (d.selected ? 1 : 0) << '\n';
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

struct ExperimentOutcome {
  ResultsTable table;
  RunManifest manifest;
  std::filesystem::path output_dir;
};

// Runs every (target, method) cell of the configuration and writes all
// artifacts under `out_dir`.
inline ExperimentOutcome run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                        const std::string& command = "train",
                                        const std::function<void(const std::string&)>& log = {}) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  ExperimentOutcome outcome;
  outcome.output_dir = out_dir;
  ensure_directory(out_dir);
  for (const char* sub : {"metrics", "calibration"}) ensure_directory(out_dir / sub);
  if (config.save_checkpoints) ensure_directory(out_dir / "checkpoints");
  if (config.gate_log) ensure_directory(out_dir / "gate_logs");

  RunManifest& manifest = outcome.manifest;
  manifest.command = command;
  manifest.settings = to_settings(config);
  manifest.seeds = config.seeds;

  const auto benchmark = load_benchmark(config);
  for (const auto& target : resolve_targets(benchmark, config.target)) {
    for (Method method : config.methods) {
      const auto cell_start = clock::now();
      std::vector<std::pair<std::size_t, GateDecision>> gate_rows;
      TrialHooks hooks;
      hooks.train.on_warning = log;
      hooks.per_run = [&](const std::string&, Method, std::uint64_t) -> std::optional<TrainHooks> {
        gate_rows.clear();
        if (!config.gate_log) return std::nullopt;
        TrainHooks th;
        th.on_warning = log;
        th.on_iteration = [&](const IterationReport& r) {
          if (!r.gating) return;
          for (std::size_t i = 0; i < r.gating->decisions.size(); ++i) {
            gate_rows.emplace_back(r.batch->unlabelled_ids[i], r.gating->decisions[i]);
          }
        };
        return th;
      };
      hooks.on_trial = [&](const TrialRecord& rec) {
        const std::string stem = run_stem(rec.target, rec.method, rec.seed);
        write_metrics_csv((out_dir / "metrics" / (stem + ".csv")).string(), rec.train.metrics);
        manifest.outputs.push_back("metrics/" + stem + ".csv");
        if (!rec.train.calibration.empty()) {
          write_calibration_series((out_dir / "calibration" / (stem + ".csv")).string(),
                                   uncertainty_ece_series(rec.train.calibration));
          manifest.outputs.push_back("calibration/" + stem + ".csv");
        }
        if (config.save_checkpoints) {
          const std::pair<const char*, const ParamSet*> ckpts[] = {
              {"best", &rec.train.checkpoints.best},
              {"last", &rec.train.checkpoints.last},
              {"ema", &rec.train.checkpoints.ema},
              {"inference", &rec.inference}};
          for (const auto& [name, params] : ckpts) {
            const std::string rel = "checkpoints/" + stem + "__" + name + ".ckpt";
            save_checkpoint((out_dir / rel).string(), {rec.train.spec, *params});
            manifest.outputs.push_back(rel);
          }
        }
        if (config.gate_log) {
          const std::string rel = "gate_logs/" + stem + ".csv";
          write_gate_log((out_dir / rel).string(), gate_rows);
          manifest.outputs.push_back(rel);
        }
        if (log) {
          log(rec.target + " " + to_string(rec.method) + " seed " + std::to_string(rec.seed) +
              ": target accuracy " + format_number(rec.target_accuracy));
        }
      };
      outcome.table.rows.push_back(run_trials(benchmark, target, method, config, hooks));
      manifest.timings_seconds.emplace_back(
          target + "/" + to_string(method),
          std::chrono::duration<double>(clock::now() - cell_start).count());
    }
  }
  manifest.timings_seconds.emplace_back("total", std::chrono::duration<double>(clock::now() - t0).count());
  emit_reports(outcome.table, manifest, out_dir);
  outcome.manifest.outputs.insert(outcome.manifest.outputs.begin(), "results.csv");
  return outcome;
}

// Rebuilds the configuration stored in a manifest.
inline ExperimentConfig config_from_manifest(const RunManifest& m) {
  ExperimentConfig c;
  apply_settings(c, m.settings, "manifest");
  return c;
}

}  // namespace ssdg

#endif  // SSDG_REPORTS_HPP_
