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


// Command-line front end.
//
// Settings are resolved in this order, later sources winning: built-in
// defaults, --config file, --set key=value pairs, named flags.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ssdg/checkpoint.hpp"
#include "ssdg/harness.hpp"
#include "ssdg/reports.hpp"

namespace ssdg {
namespace {

struct CommonOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::string target;
  std::string methods;
  std::string seeds;
  std::string data_file;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_file, "key = value configuration file");
  cmd->add_option("-s,--set", o.overrides, "override one setting, key=value (repeatable)");
  cmd->add_option("-o,--out", o.output_dir, "output directory (relative paths go under $SSDG_OUTPUT_ROOT)");
  cmd->add_option("-t,--target", o.target, "target domain id, comma list, or 'all'");
  cmd->add_option("-m,--methods", o.methods, "comma list of FixMatch,UPL,MA,UPLM");
  cmd->add_option("--seeds", o.seeds, "comma list of trial seeds");
  cmd->add_option("--data", o.data_file, "dataset CSV replacing the synthetic benchmark");
}

ExperimentConfig resolve_config(const CommonOptions& o) {
  ExperimentConfig c;
  if (!o.config_file.empty()) c = load_config_file(o.config_file);
  std::vector<std::pair<std::string, std::string>> settings;
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    settings.emplace_back(std::string(trim(kv.substr(0, eq))), kv.substr(eq + 1));
  }
  if (!o.output_dir.empty()) settings.emplace_back("output_dir", o.output_dir);
  if (!o.target.empty()) settings.emplace_back("target", o.target);
  if (!o.methods.empty()) settings.emplace_back("methods", o.methods);
  if (!o.seeds.empty()) settings.emplace_back("seeds", o.seeds);
  if (!o.data_file.empty()) settings.emplace_back("data_file", o.data_file);
  apply_settings(c, settings, "command line");
  return c;
}

void log_line(const std::string& s) { std::cerr << s << '\n'; }

// Single target for the ablation commands: "all" picks the first domain.
std::string single_target(const std::vector<DomainSamples>& benchmark, const std::string& target) {
  const auto targets = resolve_targets(benchmark, target);
  if (targets.empty()) throw Error("no target domain");
  return targets.front();
}

RunManifest base_manifest(const ExperimentConfig& c, const std::string& command) {
  RunManifest m;
  m.command = command;
  m.settings = to_settings(c);
  m.seeds = c.seeds;
  return m;
}

void finish(const std::filesystem::path& dir, RunManifest m, const std::vector<std::string>& outputs) {
  m.outputs.insert(m.outputs.end(), outputs.begin(), outputs.end());
  write_manifest((dir / "manifest.json").string(), m);
  for (const auto& o : outputs) std::cout << (dir / o).string() << '\n';
}

std::ofstream open_csv(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw Error("cannot open '" + p.string() + "' for writing");
  return out;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s, ',')) {
    auto v = parse_double(trim(item));
    if (!v) throw Error("not a number: '" + item + "'");
    out.push_back(*v);
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split(s, ',')) {
    auto v = parse_uint(trim(item));
    if (!v) throw Error("not a non-negative integer: '" + item + "'");
    out.push_back(static_cast<std::size_t>(*v));
  }
  return out;
}

int cmd_gen_data(const CommonOptions& o, const std::string& file) {
  const ExperimentConfig c = resolve_config(o);
  const auto path = resolve_output_dir(file);
  if (path.has_parent_path()) ensure_directory(path.parent_path());
  export_table(generate_benchmark(c.benchmark.specs()), path.string());
  std::cout << path.string() << '\n';
  return 0;
}

int cmd_train(const CommonOptions& o) {
  const ExperimentConfig c = resolve_config(o);
  const auto out = run_experiment(c, resolve_output_dir(c.output_dir), "train", log_line);
  std::cout << (out.output_dir / "results.csv").string() << '\n';
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& data, const std::string& features) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const auto domains = load_external_table(data, TableSchema{ckpt.spec.input_dim, ckpt.spec.num_classes});
  std::cout << "domain,examples,accuracy\n";
  std::vector<Example> all;
  for (const auto& d : domains) {
    std::vector<Example> labelled;
    for (const auto& e : d.examples) {
      if (e.label) labelled.push_back(e);
    }
    all.insert(all.end(), d.examples.begin(), d.examples.end());
    std::cout << d.domain_id << ',' << labelled.size() << ','
              << (labelled.empty() ? std::string() : format_number(evaluate_accuracy(ckpt.spec, ckpt.params, labelled)))
              << '\n';
  }
  if (!features.empty()) feature_dump(ckpt.spec, ckpt.params, all, resolve_output_dir(features).string());
  return 0;
}

int cmd_grid_search(const CommonOptions& o, const std::string& values) {
  const ExperimentConfig c = resolve_config(o);
  const auto dir = resolve_output_dir(c.output_dir);
  ensure_directory(dir);
  const auto benchmark = load_benchmark(c);
  const std::string target = single_target(benchmark, c.target);
  const auto r = grid_search_eta(benchmark, target, c, parse_doubles(values));
  auto out = open_csv(dir / "grid_search.csv");
  out << "eta,mean_val_accuracy,selected\n";
  for (const auto& p : r.points) {
    out << format_number(p.eta) << ',' << format_number(p.mean_val_accuracy) << ',' << (p.eta == r.best_eta) << '\n';
  }
  auto ref = open_csv(dir / "grid_search_reference.csv");
  ref << "dataset,optimal_eta\n";
  for (const auto& [name, eta] : reference::kOptimalEta) ref << name << ',' << format_number(eta) << '\n';
  if (r.best_eta < kMinCertainty) {
    log_line("note: every eta below " + format_number(kMinCertainty) +
             " admits all confident pseudo-labels, since certainty of a probability never falls below it");
  }
  finish(dir, base_manifest(c, "grid-search"), {"grid_search.csv", "grid_search_reference.csv"});
  return 0;
}

int cmd_ablate_mu(const CommonOptions& o, const std::string& values) {
  const ExperimentConfig c = resolve_config(o);
  const auto dir = resolve_output_dir(c.output_dir);
  ensure_directory(dir);
  const auto benchmark = load_benchmark(c);
  const std::string target = single_target(benchmark, c.target);
  const Method method = c.methods.empty() ? Method::kUplm : c.methods.front();
  const auto rows = ablate_mu(benchmark, target, method, c, parse_sizes(values));
  auto out = open_csv(dir / "mu_sweep.csv");
  out << "mu,mean_accuracy,std_accuracy,reference_accuracy\n";
  for (const auto& r : rows) {
    out << r.mu << ',' << format_number(r.mean) << ',' << format_number(r.std) << ',';
    if (r.mu >= 1 && r.mu <= reference::kMuSweep.size()) out << format_number(reference::kMuSweep[r.mu - 1]);
    out << '\n';
  }
  finish(dir, base_manifest(c, "ablate-mu"), {"mu_sweep.csv"});
  return 0;
}

int cmd_ablate_ma(const CommonOptions& o) {
  const ExperimentConfig c = resolve_config(o);
  const auto dir = resolve_output_dir(c.output_dir);
  ensure_directory(dir);
  const auto benchmark = load_benchmark(c);
  const std::string target = single_target(benchmark, c.target);
  const Method method = c.methods.empty() ? Method::kUplm : c.methods.front();
  const LodoSplit split = leave_one_domain_out(benchmark, target);
  auto out = open_csv(dir / "ma_variants.csv");
  out << "seed";
  for (const char* name : kMaVariantNames) out << ',' << name;
  out << '\n';
  std::array<double, 7> sum{};
  for (std::uint64_t seed : c.seeds) {
    const auto prep = prepare_sources(split.sources, c.labels_per_class, c.train_fraction, seed);
    TrainConfig tc = c.train;
    tc.seed = seed;
    const auto r = train_run(prep.domains, tc, method_dispatch(method).gate);
    const auto acc = ablate_ma_variants(r.spec, r.checkpoints, split.target.examples, tc.ma_weights);
    out << seed;
    for (std::size_t i = 0; i < acc.size(); ++i) {
      out << ',' << format_number(acc[i]);
      sum[i] += acc[i];
    }
    out << '\n';
  }
  out << "mean";
  for (double s : sum) out << ',' << format_number(s / static_cast<double>(c.seeds.size()));
  out << "\nreference";
  for (double v : reference::kMaVariants) out << ',' << format_number(v);
  out << '\n';
  finish(dir, base_manifest(c, "ablate-ma"), {"ma_variants.csv"});
  return 0;
}

int cmd_timing(const CommonOptions& o, const std::string& passes, std::size_t warmup, std::size_t timed) {
  const ExperimentConfig c = resolve_config(o);
  const auto dir = resolve_output_dir(c.output_dir);
  ensure_directory(dir);
  const auto benchmark = load_benchmark(c);
  const std::string target = single_target(benchmark, c.target);
  const auto split = leave_one_domain_out(benchmark, target);
  const std::uint64_t seed = c.seeds.empty() ? 0 : c.seeds.front();
  const auto prep = prepare_sources(split.sources, c.labels_per_class, c.train_fraction, seed);
  TrainConfig tc = c.train;
  tc.seed = seed;
  const auto rows = measure_mc_overhead(prep.domains, tc, parse_sizes(passes), warmup, timed);
  auto out = open_csv(dir / "timing.csv");
  out << "mc_passes,ms_per_iteration,reference_ms\n";
  for (const auto& r : rows) {
    out << r.mc_passes << ',' << format_number(r.ms_per_iteration) << ',' << format_optional(r.reference_ms) << '\n';
  }
  finish(dir, base_manifest(c, "timing"), {"timing.csv"});
  return 0;
}

int cmd_report(const std::string& manifest_path, const std::string& out_dir) {
  const RunManifest m = read_manifest(manifest_path);
  if (m.command != "train") throw Error("report replays 'train' manifests, got '" + m.command + "'");
  ExperimentConfig c = config_from_manifest(m);
  if (!out_dir.empty()) c.output_dir = out_dir;
  const auto out = run_experiment(c, resolve_output_dir(c.output_dir), "train", log_line);
  std::cout << (out.output_dir / "results.csv").string() << '\n';
  return 0;
}

}  // namespace
}  // namespace ssdg

int main(int argc, char** argv) {
  using namespace ssdg;
  CLI::App app{"Semi-supervised domain generalization experiments on synthetic benchmarks"};
  app.set_version_flag("--version", std::string(kArtifactVersion));
  app.require_subcommand(1);

  CommonOptions common;

  std::string gen_file = "benchmark.csv";
  auto* gen = app.add_subcommand("gen-data", "write the configured synthetic benchmark as a dataset CSV");
  add_common(gen, common);
  gen->add_option("--file", gen_file, "dataset path")->capture_default_str();

  auto* train = app.add_subcommand("train", "run every (target, method, seed) trial and write reports");
  add_common(train, common);

  std::string ckpt, data, features;
  auto* evaluate = app.add_subcommand("evaluate", "accuracy of a checkpoint on a dataset CSV");
  evaluate->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  evaluate->add_option("--data", data, "dataset CSV")->required();
  evaluate->add_option("--features", features, "also write penultimate features to this CSV");

  std::string eta_values = "0.2,0.3,0.4,0.5,0.6,0.7,0.8";
  auto* grid = app.add_subcommand("grid-search", "select the certainty threshold by validation accuracy");
  add_common(grid, common);
  grid->add_option("--values", eta_values, "comma list of eta values")->capture_default_str();

  auto* ablate_ma = app.add_subcommand("ablate-ma", "target accuracy of the seven averaging variants");
  add_common(ablate_ma, common);

  std::string mu_values = "1,2,3,4,5,6";
  auto* ablate_mu = app.add_subcommand("ablate-mu", "sweep the unlabelled-to-labelled batch ratio");
  add_common(ablate_mu, common);
  ablate_mu->add_option("--values", mu_values, "comma list of mu values")->capture_default_str();

  std::string pass_values = "1,5,10,20,40,80,160";
  std::size_t warmup = 5, timed = 50;
  auto* timing = app.add_subcommand("timing", "per-iteration cost of Monte-Carlo dropout passes");
  add_common(timing, common);
  timing->add_option("--passes", pass_values, "comma list of pass counts")->capture_default_str();
  timing->add_option("--warmup", warmup, "untimed iterations")->capture_default_str();
  timing->add_option("--iterations", timed, "timed iterations")->capture_default_str()->check(CLI::PositiveNumber);

  std::string manifest, report_out;
  auto* report = app.add_subcommand("report", "re-run a training manifest and rewrite its reports");
  report->add_option("--manifest", manifest, "manifest.json of an earlier train run")->required();
  report->add_option("-o,--out", report_out, "output directory (default: the manifest's)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_data(common, gen_file);
    if (*train) return cmd_train(common);
    if (*evaluate) return cmd_evaluate(ckpt, data, features);
    if (*grid) return cmd_grid_search(common, eta_values);
    if (*ablate_ma) return cmd_ablate_ma(common);
    if (*ablate_mu) return cmd_ablate_mu(common, mu_values);
    if (*timing) return cmd_timing(common, pass_values, warmup, timed);
    if (*report) return cmd_report(manifest, report_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
