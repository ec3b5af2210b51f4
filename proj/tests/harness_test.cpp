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


#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "gtest/gtest.h"
#include "ssdg/harness.hpp"
#include "ssdg/reports.hpp"

namespace ssdg {
namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(p);
  return p;
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.benchmark.examples_per_class = 30;
  c.train.epochs = 2;
  c.train.iterations_per_epoch = 8;
  c.train.hidden_dims = {16};
  c.train.tau = 0.7;
  c.seeds = {0, 1};
  return c;
}

std::vector<DomainSamples> zero_shift_benchmark(const ExperimentConfig& c) {
  auto specs = c.benchmark.specs();
  for (auto& s : specs) s.shift_magnitude = 0.0;
  return generate_benchmark(specs);
}

TEST(Lodo, FourDomainsLeaveThreeSources) {
  const auto bench = generate_benchmark(small_config().benchmark.specs());
  const auto split = leave_one_domain_out(bench, "style");
  EXPECT_EQ(split.sources.size(), 3u);
  EXPECT_EQ(split.target.domain_id, "style");
  EXPECT_TRUE(split.warnings.empty());
  for (const auto& s : split.sources) EXPECT_NE(s.domain_id, "style");
  EXPECT_THROW(leave_one_domain_out(bench, "sketch"), Error);
}

TEST(Lodo, TwoDomainsWarn) {
  auto c = small_config();
  c.benchmark.domains.resize(2);
  const auto split = leave_one_domain_out(generate_benchmark(c.benchmark.specs()), "texture");
  EXPECT_EQ(split.sources.size(), 1u);
  EXPECT_EQ(split.warnings.size(), 1u);
}

TEST(PrepareSources, TargetNeverEntersTraining) {
  const auto bench = generate_benchmark(small_config().benchmark.specs());
  const auto split = leave_one_domain_out(bench, "corruption");
  const auto prep = prepare_sources(split.sources, 10, 0.9, 3);
  std::set<std::size_t> target_ids;
  for (const auto& e : split.target.examples) target_ids.insert(e.id);
  for (const auto& d : prep.domains) {
    for (const auto* part : {&d.labelled, &d.unlabelled, &d.validation}) {
      for (const auto& e : *part) EXPECT_EQ(target_ids.count(e.id), 0u);
    }
    EXPECT_EQ(d.labelled.size(), 70u);
    EXPECT_EQ(d.validation.size(), 21u);
  }
}

TEST(MethodDispatch, FourWayMapping) {
  EXPECT_EQ(method_dispatch(Method::kFixMatch).gate, GatePolicy::kConfidenceOnly);
  EXPECT_EQ(method_dispatch(Method::kFixMatch).inference, InferenceModel::kBest);
  EXPECT_EQ(method_dispatch(Method::kUpl).gate, GatePolicy::kUpl);
  EXPECT_EQ(method_dispatch(Method::kUpl).inference, InferenceModel::kBest);
  EXPECT_EQ(method_dispatch(Method::kMa).gate, GatePolicy::kConfidenceOnly);
  EXPECT_EQ(method_dispatch(Method::kMa).inference, InferenceModel::kAverage);
  EXPECT_EQ(method_dispatch(Method::kUplm).gate, GatePolicy::kUpl);
  EXPECT_EQ(method_dispatch(Method::kUplm).inference, InferenceModel::kAverage);
}

TEST(MethodDispatch, MaWithIdenticalCheckpointsPredictsLikeBest) {
  TrainResult r;
  r.spec = NetworkSpec{3, {4}, 3, 0.5};
  Rng rng(1);
  const ParamSet p = init_params(r.spec, rng);
  r.checkpoints = {p, p, p};
  const Tensor x({2, 3}, {0.1, 0.2, 0.3, -1.0, 2.0, 0.5});
  const Tensor a = forward_eval(r.spec, inference_params(r, InferenceModel::kBest, {}), x).probs;
  const Tensor b = forward_eval(r.spec, inference_params(r, InferenceModel::kAverage, {}), x).probs;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(MeanStd, Population) {
  EXPECT_EQ(mean_std({5.0}).second, 0.0);
  const auto [m, s] = mean_std({1.0, 3.0});
  EXPECT_EQ(m, 2.0);
  EXPECT_EQ(s, 1.0);
}

TEST(RunTrials, SingleSeedHasZeroStdAndRepeatedSeedIsStable) {
  auto c = small_config();
  const auto bench = generate_benchmark(c.benchmark.specs());
  c.seeds = {5};
  EXPECT_EQ(run_trials(bench, "style", Method::kUpl, c).std, 0.0);
  c.seeds = {5, 5, 5};
  const auto row = run_trials(bench, "style", Method::kUpl, c);
  EXPECT_EQ(row.std, 0.0);
  EXPECT_EQ(row.per_seed[0], row.per_seed[2]);
}

TEST(RunTrials, ZeroShiftIsCloseToSupervisedReference) {
  ExperimentConfig c;
  const auto bench = zero_shift_benchmark(c);
  const auto semi = run_trials(bench, "texture", Method::kUplm, c);
  const auto sup = run_supervised_reference(bench, "texture", c);
  EXPECT_NEAR(semi.mean, sup.mean, 2.0);
}

TEST(ResultsTable, AverageRowIsMeanOfTargets) {
  ResultsTable t;
  t.rows = {{"a", Method::kUpl, 80.0, 0.0, {79.0, 81.0}}, {"b", Method::kUpl, 60.0, 0.0, {62.0, 58.0}},
            {"a", Method::kMa, 50.0, 0.0, {50.0}}};
  const auto avg = t.average_rows();
  ASSERT_EQ(avg.size(), 2u);
  EXPECT_EQ(avg[0].method, Method::kUpl);
  EXPECT_NEAR(avg[0].mean, 70.0, 1e-9);
  EXPECT_NEAR(avg[0].std, 0.5, 1e-12);
  EXPECT_EQ(avg[1].mean, 50.0);
}

TEST(GridSearch, CountsRunsAndPicksFromGrid) {
  auto c = small_config();
  c.seeds = {0};
  c.train.epochs = 1;
  c.train.iterations_per_epoch = 3;
  const auto bench = generate_benchmark(c.benchmark.specs());
  const std::vector<double> grid{0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
  const auto r = grid_search_eta(bench, "style", c, grid);
  EXPECT_EQ(r.runs, 7u);
  EXPECT_EQ(r.points.size(), 7u);
  EXPECT_NE(std::find(grid.begin(), grid.end(), r.best_eta), grid.end());
  // Every eta here is below the certainty floor, so all runs tie.
  EXPECT_EQ(r.best_eta, 0.2);
  EXPECT_EQ(grid_search_eta(bench, "style", c, {0.9}).best_eta, 0.9);
  EXPECT_THROW(grid_search_eta(bench, "style", c, {}), Error);
  EXPECT_THROW(grid_search_eta(bench, "style", c, {1.5}), Error);
}

TEST(AblateMu, OneRowPerValue) {
  auto c = small_config();
  c.seeds = {0};
  c.train.epochs = 1;
  c.train.iterations_per_epoch = 2;
  const auto bench = generate_benchmark(c.benchmark.specs());
  const auto rows = ablate_mu(bench, "style", Method::kFixMatch, c, {1, 2, 3});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].mu, 1u);
  EXPECT_THROW(ablate_mu(bench, "style", Method::kFixMatch, c, {0}), Error);
}

TEST(AblateMa, SevenColumnsInFixedOrder) {
  EXPECT_STREQ(kMaVariantNames[0], "last");
  EXPECT_STREQ(kMaVariantNames[6], "avg");
  const NetworkSpec spec{8, {16}, 7, 0.5};
  Rng rng(2);
  const ParamSet p = init_params(spec, rng);
  const auto bench = generate_benchmark(small_config().benchmark.specs());
  const auto acc = ablate_ma_variants(spec, {p, p, p}, bench[0].examples);
  for (double a : acc) EXPECT_EQ(a, acc[0]);
  const CheckpointTriple distinct{init_params(spec, rng), init_params(spec, rng), init_params(spec, rng)};
  EXPECT_EQ(ablate_ma_variants(spec, distinct, bench[0].examples),
            ablate_ma_variants(spec, distinct, bench[0].examples));
  const auto variants = ma_variants(distinct, {});
  EXPECT_EQ(variants[0], distinct.last);
  EXPECT_EQ(variants[1], distinct.best);
  EXPECT_EQ(variants[2], distinct.ema);
}

TEST(Timing, RowsAndReferenceColumn) {
  auto c = small_config();
  const auto bench = generate_benchmark(c.benchmark.specs());
  const auto prep = prepare_sources(leave_one_domain_out(bench, "style").sources, 10, 0.9, 0);
  const auto one = measure_mc_overhead(prep.domains, c.train, {10}, 1, 3);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(*one[0].reference_ms, 135.6);
  EXPECT_FALSE(reference_timing(3).has_value());
  const auto rows = measure_mc_overhead(prep.domains, c.train, {1, 160}, 2, 10);
  EXPECT_GT(rows[1].ms_per_iteration, rows[0].ms_per_iteration);
}

TEST(Reports, EmptyResultsGiveHeaderOnlyCsv) {
  const auto dir = fresh_dir("ssdg_reports_empty");
  emit_reports({}, RunManifest{}, dir);
  EXPECT_EQ(read_file(dir / "results.csv"), "target,method,mean_accuracy,std_accuracy,seeds\n");
  EXPECT_EQ(read_manifest((dir / "manifest.json").string()).outputs.front(), "results.csv");
}

TEST(Reports, ManifestRoundTrip) {
  const auto dir = fresh_dir("ssdg_manifest");
  std::filesystem::create_directories(dir);
  RunManifest m;
  m.command = "train";
  m.settings = to_settings(small_config());
  m.seeds = {0, 1};
  m.timings_seconds = {{"total", 1.5}};
  m.outputs = {"a.csv"};
  write_manifest((dir / "m.json").string(), m);
  const RunManifest back = read_manifest((dir / "m.json").string());
  EXPECT_EQ(back.settings, m.settings);
  EXPECT_EQ(back.seeds, m.seeds);
  EXPECT_EQ(back.outputs, m.outputs);
  EXPECT_EQ(to_settings(config_from_manifest(back)), m.settings);
  std::ofstream(dir / "bad.json") << "{\"artifact_version\": 3}";
  EXPECT_THROW(read_manifest((dir / "bad.json").string()), ParseError);
}

TEST(Reports, OutputRootEnvironment) {
  ::setenv(kOutputRootEnv, "/tmp/ssdg_root", 1);
  EXPECT_EQ(resolve_output_dir("run1"), std::filesystem::path("/tmp/ssdg_root/run1"));
  EXPECT_EQ(resolve_output_dir("/abs/run"), std::filesystem::path("/abs/run"));
  ::unsetenv(kOutputRootEnv);
  EXPECT_EQ(resolve_output_dir("run1"), std::filesystem::path("run1"));
}

TEST(Reports, ExperimentReplaysBitwiseFromManifest) {
  auto c = small_config();
  c.target = "style";
  c.methods = {Method::kFixMatch, Method::kUplm};
  c.gate_log = true;
  const auto first = run_experiment(c, fresh_dir("ssdg_replay_a"));
  const auto manifest = read_manifest((first.output_dir / "manifest.json").string());
  const auto second = run_experiment(config_from_manifest(manifest), fresh_dir("ssdg_replay_b"));
  EXPECT_EQ(read_file(first.output_dir / "results.csv"), read_file(second.output_dir / "results.csv"));
  for (const auto& rel : manifest.outputs) {
    if (rel == "manifest.json") continue;
    ASSERT_TRUE(std::filesystem::exists(first.output_dir / rel)) << rel;
    EXPECT_EQ(read_file(first.output_dir / rel), read_file(second.output_dir / rel)) << rel;
  }
  const std::string gates = read_file(first.output_dir / "gate_logs" / "style__UPLM__seed0.csv");
  EXPECT_EQ(gates.substr(0, gates.find('\n')), "example_id,pseudo_label,confidence,certainty,selected");
  const auto ckpt = load_checkpoint((first.output_dir / "checkpoints" / "style__UPLM__seed1__inference.ckpt").string());
  EXPECT_EQ(ckpt.spec.hidden_dims, c.train.hidden_dims);
}

}  // namespace
}  // namespace ssdg
