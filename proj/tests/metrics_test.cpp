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
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gtest/gtest.h"
#include "oracles.hpp"
#include "ssdg/metrics.hpp"

namespace ssdg {
namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Top1Accuracy, Cases) {
  const Tensor p({4, 2}, {0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7});
  EXPECT_EQ(top1_accuracy(p, std::vector<std::size_t>{0, 1, 0, 1}), 100.0);
  EXPECT_EQ(top1_accuracy(p, std::vector<std::size_t>{1, 0, 1, 0}), 0.0);
  EXPECT_EQ(top1_accuracy(p, std::vector<std::size_t>{0, 1, 0, 0}), 75.0);
  EXPECT_THROW(top1_accuracy(Tensor({0, 2}), std::vector<std::size_t>{}), Error);
  const Tensor tie({1, 2}, {0.5, 0.5});
  EXPECT_EQ(top1_accuracy(tie, std::vector<std::size_t>{0}), 100.0);
}

TEST(Ece, Cases) {
  const std::vector<double> ones(5, 1.0);
  const std::vector<std::uint8_t> all_ok(5, 1);
  EXPECT_EQ(ece(ones, all_ok), 0.0);
  const std::vector<double> c(5, 0.8);
  const std::vector<std::uint8_t> ok{1, 1, 1, 0, 0};
  EXPECT_NEAR(ece(c, ok, 1), 0.2, 1e-15);
  EXPECT_THROW(ece(c, ok, 0), Error);
  EXPECT_EQ(ece({}, {}, 10), 0.0);
}

TEST(Ece, SixMixedExamplesAcrossTwoBins) {
  const std::vector<double> c{0.3, 0.5, 0.55, 0.7, 0.9, 1.0};
  const std::vector<std::uint8_t> ok{0, 1, 1, 0, 1, 1};
  // Bin (0, .5]: {0.3, 0.5}, acc 0.5, conf 0.4. Bin (.5, 1]: acc 0.75, conf 0.7875.
  const double hand = (2.0 / 6.0) * 0.1 + (4.0 / 6.0) * 0.0375;
  EXPECT_NEAR(ece(c, ok, 2), hand, 1e-12);
  EXPECT_NEAR(ece(c, ok, 2), static_cast<double>(testing::ece_oracle(c, ok, 2)), 1e-12);
}

TEST(Ece, EdgeConfidencesGoToLowerBin) {
  for (std::size_t m : {1u, 3u, 7u, 10u, 15u}) {
    for (std::size_t k = 1; k <= m; ++k) {
      const double edge = static_cast<double>(k) / static_cast<double>(m);
      EXPECT_EQ(ece_bin_index(edge, m), k - 1) << "M=" << m << " k=" << k;
      EXPECT_EQ(ece_bin_index(std::nextafter(edge, 2.0), m), std::min(k, m - 1));
    }
  }
  EXPECT_EQ(ece_bin_index(0.0, 10), 0u);
}

TEST(Ece, MatchesBruteForceOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 1 + rng.index(15);
    const std::size_t n = rng.index(40);
    std::vector<double> c(n);
    std::vector<std::uint8_t> ok(n);
    for (std::size_t i = 0; i < n; ++i) {
      c[i] = rng.uniform() < 0.3 ? static_cast<double>(1 + rng.index(m)) / static_cast<double>(m)
                                 : 1.0 - rng.uniform();
      ok[i] = rng.uniform() < c[i];
    }
    const EceBins bins = ece_bins(c, ok, m);
    std::size_t total = 0;
    for (const auto& b : bins.bins) total += b.count;
    EXPECT_EQ(total, n);
    EXPECT_NEAR(ece(c, ok, m), static_cast<double>(testing::ece_oracle(c, ok, m)), 1e-12);
  }
}

TEST(PlStats, Cases) {
  HiddenLabels hidden;
  for (std::size_t i = 0; i < 10; ++i) hidden.record(i, i % 3);
  std::vector<std::size_t> ids(10);
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<GateDecision> d(10);
  for (std::size_t i = 0; i < 10; ++i) {
    d[i].pseudo_label = i % 3;
    d[i].selected = true;
  }
  auto s = pl_stats(d, ids, hidden);
  EXPECT_EQ(*s.precision, 100.0);
  EXPECT_EQ(s.coverage, 1.0);
  for (auto& x : d) x.selected = false;
  s = pl_stats(d, ids, hidden);
  EXPECT_FALSE(s.precision.has_value());
  EXPECT_EQ(s.coverage, 0.0);
  for (std::size_t i : {0u, 1u, 2u, 3u}) d[i].selected = true;
  d[3].pseudo_label = 2;
  s = pl_stats(d, ids, hidden);
  EXPECT_EQ(*s.precision, 75.0);
  EXPECT_EQ(s.coverage, 0.4);
}

TEST(PlStats, OrderInvariant) {
  Rng rng(2);
  HiddenLabels hidden;
  for (std::size_t i = 0; i < 50; ++i) hidden.record(i, rng.index(4));
  std::vector<std::size_t> ids(50);
  std::iota(ids.begin(), ids.end(), 0);
  std::vector<GateDecision> d(50);
  for (auto& x : d) {
    x.pseudo_label = rng.index(4);
    x.selected = rng.uniform() < 0.5;
  }
  const auto base = pl_stats(d, ids, hidden);
  for (int t = 0; t < 20; ++t) {
    std::vector<std::size_t> order(50);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    std::vector<GateDecision> pd;
    std::vector<std::size_t> pid;
    for (std::size_t i : order) {
      pd.push_back(d[i]);
      pid.push_back(ids[i]);
    }
    const auto s = pl_stats(pd, pid, hidden);
    EXPECT_EQ(s.precision, base.precision);
    EXPECT_EQ(s.coverage, base.coverage);
  }
}

TEST(CalibrationSeries, SortsEpochsByUncertainty) {
  std::vector<BatchCalibrationRecord> r{{1, {0.3, 0.3}, 0.5}, {2, {0.1}, 0.2}, {3, {0.2}, 0.9}};
  const auto s = uncertainty_ece_series(r);
  ASSERT_EQ(s.points.size(), 3u);
  EXPECT_EQ(s.points[0].mean_uncertainty, 0.1);
  EXPECT_EQ(s.points[0].mean_ece, 0.2);
  EXPECT_EQ(s.points[1].mean_ece, 0.9);
  EXPECT_EQ(s.points[2].epoch, 1u);
  EXPECT_THROW(uncertainty_ece_series(std::vector<BatchCalibrationRecord>{}), Error);
}

TEST(CalibrationSeries, MatchesHandMeans) {
  // Epoch 1: examples {0.1, 0.2, 0.3, 0.6} over two batches, ECEs {0.4, 0.1}.
  // Epoch 2: one batch, examples {0.05}, ECE 0.3.
  std::vector<BatchCalibrationRecord> r{{1, {0.1, 0.2}, 0.4}, {1, {0.3, 0.6}, 0.1}, {2, {0.05}, 0.3}};
  const auto s = uncertainty_ece_series(r);
  ASSERT_EQ(s.points.size(), 2u);
  EXPECT_EQ(s.points[0].epoch, 2u);
  EXPECT_NEAR(s.points[1].mean_uncertainty, 0.3, 1e-12);
  EXPECT_NEAR(s.points[1].mean_ece, 0.25, 1e-12);
  const std::vector<BatchCalibrationRecord> one{{4, {0.2}, 0.1}};
  EXPECT_EQ(uncertainty_ece_series(one).points.size(), 1u);
}

TEST(Spearman, KnownValues) {
  const std::vector<double> x{1, 2, 3, 4}, up{10, 20, 30, 40}, down{4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman_correlation(x, up), 1.0);
  EXPECT_DOUBLE_EQ(spearman_correlation(x, down), -1.0);
  const std::vector<double> flat{1, 1, 1, 1};
  EXPECT_EQ(spearman_correlation(x, flat), 0.0);
  // Ranks with ties: y = (1, 2.5, 2.5, 4) -> rho = 0.9486832980505138.
  const std::vector<double> tied{5, 7, 7, 9};
  EXPECT_NEAR(spearman_correlation(x, tied), 0.9486832980505138, 1e-12);
}

TEST(FeatureDump, HeaderOnlyForNoExamples) {
  const NetworkSpec spec{2, {3}, 2, 0.5};
  const auto path = std::filesystem::temp_directory_path() / "ssdg_features_empty.csv";
  feature_dump(spec, zero_params(spec), {}, path.string());
  EXPECT_EQ(read_file(path), "example_id,domain,label,f0,f1,f2\n");
}

TEST(FeatureDump, RowsMatchLastHiddenWidth) {
  const NetworkSpec spec{2, {4, 3}, 2, 0.5};
  Rng rng(3);
  const ParamSet p = init_params(spec, rng);
  const std::vector<Example> ex{{0, {1.0, 2.0}, 1, "a"}, {1, {1.0, 2.0}, std::nullopt, "b"}};
  const auto path = std::filesystem::temp_directory_path() / "ssdg_features.csv";
  feature_dump(spec, p, ex, path.string());
  std::istringstream in(read_file(path));
  std::string header, a, b;
  std::getline(in, header);
  std::getline(in, a);
  std::getline(in, b);
  EXPECT_EQ(header, "example_id,domain,label,f0,f1,f2");
  EXPECT_EQ(std::count(a.begin(), a.end(), ','), 5);
  EXPECT_EQ(a.substr(a.find(",1,") + 3), b.substr(b.find(",b,,") + 4));
}

TEST(MetricsCsv, HeaderAndNullFields) {
  const auto path = std::filesystem::temp_directory_path() / "ssdg_metrics.csv";
  const std::vector<MetricsRecord> rows{{1, 50.0, std::nullopt, std::nullopt, 0.0, 0.01, 0.25}};
  write_metrics_csv(path.string(), rows);
  EXPECT_EQ(read_file(path),
            "epoch,val_acc,target_acc,pl_precision,pl_coverage,mean_uncertainty,ece\n"
            "1,50,,,0,0.01,0.25\n");
}

}  // namespace
}  // namespace ssdg
