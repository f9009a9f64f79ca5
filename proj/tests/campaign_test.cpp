#include "segfalsify/campaign.hpp"

#include "segfalsify/report.hpp"
#include "segfalsify/synthetic.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

namespace segfalsify {
namespace {

Dataset styled_dataset(const std::vector<std::pair<SceneStyle, int>>& groups, std::uint64_t seed) {
  Dataset ds;
  for (const auto& [style, n] : groups) {
    SyntheticOptions opts;
    opts.style = style;
    for (const Sample& s : make_synthetic_dataset(n, seed++, opts)) {
      ds.ids.push_back(to_string(style) + "_" + std::to_string(ds.size()));
      ds.samples.push_back(s);
    }
  }
  return ds;
}

std::vector<const Sample*> pointers(const Dataset& ds) {
  std::vector<const Sample*> out;
  for (const auto& s : ds.samples) out.push_back(&s);
  return out;
}

FalsifyConfig small_config(int budget, std::uint64_t seed = 1) {
  FalsifyConfig cfg;
  cfg.de = {10, 0.8, budget, seed};
  return cfg;
}

// Model that counts calls, optionally failing from call `fail_from` on.
class CountingModel final : public Model {
 public:
  explicit CountingModel(int fail_from = -1) : fail_from_(fail_from) {}
  ProbMap predict(const Image& img) override {
    if (fail_from_ >= 0 && calls >= fail_from_) throw ModelError("injected failure");
    ++calls;
    return inner_.predict(img);
  }
  std::string describe() const override { return "counting"; }
  int calls = 0;

 private:
  int fail_from_;
  ReferenceModel inner_;
};

class CampaignTest : public ::testing::Test {
 protected:
  const Registry& reg = builtin_registry();
  ParamBounds hard = hard_bounds(reg);
  ReferenceModel model;
  Dataset data = styled_dataset({{SceneStyle::standard, 6}}, 11);
};

TEST_F(CampaignTest, NeutralBoundsCannotDeteriorate) {
  const ParamBounds neutral = neutral_bounds(reg);
  const ClusterReport r = falsify_cluster(0, pointers(data), model, reg, neutral, small_config(40));
  EXPECT_TRUE(r.ok) << r.error;
  EXPECT_EQ(r.best_deterioration, 0.0);
  EXPECT_EQ(r.evaluations, 40);
}

TEST_F(CampaignTest, CachedBaselineMatchesUncached) {
  FalsifyConfig cached = small_config(30);
  FalsifyConfig uncached = cached;
  uncached.cache_baseline = false;
  const auto imgs = pointers(data);
  const ChainObjective a(imgs, model, reg, hard, cached);
  const ChainObjective b(imgs, model, reg, hard, uncached);
  EXPECT_EQ(a.mean_baseline(), b.mean_baseline());
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd g(a.dim());
    for (auto& v : g) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    EXPECT_EQ(a(g), b(g));
  }
}

TEST_F(CampaignTest, ReportedValueReproducesFromChain) {
  const FalsifyConfig cfg = small_config(60, 4);
  const ClusterReport r = falsify_cluster(0, pointers(data), model, reg, hard, cfg);
  ASSERT_TRUE(r.ok) << r.error;
  ASSERT_EQ(r.best_chain.size(), 6u);
  EXPECT_GT(r.best_deterioration, 0.0);
  const ChainObjective fresh(pointers(data), model, reg, hard, cfg);
  EXPECT_EQ(fresh.evaluate_chain(r.best_chain), r.best_deterioration);
  EXPECT_NEAR(r.mean_baseline_iou, fresh.mean_baseline(), 0.0);
}

TEST_F(CampaignTest, RandomMethodAndSubsample) {
  FalsifyConfig cfg = small_config(25);
  cfg.method = SearchMethod::random;
  cfg.subsample = 4;
  const ClusterReport r = falsify_cluster(3, pointers(data), model, reg, hard, cfg);
  EXPECT_EQ(r.size, 6u);
  EXPECT_EQ(r.evaluated_images, 4u);
  EXPECT_EQ(r.evaluations, 25);
  const ClusterReport again = falsify_cluster(3, pointers(data), model, reg, hard, cfg);
  EXPECT_EQ(again.best_genome, r.best_genome);
}

TEST_F(CampaignTest, DisableRuleParsing) {
  DisableRules rules;
  add_disable_rule(rules, "fog");
  add_disable_rule(rules, "rain@1,3");
  add_disable_rule(rules, "snow@3");
  EXPECT_EQ(rules.for_cluster(0), (std::set<std::string>{"fog"}));
  EXPECT_EQ(rules.for_cluster(1), (std::set<std::string>{"fog", "rain"}));
  EXPECT_EQ(rules.for_cluster(3), (std::set<std::string>{"fog", "rain", "snow"}));
  for (const char* bad : {"", "@1", "rain@", "rain@x", "rain@1,", "rain@-2", "rain@1.5"}) {
    EXPECT_THROW(add_disable_rule(rules, bad), std::invalid_argument) << bad;
  }
}

TEST_F(CampaignTest, DisabledPerturbationsNeverAppear) {
  const Dataset two = styled_dataset({{SceneStyle::standard, 3}, {SceneStyle::dark, 3}}, 5);
  const ClusterMap clusters{{0, {0, 1, 2}}, {1, {3, 4, 5}}};
  DisableRules rules;
  add_disable_rule(rules, "brightness");
  add_disable_rule(rules, "fog@1");
  const FalsifyReport rep = run_campaign(two, model, reg, hard, clusters, rules, small_config(40));
  ASSERT_EQ(rep.clusters.size(), 2u);
  for (const auto& c : rep.clusters) {
    ASSERT_TRUE(c.ok) << c.error;
    for (const auto& link : c.best_chain) {
      EXPECT_NE(link.name, "brightness");
      if (c.id == 1) EXPECT_NE(link.name, "fog");
    }
  }
  EXPECT_EQ(rep.clusters[1].disabled, (std::vector<std::string>{"brightness", "fog"}));
  DisableRules unknown;
  add_disable_rule(unknown, "hail");
  EXPECT_THROW(run_campaign(two, model, reg, hard, clusters, unknown, small_config(40)),
               UnknownPerturbation);
}

TEST_F(CampaignTest, UsageMatrixPositions) {
  ClusterReport a, b;
  a.id = 4;
  a.best_chain = {{"fog", ParamVector()}, {"gaussian_blur", ParamVector()}};
  b.id = 9;
  const UsageMatrix u = usage_matrix(reg, {a, b});
  EXPECT_EQ(u.clusters, (std::vector<int>{4, 9}));
  ASSERT_EQ(u.positions.rows(), 12);
  EXPECT_EQ(u.positions(reg.index_of("fog"), 0), 1);
  EXPECT_EQ(u.positions(reg.index_of("gaussian_blur"), 0), 2);
  EXPECT_EQ(u.positions.col(0).sum(), 3);
  EXPECT_EQ(u.positions.col(1).sum(), 0);
}

TEST_F(CampaignTest, SingleClusterGivesOneRow) {
  const ClusterMap one = single_cluster(data);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one.at(0).size(), data.size());
  const FalsifyReport rep = run_campaign(data, model, reg, hard, one, {}, small_config(20));
  EXPECT_EQ(rep.clusters.size(), 1u);
  EXPECT_EQ(rep.usage.positions.cols(), 1);
}

TEST_F(CampaignTest, AssignmentsMapImagesToClusters) {
  std::vector<std::pair<std::string, int>> rows;
  for (std::size_t i = 0; i < data.size(); ++i) rows.emplace_back(data.ids[i], int(i % 2) * 5);
  const ClusterMap map = clusters_from_assignments(data, rows);
  EXPECT_EQ(map.at(0), (std::vector<std::size_t>{0, 2, 4}));
  EXPECT_EQ(map.at(5), (std::vector<std::size_t>{1, 3, 5}));
  auto missing = rows;
  missing.pop_back();
  EXPECT_THROW(clusters_from_assignments(data, missing), std::invalid_argument);
  auto doubled = rows;
  doubled.push_back(rows[0]);
  EXPECT_THROW(clusters_from_assignments(data, doubled), std::invalid_argument);
  auto stranger = rows;
  stranger.emplace_back("nobody", 0);
  EXPECT_THROW(clusters_from_assignments(data, stranger), std::out_of_range);
}

TEST_F(CampaignTest, DistinctClustersGetDistinctChains) {
  const Dataset mixed = styled_dataset(
      {{SceneStyle::dark, 4}, {SceneStyle::bright, 4}, {SceneStyle::textured, 4}}, 21);
  const ClusterMap clusters{{0, {0, 1, 2, 3}}, {1, {4, 5, 6, 7}}, {2, {8, 9, 10, 11}}};
  const FalsifyReport rep = run_campaign(mixed, model, reg, hard, clusters, {}, small_config(100));
  ASSERT_EQ(rep.clusters.size(), 3u);
  auto names = [](const ClusterReport& c) {
    std::vector<std::string> out;
    for (const auto& link : c.best_chain) out.push_back(link.name);
    return out;
  };
  EXPECT_NE(names(rep.clusters[0]), names(rep.clusters[1]));
}

TEST_F(CampaignTest, FailingClusterIsIsolated) {
  const ClusterMap clusters{{0, {0, 1, 2}}, {1, {3, 4, 5}}};
  // Cluster 0 needs 3 baseline calls plus 3 per evaluation for 20 evaluations.
  CountingModel flaky(3 + 3 * 20 + 3 + 3 * 5);
  FalsifyConfig cfg = small_config(20);
  const FalsifyReport rep = run_campaign(data, flaky, reg, hard, clusters, {}, cfg);
  ASSERT_EQ(rep.clusters.size(), 2u);
  EXPECT_TRUE(rep.clusters[0].ok);
  EXPECT_FALSE(rep.clusters[1].ok);
  EXPECT_NE(rep.clusters[1].error.find("injected failure"), std::string::npos);
  EXPECT_EQ(rep.clusters[1].evaluations, 5);

  // A failure during the baseline pass leaves an empty but labelled row.
  CountingModel dead(0);
  const FalsifyReport none = run_campaign(data, dead, reg, hard, clusters, {}, cfg);
  ASSERT_EQ(none.clusters.size(), 2u);
  EXPECT_FALSE(none.clusters[0].ok);
  EXPECT_EQ(none.clusters[0].size, 3u);
}

class ReportFiles : public CampaignTest {
 protected:
  void SetUp() override {
    dir = std::filesystem::temp_directory_path() / ("segfalsify_report_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
  }
  void TearDown() override { std::filesystem::remove_all(dir); }
  std::filesystem::path dir;
};

TEST_F(ReportFiles, JsonMarkdownAndTrace) {
  FalsifyConfig cfg = small_config(30);
  cfg.trace_dir = dir.string();
  const ClusterMap clusters{{0, {0, 1, 2}}, {7, {3, 4, 5}}};
  DisableRules rules;
  add_disable_rule(rules, "fog@7");
  const FalsifyReport rep = run_campaign(data, model, reg, hard, clusters, rules, cfg);
  const nlohmann::ordered_json settings{{"budget", 30}};
  const auto doc = report_to_json(rep, reg, settings);

  EXPECT_TRUE(doc.contains("generated_at"));
  EXPECT_EQ(doc["config"], settings);
  ASSERT_EQ(doc["clusters"].size(), 2u);
  EXPECT_EQ(doc["clusters"][1]["id"], 7);
  EXPECT_EQ(doc["clusters"][1]["disabled"], nlohmann::ordered_json::array({"fog"}));
  EXPECT_EQ(doc["clusters"][0]["chain"].size(), 6u);
  EXPECT_EQ(doc["usage"]["positions"].size(), 12u);

  const auto later = report_to_json(rep, reg, settings);
  EXPECT_EQ(strip_volatile(doc), strip_volatile(later));
  EXPECT_FALSE(strip_volatile(doc).contains("generated_at"));

  const std::string md = render_markdown(doc);
  EXPECT_NE(md.find("| 7 * |"), std::string::npos) << md;
  EXPECT_NE(md.find("| fog |"), std::string::npos);

  const std::string trace = doc["clusters"][1]["trace"];
  EXPECT_EQ(trace, "trace_cluster_7.csv");
  std::ifstream in(dir / trace);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  EXPECT_EQ(lines, 31);
}

}  // namespace
}  // namespace segfalsify
