#include <cmath>

#include <gtest/gtest.h>

#include "pt2i/errors.hpp"
#include "pt2i/metrics.hpp"
#include "pt2i/scripted.hpp"
#include "pt2i/simulator.hpp"
#include "test_support.hpp"

namespace pt2i {
namespace {

using testing::GraphGen;

BeliefGraph cat_on_sofa() {
  BeliefGraph g;
  Entity cat;
  cat.name = "cat";
  cat.entity_type = EntityType::kExplicit;
  cat.prob_appearing = Probability(0.8);
  cat.importance = ImportanceScore(0.5);
  cat.attributes.push_back({"color", ImportanceScore(0.5), {{{"black", Probability(0.5)}, {"white", Probability(0.5)}}}});
  Entity sofa;
  sofa.name = "sofa";
  sofa.entity_type = EntityType::kImplicit;
  sofa.prob_appearing = Probability(0.3);
  sofa.importance = ImportanceScore(0.5);
  g.entities = {cat, sofa};
  Relation r;
  r.name = "cat-sofa";
  r.entity_1 = "cat";
  r.entity_2 = "sofa";
  r.importance = ImportanceScore(0.5);
  r.spatial_distribution = {{{"on", Probability(0.75)}, {"beside", Probability(0.25)}}};
  g.relations = {r};
  return g;
}

TEST(Nll, HandComputedCase) {
  GroundTruthState gt;
  gt.entities = {{"cat", true, {{"color", "black"}}}};
  EXPECT_NEAR(nll(cat_on_sofa(), gt), 0.916290731874155, 1e-12);
  EXPECT_NEAR(nll(cat_on_sofa(), gt), -std::log(0.8) - std::log(0.5), 1e-12);
}

TEST(Nll, AbsentEntitiesAndRelations) {
  const BeliefGraph b = cat_on_sofa();
  GroundTruthState gt;
  gt.entities = {{"Sofa", false, {{"color", "red"}}}};
  // Only the absence is scored; the attribute of a missing entity is not.
  EXPECT_NEAR(nll(b, gt), -std::log(0.7), 1e-12);

  gt.entities = {{"dog", false, {}}};
  EXPECT_EQ(nll(b, gt), 0.0);

  gt.entities = {{"cat", true, {}}, {"sofa", true, {}}};
  gt.relations = {{"whatever", "cat", "sofa", "beside"}};
  EXPECT_NEAR(nll(b, gt), -std::log(0.8) - std::log(0.3) - std::log(0.25), 1e-12);

  gt.entities[1].exists = false;
  EXPECT_NEAR(nll(b, gt), -std::log(0.8) - std::log(0.7), 1e-12);
}

TEST(Nll, FloorForUnmatchedFacts) {
  const double floor_cost = -std::log(kProbabilityFloor);
  EXPECT_NEAR(floor_cost, 9.210340371976184, 1e-12);
  GroundTruthState gt;
  gt.entities = {{"dog", true, {{"size", "large"}}}, {"cat", true, {{"color", "orange"}, {"tail", "long"}}}};
  std::vector<std::string> unmatched;
  const double v = nll(cat_on_sofa(), gt, &unmatched);
  EXPECT_NEAR(v, 2 * floor_cost - std::log(0.8) + floor_cost + floor_cost, 1e-9);
  EXPECT_EQ(unmatched, (std::vector<std::string>{"dog", "dog.size", "cat.tail"}));
}

TEST(Nll, GroundTruthAsBeliefScoresZero) {
  GraphGen gen(31);
  for (int i = 0; i < 300; ++i) {
    const GroundTruthState gt = to_ground_truth(gen.graph(), ArgmaxTies::kFirstListed);
    EXPECT_EQ(nll(from_ground_truth(gt), gt), 0.0);
  }
}

TEST(Nll, CollapsingAnAttributeRemovesItsCost) {
  GraphGen gen(9001);
  int checked = 0;
  for (int i = 0; i < 500; ++i) {
    const BeliefGraph b = gen.graph();
    const GroundTruthState gt = to_ground_truth(b, ArgmaxTies::kFirstListed);
    for (const auto& ge : gt.entities) {
      if (!ge.exists || ge.attributes.empty()) continue;
      const auto& ga = ge.attributes[static_cast<std::size_t>(gen.below(static_cast<int>(ge.attributes.size())))];
      const double prior = b.find_entity(ge.name)->find_attribute(ga.name)->distribution.probability_of(ga.value);
      if (prior < kProbabilityFloor) continue;
      BeliefGraph after = b;
      after.find_entity(ge.name)->find_attribute(ga.name)->distribution = CandidateDistribution::point_mass(ga.value);
      EXPECT_NEAR(nll(b, gt) - nll(after, gt), -std::log(prior), 1e-9);
      ++checked;
      break;
    }
  }
  EXPECT_GT(checked, 100);
}

// Brute-force ranking: repeated scans for the best remaining image.
std::vector<std::string> oracle_rank(const ImageScores& scores) {
  std::vector<std::pair<std::string, double>> left;
  for (const auto& [id, s] : scores) {
    double sum = 0.0;
    for (double x : s) sum += x;
    left.emplace_back(id, s.empty() ? 0.0 : sum / static_cast<double>(s.size()));
  }
  std::vector<std::string> out;
  while (!left.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < left.size(); ++i)
      if (left[i].second > left[best].second || (left[i].second == left[best].second && left[i].first < left[best].first))
        best = i;
    out.push_back(left[best].first);
    left.erase(left.begin() + static_cast<std::ptrdiff_t>(best));
  }
  return out;
}

TEST(RankImages, MatchesBruteForce) {
  GraphGen gen(555);
  for (int i = 0; i < 100; ++i) {
    const int n_images = 1 + gen.below(10);
    const int n_questions = 1 + gen.below(5);
    const bool coarse = gen.below(2) == 0;  // quarter steps force ties
    ImageScores scores;
    for (int j = 0; j < n_images; ++j) {
      std::vector<double> s;
      for (int q = 0; q < n_questions; ++q) s.push_back(coarse ? gen.below(5) / 4.0 : gen.uniform());
      scores.emplace_back("img-" + std::to_string(gen.below(1000)) + "-" + std::to_string(j), s);
    }
    const auto expected = oracle_rank(scores);
    EXPECT_EQ(rank_images(scores), expected);
    EXPECT_EQ(select_best_image(scores), expected.front());
  }
}

TEST(RankImages, RejectsBadInput) {
  EXPECT_THROW(rank_images({}), EmptyInputError);
  EXPECT_THROW(rank_images({{"a", {0.1, 0.2}}, {"b", {0.3}}}), PreconditionError);
  EXPECT_EQ(select_best_image({{"b", {0.5}}, {"a", {0.5}}}), "a");
}

TEST(T2tSimilarity, CosineOfEmbeddings) {
  HashingEmbedder e;
  EXPECT_NEAR(t2t_similarity(e, "a red car", "a red car"), 1.0, 1e-12);
  const double close = t2t_similarity(e, "a red car on a street", "a red car");
  const double far = t2t_similarity(e, "a red car on a street", "lighthouse over the sea");
  EXPECT_GT(close, far);
  EXPECT_THROW(t2t_similarity(e, "", "x"), PreconditionError);
}

TEST(MetricSeries, GroupsByMetricThenTurn) {
  Transcript t;
  t.config.metric_set = {kMetricNll, kMetricT2t};
  for (int i = 1; i <= 3; ++i) {
    TurnLog log;
    log.turn = i;
    log.metrics = {{kMetricNll, 4.0 - i}, {kMetricT2t, 0.1 * i}};
    t.turns.push_back(log);
  }
  t.flags = {"i2i_ext: no image scorer configured"};
  const MetricSeries s = metric_series(t);
  ASSERT_EQ(s.values.size(), 6u);
  EXPECT_EQ(s.values[0], (MetricValue{kMetricNll, 3.0, 1}));
  EXPECT_EQ(s.values[2], (MetricValue{kMetricNll, 1.0, 3}));
  EXPECT_EQ(s.values[3].id, kMetricT2t);
  EXPECT_EQ(s.flags, t.flags);
  EXPECT_TRUE(is_known_metric("t2i_vqa_ext"));
  EXPECT_FALSE(is_known_metric("bleu"));
}

}  // namespace
}  // namespace pt2i
