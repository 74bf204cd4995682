#include <cmath>

#include <gtest/gtest.h>

#include "pt2i/belief_graph.hpp"
#include "pt2i/errors.hpp"
#include "pt2i/graph_io.hpp"
#include "test_support.hpp"

namespace pt2i {
namespace {

using testing::GraphGen;

CandidateDistribution dist(std::initializer_list<std::pair<const char*, double>> items) {
  CandidateDistribution d;
  for (const auto& [label, p] : items) d.candidates.push_back({label, Probability(p)});
  return d;
}

BeliefGraph rabbit_graph() {
  BeliefGraph g;
  g.source_prompt = "a rabbit on grass";
  Entity rabbit{"rabbit", "a rabbit", EntityType::kExplicit, Probability(1.0), ImportanceScore(0.8), {}};
  rabbit.attributes.push_back({"color", ImportanceScore(0.9), dist({{"white", 0.5}, {"brown", 0.3}, {"black", 0.2}})});
  Entity grass{"grass", "grass", EntityType::kImplicit, Probability(0.6), ImportanceScore(0.3), {}};
  g.entities = {rabbit, grass};
  g.relations.push_back({"rabbit-grass", "rabbit on grass", "rabbit", "grass", false, ImportanceScore(0.4),
                         dist({{"above", 0.8}, {"left of", 0.2}})});
  return g;
}

TEST(UnitInterval, RejectsValuesOutsideRange) {
  EXPECT_THROW(Probability(1.5), std::out_of_range);
  EXPECT_THROW(Probability(-0.1), std::out_of_range);
  EXPECT_THROW(ImportanceScore(std::nan("")), std::out_of_range);
  EXPECT_DOUBLE_EQ(Probability::clamped(3.0).value(), 1.0);
  EXPECT_DOUBLE_EQ(Probability::clamped(-2.0).value(), 0.0);
  EXPECT_DOUBLE_EQ(Probability::clamped(std::nan("")).value(), 0.0);
}

TEST(Entropy, KnownValues) {
  EXPECT_DOUBLE_EQ(entropy(dist({{"a", 1.0}})), 0.0);
  EXPECT_NEAR(entropy(dist({{"a", 0.5}, {"b", 0.5}})), std::log(2.0), 1e-12);
  EXPECT_NEAR(entropy(dist({{"a", 0.5}, {"b", 0.5}, {"c", 0.0}})), std::log(2.0), 1e-12);
  EXPECT_NEAR(bernoulli_entropy(Probability(0.5)), std::log(2.0), 1e-12);
  EXPECT_DOUBLE_EQ(bernoulli_entropy(Probability(0.0)), 0.0);
  EXPECT_DOUBLE_EQ(bernoulli_entropy(Probability(1.0)), 0.0);
}

TEST(Entropy, TotalSumsEveryTerm) {
  const BeliefGraph g = rabbit_graph();
  const double expected = bernoulli_entropy(Probability(1.0)) + bernoulli_entropy(Probability(0.6)) +
                          entropy(g.entities[0].attributes[0].distribution) +
                          entropy(g.relations[0].spatial_distribution);
  EXPECT_NEAR(total_entropy(g), expected, 1e-12);
}

TEST(Normalize, RescalesAndKeepsOrder) {
  CandidateDistribution d;
  d.candidates = {{"x", Probability(0.2)}, {"y", Probability(0.6)}};
  const auto n = normalize(d);
  ASSERT_EQ(n.size(), 2u);
  EXPECT_EQ(n.candidates[0].label, "x");
  EXPECT_NEAR(n.candidates[0].prob.value(), 0.25, 1e-12);
  EXPECT_NEAR(n.sum(), 1.0, 1e-12);
}

TEST(Normalize, AllZeroThrowsOrFallsBackToUniform) {
  CandidateDistribution d;
  d.candidates = {{"x", Probability(0.0)}, {"y", Probability(0.0)}};
  EXPECT_THROW(normalize(d), AllZeroError);
  const auto u = normalize_or_uniform(d);
  EXPECT_NEAR(u.candidates[0].prob.value(), 0.5, 1e-12);
  EXPECT_NEAR(u.candidates[1].prob.value(), 0.5, 1e-12);
}

TEST(Distribution, ArgmaxPrefersFirstListedAndReportsTies) {
  bool tied = false;
  EXPECT_EQ(dist({{"a", 0.4}, {"b", 0.4}, {"c", 0.2}}).argmax(&tied), 0u);
  EXPECT_TRUE(tied);
  EXPECT_EQ(dist({{"a", 0.2}, {"b", 0.8}}).argmax(&tied), 1u);
  EXPECT_FALSE(tied);
  EXPECT_FALSE(CandidateDistribution{}.argmax().has_value());
}

TEST(Distribution, LookupIsCaseInsensitive) {
  const auto d = dist({{"White", 0.7}, {"black", 0.3}});
  EXPECT_DOUBLE_EQ(d.probability_of("white"), 0.7);
  EXPECT_DOUBLE_EQ(d.probability_of("grey"), 0.0);
  EXPECT_TRUE(CandidateDistribution::point_mass("x").is_point_mass());
  EXPECT_FALSE(d.is_point_mass());
}

TEST(Validate, AcceptsWellFormedGraph) { EXPECT_TRUE(validate(rabbit_graph()).empty()); }

TEST(Validate, ReportsEachViolationKind) {
  auto kinds = [](const BeliefGraph& g) {
    std::vector<ViolationKind> out;
    for (const auto& v : validate(g)) out.push_back(v.kind);
    return out;
  };
  using K = ViolationKind;

  BeliefGraph g = rabbit_graph();
  g.entities.push_back(g.entities[0]);
  EXPECT_EQ(kinds(g), std::vector<K>{K::kDuplicateEntityName});

  g = rabbit_graph();
  g.entities[0].attributes[0].distribution.candidates[0].prob = Probability(0.9);
  EXPECT_EQ(kinds(g), std::vector<K>{K::kDistributionNotNormalized});

  g = rabbit_graph();
  g.entities[1].prob_appearing = Probability(0.0);
  EXPECT_EQ(kinds(g), std::vector<K>{K::kZeroProbabilityImportance});

  g = rabbit_graph();
  g.relations[0].entity_2 = "cloud";
  EXPECT_EQ(kinds(g), std::vector<K>{K::kDanglingRelationEndpoint});

  g = rabbit_graph();
  g.relations[0].entity_2 = "rabbit";
  EXPECT_EQ(kinds(g), std::vector<K>{K::kSelfRelation});

  g = rabbit_graph();
  g.relations.push_back(g.relations[0]);
  std::swap(g.relations[1].entity_1, g.relations[1].entity_2);
  EXPECT_EQ(kinds(g), std::vector<K>{K::kDuplicateRelation});

  g = rabbit_graph();
  g.entities[0].attributes[0].distribution.candidates.clear();
  EXPECT_EQ(kinds(g), std::vector<K>{K::kEmptyDistribution});

  g = rabbit_graph();
  g.entities[0].attributes[0].distribution.candidates[1].label = "WHITE";
  EXPECT_EQ(kinds(g)[0], K::kDuplicateCandidateLabel);

  g = rabbit_graph();
  g.entities[0].attributes.push_back(g.entities[0].attributes[0]);
  EXPECT_EQ(kinds(g), std::vector<K>{K::kDuplicateAttributeName});

  g = rabbit_graph();
  g.entities[0].name = "  ";
  EXPECT_FALSE(kinds(g).empty());
  EXPECT_EQ(kinds(g)[0], K::kEmptyName);
}

TEST(ApplyEdit, CollapsesAndZeroesImportance) {
  const BeliefGraph g = rabbit_graph();
  const BeliefGraph a = apply_edit(g, SetAttributeValue{"rabbit", "color", "brown"});
  const Attribute* color = a.find_entity("rabbit")->find_attribute("color");
  EXPECT_TRUE(color->distribution.is_point_mass());
  EXPECT_EQ(color->distribution.candidates[0].label, "brown");
  EXPECT_DOUBLE_EQ(color->importance.value(), 0.0);

  const BeliefGraph r = apply_edit(g, SetRelationValue{"rabbit-grass", "left of"});
  EXPECT_DOUBLE_EQ(r.find_relation("rabbit-grass")->spatial_distribution.probability_of("left of"), 1.0);

  const BeliefGraph e = apply_edit(g, SetEntityExistence{"grass", false});
  EXPECT_DOUBLE_EQ(e.find_entity("grass")->prob_appearing.value(), 0.0);
  EXPECT_TRUE(validate(e).empty());

  const BeliefGraph c = apply_edit(g, ConfirmImplicit{"grass"});
  EXPECT_EQ(c.find_entity("grass")->entity_type, EntityType::kExplicit);
  EXPECT_DOUBLE_EQ(c.find_entity("grass")->prob_appearing.value(), 1.0);
}

TEST(ApplyEdit, NewLabelBecomesPointMass) {
  const BeliefGraph a = apply_edit(rabbit_graph(), SetAttributeValue{"rabbit", "color", " grey "});
  EXPECT_EQ(a.find_entity("rabbit")->find_attribute("color")->distribution,
            CandidateDistribution::point_mass("grey"));
}

TEST(ApplyEdit, UnknownTargetsThrow) {
  const BeliefGraph g = rabbit_graph();
  EXPECT_THROW(apply_edit(g, SetEntityExistence{"cloud", true}), UnknownTargetError);
  EXPECT_THROW(apply_edit(g, SetAttributeValue{"rabbit", "size", "big"}), UnknownTargetError);
  EXPECT_THROW(apply_edit(g, SetRelationValue{"sky-grass", "above"}), UnknownTargetError);
  EXPECT_THROW(apply_edit(g, SetAttributeValue{"rabbit", "color", " "}), PreconditionError);
}

TEST(DescribeEdit, ReadsAsSentence) {
  const BeliefGraph g = rabbit_graph();
  EXPECT_EQ(describe_edit(g, SetEntityExistence{"fork", true}), "There is a fork in the image.");
  EXPECT_EQ(describe_edit(g, SetEntityExistence{"fork", false}), "There is no fork in the image.");
  EXPECT_EQ(describe_edit(g, SetAttributeValue{"rabbit", "color", "white"}), "The color of the rabbit is white.");
  EXPECT_EQ(describe_edit(g, SetRelationValue{"rabbit-grass", "above"}), "The rabbit is above the grass.");
}

TEST(GroundTruth, ArgmaxAndThreshold) {
  const GroundTruthState gt = to_ground_truth(rabbit_graph());
  ASSERT_EQ(gt.entities.size(), 2u);
  EXPECT_TRUE(gt.entities[1].exists);  // 0.6 >= 0.5
  EXPECT_EQ(gt.entities[0].attributes[0].value, "white");
  EXPECT_EQ(gt.relations[0].spatial_value, "above");
}

TEST(GroundTruth, TiesFailUnlessFirstListedRequested) {
  BeliefGraph g = rabbit_graph();
  g.entities[0].attributes[0].distribution = dist({{"white", 0.5}, {"brown", 0.5}});
  EXPECT_THROW(to_ground_truth(g), AmbiguousArgmaxError);
  EXPECT_EQ(to_ground_truth(g, ArgmaxTies::kFirstListed).entities[0].attributes[0].value, "white");
}

TEST(GroundTruth, DegenerateGraphRoundTrips) {
  const GroundTruthState gt = to_ground_truth(rabbit_graph());
  const BeliefGraph b = from_ground_truth(gt);
  EXPECT_TRUE(validate(b).empty());
  EXPECT_EQ(to_ground_truth(b), gt);
  EXPECT_DOUBLE_EQ(total_entropy(b), 0.0);
}

// ---------------------------------------------------------------------------
// Randomized invariants

TEST(BeliefGraphProperties, ThousandRandomGraphs) {
  GraphGen gen(20240611);
  for (int i = 0; i < 1000; ++i) {
    SCOPED_TRACE("graph " + std::to_string(i));
    const BeliefGraph g = gen.graph();
    ASSERT_TRUE(validate(g).empty()) << validate(g).front().message;

    for (const auto& e : g.entities) {
      const double hb = bernoulli_entropy(e.prob_appearing);
      ASSERT_GE(hb, 0.0);
      ASSERT_LE(hb, std::log(2.0) + 1e-12);
      for (const auto& a : e.attributes) {
        ASSERT_NEAR(a.distribution.sum(), 1.0, 1e-6);
        const double h = entropy(a.distribution);
        ASSERT_GE(h, 0.0);
        ASSERT_LE(h, std::log(static_cast<double>(a.distribution.size())) + 1e-12);
      }
    }
    for (const auto& r : g.relations) {
      ASSERT_NEAR(r.spatial_distribution.sum(), 1.0, 1e-6);
      ASSERT_LE(entropy(r.spatial_distribution), std::log(static_cast<double>(r.spatial_distribution.size())) + 1e-12);
    }

    ASSERT_EQ(deserialize(serialize(g)), g);
    ASSERT_EQ(graph_from_json(graph_to_json(g)), g);

    // One edit of each kind, on random targets.
    std::vector<GraphEdit> edits;
    const Entity& e = g.entities[static_cast<std::size_t>(gen.below(static_cast<int>(g.entities.size())))];
    edits.push_back(SetEntityExistence{e.name, gen.below(2) == 1});
    edits.push_back(ConfirmImplicit{e.name});
    if (!e.attributes.empty()) {
      const Attribute& a = e.attributes[static_cast<std::size_t>(gen.below(static_cast<int>(e.attributes.size())))];
      const std::string label = gen.below(4) == 0 ? "fresh label"
                                                  : a.distribution.candidates[static_cast<std::size_t>(
                                                                                  gen.below(static_cast<int>(a.distribution.size())))]
                                                        .label;
      edits.push_back(SetAttributeValue{e.name, a.name, label});
    }
    if (!g.relations.empty())
      edits.push_back(SetRelationValue{g.relations[0].name, g.relations[0].spatial_distribution.candidates[0].label});

    for (const auto& edit : edits) {
      const BeliefGraph once = apply_edit(g, edit);
      ASSERT_TRUE(validate(once).empty());
      ASSERT_EQ(apply_edit(once, edit), once);
      ASSERT_LE(total_entropy(once), total_entropy(g) + 1e-12);
    }
  }
}

}  // namespace
}  // namespace pt2i
