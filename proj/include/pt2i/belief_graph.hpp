#pragma once

#include <compare>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pt2i {

/// A real number constrained to [0, 1]. Construction from an out-of-range
/// value throws std::out_of_range; `clamped` saturates instead.
template <class Tag>
class UnitInterval {
 public:
  constexpr UnitInterval() noexcept = default;
  constexpr explicit UnitInterval(double v) : value_(v) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::out_of_range("value outside [0, 1]");
  }

  static constexpr UnitInterval clamped(double v) noexcept {
    UnitInterval u;
    u.value_ = (v >= 0.0) ? (v <= 1.0 ? v : 1.0) : 0.0;  // NaN lands on 0
    return u;
  }

  constexpr double value() const noexcept { return value_; }

  friend constexpr bool operator==(UnitInterval, UnitInterval) = default;
  friend constexpr auto operator<=>(UnitInterval, UnitInterval) = default;

 private:
  double value_ = 0.0;
};

using Probability = UnitInterval<struct ProbabilityTag>;
using ImportanceScore = UnitInterval<struct ImportanceTag>;

struct Candidate {
  std::string label;
  Probability prob;

  bool operator==(const Candidate&) const = default;
};

/// Ordered (label, probability) pairs. Parsers list the most likely value
/// first; that order is preserved everywhere and breaks argmax ties.
struct CandidateDistribution {
  std::vector<Candidate> candidates;

  bool empty() const noexcept { return candidates.empty(); }
  std::size_t size() const noexcept { return candidates.size(); }
  double sum() const noexcept;

  /// Case-insensitive label lookup.
  const Candidate* find(std::string_view label) const;
  double probability_of(std::string_view label) const;

  /// Index of the first candidate holding the maximal probability, or
  /// nullopt when empty. `tied` is set when another candidate shares it.
  std::optional<std::size_t> argmax(bool* tied = nullptr) const;

  bool is_point_mass() const;
  static CandidateDistribution point_mass(std::string label);

  bool operator==(const CandidateDistribution&) const = default;
};

struct Attribute {
  std::string name;
  ImportanceScore importance;
  CandidateDistribution distribution;

  bool operator==(const Attribute&) const = default;
};

enum class EntityType { kExplicit, kImplicit, kBackground };

std::string_view to_string(EntityType t);
std::optional<EntityType> entity_type_from_string(std::string_view s);

struct Entity {
  std::string name;
  std::string description;
  EntityType entity_type = EntityType::kExplicit;
  Probability prob_appearing;
  ImportanceScore importance;
  std::vector<Attribute> attributes;

  const Attribute* find_attribute(std::string_view attribute) const;
  Attribute* find_attribute(std::string_view attribute);

  bool operator==(const Entity&) const = default;
};

struct Relation {
  std::string name;
  std::string description;
  std::string entity_1;
  std::string entity_2;
  bool is_bidirectional = false;
  ImportanceScore importance;
  CandidateDistribution spatial_distribution;

  bool operator==(const Relation&) const = default;
};

struct BeliefGraph {
  std::vector<Entity> entities;
  std::vector<Relation> relations;
  std::string source_prompt;

  const Entity* find_entity(std::string_view name) const;
  Entity* find_entity(std::string_view name);
  const Relation* find_relation(std::string_view name) const;
  Relation* find_relation(std::string_view name);
  /// Relation between the two entities in either direction.
  const Relation* find_relation_between(std::string_view a, std::string_view b) const;

  bool operator==(const BeliefGraph&) const = default;
};

// ---------------------------------------------------------------------------
// Entropy and normalization

/// Shannon entropy in nats; zero-probability terms contribute nothing.
double entropy(const CandidateDistribution& dist);
double bernoulli_entropy(Probability p);

/// Sum of every entity existence, attribute and relation entropy term.
double total_entropy(const BeliefGraph& graph);

/// Rescales probabilities to sum to one, preserving order.
/// Throws AllZeroError when every probability is zero.
CandidateDistribution normalize(const CandidateDistribution& dist);

/// `normalize`, substituting the uniform distribution on AllZero.
CandidateDistribution normalize_or_uniform(const CandidateDistribution& dist);

inline constexpr double kSumTolerance = 1e-6;

// ---------------------------------------------------------------------------
// Validation

enum class ViolationKind {
  kEmptyName,
  kDuplicateEntityName,
  kDuplicateAttributeName,
  kEmptyDistribution,
  kDuplicateCandidateLabel,
  kDistributionNotNormalized,
  kZeroProbabilityImportance,
  kDanglingRelationEndpoint,
  kSelfRelation,
  kDuplicateRelation,
};

std::string_view to_string(ViolationKind k);

struct Violation {
  ViolationKind kind;
  std::string location;  // e.g. "entity 'table' / attribute 'material'"
  std::string message;
};

/// Empty iff every structural invariant of the graph holds.
std::vector<Violation> validate(const BeliefGraph& graph);

// ---------------------------------------------------------------------------
// Direct edits

struct SetEntityExistence {
  std::string entity;
  bool exists = true;
  bool operator==(const SetEntityExistence&) const = default;
};

struct SetAttributeValue {
  std::string entity;
  std::string attribute;
  std::string label;
  bool operator==(const SetAttributeValue&) const = default;
};

struct SetRelationValue {
  std::string relation;
  std::string label;
  bool operator==(const SetRelationValue&) const = default;
};

struct ConfirmImplicit {
  std::string entity;
  bool operator==(const ConfirmImplicit&) const = default;
};

using GraphEdit = std::variant<SetEntityExistence, SetAttributeValue, SetRelationValue, ConfirmImplicit>;

/// Returns a new graph with the edit applied. Collapsing edits replace the
/// distribution with a point mass and zero the importance.
/// Throws UnknownTargetError when the edit names something not in the graph.
BeliefGraph apply_edit(const BeliefGraph& graph, const GraphEdit& edit);

/// One declarative sentence describing the edit, suitable for prompt merging.
std::string describe_edit(const BeliefGraph& graph, const GraphEdit& edit);

// ---------------------------------------------------------------------------
// Ground truth

struct GroundTruthAttribute {
  std::string name;
  std::string value;
  bool operator==(const GroundTruthAttribute&) const = default;
};

struct GroundTruthEntity {
  std::string name;
  bool exists = true;
  std::vector<GroundTruthAttribute> attributes;
  bool operator==(const GroundTruthEntity&) const = default;
};

struct GroundTruthRelation {
  std::string name;
  std::string entity_1;
  std::string entity_2;
  std::string spatial_value;
  bool operator==(const GroundTruthRelation&) const = default;
};

struct GroundTruthState {
  std::vector<GroundTruthEntity> entities;
  std::vector<GroundTruthRelation> relations;
  bool operator==(const GroundTruthState&) const = default;
};

enum class ArgmaxTies { kError, kFirstListed };

inline constexpr double kExistenceThreshold = 0.5;

/// Collapses a belief: an entity exists iff prob_appearing >= 0.5 and each
/// distribution takes its argmax label.
GroundTruthState to_ground_truth(const BeliefGraph& graph, ArgmaxTies ties = ArgmaxTies::kError);

/// Degenerate belief graph (all probabilities 0 or 1, importance 0).
BeliefGraph from_ground_truth(const GroundTruthState& gt);

}  // namespace pt2i
