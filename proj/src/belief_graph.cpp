#include "pt2i/belief_graph.hpp"

#include <cmath>
#include <set>
#include <tuple>
#include <utility>

#include "pt2i/errors.hpp"
#include "pt2i/text.hpp"

namespace pt2i {

double CandidateDistribution::sum() const noexcept {
  double s = 0.0;
  for (const auto& c : candidates) s += c.prob.value();
  return s;
}

const Candidate* CandidateDistribution::find(std::string_view label) const {
  const std::string key = name_key(label);
  for (const auto& c : candidates)
    if (name_key(c.label) == key) return &c;
  return nullptr;
}

double CandidateDistribution::probability_of(std::string_view label) const {
  const Candidate* c = find(label);
  return c ? c->prob.value() : 0.0;
}

std::optional<std::size_t> CandidateDistribution::argmax(bool* tied) const {
  if (tied) *tied = false;
  if (candidates.empty()) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i)
    if (candidates[i].prob > candidates[best].prob) best = i;
  if (tied) {
    for (std::size_t i = 0; i < candidates.size(); ++i)
      if (i != best && candidates[i].prob == candidates[best].prob) *tied = true;
  }
  return best;
}

bool CandidateDistribution::is_point_mass() const {
  return candidates.size() == 1 && candidates.front().prob.value() == 1.0;
}

CandidateDistribution CandidateDistribution::point_mass(std::string label) {
  return CandidateDistribution{{Candidate{std::move(label), Probability(1.0)}}};
}

std::string_view to_string(EntityType t) {
  switch (t) {
    case EntityType::kExplicit: return "explicit";
    case EntityType::kImplicit: return "implicit";
    case EntityType::kBackground: return "background";
  }
  return "explicit";
}

std::optional<EntityType> entity_type_from_string(std::string_view s) {
  const std::string k = name_key(s);
  if (k == "explicit") return EntityType::kExplicit;
  if (k == "implicit") return EntityType::kImplicit;
  if (k == "background") return EntityType::kBackground;
  return std::nullopt;
}

const Attribute* Entity::find_attribute(std::string_view attribute) const {
  for (const auto& a : attributes)
    if (same_name(a.name, attribute)) return &a;
  return nullptr;
}

Attribute* Entity::find_attribute(std::string_view attribute) {
  return const_cast<Attribute*>(std::as_const(*this).find_attribute(attribute));
}

const Entity* BeliefGraph::find_entity(std::string_view name) const {
  for (const auto& e : entities)
    if (same_name(e.name, name)) return &e;
  return nullptr;
}

Entity* BeliefGraph::find_entity(std::string_view name) {
  return const_cast<Entity*>(std::as_const(*this).find_entity(name));
}

const Relation* BeliefGraph::find_relation(std::string_view name) const {
  for (const auto& r : relations)
    if (same_name(r.name, name)) return &r;
  return nullptr;
}

Relation* BeliefGraph::find_relation(std::string_view name) {
  return const_cast<Relation*>(std::as_const(*this).find_relation(name));
}

const Relation* BeliefGraph::find_relation_between(std::string_view a, std::string_view b) const {
  for (const auto& r : relations) {
    if ((same_name(r.entity_1, a) && same_name(r.entity_2, b)) ||
        (same_name(r.entity_1, b) && same_name(r.entity_2, a)))
      return &r;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------

double entropy(const CandidateDistribution& dist) {
  double h = 0.0;
  for (const auto& c : dist.candidates) {
    const double p = c.prob.value();
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double bernoulli_entropy(Probability p) {
  const double q = p.value();
  double h = 0.0;
  if (q > 0.0) h -= q * std::log(q);
  if (q < 1.0) h -= (1.0 - q) * std::log(1.0 - q);
  return h;
}

double total_entropy(const BeliefGraph& graph) {
  double h = 0.0;
  for (const auto& e : graph.entities) {
    h += bernoulli_entropy(e.prob_appearing);
    for (const auto& a : e.attributes) h += entropy(a.distribution);
  }
  for (const auto& r : graph.relations) h += entropy(r.spatial_distribution);
  return h;
}

CandidateDistribution normalize(const CandidateDistribution& dist) {
  const double s = dist.sum();
  if (!(s > 0.0)) throw AllZeroError();
  CandidateDistribution out;
  out.candidates.reserve(dist.size());
  for (const auto& c : dist.candidates)
    out.candidates.push_back({c.label, Probability::clamped(c.prob.value() / s)});
  return out;
}

CandidateDistribution normalize_or_uniform(const CandidateDistribution& dist) {
  if (dist.empty()) return dist;
  try {
    return normalize(dist);
  } catch (const AllZeroError&) {
    CandidateDistribution out;
    const double p = 1.0 / static_cast<double>(dist.size());
    for (const auto& c : dist.candidates) out.candidates.push_back({c.label, Probability::clamped(p)});
    return out;
  }
}

// ---------------------------------------------------------------------------

std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::kEmptyName: return "EmptyName";
    case ViolationKind::kDuplicateEntityName: return "DuplicateEntityName";
    case ViolationKind::kDuplicateAttributeName: return "DuplicateAttributeName";
    case ViolationKind::kEmptyDistribution: return "EmptyDistribution";
    case ViolationKind::kDuplicateCandidateLabel: return "DuplicateCandidateLabel";
    case ViolationKind::kDistributionNotNormalized: return "DistributionNotNormalized";
    case ViolationKind::kZeroProbabilityImportance: return "ZeroProbabilityImportance";
    case ViolationKind::kDanglingRelationEndpoint: return "DanglingRelationEndpoint";
    case ViolationKind::kSelfRelation: return "SelfRelation";
    case ViolationKind::kDuplicateRelation: return "DuplicateRelation";
  }
  return "Unknown";
}

namespace {

void check_distribution(const CandidateDistribution& dist, const std::string& where,
                        std::vector<Violation>& out) {
  if (dist.empty()) {
    out.push_back({ViolationKind::kEmptyDistribution, where, "distribution has no candidates"});
    return;
  }
  std::set<std::string> labels;
  for (const auto& c : dist.candidates) {
    const std::string key = name_key(c.label);
    if (key.empty()) out.push_back({ViolationKind::kEmptyName, where, "candidate label is empty"});
    else if (!labels.insert(key).second)
      out.push_back({ViolationKind::kDuplicateCandidateLabel, where, "duplicate candidate '" + c.label + "'"});
  }
  const double s = dist.sum();
  if (std::abs(s - 1.0) > kSumTolerance)
    out.push_back({ViolationKind::kDistributionNotNormalized, where,
                   "probabilities sum to " + std::to_string(s)});
}

}  // namespace

std::vector<Violation> validate(const BeliefGraph& graph) {
  std::vector<Violation> out;
  std::set<std::string> entity_names;
  for (const auto& e : graph.entities) {
    const std::string where = "entity '" + e.name + "'";
    const std::string key = name_key(e.name);
    if (key.empty()) out.push_back({ViolationKind::kEmptyName, where, "entity name is empty"});
    else if (!entity_names.insert(key).second)
      out.push_back({ViolationKind::kDuplicateEntityName, where, "entity name appears more than once"});
    if (e.prob_appearing.value() == 0.0 && e.importance.value() != 0.0)
      out.push_back({ViolationKind::kZeroProbabilityImportance, where,
                     "entity cannot appear but has nonzero importance"});
    std::set<std::string> attr_names;
    for (const auto& a : e.attributes) {
      const std::string awhere = where + " / attribute '" + a.name + "'";
      const std::string akey = name_key(a.name);
      if (akey.empty()) out.push_back({ViolationKind::kEmptyName, awhere, "attribute name is empty"});
      else if (!attr_names.insert(akey).second)
        out.push_back({ViolationKind::kDuplicateAttributeName, awhere, "attribute name appears more than once"});
      check_distribution(a.distribution, awhere, out);
    }
  }

  std::set<std::tuple<std::string, std::string, std::string>> seen_relations;
  for (const auto& r : graph.relations) {
    const std::string where = "relation '" + r.name + "'";
    if (name_key(r.name).empty()) out.push_back({ViolationKind::kEmptyName, where, "relation name is empty"});
    for (const auto* endpoint : {&r.entity_1, &r.entity_2}) {
      if (!entity_names.contains(name_key(*endpoint)))
        out.push_back({ViolationKind::kDanglingRelationEndpoint, where,
                       "endpoint '" + *endpoint + "' is not an entity"});
    }
    if (same_name(r.entity_1, r.entity_2))
      out.push_back({ViolationKind::kSelfRelation, where, "relation connects an entity to itself"});
    auto a = name_key(r.entity_1);
    auto b = name_key(r.entity_2);
    if (b < a) std::swap(a, b);
    if (!seen_relations.emplace(a, b, name_key(r.name)).second)
      out.push_back({ViolationKind::kDuplicateRelation, where, "same entity pair and name already present"});
    check_distribution(r.spatial_distribution, where, out);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Entity& require_entity(BeliefGraph& g, const std::string& name) {
  Entity* e = g.find_entity(name);
  if (!e) throw UnknownTargetError("unknown entity '" + name + "'");
  return *e;
}

CandidateDistribution collapse_to(const CandidateDistribution& dist, const std::string& label) {
  // Keep the graph's own spelling when the label is already a candidate.
  if (const Candidate* c = dist.find(label)) return CandidateDistribution::point_mass(c->label);
  return CandidateDistribution::point_mass(trim(label));
}

}  // namespace

BeliefGraph apply_edit(const BeliefGraph& graph, const GraphEdit& edit) {
  BeliefGraph out = graph;
  std::visit(overloaded{
                 [&](const SetEntityExistence& e) {
                   Entity& ent = require_entity(out, e.entity);
                   ent.prob_appearing = Probability(e.exists ? 1.0 : 0.0);
                   ent.importance = ImportanceScore(0.0);
                 },
                 [&](const SetAttributeValue& e) {
                   Entity& ent = require_entity(out, e.entity);
                   Attribute* attr = ent.find_attribute(e.attribute);
                   if (!attr)
                     throw UnknownTargetError("entity '" + e.entity + "' has no attribute '" + e.attribute + "'");
                   if (trim(e.label).empty()) throw PreconditionError("attribute value label is empty");
                   attr->distribution = collapse_to(attr->distribution, e.label);
                   attr->importance = ImportanceScore(0.0);
                 },
                 [&](const SetRelationValue& e) {
                   Relation* rel = out.find_relation(e.relation);
                   if (!rel) throw UnknownTargetError("unknown relation '" + e.relation + "'");
                   if (trim(e.label).empty()) throw PreconditionError("relation value label is empty");
                   rel->spatial_distribution = collapse_to(rel->spatial_distribution, e.label);
                   rel->importance = ImportanceScore(0.0);
                 },
                 [&](const ConfirmImplicit& e) {
                   Entity& ent = require_entity(out, e.entity);
                   if (ent.entity_type == EntityType::kImplicit) ent.entity_type = EntityType::kExplicit;
                   ent.prob_appearing = Probability(1.0);
                 },
             },
             edit);
  return out;
}

std::string describe_edit(const BeliefGraph& graph, const GraphEdit& edit) {
  return std::visit(
      overloaded{
          [](const SetEntityExistence& e) -> std::string {
            return e.exists ? "There is a " + e.entity + " in the image."
                            : "There is no " + e.entity + " in the image.";
          },
          [](const SetAttributeValue& e) -> std::string {
            return "The " + e.attribute + " of the " + e.entity + " is " + trim(e.label) + ".";
          },
          [&](const SetRelationValue& e) -> std::string {
            if (const Relation* r = graph.find_relation(e.relation))
              return "The " + r->entity_1 + " is " + trim(e.label) + " the " + r->entity_2 + ".";
            return "The relation " + e.relation + " is " + trim(e.label) + ".";
          },
          [](const ConfirmImplicit& e) -> std::string { return "There is a " + e.entity + " in the image."; },
      },
      edit);
}

// ---------------------------------------------------------------------------

namespace {

std::optional<std::string> collapse_label(const CandidateDistribution& dist, ArgmaxTies ties,
                                          const std::string& where) {
  bool tied = false;
  auto idx = dist.argmax(&tied);
  if (!idx) return std::nullopt;
  if (tied && ties == ArgmaxTies::kError) throw AmbiguousArgmaxError("tied argmax in " + where);
  return dist.candidates[*idx].label;
}

}  // namespace

GroundTruthState to_ground_truth(const BeliefGraph& graph, ArgmaxTies ties) {
  GroundTruthState gt;
  for (const auto& e : graph.entities) {
    GroundTruthEntity ge{e.name, e.prob_appearing.value() >= kExistenceThreshold, {}};
    for (const auto& a : e.attributes) {
      if (auto label = collapse_label(a.distribution, ties, "entity '" + e.name + "' / attribute '" + a.name + "'"))
        ge.attributes.push_back({a.name, *label});
    }
    gt.entities.push_back(std::move(ge));
  }
  for (const auto& r : graph.relations) {
    if (auto label = collapse_label(r.spatial_distribution, ties, "relation '" + r.name + "'"))
      gt.relations.push_back({r.name, r.entity_1, r.entity_2, *label});
  }
  return gt;
}

BeliefGraph from_ground_truth(const GroundTruthState& gt) {
  BeliefGraph g;
  for (const auto& ge : gt.entities) {
    Entity e;
    e.name = ge.name;
    e.prob_appearing = Probability(ge.exists ? 1.0 : 0.0);
    for (const auto& ga : ge.attributes)
      e.attributes.push_back({ga.name, ImportanceScore(0.0), CandidateDistribution::point_mass(ga.value)});
    g.entities.push_back(std::move(e));
  }
  for (const auto& gr : gt.relations) {
    Relation r;
    r.name = gr.name;
    r.entity_1 = gr.entity_1;
    r.entity_2 = gr.entity_2;
    r.spatial_distribution = CandidateDistribution::point_mass(gr.spatial_value);
    g.relations.push_back(std::move(r));
  }
  return g;
}

}  // namespace pt2i
