#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pt2i/belief_graph.hpp"

namespace pt2i {

using json = nlohmann::ordered_json;

// Canonical graph document. Field names are the ones the parser templates ask
// the model for, so model output loads without renaming.
json entity_to_json(const Entity& e);
json attribute_to_json(const Attribute& a);
json relation_to_json(const Relation& r);
json distribution_to_json(const CandidateDistribution& d);
json graph_to_json(const BeliefGraph& g);

/// Strict loader. Throws SchemaError whose path() points at the bad field.
BeliefGraph graph_from_json(const json& doc, const std::string& path = "");
CandidateDistribution distribution_from_json(const json& doc, const std::string& path);

std::string serialize(const BeliefGraph& g);
BeliefGraph deserialize(std::string_view text);

json ground_truth_to_json(const GroundTruthState& gt);

// Edits: {"type": "set_attribute_value", "entity": ..., "attribute": ..., "label": ...}
json edit_to_json(const GraphEdit& e);
GraphEdit edit_from_json(const json& doc, const std::string& path = "");

/// Human-readable rendering used inside prompts, e.g.
///   Entity Name: rabbit, Descriptions: ..., Importance to ask Score: 0.5, Probability of appearing: 1
///     Attribute Name: color, Importance to ask Score: 0.9, Candidates: [white: 0.5, black: 0.5]
std::string describe_belief(const BeliefGraph& g);

}  // namespace pt2i
