#pragma once

#include <string>

#include "pt2i/agent.hpp"
#include "pt2i/graph_io.hpp"

namespace pt2i {

// Documents for agent values. Loaders throw SchemaError with a JSON pointer.
//
// target:      {"kind": "entity_existence", "entity"} | {"kind": "attribute_value", "entity", "attribute"}
//              | {"kind": "relation_value", "relation"} | {"kind": "free_form"}
// action:      {"type": "ask_question", "target", "question_text", "choices"} | {"type": "present_graph"}
//              | {"type": "generate_image", "prompt"}
// observation: {"type": "answer_text", "text"} | {"type": "graph_edits", "edits"} | {"type": "no_op"}
json target_to_json(const QuestionTarget& t);
QuestionTarget target_from_json(const json& doc, const std::string& path = "");
json action_to_json(const Action& a);
Action action_from_json(const json& doc, const std::string& path = "");
json observation_to_json(const Observation& o);
Observation observation_from_json(const json& doc, const std::string& path = "");

/// {turn, strategy, action, observation, declarative_summary, merged_prompt, graph, degraded}
json turn_to_json(const ConversationTurn& t, Strategy strategy);
ConversationTurn turn_from_json(const json& doc, const std::string& path = "");

json session_state_to_json(const SessionState& s);
SessionState session_state_from_json(const json& doc, const std::string& path = "");

}  // namespace pt2i
