#include "pt2i/session_io.hpp"

#include "pt2i/errors.hpp"

namespace pt2i {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const json& field(const json& doc, const char* key, const std::string& path) {
  if (!doc.is_object()) throw SchemaError(path, "expected an object");
  auto it = doc.find(key);
  if (it == doc.end()) throw SchemaError(path + "/" + key, "missing field");
  return *it;
}

std::string string_field(const json& doc, const char* key, const std::string& path) {
  const json& v = field(doc, key, path);
  if (!v.is_string()) throw SchemaError(path + "/" + key, "expected a string");
  return v.get<std::string>();
}

}  // namespace

json target_to_json(const QuestionTarget& t) {
  return std::visit(overloaded{
                        [](const EntityExistence& x) { return json{{"kind", "entity_existence"}, {"entity", x.entity}}; },
                        [](const AttributeValue& x) {
                          return json{{"kind", "attribute_value"}, {"entity", x.entity}, {"attribute", x.attribute}};
                        },
                        [](const RelationValue& x) { return json{{"kind", "relation_value"}, {"relation", x.relation}}; },
                        [](const FreeForm&) { return json{{"kind", "free_form"}}; },
                    },
                    t);
}

QuestionTarget target_from_json(const json& doc, const std::string& path) {
  const std::string kind = string_field(doc, "kind", path);
  if (kind == "entity_existence") return EntityExistence{string_field(doc, "entity", path)};
  if (kind == "attribute_value")
    return AttributeValue{string_field(doc, "entity", path), string_field(doc, "attribute", path)};
  if (kind == "relation_value") return RelationValue{string_field(doc, "relation", path)};
  if (kind == "free_form") return FreeForm{};
  throw SchemaError(path + "/kind", "unknown target kind '" + kind + "'");
}

json action_to_json(const Action& a) {
  return std::visit(overloaded{
                        [](const AskQuestion& x) {
                          return json{{"type", "ask_question"},
                                      {"target", target_to_json(x.target)},
                                      {"question_text", x.question_text},
                                      {"choices", x.choices}};
                        },
                        [](const PresentGraph&) { return json{{"type", "present_graph"}}; },
                        [](const GenerateImage& x) { return json{{"type", "generate_image"}, {"prompt", x.prompt}}; },
                    },
                    a);
}

Action action_from_json(const json& doc, const std::string& path) {
  const std::string type = string_field(doc, "type", path);
  if (type == "ask_question") {
    AskQuestion q;
    q.target = target_from_json(field(doc, "target", path), path + "/target");
    q.question_text = string_field(doc, "question_text", path);
    const json& choices = field(doc, "choices", path);
    if (!choices.is_array()) throw SchemaError(path + "/choices", "expected an array");
    for (std::size_t i = 0; i < choices.size(); ++i) {
      if (!choices[i].is_string()) throw SchemaError(path + "/choices/" + std::to_string(i), "expected a string");
      q.choices.push_back(choices[i].get<std::string>());
    }
    return q;
  }
  if (type == "present_graph") return PresentGraph{};
  if (type == "generate_image") return GenerateImage{string_field(doc, "prompt", path)};
  throw SchemaError(path + "/type", "unknown action type '" + type + "'");
}

json observation_to_json(const Observation& o) {
  return std::visit(overloaded{
                        [](const AnswerText& x) { return json{{"type", "answer_text"}, {"text", x.text}}; },
                        [](const GraphEdits& x) {
                          json edits = json::array();
                          for (const auto& e : x.edits) edits.push_back(edit_to_json(e));
                          return json{{"type", "graph_edits"}, {"edits", edits}};
                        },
                        [](const NoOp&) { return json{{"type", "no_op"}}; },
                    },
                    o);
}

Observation observation_from_json(const json& doc, const std::string& path) {
  const std::string type = string_field(doc, "type", path);
  if (type == "answer_text") return AnswerText{string_field(doc, "text", path)};
  if (type == "graph_edits") {
    const json& edits = field(doc, "edits", path);
    if (!edits.is_array()) throw SchemaError(path + "/edits", "expected an array");
    GraphEdits out;
    for (std::size_t i = 0; i < edits.size(); ++i)
      out.edits.push_back(edit_from_json(edits[i], path + "/edits/" + std::to_string(i)));
    return out;
  }
  if (type == "no_op") return NoOp{};
  throw SchemaError(path + "/type", "unknown observation type '" + type + "'");
}

json turn_to_json(const ConversationTurn& t, Strategy strategy) {
  return json{{"turn", t.index},
              {"strategy", std::string(to_string(strategy))},
              {"action", action_to_json(t.action)},
              {"observation", observation_to_json(t.observation)},
              {"declarative_summary", t.declarative_summary},
              {"merged_prompt", t.merged_prompt},
              {"graph", graph_to_json(t.graph)},
              {"degraded", t.degraded}};
}

ConversationTurn turn_from_json(const json& doc, const std::string& path) {
  ConversationTurn t;
  const json& idx = field(doc, "turn", path);
  if (!idx.is_number_integer()) throw SchemaError(path + "/turn", "expected an integer");
  t.index = idx.get<int>();
  t.action = action_from_json(field(doc, "action", path), path + "/action");
  t.observation = observation_from_json(field(doc, "observation", path), path + "/observation");
  t.declarative_summary = string_field(doc, "declarative_summary", path);
  t.merged_prompt = string_field(doc, "merged_prompt", path);
  t.graph = graph_from_json(field(doc, "graph", path), path + "/graph");
  const json& degraded = field(doc, "degraded", path);
  if (!degraded.is_boolean()) throw SchemaError(path + "/degraded", "expected a boolean");
  t.degraded = degraded.get<bool>();
  return t;
}

json session_state_to_json(const SessionState& s) {
  json history = json::array();
  for (const auto& t : s.history) history.push_back(turn_to_json(t, s.strategy));
  return json{{"strategy", std::string(to_string(s.strategy))},
              {"original_prompt", s.original_prompt},
              {"merged_prompt", s.merged_prompt},
              {"graph", graph_to_json(s.graph)},
              {"history", history}};
}

SessionState session_state_from_json(const json& doc, const std::string& path) {
  SessionState s;
  const std::string strategy = string_field(doc, "strategy", path);
  auto st = strategy_from_string(strategy);
  if (!st) throw SchemaError(path + "/strategy", "unknown strategy '" + strategy + "'");
  s.strategy = *st;
  s.original_prompt = string_field(doc, "original_prompt", path);
  s.merged_prompt = string_field(doc, "merged_prompt", path);
  s.graph = graph_from_json(field(doc, "graph", path), path + "/graph");
  const json& history = field(doc, "history", path);
  if (!history.is_array()) throw SchemaError(path + "/history", "expected an array");
  for (std::size_t i = 0; i < history.size(); ++i)
    s.history.push_back(turn_from_json(history[i], path + "/history/" + std::to_string(i)));
  return s;
}

}  // namespace pt2i
