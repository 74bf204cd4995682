#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pt2i/backends.hpp"
#include "pt2i/belief_graph.hpp"
#include "pt2i/parsing.hpp"
#include "pt2i/templates.hpp"

namespace pt2i {

enum class Strategy { kMhis, kAicqBelief, kAicqBase, kT2iBaseline };

/// "mhis", "aicq-b", "aicq-base", "t2i-baseline".
std::string_view to_string(Strategy s);
std::optional<Strategy> strategy_from_string(std::string_view s);

struct EntityExistence {
  std::string entity;
  bool operator==(const EntityExistence&) const = default;
};
struct AttributeValue {
  std::string entity;
  std::string attribute;
  bool operator==(const AttributeValue&) const = default;
};
struct RelationValue {
  std::string relation;
  bool operator==(const RelationValue&) const = default;
};
struct FreeForm {
  bool operator==(const FreeForm&) const = default;
};
using QuestionTarget = std::variant<EntityExistence, AttributeValue, RelationValue, FreeForm>;

struct AskQuestion {
  QuestionTarget target;
  std::string question_text;
  std::vector<std::string> choices;  // empty for open-ended questions
  bool operator==(const AskQuestion&) const = default;
};
struct PresentGraph {
  bool operator==(const PresentGraph&) const = default;
};
struct GenerateImage {
  std::string prompt;
  bool operator==(const GenerateImage&) const = default;
};
using Action = std::variant<AskQuestion, PresentGraph, GenerateImage>;

struct AnswerText {
  std::string text;
  bool operator==(const AnswerText&) const = default;
};
struct GraphEdits {
  std::vector<GraphEdit> edits;
  bool operator==(const GraphEdits&) const = default;
};
struct NoOp {
  bool operator==(const NoOp&) const = default;
};
using Observation = std::variant<AnswerText, GraphEdits, NoOp>;

struct ConversationTurn {
  int index = 0;
  Action action;
  Observation observation;
  std::string declarative_summary;
  std::string merged_prompt;  // after this turn
  BeliefGraph graph;          // after this turn
  bool degraded = false;      // the graph could not be rebuilt; previous graph kept
  bool operator==(const ConversationTurn&) const = default;
};

struct SessionState {
  std::string original_prompt;
  std::string merged_prompt;
  BeliefGraph graph;
  std::vector<ConversationTurn> history;
  Strategy strategy = Strategy::kMhis;
  bool operator==(const SessionState&) const = default;
};

struct ScoredCandidateQuestion {
  QuestionTarget target;
  double score = 0.0;
};

/// Every askable target with its heuristic score, highest first. Ties are
/// broken by (entity or relation name, attribute name), then existence
/// before attribute before relation.
std::vector<ScoredCandidateQuestion> score_targets(const BeliefGraph& graph);

/// P(r) := P(entity_1) * P(entity_2); 0 when an endpoint is missing.
double relation_probability(const BeliefGraph& graph, const Relation& r);

std::string describe_target(const QuestionTarget& t);

/// Maps a reply to one of `choices`: a bare option letter, an exact label, or
/// the longest label mentioned as a phrase. Indifferent replies ("no
/// preference", "unknown") give nullopt; anything else becomes a new label.
std::optional<std::string> resolve_choice(std::string_view answer, const std::vector<std::string>& choices);
bool is_indifferent(std::string_view answer);

/// Yes/no reading of a reply to an existence question.
bool answer_affirms(std::string_view answer);

/// Extracts the text between <question> and </question>. Throws MissingQuestionMarkers.
std::string extract_question(std::string_view text);

/// "Agent: <question>\nUser: <answer>" lines for every answered question.
std::string render_conversation(const std::vector<ConversationTurn>& history);

/// Redundancy elimination and information retention for the MHIS agent:
/// answered targets become point masses with importance 0, and anything the
/// re-parse lost from `old_graph` is added back. Idempotent.
BeliefGraph post_process(const BeliefGraph& new_graph, const std::vector<ConversationTurn>& history,
                         const BeliefGraph& old_graph);

class Agent {
 public:
  Agent(Backends backends, std::shared_ptr<const TemplateLibrary> templates, ParserOptions parser_options = {});

  const BeliefParser& parser() const { return parser_; }
  const Backends& backends() const { return backends_; }
  const std::shared_ptr<const TemplateLibrary>& templates() const { return templates_; }

  /// Builds the initial graph. Throws ParseFailure.
  SessionState start(const std::string& prompt, Strategy strategy) const;

  Action select_action(const SessionState& state) const;
  Action select_action_mhis(const SessionState& state) const;
  Action select_action_belief_prompted(const SessionState& state) const;
  Action select_action_principle_prompted(const SessionState& state) const;

  /// (question_text, choices) for a graph target, via the question template.
  std::pair<std::string, std::vector<std::string>> verbalize_hsa_question(const QuestionTarget& target,
                                                                          const BeliefGraph& graph) const;

  std::string summarize_qa(const std::string& question, const std::string& answer) const;
  std::string merge_prompt(const std::string& current, const std::string& additional_info) const;

  /// Applies one observation and appends exactly one turn. A parse or
  /// backend failure while rebuilding keeps the previous graph and marks the
  /// turn degraded; failures before the prompt is merged propagate.
  SessionState transition(const SessionState& state, const Action& action, const Observation& obs) const;

 private:
  std::string ask_for_question(const std::string& prompt_text) const;

  Backends backends_;
  std::shared_ptr<const TemplateLibrary> templates_;
  BeliefParser parser_;
};

}  // namespace pt2i
