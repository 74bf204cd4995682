#include "pt2i/agent.hpp"

#include <algorithm>
#include <cctype>
#include <tuple>

#include "pt2i/errors.hpp"
#include "pt2i/graph_io.hpp"
#include "pt2i/scripted.hpp"
#include "pt2i/text.hpp"

namespace pt2i {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string strip_end_punct(std::string s) {
  while (!s.empty() && std::string_view(".,;:!?").find(s.back()) != std::string_view::npos) s.pop_back();
  return trim(s);
}

std::string ensure_sentence_end(std::string s) {
  s = trim(s);
  if (!s.empty() && std::string_view(".!?").find(s.back()) == std::string_view::npos) s += '.';
  return s;
}

std::string strip_quotes(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
    s = trim(s.substr(1, s.size() - 2));
  return s;
}

std::optional<std::size_t> letter_index(std::string_view answer) {
  std::string t = strip_end_punct(trim(answer));
  if (t.size() == 3 && t.front() == '(' && t.back() == ')') t = t.substr(1, 1);
  if (t.size() == 2 && t.back() == ')') t.pop_back();
  if (t.size() != 1 || !std::isalpha(static_cast<unsigned char>(t[0]))) return std::nullopt;
  return static_cast<std::size_t>(std::tolower(static_cast<unsigned char>(t[0])) - 'a');
}

std::string target_key(const QuestionTarget& t) {
  return std::visit(overloaded{
                        [](const EntityExistence& x) { return name_key(x.entity); },
                        [](const AttributeValue& x) { return name_key(x.entity); },
                        [](const RelationValue& x) { return name_key(x.relation); },
                        [](const FreeForm&) { return std::string(); },
                    },
                    t);
}

std::string target_subkey(const QuestionTarget& t) {
  if (auto* a = std::get_if<AttributeValue>(&t)) return name_key(a->attribute);
  return {};
}

std::vector<std::string> positive_labels(const CandidateDistribution& d) {
  std::vector<std::string> out;
  for (const auto& c : d.candidates)
    if (c.prob.value() > 0.0) out.push_back(c.label);
  return out;
}

void collapse(CandidateDistribution& dist, ImportanceScore& importance, const std::string& label) {
  if (const Candidate* c = dist.find(label)) dist = CandidateDistribution::point_mass(c->label);
  else dist = CandidateDistribution::point_mass(label);
  importance = ImportanceScore(0.0);
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kMhis: return "mhis";
    case Strategy::kAicqBelief: return "aicq-b";
    case Strategy::kAicqBase: return "aicq-base";
    case Strategy::kT2iBaseline: return "t2i-baseline";
  }
  return "mhis";
}

std::optional<Strategy> strategy_from_string(std::string_view s) {
  const std::string k = name_key(s);
  if (k == "mhis") return Strategy::kMhis;
  if (k == "aicq-b") return Strategy::kAicqBelief;
  if (k == "aicq-base") return Strategy::kAicqBase;
  if (k == "t2i-baseline") return Strategy::kT2iBaseline;
  return std::nullopt;
}

double relation_probability(const BeliefGraph& graph, const Relation& r) {
  const Entity* a = graph.find_entity(r.entity_1);
  const Entity* b = graph.find_entity(r.entity_2);
  if (!a || !b) return 0.0;
  return a->prob_appearing.value() * b->prob_appearing.value();
}

std::vector<ScoredCandidateQuestion> score_targets(const BeliefGraph& graph) {
  std::vector<ScoredCandidateQuestion> out;
  for (const auto& e : graph.entities) {
    const double is_e = e.importance.value();
    const double p_e = e.prob_appearing.value();
    out.push_back({EntityExistence{e.name}, is_e * bernoulli_entropy(e.prob_appearing)});
    for (const auto& a : e.attributes)
      out.push_back({AttributeValue{e.name, a.name}, is_e * a.importance.value() * p_e * entropy(a.distribution)});
  }
  for (const auto& r : graph.relations)
    out.push_back({RelationValue{r.name},
                   r.importance.value() * relation_probability(graph, r) * entropy(r.spatial_distribution)});

  std::stable_sort(out.begin(), out.end(), [](const ScoredCandidateQuestion& x, const ScoredCandidateQuestion& y) {
    if (x.score != y.score) return x.score > y.score;
    return std::make_tuple(target_key(x.target), target_subkey(x.target), x.target.index()) <
           std::make_tuple(target_key(y.target), target_subkey(y.target), y.target.index());
  });
  return out;
}

std::string describe_target(const QuestionTarget& t) {
  return std::visit(overloaded{
                        [](const EntityExistence& x) { return "existence of " + x.entity; },
                        [](const AttributeValue& x) { return x.attribute + " of " + x.entity; },
                        [](const RelationValue& x) { return "relation " + x.relation; },
                        [](const FreeForm&) { return std::string("free-form question"); },
                    },
                    t);
}

bool is_indifferent(std::string_view answer) {
  static const char* kPhrases[] = {"no preference", "don't care",  "do not care",   "doesn't matter",
                                   "does not matter", "unknown",   "not sure",      "no idea",
                                   "don't know",     "do not know", "not specified", "anything is fine"};
  for (const char* p : kPhrases)
    if (contains_phrase(answer, p)) return true;
  return false;
}

std::optional<std::string> resolve_choice(std::string_view answer, const std::vector<std::string>& choices) {
  const std::string t = trim(answer);
  if (!choices.empty()) {
    if (auto idx = letter_index(t)) {
      if (*idx < choices.size()) return choices[*idx];
      if (*idx == choices.size()) return std::nullopt;  // the trailing "unknown" option
    }
    const std::string key = name_key(strip_end_punct(t));
    for (const auto& c : choices)
      if (name_key(c) == key) return c;
    const std::string* best = nullptr;
    for (const auto& c : choices)
      if (contains_phrase(t, c) && (!best || c.size() > best->size())) best = &c;
    if (best) return *best;
  }
  if (is_indifferent(t)) return std::nullopt;
  return strip_end_punct(t);
}

bool answer_affirms(std::string_view answer) {
  const auto words = split_words(answer);
  if (words.empty()) return true;
  const std::string& first = words.front();
  if (words.size() == 1 && (first == "a" || first == "y" || first == "true")) return true;
  if (words.size() == 1 && (first == "b" || first == "n" || first == "false")) return false;
  if (first == "yes" || first == "yeah" || first == "yep" || first == "sure") return true;
  if (first == "no" || first == "nope") return false;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    if (w == "no" || w == "not" || w == "none" || w == "without" || w == "absent" || w == "never" || w == "nothing")
      return false;
    if (w == "t" && i > 0 && (words[i - 1] == "don" || words[i - 1] == "isn" || words[i - 1] == "shouldn" ||
                              words[i - 1] == "doesn" || words[i - 1] == "aren"))
      return false;
  }
  return true;
}

std::string extract_question(std::string_view text) {
  const std::string lower = to_lower(text);
  const auto open = lower.find("<question>");
  if (open == std::string::npos) throw MissingQuestionMarkers();
  const auto start = open + std::string_view("<question>").size();
  const auto close = lower.find("</question>", start);
  if (close == std::string::npos) throw MissingQuestionMarkers();
  std::string q = trim(text.substr(start, close - start));
  if (q.empty()) throw MissingQuestionMarkers();
  return q;
}

std::string render_conversation(const std::vector<ConversationTurn>& history) {
  std::vector<std::string> lines;
  for (const auto& turn : history) {
    const auto* ask = std::get_if<AskQuestion>(&turn.action);
    const auto* ans = std::get_if<AnswerText>(&turn.observation);
    if (ask && ans) {
      lines.push_back("Agent: " + ask->question_text);
      lines.push_back("User: " + ans->text);
    } else if (std::holds_alternative<GraphEdits>(turn.observation) && !turn.declarative_summary.empty()) {
      lines.push_back("User edit: " + turn.declarative_summary);
    }
  }
  return join(lines, "\n");
}

// ---------------------------------------------------------------------------

BeliefGraph post_process(const BeliefGraph& new_graph, const std::vector<ConversationTurn>& history,
                         const BeliefGraph& old_graph) {
  BeliefGraph g = new_graph;

  // Information retention.
  for (const auto& old_e : old_graph.entities) {
    Entity* e = g.find_entity(old_e.name);
    if (!e) {
      g.entities.push_back(old_e);
      continue;
    }
    for (const auto& old_a : old_e.attributes)
      if (!e->find_attribute(old_a.name)) e->attributes.push_back(old_a);
  }
  for (const auto& old_r : old_graph.relations) {
    if (g.find_relation(old_r.name) || g.find_relation_between(old_r.entity_1, old_r.entity_2)) continue;
    if (g.find_entity(old_r.entity_1) && g.find_entity(old_r.entity_2)) g.relations.push_back(old_r);
  }

  // Redundancy elimination, replaying the history in order.
  for (const auto& turn : history) {
    if (const auto* edits = std::get_if<GraphEdits>(&turn.observation)) {
      for (const auto& edit : edits->edits) {
        try {
          g = apply_edit(g, edit);
        } catch (const UnknownTargetError&) {
        }
      }
      continue;
    }
    const auto* ask = std::get_if<AskQuestion>(&turn.action);
    const auto* ans = std::get_if<AnswerText>(&turn.observation);
    if (!ask || !ans) continue;
    const bool indifferent = is_indifferent(ans->text) && !resolve_choice(ans->text, ask->choices);

    std::visit(overloaded{
                   [&](const AttributeValue& t) {
                     Entity* e = g.find_entity(t.entity);
                     if (!e) return;
                     Attribute* a = e->find_attribute(t.attribute);
                     if (indifferent) {
                       if (a) a->importance = ImportanceScore(0.0);
                       return;
                     }
                     const auto label = resolve_choice(ans->text, ask->choices);
                     if (!label) return;
                     if (!a) {
                       e->attributes.push_back({t.attribute, ImportanceScore(0.0), {}});
                       a = &e->attributes.back();
                     }
                     collapse(a->distribution, a->importance, *label);
                   },
                   [&](const RelationValue& t) {
                     Relation* r = g.find_relation(t.relation);
                     if (!r) return;
                     if (indifferent) {
                       r->importance = ImportanceScore(0.0);
                       return;
                     }
                     if (const auto label = resolve_choice(ans->text, ask->choices))
                       collapse(r->spatial_distribution, r->importance, *label);
                   },
                   [&](const EntityExistence& t) {
                     Entity* e = g.find_entity(t.entity);
                     if (!e) return;
                     if (!indifferent) {
                       const auto label = resolve_choice(ans->text, ask->choices);
                       bool yes = answer_affirms(ans->text);
                       if (label && same_name(*label, "yes")) yes = true;
                       if (label && same_name(*label, "no")) yes = false;
                       e->prob_appearing = Probability(yes ? 1.0 : 0.0);
                     }
                     e->importance = ImportanceScore(0.0);
                   },
                   [](const FreeForm&) {},
               },
               ask->target);
  }
  return g;
}

// ---------------------------------------------------------------------------

Agent::Agent(Backends backends, std::shared_ptr<const TemplateLibrary> templates, ParserOptions parser_options)
    : backends_(std::move(backends)), templates_(templates), parser_(backends_.llm, templates, parser_options) {}

SessionState Agent::start(const std::string& prompt, Strategy strategy) const {
  if (trim(prompt).empty()) throw PreconditionError("prompt is empty");
  SessionState s;
  s.original_prompt = prompt;
  s.merged_prompt = prompt;
  s.strategy = strategy;
  s.graph = parser_.build_belief_graph(prompt);
  return s;
}

Action Agent::select_action(const SessionState& state) const {
  switch (state.strategy) {
    case Strategy::kMhis: return select_action_mhis(state);
    case Strategy::kAicqBelief: return select_action_belief_prompted(state);
    case Strategy::kAicqBase: return select_action_principle_prompted(state);
    case Strategy::kT2iBaseline: return GenerateImage{state.merged_prompt};
  }
  return GenerateImage{state.merged_prompt};
}

Action Agent::select_action_mhis(const SessionState& state) const {
  const auto scored = score_targets(state.graph);
  if (scored.empty() || !(scored.front().score > 0.0)) return GenerateImage{state.merged_prompt};
  auto [text, choices] = verbalize_hsa_question(scored.front().target, state.graph);
  return AskQuestion{scored.front().target, std::move(text), std::move(choices)};
}

std::string Agent::ask_for_question(const std::string& prompt_text) const {
  const std::string first = backends_.llm->complete(prompt_text).text;
  try {
    return extract_question(first);
  } catch (const MissingQuestionMarkers&) {
  }
  const std::string retry = backends_.llm
                                ->complete(prompt_text +
                                           "\n\nReminder: put your question between <question> and </question> "
                                           "markers.")
                                .text;
  return extract_question(retry);
}

Action Agent::select_action_belief_prompted(const SessionState& state) const {
  const std::string text = templates_->render(TemplateName::kAicqBelief,
                                              {{"user_prompt", state.original_prompt},
                                               {"belief", describe_belief(state.graph)},
                                               {"conversation", render_conversation(state.history)}});
  try {
    return AskQuestion{FreeForm{}, ask_for_question(text), {}};
  } catch (const MissingQuestionMarkers&) {
    return select_action_mhis(state);
  }
}

Action Agent::select_action_principle_prompted(const SessionState& state) const {
  const std::string conversation = render_conversation(state.history);
  const std::string text =
      conversation.empty()
          ? templates_->render(TemplateName::kAicqBaseFirst, {{"original_prompt", state.original_prompt}})
          : templates_->render(TemplateName::kAicqBaseHistory, {{"chat_history", conversation}});
  return AskQuestion{FreeForm{}, ask_for_question(text), {}};
}

std::pair<std::string, std::vector<std::string>> Agent::verbalize_hsa_question(const QuestionTarget& target,
                                                                               const BeliefGraph& graph) const {
  std::string entity, attribute, entity_type;
  std::vector<std::string> choices;
  std::visit(overloaded{
                 [&](const EntityExistence& t) {
                   const Entity* e = graph.find_entity(t.entity);
                   if (!e) throw UnknownTargetError("unknown entity '" + t.entity + "'");
                   entity = e->name;
                   attribute = "existence";
                   entity_type = "implicit";
                   choices = {"yes", "no"};
                 },
                 [&](const AttributeValue& t) {
                   const Entity* e = graph.find_entity(t.entity);
                   if (!e) throw UnknownTargetError("unknown entity '" + t.entity + "'");
                   const Attribute* a = e->find_attribute(t.attribute);
                   if (!a) throw UnknownTargetError("entity '" + t.entity + "' has no attribute '" + t.attribute + "'");
                   entity = e->name;
                   attribute = a->name;
                   entity_type = e->entity_type == EntityType::kBackground ? "background" : "explicit";
                   choices = positive_labels(a->distribution);
                 },
                 [&](const RelationValue& t) {
                   const Relation* r = graph.find_relation(t.relation);
                   if (!r) throw UnknownTargetError("unknown relation '" + t.relation + "'");
                   entity = r->name;
                   attribute = "spatial relation";
                   entity_type = "relation";
                   choices = positive_labels(r->spatial_distribution);
                 },
                 [](const FreeForm&) { throw PreconditionError("free-form targets have no template question"); },
             },
             target);

  const std::string prompt = templates_->render(
      TemplateName::kHsaQuestion,
      {{"entity", entity}, {"attribute", attribute}, {"candidates", join(choices, ", ")}, {"entity_type", entity_type}});
  std::string text = trim(backends_.llm->complete(prompt).text);
  if (to_lower(text).rfind("question:", 0) == 0) text = trim(text.substr(9));
  if (text.empty()) throw ParseFailure("question model returned an empty question");

  const bool lists_all = std::all_of(choices.begin(), choices.end(),
                                     [&](const std::string& c) { return contains_phrase(text, c); });
  if (!lists_all) {
    std::vector<std::string> opts;
    for (std::size_t i = 0; i < choices.size(); ++i) opts.push_back(std::string(1, char('a' + i)) + ". " + choices[i]);
    opts.push_back(std::string(1, char('a' + choices.size())) + ". unknown");
    text += " " + join(opts, ", ") + ", or something else?";
  }
  return {text, choices};
}

std::string Agent::summarize_qa(const std::string& question, const std::string& answer) const {
  if (trim(question).empty() || trim(answer).empty()) throw PreconditionError("question and answer must be non-empty");
  const std::string reply =
      backends_.llm->complete(templates_->render(TemplateName::kVerbalize, {{"question", question}, {"answer", answer}}))
          .text;
  std::string line;
  for (const auto& l : split_sentences(reply)) {
    line = l;
    break;
  }
  line = strip_quotes(line);
  if (line.empty()) throw MalformedResponseError("summary model returned nothing");
  return ensure_sentence_end(line);
}

std::string Agent::merge_prompt(const std::string& current, const std::string& additional_info) const {
  if (trim(current).empty() || trim(additional_info).empty())
    throw PreconditionError("prompt and additional information must be non-empty");
  const std::string reply =
      backends_.llm
          ->complete(templates_->render(TemplateName::kMerge, {{"prompt", ensure_sentence_end(current)},
                                                               {"additional_info", ensure_sentence_end(additional_info)}}))
          .text;
  std::string merged = strip_quotes(reply);
  if (merged.empty()) throw MalformedResponseError("merge model returned nothing");
  return merged;
}

SessionState Agent::transition(const SessionState& state, const Action& action, const Observation& obs) const {
  SessionState next = state;
  ConversationTurn turn;
  turn.index = static_cast<int>(state.history.size()) + 1;
  turn.action = action;
  turn.observation = obs;

  if (const auto* ans = std::get_if<AnswerText>(&obs)) {
    const auto* ask = std::get_if<AskQuestion>(&action);
    if (!ask) throw PreconditionError("an answer needs a pending question");
    if (trim(ans->text).empty()) throw PreconditionError("answer is empty");
    std::string effective = ans->text;
    if (letter_index(ans->text) && !ask->choices.empty())
      if (auto label = resolve_choice(ans->text, ask->choices)) effective = *label;

    turn.declarative_summary = summarize_qa(ask->question_text, effective);
    next.merged_prompt = merge_prompt(state.merged_prompt, turn.declarative_summary);
    try {
      next.graph = parser_.build_belief_graph(next.merged_prompt);
    } catch (const ParseFailure&) {
      turn.degraded = true;
    } catch (const BackendError&) {
      turn.degraded = true;
    }
    if (state.strategy == Strategy::kMhis) {
      auto history = state.history;
      history.push_back(turn);
      next.graph = post_process(next.graph, history, state.graph);
    }
  } else if (const auto* edits = std::get_if<GraphEdits>(&obs)) {
    if (!std::holds_alternative<PresentGraph>(action)) throw PreconditionError("graph edits need a presented graph");
    BeliefGraph g = state.graph;
    std::vector<std::string> sentences;
    for (const auto& edit : edits->edits) {
      sentences.push_back(describe_edit(g, edit));
      g = apply_edit(g, edit);
    }
    if (!sentences.empty()) {
      turn.declarative_summary = join(sentences, " ");
      next.merged_prompt = merge_prompt(state.merged_prompt, turn.declarative_summary);
    }
    next.graph = std::move(g);
  }

  turn.merged_prompt = next.merged_prompt;
  turn.graph = next.graph;
  next.history.push_back(std::move(turn));
  return next;
}

}  // namespace pt2i
