#include "pt2i/simulator.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>

#include "pt2i/errors.hpp"
#include "pt2i/text.hpp"

namespace pt2i {

SimulatedUser::SimulatedUser(std::shared_ptr<LanguageModel> llm, std::shared_ptr<const TemplateLibrary> templates,
                             std::string ground_truth_prompt, BeliefGraph ground_truth_graph)
    : llm_(std::move(llm)),
      templates_(std::move(templates)),
      prompt_(std::move(ground_truth_prompt)),
      graph_(std::move(ground_truth_graph)) {}

SimulatedUser SimulatedUser::from_caption(const BeliefParser& parser, std::shared_ptr<LanguageModel> llm,
                                          std::shared_ptr<const TemplateLibrary> templates, std::string caption) {
  BeliefGraph g = parser.build_belief_graph(caption);
  return SimulatedUser(std::move(llm), std::move(templates), std::move(caption), std::move(g));
}

std::string SimulatedUser::answer_question(const std::string& question,
                                           const std::vector<ConversationTurn>& history) const {
  if (trim(question).empty()) throw PreconditionError("question is empty");
  const std::string request = templates_->render(TemplateName::kSimulatedUser,
                                                 {{"ground_truth_prompt", prompt_},
                                                  {"ground_truth_belief", describe_belief(graph_)},
                                                  {"conversation", render_conversation(history)},
                                                  {"question", question}});
  std::string answer = trim(llm_->complete(request).text);
  if (answer.empty()) throw MalformedResponseError("simulated user gave an empty answer");
  return answer;
}

// ---------------------------------------------------------------------------

namespace {

std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

struct Measurer {
  const Agent& agent;
  const EvalCase& eval_case;
  const SelfPlayConfig& config;
  GroundTruthState gt;
  std::vector<std::string> flags;

  std::map<std::string, double> measure(const SessionState& state, int turn) const {
    const Backends& b = agent.backends();
    std::map<std::string, double> out;
    std::optional<ImageArtifact> image;
    auto render = [&]() -> const ImageArtifact& {
      if (!image) image = b.images->generate_image(state.merged_prompt, config.seed + turn);
      return *image;
    };
    for (const auto& id : config.metric_set) {
      if (id == kMetricNll) {
        out[id] = nll(state.graph, gt);
      } else if (id == kMetricT2t) {
        out[id] = t2t_similarity(*b.embedder, state.merged_prompt, eval_case.ground_truth_caption);
      } else if (id == kMetricI2i) {
        if (b.scorer && eval_case.image_ref)
          if (auto s = b.scorer->image_similarity(render(), *eval_case.image_ref)) out[id] = *s;
      } else if (id == kMetricVqa) {
        if (b.scorer)
          out[id] = b.scorer->score_image(
              render(), "Does the image match the description \"" + eval_case.ground_truth_caption + "\"?");
      }
    }
    return out;
  }
};

}  // namespace

Transcript run_self_play(const Agent& agent, const EvalCase& eval_case, const SelfPlayConfig& config) {
  if (config.max_turns < 1) throw PreconditionError("max_turns must be at least 1");
  for (const auto& id : config.metric_set)
    if (!is_known_metric(id)) throw PreconditionError("unknown metric id '" + id + "'");

  Measurer m{agent, eval_case, config, to_ground_truth(eval_case.ground_truth_graph, ArgmaxTies::kFirstListed), {}};
  const Backends& b = agent.backends();
  for (const auto& id : config.metric_set) {
    if (id == kMetricI2i && !b.scorer) m.flags.push_back(id + std::string(": no image scorer configured"));
    if (id == kMetricI2i && b.scorer && !eval_case.image_ref) m.flags.push_back(id + std::string(": case has no image"));
    if (id == kMetricVqa && !b.scorer) m.flags.push_back(id + std::string(": no image scorer configured"));
  }

  Transcript t;
  t.case_id = eval_case.case_id;
  t.config = config;

  SessionState state = agent.start(eval_case.starting_prompt, config.strategy);
  SimulatedUser user(b.llm, agent.templates(), eval_case.ground_truth_caption, eval_case.ground_truth_graph);
  std::map<std::string, double> previous;

  for (int turn = 1; turn <= config.max_turns; ++turn) {
    TurnLog log;
    log.turn = turn;
    try {
      const Action action = agent.select_action(state);
      if (const auto* ask = std::get_if<AskQuestion>(&action)) {
        log.question = ask->question_text;
        log.answer = user.answer_question(ask->question_text, state.history);
        state = agent.transition(state, action, AnswerText{log.answer});
        log.degraded = state.history.back().degraded;
      }
      log.metrics = (log.degraded && turn > 1) ? previous : m.measure(state, turn);
    } catch (const Error& e) {
      log.degraded = true;
      log.error = e.what();
      log.metrics = turn > 1 ? previous : m.measure(state, turn);
    }
    log.merged_prompt = state.merged_prompt;
    previous = log.metrics;
    t.turns.push_back(std::move(log));
  }
  t.final_prompt = state.merged_prompt;
  t.final_graph = state.graph;
  t.flags = std::move(m.flags);
  return t;
}

json transcript_to_json(const Transcript& t) {
  json turns = json::array();
  for (const auto& l : t.turns) {
    json metrics = json::object();
    for (const auto& id : t.config.metric_set)
      if (auto it = l.metrics.find(id); it != l.metrics.end()) metrics[id] = it->second;
    json doc = {{"turn", l.turn},           {"question", l.question}, {"answer", l.answer},
                {"merged_prompt", l.merged_prompt}, {"metrics", metrics}, {"degraded", l.degraded}};
    if (!l.error.empty()) doc["error"] = l.error;
    turns.push_back(std::move(doc));
  }
  return json{{"case_id", t.case_id},
              {"config",
               {{"max_turns", t.config.max_turns},
                {"strategy", std::string(to_string(t.config.strategy))},
                {"seed", t.config.seed},
                {"metric_set", t.config.metric_set}}},
              {"flags", t.flags},
              {"turns", turns},
              {"final_prompt", t.final_prompt},
              {"final_graph", graph_to_json(t.final_graph)}};
}

// ---------------------------------------------------------------------------

BatchResult run_batch(const Agent& agent, const std::vector<EvalCase>& cases, const SelfPlayConfig& config,
                      int jobs) {
  if (cases.empty()) throw PreconditionError("no cases to run");
  if (config.max_turns < 1) throw PreconditionError("max_turns must be at least 1");

  std::vector<std::optional<Transcript>> results(cases.size());
  std::vector<std::string> errors(cases.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cases.size(); i = next++) {
      try {
        results[i] = run_self_play(agent, cases[i], config);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(cases.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  BatchResult r;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (results[i]) r.transcripts.push_back(std::move(*results[i]));
    else r.failures.push_back({cases[i].case_id, errors[i]});
  }

  for (const auto& id : config.metric_set) {
    std::vector<double> finals;
    std::vector<double> sums(static_cast<std::size_t>(config.max_turns), 0.0);
    std::vector<int> counts(sums.size(), 0);
    for (const auto& t : r.transcripts) {
      for (const auto& l : t.turns) {
        auto it = l.metrics.find(id);
        if (it == l.metrics.end()) continue;
        sums[static_cast<std::size_t>(l.turn - 1)] += it->second;
        counts[static_cast<std::size_t>(l.turn - 1)] += 1;
      }
      if (!t.turns.empty())
        if (auto it = t.turns.back().metrics.find(id); it != t.turns.back().metrics.end()) finals.push_back(it->second);
    }
    if (finals.empty()) continue;
    MetricSummary s;
    s.count = static_cast<int>(finals.size());
    for (double v : finals) s.mean += v;
    s.mean /= s.count;
    for (double v : finals) s.stddev += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(s.stddev / s.count);
    r.final_turn[id] = s;
    auto& series = r.per_turn_means[id];
    for (std::size_t i = 0; i < sums.size(); ++i)
      series.push_back(counts[i] ? sums[i] / counts[i] : std::nan(""));
  }
  return r;
}

std::string aggregate_csv(const BatchResult& r) {
  std::ostringstream out;
  out << "metric,mean,std,n\n";
  for (const auto& [id, s] : r.final_turn) out << id << "," << fixed(s.mean) << "," << fixed(s.stddev) << "," << s.count << "\n";
  return out.str();
}

std::string series_csv(const BatchResult& r) {
  std::ostringstream out;
  out << "turn";
  std::size_t turns = 0;
  for (const auto& [id, series] : r.per_turn_means) {
    out << "," << id;
    turns = std::max(turns, series.size());
  }
  out << "\n";
  for (std::size_t i = 0; i < turns; ++i) {
    out << (i + 1);
    for (const auto& [id, series] : r.per_turn_means) out << "," << (i < series.size() ? fixed(series[i]) : "");
    out << "\n";
  }
  return out.str();
}

std::string summary_text(const BatchResult& r, const SelfPlayConfig& config) {
  std::ostringstream out;
  out << "strategy: " << to_string(config.strategy) << "\n";
  out << "turns: " << config.max_turns << "\n";
  out << "seed: " << config.seed << "\n";
  out << "cases: " << r.transcripts.size() << " completed, " << r.failures.size() << " failed\n";
  for (const auto& [id, s] : r.final_turn)
    out << "final " << id << ": " << fixed(s.mean) << " +/- " << fixed(s.stddev) << " (n=" << s.count << ")\n";
  for (const auto& f : r.failures) out << "failed " << f.case_id << ": " << f.message << "\n";
  for (const auto& t : r.transcripts)
    for (const auto& flag : t.flags) out << "note " << t.case_id << ": " << flag << "\n";
  return out.str();
}

}  // namespace pt2i
