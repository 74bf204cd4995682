#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pt2i/agent.hpp"
#include "pt2i/datasets.hpp"
#include "pt2i/graph_io.hpp"
#include "pt2i/metrics.hpp"

namespace pt2i {

class SimulatedUser {
 public:
  SimulatedUser(std::shared_ptr<LanguageModel> llm, std::shared_ptr<const TemplateLibrary> templates,
                std::string ground_truth_prompt, BeliefGraph ground_truth_graph);

  /// Builds the ground-truth graph from the caption with `parser`.
  static SimulatedUser from_caption(const BeliefParser& parser, std::shared_ptr<LanguageModel> llm,
                                    std::shared_ptr<const TemplateLibrary> templates, std::string caption);

  const std::string& ground_truth_prompt() const { return prompt_; }
  const BeliefGraph& ground_truth_graph() const { return graph_; }

  /// The question is passed as asked, options included.
  std::string answer_question(const std::string& question, const std::vector<ConversationTurn>& history) const;

 private:
  std::shared_ptr<LanguageModel> llm_;
  std::shared_ptr<const TemplateLibrary> templates_;
  std::string prompt_;
  BeliefGraph graph_;
};

struct SelfPlayConfig {
  int max_turns = 15;
  Strategy strategy = Strategy::kMhis;
  std::int64_t seed = 0;
  std::vector<std::string> metric_set = {kMetricNll, kMetricT2t};

  bool operator==(const SelfPlayConfig&) const = default;
};

struct TurnLog {
  int turn = 0;
  std::string question;
  std::string answer;
  std::string merged_prompt;
  std::map<std::string, double> metrics;
  bool degraded = false;
  std::string error;  // set when the turn failed outright

  bool operator==(const TurnLog&) const = default;
};

struct Transcript {
  std::string case_id;
  SelfPlayConfig config;
  std::vector<TurnLog> turns;
  std::string final_prompt;
  BeliefGraph final_graph;
  std::vector<std::string> flags;

  bool operator==(const Transcript&) const = default;
};

json transcript_to_json(const Transcript& t);

/// Runs exactly config.max_turns turns of select, ask, answer, transition,
/// measuring after each. A turn whose backend calls fail is logged as
/// degraded with the previous turn's metrics. Throws PreconditionError on
/// max_turns < 1 or an unknown metric id; failures while building the
/// starting graph propagate.
Transcript run_self_play(const Agent& agent, const EvalCase& eval_case, const SelfPlayConfig& config);

struct CaseFailure {
  std::string case_id;
  std::string message;
};

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population
  int count = 0;
};

struct BatchResult {
  std::vector<Transcript> transcripts;  // in case order, failures omitted
  std::vector<CaseFailure> failures;
  std::map<std::string, MetricSummary> final_turn;
  std::map<std::string, std::vector<double>> per_turn_means;
};

/// Cases run on up to `jobs` threads; results are ordered as the input.
BatchResult run_batch(const Agent& agent, const std::vector<EvalCase>& cases, const SelfPlayConfig& config,
                      int jobs = 1);

std::string aggregate_csv(const BatchResult& r);  // metric,mean,std,n
std::string series_csv(const BatchResult& r);     // turn,<metric>...
std::string summary_text(const BatchResult& r, const SelfPlayConfig& config);

}  // namespace pt2i
