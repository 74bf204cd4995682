// Acceptance gate: one PASS/FAIL line per primary criterion. Exit status is
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "pt2i/agent.hpp"
#include "pt2i/cli.hpp"
#include "pt2i/config.hpp"
#include "pt2i/datasets.hpp"
#include "pt2i/errors.hpp"
#include "pt2i/graph_io.hpp"
#include "pt2i/metrics.hpp"
#include "pt2i/scripted.hpp"
#include "pt2i/service.hpp"
#include "pt2i/simulator.hpp"
#include "pt2i/text.hpp"
#include "test_support.hpp"

namespace pt2i {
namespace {

using testing::GraphGen;
using Clock = std::chrono::steady_clock;

// Thrown by require() to end a criterion with a reason.
struct Unmet {
  std::string reason;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Unmet{what};
}

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const Manifest& fixtures() {
  static const Manifest m = load_manifest(testing::fixture_manifest());
  return m;
}

const Agent& agent() {
  static const Agent a = testing::scripted_agent();
  return a;
}

// ---------------------------------------------------------------------------

GraphEdit random_edit(GraphGen& gen, const BeliefGraph& g) {
  const auto& e = g.entities[static_cast<std::size_t>(gen.below(static_cast<int>(g.entities.size())))];
  switch (gen.below(4)) {
    case 0: return SetEntityExistence{e.name, gen.below(2) == 0};
    case 1:
      if (!e.attributes.empty()) {
        const auto& a = e.attributes[static_cast<std::size_t>(gen.below(static_cast<int>(e.attributes.size())))];
        const bool fresh = gen.below(3) == 0 || a.distribution.candidates.empty();
        return SetAttributeValue{e.name, a.name, fresh ? "brand new" : a.distribution.candidates.front().label};
      }
      break;
    case 2:
      if (!g.relations.empty()) {
        const auto& r = g.relations[static_cast<std::size_t>(gen.below(static_cast<int>(g.relations.size())))];
        return SetRelationValue{r.name, gen.below(2) == 0 ? "between" : r.spatial_distribution.candidates.front().label};
      }
      break;
    default: break;
  }
  return ConfirmImplicit{e.name};
}

void check_distribution(const CandidateDistribution& d, const std::string& where) {
  double sum = 0.0;
  for (const auto& c : d.candidates) sum += c.prob.value();
  require(d.candidates.empty() || near(sum, 1.0, 1e-6), where + ": sum " + std::to_string(sum));
  const double h = entropy(d);
  const double k = static_cast<double>(std::max<std::size_t>(1, d.candidates.size()));
  require(h >= 0.0 && h <= std::log(k) + 1e-12, where + ": entropy out of bounds");
}

void belief_graph_invariants() {
  const auto t0 = Clock::now();
  GraphGen gen(20240611);
  int edits_checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const BeliefGraph g = gen.graph();
    require(validate(g).empty(), "generated graph invalid");
    for (const auto& e : g.entities) {
      require(bernoulli_entropy(e.prob_appearing) <= std::log(2.0) + 1e-12, "existence entropy above ln 2");
      for (const auto& a : e.attributes) check_distribution(a.distribution, e.name + "." + a.name);
    }
    for (const auto& r : g.relations) check_distribution(r.spatial_distribution, r.name);

    require(deserialize(serialize(g)) == g, "serialize round trip differs");
    require(serialize(deserialize(serialize(g))) == serialize(g), "serialized text not stable");

    const GraphEdit edit = random_edit(gen, g);
    BeliefGraph once;
    try {
      once = apply_edit(g, edit);
    } catch (const Error&) {
      continue;  // e.g. confirming an entity that is not implicit
    }
    require(apply_edit(once, edit) == once, "edit not idempotent");
    require(validate(once).empty(), "edited graph invalid");
    ++edits_checked;
  }
  require(edits_checked > 500, "too few edits exercised: " + std::to_string(edits_checked));
  const double s = seconds_since(t0);
  require(s < 10.0, "took " + std::to_string(s) + " s");
}

// ---------------------------------------------------------------------------

double h(const CandidateDistribution& d) {
  double out = 0.0;
  for (const auto& c : d.candidates)
    if (c.prob.value() > 0.0) out -= c.prob.value() * std::log(c.prob.value());
  return out;
}

double hb(double p) { return p <= 0.0 || p >= 1.0 ? 0.0 : -p * std::log(p) - (1 - p) * std::log(1 - p); }

std::string target_id(const QuestionTarget& t) {
  if (const auto* e = std::get_if<EntityExistence>(&t)) return "E|" + e->entity;
  if (const auto* a = std::get_if<AttributeValue>(&t)) return "A|" + a->entity + "|" + a->attribute;
  if (const auto* r = std::get_if<RelationValue>(&t)) return "R|" + r->relation;
  return "F";
}

void score_oracle() {
  const auto t0 = Clock::now();
  GraphGen gen(7);
  GraphGen::Limits lim;
  lim.max_entities = 5;
  lim.max_attributes = 4;
  for (int i = 0; i < 200; ++i) {
    const BeliefGraph g = gen.graph(lim);
    std::map<std::string, double> oracle;
    for (const auto& e : g.entities) {
      const double is_e = e.importance.value();
      const double p = e.prob_appearing.value();
      oracle["E|" + e.name] = is_e * hb(p);
      for (const auto& a : e.attributes) oracle["A|" + e.name + "|" + a.name] = is_e * a.importance.value() * p * h(a.distribution);
    }
    for (const auto& r : g.relations) {
      const double p = g.find_entity(r.entity_1)->prob_appearing.value() * g.find_entity(r.entity_2)->prob_appearing.value();
      oracle["R|" + r.name] = r.importance.value() * p * h(r.spatial_distribution);
    }
    const auto scored = score_targets(g);
    require(scored.size() == oracle.size(), "target count differs");
    double best = -1.0;
    for (const auto& [id, v] : oracle) best = std::max(best, v);
    for (const auto& s : scored) {
      const auto it = oracle.find(target_id(s.target));
      require(it != oracle.end(), "unexpected target " + target_id(s.target));
      require(near(s.score, it->second, 1e-9), "value differs for " + it->first);
    }
    require(near(oracle.at(target_id(scored.front().target)), best, 1e-9), "argmax differs");
  }
  const double s = seconds_since(t0);
  require(s < 5.0, "took " + std::to_string(s) + " s");
}

// ---------------------------------------------------------------------------

void transition_contract() {
  const EvalCase& c = *fixtures().find("breakfast");
  const SimulatedUser user(agent().backends().llm, agent().templates(), c.ground_truth_caption, c.ground_truth_graph);
  SessionState s = agent().start(c.starting_prompt, Strategy::kMhis);
  std::vector<QuestionTarget> answered;
  for (int turn = 1; turn <= 10; ++turn) {
    const Action action = agent().select_action(s);
    const auto* ask = std::get_if<AskQuestion>(&action);
    if (!ask) continue;  // nothing left to ask; later turns must not ask either
    for (const auto& t : answered) require(!(t == ask->target), "target recurred: " + describe_target(t));
    s = agent().transition(s, action, AnswerText{user.answer_question(ask->question_text, s.history)});
    answered.push_back(ask->target);
    for (const auto& t : answered) {
      if (const auto* a = std::get_if<AttributeValue>(&t)) {
        const Entity* e = s.graph.find_entity(a->entity);
        const Attribute* attr = e ? e->find_attribute(a->attribute) : nullptr;
        require(attr && attr->distribution.is_point_mass() && attr->importance.value() == 0.0,
                "not settled: " + describe_target(t));
      } else if (const auto* x = std::get_if<EntityExistence>(&t)) {
        const Entity* e = s.graph.find_entity(x->entity);
        const double p = e ? e->prob_appearing.value() : 0.5;
        require(e && (p == 0.0 || p == 1.0) && e->importance.value() == 0.0, "not settled: " + describe_target(t));
      } else if (const auto* r = std::get_if<RelationValue>(&t)) {
        const Relation* rel = s.graph.find_relation(r->relation);
        require(rel && rel->spatial_distribution.is_point_mass() && rel->importance.value() == 0.0,
                "not settled: " + describe_target(t));
      }
    }
  }
  require(answered.size() >= 5, "only " + std::to_string(answered.size()) + " questions asked");
}

// ---------------------------------------------------------------------------

void nll_properties() {
  GraphGen gen(99);
  for (int i = 0; i < 300; ++i) {
    const GroundTruthState gt = to_ground_truth(gen.graph(), ArgmaxTies::kFirstListed);
    require(nll(from_ground_truth(gt), gt) == 0.0, "nll of ground truth as belief is not 0");
  }
  int collapses = 0;
  for (int i = 0; i < 300; ++i) {
    const BeliefGraph b = gen.graph();
    const GroundTruthState gt = to_ground_truth(b, ArgmaxTies::kFirstListed);
    for (const auto& ge : gt.entities) {
      if (!ge.exists || ge.attributes.empty()) continue;
      const auto& ga = ge.attributes.front();
      const double prior = b.find_entity(ge.name)->find_attribute(ga.name)->distribution.probability_of(ga.value);
      BeliefGraph after = b;
      after.find_entity(ge.name)->find_attribute(ga.name)->distribution = CandidateDistribution::point_mass(ga.value);
      require(near(nll(b, gt) - nll(after, gt), -std::log(prior), 1e-9), "collapse did not remove -ln(prior)");
      ++collapses;
      break;
    }
  }
  require(collapses > 50, "too few collapses exercised");

  BeliefGraph hand;
  Entity cat;
  cat.name = "cat";
  cat.entity_type = EntityType::kExplicit;
  cat.prob_appearing = Probability(0.8);
  cat.attributes.push_back({"color", ImportanceScore(1.0), {{{"black", Probability(0.5)}, {"white", Probability(0.5)}}}});
  hand.entities.push_back(cat);
  GroundTruthState gt;
  gt.entities = {{"cat", true, {{"color", "black"}}}};
  require(near(nll(hand, gt), 0.91629, 5e-6), "hand case gave " + std::to_string(nll(hand, gt)));
}

// ---------------------------------------------------------------------------

std::string transcripts_text(const BatchResult& r) {
  std::string out;
  for (const auto& t : r.transcripts) out += transcript_to_json(t).dump(2) + "\n";
  return out;
}

void selfplay_determinism() {
  const SelfPlayConfig cfg;
  const BatchResult a = run_batch(agent(), fixtures().cases, cfg);
  const BatchResult b = run_batch(agent(), fixtures().cases, cfg);
  require(a.failures.empty() && a.transcripts.size() == 5, "not every case completed");
  require(transcripts_text(a) == transcripts_text(b), "transcripts differ between runs");
  for (const auto& t : a.transcripts)
    require(t.turns.back().metrics.at(kMetricNll) <= t.turns.front().metrics.at(kMetricNll),
            t.case_id + ": final nll above turn 1");
}

void baseline_ordering() {
  auto mean_nll = [](Strategy s) {
    SelfPlayConfig cfg;
    cfg.strategy = s;
    const BatchResult r = run_batch(agent(), fixtures().cases, cfg);
    require(r.failures.empty(), std::string(to_string(s)) + ": a case failed");
    return r.final_turn.at(kMetricNll).mean;
  };
  const double mhis = mean_nll(Strategy::kMhis);
  const double baseline = mean_nll(Strategy::kT2iBaseline);
  const double aicq = mean_nll(Strategy::kAicqBase);
  std::ostringstream detail;
  detail << "mhis " << mhis << ", t2i-baseline " << baseline << ", aicq-base " << aicq;
  require(mhis < baseline, detail.str());
  require(aicq <= mhis, detail.str());
}

// ---------------------------------------------------------------------------

void best_of_n() {
  GraphGen gen(1234);
  for (int i = 0; i < 100; ++i) {
    ImageScores scores;
    const int n = 1 + gen.below(10);
    const int q = 1 + gen.below(5);
    for (int j = 0; j < n; ++j) {
      std::vector<double> s;
      for (int k = 0; k < q; ++k) s.push_back(i % 2 ? gen.below(3) / 2.0 : gen.uniform());
      scores.emplace_back("img" + std::to_string(gen.below(100)) + "_" + std::to_string(j), s);
    }
    std::string best;
    double best_mean = -1.0;
    for (const auto& [id, s] : scores) {
      double m = 0.0;
      for (double v : s) m += v;
      m /= static_cast<double>(s.size());
      if (m > best_mean || (m == best_mean && id < best)) {
        best_mean = m;
        best = id;
      }
    }
    require(select_best_image(scores) == best, "argmax of means differs");
  }

  testing::TempDir dir;
  ServiceConfig cfg;
  cfg.data_dir = dir.path();
  SessionService service(agent(), cfg);
  const EvalCase& c = *fixtures().find("breakfast");
  const SimulatedUser user(agent().backends().llm, agent().templates(), c.ground_truth_caption, c.ground_truth_graph);
  const std::string id = service.create_session(c.starting_prompt, "mhis").session_id;
  for (int i = 0; i < 5; ++i) {
    const Action a = service.next_question(id);
    const auto* ask = std::get_if<AskQuestion>(&a);
    require(ask != nullptr, "ran out of questions");
    service.submit_answer(id, user.answer_question(ask->question_text, service.get_session(id).state.history));
  }
  const GenerateResult g = service.generate(id, 10);
  require(g.images.size() == 10 && g.questions.size() == 5, "expected 10 images and 5 questions");
  int most = -1;
  std::map<std::string, int> hits;
  for (const auto& img : g.images) {
    for (const auto& question : g.questions)
      hits[img.id] += contains_phrase(img.prompt_used, KeyPhraseScorer::key_phrase(question)) ? 1 : 0;
    most = std::max(most, hits[img.id]);
  }
  require(hits[g.images.front().id] == most, "selected image does not hold the most key phrases");
}

// ---------------------------------------------------------------------------

struct Http {
  httplib::Client& client;
  std::pair<int, json> get(const std::string& p) { return wrap(client.Get(p)); }
  std::pair<int, json> post(const std::string& p, const json& body) {
    return wrap(client.Post(p, body.dump(), "application/json"));
  }
  static std::pair<int, json> wrap(const httplib::Result& r) {
    if (!r) return {-1, json()};
    return {r->status, json::parse(r->body, nullptr, false)};
  }
};

template <class Fn>
void with_server(const std::filesystem::path& data_dir, Fn fn) {
  ServiceConfig cfg;
  cfg.data_dir = data_dir;
  SessionService service(testing::scripted_agent(), cfg);
  httplib::Server server;
  mount_routes(server, service);
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  Http http{client};
  try {
    fn(http);
  } catch (...) {
    server.stop();
    th.join();
    throw;
  }
  server.stop();
  th.join();
}

void service_contract() {
  const auto t0 = Clock::now();
  testing::TempDir dir;
  const std::string prompt = fixtures().find("breakfast")->starting_prompt;
  std::string id;
  json snapshot;
  with_server(dir.path(), [&](Http& http) {
    auto [st, created] = http.post("/v1/sessions", {{"prompt", prompt}});
    require(st == 201, "create: " + std::to_string(st));
    id = created["session_id"];
    require(http.post("/v1/sessions", {{"prompt", ""}}).first == 400, "create with empty prompt accepted");
    require(http.get("/v1/sessions/" + id).first == 200, "get");
    require(http.get("/v1/sessions/ffffffff").first == 404, "get of unknown session");
    require(http.get("/v1/sessions").second["sessions"].size() == 1, "list");
    require(http.get("/v1/sessions/" + id + "/graph").first == 200, "graph");

    auto [qs, q] = http.get("/v1/sessions/" + id + "/question");
    require(qs == 200 && q["type"] == "ask_question" && q["question_id"] == 1, "question");
    require(http.post("/v1/sessions/" + id + "/answer", {{"answer", "a"}, {"question_id", 1}}).first == 200, "answer");
    auto [dup, dup_body] = http.post("/v1/sessions/" + id + "/answer", {{"answer", "a"}, {"question_id", 1}});
    require(dup == 409 && dup_body["code"] == "conflict", "double answer gave " + std::to_string(dup));

    auto [es, edited] = http.post(
        "/v1/sessions/" + id + "/edits",
        {{"edits", {{{"type", "set_entity_existence"}, {"entity", "fork"}, {"exists", true}}}}});
    require(es == 200 && edited["history"].size() == 2, "edits");
    require(http.post("/v1/sessions/" + id + "/edits", {{"edits", {{{"type", "nope"}}}}}).first == 400, "bad edit");

    auto [gs, gen] = http.post("/v1/sessions/" + id + "/generate", {{"n_seeds", 4}});
    require(gs == 200 && gen["images"].size() == 4, "generate");
    require(http.post("/v1/sessions/" + id + "/generate", {{"n_seeds", 99}}).first == 400, "n_seeds bound");

    http.get("/v1/sessions/" + id + "/question");
    snapshot = http.get("/v1/sessions/" + id).second;
  });
  with_server(dir.path(), [&](Http& http) {
    require(http.get("/v1/sessions/" + id).second == snapshot, "session changed across restart");
    auto [qs, q] = http.get("/v1/sessions/" + id + "/question");
    require(qs == 200 && q["question_id"] == 3, "pending question lost across restart");
    require(http.post("/v1/sessions/" + id + "/answer", {{"answer", "b"}, {"question_id", 3}}).first == 200,
            "answer after restart");
  });
  const double s = seconds_since(t0);
  require(s < 30.0, "took " + std::to_string(s) + " s");
}

// ---------------------------------------------------------------------------

void fifteen_turn_budget() {
  require(SelfPlayConfig{}.max_turns == 15, "SelfPlayConfig default is not 15");
  testing::TempDir dir;
  const std::string manifest = testing::fixture_manifest().string();
  const std::string out = dir.path().string();
  const char* argv[] = {"pt2i", "--out", out.c_str(), "selfplay", manifest.c_str()};
  std::istringstream in;
  std::ostringstream sout, serr;
  require(run_cli(5, argv, in, sout, serr) == kExitOk, "selfplay failed: " + serr.str());
  require(sout.str().find("turns: 15\n") != std::string::npos, "summary does not report 15 turns");

  std::ifstream series(dir.path() / "series.csv");
  int rows = -1;  // header
  for (std::string line; std::getline(series, line);) ++rows;
  require(rows == 15, "series.csv has " + std::to_string(rows) + " turns");
  for (const auto& c : fixtures().cases) {
    std::ifstream f(dir.path() / "transcripts" / (c.case_id + ".json"));
    const json t = json::parse(f);
    require(t["turns"].size() == 15, c.case_id + ": transcript length");
    Transcript tr;
    tr.config.metric_set = {kMetricNll};
    for (const auto& turn : t["turns"]) tr.turns.push_back({turn["turn"], "", "", "", {{kMetricNll, turn["metrics"]["nll"]}}});
    require(metric_series(tr).values.size() == 15, c.case_id + ": metric series length");
  }
}

// ---------------------------------------------------------------------------

// Runs only when a remote provider is configured.
std::optional<std::string> remote_smoke() {
  if (!std::getenv("PT2I_REMOTE_BASE_URL")) return std::nullopt;
  try {
    const Agent remote(make_remote_backends(RemoteConfig::from_env()), load_templates(default_templates_dir()));
    SelfPlayConfig cfg;
    cfg.max_turns = 5;
    const Transcript t = run_self_play(remote, *fixtures().find("breakfast"), cfg);
    if (t.turns.size() != 5) return "expected 5 turns";
    for (const auto& l : t.turns)
      if (!l.error.empty()) return "turn " + std::to_string(l.turn) + ": " + l.error;
    if (!validate(t.final_graph).empty()) return "final graph invalid";
    return "";
  } catch (const std::exception& e) {
    return std::string(e.what());
  }
}

}  // namespace
}  // namespace pt2i

int main() {
  using namespace pt2i;
  const std::vector<std::pair<std::string, std::function<void()>>> criteria = {
      {"belief-graph invariants (1000 graphs, < 10 s)", belief_graph_invariants},
      {"score_targets oracle equivalence (200 graphs, < 5 s)", score_oracle},
      {"transition contract (10-turn MHIS session)", transition_contract},
      {"NLL properties", nll_properties},
      {"self-play determinism and non-increasing NLL", selfplay_determinism},
      {"baseline ordering", baseline_ordering},
      {"best-of-N selection", best_of_n},
      {"service contract (< 30 s)", service_contract},
      {"15-turn budget", fifteen_turn_budget},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    std::string reason;
    try {
      fn();
    } catch (const Unmet& u) {
      reason = u.reason;
    } catch (const std::exception& e) {
      reason = std::string("exception: ") + e.what();
    }
    if (reason.empty()) {
      std::cout << "PASS " << name << std::endl;
    } else {
      std::cout << "FAIL " << name << ": " << reason << std::endl;
      ++failed;
    }
  }
  const auto smoke = remote_smoke();
  if (!smoke) std::cout << "SKIP remote smoke test (PT2I_REMOTE_BASE_URL not set)" << std::endl;
  else if (smoke->empty()) std::cout << "PASS remote smoke test" << std::endl;
  else std::cout << "FAIL remote smoke test: " << *smoke << std::endl;
  return failed == 0 ? 0 : 1;
}
