#include "pt2i/service.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <random>

#include <httplib.h>

#include "pt2i/metrics.hpp"
#include "pt2i/session_io.hpp"
#include "pt2i/text.hpp"

namespace pt2i {

namespace fs = std::filesystem;

std::string_view to_string(ApiErrorCode c) {
  switch (c) {
    case ApiErrorCode::kNotFound: return "not_found";
    case ApiErrorCode::kInvalidInput: return "invalid_input";
    case ApiErrorCode::kBackendUnavailable: return "backend_unavailable";
    case ApiErrorCode::kConflict: return "conflict";
  }
  return "invalid_input";
}

int http_status(ApiErrorCode c) {
  switch (c) {
    case ApiErrorCode::kNotFound: return 404;
    case ApiErrorCode::kInvalidInput: return 400;
    case ApiErrorCode::kBackendUnavailable: return 503;
    case ApiErrorCode::kConflict: return 409;
  }
  return 400;
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string string_at(const json& doc, const char* key, const std::string& path = "") {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_string()) throw SchemaError(path + "/" + key, "expected a string");
  return it->get<std::string>();
}

[[noreturn]] void rethrow_as_api_error() {
  try {
    throw;
  } catch (const ApiError&) {
    throw;
  } catch (const ContentBlockedError& e) {
    throw ApiError(ApiErrorCode::kInvalidInput, e.what());
  } catch (const BackendError& e) {
    throw ApiError(ApiErrorCode::kBackendUnavailable, e.what());
  } catch (const ParseFailure& e) {
    throw ApiError(ApiErrorCode::kBackendUnavailable, e.what());
  } catch (const MissingQuestionMarkers& e) {
    throw ApiError(ApiErrorCode::kBackendUnavailable, e.what());
  } catch (const UnknownTargetError& e) {
    throw ApiError(ApiErrorCode::kInvalidInput, e.what());
  } catch (const PreconditionError& e) {
    throw ApiError(ApiErrorCode::kInvalidInput, e.what());
  } catch (const SchemaError& e) {
    throw ApiError(ApiErrorCode::kInvalidInput, e.what());
  }
}

}  // namespace

json image_to_json(const ImageArtifact& a) {
  return json{{"id", a.id}, {"prompt_used", a.prompt_used}, {"seed", a.seed}, {"content_ref", a.content_ref}};
}

ImageArtifact image_from_json(const json& doc, const std::string& path) {
  ImageArtifact a;
  a.id = string_at(doc, "id", path);
  a.prompt_used = string_at(doc, "prompt_used", path);
  auto seed = doc.find("seed");
  if (seed == doc.end() || !seed->is_number_integer()) throw SchemaError(path + "/seed", "expected an integer");
  a.seed = seed->get<std::int64_t>();
  a.content_ref = string_at(doc, "content_ref", path);
  return a;
}

json api_action_to_json(const Action& a, int question_id) {
  json doc = action_to_json(a);
  if (std::holds_alternative<AskQuestion>(a)) {
    json out = {{"type", doc["type"]}, {"question_id", question_id}};
    for (auto it = doc.begin(); it != doc.end(); ++it)
      if (it.key() != "type") out[it.key()] = it.value();
    return out;
  }
  return doc;
}

json session_record_to_json(const SessionRecord& r, bool include_pending) {
  json state = session_state_to_json(r.state);
  json doc = {{"session_id", r.session_id}, {"created_at", r.created_at}, {"updated_at", r.updated_at}};
  for (auto it = state.begin(); it != state.end(); ++it) doc[it.key()] = it.value();
  json images = json::array();
  for (const auto& a : r.images) images.push_back(image_to_json(a));
  doc["images"] = images;
  doc["degraded"] = !r.state.history.empty() && r.state.history.back().degraded;
  if (include_pending) doc["pending"] = r.pending ? action_to_json(*r.pending) : json(nullptr);
  return doc;
}

SessionRecord session_record_from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("", "expected an object");
  SessionRecord r;
  r.session_id = string_at(doc, "session_id");
  r.created_at = string_at(doc, "created_at");
  r.updated_at = string_at(doc, "updated_at");
  r.state = session_state_from_json(doc);
  if (auto it = doc.find("images"); it != doc.end() && it->is_array())
    for (std::size_t i = 0; i < it->size(); ++i) r.images.push_back(image_from_json((*it)[i], "/images/" + std::to_string(i)));
  if (auto it = doc.find("pending"); it != doc.end() && !it->is_null()) r.pending = action_from_json(*it, "/pending");
  return r;
}

// ---------------------------------------------------------------------------

struct SessionService::Entry {
  std::mutex mu;
  SessionRecord record;
};

SessionService::SessionService(Agent agent, ServiceConfig config) : agent_(std::move(agent)), config_(std::move(config)) {
  fs::create_directories(config_.data_dir / "sessions");
}

SessionService::~SessionService() = default;

fs::path SessionService::path_for(const std::string& id) const { return config_.data_dir / "sessions" / (id + ".json"); }

void SessionService::persist(const SessionRecord& r) const {
  const fs::path target = path_for(r.session_id);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << session_record_to_json(r, true).dump(2) << "\n";
    out.flush();
    if (!out) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string SessionService::new_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  char buf[17];
  for (;;) {
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    if (!sessions_.count(buf) && !fs::exists(path_for(buf))) return buf;
  }
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) {
  std::lock_guard lock(map_mu_);
  if (auto it = sessions_.find(id); it != sessions_.end()) return it->second;
  const bool valid = !id.empty() && id.size() <= 64 &&
                     std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)); });
  const fs::path p = valid ? path_for(id) : fs::path();
  if (!valid || !fs::exists(p)) throw ApiError(ApiErrorCode::kNotFound, "no session '" + id + "'");
  std::ifstream in(p);
  auto entry = std::make_shared<Entry>();
  try {
    entry->record = session_record_from_json(json::parse(in));
  } catch (const std::exception& e) {
    throw ApiError(ApiErrorCode::kBackendUnavailable, "session '" + id + "' is unreadable: " + e.what());
  }
  sessions_[id] = entry;
  return entry;
}

SessionRecord SessionService::create_session(const std::string& prompt, const std::string& strategy) {
  if (trim(prompt).empty()) throw ApiError(ApiErrorCode::kInvalidInput, "prompt is empty");
  const auto st = strategy_from_string(strategy);
  if (!st) throw ApiError(ApiErrorCode::kInvalidInput, "unknown strategy '" + strategy + "'");
  SessionRecord r;
  try {
    r.state = agent_.start(prompt, *st);
  } catch (...) {
    rethrow_as_api_error();
  }
  r.created_at = r.updated_at = utc_now();
  auto entry = std::make_shared<Entry>();
  {
    std::lock_guard lock(map_mu_);
    r.session_id = new_id();
    entry->record = r;
    sessions_[r.session_id] = entry;
  }
  std::lock_guard lock(entry->mu);
  persist(entry->record);
  return entry->record;
}

SessionRecord SessionService::get_session(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  return e->record;
}

std::vector<json> SessionService::list_sessions() {
  std::vector<std::string> ids;
  for (const auto& f : fs::directory_iterator(config_.data_dir / "sessions"))
    if (f.path().extension() == ".json") ids.push_back(f.path().stem().string());
  std::sort(ids.begin(), ids.end());
  std::vector<json> out;
  for (const auto& id : ids) {
    try {
      const SessionRecord r = get_session(id);
      out.push_back({{"session_id", r.session_id},
                     {"strategy", std::string(to_string(r.state.strategy))},
                     {"original_prompt", r.state.original_prompt},
                     {"merged_prompt", r.state.merged_prompt},
                     {"turns", r.state.history.size()},
                     {"created_at", r.created_at},
                     {"updated_at", r.updated_at}});
    } catch (const ApiError&) {
    }
  }
  return out;
}

Action SessionService::next_question(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  if (!e->record.pending) {
    try {
      e->record.pending = agent_.select_action(e->record.state);
    } catch (...) {
      rethrow_as_api_error();
    }
    persist(e->record);
  }
  return *e->record.pending;
}

int SessionService::pending_question_id(const std::string& id) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  return static_cast<int>(e->record.state.history.size()) + 1;
}

SessionRecord SessionService::submit_answer(const std::string& id, const std::string& answer,
                                            std::optional<int> question_id) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  SessionRecord& r = e->record;
  if (!r.pending || !std::holds_alternative<AskQuestion>(*r.pending))
    throw ApiError(ApiErrorCode::kConflict, "no pending question");
  const int expected = static_cast<int>(r.state.history.size()) + 1;
  if (question_id && *question_id != expected)
    throw ApiError(ApiErrorCode::kConflict, "question " + std::to_string(*question_id) + " is not pending (expected " +
                                                std::to_string(expected) + ")");
  if (trim(answer).empty()) throw ApiError(ApiErrorCode::kInvalidInput, "answer is empty");
  try {
    r.state = agent_.transition(r.state, *r.pending, AnswerText{answer});
  } catch (...) {
    rethrow_as_api_error();
  }
  r.pending.reset();
  r.updated_at = utc_now();
  persist(r);
  return r;
}

SessionRecord SessionService::submit_edits(const std::string& id, const std::vector<GraphEdit>& edits) {
  auto e = find(id);
  std::lock_guard lock(e->mu);
  SessionRecord& r = e->record;
  if (edits.empty()) return r;
  BeliefGraph probe = r.state.graph;
  for (std::size_t i = 0; i < edits.size(); ++i) {
    try {
      probe = apply_edit(probe, edits[i]);
    } catch (const Error& ex) {
      throw ApiError(ApiErrorCode::kInvalidInput, "edits[" + std::to_string(i) + "]: " + ex.what());
    }
  }
  try {
    r.state = agent_.transition(r.state, PresentGraph{}, GraphEdits{edits});
  } catch (...) {
    rethrow_as_api_error();
  }
  r.pending.reset();
  r.updated_at = utc_now();
  persist(r);
  return r;
}

std::vector<std::string> SessionService::ranking_questions(const SessionState& state, int limit) {
  std::vector<std::string> out;
  for (const auto& t : state.history) {
    if (static_cast<int>(out.size()) >= limit) break;
    if (!std::holds_alternative<AnswerText>(t.observation) || t.declarative_summary.empty()) continue;
    out.push_back("Does the image match the description \"" + t.declarative_summary + "\"?");
  }
  return out;
}

GenerateResult SessionService::generate(const std::string& id, int n_seeds) {
  if (n_seeds < 1 || n_seeds > config_.max_seeds)
    throw ApiError(ApiErrorCode::kInvalidInput,
                   "n_seeds must be between 1 and " + std::to_string(config_.max_seeds));
  auto e = find(id);
  std::lock_guard lock(e->mu);
  SessionRecord& r = e->record;
  const Backends& b = agent_.backends();

  GenerateResult out;
  std::vector<ImageArtifact> images;
  try {
    for (int i = 1; i <= n_seeds; ++i) {
      try {
        images.push_back(b.images->generate_image(r.state.merged_prompt, i));
      } catch (const ContentBlockedError&) {
        out.blocked_seeds.push_back(i);
      }
    }
    out.questions = ranking_questions(r.state, config_.ranking_questions);
    if (b.scorer && !out.questions.empty() && !images.empty()) {
      ImageScores scores;
      for (const auto& img : images) {
        std::vector<double> s;
        for (const auto& q : out.questions) s.push_back(b.scorer->score_image(img, q));
        double mean = 0.0;
        for (double v : s) mean += v;
        out.mean_scores[img.id] = mean / static_cast<double>(s.size());
        scores.emplace_back(img.id, std::move(s));
      }
      for (const auto& img_id : rank_images(scores))
        for (const auto& img : images)
          if (img.id == img_id) out.images.push_back(img);
    } else {
      out.images = images;
    }
  } catch (...) {
    rethrow_as_api_error();
  }
  r.images.insert(r.images.end(), out.images.begin(), out.images.end());
  r.updated_at = utc_now();
  persist(r);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ApiErrorCode code, const std::string& message) {
  send_json(res, http_status(code), json{{"code", std::string(to_string(code))}, {"message", message}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    json doc = json::parse(req.body);
    if (!doc.is_object()) throw ApiError(ApiErrorCode::kInvalidInput, "request body must be a JSON object");
    return doc;
  } catch (const json::parse_error& e) {
    throw ApiError(ApiErrorCode::kInvalidInput, std::string("request body is not JSON: ") + e.what());
  }
}

template <class Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ApiError& e) {
      send_error(res, e.code(), e.what());
    } catch (const SchemaError& e) {
      send_error(res, ApiErrorCode::kInvalidInput, e.what());
    } catch (const json::exception& e) {
      send_error(res, ApiErrorCode::kInvalidInput, e.what());
    } catch (const std::exception& e) {
      send_json(res, 500, json{{"code", "internal"}, {"message", e.what()}});
    }
  };
}

}  // namespace

void mount_routes(httplib::Server& server, SessionService& service) {
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, json{{"status", "ok"}});
  });

  server.Post("/v1/sessions", guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                auto prompt = body.find("prompt");
                if (prompt == body.end() || !prompt->is_string())
                  throw ApiError(ApiErrorCode::kInvalidInput, "prompt must be a string");
                std::string strategy = "mhis";
                if (auto s = body.find("strategy"); s != body.end()) {
                  if (!s->is_string()) throw ApiError(ApiErrorCode::kInvalidInput, "strategy must be a string");
                  strategy = s->get<std::string>();
                }
                send_json(res, 201, session_record_to_json(service.create_session(prompt->get<std::string>(), strategy)));
              }));

  server.Get("/v1/sessions", guarded([&service](const httplib::Request&, httplib::Response& res) {
               json list = json::array();
               for (auto& s : service.list_sessions()) list.push_back(std::move(s));
               send_json(res, 200, json{{"sessions", list}});
             }));

  server.Get(R"(/v1/sessions/([A-Za-z0-9]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, session_record_to_json(service.get_session(req.matches[1])));
             }));

  server.Get(R"(/v1/sessions/([A-Za-z0-9]+)/graph)",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, graph_to_json(service.get_session(req.matches[1]).state.graph));
             }));

  server.Get(R"(/v1/sessions/([A-Za-z0-9]+)/question)",
             guarded([&service](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               const Action a = service.next_question(id);
               send_json(res, 200, api_action_to_json(a, service.pending_question_id(id)));
             }));

  server.Post(R"(/v1/sessions/([A-Za-z0-9]+)/answer)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                auto answer = body.find("answer");
                if (answer == body.end() || !answer->is_string())
                  throw ApiError(ApiErrorCode::kInvalidInput, "answer must be a string");
                std::optional<int> qid;
                if (auto q = body.find("question_id"); q != body.end() && !q->is_null()) {
                  if (!q->is_number_integer()) throw ApiError(ApiErrorCode::kInvalidInput, "question_id must be an integer");
                  qid = q->get<int>();
                }
                send_json(res, 200,
                          session_record_to_json(service.submit_answer(req.matches[1], answer->get<std::string>(), qid)));
              }));

  server.Post(R"(/v1/sessions/([A-Za-z0-9]+)/edits)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                auto edits = body.find("edits");
                if (edits == body.end() || !edits->is_array())
                  throw ApiError(ApiErrorCode::kInvalidInput, "edits must be an array");
                std::vector<GraphEdit> parsed;
                for (std::size_t i = 0; i < edits->size(); ++i) {
                  try {
                    parsed.push_back(edit_from_json((*edits)[i], "/edits/" + std::to_string(i)));
                  } catch (const SchemaError& e) {
                    throw ApiError(ApiErrorCode::kInvalidInput, "edits[" + std::to_string(i) + "]: " + e.what());
                  }
                }
                send_json(res, 200, session_record_to_json(service.submit_edits(req.matches[1], parsed)));
              }));

  server.Post(R"(/v1/sessions/([A-Za-z0-9]+)/generate)",
              guarded([&service](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                int n = 1;
                if (auto it = body.find("n_seeds"); it != body.end()) {
                  if (!it->is_number_integer()) throw ApiError(ApiErrorCode::kInvalidInput, "n_seeds must be an integer");
                  n = it->get<int>();
                }
                const GenerateResult g = service.generate(req.matches[1], n);
                json images = json::array();
                for (const auto& a : g.images) {
                  json doc = image_to_json(a);
                  if (auto s = g.mean_scores.find(a.id); s != g.mean_scores.end()) doc["score"] = s->second;
                  images.push_back(std::move(doc));
                }
                send_json(res, 200,
                          json{{"images", images},
                               {"ranked", !g.mean_scores.empty()},
                               {"questions", g.questions},
                               {"blocked_seeds", g.blocked_seeds}});
              }));
}

}  // namespace pt2i
