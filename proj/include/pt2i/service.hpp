#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pt2i/agent.hpp"
#include "pt2i/errors.hpp"
#include "pt2i/graph_io.hpp"

namespace httplib {
class Server;
}

namespace pt2i {

enum class ApiErrorCode { kNotFound, kInvalidInput, kBackendUnavailable, kConflict };

std::string_view to_string(ApiErrorCode c);
int http_status(ApiErrorCode c);

class ApiError : public Error {
 public:
  ApiError(ApiErrorCode code, const std::string& message) : Error(message), code_(code) {}
  ApiErrorCode code() const noexcept { return code_; }

 private:
  ApiErrorCode code_;
};

struct SessionRecord {
  std::string session_id;
  SessionState state;
  std::vector<ImageArtifact> images;
  std::string created_at;  // UTC, ISO 8601
  std::string updated_at;
  std::optional<Action> pending;  // last action handed out and not yet answered

  bool operator==(const SessionRecord&) const = default;
};

json image_to_json(const ImageArtifact& a);
ImageArtifact image_from_json(const json& doc, const std::string& path = "");

/// API document. With `include_pending` the pending action is written too,
/// as the on-disk form does.
json session_record_to_json(const SessionRecord& r, bool include_pending = false);
SessionRecord session_record_from_json(const json& doc);

/// {"type": "ask_question", "question_id": n, ...} | {"type": "generate_image", "prompt": ...}
json api_action_to_json(const Action& a, int question_id);

struct ServiceConfig {
  std::filesystem::path data_dir = "data";
  int max_seeds = 10;
  /// Yes/no questions per ranking, taken from the earliest answered turns.
  int ranking_questions = 5;
};

struct GenerateResult {
  std::vector<ImageArtifact> images;         // ranked when a scorer is configured
  std::vector<std::int64_t> blocked_seeds;   // refused by the backend content filter
  std::vector<std::string> questions;        // used for ranking
  std::map<std::string, double> mean_scores;
};

// Transport-independent session operations. Operations on one session are
// serialized by a per-session mutex; different sessions run concurrently.
// Every failure is an ApiError.
class SessionService {
 public:
  SessionService(Agent agent, ServiceConfig config);
  ~SessionService();

  SessionRecord create_session(const std::string& prompt, const std::string& strategy);
  SessionRecord get_session(const std::string& id);
  std::vector<json> list_sessions();

  /// The pending question, chosen on first call and repeated until answered.
  Action next_question(const std::string& id);
  /// Question ids count turns: the pending question of a session with k
  /// turns has id k + 1.
  int pending_question_id(const std::string& id);

  SessionRecord submit_answer(const std::string& id, const std::string& answer,
                              std::optional<int> question_id = std::nullopt);
  SessionRecord submit_edits(const std::string& id, const std::vector<GraphEdit>& edits);
  GenerateResult generate(const std::string& id, int n_seeds);

  /// Yes/no questions built from the first answered turns.
  static std::vector<std::string> ranking_questions(const SessionState& state, int limit);

  const ServiceConfig& config() const { return config_; }

 private:
  struct Entry;
  std::shared_ptr<Entry> find(const std::string& id);
  void persist(const SessionRecord& r) const;
  std::filesystem::path path_for(const std::string& id) const;
  std::string new_id();

  Agent agent_;
  ServiceConfig config_;
  std::mutex map_mu_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

/// Registers /health and the /v1 routes on `server`.
void mount_routes(httplib::Server& server, SessionService& service);

}  // namespace pt2i
