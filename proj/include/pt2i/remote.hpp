#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "pt2i/backends.hpp"

namespace pt2i {

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{8000};
  /// Replaced in tests so retries do not actually wait.
  std::function<void(std::chrono::milliseconds)> sleep;

  std::chrono::milliseconds backoff_for(int attempt) const;
};

// Endpoints speak the OpenAI-compatible JSON protocol:
//   POST {base}/chat/completions, {base}/embeddings, {base}/images/generations
// The optional scorer is POST {scorer_url}/score {"image_ref", "question"} -> {"score"}.
struct RemoteConfig {
  std::string base_url;
  std::string api_key;
  std::string llm_model = "gpt-4o";
  std::string embedding_model = "text-embedding-3-small";
  std::string image_model = "dall-e-3";
  std::string scorer_url;  // empty: no scorer
  std::string image_dir;   // where base64 image payloads are written
  std::chrono::seconds timeout{60};
  std::size_t context_budget = kDefaultContextBudget;
  RetryPolicy retry;

  // Environment:
  //   PT2I_REMOTE_BASE_URL      required
  //   PT2I_REMOTE_API_KEY_VAR   name of the variable holding the key (default PT2I_REMOTE_API_KEY)
  //   PT2I_LLM_MODEL, PT2I_EMBEDDING_MODEL, PT2I_IMAGE_MODEL, PT2I_SCORER_URL, PT2I_IMAGE_DIR
  //   PT2I_TIMEOUT_S, PT2I_MAX_ATTEMPTS, PT2I_CONTEXT_BUDGET
  // An optional JSON config file supplies the same keys in lower case without
  // the PT2I_ prefix; environment values win. Throws ConfigError when the
  // base URL is missing. A missing key is allowed for local providers.
  static RemoteConfig from_env(const std::optional<std::string>& config_file = std::nullopt);
};

/// Sends one JSON request with retries and maps failures to typed errors.
class JsonHttpClient {
 public:
  JsonHttpClient(std::string base_url, std::string api_key, std::chrono::seconds timeout, RetryPolicy retry);
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;

 private:
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::string api_key_;
  std::chrono::seconds timeout_;
  RetryPolicy retry_;
};

class RemoteLanguageModel final : public LanguageModel {
 public:
  explicit RemoteLanguageModel(const RemoteConfig& cfg);
  std::string id() const override { return "remote:" + model_; }

 protected:
  CompletionResponse do_complete(const CompletionRequest& req) override;

 private:
  JsonHttpClient client_;
  std::string model_;
};

class RemoteEmbedder final : public TextEmbedder {
 public:
  explicit RemoteEmbedder(const RemoteConfig& cfg);
  std::string id() const override { return "remote:" + model_; }

 protected:
  EmbeddingVector do_embed(const std::string& text) override;

 private:
  JsonHttpClient client_;
  std::string model_;
  mutable std::mutex mu_;
  std::optional<std::size_t> dimension_;
};

class RemoteImageGenerator final : public ImageGenerator {
 public:
  explicit RemoteImageGenerator(const RemoteConfig& cfg);
  std::string id() const override { return "remote:" + model_; }

 protected:
  ImageArtifact do_generate(const std::string& prompt, std::int64_t seed) override;

 private:
  JsonHttpClient client_;
  std::string model_;
  std::string image_dir_;
};

class RemoteImageScorer final : public ImageScorer {
 public:
  explicit RemoteImageScorer(const RemoteConfig& cfg);
  std::optional<double> image_similarity(const ImageArtifact& image, const std::string& reference_ref) override;
  std::string id() const override { return "remote-scorer"; }

 protected:
  double do_score(const ImageArtifact& image, const std::string& question) override;

 private:
  JsonHttpClient client_;
};

}  // namespace pt2i
