#include "pt2i/remote.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>

#include "pt2i/errors.hpp"
#include "pt2i/text.hpp"

namespace pt2i {

using nlohmann::json;

std::chrono::milliseconds RetryPolicy::backoff_for(int attempt) const {
  auto d = initial_backoff;
  for (int i = 1; i < attempt && d < max_backoff; ++i) d *= 2;
  return std::min(d, max_backoff);
}

namespace {

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

long parse_positive(const std::string& s, const char* what) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0' || v <= 0) throw ConfigError(std::string(what) + " must be a positive integer");
  return v;
}

std::string base64_decode(const std::string& in) {
  std::string out((in.size() / 4 + 1) * 3, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(in.data()), static_cast<int>(in.size()));
  if (n < 0) throw MalformedResponseError("image payload is not valid base64");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock counts padding bytes as output.
  for (auto it = in.rbegin(); it != in.rend() && *it == '='; ++it) --len;
  out.resize(len);
  return out;
}

bool looks_blocked(const std::string& body) {
  const std::string b = to_lower(body);
  return b.find("content_policy") != std::string::npos || b.find("content_filter") != std::string::npos ||
         b.find("safety") != std::string::npos;
}

}  // namespace

RemoteConfig RemoteConfig::from_env(const std::optional<std::string>& config_file) {
  json file = json::object();
  if (config_file) {
    std::ifstream in(*config_file);
    if (!in) throw ConfigError("cannot read backend config " + *config_file);
    try {
      file = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("backend config " + *config_file + ": " + e.what());
    }
    if (!file.is_object()) throw ConfigError("backend config must be a JSON object");
  }
  auto get = [&](const char* env_name, const char* file_key) -> std::optional<std::string> {
    if (auto v = env(env_name)) return v;
    if (auto it = file.find(file_key); it != file.end()) {
      if (it->is_string()) return it->get<std::string>();
      if (it->is_number_integer()) return std::to_string(it->get<long>());
      throw ConfigError(std::string("backend config key ") + file_key + " has the wrong type");
    }
    return std::nullopt;
  };

  RemoteConfig cfg;
  auto base = get("PT2I_REMOTE_BASE_URL", "remote_base_url");
  if (!base) throw ConfigError("remote backend selected but PT2I_REMOTE_BASE_URL is not set");
  cfg.base_url = *base;
  const std::string key_var = get("PT2I_REMOTE_API_KEY_VAR", "remote_api_key_var").value_or("PT2I_REMOTE_API_KEY");
  if (auto key = env(key_var.c_str())) cfg.api_key = *key;
  if (auto v = get("PT2I_LLM_MODEL", "llm_model")) cfg.llm_model = *v;
  if (auto v = get("PT2I_EMBEDDING_MODEL", "embedding_model")) cfg.embedding_model = *v;
  if (auto v = get("PT2I_IMAGE_MODEL", "image_model")) cfg.image_model = *v;
  if (auto v = get("PT2I_SCORER_URL", "scorer_url")) cfg.scorer_url = *v;
  if (auto v = get("PT2I_IMAGE_DIR", "image_dir")) cfg.image_dir = *v;
  if (auto v = get("PT2I_TIMEOUT_S", "timeout_s")) cfg.timeout = std::chrono::seconds(parse_positive(*v, "timeout"));
  if (auto v = get("PT2I_MAX_ATTEMPTS", "max_attempts"))
    cfg.retry.max_attempts = static_cast<int>(parse_positive(*v, "max_attempts"));
  if (auto v = get("PT2I_CONTEXT_BUDGET", "context_budget"))
    cfg.context_budget = static_cast<std::size_t>(parse_positive(*v, "context_budget"));
  return cfg;
}

// ---------------------------------------------------------------------------

JsonHttpClient::JsonHttpClient(std::string base_url, std::string api_key, std::chrono::seconds timeout,
                               RetryPolicy retry)
    : api_key_(std::move(api_key)), timeout_(timeout), retry_(std::move(retry)) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base URL needs a scheme: " + base_url);
  const std::string scheme = base_url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported URL scheme: " + scheme);
  const auto path_start = base_url.find('/', scheme_end + 3);
  scheme_host_port_ = base_url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : base_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (retry_.max_attempts < 1) retry_.max_attempts = 1;
  if (!retry_.sleep) retry_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

json JsonHttpClient::post(const std::string& path, const json& body) const {
  const std::string full_path = path_prefix_ + path;
  const std::string payload = body.dump();

  for (int attempt = 1;; ++attempt) {
    const bool last = attempt >= retry_.max_attempts;
    httplib::Client cli(scheme_host_port_);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    cli.set_write_timeout(timeout_);
    if (!api_key_.empty()) cli.set_bearer_token_auth(api_key_);

    auto res = cli.Post(full_path, payload, "application/json");
    std::string failure;
    enum { kTimeout, kRate, kUnavailable } kind = kUnavailable;
    if (!res) {
      const auto err = res.error();
      kind = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) ? kTimeout : kUnavailable;
      failure = scheme_host_port_ + full_path + ": " + httplib::to_string(err);
    } else {
      const int status = res->status;
      if (status >= 200 && status < 300) {
        try {
          return json::parse(res->body);
        } catch (const json::parse_error& e) {
          throw MalformedResponseError(full_path + ": response is not JSON: " + e.what());
        }
      }
      failure = full_path + ": HTTP " + std::to_string(status) + ": " + res->body.substr(0, 300);
      if (status == 408 || status == 504) {
        kind = kTimeout;
      } else if (status == 429) {
        kind = kRate;
      } else if (status >= 500) {
        kind = kUnavailable;
      } else {
        if (looks_blocked(res->body)) throw ContentBlockedError(failure);
        throw BackendError(failure);
      }
    }
    if (last) {
      const std::string msg = failure + " (after " + std::to_string(attempt) + " attempts)";
      switch (kind) {
        case kTimeout: throw TimeoutError(msg);
        case kRate: throw RateLimitedError(msg);
        case kUnavailable: throw BackendUnavailableError(msg);
      }
    }
    retry_.sleep(retry_.backoff_for(attempt));
  }
}

// ---------------------------------------------------------------------------

RemoteLanguageModel::RemoteLanguageModel(const RemoteConfig& cfg)
    : client_(cfg.base_url, cfg.api_key, cfg.timeout, cfg.retry), model_(cfg.llm_model) {
  set_context_budget(cfg.context_budget);
}

CompletionResponse RemoteLanguageModel::do_complete(const CompletionRequest& req) {
  json body = {{"model", model_},
               {"messages", json::array({{{"role", "user"}, {"content", req.prompt_text}}})},
               {"temperature", req.temperature},
               {"max_tokens", req.max_output_tokens}};
  const json res = client_.post("/chat/completions", body);
  try {
    const json& choice = res.at("choices").at(0);
    if (choice.value("finish_reason", "") == "content_filter") throw ContentBlockedError("completion was filtered");
    return {choice.at("message").at("content").get<std::string>(), id()};
  } catch (const json::exception& e) {
    throw MalformedResponseError(std::string("chat completion response: ") + e.what());
  }
}

RemoteEmbedder::RemoteEmbedder(const RemoteConfig& cfg)
    : client_(cfg.base_url, cfg.api_key, cfg.timeout, cfg.retry), model_(cfg.embedding_model) {}

EmbeddingVector RemoteEmbedder::do_embed(const std::string& text) {
  const json res = client_.post("/embeddings", {{"model", model_}, {"input", text}});
  EmbeddingVector v;
  try {
    v.values = res.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw MalformedResponseError(std::string("embedding response: ") + e.what());
  }
  if (v.values.empty()) throw MalformedResponseError("embedding response is empty");
  std::lock_guard lock(mu_);
  if (!dimension_) dimension_ = v.dimension();
  if (*dimension_ != v.dimension()) throw MalformedResponseError("embedding dimension changed between calls");
  return v;
}

RemoteImageGenerator::RemoteImageGenerator(const RemoteConfig& cfg)
    : client_(cfg.base_url, cfg.api_key, cfg.timeout, cfg.retry), model_(cfg.image_model), image_dir_(cfg.image_dir) {}

ImageArtifact RemoteImageGenerator::do_generate(const std::string& prompt, std::int64_t seed) {
  json body = {{"model", model_}, {"prompt", prompt}, {"n", 1}, {"seed", seed}};
  const json res = client_.post("/images/generations", body);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(fnv1a64(prompt + '\x1f' + std::to_string(seed))));
  ImageArtifact a;
  a.id = std::string("img-") + hex;
  a.prompt_used = prompt;
  a.seed = seed;
  try {
    const json& item = res.at("data").at(0);
    if (item.contains("url")) {
      a.content_ref = item.at("url").get<std::string>();
    } else {
      const std::string bytes = base64_decode(item.at("b64_json").get<std::string>());
      std::filesystem::path dir = image_dir_.empty() ? std::filesystem::temp_directory_path() / "pt2i-images"
                                                     : std::filesystem::path(image_dir_);
      std::filesystem::create_directories(dir);
      const auto file = dir / (a.id + ".png");
      std::ofstream out(file, std::ios::binary);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw BackendError("cannot write image to " + file.string());
      a.content_ref = file.string();
    }
  } catch (const json::exception& e) {
    throw MalformedResponseError(std::string("image response: ") + e.what());
  }
  return a;
}

RemoteImageScorer::RemoteImageScorer(const RemoteConfig& cfg)
    : client_(cfg.scorer_url, "", cfg.timeout, cfg.retry) {}

double RemoteImageScorer::do_score(const ImageArtifact& image, const std::string& question) {
  const json res = client_.post("/score", {{"image_ref", image.content_ref}, {"question", question}});
  try {
    return res.at("score").get<double>();
  } catch (const json::exception& e) {
    throw MalformedResponseError(std::string("score response: ") + e.what());
  }
}

std::optional<double> RemoteImageScorer::image_similarity(const ImageArtifact& image,
                                                          const std::string& reference_ref) {
  const json res = client_.post("/similarity", {{"image_ref", image.content_ref}, {"reference_ref", reference_ref}});
  try {
    return res.at("similarity").get<double>();
  } catch (const json::exception& e) {
    throw MalformedResponseError(std::string("similarity response: ") + e.what());
  }
}

}  // namespace pt2i
