#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pt2i {

struct CompletionRequest {
  std::string prompt_text;
  double temperature = 1.0;
  int max_output_tokens = 8192;
};

struct CompletionResponse {
  std::string text;
  std::string backend_id;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::size_t dimension() const noexcept { return values.size(); }
};

double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct ImageArtifact {
  std::string id;
  std::string prompt_used;
  std::int64_t seed = 0;
  std::string content_ref;

  bool operator==(const ImageArtifact&) const = default;
};

// ~32K tokens at a conservative 3 characters per token.
inline constexpr std::size_t kDefaultContextBudget = 96000;

// The public entry points check preconditions and the context budget, then
// hand off to the do_* hooks. Implementations must be safe to call from
// several threads at once.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  CompletionResponse complete(const CompletionRequest& req);
  CompletionResponse complete(const std::string& prompt) { return complete(CompletionRequest{prompt}); }

  virtual std::string id() const = 0;
  void set_context_budget(std::size_t chars) { budget_ = chars; }
  std::size_t context_budget() const { return budget_; }

 protected:
  virtual CompletionResponse do_complete(const CompletionRequest& req) = 0;

 private:
  std::size_t budget_ = kDefaultContextBudget;
};

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  EmbeddingVector embed(const std::string& text);
  virtual std::string id() const = 0;

 protected:
  virtual EmbeddingVector do_embed(const std::string& text) = 0;
};

class ImageGenerator {
 public:
  virtual ~ImageGenerator() = default;
  ImageArtifact generate_image(const std::string& prompt, std::int64_t seed);
  virtual std::string id() const = 0;

 protected:
  virtual ImageArtifact do_generate(const std::string& prompt, std::int64_t seed) = 0;
};

class ImageScorer {
 public:
  virtual ~ImageScorer() = default;
  /// Probability in [0, 1] that the image answers `question` with yes.
  double score_image(const ImageArtifact& image, const std::string& question);
  /// Image-to-image similarity against a reference handle, when supported.
  virtual std::optional<double> image_similarity(const ImageArtifact& image, const std::string& reference_ref);
  virtual std::string id() const = 0;

 protected:
  virtual double do_score(const ImageArtifact& image, const std::string& question) = 0;
};

struct Backends {
  std::shared_ptr<LanguageModel> llm;
  std::shared_ptr<TextEmbedder> embedder;
  std::shared_ptr<ImageGenerator> images;
  std::shared_ptr<ImageScorer> scorer;  // optional
};

}  // namespace pt2i
