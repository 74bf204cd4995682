#include "pt2i/backends.hpp"

#include <algorithm>
#include <cmath>

#include "pt2i/errors.hpp"
#include "pt2i/text.hpp"

namespace pt2i {

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) throw PreconditionError("embedding dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

CompletionResponse LanguageModel::complete(const CompletionRequest& req) {
  if (trim(req.prompt_text).empty()) throw PreconditionError("completion prompt is empty");
  if (req.temperature < 0.0) throw PreconditionError("temperature must be >= 0");
  if (req.max_output_tokens <= 0) throw PreconditionError("max_output_tokens must be positive");
  if (req.prompt_text.size() > budget_)
    throw ContextBudgetExceeded("prompt has " + std::to_string(req.prompt_text.size()) +
                                " characters, budget is " + std::to_string(budget_));
  return do_complete(req);
}

EmbeddingVector TextEmbedder::embed(const std::string& text) {
  if (trim(text).empty()) throw PreconditionError("cannot embed empty text");
  EmbeddingVector v = do_embed(text);
  for (double x : v.values)
    if (!std::isfinite(x)) throw MalformedResponseError("embedding has a non-finite entry");
  return v;
}

ImageArtifact ImageGenerator::generate_image(const std::string& prompt, std::int64_t seed) {
  if (trim(prompt).empty()) throw PreconditionError("image prompt is empty");
  return do_generate(prompt, seed);
}

double ImageScorer::score_image(const ImageArtifact& image, const std::string& question) {
  if (image.id.empty()) throw PreconditionError("image has no id");
  if (trim(question).empty()) throw PreconditionError("scoring question is empty");
  const double s = do_score(image, question);
  if (!std::isfinite(s)) throw MalformedResponseError("scorer returned a non-finite score");
  return std::clamp(s, 0.0, 1.0);
}

std::optional<double> ImageScorer::image_similarity(const ImageArtifact&, const std::string&) {
  return std::nullopt;
}

}  // namespace pt2i
