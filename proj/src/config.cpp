#include "pt2i/config.hpp"

#include "pt2i/scripted.hpp"

namespace pt2i {

std::filesystem::path default_templates_dir() { return std::filesystem::path(PT2I_SOURCE_DIR) / "templates"; }

std::filesystem::path default_rules_file() {
  return std::filesystem::path(PT2I_SOURCE_DIR) / "fixtures" / "scripted_rules.txt";
}

Backends make_scripted_backends(const std::filesystem::path& rules_file) {
  auto rules = std::make_shared<const ScriptedRuleSet>(ScriptedRuleSet::load(rules_file));
  Backends b;
  b.llm = std::make_shared<ScriptedLanguageModel>(rules);
  b.embedder = std::make_shared<HashingEmbedder>();
  b.images = std::make_shared<ScriptedImageGenerator>();
  b.scorer = std::make_shared<KeyPhraseScorer>();
  return b;
}

Backends make_remote_backends(const RemoteConfig& cfg) {
  Backends b;
  b.llm = std::make_shared<RemoteLanguageModel>(cfg);
  b.embedder = std::make_shared<RemoteEmbedder>(cfg);
  b.images = std::make_shared<RemoteImageGenerator>(cfg);
  if (!cfg.scorer_url.empty()) b.scorer = std::make_shared<RemoteImageScorer>(cfg);
  return b;
}

std::shared_ptr<const TemplateLibrary> load_templates(const std::filesystem::path& dir) {
  return std::make_shared<const TemplateLibrary>(TemplateLibrary::load(dir));
}

}  // namespace pt2i
