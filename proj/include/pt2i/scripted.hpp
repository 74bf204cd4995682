#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "pt2i/backends.hpp"

namespace pt2i {

// Rules file format. One record per rule:
//
//   === <name>
//   # comment
//   matcher: <regex>        (may repeat; lines are concatenated)
//   response:
//   <body, up to the next line starting with "===">
//
// A record named "default" has no matcher and supplies the fallback reply.
// Matchers are Perl-syntax, case-insensitive, "." matches newlines, and are
// searched anywhere in the request. The first matching rule wins.
//
// Bodies may use {%1%} / {%focus%} for capture groups and
// {%if RE%} ... {%elif RE%} ... {%else%} ... {%end%} for branching. Branch
// conditions are searched in the "focus" group when the matcher defines one,
// otherwise in the whole request.
struct ScriptedRule {
  std::string name;
  std::string matcher;
  std::string response;
};

class ScriptedRuleSet {
 public:
  ScriptedRuleSet();
  ~ScriptedRuleSet();
  ScriptedRuleSet(ScriptedRuleSet&&) noexcept;
  ScriptedRuleSet& operator=(ScriptedRuleSet&&) noexcept;

  /// Throws ConfigError on malformed records or regexes.
  static ScriptedRuleSet parse(std::string_view text, const std::string& origin = "<rules>");
  static ScriptedRuleSet load(const std::filesystem::path& path);

  /// Appends rules from another text (later files have lower priority).
  void append(std::string_view text, const std::string& origin = "<rules>");

  std::string respond(std::string_view request) const;
  /// Name of the rule that would answer, or "default".
  std::string match_name(std::string_view request) const;

  const std::vector<ScriptedRule>& rules() const;
  const std::string& default_response() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class ScriptedLanguageModel final : public LanguageModel {
 public:
  explicit ScriptedLanguageModel(std::shared_ptr<const ScriptedRuleSet> rules);
  std::string id() const override { return "scripted"; }

 protected:
  CompletionResponse do_complete(const CompletionRequest& req) override;

 private:
  std::shared_ptr<const ScriptedRuleSet> rules_;
};

/// Wraps a callback; handy for tests that need to count or fail requests.
class CallbackLanguageModel final : public LanguageModel {
 public:
  using Fn = std::function<std::string(const CompletionRequest&)>;
  explicit CallbackLanguageModel(Fn fn, std::string id = "callback") : fn_(std::move(fn)), id_(std::move(id)) {}
  std::string id() const override { return id_; }

 protected:
  CompletionResponse do_complete(const CompletionRequest& req) override { return {fn_(req), id_}; }

 private:
  Fn fn_;
  std::string id_;
};

/// Signed feature hashing over lower-cased words, L2-normalized.
class HashingEmbedder final : public TextEmbedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256) : dim_(dimension) {}
  std::string id() const override { return "hashing-" + std::to_string(dim_); }

 protected:
  EmbeddingVector do_embed(const std::string& text) override;

 private:
  std::size_t dim_;
};

/// Stub generator. The "rendered" prompt keeps the first sentence and drops
/// each later sentence with probability 1/4, decided by hashing the seed and
/// the sentence index, which stands in for a T2I model ignoring details.
class ScriptedImageGenerator final : public ImageGenerator {
 public:
  std::string id() const override { return "scripted-images"; }

 protected:
  ImageArtifact do_generate(const std::string& prompt, std::int64_t seed) override;
};

/// 1.0 iff the question's key phrase occurs in the image's prompt_used.
/// The key phrase is the double-quoted part of the question when there is
/// one, otherwise the question minus yes/no framing.
class KeyPhraseScorer final : public ImageScorer {
 public:
  std::string id() const override { return "key-phrase"; }
  static std::string key_phrase(std::string_view question);

 protected:
  double do_score(const ImageArtifact& image, const std::string& question) override;
};

std::vector<std::string> split_sentences(std::string_view text);

}  // namespace pt2i
