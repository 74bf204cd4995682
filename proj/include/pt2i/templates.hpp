#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace pt2i {

enum class TemplateName {
  kEntity,
  kAttribute,
  kRelation,
  kVerbalize,
  kMerge,
  kAicqBaseFirst,
  kAicqBaseHistory,
  kAicqBelief,
  kHsaQuestion,
  kQaSummarize,
  kSimulatedUser,
};

inline constexpr std::array kAllTemplates = {
    TemplateName::kEntity,        TemplateName::kAttribute,     TemplateName::kRelation,
    TemplateName::kVerbalize,     TemplateName::kMerge,         TemplateName::kAicqBaseFirst,
    TemplateName::kAicqBaseHistory, TemplateName::kAicqBelief,  TemplateName::kHsaQuestion,
    TemplateName::kQaSummarize,   TemplateName::kSimulatedUser,
};

/// File stem, e.g. "aicq_base_first" -> templates/aicq_base_first.txt.
std::string_view to_string(TemplateName name);
const std::set<std::string>& expected_placeholders(TemplateName name);

// Placeholders are {identifier}; "{{" and "}}" are literal braces. Anything
// else in braces is kept as-is.
class PromptTemplate {
 public:
  PromptTemplate() = default;
  PromptTemplate(std::string name, std::string text);

  const std::string& name() const { return name_; }
  const std::string& text() const { return text_; }
  const std::set<std::string>& placeholders() const { return placeholders_; }

  /// Throws PreconditionError if a placeholder has no value or a value has no placeholder.
  std::string render(const std::map<std::string, std::string>& values) const;

 private:
  std::string name_;
  std::string text_;
  std::set<std::string> placeholders_;
};

class TemplateLibrary {
 public:
  /// Loads every template from `dir`; throws ConfigError when a file is
  /// missing or its placeholders differ from the expected set.
  static TemplateLibrary load(const std::filesystem::path& dir);

  const PromptTemplate& get(TemplateName name) const;
  std::string render(TemplateName name, const std::map<std::string, std::string>& values) const {
    return get(name).render(values);
  }

  void set(TemplateName name, PromptTemplate t);

 private:
  std::map<TemplateName, PromptTemplate> templates_;
};

}  // namespace pt2i
