#include "pt2i/templates.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "pt2i/errors.hpp"

namespace pt2i {

std::string_view to_string(TemplateName name) {
  switch (name) {
    case TemplateName::kEntity: return "entity";
    case TemplateName::kAttribute: return "attribute";
    case TemplateName::kRelation: return "relation";
    case TemplateName::kVerbalize: return "verbalize";
    case TemplateName::kMerge: return "merge";
    case TemplateName::kAicqBaseFirst: return "aicq_base_first";
    case TemplateName::kAicqBaseHistory: return "aicq_base_history";
    case TemplateName::kAicqBelief: return "aicq_belief";
    case TemplateName::kHsaQuestion: return "hsa_question";
    case TemplateName::kQaSummarize: return "qa_summarize";
    case TemplateName::kSimulatedUser: return "simulated_user";
  }
  return "unknown";
}

const std::set<std::string>& expected_placeholders(TemplateName name) {
  static const std::map<TemplateName, std::set<std::string>> kExpected = {
      {TemplateName::kEntity, {"user_prompt"}},
      {TemplateName::kAttribute, {"user_prompt", "entity_name", "existing_entities"}},
      {TemplateName::kRelation, {"user_prompt", "entity_names"}},
      {TemplateName::kVerbalize, {"question", "answer"}},
      {TemplateName::kMerge, {"prompt", "additional_info"}},
      {TemplateName::kAicqBaseFirst, {"original_prompt"}},
      {TemplateName::kAicqBaseHistory, {"chat_history"}},
      {TemplateName::kAicqBelief, {"user_prompt", "belief", "conversation"}},
      {TemplateName::kHsaQuestion, {"entity", "attribute", "candidates", "entity_type"}},
      {TemplateName::kQaSummarize, {"caption"}},
      {TemplateName::kSimulatedUser, {"ground_truth_prompt", "ground_truth_belief", "conversation", "question"}},
  };
  return kExpected.at(name);
}

namespace {

bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Calls on_text for literal runs and on_field for placeholders.
template <class Text, class Field>
void scan(const std::string& s, Text on_text, Field on_field) {
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '{' && i + 1 < s.size() && s[i + 1] == '{') {
      on_text("{");
      i += 2;
    } else if (c == '}' && i + 1 < s.size() && s[i + 1] == '}') {
      on_text("}");
      i += 2;
    } else if (c == '{') {
      std::size_t j = i + 1;
      while (j < s.size() && ident_char(s[j])) ++j;
      if (j > i + 1 && j < s.size() && s[j] == '}') {
        on_field(s.substr(i + 1, j - i - 1));
        i = j + 1;
      } else {
        on_text("{");
        ++i;
      }
    } else {
      const std::size_t next = s.find_first_of("{}", i + 1);
      const std::size_t end = next == std::string::npos ? s.size() : next;
      on_text(std::string_view(s).substr(i, end - i));
      i = end;
    }
  }
}

}  // namespace

PromptTemplate::PromptTemplate(std::string name, std::string text) : name_(std::move(name)), text_(std::move(text)) {
  scan(text_, [](std::string_view) {}, [&](const std::string& f) { placeholders_.insert(f); });
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  for (const auto& [k, v] : values)
    if (!placeholders_.contains(k)) throw PreconditionError("template '" + name_ + "' has no placeholder {" + k + "}");
  std::string out;
  out.reserve(text_.size() + 256);
  scan(text_, [&](std::string_view t) { out += t; },
       [&](const std::string& f) {
         auto it = values.find(f);
         if (it == values.end()) throw PreconditionError("template '" + name_ + "' needs a value for {" + f + "}");
         out += it->second;
       });
  return out;
}

TemplateLibrary TemplateLibrary::load(const std::filesystem::path& dir) {
  TemplateLibrary lib;
  for (TemplateName n : kAllTemplates) {
    const auto path = dir / (std::string(to_string(n)) + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("missing template " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    lib.set(n, PromptTemplate(std::string(to_string(n)), buf.str()));
  }
  return lib;
}

const PromptTemplate& TemplateLibrary::get(TemplateName name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw ConfigError("template '" + std::string(to_string(name)) + "' is not loaded");
  return it->second;
}

void TemplateLibrary::set(TemplateName name, PromptTemplate t) {
  if (t.placeholders() != expected_placeholders(name)) {
    std::string got;
    for (const auto& p : t.placeholders()) got += " {" + p + "}";
    throw ConfigError("template '" + std::string(to_string(name)) + "' has placeholders" +
                      (got.empty() ? " (none)" : got) + ", which do not match its parameters");
  }
  templates_[name] = std::move(t);
}

}  // namespace pt2i
