#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "pt2i/backends.hpp"
#include "pt2i/belief_graph.hpp"
#include "pt2i/graph_io.hpp"
#include "pt2i/templates.hpp"

namespace pt2i {

struct RawParseResult {
  std::string source_text;
  json extracted_document;
  std::vector<std::string> repair_notes;
};

/// Locates the outermost bracketed JSON document in model output. Strips code
/// fences and surrounding prose, removes trailing commas and inserts commas
/// missing between adjacent objects. Each repair is recorded in
/// repair_notes. Throws NoDocumentFound.
RawParseResult extract_document(std::string_view text);

struct ParserOptions {
  /// Extra requests made after a schema failure, with the error appended.
  int reprompt_attempts = 1;
};

// Converters from extracted documents. Lenient where the fix is mechanical
// (clamping, normalizing, dropping duplicates), strict otherwise: they throw
// SchemaError, which triggers a re-prompt.
std::vector<Entity> entities_from_document(const json& doc, std::vector<std::string>& notes);
std::vector<Attribute> attributes_from_document(const json& doc, const std::vector<std::string>& other_entities,
                                                std::vector<std::string>& notes);
std::vector<Relation> relations_from_document(const json& doc, const std::vector<Entity>& entities,
                                              std::vector<std::string>& notes);

/// Stateless apart from its handles; safe to share between threads.
class BeliefParser {
 public:
  BeliefParser(std::shared_ptr<LanguageModel> llm, std::shared_ptr<const TemplateLibrary> templates,
               ParserOptions options = {});

  std::vector<Entity> parse_entities(const std::string& prompt, std::vector<std::string>* notes = nullptr) const;
  std::vector<Attribute> parse_attributes(const std::string& prompt, const Entity& entity,
                                          const std::vector<std::string>& other_entities,
                                          std::vector<std::string>* notes = nullptr) const;
  /// Returns an empty list without calling the model for fewer than two entities.
  std::vector<Relation> parse_relations(const std::string& prompt, const std::vector<Entity>& entities,
                                        std::vector<std::string>* notes = nullptr) const;

  /// Entities, then attributes per entity in descending importance, then
  /// relations among non-background entities that can appear. The result
  /// always passes validate(). Throws ParseFailure.
  BeliefGraph build_belief_graph(const std::string& prompt, std::vector<std::string>* notes = nullptr) const;

 private:
  template <class T, class Convert>
  T request(const std::string& stage, const std::string& prompt_text, Convert convert,
            std::vector<std::string>* notes) const;

  std::shared_ptr<LanguageModel> llm_;
  std::shared_ptr<const TemplateLibrary> templates_;
  ParserOptions options_;
};

}  // namespace pt2i
