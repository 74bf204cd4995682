#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pt2i/belief_graph.hpp"
#include "pt2i/graph_io.hpp"
#include "pt2i/parsing.hpp"

namespace pt2i {

struct EvalCase {
  std::string case_id;
  std::optional<std::string> image_ref;  // opaque path or URL, never decoded
  std::string starting_prompt;
  std::string ground_truth_caption;
  BeliefGraph ground_truth_graph;
  bool graph_derived = false;  // built from the caption at load time

  bool operator==(const EvalCase&) const = default;
};

struct Manifest {
  std::string name;
  std::string source;
  std::vector<EvalCase> cases;

  const EvalCase* find(const std::string& case_id) const;
  bool operator==(const Manifest&) const = default;
};

// Manifest document:
//   {"name", "source", "cases": [{
//      "case_id", "image_ref"?,
//      "starting_prompt" | "captions": [...],       (captions: the shortest is used)
//      "ground_truth_caption",
//      "ground_truth_graph": {...} | "ground_truth_graph_file": "relative/path.json",
//      "ground_truth_graph_derived"?: bool }]}
// A case without a graph has one built from its caption by `parser`; without
// a parser that is a SchemaError. Every error names the case_id.
Manifest manifest_from_json(const json& doc, const std::filesystem::path& base_dir,
                            const BeliefParser* parser = nullptr);
Manifest load_manifest(const std::filesystem::path& path, const BeliefParser* parser = nullptr);

/// Graphs are written inline.
json manifest_to_json(const Manifest& m);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

/// Shortest caption by character count; the first one on ties.
std::string shortest_caption(const std::vector<std::string>& captions);

/// Summarizes a long caption into a starting prompt. A summary that is not
/// shorter than the caption is retried once, then rejected with ParseFailure.
std::string derive_starting_prompt(LanguageModel& llm, const TemplateLibrary& templates, const std::string& caption);

}  // namespace pt2i
