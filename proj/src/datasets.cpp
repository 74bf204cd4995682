#include "pt2i/datasets.hpp"

#include <fstream>
#include <set>

#include "pt2i/errors.hpp"
#include "pt2i/text.hpp"

namespace pt2i {

namespace fs = std::filesystem;

const EvalCase* Manifest::find(const std::string& case_id) const {
  for (const auto& c : cases)
    if (c.case_id == case_id) return &c;
  return nullptr;
}

namespace {

std::string require_string(const json& doc, const char* key, const std::string& path) {
  auto it = doc.find(key);
  if (it == doc.end()) throw SchemaError(path + "/" + key, "missing field");
  if (!it->is_string()) throw SchemaError(path + "/" + key, "expected a string");
  return it->get<std::string>();
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("", "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("", path.string() + ": " + e.what());
  }
}

EvalCase case_from_json(const json& doc, const fs::path& base_dir, const BeliefParser* parser,
                        const std::string& path) {
  if (!doc.is_object()) throw SchemaError(path, "expected an object");
  EvalCase c;
  c.case_id = require_string(doc, "case_id", path);
  if (trim(c.case_id).empty()) throw SchemaError(path + "/case_id", "empty case_id");
  try {
    if (auto it = doc.find("image_ref"); it != doc.end() && !it->is_null()) {
      if (!it->is_string()) throw SchemaError(path + "/image_ref", "expected a string");
      c.image_ref = it->get<std::string>();
    }
    if (doc.contains("starting_prompt")) {
      c.starting_prompt = require_string(doc, "starting_prompt", path);
    } else if (auto it = doc.find("captions"); it != doc.end()) {
      if (!it->is_array() || it->empty()) throw SchemaError(path + "/captions", "expected a non-empty array");
      std::vector<std::string> captions;
      for (const auto& cap : *it) {
        if (!cap.is_string()) throw SchemaError(path + "/captions", "expected strings");
        captions.push_back(cap.get<std::string>());
      }
      c.starting_prompt = shortest_caption(captions);
    } else {
      throw SchemaError(path + "/starting_prompt", "missing field");
    }
    c.ground_truth_caption = require_string(doc, "ground_truth_caption", path);
    if (trim(c.starting_prompt).empty()) throw SchemaError(path + "/starting_prompt", "empty");
    if (c.starting_prompt.size() >= c.ground_truth_caption.size())
      throw SchemaError(path + "/starting_prompt", "starting prompt must be shorter than the ground-truth caption");

    if (auto it = doc.find("ground_truth_graph"); it != doc.end()) {
      c.ground_truth_graph = graph_from_json(*it, path + "/ground_truth_graph");
      if (auto d = doc.find("ground_truth_graph_derived"); d != doc.end() && d->is_boolean())
        c.graph_derived = d->get<bool>();
    } else if (auto f = doc.find("ground_truth_graph_file"); f != doc.end()) {
      if (!f->is_string()) throw SchemaError(path + "/ground_truth_graph_file", "expected a string");
      fs::path file = base_dir / f->get<std::string>();
      c.ground_truth_graph = graph_from_json(read_json(file), file.string());
    } else {
      if (!parser) throw SchemaError(path + "/ground_truth_graph", "missing and no parser available to derive it");
      c.ground_truth_graph = parser->build_belief_graph(c.ground_truth_caption);
      c.graph_derived = true;
    }
    if (auto v = validate(c.ground_truth_graph); !v.empty())
      throw SchemaError(path + "/ground_truth_graph", "invalid graph: " + v.front().message);
  } catch (const SchemaError& e) {
    std::string message = e.what();
    if (!e.path().empty()) message = message.substr(e.path().size() + 2);
    throw SchemaError(e.path(), "case " + c.case_id + ": " + message);
  } catch (const ParseFailure& e) {
    throw SchemaError(path + "/ground_truth_graph", "case " + c.case_id + ": " + e.what());
  }
  return c;
}

}  // namespace

Manifest manifest_from_json(const json& doc, const fs::path& base_dir, const BeliefParser* parser) {
  if (!doc.is_object()) throw SchemaError("", "manifest must be an object");
  Manifest m;
  m.name = require_string(doc, "name", "");
  if (auto it = doc.find("source"); it != doc.end()) {
    if (!it->is_string()) throw SchemaError("/source", "expected a string");
    m.source = it->get<std::string>();
  }
  auto cases = doc.find("cases");
  if (cases == doc.end() || !cases->is_array()) throw SchemaError("/cases", "expected an array");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < cases->size(); ++i) {
    EvalCase c = case_from_json((*cases)[i], base_dir, parser, "/cases/" + std::to_string(i));
    if (!seen.insert(c.case_id).second)
      throw SchemaError("/cases/" + std::to_string(i) + "/case_id", "duplicate case_id '" + c.case_id + "'");
    m.cases.push_back(std::move(c));
  }
  return m;
}

Manifest load_manifest(const fs::path& path, const BeliefParser* parser) {
  return manifest_from_json(read_json(path), path.parent_path(), parser);
}

json manifest_to_json(const Manifest& m) {
  json cases = json::array();
  for (const auto& c : m.cases) {
    json doc = {{"case_id", c.case_id}};
    if (c.image_ref) doc["image_ref"] = *c.image_ref;
    doc["starting_prompt"] = c.starting_prompt;
    doc["ground_truth_caption"] = c.ground_truth_caption;
    doc["ground_truth_graph"] = graph_to_json(c.ground_truth_graph);
    if (c.graph_derived) doc["ground_truth_graph_derived"] = true;
    cases.push_back(std::move(doc));
  }
  return json{{"name", m.name}, {"source", m.source}, {"cases", cases}};
}

void save_manifest(const Manifest& m, const fs::path& path) {
  std::ofstream out(path);
  out << manifest_to_json(m).dump(2) << "\n";
  if (!out) throw Error("cannot write " + path.string());
}

std::string shortest_caption(const std::vector<std::string>& captions) {
  if (captions.empty()) throw EmptyInputError("no captions");
  const std::string* best = &captions.front();
  for (const auto& c : captions)
    if (c.size() < best->size()) best = &c;
  return *best;
}

std::string derive_starting_prompt(LanguageModel& llm, const TemplateLibrary& templates, const std::string& caption) {
  if (trim(caption).empty()) throw PreconditionError("caption is empty");
  const std::string request = templates.render(TemplateName::kQaSummarize, {{"caption", caption}});
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string out = trim(llm.complete(request).text);
    if (!out.empty() && out.size() < trim(caption).size()) return out;
  }
  throw ParseFailure("starting prompt summary is not shorter than the caption");
}

}  // namespace pt2i
