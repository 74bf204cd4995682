#include "pt2i/parsing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <optional>
#include <set>

#include "pt2i/errors.hpp"
#include "pt2i/text.hpp"

namespace pt2i {

namespace {

enum class Span { kOk, kUnbalanced, kMismatch };

// Finds the bracket closing the one at `start`, skipping string contents.
Span balanced_end(const std::string& s, std::size_t start, std::size_t& end) {
  std::vector<char> closers;
  bool in_string = false;
  for (std::size_t i = start; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    switch (c) {
      case '"': in_string = true; break;
      case '[': closers.push_back(']'); break;
      case '{': closers.push_back('}'); break;
      case ']':
      case '}':
        if (closers.empty() || closers.back() != c) return Span::kMismatch;
        closers.pop_back();
        if (closers.empty()) {
          end = i;
          return Span::kOk;
        }
        break;
      default: break;
    }
  }
  return Span::kUnbalanced;
}

std::size_t skip_ws(const std::string& s, std::size_t i) {
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return i;
}

void repair_commas(std::string& doc, std::vector<std::string>& notes) {
  std::string out;
  out.reserve(doc.size() + 8);
  int trailing = 0, missing = 0;
  bool in_string = false;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const char c = doc[i];
    if (in_string) {
      out += c;
      if (c == '\\' && i + 1 < doc.size()) out += doc[++i];
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') {
      in_string = true;
      out += c;
      continue;
    }
    if (c == ',') {
      const std::size_t j = skip_ws(doc, i + 1);
      if (j < doc.size() && (doc[j] == ']' || doc[j] == '}')) {
        ++trailing;
        continue;
      }
    }
    out += c;
    if (c == '}' || c == ']') {
      const std::size_t j = skip_ws(doc, i + 1);
      if (j < doc.size() && (doc[j] == '{' || doc[j] == '[')) {
        out += ',';
        ++missing;
      }
    }
  }
  if (trailing) notes.push_back("removed " + std::to_string(trailing) + " trailing comma(s)");
  if (missing) notes.push_back("inserted " + std::to_string(missing) + " missing comma(s)");
  doc = std::move(out);
}

}  // namespace

RawParseResult extract_document(std::string_view text) {
  RawParseResult r;
  r.source_text = std::string(text);
  std::string body(text);

  if (auto f = body.find("```"); f != std::string::npos) {
    const auto line_end = body.find('\n', f);
    if (line_end != std::string::npos) {
      const auto close = body.find("```", line_end);
      body = close == std::string::npos ? body.substr(line_end + 1) : body.substr(line_end + 1, close - line_end - 1);
      r.repair_notes.push_back("stripped code fence");
    }
  }

  std::size_t start = body.find_first_of("[{");
  while (start != std::string::npos) {
    std::size_t end = 0;
    const Span span = balanced_end(body, start, end);
    if (span == Span::kUnbalanced) throw NoDocumentFound("document is not closed (truncated output?)");
    if (span == Span::kOk) {
      std::string doc = body.substr(start, end - start + 1);
      std::vector<std::string> notes;
      repair_commas(doc, notes);
      try {
        r.extracted_document = json::parse(doc);
        if (!trim(std::string_view(body).substr(0, start)).empty() || !trim(std::string_view(body).substr(end + 1)).empty())
          r.repair_notes.push_back("stripped surrounding text");
        r.repair_notes.insert(r.repair_notes.end(), notes.begin(), notes.end());
        return r;
      } catch (const json::parse_error&) {
        start = body.find_first_of("[{", end + 1);
        continue;
      }
    }
    start = body.find_first_of("[{", start + 1);
  }
  throw NoDocumentFound("no JSON document in model output");
}

// ---------------------------------------------------------------------------

namespace {

std::optional<double> as_number(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = trim(v.get<std::string>());
    char* end = nullptr;
    const double d = std::strtod(s.c_str(), &end);
    if (!s.empty() && end == s.c_str() + s.size()) return d;
  }
  return std::nullopt;
}

double unit_value(const json& v, const std::string& path, std::vector<std::string>& notes) {
  auto d = as_number(v);
  if (!d || std::isnan(*d)) throw SchemaError(path, "expected a number");
  if (*d < 0.0 || *d > 1.0) {
    const double c = std::clamp(*d, 0.0, 1.0);
    notes.push_back("clamped " + path + " from " + format_number(*d) + " to " + format_number(c));
    return c;
  }
  return *d;
}

double unit_field(const json& obj, const char* key, const std::string& path, std::vector<std::string>& notes) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "/" + key, "missing field");
  return unit_value(*it, path + "/" + key, notes);
}

std::string string_field(const json& obj, const char* key, const std::string& path, bool required) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw SchemaError(path + "/" + key, "missing field");
    return {};
  }
  if (!it->is_string()) throw SchemaError(path + "/" + key, "expected a string");
  return trim(it->get<std::string>());
}

const json& unwrap_list(const json& doc, const char* key, std::vector<std::string>& notes) {
  if (doc.is_array()) return doc;
  if (doc.is_object()) {
    auto it = doc.find(key);
    if (it != doc.end() && it->is_array()) {
      notes.push_back(std::string("unwrapped list from field '") + key + "'");
      return *it;
    }
  }
  throw SchemaError("", "expected a list");
}

// Candidates as {label: p}, [[label, p]], or [{"name"|"label"|"value": ..., "probability"|"prob": p}].
CandidateDistribution candidates_from(const json& v, const std::string& path, std::vector<std::string>& notes) {
  std::vector<std::pair<std::string, double>> raw;
  if (v.is_object()) {
    for (const auto& [label, p] : v.items()) raw.emplace_back(label, unit_value(p, path + "/" + label, notes));
  } else if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const json& item = v[i];
      const std::string ip = path + "/" + std::to_string(i);
      if (item.is_array() && item.size() == 2 && item[0].is_string()) {
        raw.emplace_back(item[0].get<std::string>(), unit_value(item[1], ip + "/1", notes));
      } else if (item.is_object()) {
        std::string label;
        for (const char* k : {"name", "label", "value"})
          if (auto it = item.find(k); it != item.end() && it->is_string()) {
            label = it->get<std::string>();
            break;
          }
        const json* p = nullptr;
        for (const char* k : {"probability", "prob", "p"})
          if (auto it = item.find(k); it != item.end()) {
            p = &*it;
            break;
          }
        if (label.empty() || !p) throw SchemaError(ip, "candidate needs a label and a probability");
        raw.emplace_back(label, unit_value(*p, ip, notes));
      } else {
        throw SchemaError(ip, "unrecognized candidate");
      }
    }
  } else {
    throw SchemaError(path, "expected candidates as an object or list");
  }

  // Merge case-insensitive duplicates, keeping the first spelling.
  CandidateDistribution d;
  std::map<std::string, std::size_t> index;
  for (auto& [label, p] : raw) {
    const std::string t = trim(label);
    if (t.empty()) {
      notes.push_back("dropped empty candidate label at " + path);
      continue;
    }
    auto [it, inserted] = index.emplace(name_key(t), d.candidates.size());
    if (inserted) {
      d.candidates.push_back({t, Probability::clamped(p)});
    } else {
      auto& c = d.candidates[it->second];
      c.prob = Probability::clamped(c.prob.value() + p);
      notes.push_back("merged duplicate candidate '" + t + "' at " + path);
    }
  }
  if (d.empty()) return d;
  const double s = d.sum();
  if (std::abs(s - 1.0) > kSumTolerance) {
    if (s == 0.0) notes.push_back("all candidates at " + path + " had probability 0; using uniform");
    else notes.push_back("normalized " + path + " (sum was " + format_number(s) + ")");
    d = normalize_or_uniform(d);
  }
  return d;
}

}  // namespace

std::vector<Entity> entities_from_document(const json& doc, std::vector<std::string>& notes) {
  const json& list = unwrap_list(doc, "entities", notes);
  std::vector<Entity> out;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string path = "/" + std::to_string(i);
    const json& item = list[i];
    if (!item.is_object()) throw SchemaError(path, "expected an object");
    Entity e;
    e.name = string_field(item, "name", path, true);
    if (e.name.empty()) throw SchemaError(path + "/name", "empty name");
    e.description = string_field(item, "description", path, false);
    const std::string type = string_field(item, "entity_type", path, true);
    auto t = entity_type_from_string(type);
    if (!t) throw SchemaError(path + "/entity_type", "unknown entity type '" + type + "'");
    e.entity_type = *t;
    e.importance = ImportanceScore(unit_field(item, "importance_to_ask_score", path, notes));
    e.prob_appearing = Probability(unit_field(item, "probability_of_appearing", path, notes));
    if (e.prob_appearing.value() == 0.0 && e.importance.value() != 0.0) {
      notes.push_back("entity '" + e.name + "' cannot appear; importance set to 0");
      e.importance = ImportanceScore(0.0);
    }

    auto [it, inserted] = index.emplace(name_key(e.name), out.size());
    if (inserted) {
      out.push_back(std::move(e));
      continue;
    }
    Entity& kept = out[it->second];
    notes.push_back("merged duplicate entity '" + e.name + "'");
    std::string description = kept.description;
    if (e.importance > kept.importance) {
      description = e.description;
      if (!kept.description.empty() && !same_name(kept.description, e.description))
        description += description.empty() ? kept.description : "; " + kept.description;
      kept = std::move(e);
    } else if (!e.description.empty() && !same_name(kept.description, e.description)) {
      description += description.empty() ? e.description : "; " + e.description;
    }
    kept.description = description;
  }

  if (!index.contains("image style")) {
    notes.push_back("added background entity 'image style'");
    out.push_back({"image style", "the style of the image", EntityType::kBackground, Probability(1.0),
                   ImportanceScore(1.0), {}});
  }
  return out;
}

std::vector<Attribute> attributes_from_document(const json& doc, const std::vector<std::string>& other_entities,
                                                std::vector<std::string>& notes) {
  const json& list = unwrap_list(doc, "attributes", notes);
  std::set<std::string> others;
  for (const auto& n : other_entities) others.insert(name_key(n));

  std::vector<Attribute> out;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string path = "/" + std::to_string(i);
    const json& item = list[i];
    if (!item.is_object()) throw SchemaError(path, "expected an object");
    Attribute a;
    a.name = string_field(item, "name", path, true);
    if (a.name.empty()) throw SchemaError(path + "/name", "empty name");
    a.importance = ImportanceScore(unit_field(item, "importance_to_ask_score", path, notes));
    auto c = item.find("candidates");
    if (c == item.end()) throw SchemaError(path + "/candidates", "missing field");
    a.distribution = candidates_from(*c, path + "/candidates", notes);

    if (others.contains(name_key(a.name))) {
      notes.push_back("dropped attribute '" + a.name + "': it names another entity");
      continue;
    }
    if (a.distribution.empty()) {
      notes.push_back("dropped attribute '" + a.name + "': no candidates");
      continue;
    }
    auto [it, inserted] = index.emplace(name_key(a.name), out.size());
    if (inserted) {
      out.push_back(std::move(a));
    } else {
      notes.push_back("dropped duplicate attribute '" + a.name + "'");
      if (a.importance > out[it->second].importance) out[it->second] = std::move(a);
    }
  }
  return out;
}

std::vector<Relation> relations_from_document(const json& doc, const std::vector<Entity>& entities,
                                              std::vector<std::string>& notes) {
  const json& list = unwrap_list(doc, "relations", notes);
  auto canonical = [&](const std::string& name) -> const std::string* {
    for (const auto& e : entities)
      if (same_name(e.name, name)) return &e.name;
    return nullptr;
  };

  std::vector<Relation> out;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string path = "/" + std::to_string(i);
    const json& item = list[i];
    if (!item.is_object()) throw SchemaError(path, "expected an object");
    Relation r;
    r.entity_1 = string_field(item, "name_entity_1", path, true);
    r.entity_2 = string_field(item, "name_entity_2", path, true);
    r.name = string_field(item, "name", path, false);
    r.description = string_field(item, "description", path, false);
    r.importance = ImportanceScore(unit_field(item, "importance_to_ask_score", path, notes));
    auto sr = item.find("spatial_relation");
    if (sr == item.end()) throw SchemaError(path + "/spatial_relation", "missing field");
    r.spatial_distribution = candidates_from(*sr, path + "/spatial_relation", notes);
    if (auto b = item.find("is_bidirectional"); b != item.end()) {
      if (b->is_boolean()) r.is_bidirectional = b->get<bool>();
      else if (b->is_string()) r.is_bidirectional = name_key(b->get<std::string>()) == "true";
      else throw SchemaError(path + "/is_bidirectional", "expected a boolean");
    }

    const std::string* e1 = canonical(r.entity_1);
    const std::string* e2 = canonical(r.entity_2);
    if (!e1 || !e2) {
      notes.push_back("dropped relation '" + r.name + "': unknown entity '" + (e1 ? r.entity_2 : r.entity_1) + "'");
      continue;
    }
    r.entity_1 = *e1;
    r.entity_2 = *e2;
    if (same_name(r.entity_1, r.entity_2)) {
      notes.push_back("dropped relation '" + r.name + "': connects an entity to itself");
      continue;
    }
    if (r.name.empty()) r.name = r.entity_1 + "-" + r.entity_2;
    if (r.spatial_distribution.empty()) {
      notes.push_back("dropped relation '" + r.name + "': no spatial candidates");
      continue;
    }
    auto a = name_key(r.entity_1), b = name_key(r.entity_2);
    if (b < a) std::swap(a, b);
    if (!seen.emplace(a, b, name_key(r.name)).second) {
      notes.push_back("dropped duplicate relation '" + r.name + "'");
      continue;
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------

BeliefParser::BeliefParser(std::shared_ptr<LanguageModel> llm, std::shared_ptr<const TemplateLibrary> templates,
                           ParserOptions options)
    : llm_(std::move(llm)), templates_(std::move(templates)), options_(options) {
  if (!llm_ || !templates_) throw ConfigError("parser needs a language model and templates");
}

template <class T, class Convert>
T BeliefParser::request(const std::string& stage, const std::string& prompt_text, Convert convert,
                        std::vector<std::string>* notes) const {
  std::string text = prompt_text;
  std::string last_error;
  for (int attempt = 0; attempt <= options_.reprompt_attempts; ++attempt) {
    const std::string reply = llm_->complete(text).text;
    std::vector<std::string> local;
    try {
      RawParseResult raw = extract_document(reply);
      local = raw.repair_notes;
      T value = convert(raw.extracted_document, local);
      if (notes)
        for (auto& n : local) notes->push_back(stage + ": " + n);
      return value;
    } catch (const NoDocumentFound& e) {
      last_error = e.what();
    } catch (const SchemaError& e) {
      last_error = e.what();
    }
    if (notes) notes->push_back(stage + ": attempt " + std::to_string(attempt + 1) + " failed: " + last_error);
    text = prompt_text + "\n\nYour previous output could not be used (" + last_error +
           "). Reply with only the JSON document in the format described above.";
  }
  throw ParseFailure(stage + " parser failed: " + last_error);
}

std::vector<Entity> BeliefParser::parse_entities(const std::string& prompt, std::vector<std::string>* notes) const {
  if (trim(prompt).empty()) throw PreconditionError("prompt is empty");
  const std::string text = templates_->render(TemplateName::kEntity, {{"user_prompt", prompt}});
  return request<std::vector<Entity>>(
      "entity", text, [](const json& doc, std::vector<std::string>& n) { return entities_from_document(doc, n); },
      notes);
}

std::vector<Attribute> BeliefParser::parse_attributes(const std::string& prompt, const Entity& entity,
                                                      const std::vector<std::string>& other_entities,
                                                      std::vector<std::string>* notes) const {
  if (trim(prompt).empty()) throw PreconditionError("prompt is empty");
  const std::string text = templates_->render(
      TemplateName::kAttribute,
      {{"user_prompt", prompt}, {"entity_name", entity.name}, {"existing_entities", join(other_entities, ", ")}});
  return request<std::vector<Attribute>>(
      "attribute(" + entity.name + ")", text,
      [&](const json& doc, std::vector<std::string>& n) { return attributes_from_document(doc, other_entities, n); },
      notes);
}

std::vector<Relation> BeliefParser::parse_relations(const std::string& prompt, const std::vector<Entity>& entities,
                                                    std::vector<std::string>* notes) const {
  if (trim(prompt).empty()) throw PreconditionError("prompt is empty");
  if (entities.size() < 2) return {};
  std::vector<std::string> names;
  for (const auto& e : entities) names.push_back(e.name);
  const std::string text =
      templates_->render(TemplateName::kRelation, {{"user_prompt", prompt}, {"entity_names", join(names, ", ")}});
  return request<std::vector<Relation>>(
      "relation", text,
      [&](const json& doc, std::vector<std::string>& n) { return relations_from_document(doc, entities, n); }, notes);
}

BeliefGraph BeliefParser::build_belief_graph(const std::string& prompt, std::vector<std::string>* notes) const {
  if (trim(prompt).empty()) throw PreconditionError("prompt is empty");
  BeliefGraph g;
  g.source_prompt = prompt;
  g.entities = parse_entities(prompt, notes);

  std::vector<std::size_t> order(g.entities.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return g.entities[a].importance > g.entities[b].importance; });
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    Entity& e = g.entities[order[pos]];
    if (e.prob_appearing.value() == 0.0) continue;
    std::vector<std::string> others;
    for (const auto& o : g.entities)
      if (&o != &e) others.push_back(o.name);
    try {
      e.attributes = parse_attributes(prompt, e, others, notes);
    } catch (const ContextBudgetExceeded& ex) {
      if (notes)
        notes->push_back("attribute parsing stopped at entity '" + e.name + "': " + ex.what());
      break;
    }
  }

  std::vector<Entity> related;
  for (const auto& e : g.entities)
    if (e.entity_type != EntityType::kBackground && e.prob_appearing.value() > 0.0) related.push_back(e);
  g.relations = parse_relations(prompt, related, notes);

  if (auto v = validate(g); !v.empty())
    throw ParseFailure("parsed graph is invalid: " + v.front().location + ": " + v.front().message);
  return g;
}

}  // namespace pt2i
