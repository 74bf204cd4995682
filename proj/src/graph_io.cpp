#include "pt2i/graph_io.hpp"

#include <sstream>

#include "pt2i/errors.hpp"
#include "pt2i/text.hpp"

namespace pt2i {

namespace {

const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(path + "/" + key, "missing field");
  return *it;
}

std::string get_string(const json& obj, const char* key, const std::string& path, bool required = true) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) throw SchemaError(path + "/" + key, "missing field");
    return {};
  }
  if (!it->is_string()) throw SchemaError(path + "/" + key, "expected a string");
  return it->get<std::string>();
}

double get_unit(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number()) throw SchemaError(path + "/" + key, "expected a number");
  const double d = v.get<double>();
  if (!(d >= 0.0 && d <= 1.0)) throw SchemaError(path + "/" + key, "value outside [0, 1]");
  return d;
}

void require_object(const json& v, const std::string& path) {
  if (!v.is_object()) throw SchemaError(path, "expected an object");
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

json distribution_to_json(const CandidateDistribution& d) {
  json out = json::object();
  for (const auto& c : d.candidates) out[c.label] = c.prob.value();
  return out;
}

json attribute_to_json(const Attribute& a) {
  json out;
  out["name"] = a.name;
  out["importance_to_ask_score"] = a.importance.value();
  out["candidates"] = distribution_to_json(a.distribution);
  return out;
}

json entity_to_json(const Entity& e) {
  json out;
  out["name"] = e.name;
  out["importance_to_ask_score"] = e.importance.value();
  out["description"] = e.description;
  out["entity_type"] = std::string(to_string(e.entity_type));
  out["probability_of_appearing"] = e.prob_appearing.value();
  json attrs = json::array();
  for (const auto& a : e.attributes) attrs.push_back(attribute_to_json(a));
  out["attributes"] = std::move(attrs);
  return out;
}

json relation_to_json(const Relation& r) {
  json out;
  out["name"] = r.name;
  out["description"] = r.description;
  out["spatial_relation"] = distribution_to_json(r.spatial_distribution);
  out["importance_to_ask_score"] = r.importance.value();
  out["name_entity_1"] = r.entity_1;
  out["name_entity_2"] = r.entity_2;
  out["is_bidirectional"] = r.is_bidirectional;
  return out;
}

json graph_to_json(const BeliefGraph& g) {
  json out;
  out["source_prompt"] = g.source_prompt;
  json ents = json::array();
  for (const auto& e : g.entities) ents.push_back(entity_to_json(e));
  out["entities"] = std::move(ents);
  json rels = json::array();
  for (const auto& r : g.relations) rels.push_back(relation_to_json(r));
  out["relations"] = std::move(rels);
  return out;
}

CandidateDistribution distribution_from_json(const json& doc, const std::string& path) {
  require_object(doc, path);
  CandidateDistribution d;
  for (const auto& [label, p] : doc.items()) {
    const std::string at = path + "/" + label;
    if (!p.is_number()) throw SchemaError(at, "expected a number");
    const double v = p.get<double>();
    if (!(v >= 0.0 && v <= 1.0)) throw SchemaError(at, "value outside [0, 1]");
    d.candidates.push_back({label, Probability(v)});
  }
  return d;
}

BeliefGraph graph_from_json(const json& doc, const std::string& path) {
  require_object(doc, path);
  BeliefGraph g;
  g.source_prompt = get_string(doc, "source_prompt", path, false);

  const json& ents = require(doc, "entities", path);
  if (!ents.is_array()) throw SchemaError(path + "/entities", "expected an array");
  for (std::size_t i = 0; i < ents.size(); ++i) {
    const std::string ep = path + "/entities/" + std::to_string(i);
    const json& je = ents[i];
    require_object(je, ep);
    Entity e;
    e.name = get_string(je, "name", ep);
    e.importance = ImportanceScore(get_unit(je, "importance_to_ask_score", ep));
    e.description = get_string(je, "description", ep, false);
    const std::string type = get_string(je, "entity_type", ep);
    auto t = entity_type_from_string(type);
    if (!t) throw SchemaError(ep + "/entity_type", "unknown entity type '" + type + "'");
    e.entity_type = *t;
    e.prob_appearing = Probability(get_unit(je, "probability_of_appearing", ep));
    if (auto it = je.find("attributes"); it != je.end()) {
      if (!it->is_array()) throw SchemaError(ep + "/attributes", "expected an array");
      for (std::size_t k = 0; k < it->size(); ++k) {
        const std::string ap = ep + "/attributes/" + std::to_string(k);
        const json& ja = (*it)[k];
        require_object(ja, ap);
        Attribute a;
        a.name = get_string(ja, "name", ap);
        a.importance = ImportanceScore(get_unit(ja, "importance_to_ask_score", ap));
        a.distribution = distribution_from_json(require(ja, "candidates", ap), ap + "/candidates");
        e.attributes.push_back(std::move(a));
      }
    }
    g.entities.push_back(std::move(e));
  }

  const json& rels = require(doc, "relations", path);
  if (!rels.is_array()) throw SchemaError(path + "/relations", "expected an array");
  for (std::size_t i = 0; i < rels.size(); ++i) {
    const std::string rp = path + "/relations/" + std::to_string(i);
    const json& jr = rels[i];
    require_object(jr, rp);
    Relation r;
    r.name = get_string(jr, "name", rp);
    r.description = get_string(jr, "description", rp, false);
    r.spatial_distribution = distribution_from_json(require(jr, "spatial_relation", rp), rp + "/spatial_relation");
    r.importance = ImportanceScore(get_unit(jr, "importance_to_ask_score", rp));
    r.entity_1 = get_string(jr, "name_entity_1", rp);
    r.entity_2 = get_string(jr, "name_entity_2", rp);
    if (auto it = jr.find("is_bidirectional"); it != jr.end()) {
      if (!it->is_boolean()) throw SchemaError(rp + "/is_bidirectional", "expected a boolean");
      r.is_bidirectional = it->get<bool>();
    }
    g.relations.push_back(std::move(r));
  }
  return g;
}

std::string serialize(const BeliefGraph& g) { return graph_to_json(g).dump(2) + "\n"; }

BeliefGraph deserialize(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("malformed document: ") + e.what());
  }
  return graph_from_json(doc);
}

json ground_truth_to_json(const GroundTruthState& gt) {
  json out;
  json ents = json::array();
  for (const auto& e : gt.entities) {
    json je;
    je["name"] = e.name;
    je["exists"] = e.exists;
    json attrs = json::object();
    for (const auto& a : e.attributes) attrs[a.name] = a.value;
    je["attributes"] = std::move(attrs);
    ents.push_back(std::move(je));
  }
  out["entities"] = std::move(ents);
  json rels = json::array();
  for (const auto& r : gt.relations)
    rels.push_back({{"name", r.name}, {"name_entity_1", r.entity_1}, {"name_entity_2", r.entity_2},
                    {"spatial_value", r.spatial_value}});
  out["relations"] = std::move(rels);
  return out;
}

json edit_to_json(const GraphEdit& e) {
  return std::visit(
      overloaded{
          [](const SetEntityExistence& x) -> json {
            return {{"type", "set_entity_existence"}, {"entity", x.entity}, {"exists", x.exists}};
          },
          [](const SetAttributeValue& x) -> json {
            return {{"type", "set_attribute_value"}, {"entity", x.entity}, {"attribute", x.attribute}, {"label", x.label}};
          },
          [](const SetRelationValue& x) -> json {
            return {{"type", "set_relation_value"}, {"relation", x.relation}, {"label", x.label}};
          },
          [](const ConfirmImplicit& x) -> json { return {{"type", "confirm_implicit"}, {"entity", x.entity}}; },
      },
      e);
}

GraphEdit edit_from_json(const json& doc, const std::string& path) {
  require_object(doc, path);
  const std::string type = get_string(doc, "type", path);
  if (type == "set_entity_existence") {
    const json& ex = require(doc, "exists", path);
    if (!ex.is_boolean()) throw SchemaError(path + "/exists", "expected a boolean");
    return SetEntityExistence{get_string(doc, "entity", path), ex.get<bool>()};
  }
  if (type == "set_attribute_value")
    return SetAttributeValue{get_string(doc, "entity", path), get_string(doc, "attribute", path),
                             get_string(doc, "label", path)};
  if (type == "set_relation_value")
    return SetRelationValue{get_string(doc, "relation", path), get_string(doc, "label", path)};
  if (type == "confirm_implicit") return ConfirmImplicit{get_string(doc, "entity", path)};
  throw SchemaError(path + "/type", "unknown edit type '" + type + "'");
}

namespace {

std::string candidates_text(const CandidateDistribution& d) {
  std::vector<std::string> parts;
  for (const auto& c : d.candidates) parts.push_back(c.label + ": " + format_number(c.prob.value()));
  return "[" + join(parts, ", ") + "]";
}

}  // namespace

std::string describe_belief(const BeliefGraph& g) {
  std::ostringstream out;
  for (const auto& e : g.entities) {
    out << "Entity Name: " << e.name << ", Descriptions: " << e.description
        << ", Importance to ask Score: " << format_number(e.importance.value())
        << ", Probability of appearing: " << format_number(e.prob_appearing.value()) << "\n";
    for (const auto& a : e.attributes)
      out << "  Attribute Name: " << a.name << ", Importance to ask Score: " << format_number(a.importance.value())
          << ", Candidates: " << candidates_text(a.distribution) << "\n";
  }
  for (const auto& r : g.relations)
    out << "Relation Name: " << r.name << ", Entities: " << r.entity_1 << " and " << r.entity_2
        << ", Importance to ask Score: " << format_number(r.importance.value())
        << ", Spatial relation: " << candidates_text(r.spatial_distribution) << "\n";
  return out.str();
}

}  // namespace pt2i
