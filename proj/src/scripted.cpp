#include "pt2i/scripted.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <boost/regex.hpp>

#include "pt2i/errors.hpp"
#include "pt2i/text.hpp"

namespace pt2i {

namespace {

constexpr auto kRegexFlags = boost::regex::perl | boost::regex::icase | boost::regex::mod_s;

boost::regex compile(const std::string& pattern, const std::string& where) {
  try {
    return boost::regex(pattern, kRegexFlags);
  } catch (const boost::regex_error& e) {
    throw ConfigError(where + ": bad regex '" + pattern + "': " + e.what());
  }
}

// Response bodies are parsed once into a small tree.
struct Node {
  enum class Kind { kText, kGroup, kIf, kBranch } kind = Kind::kText;
  std::string text;  // literal text, or group name
  bool has_condition = false;
  boost::regex condition;
  std::vector<Node> children;  // kIf: branches; kBranch: body
};

Node make_node(Node::Kind kind, std::string text = {}) {
  Node n;
  n.kind = kind;
  n.text = std::move(text);
  return n;
}

std::vector<Node> parse_body(const std::string& body, const std::string& where) {
  std::vector<Node> root;
  // Each frame is the node list currently being filled. For an open
  // {%if%} the stack holds the if node and then its active branch.
  std::vector<std::vector<Node>*> stack{&root};
  std::vector<Node*> open_ifs;

  std::size_t pos = 0;
  while (pos < body.size()) {
    const std::size_t open = body.find("{%", pos);
    if (open == std::string::npos) {
      stack.back()->push_back(make_node(Node::Kind::kText, body.substr(pos)));
      break;
    }
    if (open > pos) stack.back()->push_back(make_node(Node::Kind::kText, body.substr(pos, open - pos)));
    const std::size_t close = body.find("%}", open + 2);
    if (close == std::string::npos) throw ConfigError(where + ": unterminated {% tag");
    const std::string tag = trim(std::string_view(body).substr(open + 2, close - open - 2));
    pos = close + 2;

    auto starts = [&](std::string_view p) { return tag.rfind(p, 0) == 0; };
    if (starts("if ")) {
      Node n = make_node(Node::Kind::kIf);
      stack.back()->push_back(std::move(n));
      Node* if_node = &stack.back()->back();
      open_ifs.push_back(if_node);
      Node branch = make_node(Node::Kind::kBranch);
      branch.has_condition = true;
      branch.condition = compile(trim(tag.substr(3)), where);
      if_node->children.push_back(std::move(branch));
      stack.push_back(&if_node->children.back().children);
    } else if (starts("elif ") || tag == "else") {
      if (open_ifs.empty()) throw ConfigError(where + ": {%" + tag + "%} outside {%if%}");
      Node* if_node = open_ifs.back();
      if (!if_node->children.back().has_condition) throw ConfigError(where + ": branch after {%else%}");
      stack.pop_back();
      Node branch = make_node(Node::Kind::kBranch);
      if (tag != "else") {
        branch.has_condition = true;
        branch.condition = compile(trim(tag.substr(5)), where);
      }
      if_node->children.push_back(std::move(branch));
      stack.push_back(&if_node->children.back().children);
    } else if (tag == "end") {
      if (open_ifs.empty()) throw ConfigError(where + ": {%end%} without {%if%}");
      open_ifs.pop_back();
      stack.pop_back();
    } else if (!tag.empty()) {
      stack.back()->push_back(make_node(Node::Kind::kGroup, tag));
    } else {
      throw ConfigError(where + ": empty {% %} tag");
    }
  }
  if (!open_ifs.empty()) throw ConfigError(where + ": {%if%} without {%end%}");
  return root;
}

void render(const std::vector<Node>& nodes, const boost::smatch& m, const std::string& focus, std::string& out) {
  for (const auto& n : nodes) {
    switch (n.kind) {
      case Node::Kind::kText:
        out += n.text;
        break;
      case Node::Kind::kGroup: {
        const bool numeric = !n.text.empty() && std::all_of(n.text.begin(), n.text.end(), ::isdigit);
        if (numeric) {
          const int idx = std::stoi(n.text);
          if (idx < static_cast<int>(m.size()) && m[idx].matched) out += m[idx].str();
        } else if (m[n.text].matched) {
          out += m[n.text].str();
        }
        break;
      }
      case Node::Kind::kIf:
        for (const auto& b : n.children) {
          if (!b.has_condition || boost::regex_search(focus, b.condition)) {
            render(b.children, m, focus, out);
            break;
          }
        }
        break;
      case Node::Kind::kBranch:
        break;
    }
  }
}

struct CompiledRule {
  boost::regex matcher;
  bool has_focus = false;
  std::vector<Node> body;
};

std::string strip_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

}  // namespace

struct ScriptedRuleSet::Impl {
  std::vector<ScriptedRule> rules;
  std::vector<CompiledRule> compiled;
  std::string default_response;
  std::vector<Node> default_body;
};

ScriptedRuleSet::ScriptedRuleSet() : impl_(std::make_unique<Impl>()) {}
ScriptedRuleSet::~ScriptedRuleSet() = default;
ScriptedRuleSet::ScriptedRuleSet(ScriptedRuleSet&&) noexcept = default;
ScriptedRuleSet& ScriptedRuleSet::operator=(ScriptedRuleSet&&) noexcept = default;

ScriptedRuleSet ScriptedRuleSet::parse(std::string_view text, const std::string& origin) {
  ScriptedRuleSet set;
  set.append(text, origin);
  return set;
}

ScriptedRuleSet ScriptedRuleSet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read rules file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void ScriptedRuleSet::append(std::string_view text, const std::string& origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;

  struct Pending {
    std::string name;
    std::string matcher;
    std::string response;
    bool in_body = false;
    int line = 0;
  };
  std::optional<Pending> cur;

  auto finish = [&]() {
    if (!cur) return;
    const std::string where = origin + ":" + std::to_string(cur->line) + " (" + cur->name + ")";
    if (!cur->in_body) throw ConfigError(where + ": record has no response");
    std::string body = strip_trailing_newlines(cur->response);
    if (cur->name == "default") {
      impl_->default_response = body;
      impl_->default_body = parse_body(body, where);
    } else {
      if (cur->matcher.empty()) throw ConfigError(where + ": record has no matcher");
      CompiledRule c;
      c.matcher = compile(cur->matcher, where);
      c.has_focus = cur->matcher.find("(?<focus>") != std::string::npos;
      c.body = parse_body(body, where);
      impl_->compiled.push_back(std::move(c));
      impl_->rules.push_back({cur->name, cur->matcher, body});
    }
    cur.reset();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("===", 0) == 0) {
      finish();
      cur = Pending{trim(std::string_view(line).substr(3)), "", "", false, line_no};
      if (cur->name.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": record without a name");
      continue;
    }
    if (!cur) {
      if (trim(line).empty() || line[0] == '#') continue;
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": text outside a record");
    }
    if (cur->in_body) {
      if (!line.empty() && line[0] == '#') continue;
      cur->response += line;
      cur->response += '\n';
      continue;
    }
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.rfind("matcher:", 0) == 0) {
      cur->matcher += trim(std::string_view(t).substr(8));
    } else if (t.rfind("response:", 0) == 0) {
      cur->in_body = true;
      const std::string rest = trim(std::string_view(t).substr(9));
      if (!rest.empty()) cur->response = rest + "\n";
    } else {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'matcher:' or 'response:'");
    }
  }
  finish();
}

std::string ScriptedRuleSet::respond(std::string_view request) const {
  const std::string req(request);
  boost::smatch m;
  for (const auto& rule : impl_->compiled) {
    if (boost::regex_search(req, m, rule.matcher)) {
      std::string focus = req;
      if (rule.has_focus && m["focus"].matched) focus = m["focus"].str();
      std::string out;
      render(rule.body, m, focus, out);
      return out;
    }
  }
  std::string out;
  render(impl_->default_body, m, req, out);
  return out;
}

std::string ScriptedRuleSet::match_name(std::string_view request) const {
  const std::string req(request);
  for (std::size_t i = 0; i < impl_->compiled.size(); ++i)
    if (boost::regex_search(req, impl_->compiled[i].matcher)) return impl_->rules[i].name;
  return "default";
}

const std::vector<ScriptedRule>& ScriptedRuleSet::rules() const { return impl_->rules; }
const std::string& ScriptedRuleSet::default_response() const { return impl_->default_response; }

// ---------------------------------------------------------------------------

ScriptedLanguageModel::ScriptedLanguageModel(std::shared_ptr<const ScriptedRuleSet> rules)
    : rules_(std::move(rules)) {
  if (!rules_) throw ConfigError("scripted model needs a rule set");
}

CompletionResponse ScriptedLanguageModel::do_complete(const CompletionRequest& req) {
  return {rules_->respond(req.prompt_text), id()};
}

EmbeddingVector HashingEmbedder::do_embed(const std::string& text) {
  EmbeddingVector v;
  v.values.assign(dim_, 0.0);
  auto words = split_words(text);
  if (words.empty()) words.push_back(trim(text));
  for (const auto& w : words) {
    const std::uint64_t h = fnv1a64(w);
    v.values[h % dim_] += (h >> 63) ? -1.0 : 1.0;
  }
  double norm = 0.0;
  for (double x : v.values) norm += x * x;
  if (norm == 0.0) {
    // Signed collisions cancelled out; fall back to the first word's slot.
    v.values[fnv1a64(words.front()) % dim_] = 1.0;
    return v;
  }
  norm = std::sqrt(norm);
  for (double& x : v.values) x /= norm;
  return v;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (std::size_t i = 0; i < text.size(); ++i) {
    cur += text[i];
    const char c = text[i];
    const bool end = (c == '.' || c == '!' || c == '?') &&
                     (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])));
    if (end) {
      if (auto t = trim(cur); !t.empty()) out.push_back(t);
      cur.clear();
    }
  }
  if (auto t = trim(cur); !t.empty()) out.push_back(t);
  return out;
}

ImageArtifact ScriptedImageGenerator::do_generate(const std::string& prompt, std::int64_t seed) {
  const auto sentences = split_sentences(prompt);
  std::vector<std::string> kept;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const std::uint64_t h = fnv1a64(std::to_string(seed) + ":" + std::to_string(i));
    if (i == 0 || h % 4 != 0) kept.push_back(sentences[i]);
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(fnv1a64(prompt + '\x1f' + std::to_string(seed))));
  ImageArtifact a;
  a.id = std::string("img-") + hex;
  a.prompt_used = join(kept, " ");
  a.seed = seed;
  a.content_ref = "scripted://image/" + a.id;
  return a;
}

std::string KeyPhraseScorer::key_phrase(std::string_view question) {
  auto strip_punct = [](std::string s) {
    while (!s.empty() && std::string_view(".,;:!?").find(s.back()) != std::string_view::npos) s.pop_back();
    return trim(s);
  };
  const auto q1 = question.find('"');
  if (q1 != std::string_view::npos) {
    const auto q2 = question.find('"', q1 + 1);
    if (q2 != std::string_view::npos) return strip_punct(std::string(question.substr(q1 + 1, q2 - q1 - 1)));
  }
  std::string q = strip_punct(to_lower(trim(question)));
  static const char* kPrefixes[] = {"does the image show ", "does the image contain ", "does the image have ",
                                    "is there ", "are there ", "is the ", "are the ", "is it ", "does ", "is ",
                                    "are "};
  for (const char* p : kPrefixes) {
    if (q.rfind(p, 0) == 0) {
      q = q.substr(std::string_view(p).size());
      break;
    }
  }
  for (std::string_view suffix : {" in the image", " in the picture"}) {
    if (q.size() >= suffix.size() && q.compare(q.size() - suffix.size(), suffix.size(), suffix) == 0) {
      q.resize(q.size() - suffix.size());
      break;
    }
  }
  return trim(q);
}

double KeyPhraseScorer::do_score(const ImageArtifact& image, const std::string& question) {
  const std::string phrase = key_phrase(question);
  if (phrase.empty()) return 0.0;
  return contains_phrase(image.prompt_used, phrase) ? 1.0 : 0.0;
}

}  // namespace pt2i
