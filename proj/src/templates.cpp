// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include "hopcache/templates.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <set>

namespace hopcache::templates {

namespace {

constexpr std::string_view kReserved = "%:&=/\"";

std::string escape(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (kReserved.find(c) != std::string_view::npos) {
      auto u = static_cast<unsigned char>(c);
      out.push_back('%');
      out.push_back(kHex[u >> 4]);
      out.push_back(kHex[u & 0xf]);
    } else {
      out.push_back(c);
    }
  }
  return out;
}

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

std::optional<std::string> unescape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '%') {
      if (kReserved.find(s[i]) != std::string_view::npos) return std::nullopt;
      out.push_back(s[i]);
      continue;
    }
    if (i + 2 >= s.size()) return std::nullopt;
    int hi = hex_digit(s[i + 1]);
    int lo = hex_digit(s[i + 2]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<char>(hi * 16 + lo));
    i += 2;
  }
  return out;
}

template <class Element>
bool evaluate_impl(const Predicate& pred, const Element& x) {
  if (pred.label && x.label != *pred.label) return false;
  for (const auto& term : pred.terms) {
    if (term.is_wildcard()) continue;
    const Scalar* actual = x.prop(term.name);
    if (actual == nullptr || *actual != *term.value) return false;
  }
  return true;
}

template <class Element>
bool has_all_wildcards_impl(const Predicate& pred, const Element& x) {
  return std::all_of(pred.terms.begin(), pred.terms.end(), [&](const PropertyTerm& t) {
    return !t.is_wildcard() || x.prop(t.name) != nullptr;
  });
}

template <class Element>
WildcardBinding extract_impl(const Predicate& pred, const Element& x) {
  WildcardBinding out;
  for (const auto& term : pred.terms) {
    if (!term.is_wildcard()) continue;
    const Scalar* actual = x.prop(term.name);
    if (actual == nullptr) {
      throw TemplateError(TemplateErrorCode::missing_wildcard_property,
                          "element lacks wildcard property '" + term.name + "'");
    }
    out.emplace_back(term.name, *actual);
  }
  return out;
}

bool valid_template_name(std::string_view name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '-' || c == '.';
  });
}

void append_binding(std::string& out, const WildcardBinding& b, bool& first) {
  for (const auto& [name, value] : b) {
    if (!first) out.push_back('&');
    first = false;
    out += escape(name);
    out.push_back('=');
    out += render_scalar(value);
  }
}

Predicate predicate_from_json(const nlohmann::json& j) {
  Predicate p;
  if (j.is_null()) return p;
  if (j.contains("label") && !j["label"].is_null()) p.label = j["label"].get<std::string>();
  if (j.contains("props")) {
    for (const auto& t : j["props"]) {
      PropertyTerm term{t.at("name").get<std::string>(), std::nullopt};
      const auto& m = t.at("match");
      if (!(m.is_string() && m.get<std::string>() == "?")) term.value = scalar_from_json(m);
      p.terms.push_back(std::move(term));
    }
  }
  return p;
}

nlohmann::json predicate_to_json(const Predicate& p) {
  nlohmann::json j = nlohmann::json::object();
  if (p.label) j["label"] = *p.label;
  if (!p.terms.empty()) {
    j["props"] = nlohmann::json::array();
    for (const auto& t : p.terms) {
      j["props"].push_back(
          {{"name", t.name}, {"match", t.is_wildcard() ? nlohmann::json("?") : scalar_to_json(*t.value)}});
    }
  }
  return j;
}

}  // namespace

bool Predicate::references(std::string_view prop) const {
  return std::any_of(terms.begin(), terms.end(), [&](const PropertyTerm& t) { return t.name == prop; });
}

std::vector<std::string> Predicate::wildcard_names() const {
  std::vector<std::string> out;
  for (const auto& t : terms) {
    if (t.is_wildcard()) out.push_back(t.name);
  }
  return out;
}

void validate(const SubQueryTemplate& t) {
  if (!valid_template_name(t.name)) {
    throw TemplateError(TemplateErrorCode::invalid_template,
                        "template name '" + t.name + "' must be non-empty [A-Za-z0-9_.-]");
  }
  for (const Predicate* p : {&t.root, &t.edge, &t.leaf}) {
    std::set<std::string_view> seen;
    for (const auto& term : p->terms) {
      if (term.name.empty() || !seen.insert(term.name).second) {
        throw TemplateError(TemplateErrorCode::invalid_template,
                            "template '" + t.name + "' has an empty or repeated property term");
      }
    }
  }
}

bool evaluate(const Predicate& pred, const Vertex& v) { return evaluate_impl(pred, v); }
bool evaluate(const Predicate& pred, const Edge& e) { return evaluate_impl(pred, e); }

bool has_all_wildcards(const Predicate& pred, const Vertex& v) { return has_all_wildcards_impl(pred, v); }
bool has_all_wildcards(const Predicate& pred, const Edge& e) { return has_all_wildcards_impl(pred, e); }

bool qualifies(const Predicate& pred, const Vertex& v) {
  return evaluate(pred, v) && has_all_wildcards(pred, v);
}
bool qualifies(const Predicate& pred, const Edge& e) {
  return evaluate(pred, e) && has_all_wildcards(pred, e);
}

WildcardBinding extract_wildcard_values(const Predicate& pred, const Vertex& v) {
  return extract_impl(pred, v);
}
WildcardBinding extract_wildcard_values(const Predicate& pred, const Edge& e) {
  return extract_impl(pred, e);
}

Predicate specialize(const Predicate& pred, const WildcardBinding& binding) {
  Predicate out = pred;
  std::size_t next = 0;
  for (auto& term : out.terms) {
    if (!term.is_wildcard()) continue;
    if (next >= binding.size() || binding[next].first != term.name) {
      throw TemplateError(TemplateErrorCode::binding_mismatch,
                          "binding does not cover wildcard '" + term.name + "'");
    }
    term.value = binding[next++].second;
  }
  if (next != binding.size()) {
    throw TemplateError(TemplateErrorCode::binding_mismatch, "binding has extra values");
  }
  return out;
}

std::string render_scalar(const Scalar& v) {
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  return "\"" + escape(std::get<std::string>(v)) + "\"";
}

std::optional<Scalar> parse_rendered_scalar(std::string_view text) {
  if (text == "true") return Scalar{true};
  if (text == "false") return Scalar{false};
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    auto s = unescape(text.substr(1, text.size() - 2));
    if (!s) return std::nullopt;
    return Scalar{std::move(*s)};
  }
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
  return Scalar{v};
}

std::string CacheKey::render() const {
  std::string out = template_name;
  out.push_back(':');
  out += std::to_string(root.value);
  out.push_back(':');
  bool first = true;
  append_binding(out, edge_values, first);
  append_binding(out, leaf_values, first);
  return out;
}

CacheKey build_key(const SubQueryTemplate& t, VertexId root, WildcardBinding edge_values,
                   WildcardBinding leaf_values) {
  auto check = [&](const Predicate& p, const WildcardBinding& b) {
    auto names = p.wildcard_names();
    bool ok = names.size() == b.size();
    for (std::size_t i = 0; ok && i < names.size(); ++i) ok = names[i] == b[i].first;
    if (!ok) {
      throw TemplateError(TemplateErrorCode::binding_mismatch,
                          "binding does not match the wildcards of template '" + t.name + "'");
    }
  };
  check(t.edge, edge_values);
  check(t.leaf, leaf_values);
  return CacheKey{t.name, root, std::move(edge_values), std::move(leaf_values)};
}

std::string root_prefix(const SubQueryTemplate& t, VertexId root) {
  return t.name + ":" + std::to_string(root.value) + ":";
}

std::string template_prefix(std::string_view template_name) {
  return std::string(template_name) + ":";
}

std::string_view key_template_name(std::string_view rendered) {
  return rendered.substr(0, rendered.find(':'));
}

std::optional<CacheKey> parse_key(std::string_view rendered, const SubQueryTemplate& t) {
  auto c1 = rendered.find(':');
  if (c1 == std::string_view::npos || rendered.substr(0, c1) != t.name) return std::nullopt;
  auto c2 = rendered.find(':', c1 + 1);
  if (c2 == std::string_view::npos) return std::nullopt;
  auto root_text = rendered.substr(c1 + 1, c2 - c1 - 1);
  std::uint64_t root = 0;
  auto [ptr, ec] = std::from_chars(root_text.data(), root_text.data() + root_text.size(), root);
  if (ec != std::errc{} || ptr != root_text.data() + root_text.size() || root_text.empty()) {
    return std::nullopt;
  }

  WildcardBinding all;
  auto rest = rendered.substr(c2 + 1);
  while (!rest.empty()) {
    auto amp = rest.find('&');
    auto pair = rest.substr(0, amp);
    auto eq = pair.find('=');
    if (eq == std::string_view::npos) return std::nullopt;
    auto name = unescape(pair.substr(0, eq));
    auto value = parse_rendered_scalar(pair.substr(eq + 1));
    if (!name || !value) return std::nullopt;
    all.emplace_back(std::move(*name), std::move(*value));
    if (amp == std::string_view::npos) break;
    rest = rest.substr(amp + 1);
    if (rest.empty()) return std::nullopt;
  }

  auto edge_names = t.edge.wildcard_names();
  auto leaf_names = t.leaf.wildcard_names();
  if (all.size() != edge_names.size() + leaf_names.size()) return std::nullopt;
  CacheKey key{t.name, VertexId{root}, {}, {}};
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& expected = i < edge_names.size() ? edge_names[i] : leaf_names[i - edge_names.size()];
    if (all[i].first != expected) return std::nullopt;
    (i < edge_names.size() ? key.edge_values : key.leaf_values).push_back(std::move(all[i]));
  }
  return key;
}

std::vector<VertexId> execute_instance(const graph::GraphStore& g, kv::Transaction& tx,
                                       const SubQueryTemplate& t, VertexId root,
                                       const WildcardBinding& edge_values,
                                       const WildcardBinding& leaf_values) {
  auto v = g.get_vertex(tx, root);
  if (!v) return {};
  return execute_instance(g, tx, t, *v, edge_values, leaf_values);
}

std::vector<VertexId> execute_instance(const graph::GraphStore& g, kv::Transaction& tx,
                                       const SubQueryTemplate& t, const Vertex& root,
                                       const WildcardBinding& edge_values,
                                       const WildcardBinding& leaf_values) {
  if (!qualifies(t.root, root)) return {};
  const Predicate edge_pred = specialize(t.edge, edge_values);
  const Predicate leaf_pred = specialize(t.leaf, leaf_values);
  return g.expand(
      tx, root.id, t.direction, t.edge.label,
      [&](const Edge& e) { return evaluate(edge_pred, e); },
      [&](const Vertex& v) { return evaluate(leaf_pred, v); });
}

nlohmann::json scalar_to_json(const Scalar& v) {
  return std::visit([](const auto& x) { return nlohmann::json(x); }, v);
}

Scalar scalar_from_json(const nlohmann::json& j) {
  if (j.is_boolean()) return Scalar{j.get<bool>()};
  if (j.is_number_integer()) return Scalar{j.get<std::int64_t>()};
  if (j.is_string()) return Scalar{j.get<std::string>()};
  throw TemplateError(TemplateErrorCode::invalid_template,
                      "property values must be boolean, integer or string: " + j.dump());
}

SubQueryTemplate template_from_json(const nlohmann::json& j) {
  SubQueryTemplate t;
  try {
    t.name = j.at("name").get<std::string>();
    t.root = predicate_from_json(j.value("root", nlohmann::json()));
    t.edge = predicate_from_json(j.value("edge", nlohmann::json()));
    t.leaf = predicate_from_json(j.value("leaf", nlohmann::json()));
    auto dir = parse_direction(j.value("dir", std::string("out")));
    if (!dir) throw TemplateError(TemplateErrorCode::invalid_template, "dir must be out, in or both");
    t.direction = *dir;
  } catch (const nlohmann::json::exception& e) {
    throw TemplateError(TemplateErrorCode::invalid_template, e.what());
  }
  validate(t);
  return t;
}

nlohmann::json to_json(const SubQueryTemplate& t) {
  return {{"name", t.name},
          {"root", predicate_to_json(t.root)},
          {"dir", std::string(to_string(t.direction))},
          {"edge", predicate_to_json(t.edge)},
          {"leaf", predicate_to_json(t.leaf)}};
}

std::vector<SubQueryTemplate> load_templates_jsonl(std::istream& in) {
  std::vector<SubQueryTemplate> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(template_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw TemplateError(TemplateErrorCode::invalid_template, e.what());
    }
  }
  return out;
}

}  // namespace hopcache::templates
