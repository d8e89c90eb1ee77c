// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors
//
// One-hop sub-query templates: a root predicate, an edge predicate (with
// the edge label), a leaf predicate and a traversal direction. Property
// terms are either exact values or wildcards; the values a concrete
// instance binds to the edge and leaf wildcards become part of its cache
// key:
//
//   <template>:<root id>:<name>=<value>&<name>=<value>...
//
// Edge wildcards come first, then leaf wildcards, each group in declared
// order. Booleans render as true/false, integers in decimal, and strings
// in double quotes. Reserved characters (% : & = / ") inside names and
// string values are escaped as %XX, so distinct instances never render to
// the same key.

#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hopcache/graph_store.hpp"
#include "hopcache/graph_types.hpp"

namespace hopcache::templates {

enum class TemplateErrorCode { missing_wildcard_property, binding_mismatch, invalid_template };

class TemplateError : public std::runtime_error {
 public:
  TemplateError(TemplateErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  TemplateErrorCode code() const noexcept { return code_; }

 private:
  TemplateErrorCode code_;
};

struct PropertyTerm {
  std::string name;
  std::optional<Scalar> value;  // nullopt: wildcard

  bool is_wildcard() const noexcept { return !value.has_value(); }
  friend bool operator==(const PropertyTerm&, const PropertyTerm&) = default;
};

struct Predicate {
  std::optional<std::string> label;
  std::vector<PropertyTerm> terms;

  bool empty() const noexcept { return !label && terms.empty(); }
  bool references(std::string_view prop) const;
  std::vector<std::string> wildcard_names() const;
  friend bool operator==(const Predicate&, const Predicate&) = default;
};

struct SubQueryTemplate {
  std::string name;
  Predicate root;
  Predicate edge;  // edge.label is the traversed edge label
  Predicate leaf;
  Direction direction = Direction::out;

  friend bool operator==(const SubQueryTemplate&, const SubQueryTemplate&) = default;
};

using TemplatePtr = std::shared_ptr<const SubQueryTemplate>;

/// Values bound to wildcard terms, in the predicate's declared order.
using WildcardBinding = std::vector<std::pair<std::string, Scalar>>;

struct CacheKey {
  std::string template_name;
  VertexId root;
  WildcardBinding edge_values;
  WildcardBinding leaf_values;

  std::string render() const;
  friend bool operator==(const CacheKey&, const CacheKey&) = default;
};

/// Throws invalid_template for empty or reserved-character names, or for
/// a predicate naming the same property twice.
void validate(const SubQueryTemplate& t);

/// Label check plus every exact term. Wildcard terms are not checked
/// here; see has_all_wildcards().
bool evaluate(const Predicate& pred, const Vertex& v);
bool evaluate(const Predicate& pred, const Edge& e);

bool has_all_wildcards(const Predicate& pred, const Vertex& v);
bool has_all_wildcards(const Predicate& pred, const Edge& e);

/// evaluate() and has_all_wildcards() together: the element can take part
/// in a cached instance.
bool qualifies(const Predicate& pred, const Vertex& v);
bool qualifies(const Predicate& pred, const Edge& e);

WildcardBinding extract_wildcard_values(const Predicate& pred, const Vertex& v);
WildcardBinding extract_wildcard_values(const Predicate& pred, const Edge& e);

/// Replaces each wildcard with the bound value. Throws binding_mismatch
/// when the binding does not name exactly the predicate's wildcards.
Predicate specialize(const Predicate& pred, const WildcardBinding& binding);

CacheKey build_key(const SubQueryTemplate& t, VertexId root, WildcardBinding edge_values,
                   WildcardBinding leaf_values);
std::string root_prefix(const SubQueryTemplate& t, VertexId root);
std::string template_prefix(std::string_view template_name);

/// Inverse of CacheKey::render(). The template supplies how many bound
/// values belong to the edge group. Returns nullopt for malformed input.
std::optional<CacheKey> parse_key(std::string_view rendered, const SubQueryTemplate& t);
/// Template name of a rendered key (text before the first ':').
std::string_view key_template_name(std::string_view rendered);

std::string render_scalar(const Scalar& v);
std::optional<Scalar> parse_rendered_scalar(std::string_view text);

/// Leaf ids of the instance (template, root, bindings), ascending. Empty
/// when the root is missing or fails the root predicate.
std::vector<VertexId> execute_instance(const graph::GraphStore& g, kv::Transaction& tx,
                                       const SubQueryTemplate& t, VertexId root,
                                       const WildcardBinding& edge_values,
                                       const WildcardBinding& leaf_values);
/// Same, with the root vertex already loaded by the caller.
std::vector<VertexId> execute_instance(const graph::GraphStore& g, kv::Transaction& tx,
                                       const SubQueryTemplate& t, const Vertex& root,
                                       const WildcardBinding& edge_values,
                                       const WildcardBinding& leaf_values);

// JSON definition format, one object per template:
//   {"name":"SQ1","root":{"label":"watch-list"},"dir":"out",
//    "edge":{"label":"includes","props":[{"name":"IsActive","match":"?"}]},
//    "leaf":{"props":[{"name":"Status","match":"?"}]}}
SubQueryTemplate template_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SubQueryTemplate& t);
nlohmann::json scalar_to_json(const Scalar& v);
Scalar scalar_from_json(const nlohmann::json& j);
std::vector<SubQueryTemplate> load_templates_jsonl(std::istream& in);

}  // namespace hopcache::templates
