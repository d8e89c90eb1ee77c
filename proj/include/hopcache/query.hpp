// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors
//
// Traversal language, a small Gremlin-like subset:
//
//   query    := "g.V(" selector? ")" step* final
//   selector := INT | STRING          built-in id, or external alias
//   step     := ".hasLabel(" STR ")"
//             | ".has(" STR "," literal ")"
//             | ".has(" STR ", neq(" literal "))"
//             | ".outE(" STR ")" | ".inE(" STR ")" | ".bothE(" STR ")"
//             | ".inV()" | ".outV()" | ".otherV()"
//             | ".hasId(start)" | ".hasId(neq(start))"
//   final    := ".valueMap()" | ".count()" | ".dedup()" | ".id()"
//   literal  := STR | INT | true | false
//
// An edge step must be followed (after optional edge .has filters) by the
// matching vertex move: outE/inV, inE/outV or bothE/otherV. hasId(start)
// compares against the vertices selected by g.V(...) and its filters; it
// is what rewrite_id_filter() produces. A neq filter passes vertices that
// lack the property.
//
// Every stage yields a deduplicated, ascending list of vertex ids.

#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "hopcache/graph_types.hpp"
#include "hopcache/templates.hpp"

namespace hopcache::query {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

enum class StepKind { has_label, has, has_id, out_e, in_e, both_e, in_v, out_v, other_v };

struct Step {
  StepKind kind = StepKind::has_label;
  std::string name;  // label for has_label and edge steps, property for has
  Scalar value;      // has only
  bool negated = false;

  std::string to_string() const;
  friend bool operator==(const Step&, const Step&) = default;
};

enum class FinalClause { values, count, dedup, id };

using Selector = std::variant<VertexId, std::string>;

struct Traversal {
  std::optional<Selector> start;
  std::vector<Step> steps;
  FinalClause final = FinalClause::id;

  std::string to_string() const;
  friend bool operator==(const Traversal&, const Traversal&) = default;
};

Traversal parse(std::string_view text);

struct PropTest {
  std::string name;
  Scalar value;
  friend bool operator==(const PropTest&, const PropTest&) = default;
};

/// Conjunction of vertex filters from consecutive filter steps.
struct VertexFilter {
  std::vector<std::string> labels;
  std::vector<PropTest> equals;
  std::vector<PropTest> not_equals;
  bool id_in_start = false;      // hasId(start)
  bool id_not_in_start = false;  // hasId(neq(start))

  /// Checks every filter except the id filters.
  bool accepts(const Vertex& v) const;
  bool needs_vertex() const noexcept { return !labels.empty() || !equals.empty() || !not_equals.empty(); }
  bool has_id_filter() const noexcept { return id_in_start || id_not_in_start; }
};

struct TemplateMatch {
  templates::TemplatePtr tmpl;
  templates::WildcardBinding edge_values;
  templates::WildcardBinding leaf_values;
  // The filters applied to this hop's roots already imply P^r, so a root
  // need not be loaded to check it.
  bool root_entailed = false;
};

struct Hop {
  Direction direction = Direction::out;
  std::string edge_label;
  std::vector<PropTest> edge_equals;
  std::vector<PropTest> edge_not_equals;
  VertexFilter leaf;
  std::optional<TemplateMatch> match;

  bool accepts_edge(const Edge& e) const;
};

struct QueryPlan {
  std::optional<Selector> start;
  VertexFilter start_filter;
  std::vector<Hop> hops;
  FinalClause final = FinalClause::id;

  std::size_t matched_hops() const;
  /// Template names used by matched hops, in hop order.
  std::vector<std::string> matched_templates() const;
};

/// Splits the traversal into hops and matches each against `enabled`
/// (first structural match wins). Throws std::invalid_argument for step
/// sequences parse() would have rejected.
QueryPlan decompose(const Traversal& t, const std::vector<templates::TemplatePtr>& enabled);

/// Structural unification of one hop with a template: direction, edge
/// label, edge equality terms and leaf label/equality terms must line up
/// exactly; query values bind wildcards and must equal exact values.
std::optional<TemplateMatch> match_hop(const Hop& hop, const VertexFilter& root_filter,
                                       const templates::SubQueryTemplate& t);

/// Replaces later has(u, x) / has(u, neq(x)) vertex filters with
/// hasId(start) / hasId(neq(start)) when the start filters contain
/// has(u, x) and u is one of `unique_props`. Returns the input unchanged
/// when nothing applies.
Traversal rewrite_id_filter(const Traversal& t, const std::set<std::string>& unique_props);

/// Sorts copies of both inputs and merges them. `comparisons` counts
/// element comparisons in the sorts and the merge.
std::vector<VertexId> sorted_intersection(std::vector<VertexId> a, std::vector<VertexId> b,
                                          std::uint64_t* comparisons = nullptr);
/// Nested-loop reference: every element of `a` against every element of
/// `b`. Output ascending.
std::vector<VertexId> naive_intersection(const std::vector<VertexId>& a,
                                         const std::vector<VertexId>& b,
                                         std::uint64_t* comparisons = nullptr);

/// 1 / ((1 - f) + f / k). Throws std::domain_error unless 0 <= f <= 1 and
/// k > 0.
double amdahl_speedup(double f, double k);

}  // namespace hopcache::query
