// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors
//
// Cache maintenance for read-write transactions. Runs inside the mutating
// transaction, so every cache delete or edit commits atomically with the
// graph change that caused it.
//
// Each change is handled in two phases. The first derives the impacted
// root ranges and cache keys from the change alone (plus the graph around
// it). The second acts on them: write-around clears/deletes; write-through
// clears the ranges and edits existing entries in place, and the
// pro-active variant also creates entries that did not exist. Both
// policies derive the same keys, so their reports agree on impact.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hopcache/cache.hpp"
#include "hopcache/graph_store.hpp"
#include "hopcache/templates.hpp"

namespace hopcache::maintenance {

enum class Mode { write_around, write_through };
enum class Refill { lazy, proactive };

struct MaintenancePolicy {
  Mode mode = Mode::write_around;
  Refill refill = Refill::lazy;  // write-through only

  std::string to_string() const;
  /// "write-around", "write-through" (lazy), "write-through:lazy",
  /// "write-through:proactive". Throws std::invalid_argument.
  static MaintenancePolicy parse(std::string_view text);
  friend bool operator==(const MaintenancePolicy&, const MaintenancePolicy&) = default;
};

struct RangeClear {
  std::string template_name;
  VertexId root;
  friend bool operator==(const RangeClear&, const RangeClear&) = default;
};

struct KeyEdit {
  std::string key;
  std::vector<VertexId> added;
  std::vector<VertexId> removed;
};

struct ImpactReport {
  ChangeKind kind = ChangeKind::add_vertex;
  // Keys derived from the change, deduplicated, in derivation order.
  // Write-around deletes them; write-through edits those that exist.
  std::vector<templates::CacheKey> keys;
  std::vector<RangeClear> ranges_cleared;
  std::vector<KeyEdit> values_edited;
  std::vector<std::string> entries_created;  // pro-active refill only
  // Incident-edge count of the changed vertex (vertex changes only).
  std::size_t incident_edges = 0;

  bool empty() const noexcept { return keys.empty() && ranges_cleared.empty(); }
  std::vector<std::string> rendered_keys() const;
  nlohmann::json to_json() const;
};

/// Per-template bound check for one report: edge add/delete and edge
/// property add/delete at most 2 keys, edge property update at most 4,
/// vertex delete or property change at most 1 cleared range, vertex
/// delete at most L keys and vertex property change at most 2L keys.
bool impact_bound_check(const GraphChange& change, const ImpactReport& report);

class Maintainer {
 public:
  Maintainer(const graph::GraphStore& graph, const cache::CacheStore& cache,
             MaintenancePolicy policy = {});

  const MaintenancePolicy& policy() const noexcept { return policy_; }

  /// Dispatches on change.kind; add_vertex yields an empty report.
  ImpactReport on_change(kv::Transaction& tx, const GraphChange& change,
                         const std::vector<templates::TemplatePtr>& maintained) const;

  ImpactReport on_delete_vertex(kv::Transaction& tx, const GraphChange& change,
                                const std::vector<templates::TemplatePtr>& maintained) const;
  ImpactReport on_vertex_property_change(kv::Transaction& tx, const GraphChange& change,
                                         const std::vector<templates::TemplatePtr>& maintained) const;
  ImpactReport on_edge_add_delete(kv::Transaction& tx, const GraphChange& change,
                                  const std::vector<templates::TemplatePtr>& maintained) const;
  ImpactReport on_edge_property_change(kv::Transaction& tx, const GraphChange& change,
                                       const std::vector<templates::TemplatePtr>& maintained) const;

 private:
  struct Impact;

  void delete_keys_for_root(const templates::TemplatePtr& t, const Vertex& v, Impact& out) const;
  void delete_keys_for_leaf(const templates::TemplatePtr& t, const Vertex& leaf,
                            const std::vector<Edge>& incident, kv::Transaction& tx,
                            Impact& out) const;
  void handle_edge_change(const templates::TemplatePtr& t, const Edge& e, const Vertex& out_v,
                          const Vertex& in_v, Impact& out) const;

  ImpactReport apply(kv::Transaction& tx, ChangeKind kind, Impact& impact) const;
  bool is_member(kv::Transaction& tx, const templates::SubQueryTemplate& t,
                 const templates::CacheKey& key, VertexId leaf) const;
  void refill_root(kv::Transaction& tx, const templates::SubQueryTemplate& t, VertexId root,
                   ImpactReport& report) const;

  const graph::GraphStore& graph_;
  const cache::CacheStore& cache_;
  MaintenancePolicy policy_;
};

}  // namespace hopcache::maintenance
