// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors
//
// Directed property graph over the kv store. Key layout in the graph
// subspace (ids are 8-byte big-endian so scans come back in id order):
//
//   G/V/<vid>               vertex record
//   G/E/out/<vid>/<eid>     edge record, under its out-vertex
//   G/E/in/<vid>/<eid>      edge record, under its in-vertex
//   G/X/<eid>               (out vid, in vid) lookup for edge ids
//
// Every mutation notifies the subscribed listeners synchronously, inside
// the caller's transaction, after the mutation has been buffered.

#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hopcache/graph_types.hpp"
#include "hopcache/kv_store.hpp"

namespace hopcache::graph {

inline constexpr std::string_view kGraphPrefix = "G/";
inline constexpr std::string_view kVertexPrefix = "G/V/";
inline constexpr std::string_view kAdjacencyPrefix = "G/E/";

enum class GraphErrorCode { not_found, endpoint_not_found };

class GraphError : public std::runtime_error {
 public:
  GraphError(GraphErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  GraphErrorCode code() const noexcept { return code_; }

 private:
  GraphErrorCode code_;
};

/// Hands out vertex and edge ids. Shared by every GraphStore over the
/// same kv store so ids stay unique; ids from aborted transactions are
/// skipped, never reissued.
class IdAllocator {
 public:
  explicit IdAllocator(std::uint64_t first_vertex = 1, std::uint64_t first_edge = 1)
      : next_vertex_(first_vertex), next_edge_(first_edge) {}

  VertexId next_vertex() { return VertexId{next_vertex_.fetch_add(1)}; }
  EdgeId next_edge() { return EdgeId{next_edge_.fetch_add(1)}; }
  /// Moves the vertex counter forward to at least `v`.
  void advance_vertex_to(std::uint64_t v);
  /// Moves the edge counter forward to at least `e`.
  void advance_edge_to(std::uint64_t e);
  std::uint64_t peek_vertex() const { return next_vertex_.load(); }
  std::uint64_t peek_edge() const { return next_edge_.load(); }

 private:
  std::atomic<std::uint64_t> next_vertex_;
  std::atomic<std::uint64_t> next_edge_;
};

namespace keys {
std::string vertex(VertexId id);
std::string adjacency_prefix(VertexId id, Direction d);  // d must be out or in
std::string adjacency(VertexId id, Direction d, EdgeId e);
std::string edge_index(EdgeId e);
}  // namespace keys

using ChangeListener = std::function<void(kv::Transaction&, const GraphChange&)>;
using EdgePredicate = std::function<bool(const Edge&)>;
using VertexPredicate = std::function<bool(const Vertex&)>;

class GraphStore {
 public:
  explicit GraphStore(std::shared_ptr<IdAllocator> ids = std::make_shared<IdAllocator>());

  /// Listeners must be registered before the store is used concurrently.
  void subscribe(ChangeListener listener);

  IdAllocator& ids() noexcept { return *ids_; }

  VertexId add_vertex(kv::Transaction& tx, std::string label, PropertyMap props = {});
  /// Removes the vertex and all incident edges. Emits one delete_edge per
  /// incident edge followed by one delete_vertex.
  void delete_vertex(kv::Transaction& tx, VertexId id);
  Edge add_edge(kv::Transaction& tx, VertexId out, VertexId in, std::string label,
                PropertyMap props = {});
  void delete_edge(kv::Transaction& tx, EdgeId id);
  /// `value == nullopt` deletes the property. Setting a property to its
  /// current value, or deleting an absent one, is a no-op with no event.
  void set_vertex_property(kv::Transaction& tx, VertexId id, const std::string& name,
                           std::optional<Scalar> value);
  void set_edge_property(kv::Transaction& tx, EdgeId id, const std::string& name,
                         std::optional<Scalar> value);

  std::optional<Vertex> get_vertex(kv::Transaction& tx, VertexId id) const;
  std::optional<Edge> get_edge(kv::Transaction& tx, EdgeId id) const;
  /// Incident edges in ascending edge-id order. `both` returns each
  /// self-loop once.
  std::vector<Edge> edges(kv::Transaction& tx, VertexId id, Direction d) const;

  /// Far-end vertex ids of edges leaving `root` in direction `d` whose
  /// label matches (when given) and that pass both filters. Ascending,
  /// deduplicated. Throws not_found when the root is absent.
  std::vector<VertexId> neighbors(kv::Transaction& tx, VertexId root, Direction d,
                                  const std::optional<std::string>& edge_label,
                                  const EdgePredicate& edge_pred,
                                  const VertexPredicate& leaf_pred) const;
  /// neighbors() without the root existence check: one adjacency scan per
  /// direction plus one read per distinct far vertex whose edge qualifies.
  std::vector<VertexId> expand(kv::Transaction& tx, VertexId root, Direction d,
                               const std::optional<std::string>& edge_label,
                               const EdgePredicate& edge_pred,
                               const VertexPredicate& leaf_pred) const;

  std::vector<Vertex> all_vertices(kv::Transaction& tx) const;
  std::vector<Edge> all_edges(kv::Transaction& tx) const;

 private:
  void emit(kv::Transaction& tx, const GraphChange& change);
  void write_edge(kv::Transaction& tx, const Edge& e);
  void erase_edge(kv::Transaction& tx, const Edge& e);
  Vertex require_vertex(kv::Transaction& tx, VertexId id, GraphErrorCode code) const;

  std::shared_ptr<IdAllocator> ids_;
  std::vector<ChangeListener> listeners_;
};

}  // namespace hopcache::graph
