// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include "hopcache/graph_store.hpp"

#include <algorithm>
#include <unordered_map>

#include "hopcache/encoding.hpp"

namespace hopcache::graph {

void IdAllocator::advance_vertex_to(std::uint64_t v) {
  auto cur = next_vertex_.load();
  while (cur < v && !next_vertex_.compare_exchange_weak(cur, v)) {
  }
}

void IdAllocator::advance_edge_to(std::uint64_t e) {
  auto cur = next_edge_.load();
  while (cur < e && !next_edge_.compare_exchange_weak(cur, e)) {
  }
}

namespace keys {

std::string vertex(VertexId id) {
  std::string k(kVertexPrefix);
  encoding::put_u64(k, id.value);
  return k;
}

std::string adjacency_prefix(VertexId id, Direction d) {
  std::string k(kAdjacencyPrefix);
  k += d == Direction::in ? "in/" : "out/";
  encoding::put_u64(k, id.value);
  k.push_back('/');
  return k;
}

std::string adjacency(VertexId id, Direction d, EdgeId e) {
  auto k = adjacency_prefix(id, d);
  encoding::put_u64(k, e.value);
  return k;
}

std::string edge_index(EdgeId e) {
  std::string k = "G/X/";
  encoding::put_u64(k, e.value);
  return k;
}

}  // namespace keys

GraphStore::GraphStore(std::shared_ptr<IdAllocator> ids) : ids_(std::move(ids)) {}

void GraphStore::subscribe(ChangeListener listener) { listeners_.push_back(std::move(listener)); }

void GraphStore::emit(kv::Transaction& tx, const GraphChange& change) {
  for (const auto& l : listeners_) l(tx, change);
}

Vertex GraphStore::require_vertex(kv::Transaction& tx, VertexId id, GraphErrorCode code) const {
  auto v = get_vertex(tx, id);
  if (!v) throw GraphError(code, "vertex " + std::to_string(id.value) + " not found");
  return std::move(*v);
}

std::optional<Vertex> GraphStore::get_vertex(kv::Transaction& tx, VertexId id) const {
  auto raw = tx.get(keys::vertex(id));
  if (!raw) return std::nullopt;
  return encoding::decode_vertex(*raw);
}

std::optional<Edge> GraphStore::get_edge(kv::Transaction& tx, EdgeId id) const {
  auto ends = tx.get(keys::edge_index(id));
  if (!ends) return std::nullopt;
  VertexId out{encoding::read_u64(*ends, 0)};
  auto raw = tx.get(keys::adjacency(out, Direction::out, id));
  if (!raw) return std::nullopt;
  return encoding::decode_edge(*raw);
}

std::vector<Edge> GraphStore::edges(kv::Transaction& tx, VertexId id, Direction d) const {
  std::vector<Edge> out;
  auto scan = [&](Direction single) {
    for (auto& [k, v] : tx.range_scan(keys::adjacency_prefix(id, single))) {
      out.push_back(encoding::decode_edge(v));
    }
  };
  if (d == Direction::out || d == Direction::both) scan(Direction::out);
  if (d == Direction::in || d == Direction::both) scan(Direction::in);
  if (d == Direction::both) {
    std::sort(out.begin(), out.end(), [](const Edge& a, const Edge& b) { return a.id < b.id; });
    out.erase(std::unique(out.begin(), out.end(),
                          [](const Edge& a, const Edge& b) { return a.id == b.id; }),
              out.end());
  }
  return out;
}

void GraphStore::write_edge(kv::Transaction& tx, const Edge& e) {
  auto rec = encoding::encode_edge(e);
  tx.set(keys::adjacency(e.out, Direction::out, e.id), rec);
  tx.set(keys::adjacency(e.in, Direction::in, e.id), rec);
}

void GraphStore::erase_edge(kv::Transaction& tx, const Edge& e) {
  tx.erase(keys::adjacency(e.out, Direction::out, e.id));
  tx.erase(keys::adjacency(e.in, Direction::in, e.id));
  tx.erase(keys::edge_index(e.id));
}

VertexId GraphStore::add_vertex(kv::Transaction& tx, std::string label, PropertyMap props) {
  Vertex v{ids_->next_vertex(), std::move(label), std::move(props)};
  tx.set(keys::vertex(v.id), encoding::encode_vertex(v));
  GraphChange c{ChangeKind::add_vertex};
  c.vertex = v;
  emit(tx, c);
  return v.id;
}

void GraphStore::delete_vertex(kv::Transaction& tx, VertexId id) {
  Vertex v = require_vertex(tx, id, GraphErrorCode::not_found);
  std::vector<Edge> incident = edges(tx, id, Direction::both);

  for (const auto& e : incident) {
    erase_edge(tx, e);
    GraphChange c{ChangeKind::delete_edge};
    c.edge = e;
    c.out_vertex = e.out == id ? v : get_vertex(tx, e.out);
    c.in_vertex = e.in == id ? v : get_vertex(tx, e.in);
    emit(tx, c);
  }

  tx.erase(keys::vertex(id));
  GraphChange c{ChangeKind::delete_vertex};
  c.vertex = std::move(v);
  c.incident_edges = std::move(incident);
  emit(tx, c);
}

Edge GraphStore::add_edge(kv::Transaction& tx, VertexId out, VertexId in, std::string label,
                          PropertyMap props) {
  Vertex out_v = require_vertex(tx, out, GraphErrorCode::endpoint_not_found);
  Vertex in_v = out == in ? out_v : require_vertex(tx, in, GraphErrorCode::endpoint_not_found);
  Edge e{ids_->next_edge(), out, in, std::move(label), std::move(props)};
  write_edge(tx, e);
  std::string ends;
  encoding::put_u64(ends, out.value);
  encoding::put_u64(ends, in.value);
  tx.set(keys::edge_index(e.id), ends);

  GraphChange c{ChangeKind::add_edge};
  c.edge = e;
  c.out_vertex = std::move(out_v);
  c.in_vertex = std::move(in_v);
  emit(tx, c);
  return e;
}

void GraphStore::delete_edge(kv::Transaction& tx, EdgeId id) {
  auto e = get_edge(tx, id);
  if (!e) throw GraphError(GraphErrorCode::not_found, "edge " + std::to_string(id.value) + " not found");
  erase_edge(tx, *e);
  GraphChange c{ChangeKind::delete_edge};
  c.out_vertex = get_vertex(tx, e->out);
  c.in_vertex = e->out == e->in ? c.out_vertex : get_vertex(tx, e->in);
  c.edge = std::move(*e);
  emit(tx, c);
}

void GraphStore::set_vertex_property(kv::Transaction& tx, VertexId id, const std::string& name,
                                     std::optional<Scalar> value) {
  Vertex v = require_vertex(tx, id, GraphErrorCode::not_found);
  std::optional<Scalar> old;
  if (const auto* p = v.prop(name)) old = *p;
  if (old == value) return;

  Vertex updated = v;
  if (value) {
    updated.props.insert_or_assign(name, *value);
  } else {
    updated.props.erase(name);
  }
  tx.set(keys::vertex(id), encoding::encode_vertex(updated));

  GraphChange c{ChangeKind::vertex_prop_change};
  c.vertex = std::move(v);
  c.prop_name = name;
  c.old_value = std::move(old);
  c.new_value = std::move(value);
  emit(tx, c);
}

void GraphStore::set_edge_property(kv::Transaction& tx, EdgeId id, const std::string& name,
                                   std::optional<Scalar> value) {
  auto e = get_edge(tx, id);
  if (!e) throw GraphError(GraphErrorCode::not_found, "edge " + std::to_string(id.value) + " not found");
  std::optional<Scalar> old;
  if (const auto* p = e->prop(name)) old = *p;
  if (old == value) return;

  Edge updated = *e;
  if (value) {
    updated.props.insert_or_assign(name, *value);
  } else {
    updated.props.erase(name);
  }
  write_edge(tx, updated);

  GraphChange c{ChangeKind::edge_prop_change};
  c.out_vertex = get_vertex(tx, e->out);
  c.in_vertex = e->out == e->in ? c.out_vertex : get_vertex(tx, e->in);
  c.edge = std::move(*e);
  c.prop_name = name;
  c.old_value = std::move(old);
  c.new_value = std::move(value);
  emit(tx, c);
}

std::vector<VertexId> GraphStore::neighbors(kv::Transaction& tx, VertexId root, Direction d,
                                            const std::optional<std::string>& edge_label,
                                            const EdgePredicate& edge_pred,
                                            const VertexPredicate& leaf_pred) const {
  require_vertex(tx, root, GraphErrorCode::not_found);
  return expand(tx, root, d, edge_label, edge_pred, leaf_pred);
}

std::vector<VertexId> GraphStore::expand(kv::Transaction& tx, VertexId root, Direction d,
                                         const std::optional<std::string>& edge_label,
                                         const EdgePredicate& edge_pred,
                                         const VertexPredicate& leaf_pred) const {
  std::vector<VertexId> out;
  std::unordered_map<VertexId, bool> verdicts;
  // A self-loop shows up in both scans of a `both` expansion; the verdict
  // map makes the second sighting a no-op.
  auto scan = [&](Direction single) {
    for (const auto& [k, raw] : tx.range_scan(keys::adjacency_prefix(root, single))) {
      if (edge_label && encoding::edge_label(raw) != *edge_label) continue;
      if (edge_pred && !edge_pred(encoding::decode_edge(raw))) continue;
      const VertexId far = encoding::edge_end(raw, single == Direction::out ? Direction::in : Direction::out);
      auto [it, fresh] = verdicts.try_emplace(far, false);
      if (!fresh) continue;
      auto leaf = get_vertex(tx, far);
      it->second = leaf && (!leaf_pred || leaf_pred(*leaf));
      if (it->second) out.push_back(far);
    }
  };
  if (d == Direction::out || d == Direction::both) scan(Direction::out);
  if (d == Direction::in || d == Direction::both) scan(Direction::in);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Vertex> GraphStore::all_vertices(kv::Transaction& tx) const {
  std::vector<Vertex> out;
  for (auto& [k, v] : tx.range_scan(kVertexPrefix)) out.push_back(encoding::decode_vertex(v));
  return out;
}

std::vector<Edge> GraphStore::all_edges(kv::Transaction& tx) const {
  std::vector<Edge> out;
  for (auto& [k, v] : tx.range_scan("G/E/out/")) out.push_back(encoding::decode_edge(v));
  return out;
}

}  // namespace hopcache::graph
