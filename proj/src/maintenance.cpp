// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include "hopcache/maintenance.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace hopcache::maintenance {

using templates::CacheKey;
using templates::SubQueryTemplate;
using templates::TemplatePtr;

std::string MaintenancePolicy::to_string() const {
  if (mode == Mode::write_around) return "write-around";
  return refill == Refill::lazy ? "write-through:lazy" : "write-through:proactive";
}

MaintenancePolicy MaintenancePolicy::parse(std::string_view text) {
  if (text == "write-around") return {Mode::write_around, Refill::lazy};
  if (text == "write-through" || text == "write-through:lazy") return {Mode::write_through, Refill::lazy};
  if (text == "write-through:proactive") return {Mode::write_through, Refill::proactive};
  throw std::invalid_argument("unknown maintenance policy '" + std::string(text) + "'");
}

std::vector<std::string> ImpactReport::rendered_keys() const {
  std::vector<std::string> out;
  out.reserve(keys.size());
  for (const auto& k : keys) out.push_back(k.render());
  return out;
}

nlohmann::json ImpactReport::to_json() const {
  nlohmann::json j;
  j["kind"] = std::string(hopcache::to_string(kind));
  j["keys"] = rendered_keys();
  j["ranges"] = nlohmann::json::array();
  for (const auto& r : ranges_cleared) j["ranges"].push_back({{"template", r.template_name}, {"root", r.root.value}});
  j["edited"] = nlohmann::json::array();
  for (const auto& e : values_edited) {
    nlohmann::json added = nlohmann::json::array();
    nlohmann::json removed = nlohmann::json::array();
    for (auto id : e.added) added.push_back(id.value);
    for (auto id : e.removed) removed.push_back(id.value);
    j["edited"].push_back({{"key", e.key}, {"added", added}, {"removed", removed}});
  }
  j["created"] = entries_created;
  j["incident_edges"] = incident_edges;
  return j;
}

bool impact_bound_check(const GraphChange& change, const ImpactReport& report) {
  std::map<std::string, std::size_t> keys;
  std::map<std::string, std::size_t> ranges;
  for (const auto& k : report.keys) ++keys[k.template_name];
  for (const auto& r : report.ranges_cleared) ++ranges[r.template_name];

  std::size_t key_bound = 0;
  std::size_t range_bound = 0;
  const std::size_t L = report.incident_edges;
  switch (change.kind) {
    case ChangeKind::add_vertex: break;
    case ChangeKind::add_edge:
    case ChangeKind::delete_edge: key_bound = 2; break;
    case ChangeKind::edge_prop_change:
      key_bound = change.is_property_add() || change.is_property_delete() ? 2 : 4;
      break;
    case ChangeKind::delete_vertex:
      key_bound = L;
      range_bound = 1;
      break;
    case ChangeKind::vertex_prop_change:
      key_bound = 2 * L;
      range_bound = 1;
      break;
  }
  for (const auto& [name, n] : keys) {
    if (n > key_bound) return false;
  }
  for (const auto& [name, n] : ranges) {
    if (n > range_bound) return false;
  }
  return true;
}

// Phase-one output: impacted ranges and keys, each key with the leaf ids
// whose membership the change may have altered.
struct Maintainer::Impact {
  struct Key {
    TemplatePtr tmpl;
    CacheKey key;
    std::string rendered;
    std::vector<VertexId> candidates;
  };
  std::vector<std::pair<TemplatePtr, VertexId>> ranges;
  std::vector<Key> keys;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t incident_edges = 0;

  void add_range(const TemplatePtr& t, VertexId root) {
    for (const auto& [rt, rr] : ranges) {
      if (rt->name == t->name && rr == root) return;
    }
    ranges.emplace_back(t, root);
  }

  void add_key(const TemplatePtr& t, CacheKey key, VertexId leaf) {
    auto rendered = key.render();
    auto [it, fresh] = index.try_emplace(rendered, keys.size());
    if (fresh) {
      keys.push_back(Key{t, std::move(key), std::move(rendered), {leaf}});
      return;
    }
    auto& c = keys[it->second].candidates;
    if (std::find(c.begin(), c.end(), leaf) == c.end()) c.push_back(leaf);
  }
};

Maintainer::Maintainer(const graph::GraphStore& graph, const cache::CacheStore& cache,
                       MaintenancePolicy policy)
    : graph_(graph), cache_(cache), policy_(policy) {}

ImpactReport Maintainer::on_change(kv::Transaction& tx, const GraphChange& change,
                                   const std::vector<TemplatePtr>& maintained) const {
  switch (change.kind) {
    case ChangeKind::add_vertex: return ImpactReport{};
    case ChangeKind::delete_vertex: return on_delete_vertex(tx, change, maintained);
    case ChangeKind::vertex_prop_change: return on_vertex_property_change(tx, change, maintained);
    case ChangeKind::add_edge:
    case ChangeKind::delete_edge: return on_edge_add_delete(tx, change, maintained);
    case ChangeKind::edge_prop_change: return on_edge_property_change(tx, change, maintained);
  }
  return {};
}

void Maintainer::delete_keys_for_root(const TemplatePtr& t, const Vertex& v, Impact& out) const {
  if (templates::qualifies(t->root, v)) out.add_range(t, v.id);
}

void Maintainer::delete_keys_for_leaf(const TemplatePtr& t, const Vertex& leaf,
                                      const std::vector<Edge>& incident, kv::Transaction& tx,
                                      Impact& out) const {
  if (!templates::qualifies(t->leaf, leaf)) return;
  auto wl = templates::extract_wildcard_values(t->leaf, leaf);
  for (const auto& e : incident) {
    VertexId root;
    if (t->direction == Direction::out) {
      if (e.in != leaf.id) continue;
      root = e.out;
    } else if (t->direction == Direction::in) {
      if (e.out != leaf.id) continue;
      root = e.in;
    } else {
      root = e.other(leaf.id);
    }
    if (!templates::qualifies(t->edge, e)) continue;
    std::optional<Vertex> r = root == leaf.id ? std::optional<Vertex>(leaf) : graph_.get_vertex(tx, root);
    if (!r || !templates::qualifies(t->root, *r)) continue;
    out.add_key(t, templates::build_key(*t, root, templates::extract_wildcard_values(t->edge, e), wl),
                leaf.id);
  }
}

void Maintainer::handle_edge_change(const TemplatePtr& t, const Edge& e, const Vertex& out_v,
                                    const Vertex& in_v, Impact& out) const {
  if (!templates::qualifies(t->edge, e)) return;
  auto we = templates::extract_wildcard_values(t->edge, e);
  auto consider = [&](const Vertex& root, const Vertex& leaf) {
    if (!templates::qualifies(t->root, root) || !templates::qualifies(t->leaf, leaf)) return;
    out.add_key(t, templates::build_key(*t, root.id, we, templates::extract_wildcard_values(t->leaf, leaf)),
                leaf.id);
  };
  if (t->direction == Direction::out || t->direction == Direction::both) consider(out_v, in_v);
  if (t->direction == Direction::in || t->direction == Direction::both) consider(in_v, out_v);
}

ImpactReport Maintainer::on_delete_vertex(kv::Transaction& tx, const GraphChange& change,
                                          const std::vector<TemplatePtr>& maintained) const {
  Impact impact;
  const Vertex& v = change.vertex.value();
  impact.incident_edges = change.incident_edges.size();
  for (const auto& t : maintained) {
    delete_keys_for_root(t, v, impact);
    delete_keys_for_leaf(t, v, change.incident_edges, tx, impact);
  }
  return apply(tx, change.kind, impact);
}

ImpactReport Maintainer::on_vertex_property_change(kv::Transaction& tx, const GraphChange& change,
                                                   const std::vector<TemplatePtr>& maintained) const {
  Impact impact;
  const Vertex& old_v = change.vertex.value();
  const std::string& prop = change.prop_name.value();
  Vertex new_v = old_v;
  if (change.new_value) {
    new_v.props.insert_or_assign(prop, *change.new_value);
  } else {
    new_v.props.erase(prop);
  }

  std::optional<std::vector<Edge>> incident;
  for (const auto& t : maintained) {
    if (t->root.references(prop)) {
      delete_keys_for_root(t, old_v, impact);
      delete_keys_for_root(t, new_v, impact);
    }
    if (t->leaf.references(prop)) {
      if (!incident) {
        incident = graph_.edges(tx, old_v.id, Direction::both);
        impact.incident_edges = incident->size();
      }
      delete_keys_for_leaf(t, old_v, *incident, tx, impact);
      delete_keys_for_leaf(t, new_v, *incident, tx, impact);
    }
  }
  return apply(tx, change.kind, impact);
}

ImpactReport Maintainer::on_edge_add_delete(kv::Transaction& tx, const GraphChange& change,
                                            const std::vector<TemplatePtr>& maintained) const {
  Impact impact;
  if (change.out_vertex && change.in_vertex) {
    for (const auto& t : maintained) {
      handle_edge_change(t, change.edge.value(), *change.out_vertex, *change.in_vertex, impact);
    }
  }
  return apply(tx, change.kind, impact);
}

ImpactReport Maintainer::on_edge_property_change(kv::Transaction& tx, const GraphChange& change,
                                                 const std::vector<TemplatePtr>& maintained) const {
  Impact impact;
  const Edge& old_e = change.edge.value();
  const std::string& prop = change.prop_name.value();
  Edge new_e = old_e;
  if (change.new_value) {
    new_e.props.insert_or_assign(prop, *change.new_value);
  } else {
    new_e.props.erase(prop);
  }
  if (change.out_vertex && change.in_vertex) {
    for (const auto& t : maintained) {
      if (!t->edge.references(prop)) continue;
      handle_edge_change(t, old_e, *change.out_vertex, *change.in_vertex, impact);
      handle_edge_change(t, new_e, *change.out_vertex, *change.in_vertex, impact);
    }
  }
  return apply(tx, change.kind, impact);
}

bool Maintainer::is_member(kv::Transaction& tx, const SubQueryTemplate& t, const CacheKey& key,
                           VertexId leaf) const {
  auto root = graph_.get_vertex(tx, key.root);
  if (!root || !templates::qualifies(t.root, *root)) return false;
  auto leaf_v = leaf == key.root ? root : graph_.get_vertex(tx, leaf);
  if (!leaf_v || !templates::evaluate(templates::specialize(t.leaf, key.leaf_values), *leaf_v)) {
    return false;
  }
  const auto edge_pred = templates::specialize(t.edge, key.edge_values);
  for (const auto& e : graph_.edges(tx, key.root, t.direction)) {
    VertexId far = t.direction == Direction::out  ? e.in
                   : t.direction == Direction::in ? e.out
                                                  : e.other(key.root);
    if (far == leaf && templates::evaluate(edge_pred, e)) return true;
  }
  return false;
}

void Maintainer::refill_root(kv::Transaction& tx, const SubQueryTemplate& t, VertexId root_id,
                             ImpactReport& report) const {
  auto root = graph_.get_vertex(tx, root_id);
  if (!root || !templates::qualifies(t.root, *root)) return;
  std::map<std::string, CacheKey> instances;
  for (const auto& e : graph_.edges(tx, root_id, t.direction)) {
    if (!templates::qualifies(t.edge, e)) continue;
    VertexId far = t.direction == Direction::out  ? e.in
                   : t.direction == Direction::in ? e.out
                                                  : e.other(root_id);
    auto leaf = far == root_id ? root : graph_.get_vertex(tx, far);
    if (!leaf || !templates::qualifies(t.leaf, *leaf)) continue;
    auto key = templates::build_key(t, root_id, templates::extract_wildcard_values(t.edge, e),
                                    templates::extract_wildcard_values(t.leaf, *leaf));
    auto rendered = key.render();
    instances.try_emplace(std::move(rendered), std::move(key));
  }
  for (const auto& [rendered, key] : instances) {
    auto ids = templates::execute_instance(graph_, tx, t, *root, key.edge_values, key.leaf_values);
    cache_.put_entry(tx, rendered, ids);
    report.entries_created.push_back(rendered);
  }
}

ImpactReport Maintainer::apply(kv::Transaction& tx, ChangeKind kind, Impact& impact) const {
  ImpactReport report;
  report.kind = kind;
  report.incident_edges = impact.incident_edges;

  for (const auto& [t, root] : impact.ranges) {
    cache_.clear_root(tx, *t, root);
    report.ranges_cleared.push_back(RangeClear{t->name, root});
  }
  for (const auto& k : impact.keys) report.keys.push_back(k.key);

  if (policy_.mode == Mode::write_around) {
    for (const auto& k : impact.keys) cache_.delete_entry(tx, k.rendered);
    return report;
  }

  auto range_cleared = [&](const Impact::Key& k) {
    return std::any_of(impact.ranges.begin(), impact.ranges.end(), [&](const auto& r) {
      return r.first->name == k.tmpl->name && r.second == k.key.root;
    });
  };

  for (const auto& k : impact.keys) {
    if (range_cleared(k)) continue;
    std::optional<std::vector<VertexId>> current;
    try {
      current = cache_.get_entry(tx, k.rendered);
    } catch (const cache::CacheError&) {
      // A corrupt entry cannot be edited; drop it and let a later miss
      // repopulate it.
      cache_.delete_entry(tx, k.rendered);
    }

    if (!current) {
      if (policy_.refill != Refill::proactive) continue;
      bool any_member = std::any_of(k.candidates.begin(), k.candidates.end(), [&](VertexId leaf) {
        return is_member(tx, *k.tmpl, k.key, leaf);
      });
      if (!any_member) continue;
      auto ids = templates::execute_instance(graph_, tx, *k.tmpl, k.key.root, k.key.edge_values,
                                             k.key.leaf_values);
      cache_.put_entry(tx, k.rendered, ids);
      report.entries_created.push_back(k.rendered);
      continue;
    }

    KeyEdit edit{k.rendered, {}, {}};
    auto& ids = *current;
    for (VertexId leaf : k.candidates) {
      bool member = is_member(tx, *k.tmpl, k.key, leaf);
      auto it = std::lower_bound(ids.begin(), ids.end(), leaf);
      bool present = it != ids.end() && *it == leaf;
      if (member && !present) {
        ids.insert(it, leaf);
        edit.added.push_back(leaf);
      } else if (!member && present) {
        ids.erase(it);
        edit.removed.push_back(leaf);
      }
    }
    if (!edit.added.empty() || !edit.removed.empty()) {
      cache_.put_entry(tx, k.rendered, ids);
      report.values_edited.push_back(std::move(edit));
    }
  }

  if (policy_.refill == Refill::proactive) {
    for (const auto& [t, root] : impact.ranges) refill_root(tx, *t, root, report);
  }
  return report;
}

}  // namespace hopcache::maintenance
