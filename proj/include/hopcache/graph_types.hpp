// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace hopcache {

/// Engine-assigned vertex identifier. Never reused after deletion.
struct VertexId {
  std::uint64_t value = 0;

  constexpr VertexId() = default;
  constexpr explicit VertexId(std::uint64_t v) : value(v) {}
  friend constexpr auto operator<=>(VertexId, VertexId) = default;
};

struct EdgeId {
  std::uint64_t value = 0;

  constexpr EdgeId() = default;
  constexpr explicit EdgeId(std::uint64_t v) : value(v) {}
  friend constexpr auto operator<=>(EdgeId, EdgeId) = default;
};

inline std::ostream& operator<<(std::ostream& os, VertexId id) { return os << id.value; }
inline std::ostream& operator<<(std::ostream& os, EdgeId id) { return os << "e" << id.value; }

/// Property values are limited to booleans, integers and strings.
using Scalar = std::variant<bool, std::int64_t, std::string>;

/// Name-ordered property map stored as one sorted vector. Records carry a
/// handful of properties, so this beats a node-based map on decode.
class PropertyMap {
 public:
  using value_type = std::pair<std::string, Scalar>;
  using iterator = std::vector<value_type>::iterator;
  using const_iterator = std::vector<value_type>::const_iterator;

  PropertyMap() = default;
  PropertyMap(std::initializer_list<value_type> init) {
    for (const auto& [k, v] : init) insert_or_assign(k, v);
  }

  iterator begin() { return items_.begin(); }
  iterator end() { return items_.end(); }
  const_iterator begin() const { return items_.begin(); }
  const_iterator end() const { return items_.end(); }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  void reserve(std::size_t n) { items_.reserve(n); }

  iterator find(std::string_view name) {
    auto it = lower(name);
    return it != items_.end() && it->first == name ? it : items_.end();
  }
  const_iterator find(std::string_view name) const {
    return const_cast<PropertyMap*>(this)->find(name);
  }
  std::size_t count(std::string_view name) const { return find(name) != end() ? 1 : 0; }
  bool contains(std::string_view name) const { return find(name) != end(); }

  std::size_t erase(std::string_view name) {
    auto it = find(name);
    if (it == items_.end()) return 0;
    items_.erase(it);
    return 1;
  }

  template <class V>
  std::pair<iterator, bool> insert_or_assign(std::string_view name, V&& value) {
    auto it = lower(name);
    if (it != items_.end() && it->first == name) {
      it->second = std::forward<V>(value);
      return {it, false};
    }
    return {items_.emplace(it, std::string(name), std::forward<V>(value)), true};
  }

  template <class V>
  std::pair<iterator, bool> emplace(std::string name, V&& value) {
    auto it = lower(name);
    if (it != items_.end() && it->first == name) return {it, false};
    return {items_.emplace(it, std::move(name), std::forward<V>(value)), true};
  }

  /// Appends when `name` sorts after every present name, as when decoding.
  template <class V>
  void emplace_back_sorted(std::string name, V&& value) {
    if (!items_.empty() && !(items_.back().first < name)) {
      emplace(std::move(name), std::forward<V>(value));
      return;
    }
    items_.emplace_back(std::move(name), std::forward<V>(value));
  }

  Scalar& operator[](std::string_view name) {
    auto it = lower(name);
    if (it == items_.end() || it->first != name) it = items_.emplace(it, std::string(name), Scalar{});
    return it->second;
  }

  friend bool operator==(const PropertyMap&, const PropertyMap&) = default;

 private:
  iterator lower(std::string_view name) {
    return std::lower_bound(items_.begin(), items_.end(), name,
                            [](const value_type& a, std::string_view b) { return a.first < b; });
  }

  std::vector<value_type> items_;
};

/// Human-readable rendering: true/false, decimal, or the raw string.
std::string display(const Scalar& v);

struct Vertex {
  VertexId id;
  std::string label;
  PropertyMap props;

  const Scalar* prop(std::string_view name) const {
    auto it = props.find(name);
    return it == props.end() ? nullptr : &it->second;
  }
  friend bool operator==(const Vertex&, const Vertex&) = default;
};

struct Edge {
  EdgeId id;
  VertexId out;
  VertexId in;
  std::string label;
  PropertyMap props;

  const Scalar* prop(std::string_view name) const {
    auto it = props.find(name);
    return it == props.end() ? nullptr : &it->second;
  }
  /// The endpoint that is not `from` (for self-loops, `from` itself).
  VertexId other(VertexId from) const { return from == out ? in : out; }
  friend bool operator==(const Edge&, const Edge&) = default;
};

enum class Direction { out, in, both };

Direction reverse(Direction d) noexcept;
std::string_view to_string(Direction d) noexcept;
std::optional<Direction> parse_direction(std::string_view s) noexcept;

enum class ChangeKind {
  add_vertex,
  delete_vertex,
  add_edge,
  delete_edge,
  vertex_prop_change,
  edge_prop_change,
};

std::string_view to_string(ChangeKind k) noexcept;

/// One mutation, as delivered to change listeners. Snapshots carry the
/// pre-change state for deletes and property changes (the post-change
/// state for additions); endpoint snapshots are attached to edge changes.
struct GraphChange {
  explicit GraphChange(ChangeKind k = ChangeKind::add_vertex) : kind(k) {}

  ChangeKind kind;
  std::optional<Vertex> vertex;
  std::optional<Edge> edge;
  std::optional<Vertex> out_vertex;
  std::optional<Vertex> in_vertex;
  std::optional<std::string> prop_name;
  std::optional<Scalar> old_value;
  std::optional<Scalar> new_value;
  // delete_vertex only: every edge incident to the vertex before deletion.
  std::vector<Edge> incident_edges;

  bool is_property_add() const { return !old_value && new_value; }
  bool is_property_delete() const { return old_value && !new_value; }
};

}  // namespace hopcache

template <>
struct std::hash<hopcache::VertexId> {
  std::size_t operator()(hopcache::VertexId id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};

template <>
struct std::hash<hopcache::EdgeId> {
  std::size_t operator()(hopcache::EdgeId id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};
