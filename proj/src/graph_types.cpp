// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include "hopcache/graph_types.hpp"

namespace hopcache {

std::string display(const Scalar& v) {
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  return std::get<std::string>(v);
}

Direction reverse(Direction d) noexcept {
  switch (d) {
    case Direction::out: return Direction::in;
    case Direction::in: return Direction::out;
    case Direction::both: return Direction::both;
  }
  return Direction::both;
}

std::string_view to_string(Direction d) noexcept {
  switch (d) {
    case Direction::out: return "out";
    case Direction::in: return "in";
    case Direction::both: return "both";
  }
  return "?";
}

std::optional<Direction> parse_direction(std::string_view s) noexcept {
  if (s == "out") return Direction::out;
  if (s == "in") return Direction::in;
  if (s == "both") return Direction::both;
  return std::nullopt;
}

std::string_view to_string(ChangeKind k) noexcept {
  switch (k) {
    case ChangeKind::add_vertex: return "add-vertex";
    case ChangeKind::delete_vertex: return "delete-vertex";
    case ChangeKind::add_edge: return "add-edge";
    case ChangeKind::delete_edge: return "delete-edge";
    case ChangeKind::vertex_prop_change: return "vertex-prop-change";
    case ChangeKind::edge_prop_change: return "edge-prop-change";
  }
  return "?";
}

}  // namespace hopcache
