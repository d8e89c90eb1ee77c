// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors
//
// Binary record layout shared by the graph subspace.
//
//   u64        big-endian, 8 bytes
//   str        u32 big-endian length, then bytes
//   scalar     tag byte ('b' | 'i' | 's'), then 1 byte / u64 / str
//   props      u32 count, then (str name, scalar) in ascending name order
//   vertex     u64 id, str label, props
//   edge       u64 id, u64 out, u64 in, str label, props

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "hopcache/graph_types.hpp"

namespace hopcache::encoding {

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void put_u64(std::string& out, std::uint64_t v);
void put_u32(std::string& out, std::uint32_t v);
void put_str(std::string& out, std::string_view s);
void put_scalar(std::string& out, const Scalar& v);
void put_props(std::string& out, const PropertyMap& props);

/// Sequential reader over an encoded buffer; throws DecodeError on
/// truncation or unknown tags.
class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint64_t u64();
  std::uint32_t u32();
  std::string str();
  Scalar scalar();
  PropertyMap props();
  bool done() const noexcept { return pos_ == data_.size(); }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  std::string_view take(std::size_t n);

  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint64_t read_u64(std::string_view bytes, std::size_t offset = 0);

std::string encode_vertex(const Vertex& v);
Vertex decode_vertex(std::string_view bytes);
std::string encode_edge(const Edge& e);
Edge decode_edge(std::string_view bytes);
/// The label of an encoded edge, without decoding the rest.
std::string_view edge_label(std::string_view bytes);
/// The out or in endpoint of an encoded edge.
VertexId edge_end(std::string_view bytes, Direction side);

}  // namespace hopcache::encoding
