// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include "hopcache/encoding.hpp"

namespace hopcache::encoding {

void put_u64(std::string& out, std::uint64_t v) {
  char buf[8];
  for (int i = 7; i >= 0; --i, v >>= 8) buf[i] = static_cast<char>(v & 0xff);
  out.append(buf, 8);
}

void put_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  for (int i = 3; i >= 0; --i, v >>= 8) buf[i] = static_cast<char>(v & 0xff);
  out.append(buf, 4);
}

void put_str(std::string& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

void put_scalar(std::string& out, const Scalar& v) {
  if (const auto* b = std::get_if<bool>(&v)) {
    out.push_back('b');
    out.push_back(*b ? 1 : 0);
  } else if (const auto* i = std::get_if<std::int64_t>(&v)) {
    out.push_back('i');
    put_u64(out, static_cast<std::uint64_t>(*i));
  } else {
    out.push_back('s');
    put_str(out, std::get<std::string>(v));
  }
}

void put_props(std::string& out, const PropertyMap& props) {
  put_u32(out, static_cast<std::uint32_t>(props.size()));
  for (const auto& [name, value] : props) {
    put_str(out, name);
    put_scalar(out, value);
  }
}

std::uint64_t read_u64(std::string_view bytes, std::size_t offset) {
  if (bytes.size() < offset + 8) throw DecodeError("truncated u64");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < 8; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

std::string_view Reader::take(std::size_t n) {
  if (remaining() < n) throw DecodeError("truncated record");
  auto s = data_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::uint64_t Reader::u64() { return read_u64(take(8)); }

std::uint32_t Reader::u32() {
  auto s = take(4);
  std::uint32_t v = 0;
  for (char c : s) v = (v << 8) | static_cast<unsigned char>(c);
  return v;
}

std::string Reader::str() {
  auto n = u32();
  return std::string(take(n));
}

Scalar Reader::scalar() {
  char tag = take(1)[0];
  switch (tag) {
    case 'b': return Scalar{take(1)[0] != 0};
    case 'i': return Scalar{static_cast<std::int64_t>(u64())};
    case 's': return Scalar{str()};
    default: throw DecodeError("unknown scalar tag");
  }
}

PropertyMap Reader::props() {
  PropertyMap out;
  auto n = u32();
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto name = str();
    out.emplace_back_sorted(std::move(name), scalar());
  }
  return out;
}

std::string encode_vertex(const Vertex& v) {
  std::string out;
  put_u64(out, v.id.value);
  put_str(out, v.label);
  put_props(out, v.props);
  return out;
}

Vertex decode_vertex(std::string_view bytes) {
  Reader r(bytes);
  Vertex v;
  v.id = VertexId{r.u64()};
  v.label = r.str();
  v.props = r.props();
  if (!r.done()) throw DecodeError("trailing bytes in vertex record");
  return v;
}

std::string encode_edge(const Edge& e) {
  std::string out;
  put_u64(out, e.id.value);
  put_u64(out, e.out.value);
  put_u64(out, e.in.value);
  put_str(out, e.label);
  put_props(out, e.props);
  return out;
}

Edge decode_edge(std::string_view bytes) {
  Reader r(bytes);
  Edge e;
  e.id = EdgeId{r.u64()};
  e.out = VertexId{r.u64()};
  e.in = VertexId{r.u64()};
  e.label = r.str();
  e.props = r.props();
  if (!r.done()) throw DecodeError("trailing bytes in edge record");
  return e;
}

VertexId edge_end(std::string_view bytes, Direction side) {
  return VertexId{read_u64(bytes, side == Direction::out ? 8 : 16)};
}

std::string_view edge_label(std::string_view bytes) {
  if (bytes.size() < 28) throw DecodeError("truncated edge record");
  const auto len = static_cast<std::size_t>(read_u64(bytes, 20) & 0xffffffffu);
  if (bytes.size() < 28 + len) throw DecodeError("truncated edge record");
  return bytes.substr(28, len);
}

}  // namespace hopcache::encoding
