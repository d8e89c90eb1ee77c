// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include "hopcache/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace hopcache::harness {

using nlohmann::json;
using templates::PropertyTerm;
using templates::SubQueryTemplate;
using templates::TemplatePtr;

namespace {

constexpr std::array<std::string_view, 4> kRegions{"us-east", "us-west", "eu", "apac"};
constexpr std::array<std::string_view, 3> kDevices{"mobile", "desktop", "tablet"};
constexpr std::array<std::string_view, 4> kSnapshotPrefixes{"A/", "C/", "G/", "M/"};
constexpr std::string_view kSnapshotMagic = "HOPCSNP1";

Scalar scalar_from_line(const json& j, std::size_t line) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_string()) return j.get<std::string>();
  throw HarnessError("line " + std::to_string(line) + ": property values must be booleans, integers or strings");
}

json props_to_json(const PropertyMap& props) {
  json j = json::object();
  for (const auto& [k, v] : props) j[k] = templates::scalar_to_json(v);
  return j;
}

PropertyMap props_from_json(const json& j, std::size_t line) {
  PropertyMap out;
  if (j.is_null()) return out;
  if (!j.is_object()) throw HarnessError("line " + std::to_string(line) + ": props must be an object");
  for (const auto& [k, v] : j.items()) out.emplace(k, scalar_from_line(v, line));
  return out;
}

// Aliases sort by their numeric suffix, then by text, so U2 precedes U10.
bool alias_less(const std::string& a, const std::string& b) {
  auto number = [](const std::string& s) -> std::uint64_t {
    std::size_t i = 0;
    while (i < s.size() && !std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
    std::uint64_t n = 0;
    for (; i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])); ++i) n = n * 10 + (s[i] - '0');
    return n;
  };
  const auto na = number(a), nb = number(b);
  return na != nb ? na < nb : a < b;
}

void add_to_population(Population& p, const std::string& label, const std::string& alias) {
  if (label == "user") p.users.push_back(alias);
  else if (label == "watch-list") p.watch_lists.push_back(alias);
  else if (label == "listing") p.listings.push_back(alias);
  else if (label == "seller") p.sellers.push_back(alias);
}

void sort_population(Population& p) {
  for (auto* v : {&p.users, &p.watch_lists, &p.listings, &p.sellers}) std::sort(v->begin(), v->end(), alias_less);
}

PropertyTerm wildcard(std::string name) { return PropertyTerm{std::move(name), std::nullopt}; }

std::string quoted(std::string_view s) { return "\"" + std::string(s) + "\""; }

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw HarnessError("snapshot truncated");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::string get_bytes(std::istream& in, std::uint64_t n) {
  if (n > (1ull << 32)) throw HarnessError("snapshot record too large");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw HarnessError("snapshot truncated");
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph data

GraphData read_graph_jsonl(std::istream& in) {
  GraphData g;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw HarnessError("line " + std::to_string(n) + ": " + e.what());
    }
    try {
      const auto type = j.at("type").get<std::string>();
      if (type == "vertex") {
        g.vertices.push_back(VertexRecord{j.at("alias").get<std::string>(), j.at("label").get<std::string>(),
                                          props_from_json(j.value("props", json()), n)});
      } else if (type == "edge") {
        g.edges.push_back(EdgeRecord{j.at("out").get<std::string>(), j.at("in").get<std::string>(),
                                     j.at("label").get<std::string>(), props_from_json(j.value("props", json()), n)});
      } else {
        throw HarnessError("line " + std::to_string(n) + ": unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw HarnessError("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return g;
}

void write_graph_jsonl(std::ostream& out, const GraphData& g) {
  for (const auto& v : g.vertices) {
    out << json{{"type", "vertex"}, {"alias", v.alias}, {"label", v.label}, {"props", props_to_json(v.props)}}.dump()
        << '\n';
  }
  for (const auto& e : g.edges) {
    out << json{{"type", "edge"}, {"out", e.out}, {"in", e.in}, {"label", e.label}, {"props", props_to_json(e.props)}}
               .dump()
        << '\n';
  }
}

Zipf::Zipf(std::size_t n, double s) {
  if (n == 0) throw HarnessError("zipf over an empty population");
  if (!(s >= 0)) throw HarnessError("zipf exponent must be non-negative");
  cdf_.resize(n);
  double total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    total += 1.0 / std::pow(static_cast<double>(r + 1), s);
    cdf_[r] = total;
  }
  for (auto& c : cdf_) c /= total;
}

std::size_t Zipf::operator()(std::mt19937_64& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return it == cdf_.end() ? cdf_.size() - 1 : static_cast<std::size_t>(it - cdf_.begin());
}

GraphData generate_desk_graph(const DeskGraphOptions& o) {
  if (o.vertices < 4) throw HarnessError("desk graph needs at least 4 vertices");
  std::mt19937_64 rng(o.seed);
  auto coin = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };
  auto below = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };

  const std::size_t nu = std::max<std::size_t>(1, o.vertices / 10);
  const std::size_t nw = std::max<std::size_t>(1, o.vertices * 15 / 100);
  const std::size_t ns = std::max<std::size_t>(1, o.vertices / 10);
  const std::size_t nl = o.vertices - nu - nw - ns;

  GraphData g;
  auto name = [](char c, std::size_t i) { return std::string(1, c) + std::to_string(i); };
  for (std::size_t i = 0; i < nu; ++i) {
    PropertyMap p;
    if (!coin(0.05)) p["Region"] = std::string(kRegions[below(kRegions.size())]);
    g.vertices.push_back({name('U', i), "user", std::move(p)});
  }
  for (std::size_t i = 0; i < nw; ++i) g.vertices.push_back({name('W', i), "watch-list", {{"wid", name('W', i)}}});
  for (std::size_t i = 0; i < nl; ++i) {
    PropertyMap p{{"lid", name('L', i)}};
    if (!coin(0.05)) p["Status"] = static_cast<std::int64_t>(below(3));
    g.vertices.push_back({name('L', i), "listing", std::move(p)});
  }
  for (std::size_t i = 0; i < ns; ++i) {
    g.vertices.push_back(
        {name('S', i), "seller", {{"sid", name('S', i)}, {"Tier", static_cast<std::int64_t>(1 + below(3))}}});
  }

  for (std::size_t i = 0; i < nw; ++i) g.edges.push_back({name('U', below(nu)), name('W', i), "owns", {}});
  for (std::size_t i = 0; i < nl; ++i) g.edges.push_back({name('S', below(ns)), name('L', i), "sells", {}});

  const std::size_t fixed = g.edges.size();
  const std::size_t rest = o.edges > fixed ? o.edges - fixed : 0;
  const std::size_t n_includes = rest * 6 / 10;
  const std::size_t n_views = rest - n_includes;
  const Zipf hot_wl(nw, 0.5), hot_listing(nl, 0.7);

  {
    std::set<std::pair<std::size_t, std::size_t>> used;
    for (std::size_t tries = 0; used.size() < n_includes && tries < n_includes * 20; ++tries) {
      const std::size_t w = hot_wl(rng), l = hot_listing(rng);
      if (!used.insert({w, l}).second) continue;
      PropertyMap p{{"LastSeen", static_cast<std::int64_t>(below(100'000))}};
      if (!coin(0.03)) p["IsActive"] = coin(0.7);
      g.edges.push_back({name('W', w), name('L', l), "includes", std::move(p)});
    }
  }
  {
    std::set<std::pair<std::size_t, std::size_t>> used;
    for (std::size_t tries = 0; used.size() < n_views && tries < n_views * 20; ++tries) {
      const std::size_t u = below(nu), l = hot_listing(rng);
      if (!used.insert({u, l}).second) continue;
      PropertyMap p{{"LastSeen", static_cast<std::int64_t>(below(100'000))}};
      if (!coin(0.05)) p["Device"] = std::string(kDevices[below(kDevices.size())]);
      g.edges.push_back({name('U', u), name('L', l), "views", std::move(p)});
    }
  }
  return g;
}

std::vector<SubQueryTemplate> desk_templates() {
  using templates::Predicate;
  auto label = [](std::string l) { return Predicate{std::move(l), {}}; };
  auto edge = [](std::string l, std::vector<PropertyTerm> terms = {}) { return Predicate{std::move(l), std::move(terms)}; };
  auto leaf = [](std::optional<std::string> l, std::vector<PropertyTerm> terms) {
    return Predicate{std::move(l), std::move(terms)};
  };
  return {
      {"SQ1", label("watch-list"), edge("includes", {wildcard("IsActive")}), leaf(std::nullopt, {wildcard("Status")}),
       Direction::out},
      {"SQ2", label("seller"), edge("sells"), leaf(std::nullopt, {wildcard("Status")}), Direction::out},
      {"SQ3", label("listing"), edge("includes", {wildcard("IsActive")}), leaf("watch-list", {}), Direction::in},
      {"SQ4", label("listing"), edge("sells"), leaf(std::nullopt, {wildcard("Tier")}), Direction::in},
      {"SQ5", label("watch-list"), edge("owns"), leaf(std::nullopt, {wildcard("Region")}), Direction::in},
      {"SQ6", label("listing"), edge("views", {wildcard("Device")}), leaf("user", {}), Direction::in},
  };
}

const std::set<std::string>& unique_properties() {
  static const std::set<std::string> props{"lid", "wid", "sid"};
  return props;
}

Population Population::of(const GraphData& g) {
  Population p;
  for (const auto& v : g.vertices) add_to_population(p, v.label, v.alias);
  sort_population(p);
  return p;
}

// ---------------------------------------------------------------------------
// Deployment

std::string alias_key(std::string_view alias) { return std::string(kAliasPrefix) + std::string(alias); }

namespace {

std::optional<VertexId> lookup_alias(kv::Transaction& tx, std::string_view alias) {
  auto v = tx.get(alias_key(alias));
  if (!v) return std::nullopt;
  return VertexId{std::stoull(*v)};
}

}  // namespace

Deployment::Deployment(DeploymentOptions options, kv::StoreOptions store_options)
    : store_(store_options), ids_(std::make_shared<graph::IdAllocator>()) {
  if (options.nodes == 0) throw HarnessError("a deployment needs at least one node");
  std::vector<QueryNode*> ptrs;
  for (std::size_t i = 0; i < options.nodes; ++i) {
    nodes_.push_back(std::make_unique<QueryNode>(store_, ids_, options.node, "node" + std::to_string(i)));
    nodes_.back()->set_alias_resolver(lookup_alias);
    ptrs.push_back(nodes_.back().get());
  }
  coord_ = std::make_unique<coordinator::Coordinator>(store_, std::move(ptrs));
}

std::optional<VertexId> Deployment::resolve(kv::Transaction& tx, std::string_view alias) const {
  return lookup_alias(tx, alias);
}

void Deployment::load(const GraphData& g, std::size_t batch) {
  if (batch == 0) batch = 1;
  std::unordered_map<std::string, VertexId> local;
  auto& node = *nodes_.front();

  for (std::size_t at = 0; at < g.vertices.size(); at += batch) {
    const auto end = std::min(g.vertices.size(), at + batch);
    std::vector<std::pair<std::string, VertexId>> added;
    node.write([&](WriteContext& ctx) {
      added.clear();
      for (std::size_t i = at; i < end; ++i) {
        const auto& v = g.vertices[i];
        if (local.count(v.alias) || lookup_alias(ctx.tx(), v.alias))
          throw HarnessError("duplicate alias '" + v.alias + "'");
        const auto id = ctx.graph().add_vertex(ctx.tx(), v.label, v.props);
        ctx.tx().set(alias_key(v.alias), std::to_string(id.value));
        added.emplace_back(v.alias, id);
      }
    });
    for (auto& [a, id] : added) local.emplace(a, id);
  }

  for (std::size_t at = 0; at < g.edges.size(); at += batch) {
    const auto end = std::min(g.edges.size(), at + batch);
    node.write([&](WriteContext& ctx) {
      auto find = [&](const std::string& alias) {
        if (auto it = local.find(alias); it != local.end()) return it->second;
        if (auto id = lookup_alias(ctx.tx(), alias)) return *id;
        throw HarnessError("edge endpoint '" + alias + "' is not a known alias");
      };
      for (std::size_t i = at; i < end; ++i) {
        const auto& e = g.edges[i];
        ctx.graph().add_edge(ctx.tx(), find(e.out), find(e.in), e.label, e.props);
      }
    });
  }
}

void Deployment::register_template(const SubQueryTemplate& def) {
  coord_->register_template(def);
  auto tx = store_.begin(kv::TxMode::read_write);
  tx.set(std::string(kTemplateDefPrefix) + def.name, templates::to_json(def).dump());
  tx.commit();
}

coordinator::LifecycleState Deployment::enable(const std::string& name) { return coord_->enable_template(name); }

coordinator::LifecycleState Deployment::disable(const std::string& name) { return coord_->disable_template(name); }

std::vector<TemplatePtr> Deployment::enabled() const {
  std::vector<TemplatePtr> out;
  for (const auto& name : coord_->names()) {
    if (coord_->state(name) == coordinator::LifecycleState::enabled) out.push_back(*coord_->definition(name));
  }
  return out;
}

void Deployment::save(std::ostream& out) {
  auto tx = store_.begin(kv::TxMode::read_only);
  std::vector<std::pair<std::string, std::string>> pairs;
  for (auto prefix : kSnapshotPrefixes) {
    auto part = tx.range_scan(prefix);
    pairs.insert(pairs.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  out.write(kSnapshotMagic.data(), static_cast<std::streamsize>(kSnapshotMagic.size()));
  put_u64(out, ids_->peek_vertex());
  put_u64(out, ids_->peek_edge());
  put_u64(out, pairs.size());
  for (const auto& [k, v] : pairs) {
    put_u64(out, k.size());
    out.write(k.data(), static_cast<std::streamsize>(k.size()));
    put_u64(out, v.size());
    out.write(v.data(), static_cast<std::streamsize>(v.size()));
  }
  if (!out) throw HarnessError("failed to write snapshot");
}

void Deployment::restore(std::istream& in, bool with_templates) {
  if (store_.live_key_count() != 0) throw HarnessError("restore needs an empty deployment");
  std::string magic(kSnapshotMagic.size(), '\0');
  if (!in.read(magic.data(), static_cast<std::streamsize>(magic.size())) || magic != kSnapshotMagic)
    throw HarnessError("not a hopcache snapshot");
  const auto next_vertex = get_u64(in);
  const auto next_edge = get_u64(in);
  const auto count = get_u64(in);
  auto tx = store_.begin(kv::TxMode::read_write);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto k = get_bytes(in, get_u64(in));
    auto v = get_bytes(in, get_u64(in));
    if (!with_templates && (kv::starts_with(k, "C/") || kv::starts_with(k, "M/"))) continue;
    tx.set(k, v);
  }
  tx.commit();
  ids_->advance_vertex_to(next_vertex);
  ids_->advance_edge_to(next_edge);
  if (with_templates) restore_templates();
}

void Deployment::copy_from(Deployment& other, bool with_templates) {
  if (store_.live_key_count() != 0) throw HarnessError("copy_from needs an empty deployment");
  auto src = other.store_.begin(kv::TxMode::read_only);
  auto dst = store_.begin(kv::TxMode::read_write);
  for (std::string_view prefix : {"A/", "G/", "M/"}) {
    if (prefix == "M/" && !with_templates) continue;
    for (const auto& [k, v] : src.range_scan(prefix)) dst.set(k, v);
  }
  dst.commit();
  ids_->advance_vertex_to(other.ids_->peek_vertex());
  ids_->advance_edge_to(other.ids_->peek_edge());
  if (with_templates) restore_templates();
}

void Deployment::restore_templates() {
  std::vector<std::pair<SubQueryTemplate, coordinator::LifecycleState>> defs;
  {
    auto tx = store_.begin(kv::TxMode::read_only);
    for (const auto& [k, v] : tx.range_scan(kTemplateDefPrefix)) {
      SubQueryTemplate def;
      try {
        def = templates::template_from_json(json::parse(v));
      } catch (const json::exception& e) {
        throw HarnessError("stored template definition " + k + ": " + e.what());
      }
      auto state = coordinator::LifecycleState::registered;
      if (auto meta = tx.get(template_meta_key(def.name))) {
        auto parsed = coordinator::parse_state(*meta);
        if (!parsed) throw HarnessError("template " + def.name + " has unknown state '" + *meta + "'");
        state = *parsed;
      }
      defs.emplace_back(std::move(def), state);
    }
  }
  for (auto& [def, state] : defs) coord_->restore(std::move(def), state);
}

Population Deployment::population() {
  Population p;
  auto tx = store_.begin(kv::TxMode::read_only);
  auto& g = nodes_.front()->graph();
  for (const auto& [k, v] : tx.range_scan(kAliasPrefix)) {
    if (auto vertex = g.get_vertex(tx, VertexId{std::stoull(v)})) {
      add_to_population(p, vertex->label, k.substr(kAliasPrefix.size()));
    }
  }
  sort_population(p);
  return p;
}

// ---------------------------------------------------------------------------
// Workloads

std::string_view to_string(WriteKind k) noexcept {
  switch (k) {
    case WriteKind::upsert: return "upsert";
    case WriteKind::update_last_seen: return "update-last-seen";
    case WriteKind::delete_edges: return "delete-edges";
    case WriteKind::toggle_active: return "toggle-active";
    case WriteKind::set_property: return "set-property";
    case WriteKind::delete_vertex: return "delete-vertex";
    case WriteKind::add_edge: return "add-edge";
  }
  return "?";
}

const std::vector<WriteKind>& all_write_kinds() {
  static const std::vector<WriteKind> kinds{WriteKind::upsert,        WriteKind::update_last_seen,
                                            WriteKind::delete_edges,  WriteKind::toggle_active,
                                            WriteKind::set_property,  WriteKind::delete_vertex,
                                            WriteKind::add_edge};
  return kinds;
}

std::optional<WriteKind> parse_write_kind(std::string_view s) noexcept {
  for (auto k : all_write_kinds()) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

const std::map<std::string, std::string>& query_catalog() {
  static const std::map<std::string, std::string> catalog{
      {"Q1", R"(g.V(<watch-list>).hasLabel("watch-list").outE("includes").has("IsActive",<bool>).inV().has("Status",<status>).id())"},
      {"Q2", R"(g.V(<seller>).hasLabel("seller").outE("sells").inV().has("Status",<status>).count())"},
      {"Q3", R"(g.V(<listing>).inE("includes").has("IsActive",<bool>).outV().hasLabel("watch-list").id())"},
      {"Q4", R"(g.V(<listing>).inE("sells").outV().has("Tier",<tier>).valueMap())"},
      {"Q5", R"(g.V(<watch-list>).inE("owns").outV().has("Region",<region>).id())"},
      {"Q6", R"(g.V(<listing>).inE("views").has("Device",<device>).outV().hasLabel("user").dedup())"},
      {"Q7", R"(g.V(<listing>).has("lid",<listing>).inE("includes").has("IsActive",true).outV().hasLabel("watch-list").outE("includes").has("IsActive",true).inV().has("Status",<status>).has("lid",neq(<listing>)).id())"},
      {"Q8", R"(g.V(<user>).outE("views").inV().has("Status",<status>).id())"},
      {"Q9", R"(g.V(<user>).outE("owns").inV().hasLabel("watch-list").outE("includes").has("IsActive",true).inV().has("Status",<status>).count())"},
  };
  return catalog;
}

void WorkloadSpec::validate() const {
  if (ops == 0) throw HarnessError("workload needs ops > 0");
  if (!(read_fraction >= 0 && read_fraction <= 1)) throw HarnessError("read_fraction must lie in [0, 1]");
  if (!(zipf_s >= 0)) throw HarnessError("zipf_s must be non-negative");
  auto check = [](double sum, const char* what) {
    if (std::abs(sum - 1.0) > 1e-6) throw HarnessError(std::string(what) + " shares must sum to 1");
  };
  double qsum = 0;
  for (const auto& [id, w] : queries) {
    if (!query_catalog().count(id)) throw HarnessError("unknown query id '" + id + "'");
    if (!(w >= 0 && w <= 1)) throw HarnessError("query share for " + id + " must lie in [0, 1]");
    qsum += w;
  }
  if (read_fraction > 0) check(qsum, "query");
  double wsum = 0;
  for (const auto& [k, w] : writes) {
    if (!(w >= 0 && w <= 1)) throw HarnessError("write share for " + std::string(to_string(k)) + " must lie in [0, 1]");
    wsum += w;
  }
  if (read_fraction < 1 || !writes.empty()) check(wsum, "write");
}

json WorkloadSpec::to_json() const {
  json q = json::object(), w = json::object();
  for (const auto& [id, x] : queries) q[id] = x;
  for (const auto& [k, x] : writes) w[std::string(harness::to_string(k))] = x;
  return {{"name", name}, {"ops", ops},       {"read_fraction", read_fraction}, {"seed", seed},
          {"zipf_s", zipf_s}, {"queries", q}, {"writes", w}};
}

WorkloadSpec WorkloadSpec::from_json(const json& j) {
  WorkloadSpec s;
  try {
    s.name = j.value("name", s.name);
    s.ops = j.at("ops").get<std::size_t>();
    s.read_fraction = j.at("read_fraction").get<double>();
    s.seed = j.value("seed", s.seed);
    s.zipf_s = j.value("zipf_s", s.zipf_s);
    const json queries = j.value("queries", json::object());
    const json writes = j.value("writes", json::object());
    for (const auto& [id, x] : queries.items()) s.queries[id] = x.get<double>();
    for (const auto& [k, x] : writes.items()) {
      auto kind = parse_write_kind(k);
      if (!kind) throw HarnessError("unknown write type '" + k + "'");
      s.writes[*kind] = x.get<double>();
    }
  } catch (const json::exception& e) {
    throw HarnessError(std::string("invalid workload spec: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

std::map<std::string, double> standard_queries() {
  return {{"Q1", 0.20}, {"Q2", 0.10}, {"Q3", 0.15}, {"Q4", 0.10}, {"Q5", 0.10},
          {"Q6", 0.10}, {"Q7", 0.10}, {"Q8", 0.05}, {"Q9", 0.10}};
}

// The three production write types. The published shares add up to
// 100.01%, so they are normalized.
std::map<WriteKind, double> standard_writes() {
  const double total = 44.85 + 43.94 + 11.22;
  return {{WriteKind::upsert, 44.85 / total},
          {WriteKind::update_last_seen, 43.94 / total},
          {WriteKind::delete_edges, 11.22 / total}};
}

WorkloadSpec standard(std::string name, double reads, std::size_t ops, std::uint64_t seed) {
  WorkloadSpec s;
  s.name = std::move(name);
  s.ops = ops;
  s.read_fraction = reads;
  s.seed = seed;
  s.queries = standard_queries();
  s.writes = standard_writes();
  return s;
}

}  // namespace

WorkloadSpec WorkloadSpec::r_hat(std::size_t ops, std::uint64_t seed) { return standard("r-hat", 0.99, ops, seed); }
WorkloadSpec WorkloadSpec::w_hat(std::size_t ops, std::uint64_t seed) { return standard("w-hat", 0.62, ops, seed); }
WorkloadSpec WorkloadSpec::r_check(std::size_t ops, std::uint64_t seed) {
  return standard("r-check", 0.94, ops, seed);
}

WorkloadSpec WorkloadSpec::oracle_mix(std::size_t ops, std::uint64_t seed) {
  WorkloadSpec s = standard("oracle", 0.5, ops, seed);
  s.writes = {{WriteKind::upsert, 0.25},       {WriteKind::update_last_seen, 0.10}, {WriteKind::delete_edges, 0.15},
              {WriteKind::toggle_active, 0.15}, {WriteKind::set_property, 0.206},   {WriteKind::delete_vertex, 0.004},
              {WriteKind::add_edge, 0.14}};
  return s;
}

WorkloadSpec WorkloadSpec::preset(std::string_view name, std::size_t ops, std::uint64_t seed) {
  if (name == "r-hat") return r_hat(ops, seed);
  if (name == "w-hat") return w_hat(ops, seed);
  if (name == "r-check") return r_check(ops, seed);
  if (name == "oracle") return oracle_mix(ops, seed);
  throw HarnessError("unknown workload preset '" + std::string(name) + "'");
}

Trace generate(const WorkloadSpec& spec, const Population& pop) {
  spec.validate();
  if (pop.users.empty() || pop.watch_lists.empty() || pop.listings.empty() || pop.sellers.empty())
    throw HarnessError("workload generation needs users, watch-lists, listings and sellers");

  std::mt19937_64 rng(spec.seed);
  const Zipf z_user(pop.users.size(), spec.zipf_s), z_wl(pop.watch_lists.size(), spec.zipf_s),
      z_listing(pop.listings.size(), spec.zipf_s), z_seller(pop.sellers.size(), spec.zipf_s);

  std::vector<std::string> qids;
  std::vector<double> qweights;
  for (const auto& [id, w] : spec.queries) {
    qids.push_back(id);
    qweights.push_back(w);
  }
  std::vector<WriteKind> wkinds;
  std::vector<double> wweights;
  for (const auto& [k, w] : spec.writes) {
    wkinds.push_back(k);
    wweights.push_back(w);
  }
  std::discrete_distribution<std::size_t> pick_query(qweights.begin(), qweights.end());
  std::discrete_distribution<std::size_t> pick_write(wweights.begin(), wweights.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto status = [&] { return std::to_string(rng() % 3); };
  auto boolean = [&] { return unit(rng) < 0.8 ? "true" : "false"; };

  Trace trace;
  trace.reserve(spec.ops);
  for (std::size_t i = 0; i < spec.ops; ++i) {
    Operation op;
    if (wkinds.empty() || unit(rng) < spec.read_fraction) {
      op.kind = OpKind::read;
      op.query_id = qids[pick_query(rng)];
      const auto& q = op.query_id;
      std::ostringstream t;
      if (q == "Q1") {
        t << "g.V(" << quoted(pop.watch_lists[z_wl(rng)]) << R"().hasLabel("watch-list").outE("includes").has("IsActive",)"
          << boolean() << R"().inV().has("Status",)" << status() << ").id()";
      } else if (q == "Q2") {
        t << "g.V(" << quoted(pop.sellers[z_seller(rng)]) << R"().hasLabel("seller").outE("sells").inV().has("Status",)"
          << status() << ").count()";
      } else if (q == "Q3") {
        t << "g.V(" << quoted(pop.listings[z_listing(rng)]) << R"().inE("includes").has("IsActive",)" << boolean()
          << R"().outV().hasLabel("watch-list").id())";
      } else if (q == "Q4") {
        t << "g.V(" << quoted(pop.listings[z_listing(rng)]) << R"().inE("sells").outV().has("Tier",)" << 1 + rng() % 3
          << ").valueMap()";
      } else if (q == "Q5") {
        t << "g.V(" << quoted(pop.watch_lists[z_wl(rng)]) << R"().inE("owns").outV().has("Region",)"
          << quoted(kRegions[rng() % kRegions.size()]) << ").id()";
      } else if (q == "Q6") {
        t << "g.V(" << quoted(pop.listings[z_listing(rng)]) << R"().inE("views").has("Device",)"
          << quoted(kDevices[rng() % kDevices.size()]) << R"().outV().hasLabel("user").dedup())";
      } else if (q == "Q7") {
        const auto l = quoted(pop.listings[z_listing(rng)]);
        t << "g.V(" << l << R"().has("lid",)" << l
          << R"().inE("includes").has("IsActive",true).outV().hasLabel("watch-list").outE("includes").has("IsActive",true).inV().has("Status",)"
          << status() << R"().has("lid",neq()" << l << ")).id()";
      } else if (q == "Q8") {
        t << "g.V(" << quoted(pop.users[z_user(rng)]) << R"().outE("views").inV().has("Status",)" << status()
          << ").id()";
      } else {
        t << "g.V(" << quoted(pop.users[z_user(rng)])
          << R"().outE("owns").inV().hasLabel("watch-list").outE("includes").has("IsActive",true).inV().has("Status",)"
          << status() << ").count()";
      }
      op.text = t.str();
      op.traversal = query::parse(op.text);
    } else {
      op.kind = OpKind::write;
      op.write = wkinds[pick_write(rng)];
      switch (op.write) {
        case WriteKind::set_property:
        case WriteKind::delete_vertex:
        case WriteKind::add_edge: op.args[0] = static_cast<std::uint32_t>(z_listing(rng)); break;
        default: op.args[0] = static_cast<std::uint32_t>(z_wl(rng)); break;
      }
      for (std::size_t a = 1; a < op.args.size(); ++a) op.args[a] = static_cast<std::uint32_t>(rng());
    }
    trace.push_back(std::move(op));
  }
  return trace;
}

WriteOutcome apply_write(Deployment& d, const Operation& op, const Population& pop, std::uint64_t op_index) {
  const auto& a = op.args;
  auto pick = [](const std::vector<std::string>& v, std::uint32_t x) -> const std::string& { return v[x % v.size()]; };
  const auto stamp = static_cast<std::int64_t>(op_index);

  auto includes_of = [](WriteContext& ctx, VertexId w) {
    auto edges = ctx.graph().edges(ctx.tx(), w, Direction::out);
    std::erase_if(edges, [](const Edge& e) { return e.label != "includes"; });
    return edges;
  };

  WriteProgram program = [&](WriteContext& ctx) {
    auto& tx = ctx.tx();
    auto& g = ctx.graph();
    switch (op.write) {
      case WriteKind::upsert: {
        auto w = lookup_alias(tx, pick(pop.watch_lists, a[0]));
        if (!w) return;
        std::optional<VertexId> l;
        if (a[1] % 4 == 0) {
          const auto alias = "N" + std::to_string(op_index);
          l = lookup_alias(tx, alias);
          if (!l) {
            l = g.add_vertex(tx, "listing",
                             {{"lid", alias}, {"Status", static_cast<std::int64_t>(a[2] % 3)}});
            tx.set(alias_key(alias), std::to_string(l->value));
            if (auto s = lookup_alias(tx, pick(pop.sellers, a[3]))) g.add_edge(tx, *s, *l, "sells");
          }
        } else {
          l = lookup_alias(tx, pick(pop.listings, a[2]));
          if (!l || !g.get_vertex(tx, *l)) return;
          g.set_vertex_property(tx, *l, "Status", static_cast<std::int64_t>(a[3] % 3));
        }
        std::optional<Edge> existing;
        for (auto& e : includes_of(ctx, *w)) {
          if (e.in == *l) {
            existing = e;
            break;
          }
        }
        if (existing) {
          g.set_edge_property(tx, existing->id, "IsActive", true);
          g.set_edge_property(tx, existing->id, "LastSeen", stamp);
        } else {
          g.add_edge(tx, *w, *l, "includes", {{"IsActive", true}, {"LastSeen", stamp}});
        }
        break;
      }
      case WriteKind::update_last_seen: {
        auto w = lookup_alias(tx, pick(pop.watch_lists, a[0]));
        if (!w) return;
        auto edges = includes_of(ctx, *w);
        for (std::size_t i = 0; i < std::min<std::size_t>(3, edges.size()); ++i) {
          g.set_edge_property(tx, edges[(a[1] + i) % edges.size()].id, "LastSeen", stamp);
        }
        break;
      }
      case WriteKind::delete_edges: {
        auto w = lookup_alias(tx, pick(pop.watch_lists, a[0]));
        if (!w) return;
        auto edges = includes_of(ctx, *w);
        const std::size_t n = std::min<std::size_t>(1 + a[2] % 2, edges.size());
        for (std::size_t i = 0; i < n; ++i) g.delete_edge(tx, edges[(a[1] + i) % edges.size()].id);
        break;
      }
      case WriteKind::toggle_active: {
        auto w = lookup_alias(tx, pick(pop.watch_lists, a[0]));
        if (!w) return;
        auto edges = includes_of(ctx, *w);
        if (edges.empty()) return;
        const auto& e = edges[a[1] % edges.size()];
        const auto* cur = e.prop("IsActive");
        const bool active = cur && std::holds_alternative<bool>(*cur) && std::get<bool>(*cur);
        g.set_edge_property(tx, e.id, "IsActive", !active);
        break;
      }
      case WriteKind::set_property: {
        const bool drop = a[2] % 8 == 7;
        switch (a[1] % 3) {
          case 0: {
            auto l = lookup_alias(tx, pick(pop.listings, a[0]));
            if (l && g.get_vertex(tx, *l))
              g.set_vertex_property(tx, *l, "Status",
                                    drop ? std::nullopt : std::optional<Scalar>(static_cast<std::int64_t>(a[3] % 3)));
            break;
          }
          case 1: {
            auto s = lookup_alias(tx, pick(pop.sellers, a[3]));
            if (s && g.get_vertex(tx, *s))
              g.set_vertex_property(tx, *s, "Tier",
                                    drop ? std::nullopt
                                         : std::optional<Scalar>(static_cast<std::int64_t>(1 + a[0] % 3)));
            break;
          }
          default: {
            auto u = lookup_alias(tx, pick(pop.users, a[3]));
            if (u && g.get_vertex(tx, *u))
              g.set_vertex_property(tx, *u, "Region",
                                    drop ? std::nullopt
                                         : std::optional<Scalar>(std::string(kRegions[a[0] % kRegions.size()])));
            break;
          }
        }
        break;
      }
      case WriteKind::delete_vertex: {
        const auto& alias = pick(pop.listings, a[0]);
        auto l = lookup_alias(tx, alias);
        if (!l) return;
        if (g.get_vertex(tx, *l)) g.delete_vertex(tx, *l);
        tx.erase(alias_key(alias));
        break;
      }
      case WriteKind::add_edge: {
        auto l = lookup_alias(tx, pick(pop.listings, a[0]));
        switch (a[1] % 3) {
          case 0: {
            auto u = lookup_alias(tx, pick(pop.users, a[2]));
            if (!u || !l || !g.get_vertex(tx, *l)) return;
            PropertyMap p{{"LastSeen", stamp}};
            if (a[3] % 16 != 0) p["Device"] = std::string(kDevices[a[3] % kDevices.size()]);
            g.add_edge(tx, *u, *l, "views", std::move(p));
            break;
          }
          case 1: {
            auto u = lookup_alias(tx, pick(pop.users, a[2]));
            auto w = lookup_alias(tx, pick(pop.watch_lists, a[3]));
            if (u && w) g.add_edge(tx, *u, *w, "owns");
            break;
          }
          default: {
            auto s = lookup_alias(tx, pick(pop.sellers, a[2]));
            if (!s || !l || !g.get_vertex(tx, *l)) return;
            g.add_edge(tx, *s, *l, "sells");
            break;
          }
        }
        break;
      }
    }
  };
  return d.node(0).write_retry(program, 3);
}

// ---------------------------------------------------------------------------
// Metrics

double nearest_rank(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0;
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

LatencySummary LatencySummary::of(std::vector<double> micros) {
  LatencySummary s;
  s.count = micros.size();
  if (micros.empty()) return s;
  std::sort(micros.begin(), micros.end());
  double total = 0;
  for (double x : micros) total += x;
  s.mean = total / static_cast<double>(micros.size());
  s.p50 = nearest_rank(micros, 50);
  s.p95 = nearest_rank(micros, 95);
  s.p99 = nearest_rank(micros, 99);
  s.max = micros.back();
  return s;
}

json LatencySummary::to_json() const {
  return {{"count", count}, {"mean", mean}, {"p50", p50}, {"p95", p95}, {"p99", p99}, {"max", max}};
}

LatencySummary LatencySummary::from_json(const json& j) {
  LatencySummary s;
  s.count = j.at("count").get<std::size_t>();
  s.mean = j.at("mean").get<double>();
  s.p50 = j.at("p50").get<double>();
  s.p95 = j.at("p95").get<double>();
  s.p99 = j.at("p99").get<double>();
  s.max = j.at("max").get<double>();
  return s;
}

std::string RunConfig::label() const {
  return std::string(cache ? "C+" : "C-") + (rewrite ? "Q+" : "Q-");
}

double RunMetrics::hit_rate() const {
  std::uint64_t h = 0, total = 0;
  for (const auto& [_, c] : hits) {
    h += c.hits;
    total += c.hits + c.misses;
  }
  return total ? static_cast<double>(h) / static_cast<double>(total) : 0.0;
}

json RunMetrics::to_json() const {
  json q = json::object(), w = json::object(), h = json::object(), ik = json::object(), e = json::object();
  for (const auto& [k, v] : query_latency) q[k] = v.to_json();
  for (const auto& [k, v] : write_type_latency) w[k] = v.to_json();
  for (const auto& [k, v] : hits) h[k] = {{"hits", v.hits}, {"misses", v.misses}};
  for (const auto& [k, hist] : impacted_keys) {
    json b = json::object();
    for (const auto& [n, c] : hist) b[std::to_string(n)] = c;
    ik[k] = b;
  }
  for (const auto& [k, v] : errors) e[k] = v;
  return {{"label", label},
          {"workload", workload},
          {"policy", policy},
          {"ops", ops},
          {"reads", reads},
          {"writes", writes},
          {"read_latency_us", read_latency.to_json()},
          {"write_latency_us", write_latency.to_json()},
          {"query_latency_us", q},
          {"write_type_latency_us", w},
          {"hits", h},
          {"hit_rate", hit_rate()},
          {"impacted_keys", ik},
          {"errors", e},
          {"diffs", diffs},
          {"diff_ops", diff_ops},
          {"fallback_hops", fallback_hops},
          {"populate",
           {{"committed", populate.committed},
            {"conflicts", populate.conflicts},
            {"discarded", populate.discarded},
            {"skipped", populate.skipped},
            {"errors", populate.errors},
            {"duplicates", populate.duplicates}}},
          {"wall_seconds", wall_seconds}};
}

RunMetrics RunMetrics::from_json(const json& j) {
  RunMetrics m;
  try {
    m.label = j.at("label").get<std::string>();
    m.workload = j.value("workload", "");
    m.policy = j.value("policy", "");
    m.ops = j.at("ops").get<std::size_t>();
    m.reads = j.at("reads").get<std::size_t>();
    m.writes = j.at("writes").get<std::size_t>();
    m.read_latency = LatencySummary::from_json(j.at("read_latency_us"));
    m.write_latency = LatencySummary::from_json(j.at("write_latency_us"));
    for (const auto& [k, v] : j.at("query_latency_us").items()) m.query_latency[k] = LatencySummary::from_json(v);
    for (const auto& [k, v] : j.at("write_type_latency_us").items())
      m.write_type_latency[k] = LatencySummary::from_json(v);
    for (const auto& [k, v] : j.at("hits").items())
      m.hits[k] = HitCounts{v.at("hits").get<std::uint64_t>(), v.at("misses").get<std::uint64_t>()};
    for (const auto& [k, v] : j.at("impacted_keys").items()) {
      for (const auto& [n, c] : v.items()) m.impacted_keys[k][std::stoull(n)] = c.get<std::size_t>();
    }
    for (const auto& [k, v] : j.at("errors").items()) m.errors[k] = v.get<std::uint64_t>();
    m.diffs = j.at("diffs").get<std::uint64_t>();
    m.diff_ops = j.value("diff_ops", std::vector<std::size_t>{});
    m.fallback_hops = j.value("fallback_hops", std::uint64_t{0});
    const auto& p = j.at("populate");
    m.populate.committed = p.at("committed").get<std::uint64_t>();
    m.populate.conflicts = p.at("conflicts").get<std::uint64_t>();
    m.populate.discarded = p.at("discarded").get<std::uint64_t>();
    m.populate.skipped = p.at("skipped").get<std::uint64_t>();
    m.populate.errors = p.at("errors").get<std::uint64_t>();
    m.populate.duplicates = p.value("duplicates", std::uint64_t{0});
    m.wall_seconds = j.value("wall_seconds", 0.0);
  } catch (const json::exception& e) {
    throw HarnessError(std::string("invalid metrics: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

using Clock = std::chrono::steady_clock;

double micros_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
}

cache::PopulateStats minus(const cache::PopulateStats& a, const cache::PopulateStats& b) {
  return {a.committed - b.committed, a.conflicts - b.conflicts, a.discarded - b.discarded, a.skipped - b.skipped,
          a.errors - b.errors,       a.duplicates - b.duplicates};
}

// Restores the store's fault settings when a run ends, however it ends.
struct StoreFaults {
  kv::Store& store;
  kv::StoreOptions saved;
  explicit StoreFaults(kv::Store& s) : store(s), saved(s.options()) {}
  ~StoreFaults() {
    store.set_op_delay(saved.op_delay);
    store.set_op_budget(saved.op_budget);
  }
};

}  // namespace

RunMetrics run(Deployment& d, const Trace& trace, const Population& pop, const RunConfig& config,
               const std::string& workload_name) {
  auto& node = d.node(0);
  if (!node.maintained().empty() && node.maintainer().policy() != config.policy) {
    throw HarnessError("deployment maintains under " + node.maintainer().policy().to_string() + ", run asked for " +
                       config.policy.to_string());
  }

  RunMetrics m;
  m.label = config.label();
  m.workload = workload_name;
  m.policy = config.policy.to_string();
  m.errors = {{"conflict", 0}, {"timeout", 0}, {"malformed", 0}};

  const auto& unique = unique_properties();
  auto prepare = [&](const query::Traversal& t) {
    return config.rewrite ? query::rewrite_id_filter(t, unique) : t;
  };

  const auto populate_before = node.populator().totals();
  ReadStats stats;

  if (config.warm && config.cache) {
    std::set<std::string> seen;
    for (const auto& op : trace) {
      if (op.kind != OpKind::read || !seen.insert(op.text).second) continue;
      auto tx = d.store().begin(kv::TxMode::read_only);
      node.execute_read(tx, prepare(op.traversal), true);
    }
    node.populator().drain();
  }

  StoreFaults faults(d.store());
  d.store().set_op_delay(config.op_delay);
  d.store().set_op_budget(config.op_budget);

  std::vector<double> read_us, write_us;
  std::map<std::string, std::vector<double>> per_query, per_write;
  const auto wall0 = Clock::now();

  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto& op = trace[i];
    if (op.kind == OpKind::read) {
      ++m.reads;
      std::optional<QueryResult> result;
      std::optional<kv::Transaction> tx;
      const auto t0 = Clock::now();
      try {
        tx.emplace(d.store().begin(kv::TxMode::read_only));
        result = node.execute_read(*tx, prepare(op.traversal), config.cache, &stats);
      } catch (const kv::KvError& e) {
        ++m.errors[e.code() == kv::ErrorCode::timeout ? "timeout" : "conflict"];
      }
      const double us = micros_since(t0);
      read_us.push_back(us);
      per_query[op.query_id].push_back(us);
      if (result && config.shadow_check && config.cache) {
        const auto saved_budget = d.store().options().op_budget;
        d.store().set_op_budget(0);
        auto plain = node.execute_read(*tx, op.traversal, false);
        d.store().set_op_budget(saved_budget);
        if (!(plain == *result)) {
          ++m.diffs;
          if (m.diff_ops.size() < 16) m.diff_ops.push_back(i);
        }
      }
    } else {
      ++m.writes;
      const auto kind = std::string(to_string(op.write));
      const auto t0 = Clock::now();
      try {
        auto outcome = apply_write(d, op, pop, i);
        std::size_t keys = 0;
        for (const auto& impact : outcome.impacts) {
          keys += impact.report.keys.size() + impact.report.ranges_cleared.size();
        }
        ++m.impacted_keys[kind][keys];
      } catch (const kv::ConflictError&) {
        ++m.errors["conflict"];
      } catch (const kv::KvError& e) {
        ++m.errors[e.code() == kv::ErrorCode::timeout ? "timeout" : "conflict"];
      }
      const double us = micros_since(t0);
      write_us.push_back(us);
      per_write[kind].push_back(us);
    }
    if (config.cache && config.drain_every && (i + 1) % config.drain_every == 0) node.populator().drain();
  }
  if (config.cache) node.populator().drain();

  m.wall_seconds = std::chrono::duration<double>(Clock::now() - wall0).count();
  m.ops = trace.size();
  m.read_latency = LatencySummary::of(std::move(read_us));
  m.write_latency = LatencySummary::of(std::move(write_us));
  for (auto& [k, v] : per_query) m.query_latency[k] = LatencySummary::of(std::move(v));
  for (auto& [k, v] : per_write) m.write_type_latency[k] = LatencySummary::of(std::move(v));
  m.hits = stats.per_template;
  m.errors["malformed"] += stats.malformed;
  m.fallback_hops = stats.fallback_hops;
  m.populate = minus(node.populator().totals(), populate_before);
  return m;
}

std::unique_ptr<Deployment> make_deployment(const GraphData& g, const std::vector<SubQueryTemplate>& defs,
                                            const RunConfig& config) {
  DeploymentOptions o;
  o.node.policy = config.policy;
  o.node.unique_props = unique_properties();
  auto d = std::make_unique<Deployment>(o);
  d->load(g);
  if (config.cache) {
    for (const auto& def : defs) {
      d->register_template(def);
      d->enable(def.name);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Oracle

json Violation::to_json() const {
  auto ids = [](const std::vector<VertexId>& v) {
    std::vector<std::uint64_t> out;
    for (auto id : v) out.push_back(id.value);
    return out;
  };
  return {{"key", key}, {"problem", problem}, {"cached", ids(cached)}, {"expected", ids(expected)}};
}

json OracleReport::to_json() const {
  json v = json::array();
  for (const auto& x : violations) v.push_back(x.to_json());
  return {{"ok", ok()}, {"entries_checked", entries_checked}, {"instances", instances}, {"violations", v}};
}

OracleReport oracle_check(kv::Store& store, const std::vector<TemplatePtr>& tmpls, std::string_view codec) {
  OracleReport report;
  graph::GraphStore g;
  const cache::CacheStore cache(cache::make_codec(codec));
  auto tx = store.begin(kv::TxMode::read_only);

  std::unordered_map<VertexId, Vertex> vertices;
  for (auto& v : g.all_vertices(tx)) vertices.emplace(v.id, std::move(v));
  const auto edges = g.all_edges(tx);

  for (const auto& tp : tmpls) {
    const auto& t = *tp;
    // Truth: every (root, edge, leaf) triple that qualifies, keyed by the
    // instance it belongs to.
    std::unordered_map<std::string, std::set<VertexId>> truth;
    auto consider = [&](const Edge& e, VertexId root_id, VertexId leaf_id) {
      auto r = vertices.find(root_id);
      auto l = vertices.find(leaf_id);
      if (r == vertices.end() || l == vertices.end()) return;
      if (!templates::qualifies(t.root, r->second) || !templates::qualifies(t.edge, e) ||
          !templates::qualifies(t.leaf, l->second))
        return;
      const auto key = templates::build_key(t, root_id, templates::extract_wildcard_values(t.edge, e),
                                            templates::extract_wildcard_values(t.leaf, l->second))
                           .render();
      truth[key].insert(leaf_id);
    };
    for (const auto& e : edges) {
      if (t.direction != Direction::in) consider(e, e.out, e.in);
      if (t.direction != Direction::out) consider(e, e.in, e.out);
    }
    report.instances += truth.size();

    for (auto& entry : cache.list(tx, t.name)) {
      ++report.entries_checked;
      if (entry.malformed) {
        report.violations.push_back({entry.key, "malformed", {}, {}});
        continue;
      }
      auto parsed = templates::parse_key(entry.key, t);
      if (!parsed || parsed->render() != entry.key) {
        report.violations.push_back({entry.key, "unparseable", entry.leaf_ids, {}});
        continue;
      }
      std::vector<VertexId> expected;
      if (auto it = truth.find(entry.key); it != truth.end()) expected.assign(it->second.begin(), it->second.end());
      if (expected != entry.leaf_ids) {
        report.violations.push_back({entry.key, "stale", std::move(entry.leaf_ids), std::move(expected)});
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Reports

Report report(const RunMetrics& candidate, const RunMetrics* baseline) {
  if (!baseline) throw HarnessError("report needs baseline metrics");

  struct Row {
    std::string metric;
    LatencySummary base, cand;
  };
  std::vector<Row> rows{{"reads", baseline->read_latency, candidate.read_latency},
                        {"writes", baseline->write_latency, candidate.write_latency}};
  for (const auto& [k, c] : candidate.query_latency) {
    if (auto it = baseline->query_latency.find(k); it != baseline->query_latency.end())
      rows.push_back({k, it->second, c});
  }
  for (const auto& [k, c] : candidate.write_type_latency) {
    if (auto it = baseline->write_type_latency.find(k); it != baseline->write_type_latency.end())
      rows.push_back({k, it->second, c});
  }

  auto factor = [](double base, double cand) -> std::optional<double> {
    if (cand <= 0 || base <= 0) return std::nullopt;
    return base / cand;
  };
  auto fmt = [](std::optional<double> x) {
    if (!x) return std::string("n/a");
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << *x;
    return s.str();
  };

  Report r;
  r.json = {{"candidate", candidate.label}, {"baseline", baseline->label}, {"workload", candidate.workload},
            {"rows", json::array()}};
  std::ostringstream text;
  text << candidate.label << " vs " << baseline->label;
  if (!candidate.workload.empty()) text << " (" << candidate.workload << ")";
  text << "\n";
  text << std::left << std::setw(18) << "metric" << std::right;
  for (const char* h : {"base p50", "cand p50", "x p50", "base p95", "cand p95", "x p95", "base p99", "cand p99", "x p99"})
    text << std::setw(10) << h;
  text << "\n";

  for (const auto& row : rows) {
    json jr = {{"metric", row.metric}};
    text << std::left << std::setw(18) << row.metric << std::right;
    auto cell = [&](const char* name, double b, double c) {
      const auto f = factor(b, c);
      jr[std::string("baseline_") + name] = b;
      jr[std::string("candidate_") + name] = c;
      jr[std::string("factor_") + name] = f ? json(*f) : json(nullptr);
      text << std::setw(10) << fmt(b) << std::setw(10) << fmt(c) << std::setw(10) << fmt(f);
    };
    cell("p50", row.base.p50, row.cand.p50);
    cell("p95", row.base.p95, row.cand.p95);
    cell("p99", row.base.p99, row.cand.p99);
    text << "\n";
    r.json["rows"].push_back(std::move(jr));
  }
  r.json["hit_rate"] = candidate.hit_rate();
  text << "hit rate " << fmt(candidate.hit_rate() * 100) << "%\n";
  r.text = text.str();
  return r;
}

}  // namespace hopcache::harness
