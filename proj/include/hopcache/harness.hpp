// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors
//
// Workload harness: the desk-scale marketplace graph, the six standard
// templates, workload traces, the measured runner, the brute-force
// consistency oracle and metric reports.
//
// The graph has four kinds of vertices, each with a unique external name
// kept in an alias index (A/<name> -> vertex id):
//
//   user "U<n>"        Region (string)
//   watch-list "W<n>"  wid
//   listing "L<n>"     lid, Status (0..2)
//   seller "S<n>"      sid, Tier (1..3)
//
// and edges user -owns-> watch-list, watch-list -includes-> listing
// (IsActive, LastSeen), seller -sells-> listing and user -views-> listing
// (Device, LastSeen).

#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hopcache/coordinator.hpp"
#include "hopcache/kv_store.hpp"
#include "hopcache/maintenance.hpp"
#include "hopcache/node.hpp"
#include "hopcache/query.hpp"
#include "hopcache/templates.hpp"

namespace hopcache::harness {

class HarnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Graph data

struct VertexRecord {
  std::string alias;
  std::string label;
  PropertyMap props;
  friend bool operator==(const VertexRecord&, const VertexRecord&) = default;
};

struct EdgeRecord {
  std::string out;  // aliases
  std::string in;
  std::string label;
  PropertyMap props;
  friend bool operator==(const EdgeRecord&, const EdgeRecord&) = default;
};

/// A graph described by aliases, independent of any store.
struct GraphData {
  std::vector<VertexRecord> vertices;
  std::vector<EdgeRecord> edges;
  friend bool operator==(const GraphData&, const GraphData&) = default;
};

/// One JSON object per line:
///   {"type":"vertex","alias":"W1","label":"watch-list","props":{...}}
///   {"type":"edge","out":"W1","in":"L3","label":"includes","props":{...}}
/// Property values are JSON booleans, integers or strings. Blank lines
/// are skipped.
GraphData read_graph_jsonl(std::istream& in);
void write_graph_jsonl(std::ostream& out, const GraphData& g);

struct DeskGraphOptions {
  std::size_t vertices = 2000;
  std::size_t edges = 10'000;
  std::uint64_t seed = 1;
};

/// Vertices split 10% users, 15% watch-lists, 65% listings, 10% sellers.
/// Every watch-list has one owner and every listing one seller; the rest
/// of the edge budget goes to includes (60%) and views (40%), with
/// Zipf-skewed listing popularity.
GraphData generate_desk_graph(const DeskGraphOptions& options);

/// SQ1 and SQ2 traverse out-edges, SQ3-SQ6 in-edges.
std::vector<templates::SubQueryTemplate> desk_templates();

/// Properties whose values are unique per vertex (for the id-filter rewrite).
const std::set<std::string>& unique_properties();

/// Aliases of a graph grouped by vertex label.
struct Population {
  std::vector<std::string> users, watch_lists, listings, sellers;
  static Population of(const GraphData& g);
};

/// Samples ranks 0..n-1 with probability proportional to 1 / (rank+1)^s.
class Zipf {
 public:
  Zipf(std::size_t n, double s);
  std::size_t operator()(std::mt19937_64& rng) const;
  std::size_t size() const noexcept { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
};

// ---------------------------------------------------------------------------
// Deployment

inline constexpr std::string_view kAliasPrefix = "A/";
inline constexpr std::string_view kTemplateDefPrefix = "M/def/";
std::string alias_key(std::string_view alias);

struct DeploymentOptions {
  NodeOptions node;
  std::size_t nodes = 1;
};

/// A store with query-processor nodes and a coordinator. Node 0 serves the
/// workload; extra nodes only take part in template life cycles.
class Deployment {
 public:
  explicit Deployment(DeploymentOptions options = {}, kv::StoreOptions store_options = {});

  kv::Store& store() noexcept { return store_; }
  QueryNode& node(std::size_t i = 0) { return *nodes_.at(i); }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  coordinator::Coordinator& coordinator() noexcept { return *coord_; }

  /// Adds the graph in batches; aliases must be new. Edges whose endpoint
  /// alias is unknown raise HarnessError.
  void load(const GraphData& g, std::size_t batch = 500);
  std::optional<VertexId> resolve(kv::Transaction& tx, std::string_view alias) const;

  /// Registers with the coordinator and stores the definition under M/def/.
  void register_template(const templates::SubQueryTemplate& def);
  coordinator::LifecycleState enable(const std::string& name);
  coordinator::LifecycleState disable(const std::string& name);
  /// Templates in the enabled state.
  std::vector<templates::TemplatePtr> enabled() const;

  /// Every kv pair plus id counters, in a private binary format.
  void save(std::ostream& out);
  /// Loads a saved deployment into this (empty) one and restores the
  /// template life-cycle states recorded in it.
  void restore(std::istream& in, bool restore_templates = true);
  /// Copies graph, aliases and (optionally) templates of `other` into
  /// this empty deployment, without cache entries.
  void copy_from(Deployment& other, bool with_templates);
  /// Aliases in the alias index grouped by their vertex's label, in
  /// ascending numeric order of the alias suffix.
  Population population();

 private:
  void restore_templates();

  kv::Store store_;
  std::shared_ptr<graph::IdAllocator> ids_;
  std::vector<std::unique_ptr<QueryNode>> nodes_;
  std::unique_ptr<coordinator::Coordinator> coord_;
};

// ---------------------------------------------------------------------------
// Workloads

enum class OpKind { read, write };

enum class WriteKind {
  upsert,            // add-or-update listings and their includes edges
  update_last_seen,  // touch LastSeen on edges; no template reads it
  delete_edges,
  toggle_active,     // flip IsActive on an includes edge
  set_property,      // change or drop Status / Tier / Region
  delete_vertex,
  add_edge,          // new views / owns / sells edge
};
std::string_view to_string(WriteKind k) noexcept;
std::optional<WriteKind> parse_write_kind(std::string_view s) noexcept;
const std::vector<WriteKind>& all_write_kinds();

struct WorkloadSpec {
  std::string name = "custom";
  std::size_t ops = 10'000;
  double read_fraction = 0.99;
  std::uint64_t seed = 1;
  double zipf_s = 1.0;
  std::map<std::string, double> queries;     // query id -> share of reads
  std::map<WriteKind, double> writes;        // share of writes

  /// Throws HarnessError unless ops > 0, fractions lie in [0, 1], the
  /// query and write shares each sum to 1 (within 1e-6; an empty write
  /// map is allowed when read_fraction is 1) and query ids are known.
  void validate() const;
  nlohmann::json to_json() const;
  static WorkloadSpec from_json(const nlohmann::json& j);

  // Mixes: 99/1 heavy read, 62/38 heavy write, 94/6 light read. Writes use
  // the 44.85 / 43.94 / 11.22 split of upsert / last-seen / delete-edges.
  static WorkloadSpec r_hat(std::size_t ops, std::uint64_t seed);
  static WorkloadSpec w_hat(std::size_t ops, std::uint64_t seed);
  static WorkloadSpec r_check(std::size_t ops, std::uint64_t seed);
  /// Write-heavy mix that also toggles, edits, drops and deletes, for
  /// consistency runs.
  static WorkloadSpec oracle_mix(std::size_t ops, std::uint64_t seed);
  static WorkloadSpec preset(std::string_view name, std::size_t ops, std::uint64_t seed);
};

/// Query ids Q1..Q9 with their text patterns (for documentation and CLI).
const std::map<std::string, std::string>& query_catalog();

struct Operation {
  OpKind kind = OpKind::read;
  std::string query_id;  // reads
  std::string text;      // reads
  query::Traversal traversal;
  WriteKind write = WriteKind::upsert;
  std::array<std::uint32_t, 4> args{};  // writes: random draws the program interprets
};

using Trace = std::vector<Operation>;

/// Deterministic for a given spec and population.
Trace generate(const WorkloadSpec& spec, const Population& pop);

/// Runs one write operation against the deployment's node 0. The program
/// resolves its targets in the write transaction, so it is a deterministic
/// function of args and the graph state.
WriteOutcome apply_write(Deployment& d, const Operation& op, const Population& pop, std::uint64_t op_index);

// ---------------------------------------------------------------------------
// Runner and metrics

struct LatencySummary {
  std::size_t count = 0;
  double mean = 0, p50 = 0, p95 = 0, p99 = 0, max = 0;  // microseconds
  static LatencySummary of(std::vector<double> micros);
  nlohmann::json to_json() const;
  static LatencySummary from_json(const nlohmann::json& j);
};

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value, 0 for
/// an empty input. `sorted` must be ascending.
double nearest_rank(const std::vector<double>& sorted, double p);

struct RunConfig {
  bool cache = true;
  bool rewrite = false;
  maintenance::MaintenancePolicy policy;
  std::size_t drain_every = 16;  // populate queue drain cadence, in ops
  bool shadow_check = false;     // also run each read uncached and compare
  bool warm = false;             // run each distinct read once before measuring
  std::chrono::nanoseconds op_delay{0};
  std::size_t op_budget = 0;
  std::string label() const;  // e.g. "C+Q-"
};

struct RunMetrics {
  std::string label;
  std::string workload;
  std::string policy;
  std::size_t ops = 0, reads = 0, writes = 0;
  LatencySummary read_latency, write_latency;
  std::map<std::string, LatencySummary> query_latency;
  std::map<std::string, LatencySummary> write_type_latency;
  std::map<std::string, HitCounts> hits;  // per template
  std::map<std::string, std::map<std::size_t, std::size_t>> impacted_keys;  // write type -> keys -> count
  std::map<std::string, std::uint64_t> errors;  // conflict, timeout, malformed
  std::uint64_t diffs = 0;                      // shadow mismatches
  std::vector<std::size_t> diff_ops;            // first few mismatching op indexes
  std::uint64_t fallback_hops = 0;
  cache::PopulateStats populate;
  double wall_seconds = 0;

  double hit_rate() const;
  nlohmann::json to_json() const;
  static RunMetrics from_json(const nlohmann::json& j);
};

/// Executes the trace on node 0. With cache off no template is installed
/// for the run; with cache on the deployment's enabled templates serve
/// and are maintained under config.policy (the node options are taken from
/// the deployment; see make_deployment()).
RunMetrics run(Deployment& d, const Trace& trace, const Population& pop, const RunConfig& config,
               const std::string& workload_name = "custom");

/// A fresh single-node deployment with node options from `config`, the
/// graph loaded and, when caching, all desk templates enabled.
std::unique_ptr<Deployment> make_deployment(const GraphData& g, const std::vector<templates::SubQueryTemplate>& defs,
                                            const RunConfig& config);

// ---------------------------------------------------------------------------
// Oracle

struct Violation {
  std::string key;
  std::string problem;  // "unparseable", "malformed", "stale"
  std::vector<VertexId> cached;
  std::vector<VertexId> expected;
  nlohmann::json to_json() const;
};

struct OracleReport {
  std::vector<Violation> violations;
  std::size_t entries_checked = 0;
  std::size_t instances = 0;  // non-empty instances of the templates in the graph
  bool ok() const noexcept { return violations.empty(); }
  nlohmann::json to_json() const;
};

/// Recomputes, by brute force over every edge and vertex, the leaf set of
/// every instance of `templates` and compares each cache entry under their
/// prefixes against it. Entries for instances with no qualifying edge must
/// be empty. Uses only template predicates and raw cache reads; the store
/// must be quiescent.
OracleReport oracle_check(kv::Store& store, const std::vector<templates::TemplatePtr>& templates,
                          std::string_view codec = "zlib");

// ---------------------------------------------------------------------------
// Reports

struct Report {
  nlohmann::json json;
  std::string text;
};

/// Improvement factors baseline / candidate for p50, p95 and p99 of reads,
/// writes, each query and each write type present in both. Throws
/// HarnessError when the baseline is missing.
Report report(const RunMetrics& candidate, const RunMetrics* baseline);

}  // namespace hopcache::harness
