// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors
//
// A query-processor node: graph access, the cache read path, cache
// maintenance on the write path, and the cache populate worker, all over a
// kv store that may be shared with other nodes.
//
// Each template a node knows carries two flags. invalidate_active makes
// the node's writes maintain the template's entries; read_active lets the
// node's reads use them. A transaction takes one snapshot of the flags
// when it starts and uses it throughout.

#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hopcache/cache.hpp"
#include "hopcache/graph_store.hpp"
#include "hopcache/kv_store.hpp"
#include "hopcache/maintenance.hpp"
#include "hopcache/query.hpp"
#include "hopcache/templates.hpp"

namespace hopcache {

/// Per-template lifecycle marker shared by all nodes. A populate
/// transaction reads it and gives up once it says "removed".
inline constexpr std::string_view kTemplateMetaPrefix = "M/tmpl/";
std::string template_meta_key(std::string_view template_name);

struct TemplateFlags {
  bool invalidate_active = false;
  bool read_active = false;
  friend bool operator==(const TemplateFlags&, const TemplateFlags&) = default;
};

struct NodeOptions {
  maintenance::MaintenancePolicy policy;
  cache::PopulatorOptions populate;
  std::string codec = "zlib";
  std::size_t chunk_limit = 0;  // 0: the store's max value size
  std::size_t supernode_threshold = 1000;
  // Apply rewrite_id_filter() to queries passed to read().
  bool rewrite = false;
  std::set<std::string> unique_props;
};

struct QueryResult {
  query::FinalClause final = query::FinalClause::id;
  std::vector<VertexId> ids;
  std::vector<Vertex> values;  // valueMap() only

  std::uint64_t count() const noexcept { return ids.size(); }
  nlohmann::json to_json() const;
  friend bool operator==(const QueryResult&, const QueryResult&) = default;
};

struct HitCounts {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
};

struct ReadStats {
  std::map<std::string, HitCounts> per_template;
  std::uint64_t fallback_hops = 0;     // hop executions without a usable template
  std::uint64_t malformed = 0;         // corrupt entries treated as misses
  std::uint64_t populate_dropped = 0;  // miss requests the full queue refused

  void merge(const ReadStats& o);
};

class QueryNode;

/// Handed to write programs: the read-write transaction plus reads that
/// bypass the cache, so they observe the program's own uncommitted writes.
class WriteContext {
 public:
  WriteContext(QueryNode& node, kv::Transaction& tx) : node_(node), tx_(tx) {}

  kv::Transaction& tx() noexcept { return tx_; }
  graph::GraphStore& graph() noexcept;
  QueryResult read(const query::Traversal& t);
  QueryResult read(std::string_view text);

 private:
  QueryNode& node_;
  kv::Transaction& tx_;
};

struct Impact {
  GraphChange change;
  maintenance::ImpactReport report;
};

struct WriteOutcome {
  std::vector<Impact> impacts;
  kv::StoreVersion version = 0;
  int attempts = 0;
  bool committed = false;
};

using WriteProgram = std::function<void(WriteContext&)>;
/// Maps an external vertex name from g.V("...") to a vertex id, reading
/// through the query's own transaction.
using AliasResolver = std::function<std::optional<VertexId>(kv::Transaction&, std::string_view)>;

class QueryNode {
 public:
  QueryNode(kv::Store& store, std::shared_ptr<graph::IdAllocator> ids, NodeOptions options = {},
            std::string name = "node0");
  ~QueryNode();

  QueryNode(const QueryNode&) = delete;
  QueryNode& operator=(const QueryNode&) = delete;

  const std::string& name() const noexcept { return name_; }
  kv::Store& store() noexcept { return store_; }
  graph::GraphStore& graph() noexcept { return graph_; }
  const cache::CacheStore& cache() const noexcept { return cache_; }
  cache::CachePopulator& populator() noexcept { return populator_; }
  const maintenance::Maintainer& maintainer() const noexcept { return maintainer_; }
  const NodeOptions& options() const noexcept { return options_; }

  // Template hosting; driven by the coordinator or directly.
  void install(templates::TemplatePtr t);
  void uninstall(const std::string& name);
  /// Returns once no write that started under the previous flags is still
  /// running. Must not be called from inside a write program.
  void set_flags(const std::string& name, TemplateFlags flags);
  std::optional<TemplateFlags> flags(const std::string& name) const;
  /// install() with both flags set; for single-node setups.
  void enable_local(templates::TemplatePtr t);
  std::vector<templates::TemplatePtr> installed() const;
  std::vector<templates::TemplatePtr> maintained() const;
  std::vector<templates::TemplatePtr> readable() const;

  void set_alias_resolver(AliasResolver resolver) { resolver_ = std::move(resolver); }
  /// Called once per impact after its transaction commits.
  void set_impact_observer(std::function<void(const Impact&)> observer) {
    observer_ = std::move(observer);
  }

  /// Decomposes against the node's readable templates (none when
  /// use_cache is false).
  query::QueryPlan plan(const query::Traversal& t, bool use_cache) const;
  QueryResult execute_read(kv::Transaction& tx, const query::Traversal& t, bool use_cache,
                           ReadStats* stats = nullptr);
  /// Parses, optionally rewrites, and runs in a fresh read-only transaction.
  QueryResult read(std::string_view text, bool use_cache = true, ReadStats* stats = nullptr);

  /// Runs the program in one read-write transaction and commits.
  /// ConflictError propagates; the transaction is then aborted.
  WriteOutcome write(const WriteProgram& program);
  /// write() retried on conflict up to `attempts` times; the last
  /// ConflictError propagates.
  WriteOutcome write_retry(const WriteProgram& program, int attempts);
  /// Deletes a vertex. Above the supernode threshold the incident edges go
  /// first, in batches of that size, each batch its own transaction.
  WriteOutcome delete_vertex(VertexId id, int attempts = 8);

 private:
  struct Hosted {
    templates::TemplatePtr tmpl;
    TemplateFlags flags;
  };
  struct TxState {
    std::vector<templates::TemplatePtr> maintained;
    std::vector<Impact> impacts;
    std::uint64_t epoch = 0;
  };
  class TxScope;

  void on_change(kv::Transaction& tx, const GraphChange& change);
  std::vector<templates::TemplatePtr> select(bool TemplateFlags::*field) const;

  kv::Store& store_;
  std::string name_;
  NodeOptions options_;
  graph::GraphStore graph_;
  cache::CacheStore cache_;
  maintenance::Maintainer maintainer_;
  cache::CachePopulator populator_;
  AliasResolver resolver_;
  std::function<void(const Impact&)> observer_;

  mutable std::mutex templates_mu_;
  std::vector<Hosted> hosted_;  // registration order

  // Flag changes bump the epoch and then wait for writes that took their
  // flag snapshot under an older epoch, so an acknowledged flag change is
  // in force for every write still running.
  std::mutex tx_mu_;
  std::condition_variable tx_cv_;
  std::uint64_t epoch_ = 0;
  std::unordered_map<std::uint64_t, TxState> tx_state_;
};

}  // namespace hopcache
