// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors
//
// The cache subspace. An entry for rendered key K lives under
//
//   C/K/000000, C/K/000001, ...
//
// Each chunk holds at most max_value_size bytes of the compressed value;
// the chunks concatenated in index order are the whole value. The value
// itself is a big-endian u64 count followed by that many big-endian u64
// vertex ids (ascending), passed through the configured codec.

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "hopcache/graph_store.hpp"
#include "hopcache/kv_store.hpp"
#include "hopcache/templates.hpp"

namespace hopcache::cache {

inline constexpr std::string_view kCachePrefix = "C/";
inline constexpr std::size_t kChunkIndexWidth = 6;

enum class CacheErrorCode { malformed_value, unknown_codec };

class CacheError : public std::runtime_error {
 public:
  CacheError(CacheErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  CacheErrorCode code() const noexcept { return code_; }

 private:
  CacheErrorCode code_;
};

class Codec {
 public:
  virtual ~Codec() = default;
  virtual std::string_view name() const noexcept = 0;
  virtual std::string compress(std::string_view raw) const = 0;
  /// Throws CacheError(malformed_value) on input it did not produce.
  virtual std::string decompress(std::string_view packed) const = 0;
};

/// "none" (identity) or "zlib".
std::shared_ptr<const Codec> make_codec(std::string_view name);

std::string encode_ids(const std::vector<VertexId>& ids);
/// Rejects truncated input, trailing bytes and ids that are not strictly
/// ascending.
std::vector<VertexId> decode_ids(std::string_view bytes);

/// Pieces of at most `limit` bytes; always at least one (possibly empty).
std::vector<std::string_view> split_chunks(std::string_view payload, std::size_t limit);
std::size_t chunk_count(std::size_t payload_size, std::size_t limit) noexcept;

/// "C/<rendered>/"; all chunks of the entry share this prefix.
std::string entry_prefix(std::string_view rendered_key);
std::string chunk_key(std::string_view rendered_key, std::size_t index);

class CacheStore {
 public:
  /// `chunk_limit` 0 means the store's max value size.
  explicit CacheStore(std::shared_ptr<const Codec> codec = make_codec("zlib"),
                      std::size_t chunk_limit = 0);

  const Codec& codec() const noexcept { return *codec_; }

  /// Raw chunked payload access, below serialization and compression.
  void put_payload(kv::Transaction& tx, std::string_view rendered_key, std::string_view payload) const;
  std::optional<std::string> get_payload(kv::Transaction& tx, std::string_view rendered_key) const;

  void put_entry(kv::Transaction& tx, std::string_view rendered_key,
                 const std::vector<VertexId>& leaf_ids) const;
  /// nullopt is a miss; an empty list is a hit. One range scan.
  std::optional<std::vector<VertexId>> get_entry(kv::Transaction& tx,
                                                 std::string_view rendered_key) const;
  void delete_entry(kv::Transaction& tx, std::string_view rendered_key) const;

  void clear_root(kv::Transaction& tx, const templates::SubQueryTemplate& t, VertexId root) const;
  void clear_template(kv::Transaction& tx, std::string_view template_name) const;

  /// Every entry in the cache subspace (or under one template), decoded.
  /// Malformed entries are returned with `malformed` set.
  struct Listed {
    std::string key;
    std::vector<VertexId> leaf_ids;
    bool malformed = false;
  };
  std::vector<Listed> list(kv::Transaction& tx, std::string_view template_name = {}) const;

 private:
  std::size_t limit(const kv::Transaction& tx) const;
  std::vector<VertexId> decode_value(std::string_view packed) const;

  std::shared_ptr<const Codec> codec_;
  std::size_t chunk_limit_;
};

struct PopulateRequest {
  templates::TemplatePtr tmpl;
  VertexId root;
  templates::WildcardBinding edge_values;
  templates::WildcardBinding leaf_values;
  int attempts_remaining = 0;
};

/// Bounded FIFO. push() never blocks; a full queue drops the request.
class PopulateQueue {
 public:
  explicit PopulateQueue(std::size_t capacity = 4096) : capacity_(capacity) {}

  bool push(PopulateRequest req);
  std::optional<PopulateRequest> pop();
  std::optional<PopulateRequest> wait_pop(const std::atomic<bool>& stop);
  void notify_all() { cv_.notify_all(); }
  std::size_t size() const;
  std::uint64_t dropped() const noexcept { return dropped_.load(); }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<PopulateRequest> q_;
  std::size_t capacity_;
  std::atomic<std::uint64_t> dropped_{0};
};

struct PopulateStats {
  std::uint64_t committed = 0;
  std::uint64_t conflicts = 0;  // conflicting attempts, including retried ones
  std::uint64_t discarded = 0;  // requests that ran out of attempts
  std::uint64_t skipped = 0;    // root missing, failing P^r, or template gated off
  std::uint64_t errors = 0;     // timeouts and other kv errors
  std::uint64_t duplicates = 0; // requests for an instance already populated in the same drain

  PopulateStats& operator+=(const PopulateStats& o);
};

struct PopulatorOptions {
  int attempts = 3;
  std::size_t queue_capacity = 4096;
  // Run each request inline from enqueue(); for deterministic tests.
  bool synchronous = false;
};

/// Executes cache populate (CP) transactions: each request runs in its own
/// read-write transaction that recomputes the instance from the graph and
/// writes the entry, so a concurrent conflicting graph write either
/// invalidates the entry later or makes this transaction abort.
class CachePopulator {
 public:
  /// Called inside the CP transaction before any graph read; returning
  /// false skips the request (template no longer maintained).
  using Gate = std::function<bool(kv::Transaction&, const templates::SubQueryTemplate&)>;
  /// Test hook invoked just before commit; attempts count from 0.
  using BeforeCommit = std::function<void(const PopulateRequest&, int attempt)>;

  CachePopulator(kv::Store& store, const graph::GraphStore& graph, const CacheStore& cache,
                 PopulatorOptions options = {});
  ~CachePopulator();

  CachePopulator(const CachePopulator&) = delete;
  CachePopulator& operator=(const CachePopulator&) = delete;

  void set_gate(Gate gate) { gate_ = std::move(gate); }
  void set_before_commit(BeforeCommit hook) { before_commit_ = std::move(hook); }

  /// Non-blocking. Returns false when the queue was full.
  bool enqueue(PopulateRequest req);
  /// Runs every queued request on the calling thread. A request for an
  /// instance already handled earlier in the same call is dropped.
  PopulateStats drain();
  /// Runs one request to completion (all its attempts).
  PopulateStats run(PopulateRequest req);

  void start_workers(std::size_t n);
  void stop_workers();

  const PopulateQueue& queue() const noexcept { return queue_; }
  PopulateStats totals() const;
  const PopulatorOptions& options() const noexcept { return options_; }

 private:
  void record(const PopulateStats& s);

  kv::Store& store_;
  const graph::GraphStore& graph_;
  const CacheStore& cache_;
  PopulatorOptions options_;
  PopulateQueue queue_;
  Gate gate_;
  BeforeCommit before_commit_;

  mutable std::mutex stats_mu_;
  PopulateStats totals_;

  std::atomic<bool> stop_{false};
  std::vector<std::thread> workers_;
};

}  // namespace hopcache::cache
