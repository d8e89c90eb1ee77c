// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors
//
// In-memory ordered, transactional key-value store.
//
// Every key keeps a short chain of (commit version, value-or-tombstone)
// entries so that a transaction reads a stable snapshot taken at begin().
// Read-write transactions buffer their mutations locally and validate
// their read set against the commit log at commit() (optimistic
// concurrency). Conflicts are tracked per exact key and per scanned
// prefix; a cleared range conflicts with every read key or scanned prefix
// it overlaps.

#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hopcache::kv {

using Bytes = std::string;
using StoreVersion = std::uint64_t;

inline constexpr std::size_t kDefaultMaxValueSize = 100'000;

enum class ErrorCode {
  value_too_large,
  transaction_closed,
  read_only_transaction,
  conflict,
  timeout,
  invalid_key,
};

std::string_view to_string(ErrorCode code) noexcept;

class KvError : public std::runtime_error {
 public:
  KvError(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Thrown by commit() when a key or range read by the transaction was
/// written by a transaction that committed after its snapshot. The caller
/// owns the retry loop.
class ConflictError : public KvError {
 public:
  explicit ConflictError(const std::string& what) : KvError(ErrorCode::conflict, what) {}
};

enum class TxMode { read_only, read_write };

struct StoreOptions {
  std::size_t max_value_size = kDefaultMaxValueSize;
  // Artificial latency added to every get, range scan and write commit.
  std::chrono::nanoseconds op_delay{0};
  // Per-transaction operation budget; exceeding it raises ErrorCode::timeout.
  // Zero disables the limit.
  std::size_t op_budget = 0;
};

/// Counts point reads and range scans whose key (or scan prefix) falls
/// under a tracked prefix.
struct KeyspaceCounts {
  std::uint64_t gets = 0;
  std::uint64_t scans = 0;
};

bool starts_with(std::string_view s, std::string_view prefix) noexcept;

class Transaction;

class Store {
 public:
  explicit Store(StoreOptions options = {});
  ~Store();

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  Transaction begin(TxMode mode);

  /// Version of the latest successful write commit.
  StoreVersion version() const noexcept { return version_.load(std::memory_order_acquire); }

  const StoreOptions& options() const noexcept { return options_; }
  void set_op_delay(std::chrono::nanoseconds delay) noexcept { options_.op_delay = delay; }
  void set_op_budget(std::size_t budget) noexcept { options_.op_budget = budget; }

  /// Registers a prefix whose reads are counted. Returns a handle for
  /// counts(). Register before concurrent use.
  std::size_t track_prefix(Bytes prefix);
  KeyspaceCounts counts(std::size_t handle) const;
  void reset_counts();

  std::uint64_t commits() const noexcept { return commits_.load(std::memory_order_relaxed); }
  std::uint64_t conflicts() const noexcept { return conflicts_.load(std::memory_order_relaxed); }

  /// Number of live keys (ignores tombstones); test and diagnostics helper.
  std::size_t live_key_count() const;

 private:
  friend class Transaction;

  struct Version {
    StoreVersion version;
    std::optional<Bytes> value;
  };

  struct CommitRecord {
    StoreVersion version;
    std::vector<Bytes> keys;
    std::vector<Bytes> cleared;
  };

  struct Tracked {
    Bytes prefix;
    std::atomic<std::uint64_t> gets{0};
    std::atomic<std::uint64_t> scans{0};
  };

  StoreVersion open_snapshot();
  void close_snapshot(StoreVersion v);
  StoreVersion oldest_snapshot() const;

  std::optional<Bytes> read(std::string_view key, StoreVersion at) const;
  void scan(std::string_view prefix, StoreVersion at, std::vector<std::pair<Bytes, Bytes>>& out) const;
  StoreVersion apply(Transaction& tx);

  void count_get(std::string_view key) const;
  void count_scan(std::string_view prefix) const;
  void delay() const;

  StoreOptions options_;

  mutable std::shared_mutex data_mu_;
  std::map<Bytes, std::vector<Version>, std::less<>> data_;
  std::deque<CommitRecord> log_;
  std::atomic<StoreVersion> version_{0};

  mutable std::mutex snap_mu_;
  std::multiset<StoreVersion> snapshots_;

  std::vector<std::unique_ptr<Tracked>> tracked_;

  std::atomic<std::uint64_t> commits_{0};
  std::atomic<std::uint64_t> conflicts_{0};
  std::atomic<std::uint64_t> next_tx_id_{1};
};

/// A snapshot-isolated unit of work. Move-only; an open transaction that
/// goes out of scope is aborted.
class Transaction {
 public:
  Transaction(Transaction&& other) noexcept;
  Transaction& operator=(Transaction&& other) noexcept;
  Transaction(const Transaction&) = delete;
  Transaction& operator=(const Transaction&) = delete;
  ~Transaction();

  TxMode mode() const noexcept { return mode_; }
  StoreVersion read_version() const noexcept { return read_version_; }
  std::uint64_t id() const noexcept { return id_; }
  bool is_open() const noexcept { return store_ != nullptr && open_; }
  Store& store() const noexcept { return *store_; }

  std::optional<Bytes> get(std::string_view key);
  /// All live pairs under `prefix`, ascending, with this transaction's
  /// buffered writes applied.
  std::vector<std::pair<Bytes, Bytes>> range_scan(std::string_view prefix);

  void set(std::string_view key, std::string_view value);
  void erase(std::string_view key);
  void clear_range(std::string_view prefix);

  /// Applies the write buffer atomically. Read-only transactions and
  /// transactions without writes return the snapshot version.
  StoreVersion commit();
  void abort() noexcept;

  bool has_writes() const noexcept { return !points_.empty() || !clears_.empty(); }

 private:
  friend class Store;
  Transaction(Store* store, TxMode mode, StoreVersion rv, std::uint64_t id);

  void check_open() const;
  void check_writable() const;
  void charge_op();
  bool cleared_in_buffer(std::string_view key) const;

  Store* store_ = nullptr;
  TxMode mode_ = TxMode::read_only;
  StoreVersion read_version_ = 0;
  std::uint64_t id_ = 0;
  bool open_ = false;
  std::size_t ops_ = 0;

  // Point mutations (nullopt = delete) and cleared prefixes. A clear drops
  // earlier buffered points under it, so at commit clears apply first.
  std::map<Bytes, std::optional<Bytes>, std::less<>> points_;
  std::vector<Bytes> clears_;

  std::set<Bytes, std::less<>> read_keys_;
  std::vector<Bytes> read_prefixes_;
};

}  // namespace hopcache::kv
