// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include "hopcache/kv_store.hpp"

#include <algorithm>
#include <thread>

namespace hopcache::kv {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::value_too_large: return "value-too-large";
    case ErrorCode::transaction_closed: return "transaction-closed";
    case ErrorCode::read_only_transaction: return "read-only-transaction";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::timeout: return "timeout";
    case ErrorCode::invalid_key: return "invalid-key";
  }
  return "unknown";
}

bool starts_with(std::string_view s, std::string_view prefix) noexcept {
  return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

// ---------------------------------------------------------------- Store

Store::Store(StoreOptions options) : options_(options) {}

Store::~Store() = default;

Transaction Store::begin(TxMode mode) {
  StoreVersion rv = open_snapshot();
  return Transaction(this, mode, rv, next_tx_id_.fetch_add(1, std::memory_order_relaxed));
}

StoreVersion Store::open_snapshot() {
  std::lock_guard lock(snap_mu_);
  StoreVersion v = version_.load(std::memory_order_acquire);
  snapshots_.insert(v);
  return v;
}

void Store::close_snapshot(StoreVersion v) {
  std::lock_guard lock(snap_mu_);
  auto it = snapshots_.find(v);
  if (it != snapshots_.end()) snapshots_.erase(it);
}

StoreVersion Store::oldest_snapshot() const {
  std::lock_guard lock(snap_mu_);
  if (snapshots_.empty()) return version_.load(std::memory_order_acquire);
  return *snapshots_.begin();
}

std::size_t Store::track_prefix(Bytes prefix) {
  auto t = std::make_unique<Tracked>();
  t->prefix = std::move(prefix);
  tracked_.push_back(std::move(t));
  return tracked_.size() - 1;
}

KeyspaceCounts Store::counts(std::size_t handle) const {
  const auto& t = *tracked_.at(handle);
  return {t.gets.load(std::memory_order_relaxed), t.scans.load(std::memory_order_relaxed)};
}

void Store::reset_counts() {
  for (auto& t : tracked_) {
    t->gets.store(0, std::memory_order_relaxed);
    t->scans.store(0, std::memory_order_relaxed);
  }
}

std::size_t Store::live_key_count() const {
  std::shared_lock lock(data_mu_);
  std::size_t n = 0;
  for (const auto& [key, chain] : data_) {
    if (!chain.empty() && chain.back().value) ++n;
  }
  return n;
}

void Store::count_get(std::string_view key) const {
  for (const auto& t : tracked_) {
    if (starts_with(key, t->prefix)) t->gets.fetch_add(1, std::memory_order_relaxed);
  }
}

void Store::count_scan(std::string_view prefix) const {
  for (const auto& t : tracked_) {
    if (starts_with(prefix, t->prefix)) t->scans.fetch_add(1, std::memory_order_relaxed);
  }
}

void Store::delay() const {
  if (options_.op_delay.count() > 0) std::this_thread::sleep_for(options_.op_delay);
}

std::optional<Bytes> Store::read(std::string_view key, StoreVersion at) const {
  std::shared_lock lock(data_mu_);
  auto it = data_.find(key);
  if (it == data_.end()) return std::nullopt;
  const auto& chain = it->second;
  for (auto v = chain.rbegin(); v != chain.rend(); ++v) {
    if (v->version <= at) return v->value;
  }
  return std::nullopt;
}

void Store::scan(std::string_view prefix, StoreVersion at, std::vector<std::pair<Bytes, Bytes>>& out) const {
  std::shared_lock lock(data_mu_);
  for (auto it = data_.lower_bound(prefix); it != data_.end() && starts_with(it->first, prefix);
       ++it) {
    const auto& chain = it->second;
    for (auto v = chain.rbegin(); v != chain.rend(); ++v) {
      if (v->version <= at) {
        if (v->value) out.emplace_back(it->first, *v->value);
        break;
      }
    }
  }
}

StoreVersion Store::apply(Transaction& tx) {
  std::unique_lock lock(data_mu_);

  // Validation: any commit newer than the snapshot that wrote something
  // this transaction read aborts it.
  for (auto rec = log_.rbegin(); rec != log_.rend() && rec->version > tx.read_version_; ++rec) {
    for (const auto& k : rec->keys) {
      if (tx.read_keys_.count(k)) throw ConflictError("conflict on key");
      for (const auto& p : tx.read_prefixes_) {
        if (starts_with(k, p)) throw ConflictError("conflict on scanned range");
      }
    }
    for (const auto& c : rec->cleared) {
      auto it = tx.read_keys_.lower_bound(c);
      if (it != tx.read_keys_.end() && starts_with(*it, c)) {
        throw ConflictError("conflict on key under cleared range");
      }
      for (const auto& p : tx.read_prefixes_) {
        if (starts_with(p, c) || starts_with(c, p)) {
          throw ConflictError("conflict on scanned range under cleared range");
        }
      }
    }
  }

  const StoreVersion v = version_.load(std::memory_order_relaxed) + 1;
  const StoreVersion keep_from = std::min(oldest_snapshot(), v);

  // Drops versions no open snapshot can observe; erases fully dead keys.
  auto compact = [&](decltype(data_)::iterator it) {
    auto& chain = it->second;
    std::size_t first_visible = 0;
    for (std::size_t i = 0; i < chain.size(); ++i) {
      if (chain[i].version <= keep_from) first_visible = i;
    }
    if (first_visible > 0) chain.erase(chain.begin(), chain.begin() + first_visible);
    if (chain.size() == 1 && !chain.front().value && chain.front().version <= keep_from) {
      data_.erase(it);
    }
  };

  CommitRecord record{v, {}, {}};
  std::vector<Bytes> touched;

  for (const auto& prefix : tx.clears_) {
    for (auto it = data_.lower_bound(prefix); it != data_.end() && starts_with(it->first, prefix);
         ++it) {
      auto& chain = it->second;
      if (!chain.empty() && chain.back().value) {
        chain.push_back({v, std::nullopt});
        touched.push_back(it->first);
      }
    }
    record.cleared.push_back(prefix);
  }
  for (auto& [key, value] : tx.points_) {
    auto it = data_.find(key);
    if (it == data_.end()) {
      if (value) {
        it = data_.emplace(key, std::vector<Version>{}).first;
        it->second.push_back({v, value});
        touched.push_back(key);
      }
    } else {
      auto& chain = it->second;
      if (!chain.empty() && chain.back().version == v) {
        chain.back().value = value;
      } else if (value || (!chain.empty() && chain.back().value)) {
        chain.push_back({v, value});
      }
      touched.push_back(key);
    }
    record.keys.push_back(key);
  }

  for (const auto& key : touched) {
    auto it = data_.find(key);
    if (it != data_.end()) compact(it);
  }

  log_.push_back(std::move(record));
  version_.store(v, std::memory_order_release);
  while (!log_.empty() && log_.front().version <= keep_from) log_.pop_front();
  return v;
}

// ---------------------------------------------------------- Transaction

Transaction::Transaction(Store* store, TxMode mode, StoreVersion rv, std::uint64_t id)
    : store_(store), mode_(mode), read_version_(rv), id_(id), open_(true) {}

Transaction::Transaction(Transaction&& other) noexcept { *this = std::move(other); }

Transaction& Transaction::operator=(Transaction&& other) noexcept {
  if (this != &other) {
    abort();
    store_ = std::exchange(other.store_, nullptr);
    mode_ = other.mode_;
    read_version_ = other.read_version_;
    id_ = other.id_;
    open_ = std::exchange(other.open_, false);
    ops_ = other.ops_;
    points_ = std::move(other.points_);
    clears_ = std::move(other.clears_);
    read_keys_ = std::move(other.read_keys_);
    read_prefixes_ = std::move(other.read_prefixes_);
  }
  return *this;
}

Transaction::~Transaction() { abort(); }

void Transaction::check_open() const {
  if (!is_open()) throw KvError(ErrorCode::transaction_closed, "transaction is closed");
}

void Transaction::check_writable() const {
  check_open();
  if (mode_ != TxMode::read_write) {
    throw KvError(ErrorCode::read_only_transaction, "write in a read-only transaction");
  }
}

void Transaction::charge_op() {
  ++ops_;
  const auto budget = store_->options_.op_budget;
  if (budget != 0 && ops_ > budget) {
    abort();
    throw KvError(ErrorCode::timeout, "transaction exceeded its operation budget");
  }
}

bool Transaction::cleared_in_buffer(std::string_view key) const {
  return std::any_of(clears_.begin(), clears_.end(),
                     [&](const Bytes& p) { return starts_with(key, p); });
}

std::optional<Bytes> Transaction::get(std::string_view key) {
  check_open();
  charge_op();
  store_->delay();
  store_->count_get(key);
  if (auto it = points_.find(key); it != points_.end()) return it->second;
  if (cleared_in_buffer(key)) return std::nullopt;
  if (mode_ == TxMode::read_write) read_keys_.emplace(key);
  return store_->read(key, read_version_);
}

std::vector<std::pair<Bytes, Bytes>> Transaction::range_scan(std::string_view prefix) {
  check_open();
  charge_op();
  store_->delay();
  store_->count_scan(prefix);
  if (mode_ == TxMode::read_write) read_prefixes_.emplace_back(prefix);

  std::vector<std::pair<Bytes, Bytes>> base;
  store_->scan(prefix, read_version_, base);
  auto buffered = points_.lower_bound(prefix);
  const bool overlay = buffered != points_.end() && starts_with(buffered->first, prefix);
  if (!overlay && clears_.empty()) return base;

  std::map<Bytes, Bytes> merged{std::make_move_iterator(base.begin()), std::make_move_iterator(base.end())};
  if (!clears_.empty()) {
    for (auto it = merged.begin(); it != merged.end();) {
      it = cleared_in_buffer(it->first) ? merged.erase(it) : std::next(it);
    }
  }
  for (auto it = points_.lower_bound(prefix); it != points_.end() && starts_with(it->first, prefix);
       ++it) {
    if (it->second) {
      merged.insert_or_assign(it->first, *it->second);
    } else {
      merged.erase(it->first);
    }
  }
  return {std::make_move_iterator(merged.begin()), std::make_move_iterator(merged.end())};
}

void Transaction::set(std::string_view key, std::string_view value) {
  check_writable();
  if (key.empty()) throw KvError(ErrorCode::invalid_key, "empty key");
  if (value.size() > store_->options_.max_value_size) {
    throw KvError(ErrorCode::value_too_large,
                  "value of " + std::to_string(value.size()) + " bytes exceeds limit of " +
                      std::to_string(store_->options_.max_value_size));
  }
  points_.insert_or_assign(Bytes(key), Bytes(value));
}

void Transaction::erase(std::string_view key) {
  check_writable();
  if (key.empty()) throw KvError(ErrorCode::invalid_key, "empty key");
  points_.insert_or_assign(Bytes(key), std::nullopt);
}

void Transaction::clear_range(std::string_view prefix) {
  check_writable();
  if (prefix.empty()) throw KvError(ErrorCode::invalid_key, "empty prefix");
  for (auto it = points_.lower_bound(prefix); it != points_.end() && starts_with(it->first, prefix);) {
    it = points_.erase(it);
  }
  clears_.emplace_back(prefix);
}

StoreVersion Transaction::commit() {
  check_open();
  if (mode_ == TxMode::read_only || !has_writes()) {
    StoreVersion v = read_version_;
    abort();
    return v;
  }
  store_->delay();
  try {
    StoreVersion v = store_->apply(*this);
    store_->commits_.fetch_add(1, std::memory_order_relaxed);
    abort();
    return v;
  } catch (const ConflictError&) {
    store_->conflicts_.fetch_add(1, std::memory_order_relaxed);
    abort();
    throw;
  }
}

void Transaction::abort() noexcept {
  if (store_ != nullptr && open_) {
    store_->close_snapshot(read_version_);
    open_ = false;
  }
  points_.clear();
  clears_.clear();
  read_keys_.clear();
  read_prefixes_.clear();
}

}  // namespace hopcache::kv
