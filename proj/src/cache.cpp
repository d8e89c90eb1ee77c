// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include "hopcache/cache.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <unordered_set>

#include "hopcache/encoding.hpp"

namespace hopcache::cache {

namespace {

class IdentityCodec final : public Codec {
 public:
  std::string_view name() const noexcept override { return "none"; }
  std::string compress(std::string_view raw) const override { return std::string(raw); }
  std::string decompress(std::string_view packed) const override { return std::string(packed); }
};

// u64 raw length, then the zlib stream.
class ZlibCodec final : public Codec {
 public:
  std::string_view name() const noexcept override { return "zlib"; }

  std::string compress(std::string_view raw) const override {
    // Most entries are a few hundred bytes; a window and hash table sized
    // to the input keeps deflate from allocating and zeroing 256 KiB per call.
    int window = 9;
    while (window < 15 && (std::size_t{1} << window) < raw.size()) ++window;
    const int mem_level = std::clamp(window - 7, 1, 8);

    z_stream zs{};
    if (deflateInit2(&zs, Z_BEST_SPEED, Z_DEFLATED, window, mem_level, Z_DEFAULT_STRATEGY) != Z_OK)
      throw std::runtime_error("zlib init failed");
    const uLong bound = deflateBound(&zs, static_cast<uLong>(raw.size()));
    std::string out;
    encoding::put_u64(out, raw.size());
    out.resize(8 + bound);
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(raw.data()));
    zs.avail_in = static_cast<uInt>(raw.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data() + 8);
    zs.avail_out = static_cast<uInt>(bound);
    const int rc = deflate(&zs, Z_FINISH);
    const auto written = zs.total_out;
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw std::runtime_error("zlib compress failed");
    out.resize(8 + written);
    return out;
  }

  std::string decompress(std::string_view packed) const override {
    if (packed.size() < 8) throw CacheError(CacheErrorCode::malformed_value, "zlib header truncated");
    auto raw_size = encoding::read_u64(packed, 0);
    // Every id list is 8 + 8n bytes; refuse absurd sizes before allocating.
    if (raw_size > (std::uint64_t{1} << 34)) {
      throw CacheError(CacheErrorCode::malformed_value, "zlib header length out of range");
    }
    std::string out(raw_size, '\0');
    uLongf len = static_cast<uLongf>(raw_size);
    int rc = uncompress(reinterpret_cast<Bytef*>(out.data()), &len,
                        reinterpret_cast<const Bytef*>(packed.data() + 8),
                        static_cast<uLong>(packed.size() - 8));
    if (rc != Z_OK || len != raw_size) {
      throw CacheError(CacheErrorCode::malformed_value, "zlib stream corrupt");
    }
    return out;
  }
};

}  // namespace

std::shared_ptr<const Codec> make_codec(std::string_view name) {
  if (name == "none") return std::make_shared<IdentityCodec>();
  if (name == "zlib") return std::make_shared<ZlibCodec>();
  throw CacheError(CacheErrorCode::unknown_codec, "unknown codec '" + std::string(name) + "'");
}

std::string encode_ids(const std::vector<VertexId>& ids) {
  std::string out;
  out.reserve(8 + 8 * ids.size());
  encoding::put_u64(out, ids.size());
  for (auto id : ids) encoding::put_u64(out, id.value);
  return out;
}

std::vector<VertexId> decode_ids(std::string_view bytes) {
  if (bytes.size() < 8) throw CacheError(CacheErrorCode::malformed_value, "missing count header");
  auto n = encoding::read_u64(bytes, 0);
  if ((bytes.size() - 8) % 8 != 0 || (bytes.size() - 8) / 8 != n) {
    throw CacheError(CacheErrorCode::malformed_value, "length does not match count");
  }
  std::vector<VertexId> ids;
  ids.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    VertexId id{encoding::read_u64(bytes, 8 + 8 * i)};
    if (!ids.empty() && !(ids.back() < id)) {
      throw CacheError(CacheErrorCode::malformed_value, "ids not strictly ascending");
    }
    ids.push_back(id);
  }
  return ids;
}

std::size_t chunk_count(std::size_t payload_size, std::size_t limit) noexcept {
  if (payload_size == 0) return 1;
  return (payload_size + limit - 1) / limit;
}

std::vector<std::string_view> split_chunks(std::string_view payload, std::size_t limit) {
  if (limit == 0) throw std::invalid_argument("chunk limit must be positive");
  std::vector<std::string_view> out;
  out.reserve(chunk_count(payload.size(), limit));
  for (std::size_t pos = 0; pos < payload.size(); pos += limit) out.push_back(payload.substr(pos, limit));
  if (out.empty()) out.emplace_back();
  return out;
}

std::string entry_prefix(std::string_view rendered_key) {
  std::string k(kCachePrefix);
  k += rendered_key;
  k.push_back('/');
  return k;
}

std::string chunk_key(std::string_view rendered_key, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return entry_prefix(rendered_key) + buf;
}

CacheStore::CacheStore(std::shared_ptr<const Codec> codec, std::size_t chunk_limit)
    : codec_(std::move(codec)), chunk_limit_(chunk_limit) {}

std::size_t CacheStore::limit(const kv::Transaction& tx) const {
  auto store_limit = tx.store().options().max_value_size;
  return chunk_limit_ == 0 ? store_limit : std::min(chunk_limit_, store_limit);
}

void CacheStore::put_payload(kv::Transaction& tx, std::string_view rendered_key,
                             std::string_view payload) const {
  auto prefix = entry_prefix(rendered_key);
  tx.clear_range(prefix);
  auto chunks = split_chunks(payload, limit(tx));
  for (std::size_t i = 0; i < chunks.size(); ++i) tx.set(chunk_key(rendered_key, i), chunks[i]);
}

std::optional<std::string> CacheStore::get_payload(kv::Transaction& tx,
                                                   std::string_view rendered_key) const {
  auto pairs = tx.range_scan(entry_prefix(rendered_key));
  if (pairs.empty()) return std::nullopt;
  std::string out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].first != chunk_key(rendered_key, i)) {
      throw CacheError(CacheErrorCode::malformed_value,
                       "chunk sequence broken for '" + std::string(rendered_key) + "'");
    }
    out += pairs[i].second;
  }
  return out;
}

std::vector<VertexId> CacheStore::decode_value(std::string_view packed) const {
  return decode_ids(codec_->decompress(packed));
}

void CacheStore::put_entry(kv::Transaction& tx, std::string_view rendered_key,
                           const std::vector<VertexId>& leaf_ids) const {
  put_payload(tx, rendered_key, codec_->compress(encode_ids(leaf_ids)));
}

std::optional<std::vector<VertexId>> CacheStore::get_entry(kv::Transaction& tx,
                                                           std::string_view rendered_key) const {
  auto payload = get_payload(tx, rendered_key);
  if (!payload) return std::nullopt;
  return decode_value(*payload);
}

void CacheStore::delete_entry(kv::Transaction& tx, std::string_view rendered_key) const {
  tx.clear_range(entry_prefix(rendered_key));
}

void CacheStore::clear_root(kv::Transaction& tx, const templates::SubQueryTemplate& t,
                            VertexId root) const {
  tx.clear_range(std::string(kCachePrefix) + templates::root_prefix(t, root));
}

void CacheStore::clear_template(kv::Transaction& tx, std::string_view template_name) const {
  tx.clear_range(std::string(kCachePrefix) + templates::template_prefix(template_name));
}

std::vector<CacheStore::Listed> CacheStore::list(kv::Transaction& tx,
                                                 std::string_view template_name) const {
  std::string prefix(kCachePrefix);
  if (!template_name.empty()) prefix += templates::template_prefix(template_name);
  std::vector<Listed> out;
  std::string current;
  std::string payload;
  bool broken = false;
  std::size_t next_index = 0;

  auto flush = [&] {
    if (current.empty()) return;
    Listed item{current, {}, broken};
    if (!broken) {
      try {
        item.leaf_ids = decode_value(payload);
      } catch (const std::exception&) {
        item.malformed = true;
      }
    }
    out.push_back(std::move(item));
  };

  for (auto& [k, v] : tx.range_scan(prefix)) {
    auto slash = k.rfind('/');
    if (slash == std::string::npos || slash < kCachePrefix.size()) continue;
    std::string key = k.substr(kCachePrefix.size(), slash - kCachePrefix.size());
    if (key != current) {
      flush();
      current = std::move(key);
      payload.clear();
      broken = false;
      next_index = 0;
    }
    if (k != chunk_key(current, next_index)) broken = true;
    ++next_index;
    payload += v;
  }
  flush();
  return out;
}

bool PopulateQueue::push(PopulateRequest req) {
  {
    std::lock_guard lock(mu_);
    if (q_.size() >= capacity_) {
      dropped_.fetch_add(1);
      return false;
    }
    q_.push_back(std::move(req));
  }
  cv_.notify_one();
  return true;
}

std::optional<PopulateRequest> PopulateQueue::pop() {
  std::lock_guard lock(mu_);
  if (q_.empty()) return std::nullopt;
  auto req = std::move(q_.front());
  q_.pop_front();
  return req;
}

std::optional<PopulateRequest> PopulateQueue::wait_pop(const std::atomic<bool>& stop) {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return stop.load() || !q_.empty(); });
  if (q_.empty()) return std::nullopt;
  auto req = std::move(q_.front());
  q_.pop_front();
  return req;
}

std::size_t PopulateQueue::size() const {
  std::lock_guard lock(mu_);
  return q_.size();
}

PopulateStats& PopulateStats::operator+=(const PopulateStats& o) {
  committed += o.committed;
  conflicts += o.conflicts;
  discarded += o.discarded;
  skipped += o.skipped;
  errors += o.errors;
  duplicates += o.duplicates;
  return *this;
}

CachePopulator::CachePopulator(kv::Store& store, const graph::GraphStore& graph,
                               const CacheStore& cache, PopulatorOptions options)
    : store_(store), graph_(graph), cache_(cache), options_(options), queue_(options.queue_capacity) {}

CachePopulator::~CachePopulator() { stop_workers(); }

bool CachePopulator::enqueue(PopulateRequest req) {
  if (options_.synchronous) {
    run(std::move(req));
    return true;
  }
  return queue_.push(std::move(req));
}

PopulateStats CachePopulator::run(PopulateRequest req) {
  PopulateStats s;
  const auto& t = *req.tmpl;
  if (req.attempts_remaining <= 0 || req.attempts_remaining > options_.attempts) {
    req.attempts_remaining = options_.attempts;
  }
  for (int attempt = 0; req.attempts_remaining > 0; ++attempt) {
    --req.attempts_remaining;
    try {
      auto tx = store_.begin(kv::TxMode::read_write);
      if (gate_ && !gate_(tx, t)) {
        ++s.skipped;
        break;
      }
      auto root = graph_.get_vertex(tx, req.root);
      if (!root || !templates::qualifies(t.root, *root)) {
        ++s.skipped;
        break;
      }
      auto ids = templates::execute_instance(graph_, tx, t, *root, req.edge_values, req.leaf_values);
      auto key = templates::build_key(t, req.root, req.edge_values, req.leaf_values);
      cache_.put_entry(tx, key.render(), ids);
      if (before_commit_) before_commit_(req, attempt);
      tx.commit();
      ++s.committed;
      break;
    } catch (const kv::ConflictError&) {
      ++s.conflicts;
      if (req.attempts_remaining == 0) ++s.discarded;
    } catch (const kv::KvError&) {
      ++s.errors;
      break;
    }
  }
  record(s);
  return s;
}

PopulateStats CachePopulator::drain() {
  PopulateStats s;
  std::unordered_set<std::string> done;
  while (auto req = queue_.pop()) {
    auto key = templates::build_key(*req->tmpl, req->root, req->edge_values, req->leaf_values).render();
    if (!done.insert(std::move(key)).second) {
      ++s.duplicates;
      continue;
    }
    s += run(std::move(*req));
  }
  record(PopulateStats{0, 0, 0, 0, 0, s.duplicates});
  return s;
}

void CachePopulator::start_workers(std::size_t n) {
  stop_ = false;
  for (std::size_t i = 0; i < n; ++i) {
    workers_.emplace_back([this] {
      while (auto req = queue_.wait_pop(stop_)) run(std::move(*req));
    });
  }
}

void CachePopulator::stop_workers() {
  stop_ = true;
  queue_.notify_all();
  for (auto& w : workers_) w.join();
  workers_.clear();
}

void CachePopulator::record(const PopulateStats& s) {
  std::lock_guard lock(stats_mu_);
  totals_ += s;
}

PopulateStats CachePopulator::totals() const {
  std::lock_guard lock(stats_mu_);
  return totals_;
}

}  // namespace hopcache::cache
