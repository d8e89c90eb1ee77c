// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include <doctest.h>

#include <map>
#include <random>
#include <thread>

#include "hopcache/kv_store.hpp"

using namespace hopcache::kv;

namespace {

void put(Store& s, const std::string& k, const std::string& v) {
  auto tx = s.begin(TxMode::read_write);
  tx.set(k, v);
  tx.commit();
}

std::map<std::string, std::string> dump(Store& s) {
  auto tx = s.begin(TxMode::read_only);
  std::map<std::string, std::string> out;
  for (auto& [k, v] : tx.range_scan("")) out[k] = v;
  return out;
}

}  // namespace

TEST_CASE("begin sees an empty store and counts versions") {
  Store s;
  {
    auto tx = s.begin(TxMode::read_only);
    CHECK(tx.range_scan("").empty());
    CHECK(tx.read_version() == 0);
  }
  put(s, "a", "1");
  put(s, "b", "2");
  put(s, "c", "3");
  auto t1 = s.begin(TxMode::read_only);
  auto t2 = s.begin(TxMode::read_write);
  CHECK(t1.read_version() == 3);
  CHECK(t2.read_version() == t1.read_version());
}

TEST_CASE("reads see own writes and the snapshot") {
  Store s;
  put(s, "k", "old");
  auto reader = s.begin(TxMode::read_only);
  put(s, "k", "new");
  CHECK(reader.get("k") == "old");

  auto tx = s.begin(TxMode::read_write);
  CHECK(tx.get("k") == "new");
  tx.set("k", "mine");
  CHECK(tx.get("k") == "mine");
  CHECK_FALSE(tx.get("absent").has_value());
}

TEST_CASE("range_scan filters by prefix and merges the buffer") {
  Store s;
  put(s, "a1", "x");
  put(s, "a2", "y");
  put(s, "b1", "z");
  auto tx = s.begin(TxMode::read_write);
  auto r = tx.range_scan("a");
  REQUIRE(r.size() == 2);
  CHECK(r[0].first == "a1");
  CHECK(r[1].first == "a2");
  CHECK(tx.range_scan("q").empty());

  tx.set("a0", "w");
  tx.erase("a2");
  r = tx.range_scan("a");
  REQUIRE(r.size() == 2);
  CHECK(r[0].first == "a0");
  CHECK(r[1].first == "a1");

  tx.set("SQ1:10:x", "1");
  tx.clear_range("SQ1:10:");
  CHECK(tx.range_scan("SQ1:10:").empty());
  tx.set("SQ1:10:y", "2");
  CHECK(tx.range_scan("SQ1:10:").size() == 1);
}

TEST_CASE("write errors") {
  Store s;
  auto tx = s.begin(TxMode::read_write);
  CHECK_THROWS_AS(tx.set("big", std::string(100'001, 'x')), KvError);
  tx.set("fits", std::string(100'000, 'x'));
  tx.erase("absent");
  CHECK_NOTHROW(tx.commit());
  CHECK_THROWS_AS(tx.get("fits"), KvError);

  auto ro = s.begin(TxMode::read_only);
  try {
    ro.set("a", "b");
    FAIL("expected an error");
  } catch (const KvError& e) {
    CHECK(e.code() == ErrorCode::read_only_transaction);
  }
}

TEST_CASE("read-only commit keeps the version") {
  Store s;
  put(s, "a", "1");
  auto tx = s.begin(TxMode::read_only);
  tx.get("a");
  CHECK(tx.commit() == 1);
  CHECK(s.version() == 1);
}

TEST_CASE("optimistic conflicts") {
  Store s;
  put(s, "k", "0");

  SUBCASE("read key overwritten") {
    auto a = s.begin(TxMode::read_write);
    a.get("k");
    put(s, "k", "1");
    a.set("other", "x");
    CHECK_THROWS_AS(a.commit(), ConflictError);
    CHECK(s.conflicts() == 1);
  }
  SUBCASE("scanned prefix written") {
    auto a = s.begin(TxMode::read_write);
    a.range_scan("p/");
    put(s, "p/new", "1");
    a.set("q", "x");
    CHECK_THROWS_AS(a.commit(), ConflictError);
  }
  SUBCASE("cleared range covers a read key") {
    auto a = s.begin(TxMode::read_write);
    a.get("k");
    {
      auto b = s.begin(TxMode::read_write);
      b.clear_range("k");
      b.commit();
    }
    a.set("z", "1");
    CHECK_THROWS_AS(a.commit(), ConflictError);
  }
  SUBCASE("blind writers to disjoint keys") {
    auto a = s.begin(TxMode::read_write);
    auto b = s.begin(TxMode::read_write);
    a.set("x", "1");
    b.set("y", "2");
    auto va = a.commit();
    auto vb = b.commit();
    CHECK(vb > va);
  }
}

TEST_CASE("clear_range hides keys from later snapshots") {
  Store s;
  put(s, "C/a/1", "1");
  put(s, "C/a/2", "2");
  put(s, "C/b", "3");
  auto tx = s.begin(TxMode::read_write);
  tx.clear_range("C/a/");
  tx.commit();
  auto r = s.begin(TxMode::read_only);
  CHECK(r.range_scan("C/a/").empty());
  CHECK(r.get("C/b") == "3");
  put(s, "C/a/1", "again");
  CHECK(s.begin(TxMode::read_only).get("C/a/1") == "again");
}

TEST_CASE("range_scan agrees with a filtered dump") {
  std::mt19937_64 rng(7);
  for (int round = 0; round < 20; ++round) {
    Store s;
    std::map<std::string, std::string> model;
    for (int i = 0; i < 60; ++i) {
      std::string k;
      for (int j = 0, n = 1 + static_cast<int>(rng() % 4); j < n; ++j) k.push_back("abc"[rng() % 3]);
      put(s, k, std::to_string(i));
      model[k] = std::to_string(i);
    }
    for (const std::string prefix : {"", "a", "ab", "ca", "bbb", "x"}) {
      auto tx = s.begin(TxMode::read_only);
      std::vector<std::pair<std::string, std::string>> want;
      for (auto& [k, v] : model)
        if (starts_with(k, prefix)) want.emplace_back(k, v);
      CHECK(tx.range_scan(prefix) == want);
    }
  }
}

TEST_CASE("accepted interleavings are serializable in commit order") {
  // Random transactions over a small key space, stepped in a random
  // interleaving. Replaying the committed ones serially in commit order
  // must reproduce every value they read and the final state.
  struct Op {
    enum { get, set, erase, clear } kind;
    std::string key;
    std::string value;
    std::optional<std::string> seen;
  };
  const std::vector<std::string> keys{"a", "ab", "b", "ba", "c"};
  std::mt19937_64 rng(11);
  for (int round = 0; round < 200; ++round) {
    Store s;
    const int ntx = 2 + static_cast<int>(rng() % 3);
    std::vector<std::vector<Op>> programs(ntx);
    for (int t = 0; t < ntx; ++t) {
      for (int i = 0, n = 1 + static_cast<int>(rng() % 5); i < n; ++i) {
        Op op;
        op.kind = static_cast<decltype(op.kind)>(rng() % 4);
        op.key = keys[rng() % keys.size()];
        if (op.kind == Op::clear) op.key = op.key.substr(0, 1);
        op.value = std::to_string(round) + "." + std::to_string(t) + "." + std::to_string(i);
        programs[t].push_back(op);
      }
    }
    std::vector<Transaction> txs;
    for (int t = 0; t < ntx; ++t) txs.push_back(s.begin(TxMode::read_write));
    std::vector<std::size_t> pc(ntx, 0);
    std::vector<std::pair<StoreVersion, int>> committed;
    std::vector<bool> done(ntx, false);
    for (int remaining = ntx; remaining > 0;) {
      int t = static_cast<int>(rng() % ntx);
      if (done[t]) continue;
      if (pc[t] < programs[t].size()) {
        auto& op = programs[t][pc[t]++];
        switch (op.kind) {
          case Op::get: op.seen = txs[t].get(op.key); break;
          case Op::set: txs[t].set(op.key, op.value); break;
          case Op::erase: txs[t].erase(op.key); break;
          case Op::clear: txs[t].clear_range(op.key); break;
        }
      } else {
        try {
          committed.emplace_back(txs[t].commit(), t);
        } catch (const ConflictError&) {
        }
        done[t] = true;
        --remaining;
      }
    }
    std::sort(committed.begin(), committed.end());
    std::map<std::string, std::string> model;
    for (auto [v, t] : committed) {
      for (const auto& op : programs[t]) {
        switch (op.kind) {
          case Op::get: {
            auto it = model.find(op.key);
            std::optional<std::string> want;
            if (it != model.end()) want = it->second;
            CHECK(op.seen == want);
            break;
          }
          case Op::set: model[op.key] = op.value; break;
          case Op::erase: model.erase(op.key); break;
          case Op::clear: std::erase_if(model, [&](const auto& kv) { return starts_with(kv.first, op.key); }); break;
        }
      }
    }
    CHECK(dump(s) == model);
  }
}

TEST_CASE("concurrent increments never lose an update") {
  Store s;
  put(s, "n", "0");
  constexpr int kThreads = 4, kEach = 200;
  std::vector<std::thread> workers;
  for (int i = 0; i < kThreads; ++i) {
    workers.emplace_back([&] {
      for (int j = 0; j < kEach; ++j) {
        for (;;) {
          auto tx = s.begin(TxMode::read_write);
          auto n = std::stoi(*tx.get("n"));
          tx.set("n", std::to_string(n + 1));
          try {
            tx.commit();
            break;
          } catch (const ConflictError&) {
          }
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  CHECK(s.begin(TxMode::read_only).get("n") == std::to_string(kThreads * kEach));
}

TEST_CASE("tracked prefixes count reads") {
  Store s;
  auto h = s.track_prefix("C/");
  put(s, "C/x", "1");
  auto tx = s.begin(TxMode::read_only);
  tx.get("C/x");
  tx.get("G/x");
  tx.range_scan("C/");
  tx.range_scan("G/");
  CHECK(s.counts(h).gets == 1);
  CHECK(s.counts(h).scans == 1);
  s.reset_counts();
  CHECK(s.counts(h).gets == 0);
}

TEST_CASE("op budget raises timeout") {
  Store s(StoreOptions{kDefaultMaxValueSize, std::chrono::nanoseconds{0}, 3});
  auto tx = s.begin(TxMode::read_only);
  tx.get("a");
  tx.get("b");
  tx.get("c");
  try {
    tx.get("d");
    FAIL("expected timeout");
  } catch (const KvError& e) {
    CHECK(e.code() == ErrorCode::timeout);
  }
}
