// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include <doctest.h>

#include <random>
#include <set>

#include "watchlist_fixture.hpp"
#include "hopcache/maintenance.hpp"

using namespace hopcache;
using maintenance::MaintenancePolicy;
using fixtures::WatchList;
using fixtures::sq1_key;

namespace {

const std::vector<std::string> kPolicies{"write-around", "write-through:lazy", "write-through:proactive"};

NodeOptions with_policy(const std::string& p) {
  NodeOptions o;
  o.policy = MaintenancePolicy::parse(p);
  return o;
}

std::set<std::string> all_keys(const WriteOutcome& w) {
  std::set<std::string> out;
  for (const auto& i : w.impacts)
    for (const auto& k : i.report.rendered_keys()) out.insert(k);
  return out;
}

std::vector<maintenance::KeyEdit> all_edits(const WriteOutcome& w) {
  std::vector<maintenance::KeyEdit> out;
  for (const auto& i : w.impacts)
    for (const auto& e : i.report.values_edited) out.push_back(e);
  return out;
}

bool bounds_hold(const WriteOutcome& w) {
  for (const auto& i : w.impacts)
    if (!maintenance::impact_bound_check(i.change, i.report)) return false;
  return true;
}

std::vector<VertexId> without(std::vector<VertexId> v, VertexId x) {
  std::erase(v, x);
  return v;
}

}  // namespace

TEST_CASE("policy parsing") {
  for (const auto& p : kPolicies) CHECK(MaintenancePolicy::parse(p).to_string() == p);
  CHECK(MaintenancePolicy::parse("write-through") == MaintenancePolicy::parse("write-through:lazy"));
  CHECK_THROWS_AS(MaintenancePolicy::parse("write-back"), std::invalid_argument);
}

TEST_CASE("fixture shape") {
  WatchList f;
  CHECK(f.watch_list == VertexId{10});
  CHECK(f.qualified.size() == 25);
  auto r = f.node->read(fixtures::kWatchListQuery);
  CHECK(r.ids == f.qualified);
}

TEST_CASE("deleting the watch-list") {
  for (const auto& p : kPolicies) {
    CAPTURE(p);
    WatchList f(with_policy(p));
    f.fill_all();
    auto w = f.node->write([&](WriteContext& c) { c.graph().delete_vertex(c.tx(), f.watch_list); });
    CHECK(all_keys(w) == std::set<std::string>{sq1_key(true, 0), sq1_key(true, 1), sq1_key(false, 0),
                                               sq1_key(false, 1)});
    const auto& last = w.impacts.back().report;
    CHECK(last.kind == ChangeKind::delete_vertex);
    REQUIRE(last.ranges_cleared.size() == 1);
    CHECK(last.ranges_cleared[0] == maintenance::RangeClear{"SQ1", f.watch_list});
    CHECK(bounds_hold(w));
    auto tx = f.store.begin(kv::TxMode::read_only);
    CHECK(tx.range_scan("C/SQ1:10:").empty());
  }
}

TEST_CASE("deleting listing 15") {
  for (const auto& p : kPolicies) {
    CAPTURE(p);
    WatchList f(with_policy(p));
    f.fill_all();
    REQUIRE(f.entry(sq1_key(true, 0))->size() == 25);
    auto w = f.node->write([&](WriteContext& c) { c.graph().delete_vertex(c.tx(), VertexId{15}); });
    CHECK(all_keys(w) == std::set<std::string>{sq1_key(true, 0)});
    CHECK(bounds_hold(w));
    if (p == "write-around") {
      CHECK_FALSE(f.entry(sq1_key(true, 0)).has_value());
      CHECK(all_edits(w).empty());
    } else {
      auto e = f.entry(sq1_key(true, 0));
      REQUIRE(e.has_value());
      CHECK(e->size() == 24);
      CHECK(*e == without(f.qualified, VertexId{15}));
      auto edits = all_edits(w);
      REQUIRE(edits.size() == 1);
      CHECK(edits[0].removed == std::vector<VertexId>{VertexId{15}});
    }
  }
}

TEST_CASE("Status of listing 15 from 0 to 1") {
  for (const auto& p : kPolicies) {
    CAPTURE(p);
    WatchList f(with_policy(p));
    f.fill_all();
    auto w = f.node->write(
        [&](WriteContext& c) { c.graph().set_vertex_property(c.tx(), VertexId{15}, "Status", Scalar{std::int64_t{1}}); });
    REQUIRE(w.impacts.size() == 1);
    CHECK(w.impacts[0].report.rendered_keys() == std::vector<std::string>{sq1_key(true, 0), sq1_key(true, 1)});
    CHECK(w.impacts[0].report.ranges_cleared.empty());
    CHECK(bounds_hold(w));
    if (p == "write-around") {
      CHECK_FALSE(f.entry(sq1_key(true, 0)).has_value());
      CHECK_FALSE(f.entry(sq1_key(true, 1)).has_value());
    } else {
      CHECK(*f.entry(sq1_key(true, 0)) == without(f.qualified, VertexId{15}));
      auto now = *f.entry(sq1_key(true, 1));
      CHECK(std::binary_search(now.begin(), now.end(), VertexId{15}));
      CHECK(now.size() == 6);
    }
  }
}

TEST_CASE("adding an edge to listing 105") {
  for (const auto& p : kPolicies) {
    CAPTURE(p);
    WatchList f(with_policy(p));
    f.fill_all();
    f.ids->advance_vertex_to(105);
    auto w = f.node->write([&](WriteContext& c) {
      auto l = c.graph().add_vertex(c.tx(), "listing", {{"Status", std::int64_t{0}}});
      REQUIRE(l == VertexId{105});
      c.graph().add_edge(c.tx(), f.watch_list, l, "includes", {{"IsActive", true}});
    });
    CHECK(all_keys(w) == std::set<std::string>{sq1_key(true, 0)});
    CHECK(bounds_hold(w));
    if (p == "write-around") {
      CHECK_FALSE(f.entry(sq1_key(true, 0)).has_value());
    } else {
      auto want = f.qualified;
      want.push_back(VertexId{105});
      CHECK(*f.entry(sq1_key(true, 0)) == want);
    }
  }
}

TEST_CASE("IsActive of edge 10->15 from true to false") {
  for (const auto& p : kPolicies) {
    CAPTURE(p);
    WatchList f(with_policy(p));
    f.fill_all();
    auto w = f.node->write(
        [&](WriteContext& c) { c.graph().set_edge_property(c.tx(), f.edge_to[4], "IsActive", Scalar{false}); });
    REQUIRE(w.impacts.size() == 1);
    CHECK(w.impacts[0].report.rendered_keys() == std::vector<std::string>{sq1_key(true, 0), sq1_key(false, 0)});
    CHECK(bounds_hold(w));
    if (p == "write-around") {
      CHECK_FALSE(f.entry(sq1_key(true, 0)).has_value());
      CHECK_FALSE(f.entry(sq1_key(false, 0)).has_value());
    } else {
      CHECK(*f.entry(sq1_key(true, 0)) == without(f.qualified, VertexId{15}));
      auto inactive0 = *f.entry(sq1_key(false, 0));
      CHECK(inactive0.size() == 11);
      CHECK(inactive0.front() == VertexId{15});
    }
  }
}

TEST_CASE("write-through on absent entries: lazy skips, proactive creates") {
  for (const auto& p : {std::string("write-through:lazy"), std::string("write-through:proactive")}) {
    CAPTURE(p);
    WatchList f(with_policy(p));
    auto w = f.node->write(
        [&](WriteContext& c) { c.graph().set_edge_property(c.tx(), f.edge_to[4], "IsActive", Scalar{false}); });
    if (p == "write-through:lazy") {
      CHECK_FALSE(f.entry(sq1_key(false, 0)).has_value());
      CHECK(w.impacts[0].report.entries_created.empty());
    } else {
      CHECK(f.entry(sq1_key(false, 0))->size() == 11);
      // The true/0 instance only lost a member; it is not a new entry.
      CHECK_FALSE(f.entry(sq1_key(true, 0)).has_value());
    }
  }
}

TEST_CASE("a new qualifying root: lazy vs proactive") {
  for (const auto& p : {std::string("write-through:lazy"), std::string("write-through:proactive")}) {
    CAPTURE(p);
    NodeOptions o = with_policy(p);
    WatchList f(o);
    auto gated = std::make_shared<templates::SubQueryTemplate>(*f.tmpl);
    gated->name = "SQP";
    gated->root.terms.push_back({"Public", Scalar{true}});
    f.node->enable_local(gated);
    auto w = f.node->write(
        [&](WriteContext& c) { c.graph().set_vertex_property(c.tx(), f.watch_list, "Public", Scalar{true}); });
    REQUIRE(w.impacts.size() == 1);
    CHECK(w.impacts[0].report.ranges_cleared.size() == 1);
    auto tx = f.store.begin(kv::TxMode::read_only);
    auto entries = f.node->cache().list(tx, "SQP");
    if (p == "write-through:lazy") {
      CHECK(entries.empty());
    } else {
      CHECK(entries.size() == 4);
      for (const auto& e : entries) {
        auto key = *templates::parse_key(e.key, *gated);
        CHECK(e.leaf_ids ==
              templates::execute_instance(f.node->graph(), tx, *gated, key.root, key.edge_values, key.leaf_values));
      }
    }
  }
}

TEST_CASE("unreferenced properties impact nothing") {
  WatchList f;
  f.fill_all();
  auto w = f.node->write([&](WriteContext& c) {
    c.graph().set_vertex_property(c.tx(), VertexId{15}, "Price", Scalar{std::int64_t{99}});
    c.graph().set_edge_property(c.tx(), f.edge_to[0], "Note", Scalar{std::string("x")});
  });
  for (const auto& i : w.impacts) CHECK(i.report.empty());
  CHECK(f.entry(sq1_key(true, 0))->size() == 25);
}

TEST_CASE("edges missing a wildcard property impact nothing") {
  WatchList f;
  auto w = f.node->write([&](WriteContext& c) {
    c.graph().add_edge(c.tx(), f.watch_list, VertexId{15}, "includes", {});
  });
  REQUIRE(w.impacts.size() == 1);
  CHECK(w.impacts[0].report.empty());
}

TEST_CASE("impact_bound_check") {
  GraphChange upd(ChangeKind::edge_prop_change);
  upd.old_value = Scalar{true};
  upd.new_value = Scalar{false};
  maintenance::ImpactReport r;
  auto key = [](std::string t, std::uint64_t root) {
    return templates::CacheKey{std::move(t), VertexId{root}, {}, {}};
  };
  for (std::uint64_t i = 0; i < 4; ++i) r.keys.push_back(key("A", i));
  CHECK(maintenance::impact_bound_check(upd, r));
  r.keys.push_back(key("A", 9));
  CHECK_FALSE(maintenance::impact_bound_check(upd, r));
  r.keys.pop_back();
  r.keys.push_back(key("B", 9));
  CHECK(maintenance::impact_bound_check(upd, r));

  GraphChange add(ChangeKind::edge_prop_change);
  add.new_value = Scalar{true};
  CHECK_FALSE(maintenance::impact_bound_check(add, r));

  GraphChange del(ChangeKind::delete_vertex);
  maintenance::ImpactReport leaf;
  leaf.incident_edges = 5;
  for (std::uint64_t i = 0; i < 5; ++i) leaf.keys.push_back(key("A", i));
  leaf.ranges_cleared.push_back({"A", VertexId{1}});
  CHECK(maintenance::impact_bound_check(del, leaf));
  leaf.ranges_cleared.push_back({"A", VertexId{2}});
  CHECK_FALSE(maintenance::impact_bound_check(del, leaf));
}

TEST_CASE("report json") {
  WatchList f;
  auto w = f.node->write(
      [&](WriteContext& c) { c.graph().set_edge_property(c.tx(), f.edge_to[4], "IsActive", Scalar{false}); });
  auto j = w.impacts[0].report.to_json();
  CHECK(j["kind"] == "edge-prop-change");
  CHECK(j["keys"].size() == 2);
}

// Random graph with self-loops, parallel edges and a both-direction
// template. After every write, each cache entry must equal the instance
// recomputed from the graph, and the three policies must derive the same
// keys for the same change.
namespace {

std::vector<templates::TemplatePtr> random_templates() {
  auto make = [](std::string name, Direction d, std::optional<std::string> root_label, std::string edge_label,
                 std::vector<templates::PropertyTerm> edge_terms, std::vector<templates::PropertyTerm> leaf_terms,
                 std::vector<templates::PropertyTerm> root_terms = {}) {
    auto t = std::make_shared<templates::SubQueryTemplate>();
    t->name = std::move(name);
    t->direction = d;
    t->root = templates::Predicate{std::move(root_label), std::move(root_terms)};
    t->edge = templates::Predicate{std::move(edge_label), std::move(edge_terms)};
    t->leaf = templates::Predicate{std::nullopt, std::move(leaf_terms)};
    return templates::TemplatePtr(t);
  };
  return {
      make("TO", Direction::out, "a", "x", {{"w", std::nullopt}}, {{"k", std::nullopt}}),
      make("TI", Direction::in, std::nullopt, "x", {{"w", Scalar{std::int64_t{1}}}}, {{"k", std::nullopt}}),
      make("TB", Direction::both, std::nullopt, "y", {{"w", std::nullopt}}, {{"k", Scalar{std::int64_t{0}}}},
           {{"k", std::nullopt}}),
  };
}

void fill_everything(QueryNode& node, const std::vector<templates::TemplatePtr>& ts) {
  auto tx = node.store().begin(kv::TxMode::read_write);
  for (const auto& t : ts) {
    for (const auto& e : node.graph().all_edges(tx)) {
      for (int side = 0; side < 2; ++side) {
        if (side == 0 && t->direction == Direction::in) continue;
        if (side == 1 && t->direction == Direction::out) continue;
        VertexId root = side == 0 ? e.out : e.in;
        VertexId leaf = side == 0 ? e.in : e.out;
        auto rv = node.graph().get_vertex(tx, root);
        auto lv = node.graph().get_vertex(tx, leaf);
        if (!templates::qualifies(t->root, *rv) || !templates::qualifies(t->edge, e) ||
            !templates::qualifies(t->leaf, *lv))
          continue;
        auto we = templates::extract_wildcard_values(t->edge, e);
        auto wl = templates::extract_wildcard_values(t->leaf, *lv);
        auto key = templates::build_key(*t, root, we, wl).render();
        node.cache().put_entry(tx, key, templates::execute_instance(node.graph(), tx, *t, root, we, wl));
      }
    }
  }
  tx.commit();
}

int count_violations(QueryNode& node, const std::vector<templates::TemplatePtr>& ts) {
  int bad = 0;
  auto tx = node.store().begin(kv::TxMode::read_only);
  for (const auto& t : ts) {
    for (const auto& e : node.cache().list(tx, t->name)) {
      auto key = templates::parse_key(e.key, *t);
      if (!key || e.malformed) {
        ++bad;
        continue;
      }
      auto want = templates::execute_instance(node.graph(), tx, *t, key->root, key->edge_values, key->leaf_values);
      if (want != e.leaf_ids) ++bad;
    }
  }
  return bad;
}

}  // namespace

TEST_CASE("random writes keep every entry exact under all policies") {
  const auto ts = random_templates();
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    std::vector<std::unique_ptr<kv::Store>> stores;
    std::vector<std::unique_ptr<QueryNode>> nodes;
    for (const auto& p : kPolicies) {
      stores.push_back(std::make_unique<kv::Store>());
      auto o = with_policy(p);
      o.populate.synchronous = true;
      nodes.push_back(std::make_unique<QueryNode>(*stores.back(), std::make_shared<graph::IdAllocator>(), o));
      for (const auto& t : ts) nodes.back()->enable_local(t);
    }
    std::mt19937_64 rng(seed);
    // Build the same initial graph on each node.
    const int nv = 14;
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < 40; ++i) edges.emplace_back(rng() % nv, rng() % nv);
    edges.emplace_back(3, 3);
    edges.emplace_back(4, 5);
    edges.emplace_back(4, 5);
    std::vector<std::int64_t> ks(nv), ws(edges.size());
    for (auto& k : ks) k = rng() % 3;
    for (auto& w : ws) w = rng() % 2;
    for (auto& n : nodes) {
      n->write([&](WriteContext& c) {
        std::vector<VertexId> vs;
        for (int i = 0; i < nv; ++i) {
          PropertyMap props;
          if (ks[i] < 2) props["k"] = ks[i];
          vs.push_back(c.graph().add_vertex(c.tx(), i % 2 ? "a" : "b", props));
        }
        for (std::size_t i = 0; i < edges.size(); ++i)
          c.graph().add_edge(c.tx(), vs[edges[i].first], vs[edges[i].second], i % 3 ? "x" : "y", {{"w", ws[i]}});
      });
      fill_everything(*n, ts);
    }

    for (int step = 0; step < 150; ++step) {
      const auto op = rng() % 7;
      const auto a = rng(), b = rng(), c2 = rng();
      std::vector<std::set<std::string>> keysets;
      for (auto& n : nodes) {
        auto w = n->write([&](WriteContext& c) {
          auto& g = c.graph();
          auto verts = g.all_vertices(c.tx());
          auto es = g.all_edges(c.tx());
          switch (op) {
            case 0:
              if (!verts.empty()) g.delete_vertex(c.tx(), verts[a % verts.size()].id);
              break;
            case 1:
              if (!verts.empty())
                g.set_vertex_property(c.tx(), verts[a % verts.size()].id, "k",
                                      b % 4 ? std::optional<Scalar>(std::int64_t(b % 3)) : std::nullopt);
              break;
            case 2:
            case 3:
              if (!verts.empty())
                g.add_edge(c.tx(), verts[a % verts.size()].id, verts[b % verts.size()].id, c2 % 2 ? "x" : "y",
                           {{"w", std::int64_t(c2 % 3 == 0)}});
              break;
            case 4:
              if (!es.empty()) g.delete_edge(c.tx(), es[a % es.size()].id);
              break;
            case 5:
              if (!es.empty())
                g.set_edge_property(c.tx(), es[a % es.size()].id, "w",
                                    b % 4 ? std::optional<Scalar>(std::int64_t(b % 2)) : std::nullopt);
              break;
            case 6:
              if (!verts.empty()) g.add_vertex(c.tx(), b % 2 ? "a" : "b", {{"k", std::int64_t(b % 2)}});
              break;
          }
        });
        CHECK(bounds_hold(w));
        keysets.push_back(all_keys(w));
      }
      CHECK(keysets[0] == keysets[1]);
      CHECK(keysets[0] == keysets[2]);
      for (auto& n : nodes) CHECK(count_violations(*n, ts) == 0);
      if (step % 25 == 0)
        for (auto& n : nodes) fill_everything(*n, ts);
    }
  }
}

TEST_CASE("write-around only touches derived keys") {
  WatchList f;
  f.fill_all();
  auto tx0 = f.store.begin(kv::TxMode::read_only);
  auto before = f.node->cache().list(tx0, "SQ1");
  auto w = f.node->write(
      [&](WriteContext& c) { c.graph().set_vertex_property(c.tx(), VertexId{15}, "Status", Scalar{std::int64_t{1}}); });
  auto keys = all_keys(w);
  auto tx1 = f.store.begin(kv::TxMode::read_only);
  auto after = f.node->cache().list(tx1, "SQ1");
  std::set<std::string> gone;
  for (const auto& e : before) gone.insert(e.key);
  for (const auto& e : after) gone.erase(e.key);
  CHECK(gone == keys);
}

TEST_CASE("aborted writes leave graph and cache untouched") {
  WatchList f;
  f.fill_all();
  const auto version = f.store.version();
  CHECK_THROWS_AS(f.node->write([&](WriteContext& c) {
    c.graph().delete_vertex(c.tx(), VertexId{15});
    throw std::runtime_error("boom");
  }),
                  std::runtime_error);
  CHECK(f.store.version() == version);
  CHECK(f.entry(sq1_key(true, 0))->size() == 25);
}

TEST_CASE("supernode deletes in batches match a single-transaction delete") {
  for (const auto& p : kPolicies) {
    CAPTURE(p);
    auto batched_opts = with_policy(p);
    batched_opts.supernode_threshold = 7;
    WatchList batched(batched_opts);
    WatchList single(with_policy(p));
    batched.fill_all();
    single.fill_all();
    // Listing 15 gets extra in-edges from new watch-lists.
    for (auto* f : {&batched, &single}) {
      f->node->write([&](WriteContext& c) {
        for (int i = 0; i < 20; ++i) {
          auto wl = c.graph().add_vertex(c.tx(), "watch-list");
          c.graph().add_edge(c.tx(), wl, VertexId{15}, "includes", {{"IsActive", i % 2 == 0}});
        }
      });
    }
    auto wb = batched.node->delete_vertex(VertexId{15});
    CHECK(wb.attempts == 3);  // 21 edges, batches of 7: two edge batches, then the vertex
    single.node->write([&](WriteContext& c) { c.graph().delete_vertex(c.tx(), VertexId{15}); });
    auto tb = batched.store.begin(kv::TxMode::read_only);
    auto ts = single.store.begin(kv::TxMode::read_only);
    auto lb = batched.node->cache().list(tb, "SQ1");
    auto ls = single.node->cache().list(ts, "SQ1");
    REQUIRE(lb.size() == ls.size());
    for (std::size_t i = 0; i < lb.size(); ++i) {
      CHECK(lb[i].key == ls[i].key);
      CHECK(lb[i].leaf_ids == ls[i].leaf_ids);
    }
    CHECK(batched.node->graph().all_edges(tb).size() == single.node->graph().all_edges(ts).size());
    CHECK(count_violations(*batched.node, {batched.tmpl}) == 0);
  }
}
