// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "hopcache/harness.hpp"

using namespace hopcache;
using namespace hopcache::harness;

namespace {

const std::vector<std::string> kPolicies{"write-around", "write-through:lazy", "write-through:proactive"};

GraphData small_graph(std::uint64_t seed = 7) { return generate_desk_graph({300, 1500, seed}); }

RunConfig config_for(const std::string& policy, bool cache = true) {
  RunConfig c;
  c.cache = cache;
  c.policy = maintenance::MaintenancePolicy::parse(policy);
  c.shadow_check = cache;
  return c;
}

std::vector<templates::TemplatePtr> enabled_of(Deployment& d) { return d.enabled(); }

}  // namespace

TEST_CASE("desk graph shape") {
  const auto g = generate_desk_graph({2000, 10'000, 3});
  CHECK(g.vertices.size() == 2000);
  CHECK(g.edges.size() == 10'000);
  std::map<std::string, std::size_t> labels, edge_labels;
  for (const auto& v : g.vertices) ++labels[v.label];
  for (const auto& e : g.edges) ++edge_labels[e.label];
  CHECK(labels["user"] == 200);
  CHECK(labels["watch-list"] == 300);
  CHECK(labels["listing"] == 1300);
  CHECK(labels["seller"] == 200);
  CHECK(edge_labels["owns"] == 300);
  CHECK(edge_labels["sells"] == 1300);
  const auto rest = 10'000 - 300 - 1300;
  CHECK(edge_labels["includes"] + edge_labels["views"] == rest);
  CHECK(edge_labels["includes"] == doctest::Approx(0.6 * rest).epsilon(0.01));

  std::set<std::string> aliases;
  for (const auto& v : g.vertices) aliases.insert(v.alias);
  CHECK(aliases.size() == g.vertices.size());
  for (const auto& e : g.edges) {
    CHECK(aliases.count(e.out) == 1);
    CHECK(aliases.count(e.in) == 1);
  }
  CHECK(generate_desk_graph({2000, 10'000, 3}) == g);
  CHECK_FALSE(generate_desk_graph({2000, 10'000, 4}) == g);
}

TEST_CASE("graph jsonl round trip and errors") {
  const auto g = small_graph();
  std::stringstream s;
  write_graph_jsonl(s, g);
  CHECK(read_graph_jsonl(s) == g);

  std::stringstream bad(R"({"type":"vertex","alias":"A","label":"x","props":{"p":1.5}})");
  CHECK_THROWS_AS(read_graph_jsonl(bad), HarnessError);
  std::stringstream unknown(R"({"type":"hyperedge"})");
  CHECK_THROWS_AS(read_graph_jsonl(unknown), HarnessError);

  Deployment d;
  GraphData dangling;
  dangling.vertices.push_back({"A", "user", {}});
  dangling.edges.push_back({"A", "B", "owns", {}});
  CHECK_THROWS_AS(d.load(dangling), HarnessError);
}

TEST_CASE("zipf sampler follows its weights") {
  const Zipf z(5, 1.0);
  std::mt19937_64 rng(5);
  std::vector<double> seen(5, 0);
  const int n = 200'000;
  for (int i = 0; i < n; ++i) ++seen[z(rng)];
  double norm = 0;
  for (int r = 0; r < 5; ++r) norm += 1.0 / (r + 1);
  for (int r = 0; r < 5; ++r) CHECK(seen[r] / n == doctest::Approx((1.0 / (r + 1)) / norm).epsilon(0.02));
  const Zipf flat(4, 0.0);
  std::vector<double> f(4, 0);
  for (int i = 0; i < n; ++i) ++f[flat(rng)];
  for (double x : f) CHECK(x / n == doctest::Approx(0.25).epsilon(0.02));
}

TEST_CASE("workload specs validate and round trip") {
  for (const auto* name : {"r-hat", "w-hat", "r-check", "oracle"}) {
    auto s = WorkloadSpec::preset(name, 100, 3);
    CHECK_NOTHROW(s.validate());
    auto back = WorkloadSpec::from_json(s.to_json());
    CHECK(back.to_json() == s.to_json());
  }
  CHECK_THROWS_AS(WorkloadSpec::preset("nope", 1, 1), HarnessError);

  auto s = WorkloadSpec::r_hat(100, 1);
  s.ops = 0;
  CHECK_THROWS_AS(s.validate(), HarnessError);
  s = WorkloadSpec::r_hat(100, 1);
  s.read_fraction = 1.5;
  CHECK_THROWS_AS(s.validate(), HarnessError);
  s = WorkloadSpec::r_hat(100, 1);
  s.queries["Q1"] += 0.1;
  CHECK_THROWS_AS(s.validate(), HarnessError);
  s = WorkloadSpec::r_hat(100, 1);
  s.queries["Q99"] = 0;
  CHECK_THROWS_AS(s.validate(), HarnessError);
  s = WorkloadSpec::r_hat(100, 1);
  s.read_fraction = 1;
  s.writes.clear();
  CHECK_NOTHROW(s.validate());
  CHECK_THROWS_AS(WorkloadSpec::from_json(nlohmann::json{{"ops", "many"}}), HarnessError);
}

TEST_CASE("traces are deterministic and follow the mix") {
  const auto pop = Population::of(generate_desk_graph({2000, 10'000, 1}));
  const auto spec = WorkloadSpec::r_hat(100'000, 9);
  const auto a = generate(spec, pop), b = generate(spec, pop);
  REQUIRE(a.size() == 100'000);
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i)
    same = same && a[i].kind == b[i].kind && a[i].text == b[i].text && a[i].args == b[i].args;
  CHECK(same);
  auto other = spec;
  other.seed = 10;
  const auto c = generate(other, pop);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < a.size(); ++i) differ += a[i].text != c[i].text || a[i].kind != c[i].kind;
  CHECK(differ > 1000);

  const auto reads = std::count_if(a.begin(), a.end(), [](const Operation& o) { return o.kind == OpKind::read; });
  CHECK(static_cast<double>(reads) / a.size() == doctest::Approx(0.99).epsilon(0.002));

  const auto w = generate(WorkloadSpec::w_hat(100'000, 2), pop);
  std::map<WriteKind, double> kinds;
  double writes = 0;
  for (const auto& o : w)
    if (o.kind == OpKind::write) ++kinds[o.write], ++writes;
  CHECK(writes / w.size() == doctest::Approx(0.38).epsilon(0.02));
  const double total = 44.85 + 43.94 + 11.22;
  CHECK(kinds[WriteKind::upsert] / writes == doctest::Approx(44.85 / total).epsilon(0.02));
  CHECK(kinds[WriteKind::update_last_seen] / writes == doctest::Approx(43.94 / total).epsilon(0.02));
  CHECK(kinds[WriteKind::delete_edges] / writes == doctest::Approx(11.22 / total).epsilon(0.04));

  // Every generated read parses to the traversal it carries.
  for (std::size_t i = 0; i < 2000; ++i) {
    if (a[i].kind != OpKind::read) continue;
    CHECK(query_catalog().count(a[i].query_id) == 1);
    CHECK(query::parse(a[i].text).steps.size() == a[i].traversal.steps.size());
  }
}

TEST_CASE("percentiles") {
  CHECK(nearest_rank({}, 95) == 0);
  std::vector<double> same(100, 7.0);
  auto s = LatencySummary::of(same);
  CHECK(s.count == 100);
  CHECK(s.p50 == 7.0);
  CHECK(s.p99 == 7.0);
  CHECK(s.mean == doctest::Approx(7.0));

  std::vector<double> v(100);
  std::iota(v.begin(), v.end(), 1.0);
  CHECK(nearest_rank(v, 50) == 50);
  CHECK(nearest_rank(v, 95) == 95);
  CHECK(nearest_rank(v, 99) == 99);
  CHECK(nearest_rank(v, 100) == 100);

  std::mt19937_64 rng(3);
  for (int round = 0; round < 50; ++round) {
    std::vector<double> xs(1 + rng() % 300);
    for (auto& x : xs) x = static_cast<double>(rng() % 10'000);
    const auto before = LatencySummary::of(xs);
    CHECK(before.p50 <= before.p95);
    CHECK(before.p95 <= before.p99);
    CHECK(before.p99 <= before.max);
    xs.push_back(before.max + 1);
    const auto after = LatencySummary::of(xs);
    CHECK(after.p95 >= before.p95);
    CHECK(after.max == before.max + 1);
  }
  const auto back = LatencySummary::from_json(LatencySummary::of(v).to_json());
  CHECK(back.p95 == 95);
  CHECK(back.count == 100);
}

TEST_CASE("snapshot round trip") {
  const auto g = small_graph();
  auto d = make_deployment(g, desk_templates(), config_for("write-around"));
  auto pop = d->population();
  const auto trace = generate(WorkloadSpec::r_check(400, 2), pop);
  run(*d, trace, pop, config_for("write-around"));

  std::stringstream buf;
  d->save(buf);
  DeploymentOptions o;
  o.node.unique_props = unique_properties();
  Deployment copy(o);
  copy.restore(buf);
  CHECK(copy.enabled().size() == 6);

  auto dump = [](kv::Store& s) {
    auto tx = s.begin(kv::TxMode::read_only);
    std::vector<std::pair<std::string, std::string>> out;
    for (const char* p : {"A/", "C/", "G/", "M/"})
      for (auto& kv : tx.range_scan(p)) out.push_back(kv);
    return out;
  };
  CHECK(dump(copy.store()) == dump(d->store()));
  CHECK(copy.population().listings == d->population().listings);

  // Ids continue after the restored counters.
  auto w = copy.node().write([&](WriteContext& c) {
    const auto id = c.graph().add_vertex(c.tx(), "user", {});
    CHECK(id.value > 0);
    for (auto& [k, v] : dump(d->store()))
      if (k == graph::keys::vertex(id)) FAIL("restored deployment reused a vertex id");
  });
  (void)w;

  std::stringstream junk("not a snapshot");
  Deployment empty;
  CHECK_THROWS_AS(empty.restore(junk), HarnessError);
}

TEST_CASE("oracle: clean cache, then one corrupted entry") {
  const auto g = small_graph();
  auto d = make_deployment(g, desk_templates(), config_for("write-through:lazy"));
  const auto pop = d->population();
  const auto trace = generate(WorkloadSpec::r_hat(3000, 4), pop);
  const auto m = run(*d, trace, pop, config_for("write-through:lazy"));
  CHECK(m.diffs == 0);

  auto clean = oracle_check(d->store(), enabled_of(*d));
  CHECK(clean.ok());
  REQUIRE(clean.entries_checked > 20);
  CHECK(clean.instances > 0);

  std::string victim;
  std::vector<VertexId> ids;
  {
    auto tx = d->store().begin(kv::TxMode::read_only);
    for (const auto& e : d->node().cache().list(tx, "SQ1")) {
      if (!e.leaf_ids.empty()) {
        victim = e.key;
        ids = e.leaf_ids;
        break;
      }
    }
  }
  REQUIRE_FALSE(victim.empty());
  ids.pop_back();
  {
    auto tx = d->store().begin(kv::TxMode::read_write);
    d->node().cache().put_entry(tx, victim, ids);
    tx.commit();
  }
  auto bad = oracle_check(d->store(), enabled_of(*d));
  REQUIRE(bad.violations.size() == 1);
  CHECK(bad.violations[0].key == victim);
  CHECK(bad.violations[0].problem == "stale");
  CHECK(bad.violations[0].cached == ids);

  // An entry for an instance that does not exist must be empty.
  {
    auto tx = d->store().begin(kv::TxMode::read_write);
    d->node().cache().put_entry(tx, victim, {});
    d->node().cache().put_entry(tx, "SQ2:999999:Status=0", {VertexId{1}});
    d->node().cache().put_entry(tx, "SQ2:999998:Status=0", {});
    tx.commit();
  }
  bad = oracle_check(d->store(), enabled_of(*d));
  CHECK(bad.violations.size() == 2);
  const auto j = bad.to_json();
  CHECK(j["ok"] == false);
}

TEST_CASE("identical reads after warm-up always hit") {
  const auto g = small_graph();
  auto d = make_deployment(g, desk_templates(), config_for("write-around"));
  const auto pop = d->population();
  const auto trace = generate(WorkloadSpec::r_hat(500, 5), pop);
  auto it = std::find_if(trace.begin(), trace.end(), [](const Operation& o) { return o.query_id == "Q1"; });
  REQUIRE(it != trace.end());
  Trace same(200, *it);
  auto cfg = config_for("write-around");
  cfg.warm = true;
  const auto m = run(*d, same, pop, cfg);
  REQUIRE(m.hits.count("SQ1") == 1);
  CHECK(m.hits.at("SQ1").misses == 0);
  CHECK(m.hits.at("SQ1").hits == 200);
  CHECK(m.hit_rate() == 1.0);
}

TEST_CASE("cached runs agree with uncached reads under every policy") {
  const auto g = small_graph(11);
  for (const auto& p : kPolicies) {
    for (bool rewrite : {false, true}) {
      CAPTURE(p);
      CAPTURE(rewrite);
      auto cfg = config_for(p);
      cfg.rewrite = rewrite;
      auto d = make_deployment(g, desk_templates(), cfg);
      const auto pop = d->population();
      const auto m = run(*d, generate(WorkloadSpec::oracle_mix(4000, 21), pop), pop, cfg, "oracle");
      CHECK(m.diffs == 0);
      CHECK(m.ops == 4000);
      CHECK(m.reads + m.writes == 4000);
      CHECK(m.errors.at("conflict") == 0);
      CHECK(m.hit_rate() > 0);
      CHECK(oracle_check(d->store(), enabled_of(*d)).ok());
      CHECK(m.label == (rewrite ? "C+Q+" : "C+Q-"));
    }
  }
}

TEST_CASE("cache-off and cache-on runs see the same graph") {
  const auto g = small_graph(12);
  auto on = make_deployment(g, desk_templates(), config_for("write-around"));
  auto off = make_deployment(g, desk_templates(), config_for("write-around", false));
  CHECK(off->enabled().empty());
  const auto pop = on->population();
  const auto trace = generate(WorkloadSpec::w_hat(1500, 8), pop);
  run(*on, trace, pop, config_for("write-around"));
  const auto moff = run(*off, trace, pop, config_for("write-around", false));
  CHECK(moff.hits.empty());
  auto ta = on->store().begin(kv::TxMode::read_only);
  auto tb = off->store().begin(kv::TxMode::read_only);
  CHECK(ta.range_scan("G/") == tb.range_scan("G/"));
  CHECK(ta.range_scan("A/") == tb.range_scan("A/"));
}

TEST_CASE("impacted-key histograms cover every write") {
  const auto g = small_graph();
  auto cfg = config_for("write-through:proactive");
  auto d = make_deployment(g, desk_templates(), cfg);
  const auto pop = d->population();
  const auto m = run(*d, generate(WorkloadSpec::oracle_mix(2000, 3), pop), pop, cfg);
  std::size_t counted = 0;
  for (const auto& [kind, hist] : m.impacted_keys)
    for (const auto& [keys, n] : hist) counted += n;
  CHECK(counted == m.writes);
  REQUIRE(m.impacted_keys.count("update-last-seen"));
  // No template reads LastSeen.
  CHECK(m.impacted_keys.at("update-last-seen").size() == 1);
  CHECK(m.impacted_keys.at("update-last-seen").count(0) == 1);
}

TEST_CASE("metrics and reports") {
  const auto g = small_graph();
  auto d = make_deployment(g, desk_templates(), config_for("write-around"));
  const auto pop = d->population();
  const auto m = run(*d, generate(WorkloadSpec::r_check(800, 6), pop), pop, config_for("write-around"), "r-check");
  const auto back = RunMetrics::from_json(m.to_json());
  CHECK(back.to_json() == m.to_json());
  CHECK(back.workload == "r-check");

  const auto self = report(m, &m);
  REQUIRE(self.json["rows"].size() >= 2);
  for (const auto& row : self.json["rows"]) {
    CAPTURE(row.dump());
    if (!row["factor_p95"].is_null()) CHECK(row["factor_p95"].get<double>() == 1.0);
  }
  CHECK(self.json["rows"][0]["metric"] == "reads");
  CHECK(self.json["rows"][0]["factor_p50"] == 1.0);
  CHECK(self.text.find("x p95") != std::string::npos);
  CHECK_THROWS_AS(report(m, nullptr), HarnessError);
}

TEST_CASE("template definitions survive in the store") {
  const auto g = small_graph();
  auto d = make_deployment(g, desk_templates(), config_for("write-around"));
  CHECK(d->disable("SQ4") == coordinator::LifecycleState::removed);
  std::stringstream buf;
  d->save(buf);
  Deployment copy;
  copy.restore(buf);
  CHECK(copy.enabled().size() == 5);
  CHECK(copy.coordinator().state("SQ4") == coordinator::LifecycleState::removed);
  std::stringstream again;
  d->save(again);
  Deployment bare;
  bare.restore(again, false);
  CHECK(bare.enabled().empty());
}
