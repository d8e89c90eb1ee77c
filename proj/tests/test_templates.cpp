// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include <doctest.h>

#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "hopcache/graph_store.hpp"
#include "hopcache/templates.hpp"

using namespace hopcache;
using namespace hopcache::templates;

namespace {

const char* kSq1 =
    R"({"name":"SQ1","root":{"label":"watch-list"},"dir":"out",)"
    R"("edge":{"label":"includes","props":[{"name":"IsActive","match":"?"}]},)"
    R"("leaf":{"props":[{"name":"Status","match":"?"}]}})";

SubQueryTemplate sq1() { return template_from_json(nlohmann::json::parse(kSq1)); }

Vertex vertex(PropertyMap props, std::string label = "listing") { return Vertex{VertexId{1}, label, std::move(props)}; }

}  // namespace

TEST_CASE("template json round trip") {
  auto t = sq1();
  CHECK(t.name == "SQ1");
  CHECK(t.direction == Direction::out);
  CHECK(t.root.label == "watch-list");
  CHECK(t.edge.label == "includes");
  REQUIRE(t.edge.terms.size() == 1);
  CHECK(t.edge.terms[0].is_wildcard());
  CHECK(template_from_json(to_json(t)) == t);

  std::istringstream in(std::string(kSq1) + "\n\n" +
                        R"({"name":"SQ4","dir":"in","edge":{"label":"sells"},"leaf":{"props":[{"name":"Tier","match":2}]}})");
  auto all = load_templates_jsonl(in);
  REQUIRE(all.size() == 2);
  CHECK(all[1].leaf.terms[0].value == Scalar{std::int64_t{2}});
}

TEST_CASE("validate rejects bad templates") {
  auto t = sq1();
  t.name = "a:b";
  CHECK_THROWS_AS(validate(t), TemplateError);
  t.name = "";
  CHECK_THROWS_AS(validate(t), TemplateError);
  t = sq1();
  t.leaf.terms.push_back(PropertyTerm{"Status", Scalar{std::int64_t{1}}});
  CHECK_THROWS_AS(validate(t), TemplateError);
  CHECK_NOTHROW(validate(sq1()));
}

TEST_CASE("evaluate") {
  Predicate status0{std::nullopt, {{"Status", Scalar{std::int64_t{0}}}}};
  CHECK(evaluate(status0, vertex({{"Status", std::int64_t{0}}})));
  CHECK_FALSE(evaluate(status0, vertex({{"Status", std::int64_t{1}}})));
  CHECK(evaluate(Predicate{}, vertex({})));
  Predicate age{std::nullopt, {{"age", Scalar{std::int64_t{30}}}}};
  CHECK_FALSE(evaluate(age, vertex({})));
  Predicate labelled{std::string("user"), {}};
  CHECK_FALSE(evaluate(labelled, vertex({})));
  // Wildcards are not checked by evaluate(), only by has_all_wildcards().
  Predicate wild{std::nullopt, {{"Status", std::nullopt}}};
  CHECK(evaluate(wild, vertex({})));
  CHECK_FALSE(has_all_wildcards(wild, vertex({})));
  CHECK_FALSE(qualifies(wild, vertex({})));
  CHECK(qualifies(wild, vertex({{"Status", std::int64_t{4}}})));
}

TEST_CASE("evaluate matches a term-by-term check") {
  std::mt19937_64 rng(1);
  const std::vector<std::string> names{"a", "b", "c"};
  for (int i = 0; i < 2000; ++i) {
    Predicate p;
    if (rng() % 2) p.label = rng() % 2 ? "x" : "y";
    for (const auto& n : names) {
      switch (rng() % 3) {
        case 0: break;
        case 1: p.terms.push_back({n, std::nullopt}); break;
        case 2: p.terms.push_back({n, Scalar{std::int64_t(rng() % 2)}}); break;
      }
    }
    Vertex v{VertexId{1}, rng() % 2 ? "x" : "y", {}};
    for (const auto& n : names)
      if (rng() % 3) v.props[n] = std::int64_t(rng() % 2);
    bool want = !p.label || *p.label == v.label;
    bool wild = true;
    for (const auto& t : p.terms) {
      auto it = v.props.find(t.name);
      if (t.value && (it == v.props.end() || it->second != *t.value)) want = false;
      if (!t.value && it == v.props.end()) wild = false;
    }
    CHECK(evaluate(p, v) == want);
    CHECK(qualifies(p, v) == (want && wild));
  }
}

TEST_CASE("extract_wildcard_values") {
  Predicate pe{std::string("includes"), {{"IsActive", std::nullopt}}};
  Edge e{EdgeId{1}, VertexId{10}, VertexId{15}, "includes", {{"IsActive", true}, {"weight", std::int64_t{3}}}};
  CHECK(extract_wildcard_values(pe, e) == WildcardBinding{{"IsActive", Scalar{true}}});
  CHECK(extract_wildcard_values(Predicate{}, e).empty());
  Predicate mixed{std::nullopt, {{"IsActive", Scalar{true}}, {"weight", std::nullopt}}};
  CHECK(extract_wildcard_values(mixed, e) == WildcardBinding{{"weight", Scalar{std::int64_t{3}}}});
  Predicate missing{std::nullopt, {{"gone", std::nullopt}}};
  try {
    extract_wildcard_values(missing, e);
    FAIL("expected missing_wildcard_property");
  } catch (const TemplateError& err) {
    CHECK(err.code() == TemplateErrorCode::missing_wildcard_property);
  }
}

TEST_CASE("build_key and root_prefix") {
  auto t = sq1();
  auto k = build_key(t, VertexId{10}, {{"IsActive", true}}, {{"Status", std::int64_t{0}}});
  CHECK(k.render() == "SQ1:10:IsActive=true&Status=0");
  CHECK(k.render() == build_key(t, VertexId{10}, {{"IsActive", true}}, {{"Status", std::int64_t{0}}}).render());

  SubQueryTemplate plain;
  plain.name = "SQT";
  plain.edge.label = "e";
  CHECK(build_key(plain, VertexId{7}, {}, {}).render() == "SQT:7:");

  CHECK(root_prefix(t, VertexId{10}) == "SQ1:10:");
  CHECK(k.render().starts_with(root_prefix(t, VertexId{10})));
  CHECK_FALSE(root_prefix(t, VertexId{101}).starts_with(root_prefix(t, VertexId{10})));
  CHECK_FALSE(root_prefix(t, VertexId{10}).starts_with(root_prefix(t, VertexId{101})));

  try {
    build_key(t, VertexId{10}, {}, {{"Status", std::int64_t{0}}});
    FAIL("expected binding_mismatch");
  } catch (const TemplateError& e) {
    CHECK(e.code() == TemplateErrorCode::binding_mismatch);
  }
  CHECK(build_key(t, VertexId{1}, {{"IsActive", std::string("a&b")}}, {{"Status", std::string("x=\"%")}}).render() ==
        "SQ1:1:IsActive=\"a%26b\"&Status=\"x%3D%22%25\"");
}

TEST_CASE("keys are injective and parse back") {
  std::mt19937_64 rng(9);
  SubQueryTemplate t;
  t.name = "T";
  t.edge = Predicate{std::string("e"), {{"p", std::nullopt}, {"q", std::nullopt}}};
  t.leaf = Predicate{std::nullopt, {{"r", std::nullopt}}};
  const std::vector<Scalar> pool{Scalar{true}, Scalar{false}, Scalar{std::int64_t{0}}, Scalar{std::int64_t{-12}},
                                 Scalar{std::string("")}, Scalar{std::string("0")}, Scalar{std::string("a:b")},
                                 Scalar{std::string("a&q=1")}, Scalar{std::string("true")}, Scalar{std::string("%2")},
                                 Scalar{std::string("x/y\"")}};
  std::map<std::string, CacheKey> seen;
  for (int i = 0; i < 5000; ++i) {
    CacheKey k = build_key(t, VertexId{rng() % 20}, {{"p", pool[rng() % pool.size()]}, {"q", pool[rng() % pool.size()]}},
                           {{"r", pool[rng() % pool.size()]}});
    auto r = k.render();
    auto [it, fresh] = seen.emplace(r, k);
    CHECK(it->second == k);
    auto back = parse_key(r, t);
    REQUIRE(back.has_value());
    CHECK(*back == k);
    CHECK(key_template_name(r) == "T");
  }
  CHECK_FALSE(parse_key("T:x:", t).has_value());
  CHECK_FALSE(parse_key("T:1:p=1", t).has_value());
  CHECK_FALSE(parse_key("U:1:p=1&q=1&r=1", t).has_value());
}

TEST_CASE("render_scalar round trip") {
  for (const Scalar& s : {Scalar{true}, Scalar{std::int64_t{-5}}, Scalar{std::string("hi")}}) {
    CHECK(parse_rendered_scalar(render_scalar(s)) == s);
  }
  CHECK(render_scalar(Scalar{std::int64_t{0}}) == "0");
  CHECK(render_scalar(Scalar{std::string("0")}) == "\"0\"");
}

TEST_CASE("specialize") {
  auto t = sq1();
  auto p = specialize(t.edge, {{"IsActive", true}});
  REQUIRE(p.terms.size() == 1);
  CHECK(p.terms[0].value == Scalar{true});
  CHECK_THROWS_AS(specialize(t.edge, {}), TemplateError);
}

TEST_CASE("execute_instance against a brute-force edge filter") {
  std::mt19937_64 rng(4);
  kv::Store s;
  graph::GraphStore g;
  auto tx = s.begin(kv::TxMode::read_write);
  std::vector<VertexId> vs;
  for (int i = 0; i < 40; ++i) {
    PropertyMap props;
    if (rng() % 4) props["Status"] = std::int64_t(rng() % 2);
    vs.push_back(g.add_vertex(tx, i % 4 == 0 ? "watch-list" : "listing", props));
  }
  for (int i = 0; i < 200; ++i) {
    PropertyMap props;
    if (rng() % 4) props["IsActive"] = bool(rng() % 2);
    g.add_edge(tx, vs[rng() % vs.size()], vs[rng() % vs.size()], rng() % 3 ? "includes" : "other", props);
  }
  tx.commit();

  auto rt = s.begin(kv::TxMode::read_only);
  auto edges = g.all_edges(rt);
  std::map<VertexId, Vertex> vm;
  for (auto& v : g.all_vertices(rt)) vm[v.id] = v;
  for (auto dir : {Direction::out, Direction::in, Direction::both}) {
    auto t = sq1();
    t.direction = dir;
    for (auto root : vs) {
      for (bool active : {true, false}) {
        for (std::int64_t status : {0, 1}) {
          std::set<VertexId> want;
          if (vm[root].label == "watch-list") {
            for (const auto& e : edges) {
              if (e.label != "includes" || !e.prop("IsActive") || *e.prop("IsActive") != Scalar{active}) continue;
              auto check_leaf = [&](VertexId leaf) {
                auto* st = vm[leaf].prop("Status");
                if (st && *st == Scalar{status}) want.insert(leaf);
              };
              if (dir != Direction::in && e.out == root) check_leaf(e.in);
              if (dir != Direction::out && e.in == root) check_leaf(e.out);
            }
          }
          auto got = execute_instance(g, rt, t, root, {{"IsActive", active}}, {{"Status", status}});
          CHECK(got == std::vector<VertexId>(want.begin(), want.end()));
        }
      }
    }
  }
  CHECK(execute_instance(g, rt, sq1(), VertexId{9999}, {{"IsActive", true}}, {{"Status", std::int64_t{0}}}).empty());
}

TEST_CASE("exact-valued templates only cover matching instances") {
  auto t = sq1();
  t.edge.terms[0].value = Scalar{true};
  Edge active{EdgeId{1}, VertexId{1}, VertexId{2}, "includes", {{"IsActive", true}}};
  Edge inactive{EdgeId{2}, VertexId{1}, VertexId{2}, "includes", {{"IsActive", false}}};
  CHECK(qualifies(t.edge, active));
  CHECK_FALSE(qualifies(t.edge, inactive));
}
