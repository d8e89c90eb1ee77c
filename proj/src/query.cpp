// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include "hopcache/query.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>

namespace hopcache::query {

namespace {

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string literal(const Scalar& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return quote(*s);
  return display(v);
}

bool is_edge_step(StepKind k) {
  return k == StepKind::out_e || k == StepKind::in_e || k == StepKind::both_e;
}

bool is_move(StepKind k) {
  return k == StepKind::in_v || k == StepKind::out_v || k == StepKind::other_v;
}

StepKind move_for(StepKind edge) {
  switch (edge) {
    case StepKind::out_e: return StepKind::in_v;
    case StepKind::in_e: return StepKind::out_v;
    default: return StepKind::other_v;
  }
}

StepKind move_for_direction(Direction d) {
  switch (d) {
    case Direction::out: return StepKind::in_v;
    case Direction::in: return StepKind::out_v;
    default: return StepKind::other_v;
  }
}

Direction direction_of(StepKind edge) {
  switch (edge) {
    case StepKind::out_e: return Direction::out;
    case StepKind::in_e: return Direction::in;
    default: return Direction::both;
  }
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  Traversal run() {
    Traversal t;
    skip_ws();
    expect("g.V(");
    skip_ws();
    if (peek() != ')') t.start = selector();
    skip_ws();
    expect(")");

    // 0: vertex filters, 1: after an edge step, before its vertex move.
    int stage = 0;
    StepKind pending_edge = StepKind::out_e;
    std::size_t edge_offset = 0;
    for (;;) {
      skip_ws();
      if (pos_ >= s_.size()) fail(pos_, "missing final clause");
      std::size_t step_offset = pos_;
      expect(".");
      auto name = identifier();
      skip_ws();
      expect("(");
      skip_ws();

      if (name == "valueMap" || name == "count" || name == "dedup" || name == "id") {
        expect(")");
        if (stage == 1) fail(edge_offset, "edge step without a vertex move");
        t.final = name == "valueMap" ? FinalClause::values
                  : name == "count"  ? FinalClause::count
                  : name == "dedup"  ? FinalClause::dedup
                                     : FinalClause::id;
        skip_ws();
        if (pos_ != s_.size()) fail(pos_, "unexpected input after final clause");
        return t;
      }

      Step step;
      if (name == "hasLabel") {
        step.kind = StepKind::has_label;
        step.name = string_literal();
        if (stage == 1) fail(step_offset, "hasLabel is not supported on edges");
      } else if (name == "has") {
        step.kind = StepKind::has;
        step.name = string_literal();
        skip_ws();
        expect(",");
        skip_ws();
        if (s_.substr(pos_).starts_with("neq(")) {
          pos_ += 4;
          skip_ws();
          step.value = value_literal();
          skip_ws();
          expect(")");
          step.negated = true;
        } else {
          step.value = value_literal();
        }
      } else if (name == "hasId") {
        step.kind = StepKind::has_id;
        if (s_.substr(pos_).starts_with("neq(")) {
          pos_ += 4;
          skip_ws();
          step.negated = true;
        }
        skip_ws();
        expect("start");
        if (step.negated) {
          skip_ws();
          expect(")");
        }
        if (stage == 1) fail(step_offset, "hasId is not supported on edges");
      } else if (name == "outE" || name == "inE" || name == "bothE") {
        step.kind = name == "outE" ? StepKind::out_e : name == "inE" ? StepKind::in_e : StepKind::both_e;
        step.name = string_literal();
        if (stage == 1) fail(step_offset, "edge step without a vertex move");
        stage = 1;
        pending_edge = step.kind;
        edge_offset = step_offset;
      } else if (name == "inV" || name == "outV" || name == "otherV") {
        step.kind = name == "inV" ? StepKind::in_v : name == "outV" ? StepKind::out_v : StepKind::other_v;
        if (stage != 1) fail(step_offset, name + "() without a preceding edge step");
        if (step.kind != move_for(pending_edge)) fail(step_offset, name + "() does not follow its edge step");
        stage = 0;
      } else {
        fail(step_offset + 1, "unknown step '" + name + "'");
      }
      skip_ws();
      expect(")");
      t.steps.push_back(std::move(step));
    }
  }

 private:
  [[noreturn]] void fail(std::size_t at, const std::string& what) const { throw ParseError(at, what); }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' || s_[pos_] == '\r')) {
      ++pos_;
    }
  }

  void expect(std::string_view tok) {
    if (pos_ >= s_.size()) fail(pos_, "unexpected end of input, expected '" + std::string(tok) + "'");
    if (s_.substr(pos_, tok.size()) != tok) fail(pos_, "expected '" + std::string(tok) + "'");
    pos_ += tok.size();
  }

  std::string identifier() {
    std::size_t begin = pos_;
    while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (begin == pos_) fail(pos_, "expected a step name");
    return std::string(s_.substr(begin, pos_ - begin));
  }

  std::string string_literal() {
    char q = peek();
    if (q != '"' && q != '\'') fail(pos_, "expected a string literal");
    std::size_t begin = pos_++;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != q) {
      if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) ++pos_;
      out.push_back(s_[pos_++]);
    }
    if (pos_ >= s_.size()) fail(begin, "unterminated string literal");
    ++pos_;
    return out;
  }

  std::int64_t int_literal() {
    std::size_t begin = pos_;
    if (peek() == '-') ++pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s_.data() + begin, s_.data() + pos_, v);
    if (ec != std::errc{} || ptr != s_.data() + pos_) fail(begin, "expected an integer literal");
    return v;
  }

  Scalar value_literal() {
    char c = peek();
    if (c == '"' || c == '\'') return string_literal();
    if (s_.substr(pos_).starts_with("true")) {
      pos_ += 4;
      return true;
    }
    if (s_.substr(pos_).starts_with("false")) {
      pos_ += 5;
      return false;
    }
    if (c == '-' || std::isdigit(static_cast<unsigned char>(c))) return int_literal();
    if (pos_ >= s_.size()) fail(pos_, "unexpected end of input, expected a literal");
    fail(pos_, "expected a literal");
  }

  Selector selector() {
    if (pos_ >= s_.size()) fail(pos_, "unexpected end of input, expected a selector or ')'");
    char c = peek();
    if (c == '"' || c == '\'') return string_literal();
    std::size_t begin = pos_;
    auto v = int_literal();
    if (v < 0) fail(begin, "vertex ids are non-negative");
    return VertexId{static_cast<std::uint64_t>(v)};
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

void add_filter(VertexFilter& f, const Step& s) {
  switch (s.kind) {
    case StepKind::has_label: f.labels.push_back(s.name); break;
    case StepKind::has:
      (s.negated ? f.not_equals : f.equals).push_back(PropTest{s.name, s.value});
      break;
    case StepKind::has_id: (s.negated ? f.id_not_in_start : f.id_in_start) = true; break;
    default: throw std::invalid_argument("not a vertex filter step");
  }
}

bool props_pass(const std::vector<PropTest>& equals, const std::vector<PropTest>& not_equals,
                const PropertyMap& props) {
  for (const auto& t : equals) {
    auto it = props.find(t.name);
    if (it == props.end() || it->second != t.value) return false;
  }
  for (const auto& t : not_equals) {
    auto it = props.find(t.name);
    if (it != props.end() && it->second == t.value) return false;
  }
  return true;
}

std::optional<templates::WildcardBinding> unify(const std::vector<PropTest>& tests,
                                                const templates::Predicate& p) {
  if (tests.size() != p.terms.size()) return std::nullopt;
  templates::WildcardBinding bound;
  for (const auto& term : p.terms) {
    auto n = std::count_if(tests.begin(), tests.end(), [&](const PropTest& t) { return t.name == term.name; });
    if (n != 1) return std::nullopt;
    const auto& test = *std::find_if(tests.begin(), tests.end(),
                                     [&](const PropTest& t) { return t.name == term.name; });
    if (term.is_wildcard()) {
      bound.emplace_back(term.name, test.value);
    } else if (*term.value != test.value) {
      return std::nullopt;
    }
  }
  return bound;
}

bool labels_match(const std::vector<std::string>& labels, const std::optional<std::string>& want) {
  if (!want) return labels.empty();
  return !labels.empty() &&
         std::all_of(labels.begin(), labels.end(), [&](const std::string& l) { return l == *want; });
}

bool entails(const VertexFilter& f, const templates::Predicate& p) {
  if (p.label && std::find(f.labels.begin(), f.labels.end(), *p.label) == f.labels.end()) return false;
  for (const auto& term : p.terms) {
    bool found = std::any_of(f.equals.begin(), f.equals.end(), [&](const PropTest& t) {
      return t.name == term.name && (term.is_wildcard() || t.value == *term.value);
    });
    if (!found) return false;
  }
  return true;
}

}  // namespace

std::string Step::to_string() const {
  switch (kind) {
    case StepKind::has_label: return ".hasLabel(" + quote(name) + ")";
    case StepKind::has:
      return ".has(" + quote(name) + ", " + (negated ? "neq(" + literal(value) + ")" : literal(value)) + ")";
    case StepKind::has_id: return negated ? ".hasId(neq(start))" : ".hasId(start)";
    case StepKind::out_e: return ".outE(" + quote(name) + ")";
    case StepKind::in_e: return ".inE(" + quote(name) + ")";
    case StepKind::both_e: return ".bothE(" + quote(name) + ")";
    case StepKind::in_v: return ".inV()";
    case StepKind::out_v: return ".outV()";
    case StepKind::other_v: return ".otherV()";
  }
  return {};
}

std::string Traversal::to_string() const {
  std::string out = "g.V(";
  if (start) {
    if (const auto* id = std::get_if<VertexId>(&*start)) {
      out += std::to_string(id->value);
    } else {
      out += quote(std::get<std::string>(*start));
    }
  }
  out += ")";
  for (const auto& s : steps) out += s.to_string();
  switch (final) {
    case FinalClause::values: out += ".valueMap()"; break;
    case FinalClause::count: out += ".count()"; break;
    case FinalClause::dedup: out += ".dedup()"; break;
    case FinalClause::id: out += ".id()"; break;
  }
  return out;
}

Traversal parse(std::string_view text) { return Parser(text).run(); }

bool VertexFilter::accepts(const Vertex& v) const {
  for (const auto& l : labels) {
    if (v.label != l) return false;
  }
  return props_pass(equals, not_equals, v.props);
}

bool Hop::accepts_edge(const Edge& e) const {
  return e.label == edge_label && props_pass(edge_equals, edge_not_equals, e.props);
}

std::size_t QueryPlan::matched_hops() const {
  return static_cast<std::size_t>(
      std::count_if(hops.begin(), hops.end(), [](const Hop& h) { return h.match.has_value(); }));
}

std::vector<std::string> QueryPlan::matched_templates() const {
  std::vector<std::string> out;
  for (const auto& h : hops) {
    if (h.match) out.push_back(h.match->tmpl->name);
  }
  return out;
}

std::optional<TemplateMatch> match_hop(const Hop& hop, const VertexFilter& root_filter,
                                       const templates::SubQueryTemplate& t) {
  if (t.direction != hop.direction) return std::nullopt;
  if (!t.edge.label || *t.edge.label != hop.edge_label) return std::nullopt;
  if (!hop.edge_not_equals.empty()) return std::nullopt;
  auto we = unify(hop.edge_equals, t.edge);
  if (!we) return std::nullopt;
  if (!labels_match(hop.leaf.labels, t.leaf.label)) return std::nullopt;
  auto wl = unify(hop.leaf.equals, t.leaf);
  if (!wl) return std::nullopt;
  return TemplateMatch{nullptr, std::move(*we), std::move(*wl), entails(root_filter, t.root)};
}

QueryPlan decompose(const Traversal& t, const std::vector<templates::TemplatePtr>& enabled) {
  QueryPlan plan;
  plan.start = t.start;
  plan.final = t.final;

  VertexFilter* current = &plan.start_filter;
  Hop* open_edge = nullptr;
  for (const auto& s : t.steps) {
    if (is_edge_step(s.kind)) {
      if (open_edge) throw std::invalid_argument("edge step without a vertex move");
      plan.hops.push_back(Hop{direction_of(s.kind), s.name, {}, {}, {}, std::nullopt});
      open_edge = &plan.hops.back();
      current = nullptr;
    } else if (is_move(s.kind)) {
      if (!open_edge || s.kind != move_for_direction(open_edge->direction)) {
        throw std::invalid_argument("vertex move does not follow its edge step");
      }
      current = &open_edge->leaf;
      open_edge = nullptr;
    } else if (open_edge) {
      if (s.kind != StepKind::has) throw std::invalid_argument("only has() filters apply to edges");
      (s.negated ? open_edge->edge_not_equals : open_edge->edge_equals).push_back(PropTest{s.name, s.value});
    } else {
      add_filter(*current, s);
    }
  }
  if (open_edge) throw std::invalid_argument("edge step without a vertex move");

  const VertexFilter* roots = &plan.start_filter;
  for (auto& hop : plan.hops) {
    for (const auto& tmpl : enabled) {
      if (auto m = match_hop(hop, *roots, *tmpl)) {
        m->tmpl = tmpl;
        hop.match = std::move(m);
        break;
      }
    }
    roots = &hop.leaf;
  }
  return plan;
}

Traversal rewrite_id_filter(const Traversal& t, const std::set<std::string>& unique_props) {
  std::map<std::string, Scalar> known;
  std::size_t i = 0;
  for (; i < t.steps.size() && !is_edge_step(t.steps[i].kind); ++i) {
    const auto& s = t.steps[i];
    if (s.kind == StepKind::has && !s.negated && unique_props.count(s.name)) known.emplace(s.name, s.value);
  }
  if (known.empty()) return t;

  Traversal out = t;
  bool on_edge = false;
  for (; i < out.steps.size(); ++i) {
    auto& s = out.steps[i];
    if (is_edge_step(s.kind)) {
      on_edge = true;
      continue;
    }
    if (is_move(s.kind)) {
      on_edge = false;
      continue;
    }
    if (on_edge || s.kind != StepKind::has) continue;
    auto it = known.find(s.name);
    if (it == known.end() || it->second != s.value) continue;
    s = Step{StepKind::has_id, {}, Scalar{false}, s.negated};
  }
  return out;
}

std::vector<VertexId> sorted_intersection(std::vector<VertexId> a, std::vector<VertexId> b,
                                          std::uint64_t* comparisons) {
  std::uint64_t n = 0;
  auto less = [&n](VertexId x, VertexId y) {
    ++n;
    return x < y;
  };
  auto equal = [&n](VertexId x, VertexId y) {
    ++n;
    return x == y;
  };
  std::sort(a.begin(), a.end(), less);
  std::sort(b.begin(), b.end(), less);
  a.erase(std::unique(a.begin(), a.end(), equal), a.end());
  b.erase(std::unique(b.begin(), b.end(), equal), b.end());

  std::vector<VertexId> out;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (less(a[i], b[j])) {
      ++i;
    } else if (less(b[j], a[i])) {
      ++j;
    } else {
      out.push_back(a[i]);
      ++i;
      ++j;
    }
  }
  if (comparisons) *comparisons = n;
  return out;
}

std::vector<VertexId> naive_intersection(const std::vector<VertexId>& a, const std::vector<VertexId>& b,
                                         std::uint64_t* comparisons) {
  std::uint64_t n = 0;
  std::vector<VertexId> out;
  for (auto x : a) {
    bool found = false;
    for (auto y : b) {
      ++n;
      found = found || x == y;
    }
    if (found) out.push_back(x);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (comparisons) *comparisons = n;
  return out;
}

double amdahl_speedup(double f, double k) {
  if (!(f >= 0.0 && f <= 1.0) || !(k > 0.0)) {
    throw std::domain_error("amdahl_speedup needs 0 <= f <= 1 and k > 0");
  }
  return 1.0 / ((1.0 - f) + f / k);
}

}  // namespace hopcache::query
