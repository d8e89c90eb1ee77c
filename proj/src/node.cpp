// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include "hopcache/node.hpp"

#include <algorithm>

namespace hopcache {

using templates::TemplatePtr;

std::string template_meta_key(std::string_view template_name) {
  return std::string(kTemplateMetaPrefix) + std::string(template_name);
}

nlohmann::json QueryResult::to_json() const {
  nlohmann::json j;
  switch (final) {
    case query::FinalClause::count: j["count"] = count(); break;
    case query::FinalClause::values: {
      j["values"] = nlohmann::json::array();
      for (const auto& v : values) {
        nlohmann::json props = nlohmann::json::object();
        for (const auto& [k, val] : v.props) props[k] = templates::scalar_to_json(val);
        j["values"].push_back({{"id", v.id.value}, {"label", v.label}, {"props", props}});
      }
      break;
    }
    case query::FinalClause::dedup:
    case query::FinalClause::id: {
      j["ids"] = nlohmann::json::array();
      for (auto id : ids) j["ids"].push_back(id.value);
      break;
    }
  }
  return j;
}

void ReadStats::merge(const ReadStats& o) {
  for (const auto& [name, c] : o.per_template) {
    auto& mine = per_template[name];
    mine.hits += c.hits;
    mine.misses += c.misses;
  }
  fallback_hops += o.fallback_hops;
  malformed += o.malformed;
  populate_dropped += o.populate_dropped;
}

graph::GraphStore& WriteContext::graph() noexcept { return node_.graph(); }

QueryResult WriteContext::read(const query::Traversal& t) { return node_.execute_read(tx_, t, false); }

QueryResult WriteContext::read(std::string_view text) { return read(query::parse(text)); }

// Registers a write transaction's flag snapshot for the change listener.
class QueryNode::TxScope {
 public:
  TxScope(QueryNode& node, std::uint64_t tx_id) : node_(node), id_(tx_id) {
    auto maintained = node_.maintained();
    std::lock_guard lock(node_.tx_mu_);
    auto& st = node_.tx_state_[id_];
    st.maintained = std::move(maintained);
    st.epoch = node_.epoch_;
  }
  ~TxScope() {
    {
      std::lock_guard lock(node_.tx_mu_);
      node_.tx_state_.erase(id_);
    }
    node_.tx_cv_.notify_all();
  }
  std::vector<Impact> take_impacts() {
    std::lock_guard lock(node_.tx_mu_);
    return std::move(node_.tx_state_[id_].impacts);
  }

 private:
  QueryNode& node_;
  std::uint64_t id_;
};

QueryNode::QueryNode(kv::Store& store, std::shared_ptr<graph::IdAllocator> ids, NodeOptions options,
                     std::string name)
    : store_(store),
      name_(std::move(name)),
      options_(std::move(options)),
      graph_(std::move(ids)),
      cache_(cache::make_codec(options_.codec), options_.chunk_limit),
      maintainer_(graph_, cache_, options_.policy),
      populator_(store_, graph_, cache_, options_.populate) {
  graph_.subscribe([this](kv::Transaction& tx, const GraphChange& c) { on_change(tx, c); });
  populator_.set_gate([](kv::Transaction& tx, const templates::SubQueryTemplate& t) {
    auto state = tx.get(template_meta_key(t.name));
    return !state || *state != "removed";
  });
}

QueryNode::~QueryNode() { populator_.stop_workers(); }

void QueryNode::install(TemplatePtr t) {
  std::lock_guard lock(templates_mu_);
  for (const auto& h : hosted_) {
    if (h.tmpl->name == t->name) return;
  }
  hosted_.push_back(Hosted{std::move(t), {}});
}

void QueryNode::uninstall(const std::string& name) {
  set_flags(name, {});
  std::lock_guard lock(templates_mu_);
  std::erase_if(hosted_, [&](const Hosted& h) { return h.tmpl->name == name; });
}

void QueryNode::set_flags(const std::string& name, TemplateFlags flags) {
  {
    std::lock_guard lock(templates_mu_);
    auto it = std::find_if(hosted_.begin(), hosted_.end(), [&](const Hosted& h) { return h.tmpl->name == name; });
    if (it == hosted_.end()) return;
    if (it->flags == flags) return;
    it->flags = flags;
  }
  std::unique_lock lock(tx_mu_);
  const auto epoch = ++epoch_;
  tx_cv_.wait(lock, [&] {
    return std::none_of(tx_state_.begin(), tx_state_.end(),
                        [&](const auto& kv) { return kv.second.epoch < epoch; });
  });
}

std::optional<TemplateFlags> QueryNode::flags(const std::string& name) const {
  std::lock_guard lock(templates_mu_);
  for (const auto& h : hosted_) {
    if (h.tmpl->name == name) return h.flags;
  }
  return std::nullopt;
}

void QueryNode::enable_local(TemplatePtr t) {
  auto name = t->name;
  install(std::move(t));
  set_flags(name, TemplateFlags{true, true});
}

std::vector<TemplatePtr> QueryNode::select(bool TemplateFlags::*field) const {
  std::lock_guard lock(templates_mu_);
  std::vector<TemplatePtr> out;
  for (const auto& h : hosted_) {
    if (field == nullptr || h.flags.*field) out.push_back(h.tmpl);
  }
  return out;
}

std::vector<TemplatePtr> QueryNode::installed() const { return select(nullptr); }
std::vector<TemplatePtr> QueryNode::maintained() const { return select(&TemplateFlags::invalidate_active); }
std::vector<TemplatePtr> QueryNode::readable() const { return select(&TemplateFlags::read_active); }

void QueryNode::on_change(kv::Transaction& tx, const GraphChange& change) {
  std::vector<TemplatePtr> view;
  bool registered = false;
  {
    std::lock_guard lock(tx_mu_);
    auto it = tx_state_.find(tx.id());
    if (it != tx_state_.end()) {
      view = it->second.maintained;
      registered = true;
    }
  }
  if (!registered) view = maintained();
  auto report = maintainer_.on_change(tx, change, view);
  if (!registered) return;
  std::lock_guard lock(tx_mu_);
  tx_state_[tx.id()].impacts.push_back(Impact{change, std::move(report)});
}

query::QueryPlan QueryNode::plan(const query::Traversal& t, bool use_cache) const {
  return query::decompose(t, use_cache ? readable() : std::vector<TemplatePtr>{});
}

QueryResult QueryNode::execute_read(kv::Transaction& tx, const query::Traversal& t, bool use_cache,
                                    ReadStats* stats) {
  ReadStats local;
  ReadStats& st = stats ? *stats : local;
  const auto p = plan(t, use_cache);

  std::unordered_map<VertexId, Vertex> loaded;
  std::vector<VertexId> frontier;

  // Start set.
  {
    std::vector<Vertex> candidates;
    if (!p.start) {
      candidates = graph_.all_vertices(tx);
    } else {
      std::optional<VertexId> id;
      if (const auto* vid = std::get_if<VertexId>(&*p.start)) {
        id = *vid;
      } else if (resolver_) {
        id = resolver_(tx, std::get<std::string>(*p.start));
      }
      if (id) {
        if (auto v = graph_.get_vertex(tx, *id)) candidates.push_back(std::move(*v));
      }
    }
    for (auto& v : candidates) {
      if (!p.start_filter.accepts(v) || p.start_filter.id_not_in_start) continue;
      frontier.push_back(v.id);
      loaded.emplace(v.id, std::move(v));
    }
    std::sort(frontier.begin(), frontier.end());
  }
  const std::vector<VertexId> start_set = frontier;

  auto load = [&](VertexId id) -> const Vertex* {
    auto it = loaded.find(id);
    if (it != loaded.end()) return &it->second;
    auto v = graph_.get_vertex(tx, id);
    if (!v) return nullptr;
    return &loaded.emplace(id, std::move(*v)).first->second;
  };
  auto in_start = [&](VertexId id) { return std::binary_search(start_set.begin(), start_set.end(), id); };

  for (const auto& hop : p.hops) {
    std::vector<VertexId> next;
    for (VertexId root : frontier) {
      std::vector<VertexId> leaves;
      bool via_template = false;

      if (hop.match) {
        const auto& m = *hop.match;
        const auto& tmpl = *m.tmpl;
        const Vertex* rv = nullptr;
        if (auto it = loaded.find(root); it != loaded.end()) rv = &it->second;
        bool qualifies = false;
        if (rv) {
          qualifies = templates::qualifies(tmpl.root, *rv);
        } else if (m.root_entailed) {
          qualifies = true;
        } else {
          rv = load(root);
          qualifies = rv && templates::qualifies(tmpl.root, *rv);
        }

        if (qualifies) {
          via_template = true;
          auto key = templates::build_key(tmpl, root, m.edge_values, m.leaf_values).render();
          std::optional<std::vector<VertexId>> hit;
          try {
            hit = cache_.get_entry(tx, key);
          } catch (const cache::CacheError&) {
            ++st.malformed;
          }
          auto& counts = st.per_template[tmpl.name];
          if (hit) {
            ++counts.hits;
            leaves = std::move(*hit);
          } else {
            ++counts.misses;
            leaves = rv ? templates::execute_instance(graph_, tx, tmpl, *rv, m.edge_values, m.leaf_values)
                        : templates::execute_instance(graph_, tx, tmpl, root, m.edge_values, m.leaf_values);
            if (!populator_.enqueue(cache::PopulateRequest{m.tmpl, root, m.edge_values, m.leaf_values, 0})) {
              ++st.populate_dropped;
            }
          }
          if (!hop.leaf.not_equals.empty()) {
            std::erase_if(leaves, [&](VertexId id) {
              const Vertex* v = load(id);
              return !v || !hop.leaf.accepts(*v);
            });
          }
        }
      }

      if (!via_template) {
        ++st.fallback_hops;
        leaves = graph_.expand(
            tx, root, hop.direction, hop.edge_label, [&](const Edge& e) { return hop.accepts_edge(e); },
            [&](const Vertex& v) { return hop.leaf.accepts(v); });
      }
      if (hop.leaf.id_in_start) std::erase_if(leaves, [&](VertexId id) { return !in_start(id); });
      if (hop.leaf.id_not_in_start) std::erase_if(leaves, in_start);
      next.insert(next.end(), leaves.begin(), leaves.end());
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    frontier = std::move(next);
  }

  QueryResult result;
  result.final = p.final;
  result.ids = std::move(frontier);
  if (p.final == query::FinalClause::values) {
    for (auto id : result.ids) {
      if (const Vertex* v = load(id)) result.values.push_back(*v);
    }
  }
  return result;
}

QueryResult QueryNode::read(std::string_view text, bool use_cache, ReadStats* stats) {
  auto t = query::parse(text);
  if (options_.rewrite) t = query::rewrite_id_filter(t, options_.unique_props);
  auto tx = store_.begin(kv::TxMode::read_only);
  return execute_read(tx, t, use_cache, stats);
}

WriteOutcome QueryNode::write(const WriteProgram& program) {
  auto tx = store_.begin(kv::TxMode::read_write);
  TxScope scope(*this, tx.id());
  WriteContext ctx(*this, tx);
  program(ctx);
  WriteOutcome out;
  out.version = tx.commit();
  out.committed = true;
  out.attempts = 1;
  out.impacts = scope.take_impacts();
  if (observer_) {
    for (const auto& i : out.impacts) observer_(i);
  }
  return out;
}

WriteOutcome QueryNode::write_retry(const WriteProgram& program, int attempts) {
  for (int i = 1;; ++i) {
    try {
      auto out = write(program);
      out.attempts = i;
      return out;
    } catch (const kv::ConflictError&) {
      if (i >= attempts) throw;
    }
  }
}

WriteOutcome QueryNode::delete_vertex(VertexId id, int attempts) {
  WriteOutcome total;
  const std::size_t batch = std::max<std::size_t>(1, options_.supernode_threshold);
  auto append = [&](WriteOutcome o) {
    total.attempts += o.attempts;
    total.version = o.version;
    total.committed = o.committed;
    for (auto& i : o.impacts) total.impacts.push_back(std::move(i));
  };

  std::size_t degree = 0;
  {
    auto tx = store_.begin(kv::TxMode::read_only);
    degree = graph_.edges(tx, id, Direction::both).size();
  }
  while (degree > batch) {
    append(write_retry(
        [&](WriteContext& ctx) {
          auto edges = graph_.edges(ctx.tx(), id, Direction::both);
          for (std::size_t i = 0; i < edges.size() && i < batch; ++i) graph_.delete_edge(ctx.tx(), edges[i].id);
        },
        attempts));
    auto tx = store_.begin(kv::TxMode::read_only);
    degree = graph_.edges(tx, id, Direction::both).size();
  }
  append(write_retry([&](WriteContext& ctx) { graph_.delete_vertex(ctx.tx(), id); }, attempts));
  return total;
}

}  // namespace hopcache
