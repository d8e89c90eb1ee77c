// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors

#include "hopcache/coordinator.hpp"

#include <algorithm>
#include <array>
#include <unordered_set>

#include "hopcache/cache.hpp"

namespace hopcache::coordinator {

std::string_view to_string(LifecycleState s) noexcept {
  switch (s) {
    case LifecycleState::registered: return "registered";
    case LifecycleState::installed: return "installed";
    case LifecycleState::enabled: return "enabled";
    case LifecycleState::removed: return "removed";
  }
  return "?";
}

std::optional<LifecycleState> parse_state(std::string_view text) noexcept {
  for (auto s : {LifecycleState::registered, LifecycleState::installed, LifecycleState::enabled,
                 LifecycleState::removed}) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

bool legal_transition(LifecycleState from, LifecycleState to) noexcept {
  using S = LifecycleState;
  return (from == S::registered && to == S::installed) || (from == S::installed && to == S::enabled) ||
         (from == S::enabled && to == S::installed) || (from == S::installed && to == S::removed);
}

std::string_view to_string(MessageKind k) noexcept {
  switch (k) {
    case MessageKind::install: return "install";
    case MessageKind::activate_reads: return "activate-reads";
    case MessageKind::deactivate_reads: return "deactivate-reads";
    case MessageKind::deactivate_invalidation: return "deactivate-invalidation";
  }
  return "?";
}

std::uint64_t NodeControl::handle(const ControlMessage& m) {
  if (m.seq <= last_seq) return m.seq;
  last_seq = m.seq;
  switch (m.kind) {
    case MessageKind::install: flags.invalidate_active = true; break;
    case MessageKind::activate_reads:
      // Reads without maintenance would serve entries nobody keeps fresh.
      if (flags.invalidate_active) flags.read_active = true;
      break;
    case MessageKind::deactivate_reads: flags.read_active = false; break;
    case MessageKind::deactivate_invalidation: flags = TemplateFlags{}; break;
  }
  return m.seq;
}

void Workflow::next_phase(Phase p) {
  phase = p;
  ++seq;
  std::fill(acked.begin(), acked.end(), false);
}

void Workflow::start_enable(std::size_t nodes) {
  if ((state != LifecycleState::registered && state != LifecycleState::installed) || active())
    throw CoordinatorError(CoordinatorErrorCode::precondition, "enable needs a registered or installed, idle template");
  acked.assign(nodes, false);
  next_phase(Phase::install);
}

void Workflow::start_disable(std::size_t nodes) {
  if (state != LifecycleState::enabled || active())
    throw CoordinatorError(CoordinatorErrorCode::precondition, "disable needs an enabled, idle template");
  acked.assign(nodes, false);
  next_phase(Phase::deactivate_reads);
}

MessageKind Workflow::message_kind() const {
  switch (phase) {
    case Phase::install: return MessageKind::install;
    case Phase::activate: return MessageKind::activate_reads;
    case Phase::deactivate_reads: return MessageKind::deactivate_reads;
    case Phase::deactivate_invalidation: return MessageKind::deactivate_invalidation;
    default: break;
  }
  throw CoordinatorError(CoordinatorErrorCode::precondition, "no message in this phase");
}

std::optional<LifecycleState> Workflow::on_ack(std::size_t node, std::uint64_t ack_seq) {
  if (!active() || phase == Phase::clear || ack_seq != seq || node >= acked.size()) return std::nullopt;
  acked[node] = true;
  if (!std::all_of(acked.begin(), acked.end(), [](bool b) { return b; })) return std::nullopt;
  switch (phase) {
    case Phase::install:
      state = LifecycleState::installed;
      next_phase(Phase::activate);
      return state;
    case Phase::activate:
      state = LifecycleState::enabled;
      phase = Phase::done;
      return state;
    case Phase::deactivate_reads:
      state = LifecycleState::installed;
      next_phase(Phase::deactivate_invalidation);
      return state;
    case Phase::deactivate_invalidation:
      phase = Phase::clear;
      return std::nullopt;
    default: break;
  }
  return std::nullopt;
}

LifecycleState Workflow::finish_clear() {
  if (phase != Phase::clear)
    throw CoordinatorError(CoordinatorErrorCode::precondition, "clear outside the clear phase");
  state = LifecycleState::removed;
  phase = Phase::done;
  return state;
}

FaultSchedule no_faults() {
  return [](const Envelope&) { return false; };
}

FaultSchedule drop_everything() {
  return [](const Envelope&) { return true; };
}

FaultSchedule random_loss(double p, std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng, p](const Envelope&) { return std::bernoulli_distribution(p)(*rng); };
}

Coordinator::Coordinator(kv::Store& store, std::vector<QueryNode*> nodes, CoordinatorOptions options)
    : store_(store), nodes_(std::move(nodes)), options_(options) {
  if (options_.retry_after == 0) options_.retry_after = 1;
}

Coordinator::Entry& Coordinator::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw CoordinatorError(CoordinatorErrorCode::unknown_template, "unknown template '" + name + "'");
  return it->second;
}

const Coordinator::Entry& Coordinator::entry(const std::string& name) const {
  return const_cast<Coordinator*>(this)->entry(name);
}

LifecycleState Coordinator::register_template(templates::SubQueryTemplate def) {
  templates::validate(def);
  if (entries_.count(def.name))
    throw CoordinatorError(CoordinatorErrorCode::duplicate_name, "template name '" + def.name + "' already used");
  Entry e;
  e.def = std::make_shared<const templates::SubQueryTemplate>(std::move(def));
  e.controls.assign(nodes_.size(), NodeControl{});
  e.last_sent.assign(nodes_.size(), 0);
  e.attempts.assign(nodes_.size(), 0);
  const auto name = e.def->name;
  entries_.emplace(name, std::move(e));
  write_meta(name, LifecycleState::registered, false);
  return LifecycleState::registered;
}

void Coordinator::restore(templates::SubQueryTemplate def, LifecycleState state) {
  templates::validate(def);
  if (entries_.count(def.name))
    throw CoordinatorError(CoordinatorErrorCode::duplicate_name, "template name '" + def.name + "' already used");
  Entry e;
  e.def = std::make_shared<const templates::SubQueryTemplate>(std::move(def));
  e.wf.state = state;
  e.wf.acked.assign(nodes_.size(), true);
  NodeControl ctl;
  switch (state) {
    case LifecycleState::registered: break;
    case LifecycleState::installed: ctl = NodeControl{{true, false}, 1}; break;
    case LifecycleState::enabled: ctl = NodeControl{{true, true}, 2}; break;
    case LifecycleState::removed: ctl = NodeControl{{}, 4}; break;
  }
  e.wf.seq = ctl.last_seq;
  e.controls.assign(nodes_.size(), ctl);
  e.last_sent.assign(nodes_.size(), 0);
  e.attempts.assign(nodes_.size(), 0);
  if (ctl.flags.invalidate_active) {
    for (auto* node : nodes_) {
      node->install(e.def);
      node->set_flags(e.def->name, ctl.flags);
    }
  }
  if (state == LifecycleState::removed) removed_.push_back(e.def);
  const auto name = e.def->name;
  entries_.emplace(name, std::move(e));
  write_meta(name, state, state == LifecycleState::removed);
}

void Coordinator::reset_sends(Entry& e) {
  std::fill(e.last_sent.begin(), e.last_sent.end(), 0);
  std::fill(e.attempts.begin(), e.attempts.end(), 0);
}

void Coordinator::begin_enable(const std::string& name) {
  auto& e = entry(name);
  e.wf.start_enable(nodes_.size());
  reset_sends(e);
}

void Coordinator::begin_disable(const std::string& name) {
  auto& e = entry(name);
  e.wf.start_disable(nodes_.size());
  reset_sends(e);
}

void Coordinator::write_meta(const std::string& name, LifecycleState s, bool clear_cache) {
  for (;;) {
    auto tx = store_.begin(kv::TxMode::read_write);
    try {
      if (clear_cache) tx.clear_range(std::string(cache::kCachePrefix) + templates::template_prefix(name));
      tx.set(template_meta_key(name), std::string(to_string(s)));
      tx.commit();
      return;
    } catch (const kv::ConflictError&) {
    }
  }
}

void Coordinator::record(Entry& e, LifecycleState from, LifecycleState to) {
  if (!legal_transition(from, to))
    throw CoordinatorError(CoordinatorErrorCode::precondition, "illegal transition " +
                                                                  std::string(to_string(from)) + " -> " +
                                                                  std::string(to_string(to)));
  log_.push_back(Transition{e.def->name, from, to, tick_});
}

void Coordinator::deliver_to_node(Entry& e, const Envelope& env) {
  auto& ctl = e.controls.at(env.node);
  const auto ack = ctl.handle(env.message);
  auto* node = nodes_.at(env.node);
  if (ctl.flags.invalidate_active) {
    node->install(e.def);
    node->set_flags(e.def->name, ctl.flags);
  } else {
    node->uninstall(e.def->name);
  }
  Envelope reply = env;
  reply.to_node = false;
  reply.message.seq = ack;
  reply.tick = tick_ + 1;
  in_flight_.push_back(std::move(reply));
}

void Coordinator::deliver_ack(Entry& e, const Envelope& env) {
  const auto before = e.wf.state;
  const auto advanced = e.wf.on_ack(env.node, env.message.seq);
  if (advanced && *advanced != before) {
    record(e, before, *advanced);
    write_meta(e.def->name, *advanced, false);
    reset_sends(e);
  }
  if (e.wf.phase == Workflow::Phase::clear) {
    write_meta(e.def->name, LifecycleState::removed, true);
    e.wf.finish_clear();
    record(e, before, LifecycleState::removed);
    removed_.push_back(e.def);
  }
}

void Coordinator::tick(const FaultSchedule& faults) {
  ++tick_;
  std::vector<Envelope> due;
  std::vector<Envelope> later;
  for (auto& env : in_flight_) (env.tick <= tick_ ? due : later).push_back(std::move(env));
  in_flight_ = std::move(later);

  for (const auto& env : due) {
    if (faults && faults(env)) {
      ++dropped_;
      continue;
    }
    auto& e = entry(env.template_name);
    if (env.to_node) {
      deliver_to_node(e, env);
    } else {
      deliver_ack(e, env);
    }
    if (observer_) observer_(env);
  }

  for (auto& [name, e] : entries_) {
    if (!e.wf.active() || e.wf.phase == Workflow::Phase::clear) continue;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (e.wf.acked[i]) continue;
      // The ack of a message sent in tick t arrives in tick t + 2 at the
      // earliest; resend once it is retry_after ticks past t + 1.
      if (e.attempts[i] > 0 && tick_ - e.last_sent[i] < 1 + options_.retry_after) continue;
      e.last_sent[i] = tick_;
      ++e.attempts[i];
      ++sent_;
      in_flight_.push_back(Envelope{true, i, name, e.wf.message(), tick_ + 1, e.attempts[i]});
    }
  }
}

LifecycleState Coordinator::enable_template(const std::string& name, const FaultSchedule& faults,
                                            std::uint64_t max_ticks) {
  begin_enable(name);
  for (std::uint64_t i = 0; i < max_ticks && entry(name).wf.active(); ++i) tick(faults);
  return state(name);
}

LifecycleState Coordinator::disable_template(const std::string& name, const FaultSchedule& faults,
                                             std::uint64_t max_ticks) {
  begin_disable(name);
  for (std::uint64_t i = 0; i < max_ticks && entry(name).wf.active(); ++i) tick(faults);
  return state(name);
}

bool Coordinator::busy() const {
  return std::any_of(entries_.begin(), entries_.end(), [](const auto& kv) { return kv.second.wf.active(); });
}

LifecycleState Coordinator::state(const std::string& name) const { return entry(name).wf.state; }

std::optional<templates::TemplatePtr> Coordinator::definition(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) return std::nullopt;
  return it->second.def;
}

std::vector<std::string> Coordinator::names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

const NodeControl& Coordinator::node_control(std::size_t node, const std::string& name) const {
  return entry(name).controls.at(node);
}

nlohmann::json Coordinator::status() const {
  auto out = nlohmann::json::array();
  for (const auto& [name, e] : entries_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& c : e.controls) {
      nodes.push_back({{"invalidate_active", c.flags.invalidate_active}, {"read_active", c.flags.read_active}});
    }
    out.push_back({{"name", name}, {"state", to_string(e.wf.state)}, {"busy", e.wf.active()}, {"nodes", nodes}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model checker

namespace {

enum class CacheCell : std::uint8_t { absent, fresh, stale };

struct MState {
  Workflow wf;
  std::vector<NodeControl> nodes;
  // Messages in flight per channel, as bitmasks over seq 1..4. Copies of
  // the same message are not distinguished.
  std::vector<std::uint8_t> down;
  std::vector<std::uint8_t> up;
  std::vector<std::uint8_t> drops_down;
  std::vector<std::uint8_t> drops_up;
  CacheCell cache = CacheCell::absent;
  bool pending_populate = false;
  bool disable_started = false;

  bool awaiting(std::size_t i) const {
    return wf.active() && wf.phase != Workflow::Phase::clear && !wf.acked[i];
  }

  // Drops messages whose delivery is a no-op: a node ignores seqs it has
  // passed (its re-ack only matters while the coordinator still waits),
  // and the coordinator ignores acks it is not waiting for.
  void canonicalize() {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (std::uint64_t seq = 1; seq <= 4; ++seq) {
        const auto b = static_cast<std::uint8_t>(1u << (seq - 1));
        const bool wanted_ack = awaiting(i) && seq == wf.seq;
        if ((down[i] & b) && seq <= nodes[i].last_seq && !wanted_ack) down[i] &= static_cast<std::uint8_t>(~b);
        if ((up[i] & b) && !wanted_ack) up[i] &= static_cast<std::uint8_t>(~b);
      }
    }
  }

  std::string encode() const {
    std::string s;
    s.reserve(4 + nodes.size() * 3);
    s.push_back(static_cast<char>(wf.state));
    s.push_back(static_cast<char>(wf.phase));
    s.push_back(static_cast<char>(wf.seq));
    std::uint8_t misc = static_cast<std::uint8_t>(cache) | (pending_populate ? 4 : 0) | (disable_started ? 8 : 0);
    s.push_back(static_cast<char>(misc));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      std::uint8_t a = static_cast<std::uint8_t>(nodes[i].last_seq) |
                       (nodes[i].flags.invalidate_active ? 0x10 : 0) | (nodes[i].flags.read_active ? 0x20 : 0) |
                       (wf.acked.size() > i && wf.acked[i] ? 0x40 : 0);
      s.push_back(static_cast<char>(a));
      s.push_back(static_cast<char>(down[i] | (up[i] << 4)));
      s.push_back(static_cast<char>(drops_down[i] | (drops_up[i] << 4)));
    }
    return s;
  }
};

std::uint8_t bit(std::uint64_t seq) { return static_cast<std::uint8_t>(1u << (seq - 1)); }

MessageKind kind_for_seq(std::uint64_t seq) {
  static constexpr std::array<MessageKind, 4> kinds{MessageKind::install, MessageKind::activate_reads,
                                                    MessageKind::deactivate_reads,
                                                    MessageKind::deactivate_invalidation};
  return kinds.at(seq - 1);
}

}  // namespace

ModelCheckResult model_check(const ModelCheckOptions& options) {
  const auto n = options.nodes;
  ModelCheckResult result;

  MState init;
  init.nodes.assign(n, NodeControl{});
  init.down.assign(n, 0);
  init.up.assign(n, 0);
  init.drops_down.assign(n, 0);
  init.drops_up.assign(n, 0);
  const int limit = options.max_drops_per_channel;
  if (limit > 15) throw std::invalid_argument("max_drops_per_channel above 15; use a negative value for no limit");
  auto may_drop = [&](std::uint8_t used) { return limit < 0 || used < limit; };
  auto count_drop = [&](std::uint8_t& used) {
    if (limit >= 0) ++used;
  };
  init.wf.start_enable(n);

  std::unordered_set<std::string> seen;
  std::vector<MState> stack;
  seen.insert(init.encode());
  stack.push_back(std::move(init));

  auto check = [&](const MState& s) {
    for (const auto& nc : s.nodes) {
      if (nc.flags.read_active && !nc.flags.invalidate_active) ++result.flag_violations;
    }
    if (s.wf.state == LifecycleState::removed) {
      ++result.removed_states;
      if (s.cache != CacheCell::absent) ++result.removal_violations;
    }
  };

  auto push = [&](MState&& next) {
    ++result.transitions;
    next.canonicalize();
    if (seen.insert(next.encode()).second) stack.push_back(std::move(next));
  };

  while (!stack.empty()) {
    MState s = std::move(stack.back());
    stack.pop_back();
    ++result.states;
    check(s);

    for (std::size_t i = 0; i < n; ++i) {
      // Coordinator sends (or resends) the current message.
      if (s.awaiting(i) && !(s.down[i] & bit(s.wf.seq))) {
        MState t = s;
        t.down[i] |= bit(s.wf.seq);
        push(std::move(t));
      }
      for (std::uint64_t seq = 1; seq <= 4; ++seq) {
        if (s.down[i] & bit(seq)) {
          MState t = s;
          t.down[i] &= static_cast<std::uint8_t>(~bit(seq));
          if (may_drop(t.drops_down[i])) {
            MState d = t;
            count_drop(d.drops_down[i]);
            push(std::move(d));
          }
          const auto kind = kind_for_seq(seq);
          const auto before = t.nodes[i].last_seq;
          const auto ack = t.nodes[i].handle(ControlMessage{kind, seq});
          if (options.one_phase_enable && kind == MessageKind::install && before < seq) {
            t.nodes[i].flags.read_active = true;
          }
          t.up[i] |= bit(ack);
          push(std::move(t));
        }
        if (s.up[i] & bit(seq)) {
          MState t = s;
          t.up[i] &= static_cast<std::uint8_t>(~bit(seq));
          if (may_drop(t.drops_up[i])) {
            MState d = t;
            count_drop(d.drops_up[i]);
            push(std::move(d));
          }
          t.wf.on_ack(i, seq);
          if (t.wf.phase == Workflow::Phase::clear) {
            // Clear and mark removed in one transaction.
            t.cache = CacheCell::absent;
            t.wf.finish_clear();
          }
          push(std::move(t));
        }
      }
      // Node reads.
      if (s.nodes[i].flags.read_active) {
        if (s.cache == CacheCell::stale) ++result.stale_reads;
        if (s.cache == CacheCell::absent && !s.pending_populate) {
          MState t = s;
          t.pending_populate = true;
          push(std::move(t));
        }
      }
      // Node writes touching the entry.
      {
        MState t = s;
        if (t.nodes[i].flags.invalidate_active) {
          t.cache = CacheCell::absent;
        } else if (t.cache == CacheCell::fresh) {
          t.cache = CacheCell::stale;
        }
        if (t.cache != s.cache) push(std::move(t));
      }
    }

    // Populate worker; gated on the template not being removed.
    if (s.pending_populate) {
      MState t = s;
      t.pending_populate = false;
      if (t.wf.state != LifecycleState::removed) t.cache = CacheCell::fresh;
      push(std::move(t));
    }

    if (s.wf.state == LifecycleState::enabled && !s.wf.active() && !s.disable_started) {
      MState t = s;
      t.disable_started = true;
      t.wf.start_disable(n);
      push(std::move(t));
    }
  }
  return result;
}

}  // namespace hopcache::coordinator
