// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The hopcache Authors
//
// Command-line front end. Deployment state (graph, aliases, templates and
// cache) lives in one snapshot file, --state, which every verb that needs
// a deployment reads and, when it changes it, writes back.

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hopcache/harness.hpp"

namespace hc = hopcache;
namespace hh = hopcache::harness;
using nlohmann::json;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw hh::HarnessError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw hh::HarnessError("cannot write " + path);
  return out;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    open_out(path) << text;
  }
}

std::unique_ptr<hh::Deployment> load_state(const std::string& path, hc::maintenance::MaintenancePolicy policy = {},
                                           bool with_templates = true) {
  hh::DeploymentOptions o;
  o.node.policy = policy;
  o.node.unique_props = hh::unique_properties();
  auto d = std::make_unique<hh::Deployment>(o);
  auto in = open_in(path);
  d->restore(in, with_templates);
  return d;
}

void save_state(hh::Deployment& d, const std::string& path) {
  const auto tmp = path + ".tmp";
  {
    auto out = open_out(tmp);
    d.save(out);
  }
  std::rename(tmp.c_str(), path.c_str());
}

json read_json(const std::string& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw hh::HarnessError(path + ": " + e.what());
  }
}

bool on_off(const std::string& v) { return v == "on"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hopcache: one-hop sub-query caching over a transactional graph store"};
  app.require_subcommand(1);
  std::string state = "hopcache.state";
  app.add_option("--state", state, "Deployment snapshot file")->capture_default_str();

  // gen-graph
  auto* gen_graph = app.add_subcommand("gen-graph", "Generate the desk-scale marketplace graph as JSON lines");
  hh::DeskGraphOptions graph_opts;
  std::string graph_out = "-";
  gen_graph->add_option("--vertices", graph_opts.vertices)->capture_default_str();
  gen_graph->add_option("--edges", graph_opts.edges)->capture_default_str();
  gen_graph->add_option("--seed", graph_opts.seed)->capture_default_str();
  gen_graph->add_option("--out", graph_out, "Output file, - for stdout");

  // gen-templates
  auto* gen_templates = app.add_subcommand("gen-templates", "Write the six standard templates as JSON lines");
  std::string templates_out = "-";
  gen_templates->add_option("--out", templates_out);

  // gen-workload
  auto* gen_workload = app.add_subcommand("gen-workload", "Write a workload spec");
  std::string preset = "r-hat";
  std::size_t ops = 10'000;
  std::uint64_t workload_seed = 1;
  std::string workload_out = "-";
  gen_workload->add_option("--preset", preset, "r-hat, w-hat, r-check or oracle")->capture_default_str();
  gen_workload->add_option("--ops", ops)->capture_default_str();
  gen_workload->add_option("--seed", workload_seed)->capture_default_str();
  gen_workload->add_option("--out", workload_out);

  // load
  auto* load = app.add_subcommand("load", "Create a deployment from a graph file");
  std::string graph_file;
  load->add_option("graph", graph_file, "Graph JSON lines")->required();

  // template
  auto* tmpl = app.add_subcommand("template", "Template life cycle");
  tmpl->require_subcommand(1);
  auto* t_register = tmpl->add_subcommand("register", "Register templates from a JSON lines file");
  std::string template_file;
  t_register->add_option("file", template_file)->required();
  auto* t_enable = tmpl->add_subcommand("enable", "Enable a registered template");
  auto* t_disable = tmpl->add_subcommand("disable", "Disable an enabled template");
  std::string template_name;
  t_enable->add_option("name", template_name)->required();
  t_disable->add_option("name", template_name)->required();
  auto* t_status = tmpl->add_subcommand("status", "Print the template state table");

  // run
  auto* run = app.add_subcommand("run", "Execute a workload and write metrics");
  std::string workload_file, cache_mode = "on", rewrite_mode = "off", policy_text = "write-around", metrics_out = "-";
  std::optional<std::uint64_t> run_seed;
  std::size_t drain_every = 16, op_budget = 0;
  double op_delay_us = 0;
  bool warm = false, shadow = false, save_after = false;
  run->add_option("--workload", workload_file, "Workload spec JSON")->required();
  run->add_option("--cache", cache_mode)->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  run->add_option("--rewrite", rewrite_mode)->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  run->add_option("--policy", policy_text, "write-around | write-through[:lazy|proactive]")->capture_default_str();
  run->add_option("--seed", run_seed, "Override the workload seed");
  run->add_option("--out", metrics_out);
  run->add_option("--drain-every", drain_every)->capture_default_str();
  run->add_option("--op-delay-us", op_delay_us, "Injected delay per kv operation")->capture_default_str();
  run->add_option("--op-budget", op_budget, "Per-transaction kv operation budget, 0 for none")->capture_default_str();
  run->add_flag("--warm", warm, "Run every distinct read once before measuring");
  run->add_flag("--shadow", shadow, "Compare every cached read with an uncached one");
  run->add_flag("--save", save_after, "Write the mutated deployment back to --state");

  // oracle
  auto* oracle = app.add_subcommand("oracle", "Check every cache entry against the graph");
  std::string oracle_out = "-";
  oracle->add_option("--out", oracle_out);

  // report
  auto* rep = app.add_subcommand("report", "Compare two metrics files");
  std::string cand_file, base_file, report_json;
  rep->add_option("candidate", cand_file)->required();
  rep->add_option("baseline", base_file)->required();
  rep->add_option("--json", report_json, "Also write the comparison as JSON");

  // query
  auto* q = app.add_subcommand("query", "Run one traversal and print the result as JSON");
  std::string query_text;
  bool no_cache = false;
  q->add_option("text", query_text)->required();
  q->add_flag("--no-cache", no_cache);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_graph->parsed()) {
      std::ostringstream s;
      hh::write_graph_jsonl(s, hh::generate_desk_graph(graph_opts));
      emit(graph_out, s.str());
    } else if (gen_templates->parsed()) {
      std::ostringstream s;
      for (const auto& t : hh::desk_templates()) s << hc::templates::to_json(t).dump() << '\n';
      emit(templates_out, s.str());
    } else if (gen_workload->parsed()) {
      emit(workload_out, hh::WorkloadSpec::preset(preset, ops, workload_seed).to_json().dump(2) + "\n");
    } else if (load->parsed()) {
      auto in = open_in(graph_file);
      const auto g = hh::read_graph_jsonl(in);
      hh::DeploymentOptions o;
      o.node.unique_props = hh::unique_properties();
      hh::Deployment d(o);
      d.load(g);
      save_state(d, state);
      std::cout << json{{"vertices", g.vertices.size()}, {"edges", g.edges.size()}}.dump() << '\n';
    } else if (tmpl->parsed()) {
      auto d = load_state(state);
      if (t_register->parsed()) {
        auto in = open_in(template_file);
        for (const auto& def : hc::templates::load_templates_jsonl(in)) {
          d->register_template(def);
          std::cout << def.name << " registered\n";
        }
      } else if (t_enable->parsed()) {
        std::cout << template_name << " " << hc::coordinator::to_string(d->enable(template_name)) << '\n';
      } else if (t_disable->parsed()) {
        std::cout << template_name << " " << hc::coordinator::to_string(d->disable(template_name)) << '\n';
      } else if (t_status->parsed()) {
        auto& c = d->coordinator();
        for (const auto& name : c.names()) std::cout << name << '\t' << hc::coordinator::to_string(c.state(name)) << '\n';
      }
      if (!t_status->parsed()) save_state(*d, state);
    } else if (run->parsed()) {
      auto spec = hh::WorkloadSpec::from_json(read_json(workload_file));
      if (run_seed) spec.seed = *run_seed;
      hh::RunConfig cfg;
      cfg.cache = on_off(cache_mode);
      cfg.rewrite = on_off(rewrite_mode);
      cfg.policy = hc::maintenance::MaintenancePolicy::parse(policy_text);
      cfg.drain_every = drain_every;
      cfg.warm = warm;
      cfg.shadow_check = shadow;
      cfg.op_budget = op_budget;
      cfg.op_delay = std::chrono::nanoseconds(static_cast<std::int64_t>(op_delay_us * 1000));
      // A cache-off run gets a deployment without templates, so writes pay
      // no maintenance either.
      auto d = load_state(state, cfg.policy, cfg.cache);
      const auto pop = d->population();
      const auto trace = hh::generate(spec, pop);
      const auto m = hh::run(*d, trace, pop, cfg, spec.name);
      emit(metrics_out, m.to_json().dump(2) + "\n");
      if (save_after) save_state(*d, state);
    } else if (oracle->parsed()) {
      auto d = load_state(state);
      std::vector<hc::templates::TemplatePtr> maintained;
      auto& c = d->coordinator();
      for (const auto& name : c.names()) {
        if (c.state(name) != hc::coordinator::LifecycleState::removed) maintained.push_back(*c.definition(name));
      }
      const auto r = hh::oracle_check(d->store(), maintained);
      emit(oracle_out, r.to_json().dump(2) + "\n");
      return r.ok() ? 0 : 1;
    } else if (rep->parsed()) {
      const auto cand = hh::RunMetrics::from_json(read_json(cand_file));
      const auto base = hh::RunMetrics::from_json(read_json(base_file));
      const auto r = hh::report(cand, &base);
      std::cout << r.text;
      if (!report_json.empty()) emit(report_json, r.json.dump(2) + "\n");
    } else if (q->parsed()) {
      auto d = load_state(state);
      hc::ReadStats stats;
      const auto result = d->node().read(query_text, !no_cache, &stats);
      d->node().populator().drain();
      std::cout << result.to_json().dump() << '\n';
      save_state(*d, state);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
