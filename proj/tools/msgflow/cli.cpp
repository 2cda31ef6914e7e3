/*
 * Copyright (C) 2026 The msgflow Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "msgflow/analysis.hpp"
#include "msgflow/causality.hpp"
#include "msgflow/clock_sync.hpp"
#include "msgflow/diagnostics.hpp"
#include "msgflow/ingest.hpp"
#include "msgflow/render.hpp"
#include "msgflow/simulator.hpp"

namespace msgflow::cli {
namespace {

using json = nlohmann::json;

class UsageError : public Error {
 public:
  using Error::Error;
};

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("msgflow", sink);
  logger->set_pattern("msgflow: %l: %v");
  std::string level = "quiet";
  if (const char* env = std::getenv("MSGFLOW_LOG")) level = env;
  if (level == "debug") {
    logger->set_level(spdlog::level::debug);
  } else if (level == "info") {
    logger->set_level(spdlog::level::info);
  } else {
    logger->set_level(spdlog::level::err);
  }
  return logger;
}

// Options shared by every subcommand that reads a bundle.
struct InputOptions {
  std::string bundle;
  bool no_sync = false;
  std::string corrections;
  std::string reference;
};

void add_input_options(CLI::App* cmd, InputOptions& in) {
  cmd->add_option("bundle", in.bundle, "Trace bundle directory")->required();
  cmd->add_flag("--no-sync", in.no_sync, "Skip clock correction");
  cmd->add_option("--corrections", in.corrections, "Apply corrections from this file");
  cmd->add_option("--reference", in.reference, "Reference host for implicit sync");
}

// Optional-value --json: bare flag writes to stdout, a value names a file.
struct JsonOutput {
  CLI::Option* option = nullptr;
  std::string path;

  bool requested() const { return option && option->count() > 0; }
};

void add_json_option(CLI::App* cmd, JsonOutput& j) {
  j.option = cmd->add_option("--json", j.path, "Emit JSON (to FILE if given)")->expected(0, 1);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(fmt::format("cannot write {}", path));
  file << text;
  if (!file) throw Error(fmt::format("cannot write {}", path));
}

void emit_json(const JsonOutput& j, const json& doc, std::ostream& out) {
  if (j.path.empty()) {
    out << doc.dump(2) << '\n';
  } else {
    write_text(j.path, doc.dump(2) + "\n");
  }
}

struct Loaded {
  EventLog log;
  std::vector<ClockCorrection> corrections;
};

Loaded load_input(const InputOptions& in, spdlog::logger& log) {
  auto loaded = load_bundle(in.bundle);
  for (const auto& v : loaded.warnings) log.warn("{}", format_violation(v));
  log.info("loaded {} events from {} host(s)", loaded.log.events.size(), loaded.log.hosts.size());

  Loaded result{std::move(loaded.log), {}};
  if (!in.corrections.empty()) {
    std::ifstream file(in.corrections);
    if (!file) throw Error(fmt::format("cannot read {}", in.corrections));
    json doc;
    try {
      doc = json::parse(file);
    } catch (const json::exception& e) {
      throw Error(fmt::format("{}: {}", in.corrections, e.what()));
    }
    result.corrections = corrections_from_json(doc);
    result.log = apply_corrections(result.log, result.corrections);
    log.info("applied corrections from {}", in.corrections);
  } else if (!in.no_sync && result.log.hosts.size() > 1) {
    std::optional<std::string> reference;
    if (!in.reference.empty()) reference = in.reference;
    result.corrections = estimate_corrections(result.log, reference);
    for (const auto& c : result.corrections) {
      log.debug("{}: offset {:.3f} ms, drift {:.3f} ppm ({})", c.host, c.offset_ns / 1e6,
                c.drift_ppm(), to_string(c.method));
    }
    result.log = apply_corrections(result.log, result.corrections);
  }
  return result;
}

FlowGraphBuild build_graph(const EventLog& log, spdlog::logger& logger) {
  auto build = build_flow_graph(log);
  for (const auto& d : build.diagnostics) logger.warn("{}", d.message);
  logger.info("flow graph: {} messages, {} callbacks, {} transport edges, {} causal edges",
              build.graph.messages().size(), build.graph.callbacks().size(),
              build.graph.transport_edges().size(), build.graph.causal_edges().size());
  return build;
}

MessageKey parse_key_arg(const std::string& text) {
  auto key = parse_message_key(text);
  if (!key) throw UsageError(fmt::format("--message expects PUB:SEQ, got '{}'", text));
  return *key;
}

double ms(Duration d) { return static_cast<double>(d) / 1e6; }

// --- validate -------------------------------------------------------------

struct ValidateCmd {
  std::string bundle;
  bool strict = false;
  JsonOutput json_out;

  int run(std::ostream& out, spdlog::logger& logger) const {
    auto loaded = load_bundle(bundle);
    auto violations = loaded.warnings;
    std::vector<std::string> graph_problems;
    if (strict && violations.empty()) {
      // Cross-host latencies are only meaningful on a common timeline.
      std::optional<EventLog> synced;
      if (loaded.log.hosts.size() > 1) {
        try {
          synced = apply_corrections(loaded.log, estimate_corrections(loaded.log));
        } catch (const SyncError& e) {
          graph_problems.push_back(e.what());
        }
      }
      auto build = build_flow_graph(synced ? *synced : loaded.log);
      for (const auto& d : build.diagnostics) graph_problems.push_back(d.message);
    }
    if (json_out.requested()) {
      json doc = violations_json(violations);
      for (const auto& p : graph_problems) doc.push_back({{"kind", "graph"}, {"message", p}});
      emit_json(json_out, doc, out);
    } else {
      for (const auto& v : violations) out << format_violation(v) << '\n';
      for (const auto& p : graph_problems) out << p << '\n';
    }
    logger.info("{} violation(s)", violations.size() + graph_problems.size());
    return violations.empty() && graph_problems.empty() ? kExitOk : kExitFailure;
  }
};

// --- sync -----------------------------------------------------------------

struct SyncCmd {
  std::string bundle;
  std::string reference;
  std::string out_path;
  JsonOutput json_out;

  int run(std::ostream& out, spdlog::logger& logger) const {
    auto loaded = load_bundle(bundle);
    for (const auto& v : loaded.warnings) logger.warn("{}", format_violation(v));
    std::optional<std::string> ref;
    if (!reference.empty()) ref = reference;
    const auto corrections = estimate_corrections(loaded.log, ref);
    const auto doc = corrections_to_json(corrections);
    if (!out_path.empty()) write_text(out_path, doc.dump(2) + "\n");
    if (json_out.requested()) {
      emit_json(json_out, doc, out);
      return kExitOk;
    }
    out << fmt::format("{:<16}{:>14}{:>14}{:>14}  {:<14}{:>7}\n", "host", "offset_ms",
                       "drift_ppm", "bound_ms", "method", "pairs");
    for (const auto& c : corrections) {
      out << fmt::format("{:<16}{:>14.6f}{:>14.3f}{:>14.6f}  {:<14}{:>7}\n", c.host,
                         c.offset_ns / 1e6, c.drift_ppm(), c.bound_ns / 1e6,
                         to_string(c.method), c.pairs);
    }
    for (const auto& c : corrections) {
      if (c.method == SyncMethod::kForwardOnly || c.method == SyncMethod::kReverseOnly) {
        out << fmt::format(
            "note: {} has traffic in one direction only; its offset is biased by the "
            "minimum one-way delay and no error bound is available\n",
            c.host);
      }
    }
    return kExitOk;
  }
};

// --- graph ----------------------------------------------------------------

struct GraphCmd {
  InputOptions in;
  bool dot = false;
  JsonOutput json_out;

  int run(std::ostream& out, spdlog::logger& logger) const {
    auto loaded = load_input(in, logger);
    auto build = build_graph(loaded.log, logger);
    if (dot) {
      out << render_dot(build.graph, loaded.log.topology);
    } else if (json_out.requested()) {
      emit_json(json_out, graph_json(build, loaded.log.topology), out);
    } else {
      const auto& g = build.graph;
      out << fmt::format("messages         {}\n", g.messages().size());
      out << fmt::format("callbacks        {}\n", g.callbacks().size());
      out << fmt::format("transport edges  {}\n", g.transport_edges().size());
      out << fmt::format("causal edges     {}\n", g.causal_edges().size());
      out << fmt::format("unmatched        {}\n", build.unmatched.size());
      for (const auto& d : build.diagnostics) out << d.message << '\n';
    }
    return kExitOk;
  }
};

// --- flow -----------------------------------------------------------------

struct FlowCmd {
  InputOptions in;
  std::string message;
  std::string direction = "fwd";
  bool critical = false;
  bool show_breakdown = false;
  std::vector<std::string> groups;
  JsonOutput json_out;

  int run(std::ostream& out, spdlog::logger& logger) const {
    const auto root = parse_key_arg(message);
    Grouping grouping;
    for (const auto& g : groups) {
      auto eq = g.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw UsageError(fmt::format("--group expects LABEL=ROW, got '{}'", g));
      }
      grouping.rows[g.substr(0, eq)] = g.substr(eq + 1);
    }

    auto loaded = load_input(in, logger);
    auto build = build_graph(loaded.log, logger);
    const auto& graph = build.graph;
    const auto& topo = loaded.log.topology;
    const auto flow =
        direction == "bwd" ? backward_flow(graph, root) : forward_flow(graph, root);

    std::optional<CriticalPath> path;
    std::optional<Breakdown> table;
    if (critical || show_breakdown) path = critical_path(graph, topo, flow);
    if (show_breakdown) table = breakdown(*path, grouping);

    if (json_out.requested()) {
      json doc;
      if (table) doc = breakdown_json(*table);
      doc["flow"] = flow_json(flow, graph, topo);
      if (path) doc["critical_path"] = critical_path_json(*path, graph);
      emit_json(json_out, doc, out);
      return kExitOk;
    }

    out << fmt::format("{} flow from {}: {} messages, {} callbacks\n", to_string(flow.direction),
                       to_string(root), flow.messages.size(), flow.callbacks.size());
    if (!critical && !show_breakdown) {
      for (auto m : flow.messages) {
        out << fmt::format("  {:<20} {}\n", to_string(graph.messages()[m].key),
                           message_label(graph, topo, m));
      }
    }
    if (critical) {
      out << fmt::format("critical path: {:.3f} ms\n", ms(path->total));
      for (const auto& s : path->segments) {
        out << fmt::format("  {:<11}{:<40}{:>12.3f} ms\n", to_string(s.kind), s.label,
                           ms(s.duration()));
      }
    }
    if (table) out << render_report(*table);
    return kExitOk;
  }
};

// --- drops / stats / threads / outliers ----------------------------------

struct DropsCmd {
  InputOptions in;
  double tail_window_ms = static_cast<double>(kDefaultTailWindow) / 1e6;
  JsonOutput json_out;

  int run(std::ostream& out, spdlog::logger& logger) const {
    if (tail_window_ms < 0) throw UsageError("--tail-window must be non-negative");
    auto loaded = load_input(in, logger);
    auto build = build_graph(loaded.log, logger);
    const auto report = detect_drops(build.graph, loaded.log.topology,
                                     static_cast<Duration>(std::llround(tail_window_ms * 1e6)));
    if (json_out.requested()) {
      emit_json(json_out, drops_json(report), out);
      return kExitOk;
    }
    out << fmt::format("{:<16}{:<24}{:<24}{:>10}{:>10}{:>10}{:>10}{:>9}\n", "sub", "node",
                       "topic", "published", "matched", "dropped", "in_flight", "rate");
    for (const auto& s : report.subscriptions) {
      out << fmt::format("{:<16}{:<24}{:<24}{:>10}{:>10}{:>10}{:>10}{:>8.1f}%\n", s.sub,
                         loaded.log.topology.node_label(s.node), s.topic, s.publish_count,
                         s.matched_count, s.drop_count, s.in_flight_count,
                         100.0 * s.drop_rate());
    }
    out << fmt::format("total drops: {}\n", report.total_drops());
    return kExitOk;
  }
};

struct StatsCmd {
  InputOptions in;
  std::string topic;
  std::string node;
  JsonOutput json_out;

  int run(std::ostream& out, spdlog::logger& logger) const {
    auto loaded = load_input(in, logger);
    auto build = build_graph(loaded.log, logger);
    LatencyFilter filter;
    if (!topic.empty()) filter.topic = topic;
    if (!node.empty()) filter.node = node;
    const auto stats = latency_stats(build.graph, filter);
    if (json_out.requested()) {
      emit_json(json_out, latency_json(stats), out);
      return kExitOk;
    }
    out << fmt::format("{:<14}{:<14}{:<22}{:>8}{:>11}{:>11}{:>11}{:>11}{:>11}{:>11}\n", "pub",
                       "sub", "topic", "count", "min_ms", "mean_ms", "p50_ms", "p95_ms",
                       "p99_ms", "max_ms");
    for (const auto& s : stats) {
      out << fmt::format("{:<14}{:<14}{:<22}{:>8}{:>11.3f}{:>11.3f}{:>11.3f}{:>11.3f}{:>11.3f}"
                         "{:>11.3f}\n",
                         s.pub, s.sub, s.topic, s.count, ms(s.min), s.mean / 1e6, ms(s.p50),
                         ms(s.p95), ms(s.p99), ms(s.max));
    }
    return kExitOk;
  }
};

struct ThreadsCmd {
  InputOptions in;
  JsonOutput json_out;

  int run(std::ostream& out, spdlog::logger& logger) const {
    auto loaded = load_input(in, logger);
    const auto timelines = thread_states(loaded.log);
    if (json_out.requested()) {
      emit_json(json_out, threads_json(timelines), out);
      return kExitOk;
    }
    out << fmt::format("{:<14}{:>8}{:>8}  {:<24}{:>12}{:>9}\n", "host", "pid", "tid", "node",
                       "active_ms", "active");
    for (const auto& tl : timelines) {
      out << fmt::format("{:<14}{:>8}{:>8}  {:<24}{:>12.3f}{:>8.1f}%\n", tl.host, tl.pid, tl.tid,
                         tl.node_label, ms(tl.active_time()), 100.0 * tl.active_fraction());
      for (const auto& note : tl.notes) out << "  note: " << note << '\n';
    }
    return kExitOk;
  }
};

struct OutliersCmd {
  InputOptions in;
  double k = kDefaultOutlierFactor;
  JsonOutput json_out;

  int run(std::ostream& out, spdlog::logger& logger) const {
    if (!(k > 0)) throw UsageError("--k must be positive");
    auto loaded = load_input(in, logger);
    const auto outliers = detect_outliers(loaded.log, k);
    if (json_out.requested()) {
      emit_json(json_out, outliers_json(outliers), out);
      return kExitOk;
    }
    for (const auto& o : outliers) {
      out << fmt::format("{:<16}{:<20}{:>12.3f} ms  (median {:.3f} ms)\n", o.sub, o.cb,
                         ms(o.duration), o.median / 1e6);
    }
    return kExitOk;
  }
};

// --- simulate -------------------------------------------------------------

struct SimulateCmd {
  std::string config;
  std::string out_dir;

  int run(std::ostream& out, spdlog::logger& logger) const {
    const auto cfg = sim::load_config(config);
    const auto result = sim::simulate(cfg);
    sim::write_result(result, out_dir);
    logger.info("{} matches, {} drops", result.truth.matches.size(), result.truth.drops.size());
    out << fmt::format("wrote {} events from {} host(s) to {}\n", result.log.events.size(),
                       result.log.hosts.size(), out_dir);
    return kExitOk;
  }
};

// --- render ---------------------------------------------------------------

struct RenderCmd {
  InputOptions in;
  std::string message;
  std::string window;
  bool threads = false;
  std::string output;

  int run(std::ostream& out, spdlog::logger& logger) const {
    std::optional<std::pair<Timestamp, Timestamp>> bounds;
    if (!window.empty()) bounds = parse_window(window);
    std::optional<MessageKey> root;
    if (!message.empty()) root = parse_key_arg(message);

    auto loaded = load_input(in, logger);
    std::string svg;
    if (threads) {
      svg = render_thread_view(loaded.log);
    } else {
      auto build = build_graph(loaded.log, logger);
      auto spec = default_timeline_spec(loaded.log);
      if (root) spec.highlight = forward_flow(build.graph, *root);
      if (bounds) {
        spec.window_start = bounds->first;
        spec.window_end = bounds->second;
      }
      svg = render_timeline(loaded.log, build.graph, spec);
    }
    if (output.empty() || output == "-") {
      out << svg;
    } else {
      write_text(output, svg);
    }
    return kExitOk;
  }

  static std::pair<Timestamp, Timestamp> parse_window(const std::string& text) {
    auto colon = text.find(':');
    if (colon == std::string::npos) throw UsageError("--window expects T0:T1 in nanoseconds");
    try {
      std::size_t used0 = 0;
      std::size_t used1 = 0;
      const auto a = std::stoll(text.substr(0, colon), &used0);
      const auto b = std::stoll(text.substr(colon + 1), &used1);
      if (used0 != colon || used1 != text.size() - colon - 1) throw std::invalid_argument(text);
      return {a, b};
    } catch (const std::logic_error&) {
      throw UsageError("--window expects T0:T1 in nanoseconds");
    }
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto logger = make_logger(err);

  CLI::App app{"Offline trace analysis for distributed publish-subscribe systems", "msgflow"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  ValidateCmd validate_cmd;
  auto* validate = app.add_subcommand("validate", "Check a bundle for invariant violations");
  validate->add_option("bundle", validate_cmd.bundle, "Trace bundle directory")->required();
  validate->add_flag("--strict", validate_cmd.strict,
                     "Also report flow-graph problems (orphan callbacks, bad link keys)");
  add_json_option(validate, validate_cmd.json_out);

  SyncCmd sync_cmd;
  auto* sync = app.add_subcommand("sync", "Estimate per-host clock corrections");
  sync->add_option("bundle", sync_cmd.bundle, "Trace bundle directory")->required();
  sync->add_option("--reference", sync_cmd.reference, "Reference host");
  sync->add_option("--out", sync_cmd.out_path, "Write corrections JSON to FILE");
  add_json_option(sync, sync_cmd.json_out);

  GraphCmd graph_cmd;
  auto* graph = app.add_subcommand("graph", "Build the flow graph and summarise it");
  add_input_options(graph, graph_cmd.in);
  graph->add_flag("--dot", graph_cmd.dot, "Print the graph in Graphviz DOT");
  add_json_option(graph, graph_cmd.json_out);

  FlowCmd flow_cmd;
  auto* flow = app.add_subcommand("flow", "Extract the message flow of one message");
  add_input_options(flow, flow_cmd.in);
  flow->add_option("--message", flow_cmd.message, "Root message PUB:SEQ")->required();
  flow->add_option("--direction", flow_cmd.direction, "fwd or bwd")
      ->check(CLI::IsMember({"fwd", "bwd"}));
  flow->add_flag("--critical-path", flow_cmd.critical, "Print the critical path");
  flow->add_flag("--breakdown", flow_cmd.show_breakdown, "Print the time breakdown");
  flow->add_option("--group", flow_cmd.groups, "Map a segment label to a report row")
      ->type_name("LABEL=ROW");
  add_json_option(flow, flow_cmd.json_out);

  DropsCmd drops_cmd;
  auto* drops = app.add_subcommand("drops", "Count dropped messages per subscription");
  add_input_options(drops, drops_cmd.in);
  drops->add_option("--tail-window", drops_cmd.tail_window_ms,
                    "Publishes this close to the trace end (ms) count as in flight");
  add_json_option(drops, drops_cmd.json_out);

  StatsCmd stats_cmd;
  auto* stats = app.add_subcommand("stats", "Transport latency statistics");
  add_input_options(stats, stats_cmd.in);
  stats->add_option("--topic", stats_cmd.topic, "Only this topic");
  stats->add_option("--node", stats_cmd.node, "Only pairs touching this node id");
  add_json_option(stats, stats_cmd.json_out);

  ThreadsCmd threads_cmd;
  auto* threads = app.add_subcommand("threads", "Active and idle time per thread");
  add_input_options(threads, threads_cmd.in);
  add_json_option(threads, threads_cmd.json_out);

  OutliersCmd outliers_cmd;
  auto* outliers = app.add_subcommand("outliers", "Callbacks much slower than their median");
  add_input_options(outliers, outliers_cmd.in);
  outliers->add_option("--k", outliers_cmd.k, "Factor over the median");
  add_json_option(outliers, outliers_cmd.json_out);

  SimulateCmd simulate_cmd;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic bundle and truth file");
  simulate->add_option("--config", simulate_cmd.config, "Simulation config JSON")->required();
  simulate->add_option("--out", simulate_cmd.out_dir, "Output directory")->required();

  RenderCmd render_cmd;
  auto* render = app.add_subcommand("render", "Render a timeline or thread view as SVG");
  add_input_options(render, render_cmd.in);
  render->add_option("--message", render_cmd.message, "Highlight the flow of PUB:SEQ");
  render->add_option("--window", render_cmd.window, "Time window T0:T1 (ns)");
  render->add_flag("--threads", render_cmd.threads, "Render thread states instead");
  render->add_option("-o,--output", render_cmd.output, "Output file (default stdout)");

  if (!args.empty() && !args.front().empty() && args.front().front() != '-') {
    const auto subs = app.get_subcommands([&](CLI::App* sub) { return sub->get_name() == args.front(); });
    if (subs.empty()) {
      err << "msgflow: unknown subcommand '" << args.front() << "'\n\n" << app.help();
      return kExitUsage;
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "msgflow: " << e.what() << "\n\n";
    const auto selected = app.get_subcommands();
    err << (selected.empty() ? app.help() : selected.front()->help());
    return kExitUsage;
  }

  try {
    if (validate->parsed()) return validate_cmd.run(out, *logger);
    if (sync->parsed()) return sync_cmd.run(out, *logger);
    if (graph->parsed()) return graph_cmd.run(out, *logger);
    if (flow->parsed()) return flow_cmd.run(out, *logger);
    if (drops->parsed()) return drops_cmd.run(out, *logger);
    if (stats->parsed()) return stats_cmd.run(out, *logger);
    if (threads->parsed()) return threads_cmd.run(out, *logger);
    if (outliers->parsed()) return outliers_cmd.run(out, *logger);
    if (simulate->parsed()) return simulate_cmd.run(out, *logger);
    if (render->parsed()) return render_cmd.run(out, *logger);
  } catch (const UsageError& e) {
    err << "msgflow: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "msgflow: " << e.what() << '\n';
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace msgflow::cli
