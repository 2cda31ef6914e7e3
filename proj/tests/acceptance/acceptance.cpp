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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "msgflow/analysis.hpp"
#include "msgflow/causality.hpp"
#include "msgflow/clock_sync.hpp"
#include "msgflow/diagnostics.hpp"
#include "msgflow/ingest.hpp"
#include "msgflow/render.hpp"
#include "msgflow/simulator.hpp"
#include "oracles.hpp"
#include "random_config.hpp"
#include "temp_dir.hpp"

namespace {

using namespace msgflow;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr Duration kMs = kNanosPerMilli;

std::string config_path(const char* name) { return std::string(MSGFLOW_CONFIG_DIR) + "/" + name; }

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Corrected log when the hosts can be synced, otherwise the raw one.
EventLog corrected(const EventLog& log) {
  if (log.hosts.size() < 2) return log;
  return apply_corrections(log, estimate_corrections(log));
}

Verdict table_breakdown() {
  const auto start = Clock::now();
  testing::TempDir dir;
  const auto bundle = (dir / "table1").string();
  std::ostringstream out;
  std::ostringstream err;
  if (cli::run({"simulate", "--config", config_path("table1.json"), "--out", bundle}, out, err) != 0) {
    return {false, "simulate failed: " + err.str()};
  }
  out.str("");
  if (cli::run({"flow", bundle, "--message", "P1:2", "--critical-path", "--breakdown", "--json"},
               out, err) != 0) {
    return {false, "flow failed: " + err.str()};
  }
  const auto doc = json::parse(out.str());
  const double total = doc.at("total_ms").get<double>();
  const std::vector<std::pair<std::string, double>> want = {
      {"RTAB-Map", 191.0}, {"Visual Odometry", 81.4}, {kTransportRow, 24.7}, {"Visualization", 0.3}};
  bool ok = std::fabs(total - 297.4) <= 0.05 && doc.at("rows").size() == want.size();
  std::string rows;
  for (std::size_t i = 0; ok && i < want.size(); ++i) {
    const auto& r = doc["rows"][i];
    const double ms = r.at("time_ms").get<double>();
    const double pct = r.at("percent").get<double>();
    const double want_pct = std::round(1000.0 * want[i].second / 297.4) / 10.0;
    ok = ok && r.at("label") == want[i].first && std::fabs(ms - want[i].second) <= 0.05 &&
         std::fabs(pct - want_pct) <= 0.1;
    rows += fmt::format(" {:.1f}/{:.1f}%", ms, pct);
  }
  const double secs = seconds_since(start);
  ok = ok && secs < 10.0;
  return {ok, fmt::format("total {:.3f} ms, rows{} ({:.2f} s)", total, rows, secs)};
}

Verdict flow_reconstruction() {
  const auto start = Clock::now();
  std::size_t exact = 0;
  std::size_t facts = 0;
  std::size_t unsynced = 0;
  std::string first_miss;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto w = testing::random_workload(seed, 2000, {8, 3, true});
    // Matches, causal edges and drops come from ids and per-thread order,
    // which a clock correction cannot change; hosts with too little
    // cross-host traffic to sync are analysed on their raw clocks.
    EventLog log;
    try {
      log = corrected(w.result.log);
    } catch (const SyncError&) {
      log = w.result.log;
      ++unsynced;
    }
    const auto build = build_flow_graph(log);
    const auto got = testing::facts_from_analysis(build.graph, detect_drops(build.graph, log.topology, 0));
    const auto want = testing::facts_from_truth(w.result.truth);
    facts += want.transport.size() + want.causal.size() + want.drops.size();
    if (got.transport == want.transport && got.causal == want.causal && got.drops == want.drops) {
      ++exact;
    } else if (first_miss.empty()) {
      first_miss = fmt::format(", first mismatch seed {}", seed);
    }
  }
  const double secs = seconds_since(start);
  return {exact == 20 && secs < 60.0,
          fmt::format("{}/20 configs exact over {} facts, {} without sync{} ({:.2f} s)", exact,
                      facts, unsynced, first_miss, secs)};
}

Verdict critical_path_oracle() {
  std::size_t checked = 0;
  std::size_t agreed = 0;
  std::size_t skipped = 0;
  std::string first_miss;
  for (std::uint64_t seed = 100; checked < 200 && seed < 400; ++seed) {
    auto w = testing::random_workload(seed, 800, {8, 1, false});
    const auto& log = w.result.log;
    const auto g = build_flow_graph(log).graph;
    std::vector<std::size_t> sources;
    for (std::size_t m = 0; m < g.messages().size(); ++m) {
      if (g.causal_in(m).empty()) sources.push_back(m);
    }
    std::mt19937_64 rng(seed);
    std::shuffle(sources.begin(), sources.end(), rng);
    for (std::size_t i = 0; i < sources.size() && i < 5 && checked < 200; ++i) {
      const auto m = sources[i];
      const auto flow = forward_flow(g, g.messages()[m].key);
      const auto src = VertexRef::message(m);
      const auto brute = testing::enumerate_paths(g, flow, src, 10'000);
      if (!brute.complete) {
        ++skipped;
        continue;
      }
      ++checked;
      const auto path = critical_path(g, log.topology, flow);
      std::string why;
      if (path.total == brute.longest && testing::is_flow_chain(g, flow, path, src, &why)) {
        ++agreed;
      } else if (first_miss.empty()) {
        first_miss = fmt::format(", first mismatch {} ({} vs {}{})", to_string(g.messages()[m].key),
                                 path.total, brute.longest, why.empty() ? "" : ": " + why);
      }
    }
  }
  return {checked == 200 && agreed == checked,
          fmt::format("{}/{} flows agree with exhaustive search, {} over the path limit skipped{}",
                      agreed, checked, skipped, first_miss)};
}

Verdict clock_sync() {
  const auto config = sim::load_config(config_path("clock_sync.json"));
  const auto result = sim::simulate(config);
  const auto corrections = estimate_corrections(result.log);
  const ClockCorrection* c = nullptr;
  for (const auto& x : corrections) {
    if (x.method != SyncMethod::kReference) c = &x;
  }
  if (!c) return {false, "no non-reference host"};
  const auto& clock = result.truth.clocks.at(c->host);

  // Worst disagreement between the corrected clock and true time over the
  // host's span (the reference clock is ideal).
  Timestamp origin = -1;
  Timestamp last = 0;
  for (const auto& e : result.log.events) {
    if (e.host != c->host) continue;
    if (origin < 0) origin = e.t;
    last = e.t;
  }
  double worst = 0;
  for (int i = 0; i <= 1000; ++i) {
    const Timestamp local = origin + (last - origin) * i / 1000;
    const double truth =
        static_cast<double>(local - clock.offset_ns) / (1.0 + clock.drift_ppm * 1e-6);
    worst = std::max(worst, std::fabs(static_cast<double>(c->apply(local, origin)) - truth));
  }
  const double want_ppm = (1.0 / (1.0 + clock.drift_ppm * 1e-6) - 1.0) * 1e6;
  const double drift_error = std::fabs(c->drift_ppm() - want_ppm);

  std::size_t negative = 0;
  for (const auto& e : match_transport(apply_corrections(result.log, corrections)).edges) {
    negative += e.latency < 0;
  }
  return {negative == 0 && worst <= 1e6 && drift_error <= 10.0,
          fmt::format("{} negative latencies, offset error {:.3f} ms, drift {:.2f} ppm "
                      "(error {:.2f} ppm) over {:.0f} s",
                      negative, worst / 1e6, c->drift_ppm(), drift_error,
                      static_cast<double>(last - origin) / 1e9)};
}

Verdict congestion() {
  const auto result = sim::simulate(sim::load_config(config_path("slam_split.json")));
  const auto corrections = estimate_corrections(result.log);
  double bound = 0;
  for (const auto& c : corrections) bound = std::max(bound, c.bound_ns);
  const auto log = apply_corrections(result.log, corrections);
  const auto build = build_flow_graph(log);

  const auto drops = detect_drops(build.graph, log.topology, 0);
  const bool drops_exact = drops.total_drops() == result.truth.drops.size();

  // Cross-host image path from the camera to SLAM.
  Duration truth_max = 0;
  std::string pub;
  for (const auto& m : result.truth.matches) {
    if (m.sub == "slam_cam" && m.latency > truth_max) {
      truth_max = m.latency;
      pub = m.msg.pub;
    }
  }
  Duration measured_max = -1;
  for (const auto& s : latency_stats(build.graph)) {
    if (s.sub == "slam_cam" && s.pub == pub) measured_max = s.max;
  }
  const double tolerance = std::max(bound, 1.0);
  const double diff = std::fabs(static_cast<double>(measured_max - truth_max));
  return {drops_exact && measured_max >= 0 && diff <= tolerance,
          fmt::format("max latency {:.3f} ms vs truth {:.3f} ms (tolerance {:.3f} ms); drops {} vs "
                      "truth {}",
                      static_cast<double>(measured_max) / 1e6, static_cast<double>(truth_max) / 1e6,
                      tolerance / 1e6, drops.total_drops(), result.truth.drops.size())};
}

Verdict bidirectionality() {
  std::size_t pairs = 0;
  std::size_t connected = 0;
  std::size_t agree = 0;
  for (std::uint64_t seed = 500; pairs < 1000; ++seed) {
    auto w = testing::random_workload(seed, 800);
    const auto g = build_flow_graph(corrected(w.result.log)).graph;
    const auto n = g.messages().size();
    if (n == 0) continue;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (int i = 0; i < 100 && pairs < 1000; ++i, ++pairs) {
      const auto a = pick(rng);
      const auto fwd = forward_flow(g, g.messages()[a].key);
      // Half the pairs come from inside the forward flow so both outcomes occur.
      auto b = pick(rng);
      if (i % 2 == 0) {
        b = fwd.messages[std::uniform_int_distribution<std::size_t>(0, fwd.messages.size() - 1)(rng)];
      }
      const auto bwd = backward_flow(g, g.messages()[b].key);
      const bool forward_has = fwd.contains_message(b);
      connected += forward_has;
      agree += forward_has == bwd.contains_message(a);
    }
  }
  return {agree == pairs, fmt::format("{}/{} pairs consistent ({} connected)", agree, pairs, connected)};
}

Verdict render_determinism() {
  const auto result = sim::simulate(sim::load_config(config_path("slam_onboard.json")));
  const auto g = build_flow_graph(result.log).graph;
  auto spec = default_timeline_spec(result.log);
  spec.window_start = result.log.first_time() + 3 * kNanosPerSecond;
  spec.window_end = spec.window_start + 2 * kNanosPerSecond;
  for (std::uint64_t seq = 30; seq < 50 && !spec.highlight; ++seq) {
    auto flow = forward_flow(g, {"cam", seq});
    for (auto c : flow.callbacks) {
      if (g.callbacks()[c].node == "viz") spec.highlight = flow;
    }
  }
  const auto first = render_timeline(result.log, g, spec);
  const auto second = render_timeline(result.log, build_flow_graph(result.log).graph, spec);

  const std::regex rect(R"(<rect class="cb[ "])");
  const auto rects = static_cast<std::size_t>(
      std::distance(std::sregex_iterator(first.begin(), first.end(), rect), std::sregex_iterator()));
  std::size_t completed = 0;
  for (const auto& c : g.callbacks()) {
    if (c.end_t && c.start_t <= spec.window_end && *c.end_t >= spec.window_start) ++completed;
  }
  return {first == second && rects == completed && spec.highlight.has_value(),
          fmt::format("{} bytes, identical: {}, {} rectangles for {} completed callbacks",
                      first.size(), first == second ? "yes" : "no", rects, completed)};
}

// Two hosts, a 1 ms camera fanned out to three consumers plus one relay.
sim::SimConfig large_workload() {
  sim::SimConfig c;
  c.duration = 100 * kNanosPerSecond;
  c.hosts = {{"alpha", 0, 0.0}, {"beta", 0, 0.0}};
  c.nodes = {{"cam", "Camera", "alpha", 0, 1},
             {"fast", "Fast", "alpha", 0, 1},
             {"relay", "Relay", "alpha", 0, 1},
             {"remote", "Remote", "beta", 0, 1},
             {"sink", "Sink", "beta", 0, 1}};
  c.publishers = {{"img", "cam", "/img", kMs, 0, 0}, {"fwd", "relay", "/fwd", std::nullopt, 0, 0}};
  auto sub = [](const char* id, const char* node, const char* topic, std::vector<EntityId> outputs) {
    sim::Subscription s;
    s.id = id;
    s.node = node;
    s.topic = topic;
    s.processing = sim::Distribution::uniform(50'000, 150'000);
    s.outputs = std::move(outputs);
    return s;
  };
  c.subscriptions = {sub("fast_img", "fast", "/img", {}), sub("relay_img", "relay", "/img", {"fwd"}),
                     sub("remote_img", "remote", "/img", {}), sub("sink_fwd", "sink", "/fwd", {})};
  return c;
}

Verdict ingest_performance() {
  testing::TempDir dir;
  const auto result = sim::simulate(large_workload());
  write_bundle(result.log, dir.path());
  const auto events = result.log.events.size();
  const auto start = Clock::now();
  const auto loaded = load_bundle(dir.path());
  const double load_secs = seconds_since(start);
  const auto build = build_flow_graph(loaded.log);
  const double secs = seconds_since(start);
  return {events >= 1'000'000 && loaded.log.events.size() == events && secs < 30.0,
          fmt::format("{} events: load {:.2f} s, load + graph {:.2f} s ({} transport, {} causal edges)",
                      events, load_secs, secs, build.graph.transport_edges().size(),
                      build.graph.causal_edges().size())};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"table-breakdown", table_breakdown},
      {"flow-reconstruction", flow_reconstruction},
      {"critical-path-oracle", critical_path_oracle},
      {"clock-sync", clock_sync},
      {"congestion", congestion},
      {"bidirectionality", bidirectionality},
      {"render-determinism", render_determinism},
      {"ingest-performance", ingest_performance},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    fmt::print("{} {}: {}\n", v.pass ? "PASS" : "FAIL", name, v.detail);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
