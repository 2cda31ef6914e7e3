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

#ifndef MSGFLOW_SIMULATOR_HPP_
#define MSGFLOW_SIMULATOR_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msgflow/causality.hpp"
#include "msgflow/ingest.hpp"
#include "msgflow/trace_model.hpp"

namespace msgflow::sim {

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Inclusive integer-nanosecond range; lo == hi is a constant.
struct Distribution {
  Duration lo = 0;
  Duration hi = 0;

  static Distribution constant(Duration value) { return {value, value}; }
  static Distribution uniform(Duration lo, Duration hi) { return {lo, hi}; }
  bool is_constant() const { return lo == hi; }
  Duration sample(std::mt19937_64& rng) const;
};

struct HostClock {
  std::string name;
  Duration offset_ns = 0;
  double drift_ppm = 0.0;

  // Local reading at true time t.
  Timestamp local(Timestamp t) const;
};

struct Node {
  EntityId id;
  std::string name;
  std::string host;
  std::int64_t pid = 0;  // 0 = assigned automatically
  int executor_threads = 1;
};

struct Publisher {
  EntityId id;
  EntityId node;
  std::string topic;
  // Periodic publishers fire from their own driver thread; others publish
  // only as callback outputs.
  std::optional<Duration> period;
  Duration jitter = 0;
  Duration phase = 0;
};

enum class CausalMode {
  kAutomatic,  // outputs published inside the callback
  kAnnotated,  // as automatic, plus a link record per output
  kHandoff,    // outputs published after the callback on another thread, with a link record
};

std::string_view to_string(CausalMode mode);

struct Subscription {
  EntityId id;
  EntityId node;
  std::string topic;
  std::uint32_t queue_depth = 10;
  Distribution processing = Distribution::constant(kNanosPerMilli);
  std::vector<EntityId> outputs;
  // Fraction of the callback duration at which outputs are published.
  double publish_at = 1.0;
  CausalMode mode = CausalMode::kAutomatic;
  Duration handoff_delay = 0;
  // Other subscriptions of the same node whose latest input is also named
  // in link records (annotated and handoff modes).
  std::vector<EntityId> link_inputs;
  // Overrides the host-pair delay for deliveries to this subscription.
  std::optional<Distribution> transport;
};

struct LinkDelay {
  std::string from;
  std::string to;
  Distribution delay;
};

enum class DropPolicy {
  kOldest,  // a full queue discards its oldest entry (keep-last)
  kNewest,  // a full queue rejects the arrival
};

struct SimConfig {
  std::vector<HostClock> hosts;
  std::vector<Node> nodes;
  std::vector<Publisher> publishers;
  std::vector<Subscription> subscriptions;
  std::vector<LinkDelay> links;
  Distribution local_delay = Distribution::constant(100'000);
  Distribution remote_delay = Distribution::constant(kNanosPerMilli);
  DropPolicy drop_policy = DropPolicy::kOldest;
  Duration duration = 10 * kNanosPerSecond;
  Timestamp start_time = kNanosPerSecond;
  std::uint64_t seed = 1;
};

// Checks every field; throws ConfigError.
void validate_config(const SimConfig& config);

// Parses the JSON document described in docs/sim_config.md.
SimConfig parse_config(const nlohmann::json& doc);
SimConfig load_config(const std::filesystem::path& path);

struct TruthMatch {
  MessageKey msg;
  EntityId sub;
  EntityId cb;
  Duration latency = 0;  // true time
};

struct TruthCausalEdge {
  EntityId sub;
  EntityId cb;
  MessageKey out;
  CausalOrigin origin = CausalOrigin::kAutomatic;
};

struct TruthDrop {
  MessageKey msg;
  EntityId sub;
  Timestamp publish_t = 0;  // true time
};

struct TruthClock {
  Duration offset_ns = 0;
  double drift_ppm = 0.0;
};

struct TruthEndToEnd {
  MessageKey root;
  Duration total = 0;
};

struct TruthThread {
  std::string host;
  std::int64_t pid = 0;
  std::int64_t tid = 0;
  EntityId node;
  Duration busy = 0;
};

struct GroundTruth {
  std::vector<TruthMatch> matches;
  std::vector<TruthCausalEdge> causal_edges;
  std::vector<TruthDrop> drops;
  std::map<std::string, TruthClock> clocks;
  std::vector<TruthEndToEnd> e2e;
  std::vector<TruthThread> threads;
  // Messages still queued or in transit at the end; the simulator drains, so
  // this stays empty unless the run is cut short.
  std::vector<TruthDrop> in_flight;
};

nlohmann::json to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const nlohmann::json& doc);

struct SimResult {
  EventLog log;
  GroundTruth truth;
};

// Runs the workload to completion: periodic publishers stop at
// start_time + duration, then queues drain. Deterministic in (config, seed).
SimResult simulate(const SimConfig& config);

// Writes `<dir>/<host>.jsonl` for every host plus `<dir>/truth.json`.
void write_result(const SimResult& result, const std::filesystem::path& dir);
GroundTruth load_truth(const std::filesystem::path& path);

}  // namespace msgflow::sim

#endif  // MSGFLOW_SIMULATOR_HPP_
