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

#ifndef MSGFLOW_DIAGNOSTICS_HPP_
#define MSGFLOW_DIAGNOSTICS_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msgflow/causality.hpp"
#include "msgflow/ingest.hpp"

namespace msgflow {

struct SubscriptionDrops {
  EntityId sub;
  EntityId node;
  std::string topic;
  std::size_t publish_count = 0;
  std::size_t matched_count = 0;
  std::size_t drop_count = 0;
  std::size_t in_flight_count = 0;
  std::vector<MessageKey> dropped;

  double drop_rate() const {
    return publish_count == 0 ? 0.0
                              : static_cast<double>(drop_count) /
                                    static_cast<double>(publish_count);
  }
};

struct DropReport {
  std::vector<SubscriptionDrops> subscriptions;  // topology order
  Duration tail_window = 0;

  std::size_t total_drops() const;
};

inline constexpr Duration kDefaultTailWindow = kNanosPerSecond;

// A same-topic publish with no transport edge to a subscription is a drop,
// unless it was published within `tail_window` of the trace end, in which
// case it is counted as in flight.
DropReport detect_drops(const FlowGraph& graph, const Topology& topology,
                        Duration tail_window = kDefaultTailWindow);

struct LatencyStats {
  EntityId pub;
  EntityId sub;
  std::string topic;
  EntityId pub_node;
  EntityId sub_node;
  std::size_t count = 0;
  Duration min = 0;
  Duration max = 0;
  double mean = 0.0;
  Duration p50 = 0;
  Duration p95 = 0;
  Duration p99 = 0;
};

struct LatencyFilter {
  std::optional<std::string> topic;
  // Matches either endpoint's node.
  std::optional<EntityId> node;
};

// Nearest-rank percentile of an ascending sample: the value at rank
// ceil(p/100 * n), 1-based.
Duration nearest_rank(const std::vector<Duration>& sorted, double p);

// One entry per (publisher, subscription) pair with at least one matched
// transport edge, ordered by publisher then subscription id.
std::vector<LatencyStats> latency_stats(const FlowGraph& graph, const LatencyFilter& filter = {});

struct Outlier {
  std::size_t callback = 0;
  EntityId sub;
  EntityId cb;
  Duration duration = 0;
  double median = 0.0;
};

inline constexpr double kDefaultOutlierFactor = 5.0;
inline constexpr std::size_t kMinOutlierSamples = 5;

// Completed callbacks longer than k times their subscription's median
// duration. Subscriptions with fewer than five completed callbacks are
// skipped.
std::vector<Outlier> detect_outliers(const EventLog& log, double k = kDefaultOutlierFactor);

enum class ThreadState { kActive, kIdle };

std::string_view to_string(ThreadState state);

struct ThreadInterval {
  Timestamp start_t = 0;
  Timestamp end_t = 0;
  ThreadState state = ThreadState::kIdle;

  friend bool operator==(const ThreadInterval&, const ThreadInterval&) = default;
};

struct ThreadTimeline {
  std::string host;
  std::int64_t pid = 0;
  std::int64_t tid = 0;
  // Node whose node_init was recorded on this process, if any.
  std::string node_label;
  Timestamp span_start = 0;
  Timestamp span_end = 0;
  std::vector<ThreadInterval> intervals;
  std::vector<std::string> notes;

  Duration active_time() const;
  double active_fraction() const;
};

// Active = inside any callback on the thread; idle = the rest of the span
// between the thread's first and last recorded event. Overlapping callbacks
// merge into one active interval and leave a note.
std::vector<ThreadTimeline> thread_states(const EventLog& log);

}  // namespace msgflow

#endif  // MSGFLOW_DIAGNOSTICS_HPP_
