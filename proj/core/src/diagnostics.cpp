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

#include "msgflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>
#include <unordered_set>

#include <fmt/format.h>

namespace msgflow {

std::size_t DropReport::total_drops() const {
  std::size_t n = 0;
  for (const auto& s : subscriptions) n += s.drop_count;
  return n;
}

DropReport detect_drops(const FlowGraph& graph, const Topology& topology, Duration tail_window) {
  DropReport report;
  report.tail_window = tail_window;
  const Timestamp cutoff = graph.trace_end() - tail_window;

  std::map<std::string_view, std::vector<std::size_t>> by_topic;
  for (std::size_t m = 0; m < graph.messages().size(); ++m) {
    by_topic[graph.messages()[m].topic].push_back(m);
  }
  std::map<std::string_view, std::unordered_set<std::size_t>> received;
  for (const auto& edge : graph.transport_edges()) {
    received[graph.callbacks()[edge.callback].sub].insert(edge.message);
  }

  for (const auto& sub : topology.subscriptions) {
    SubscriptionDrops entry;
    entry.sub = sub.id;
    entry.node = sub.node;
    entry.topic = sub.topic;
    auto topic = by_topic.find(sub.topic);
    if (topic != by_topic.end()) {
      const auto& got = received[sub.id];
      for (auto m : topic->second) {
        ++entry.publish_count;
        if (got.count(m)) {
          ++entry.matched_count;
        } else if (graph.messages()[m].publish_t > cutoff) {
          ++entry.in_flight_count;
        } else {
          ++entry.drop_count;
          entry.dropped.push_back(graph.messages()[m].key);
        }
      }
    }
    report.subscriptions.push_back(std::move(entry));
  }
  return report;
}

Duration nearest_rank(const std::vector<Duration>& sorted, double p) {
  if (sorted.empty()) return 0;
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(sorted.size())));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

std::vector<LatencyStats> latency_stats(const FlowGraph& graph, const LatencyFilter& filter) {
  std::map<std::pair<std::string, std::string>, std::vector<Duration>> samples;
  std::map<std::pair<std::string, std::string>, LatencyStats> meta;
  for (const auto& edge : graph.transport_edges()) {
    const auto& m = graph.messages()[edge.message];
    const auto& c = graph.callbacks()[edge.callback];
    if (filter.topic && m.topic != *filter.topic) continue;
    if (filter.node && m.node != *filter.node && c.node != *filter.node) continue;
    std::pair<std::string, std::string> key{m.key.pub, c.sub};
    samples[key].push_back(edge.latency);
    meta.try_emplace(key, LatencyStats{m.key.pub, c.sub, m.topic, m.node, c.node});
  }

  std::vector<LatencyStats> out;
  for (auto& [key, values] : samples) {
    std::sort(values.begin(), values.end());
    auto stats = meta.at(key);
    stats.count = values.size();
    stats.min = values.front();
    stats.max = values.back();
    long double sum = 0;
    for (auto v : values) sum += static_cast<long double>(v);
    stats.mean = static_cast<double>(sum / static_cast<long double>(values.size()));
    stats.p50 = nearest_rank(values, 50);
    stats.p95 = nearest_rank(values, 95);
    stats.p99 = nearest_rank(values, 99);
    out.push_back(std::move(stats));
  }
  return out;
}

std::vector<Outlier> detect_outliers(const EventLog& log, double k) {
  auto instances = collect_instances(log);
  std::map<std::string, std::vector<std::size_t>> by_sub;
  for (std::size_t c = 0; c < instances.callbacks.size(); ++c) {
    if (instances.callbacks[c].completed()) by_sub[instances.callbacks[c].sub].push_back(c);
  }

  std::vector<Outlier> out;
  for (const auto& [sub, list] : by_sub) {
    if (list.size() < kMinOutlierSamples) continue;
    std::vector<Duration> durations;
    durations.reserve(list.size());
    for (auto c : list) {
      const auto& cb = instances.callbacks[c];
      durations.push_back(*cb.end_t - cb.start_t);
    }
    auto sorted = durations;
    std::sort(sorted.begin(), sorted.end());
    const auto n = sorted.size();
    const double median =
        n % 2 == 1 ? static_cast<double>(sorted[n / 2])
                   : (static_cast<double>(sorted[n / 2 - 1]) + static_cast<double>(sorted[n / 2])) /
                         2.0;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (static_cast<double>(durations[i]) > k * median) {
        const auto& cb = instances.callbacks[list[i]];
        out.push_back(Outlier{list[i], cb.sub, cb.id, durations[i], median});
      }
    }
  }
  std::sort(out.begin(), out.end(),
            [](const Outlier& a, const Outlier& b) { return a.callback < b.callback; });
  return out;
}

std::string_view to_string(ThreadState state) {
  return state == ThreadState::kActive ? "active" : "idle";
}

Duration ThreadTimeline::active_time() const {
  Duration total = 0;
  for (const auto& i : intervals) {
    if (i.state == ThreadState::kActive) total += i.end_t - i.start_t;
  }
  return total;
}

double ThreadTimeline::active_fraction() const {
  const auto span = span_end - span_start;
  if (span <= 0) return 0.0;
  return static_cast<double>(active_time()) / static_cast<double>(span);
}

std::vector<ThreadTimeline> thread_states(const EventLog& log) {
  using Key = std::tuple<std::string, std::int64_t, std::int64_t>;
  struct Work {
    Timestamp first = 0;
    Timestamp last = 0;
    std::vector<std::pair<Timestamp, std::optional<Timestamp>>> busy;
  };
  std::map<Key, Work> threads;
  std::map<std::pair<std::string_view, std::string_view>, std::pair<Key, std::size_t>> open;

  for (const auto& event : log.events) {
    Key key{event.host, event.pid, event.tid};
    auto [it, inserted] = threads.try_emplace(key);
    auto& work = it->second;
    if (inserted) work.first = event.t;
    work.last = event.t;
    if (const auto* cb = event.as<CallbackStart>()) {
      open.try_emplace({cb->sub, cb->cb}, key, work.busy.size());
      work.busy.emplace_back(event.t, std::nullopt);
    } else if (const auto* cb = event.as<CallbackEnd>()) {
      auto o = open.find({cb->sub, cb->cb});
      if (o != open.end() && o->second.first == key) {
        auto& interval = work.busy[o->second.second];
        if (!interval.second) interval.second = std::max(event.t, interval.first);
      }
    }
  }

  std::vector<ThreadTimeline> out;
  for (auto& [key, work] : threads) {
    ThreadTimeline timeline;
    std::tie(timeline.host, timeline.pid, timeline.tid) = key;
    for (const auto& node : log.topology.nodes) {
      if (node.host == timeline.host && node.pid == timeline.pid) {
        timeline.node_label = node.name.empty() ? node.id : node.name;
        if (node.tid == timeline.tid) break;
      }
    }
    timeline.span_start = work.first;
    timeline.span_end = work.last;

    std::vector<std::pair<Timestamp, Timestamp>> busy;
    for (const auto& [start, end] : work.busy) {
      if (!end) {
        timeline.notes.push_back(
            fmt::format("callback starting at {} never ends; active until trace end", start));
      }
      busy.emplace_back(start, end.value_or(work.last));
    }
    std::sort(busy.begin(), busy.end());

    std::vector<std::pair<Timestamp, Timestamp>> merged;
    for (const auto& [start, end] : busy) {
      if (!merged.empty() && start <= merged.back().second) {
        if (start < merged.back().second) {
          timeline.notes.push_back(
              fmt::format("nested or overlapping callbacks at {}; merged", start));
        }
        merged.back().second = std::max(merged.back().second, end);
      } else {
        merged.emplace_back(start, end);
      }
    }

    Timestamp cursor = work.first;
    for (const auto& [start, end] : merged) {
      if (start > cursor) timeline.intervals.push_back({cursor, start, ThreadState::kIdle});
      if (end > start) timeline.intervals.push_back({start, end, ThreadState::kActive});
      cursor = std::max(cursor, end);
    }
    if (work.last > cursor) timeline.intervals.push_back({cursor, work.last, ThreadState::kIdle});
    out.push_back(std::move(timeline));
  }
  return out;
}

}  // namespace msgflow
