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

#include "msgflow/analysis.hpp"

#include <algorithm>
#include <deque>
#include <optional>
#include <set>

#include <fmt/format.h>

namespace msgflow {
namespace {

std::size_t require_root(const FlowGraph& graph, const MessageKey& root) {
  auto index = graph.find_message(root);
  if (!index) throw AnalysisError(fmt::format("unknown message {}", to_string(root)));
  return *index;
}

template <typename T>
bool sorted_contains(const std::vector<T>& v, const T& x) {
  return std::binary_search(v.begin(), v.end(), x);
}

void finish(MessageFlow& flow, const std::vector<char>& in_msg, const std::vector<char>& in_cb,
            std::set<std::size_t> transport, std::set<std::size_t> causal) {
  for (std::size_t i = 0; i < in_msg.size(); ++i) {
    if (in_msg[i]) flow.messages.push_back(i);
  }
  for (std::size_t i = 0; i < in_cb.size(); ++i) {
    if (in_cb[i]) flow.callbacks.push_back(i);
  }
  flow.transport_edges.assign(transport.begin(), transport.end());
  flow.causal_edges.assign(causal.begin(), causal.end());
}

// Best way to reach a vertex from the source: fewest segments, then
// smallest label sequence.
struct Route {
  std::size_t segments = 0;
  std::vector<std::string> labels;
  std::optional<VertexRef> prev;
  bool reached = false;
};

bool better(std::size_t count_a, const std::vector<std::string>& labels_a, std::size_t count_b,
            const std::vector<std::string>& labels_b) {
  if (count_a != count_b) return count_a < count_b;
  return labels_a < labels_b;
}

}  // namespace

std::string_view to_string(FlowDirection direction) {
  return direction == FlowDirection::kForward ? "forward" : "backward";
}

std::string_view to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::kProcessing: return "processing";
    case SegmentKind::kTransport: return "transport";
    case SegmentKind::kWait: return "wait";
  }
  return "segment";
}

bool MessageFlow::contains_message(std::size_t i) const { return sorted_contains(messages, i); }
bool MessageFlow::contains_callback(std::size_t i) const { return sorted_contains(callbacks, i); }

MessageFlow forward_flow(const FlowGraph& graph, const MessageKey& root) {
  MessageFlow flow{root, require_root(graph, root), FlowDirection::kForward, {}, {}, {}, {}};
  std::vector<char> in_msg(graph.messages().size(), 0);
  std::vector<char> in_cb(graph.callbacks().size(), 0);
  std::set<std::size_t> transport;
  std::set<std::size_t> causal;
  std::deque<VertexRef> queue{VertexRef::message(flow.root_index)};
  in_msg[flow.root_index] = 1;
  while (!queue.empty()) {
    auto v = queue.front();
    queue.pop_front();
    if (v.is_message()) {
      for (auto e : graph.transport_out(v.index)) {
        transport.insert(e);
        auto c = graph.transport_edges()[e].callback;
        if (!in_cb[c]) {
          in_cb[c] = 1;
          queue.push_back(VertexRef::callback(c));
        }
      }
    } else {
      for (auto e : graph.causal_out(v.index)) {
        causal.insert(e);
        auto m = graph.causal_edges()[e].message;
        if (!in_msg[m]) {
          in_msg[m] = 1;
          queue.push_back(VertexRef::message(m));
        }
      }
    }
  }
  finish(flow, in_msg, in_cb, std::move(transport), std::move(causal));
  return flow;
}

MessageFlow backward_flow(const FlowGraph& graph, const MessageKey& root) {
  MessageFlow flow{root, require_root(graph, root), FlowDirection::kBackward, {}, {}, {}, {}};
  std::vector<char> in_msg(graph.messages().size(), 0);
  std::vector<char> in_cb(graph.callbacks().size(), 0);
  std::set<std::size_t> transport;
  std::set<std::size_t> causal;
  std::deque<VertexRef> queue{VertexRef::message(flow.root_index)};
  in_msg[flow.root_index] = 1;
  while (!queue.empty()) {
    auto v = queue.front();
    queue.pop_front();
    if (v.is_message()) {
      for (auto e : graph.causal_in(v.index)) {
        causal.insert(e);
        auto c = graph.causal_edges()[e].callback;
        if (!in_cb[c]) {
          in_cb[c] = 1;
          queue.push_back(VertexRef::callback(c));
        }
      }
    } else if (auto e = graph.transport_in(v.index)) {
      transport.insert(*e);
      auto m = graph.transport_edges()[*e].message;
      if (!in_msg[m]) {
        in_msg[m] = 1;
        queue.push_back(VertexRef::message(m));
      }
    }
  }
  finish(flow, in_msg, in_cb, std::move(transport), std::move(causal));
  return flow;
}

std::vector<Segment> hop_segments(const FlowGraph& graph, const Topology& topology, VertexRef from,
                                  VertexRef to) {
  if (from.is_message()) {
    const auto& m = graph.messages()[from.index];
    const auto& c = graph.callbacks()[to.index];
    return {Segment{SegmentKind::kTransport, m.topic, m.publish_t, c.start_t}};
  }
  const auto& c = graph.callbacks()[from.index];
  const auto& m = graph.messages()[to.index];
  const auto node = topology.node_label(c.node);
  if (c.end_t && m.publish_t > *c.end_t) {
    return {Segment{SegmentKind::kProcessing, node, c.start_t, *c.end_t},
            Segment{SegmentKind::kWait, "wait@" + node, *c.end_t, m.publish_t}};
  }
  return {Segment{SegmentKind::kProcessing, node, c.start_t, m.publish_t}};
}

std::vector<Segment> sink_segments(const FlowGraph& graph, const Topology& topology,
                                   VertexRef sink) {
  if (sink.is_message()) return {};
  const auto& c = graph.callbacks()[sink.index];
  return {Segment{SegmentKind::kProcessing, topology.node_label(c.node), c.start_t,
                  c.end_t.value_or(c.start_t)}};
}

Timestamp vertex_completion(const FlowGraph& graph, VertexRef v) {
  if (v.is_message()) return graph.messages()[v.index].publish_t;
  const auto& c = graph.callbacks()[v.index];
  return c.end_t.value_or(c.start_t);
}

CriticalPath critical_path(const FlowGraph& graph, const Topology& topology,
                           const MessageFlow& flow) {
  if (flow.messages.empty()) throw AnalysisError("critical path of an empty flow");

  // Adjacency restricted to the flow's edges.
  std::map<VertexRef, std::vector<VertexRef>> succ;
  std::map<VertexRef, std::size_t> indegree;
  for (auto m : flow.messages) indegree[VertexRef::message(m)] = 0;
  for (auto c : flow.callbacks) indegree[VertexRef::callback(c)] = 0;
  for (auto e : flow.transport_edges) {
    const auto& edge = graph.transport_edges()[e];
    succ[VertexRef::message(edge.message)].push_back(VertexRef::callback(edge.callback));
    ++indegree[VertexRef::callback(edge.callback)];
  }
  for (auto e : flow.causal_edges) {
    const auto& edge = graph.causal_edges()[e];
    succ[VertexRef::callback(edge.callback)].push_back(VertexRef::message(edge.message));
    ++indegree[VertexRef::message(edge.message)];
  }

  VertexRef source = VertexRef::message(flow.root_index);
  if (flow.direction == FlowDirection::kBackward) {
    std::optional<std::size_t> earliest;
    for (auto m : flow.messages) {
      if (indegree[VertexRef::message(m)] != 0) continue;
      if (!earliest ||
          graph.messages()[m].publish_t < graph.messages()[*earliest].publish_t) {
        earliest = m;
      }
    }
    if (earliest) source = VertexRef::message(*earliest);
  }

  // Kahn order over the part of the flow reachable from the source.
  std::set<VertexRef> reachable{source};
  std::vector<VertexRef> stack{source};
  while (!stack.empty()) {
    auto v = stack.back();
    stack.pop_back();
    for (auto w : succ[v]) {
      if (reachable.insert(w).second) stack.push_back(w);
    }
  }
  std::map<VertexRef, std::size_t> pending;
  for (auto v : reachable) pending[v] = 0;
  for (auto v : reachable) {
    for (auto w : succ[v]) ++pending[w];
  }
  std::map<VertexRef, Route> routes;
  routes[source].reached = true;
  std::deque<VertexRef> ready{source};
  std::vector<VertexRef> order;
  while (!ready.empty()) {
    auto v = ready.front();
    ready.pop_front();
    order.push_back(v);
    for (auto w : succ[v]) {
      if (--pending[w] == 0) ready.push_back(w);
    }
  }
  if (order.size() != reachable.size()) throw AnalysisError("flow contains a cycle");

  for (auto v : order) {
    const auto& route = routes[v];
    for (auto w : succ[v]) {
      auto hop = hop_segments(graph, topology, v, w);
      auto labels = route.labels;
      for (const auto& s : hop) labels.push_back(s.label);
      const auto count = route.segments + hop.size();
      auto& target = routes[w];
      if (!target.reached || better(count, labels, target.segments, target.labels)) {
        target.reached = true;
        target.segments = count;
        target.labels = std::move(labels);
        target.prev = v;
      }
    }
  }

  std::optional<VertexRef> best_sink;
  Timestamp best_time = 0;
  std::size_t best_count = 0;
  std::vector<std::string> best_labels;
  for (auto v : order) {
    if (!succ[v].empty()) continue;
    const auto& route = routes[v];
    auto tail = sink_segments(graph, topology, v);
    auto labels = route.labels;
    for (const auto& s : tail) labels.push_back(s.label);
    const auto count = route.segments + tail.size();
    const auto time = vertex_completion(graph, v);
    if (!best_sink || time > best_time ||
        (time == best_time && better(count, labels, best_count, best_labels))) {
      best_sink = v;
      best_time = time;
      best_count = count;
      best_labels = std::move(labels);
    }
  }

  CriticalPath path;
  for (std::optional<VertexRef> v = best_sink; v; v = routes[*v].prev) path.vertices.push_back(*v);
  std::reverse(path.vertices.begin(), path.vertices.end());
  for (std::size_t i = 0; i + 1 < path.vertices.size(); ++i) {
    auto hop = hop_segments(graph, topology, path.vertices[i], path.vertices[i + 1]);
    path.segments.insert(path.segments.end(), hop.begin(), hop.end());
  }
  auto tail = sink_segments(graph, topology, path.vertices.back());
  path.segments.insert(path.segments.end(), tail.begin(), tail.end());
  for (const auto& s : path.segments) path.total += s.duration();
  return path;
}

Breakdown breakdown(const CriticalPath& path, const Grouping& grouping) {
  std::map<std::string, Duration> sums;
  for (const auto& s : path.segments) {
    std::string row;
    if (auto it = grouping.rows.find(s.label); it != grouping.rows.end()) {
      row = it->second;
    } else if (s.kind == SegmentKind::kTransport) {
      row = grouping.transport_row;
    } else {
      row = s.label;
    }
    auto [it, inserted] = sums.try_emplace(row, 0);
    it->second += s.duration();
  }

  Breakdown out;
  out.total = path.total;
  out.total_ms = static_cast<double>(path.total) / 1e6;
  for (const auto& [label, duration] : sums) {
    BreakdownRow row;
    row.label = label;
    row.duration = duration;
    row.time_ms = static_cast<double>(duration) / 1e6;
    row.percent = path.total > 0 ? 100.0 * static_cast<double>(duration) /
                                       static_cast<double>(path.total)
                                 : 0.0;
    out.rows.push_back(std::move(row));
  }
  std::stable_sort(out.rows.begin(), out.rows.end(),
                   [](const BreakdownRow& a, const BreakdownRow& b) {
                     return a.duration > b.duration;
                   });
  return out;
}

}  // namespace msgflow
