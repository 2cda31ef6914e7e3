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

#include "oracles.hpp"

#include <algorithm>
#include <vector>

#include <fmt/format.h>

namespace msgflow::testing {

VertexSet reachable_by_fixpoint(const FlowGraph& graph, std::size_t root_message, bool forward) {
  VertexSet seen;
  seen.messages.insert(root_message);
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& e : graph.transport_edges()) {
      if (forward && seen.messages.count(e.message)) {
        changed |= seen.callbacks.insert(e.callback).second;
      }
      if (!forward && seen.callbacks.count(e.callback)) {
        changed |= seen.messages.insert(e.message).second;
      }
    }
    for (const auto& e : graph.causal_edges()) {
      if (forward && seen.callbacks.count(e.callback)) {
        changed |= seen.messages.insert(e.message).second;
      }
      if (!forward && seen.messages.count(e.message)) {
        changed |= seen.callbacks.insert(e.callback).second;
      }
    }
  }
  return seen;
}

namespace {

std::vector<VertexRef> flow_successors(const FlowGraph& graph, const MessageFlow& flow,
                                       VertexRef v) {
  std::vector<VertexRef> out;
  if (v.is_message()) {
    for (auto e : flow.transport_edges) {
      if (graph.transport_edges()[e].message == v.index) {
        out.push_back(VertexRef::callback(graph.transport_edges()[e].callback));
      }
    }
  } else {
    for (auto e : flow.causal_edges) {
      if (graph.causal_edges()[e].callback == v.index) {
        out.push_back(VertexRef::message(graph.causal_edges()[e].message));
      }
    }
  }
  return out;
}

Duration hop_time(const FlowGraph& graph, VertexRef from, VertexRef to) {
  if (from.is_message()) {
    return graph.callbacks()[to.index].start_t - graph.messages()[from.index].publish_t;
  }
  return graph.messages()[to.index].publish_t - graph.callbacks()[from.index].start_t;
}

Duration tail_time(const FlowGraph& graph, VertexRef last) {
  if (last.is_message()) return 0;
  const auto& cb = graph.callbacks()[last.index];
  return cb.end_t ? *cb.end_t - cb.start_t : 0;
}

struct Walker {
  const FlowGraph& graph;
  const MessageFlow& flow;
  std::size_t limit;
  PathEnumeration result;
  std::vector<VertexRef> path;

  void walk(VertexRef v) {
    if (!result.complete) return;
    path.push_back(v);
    const auto next = flow_successors(graph, flow, v);
    if (next.empty()) {
      if (++result.paths > limit) {
        result.complete = false;
      } else {
        Duration total = tail_time(graph, path.back());
        for (std::size_t i = 0; i + 1 < path.size(); ++i) total += hop_time(graph, path[i], path[i + 1]);
        result.longest = result.paths == 1 ? total : std::max(result.longest, total);
      }
    }
    for (auto w : next) walk(w);
    path.pop_back();
  }
};

}  // namespace

PathEnumeration enumerate_paths(const FlowGraph& graph, const MessageFlow& flow,
                                VertexRef source, std::size_t limit) {
  Walker walker{graph, flow, limit, {}, {}};
  walker.walk(source);
  return walker.result;
}

bool is_flow_chain(const FlowGraph& graph, const MessageFlow& flow, const CriticalPath& path,
                   VertexRef source, std::string* why) {
  auto fail = [&](std::string message) {
    if (why) *why = std::move(message);
    return false;
  };
  if (path.vertices.empty()) return fail("empty path");
  if (path.vertices.front() != source) return fail("path does not start at the source");
  for (std::size_t i = 0; i + 1 < path.vertices.size(); ++i) {
    const auto next = flow_successors(graph, flow, path.vertices[i]);
    if (std::find(next.begin(), next.end(), path.vertices[i + 1]) == next.end()) {
      return fail(fmt::format("no flow edge between vertex {} and {}", i, i + 1));
    }
  }
  if (!flow_successors(graph, flow, path.vertices.back()).empty()) {
    return fail("path stops before a sink");
  }
  return true;
}

double percent_of(Duration part, Duration total) {
  if (total == 0) return 0.0;
  return static_cast<double>(part) * 100.0 / static_cast<double>(total);
}

FlowFacts facts_from_analysis(const FlowGraph& graph, const DropReport& drops) {
  FlowFacts facts;
  for (const auto& e : graph.transport_edges()) {
    const auto& m = graph.messages()[e.message];
    const auto& c = graph.callbacks()[e.callback];
    facts.transport.emplace(m.key.pub, m.key.seq, c.sub, c.id);
  }
  for (const auto& e : graph.causal_edges()) {
    const auto& m = graph.messages()[e.message];
    const auto& c = graph.callbacks()[e.callback];
    facts.causal.emplace(c.sub, c.id, m.key.pub, m.key.seq, static_cast<int>(e.origin));
  }
  for (const auto& s : drops.subscriptions) {
    for (const auto& key : s.dropped) facts.drops.emplace(key.pub, key.seq, s.sub);
  }
  return facts;
}

FlowFacts facts_from_truth(const sim::GroundTruth& truth) {
  FlowFacts facts;
  for (const auto& m : truth.matches) facts.transport.emplace(m.msg.pub, m.msg.seq, m.sub, m.cb);
  for (const auto& e : truth.causal_edges) {
    facts.causal.emplace(e.sub, e.cb, e.out.pub, e.out.seq, static_cast<int>(e.origin));
  }
  for (const auto& d : truth.drops) facts.drops.emplace(d.msg.pub, d.msg.seq, d.sub);
  return facts;
}

}  // namespace msgflow::testing
