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

#include "msgflow/causality.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <tuple>
#include <utility>

#include <fmt/format.h>

namespace msgflow {
namespace {

constexpr std::size_t kNoPosition = std::numeric_limits<std::size_t>::max();

struct ThreadKey {
  std::string host;
  std::int64_t pid;
  std::int64_t tid;
  friend auto operator<=>(const ThreadKey&, const ThreadKey&) = default;
};

// Log positions of each instance's records; containment is decided on these
// so equal timestamps resolve by recorded order.
struct Positions {
  std::vector<std::size_t> message;
  std::vector<std::size_t> cb_start;
  std::vector<std::size_t> cb_end;
};

Positions locate(const EventLog& log, const Instances& instances) {
  Positions pos;
  pos.message.reserve(instances.messages.size());
  pos.cb_start.reserve(instances.callbacks.size());
  pos.cb_end.assign(instances.callbacks.size(), kNoPosition);
  std::map<std::pair<std::string_view, std::string_view>, std::size_t> open;
  for (std::size_t i = 0; i < log.events.size(); ++i) {
    const auto& event = log.events[i];
    if (event.as<Publish>()) {
      pos.message.push_back(i);
    } else if (const auto* cb = event.as<CallbackStart>()) {
      open.try_emplace({cb->sub, cb->cb}, pos.cb_start.size());
      pos.cb_start.push_back(i);
    } else if (const auto* cb = event.as<CallbackEnd>()) {
      auto it = open.find({cb->sub, cb->cb});
      if (it != open.end() && pos.cb_end[it->second] == kNoPosition) pos.cb_end[it->second] = i;
    }
  }
  return pos;
}

}  // namespace

std::string_view to_string(CausalOrigin origin) {
  return origin == CausalOrigin::kAutomatic ? "automatic" : "annotated";
}

std::string_view to_string(DiagnosticKind kind) {
  switch (kind) {
    case DiagnosticKind::kOrphanCallback: return "orphan callback";
    case DiagnosticKind::kTopicMismatch: return "topic mismatch";
    case DiagnosticKind::kUnknownLinkKey: return "unknown link key";
    case DiagnosticKind::kNegativeLatency: return "negative latency";
    case DiagnosticKind::kBackwardCausalEdge: return "backward causal edge";
  }
  return "diagnostic";
}

FlowGraph::FlowGraph(std::vector<MessageInstance> messages, std::vector<CallbackInstance> callbacks,
                     std::vector<TransportEdge> transport, std::vector<CausalEdge> causal,
                     Timestamp trace_end)
    : messages_(std::move(messages)),
      callbacks_(std::move(callbacks)),
      transport_(std::move(transport)),
      causal_(std::move(causal)),
      trace_end_(trace_end),
      transport_out_(messages_.size()),
      causal_in_(messages_.size()),
      causal_out_(callbacks_.size()),
      transport_in_(callbacks_.size()) {
  by_key_.reserve(messages_.size());
  for (std::size_t i = 0; i < messages_.size(); ++i) by_key_.try_emplace(messages_[i].key, i);
  for (std::size_t e = 0; e < transport_.size(); ++e) {
    transport_out_[transport_[e].message].push_back(e);
    transport_in_[transport_[e].callback] = e;
  }
  for (std::size_t e = 0; e < causal_.size(); ++e) {
    causal_in_[causal_[e].message].push_back(e);
    causal_out_[causal_[e].callback].push_back(e);
  }
}

std::optional<std::size_t> FlowGraph::find_message(const MessageKey& key) const {
  auto it = by_key_.find(key);
  if (it == by_key_.end()) return std::nullopt;
  return it->second;
}

Instances collect_instances(const EventLog& log) {
  Instances out;
  const auto& topo = log.topology;
  std::map<std::pair<std::string_view, std::string_view>, std::size_t> open;
  for (const auto& event : log.events) {
    if (const auto* p = event.as<Publish>()) {
      MessageInstance m;
      m.key = p->key;
      m.publish_t = event.t;
      if (const auto* info = topo.find_publisher(p->key.pub)) {
        m.topic = info->topic;
        m.node = info->node;
      }
      m.host = event.host;
      m.pid = event.pid;
      m.tid = event.tid;
      out.by_key.try_emplace(m.key, out.messages.size());
      out.messages.push_back(std::move(m));
    } else if (const auto* cb = event.as<CallbackStart>()) {
      CallbackInstance c;
      c.id = cb->cb;
      c.sub = cb->sub;
      if (const auto* info = topo.find_subscription(cb->sub)) {
        c.node = info->node;
        c.topic = info->topic;
      }
      c.start_t = event.t;
      c.host = event.host;
      c.pid = event.pid;
      c.tid = event.tid;
      c.src = cb->src;
      open.try_emplace({cb->sub, cb->cb}, out.callbacks.size());
      out.callbacks.push_back(std::move(c));
    } else if (const auto* cb = event.as<CallbackEnd>()) {
      auto it = open.find({cb->sub, cb->cb});
      if (it != open.end() && !out.callbacks[it->second].end_t) {
        out.callbacks[it->second].end_t = std::max(event.t, out.callbacks[it->second].start_t);
      }
    }
  }
  return out;
}

TransportMatch match_transport(const EventLog& log) {
  return match_transport(log, collect_instances(log));
}

TransportMatch match_transport(const EventLog& log, const Instances& instances) {
  TransportMatch out;
  const auto& subs = log.topology.subscriptions;
  std::map<std::string_view, std::size_t> sub_index;
  std::map<std::string_view, std::vector<std::size_t>> subs_by_topic;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    sub_index.emplace(subs[i].id, i);
    subs_by_topic[subs[i].topic].push_back(i);
  }

  // matched[m] lists the subscription indices that received message m.
  std::vector<std::vector<std::size_t>> matched(instances.messages.size());
  for (std::size_t c = 0; c < instances.callbacks.size(); ++c) {
    const auto& cb = instances.callbacks[c];
    auto it = instances.by_key.find(cb.src);
    if (it == instances.by_key.end()) {
      out.diagnostics.push_back(
          {DiagnosticKind::kOrphanCallback,
           fmt::format("orphan callback {} on {}: no publish for {}", cb.id, cb.sub,
                       to_string(cb.src))});
      continue;
    }
    const auto& msg = instances.messages[it->second];
    if (!msg.topic.empty() && !cb.topic.empty() && msg.topic != cb.topic) {
      out.diagnostics.push_back(
          {DiagnosticKind::kTopicMismatch,
           fmt::format("callback {} on {} ({}) echoes {} published on {}", cb.id, cb.sub,
                       cb.topic, to_string(cb.src), msg.topic)});
      continue;
    }
    Duration latency = cb.start_t - msg.publish_t;
    if (latency < 0) {
      out.diagnostics.push_back(
          {DiagnosticKind::kNegativeLatency,
           fmt::format("callback {} on {} starts {} ns before {} was published", cb.id, cb.sub,
                       -latency, to_string(cb.src))});
    }
    out.edges.push_back(TransportEdge{it->second, c, latency});
    if (auto s = sub_index.find(cb.sub); s != sub_index.end()) {
      matched[it->second].push_back(s->second);
    }
  }

  for (std::size_t m = 0; m < instances.messages.size(); ++m) {
    auto topic = subs_by_topic.find(instances.messages[m].topic);
    if (topic == subs_by_topic.end()) continue;
    for (auto s : topic->second) {
      const auto& got = matched[m];
      if (std::find(got.begin(), got.end(), s) == got.end()) {
        out.unmatched.push_back(UnmatchedPublish{subs[s].id, m});
      }
    }
  }
  return out;
}

CausalLinks infer_causal_links(const EventLog& log) {
  return infer_causal_links(log, collect_instances(log));
}

CausalLinks infer_causal_links(const EventLog& log, const Instances& instances) {
  CausalLinks out;
  const auto pos = locate(log, instances);

  // Automatic rule: a publish is caused by the innermost callback running on
  // the same thread when it happens.
  std::map<ThreadKey, std::vector<std::size_t>> callbacks_by_thread;
  for (std::size_t c = 0; c < instances.callbacks.size(); ++c) {
    const auto& cb = instances.callbacks[c];
    callbacks_by_thread[ThreadKey{cb.host, cb.pid, cb.tid}].push_back(c);
  }
  struct ThreadIndex {
    std::vector<std::size_t> callbacks;  // by start position
    std::vector<std::size_t> max_end;    // prefix maximum of end positions
  };
  std::map<ThreadKey, ThreadIndex> threads;
  for (auto& [key, list] : callbacks_by_thread) {
    ThreadIndex index;
    index.callbacks = std::move(list);
    std::size_t running = 0;
    for (auto c : index.callbacks) {
      running = std::max(running, pos.cb_end[c]);
      index.max_end.push_back(running);
    }
    threads.emplace(key, std::move(index));
  }

  std::vector<CausalEdge> automatic;
  for (std::size_t m = 0; m < instances.messages.size(); ++m) {
    const auto& msg = instances.messages[m];
    auto it = threads.find(ThreadKey{msg.host, msg.pid, msg.tid});
    if (it == threads.end()) continue;
    const auto& index = it->second;
    const std::size_t at = pos.message[m];
    auto upper = std::partition_point(index.callbacks.begin(), index.callbacks.end(),
                                      [&](std::size_t c) { return pos.cb_start[c] < at; });
    for (auto j = static_cast<std::ptrdiff_t>(upper - index.callbacks.begin()) - 1; j >= 0; --j) {
      if (index.max_end[j] < at) break;
      auto c = index.callbacks[j];
      if (pos.cb_end[c] > at) {
        automatic.push_back(CausalEdge{c, m, CausalOrigin::kAutomatic});
        break;
      }
    }
  }

  std::unordered_map<MessageKey, std::vector<std::size_t>, MessageKeyHash> receivers;
  for (std::size_t c = 0; c < instances.callbacks.size(); ++c) {
    receivers[instances.callbacks[c].src].push_back(c);
  }

  std::set<std::pair<std::size_t, std::size_t>> annotated;  // (message, callback)
  for (const auto& event : log.events) {
    const auto* link = event.as<Link>();
    if (!link) continue;
    auto out_it = instances.by_key.find(link->out);
    if (out_it == instances.by_key.end()) {
      out.diagnostics.push_back({DiagnosticKind::kUnknownLinkKey,
                                 fmt::format("link names unknown output {}", to_string(link->out))});
      continue;
    }
    const auto m = out_it->second;
    const auto& out_node = instances.messages[m].node;
    for (const auto& in : link->in) {
      auto r = receivers.find(in);
      if (!instances.by_key.count(in) || r == receivers.end()) {
        out.diagnostics.push_back(
            {DiagnosticKind::kUnknownLinkKey,
             fmt::format("link for {} names input {} with no receiving callback",
                         to_string(link->out), to_string(in))});
        continue;
      }
      // Receivers on the publishing node; every receiver if none is there.
      std::vector<std::size_t> chosen;
      for (auto c : r->second) {
        if (!out_node.empty() && instances.callbacks[c].node == out_node) chosen.push_back(c);
      }
      if (chosen.empty()) chosen = r->second;
      for (auto c : chosen) annotated.emplace(m, c);
    }
  }

  std::set<std::size_t> overridden;
  for (const auto& [m, c] : annotated) overridden.insert(m);
  for (const auto& e : automatic) {
    if (!overridden.count(e.message)) out.edges.push_back(e);
  }
  for (const auto& [m, c] : annotated) {
    out.edges.push_back(CausalEdge{c, m, CausalOrigin::kAnnotated});
    const auto& cb = instances.callbacks[c];
    const auto& msg = instances.messages[m];
    if (cb.start_t > msg.publish_t) {
      out.diagnostics.push_back(
          {DiagnosticKind::kBackwardCausalEdge,
           fmt::format("annotated link from callback {} on {} to {} goes backwards in time",
                       cb.id, cb.sub, to_string(msg.key))});
    }
  }
  std::sort(out.edges.begin(), out.edges.end(), [](const CausalEdge& a, const CausalEdge& b) {
    return std::tie(a.message, a.callback) < std::tie(b.message, b.callback);
  });
  return out;
}

namespace {

// Vertices: messages are [0, M), callbacks are [M, M + C).
void check_acyclic(const FlowGraph& g, const Topology& topology) {
  const std::size_t m_count = g.messages().size();
  const std::size_t n = m_count + g.callbacks().size();
  std::vector<std::vector<std::size_t>> succ(n);
  for (const auto& e : g.transport_edges()) succ[e.message].push_back(m_count + e.callback);
  for (const auto& e : g.causal_edges()) succ[m_count + e.callback].push_back(e.message);

  // 0 = unvisited, 1 = on stack, 2 = done
  std::vector<char> state(n, 0);
  std::vector<std::size_t> parent(n, kNoPosition);
  for (std::size_t root = 0; root < n; ++root) {
    if (state[root]) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    state[root] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < succ[v].size()) {
        auto w = succ[v][next++];
        if (state[w] == 0) {
          state[w] = 1;
          parent[w] = v;
          stack.push_back({w, 0});
        } else if (state[w] == 1) {
          std::vector<std::string> cycle;
          auto label = [&](std::size_t x) {
            return x < m_count ? fmt::format("message {} ({})", to_string(g.messages()[x].key),
                                             message_label(g, topology, x))
                               : fmt::format("callback {} ({})", g.callbacks()[x - m_count].id,
                                             callback_label(g, topology, x - m_count));
          };
          for (auto x = v; x != w && x != kNoPosition; x = parent[x]) cycle.push_back(label(x));
          cycle.push_back(label(w));
          std::reverse(cycle.begin(), cycle.end());
          throw CycleError(fmt::format("flow graph has a cycle: {}", fmt::join(cycle, " -> ")));
        }
      } else {
        state[v] = 2;
        stack.pop_back();
      }
    }
  }
}

}  // namespace

FlowGraphBuild build_flow_graph(const EventLog& log) {
  auto instances = collect_instances(log);
  auto transport = match_transport(log, instances);
  auto causal = infer_causal_links(log, instances);

  FlowGraphBuild out;
  out.unmatched = std::move(transport.unmatched);
  out.diagnostics = std::move(transport.diagnostics);
  out.diagnostics.insert(out.diagnostics.end(), causal.diagnostics.begin(),
                         causal.diagnostics.end());
  out.graph = FlowGraph(std::move(instances.messages), std::move(instances.callbacks),
                        std::move(transport.edges), std::move(causal.edges), log.last_time());
  check_acyclic(out.graph, log.topology);
  return out;
}

std::string message_label(const FlowGraph& graph, const Topology& topology, std::size_t message) {
  const auto& m = graph.messages()[message];
  return fmt::format("{}@{}", m.topic.empty() ? "?" : m.topic,
                     m.node.empty() ? m.host : topology.node_label(m.node));
}

std::string callback_label(const FlowGraph& graph, const Topology& topology, std::size_t callback) {
  const auto& c = graph.callbacks()[callback];
  return fmt::format("{}@{}", c.topic.empty() ? "?" : c.topic,
                     c.node.empty() ? c.host : topology.node_label(c.node));
}

}  // namespace msgflow
