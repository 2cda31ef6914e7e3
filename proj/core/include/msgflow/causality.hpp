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

#ifndef MSGFLOW_CAUSALITY_HPP_
#define MSGFLOW_CAUSALITY_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "msgflow/ingest.hpp"
#include "msgflow/trace_model.hpp"

namespace msgflow {

struct MessageInstance {
  MessageKey key;
  Timestamp publish_t = 0;
  std::string topic;
  EntityId node;
  std::string host;
  std::int64_t pid = 0;
  std::int64_t tid = 0;
};

struct CallbackInstance {
  EntityId id;
  EntityId sub;
  EntityId node;
  std::string topic;
  Timestamp start_t = 0;
  std::optional<Timestamp> end_t;
  std::string host;
  std::int64_t pid = 0;
  std::int64_t tid = 0;
  MessageKey src;

  bool completed() const { return end_t.has_value(); }
};

struct TransportEdge {
  std::size_t message = 0;
  std::size_t callback = 0;
  Duration latency = 0;

  friend bool operator==(const TransportEdge&, const TransportEdge&) = default;
};

enum class CausalOrigin { kAutomatic, kAnnotated };

std::string_view to_string(CausalOrigin origin);

struct CausalEdge {
  std::size_t callback = 0;
  std::size_t message = 0;
  CausalOrigin origin = CausalOrigin::kAutomatic;

  friend bool operator==(const CausalEdge&, const CausalEdge&) = default;
};

// A same-topic publish that never started a callback on `sub`.
struct UnmatchedPublish {
  EntityId sub;
  std::size_t message = 0;
};

enum class DiagnosticKind {
  kOrphanCallback,
  kTopicMismatch,
  kUnknownLinkKey,
  kNegativeLatency,
  kBackwardCausalEdge,
};

std::string_view to_string(DiagnosticKind kind);

struct Diagnostic {
  DiagnosticKind kind;
  std::string message;
};

struct TransportMatch {
  std::vector<TransportEdge> edges;
  std::vector<UnmatchedPublish> unmatched;
  std::vector<Diagnostic> diagnostics;
};

// Message and callback instances indexed in log order; edges refer to them by
// index. Immutable once built.
class FlowGraph {
 public:
  FlowGraph() = default;
  FlowGraph(std::vector<MessageInstance> messages, std::vector<CallbackInstance> callbacks,
            std::vector<TransportEdge> transport, std::vector<CausalEdge> causal,
            Timestamp trace_end);

  const std::vector<MessageInstance>& messages() const { return messages_; }
  const std::vector<CallbackInstance>& callbacks() const { return callbacks_; }
  const std::vector<TransportEdge>& transport_edges() const { return transport_; }
  const std::vector<CausalEdge>& causal_edges() const { return causal_; }
  Timestamp trace_end() const { return trace_end_; }

  std::optional<std::size_t> find_message(const MessageKey& key) const;

  // Edge indices leaving/entering each vertex.
  const std::vector<std::size_t>& transport_out(std::size_t message) const {
    return transport_out_[message];
  }
  const std::vector<std::size_t>& causal_in(std::size_t message) const {
    return causal_in_[message];
  }
  const std::vector<std::size_t>& causal_out(std::size_t callback) const {
    return causal_out_[callback];
  }
  // The single inbound transport edge of a callback, if its message was found.
  std::optional<std::size_t> transport_in(std::size_t callback) const {
    return transport_in_[callback];
  }

  bool empty() const { return messages_.empty() && callbacks_.empty(); }

 private:
  std::vector<MessageInstance> messages_;
  std::vector<CallbackInstance> callbacks_;
  std::vector<TransportEdge> transport_;
  std::vector<CausalEdge> causal_;
  Timestamp trace_end_ = 0;

  std::unordered_map<MessageKey, std::size_t, MessageKeyHash> by_key_;
  std::vector<std::vector<std::size_t>> transport_out_;
  std::vector<std::vector<std::size_t>> causal_in_;
  std::vector<std::vector<std::size_t>> causal_out_;
  std::vector<std::optional<std::size_t>> transport_in_;
};

// Message and callback instances extracted from the log, without edges.
struct Instances {
  std::vector<MessageInstance> messages;
  std::vector<CallbackInstance> callbacks;
  std::unordered_map<MessageKey, std::size_t, MessageKeyHash> by_key;
};

Instances collect_instances(const EventLog& log);

TransportMatch match_transport(const EventLog& log);
TransportMatch match_transport(const EventLog& log, const Instances& instances);

struct CausalLinks {
  std::vector<CausalEdge> edges;
  std::vector<Diagnostic> diagnostics;
};

CausalLinks infer_causal_links(const EventLog& log);
CausalLinks infer_causal_links(const EventLog& log, const Instances& instances);

struct FlowGraphBuild {
  FlowGraph graph;
  std::vector<UnmatchedPublish> unmatched;
  std::vector<Diagnostic> diagnostics;
};

class CycleError : public Error {
 public:
  using Error::Error;
};

// Composes match_transport and infer_causal_links. Throws CycleError listing
// the offending vertices if the result is not a DAG.
FlowGraphBuild build_flow_graph(const EventLog& log);

// "topic@node" for message and callback vertices.
std::string message_label(const FlowGraph& graph, const Topology& topology, std::size_t message);
std::string callback_label(const FlowGraph& graph, const Topology& topology, std::size_t callback);

}  // namespace msgflow

#endif  // MSGFLOW_CAUSALITY_HPP_
