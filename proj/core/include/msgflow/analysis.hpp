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

#ifndef MSGFLOW_ANALYSIS_HPP_
#define MSGFLOW_ANALYSIS_HPP_

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "msgflow/causality.hpp"
#include "msgflow/ingest.hpp"

namespace msgflow {

class AnalysisError : public Error {
 public:
  using Error::Error;
};

enum class FlowDirection { kForward, kBackward };

std::string_view to_string(FlowDirection direction);

// A vertex of the flow graph: a message instance or a callback instance.
struct VertexRef {
  enum class Kind { kMessage, kCallback };
  Kind kind = Kind::kMessage;
  std::size_t index = 0;

  static VertexRef message(std::size_t i) { return {Kind::kMessage, i}; }
  static VertexRef callback(std::size_t i) { return {Kind::kCallback, i}; }
  bool is_message() const { return kind == Kind::kMessage; }

  friend auto operator<=>(const VertexRef&, const VertexRef&) = default;
};

// Everything reachable from (forward) or reaching (backward) the root
// message. Indices refer to the graph the flow was extracted from; all
// vectors are sorted.
struct MessageFlow {
  MessageKey root;
  std::size_t root_index = 0;
  FlowDirection direction = FlowDirection::kForward;
  std::vector<std::size_t> messages;
  std::vector<std::size_t> callbacks;
  std::vector<std::size_t> transport_edges;
  std::vector<std::size_t> causal_edges;

  bool contains_message(std::size_t i) const;
  bool contains_callback(std::size_t i) const;
};

MessageFlow forward_flow(const FlowGraph& graph, const MessageKey& root);
MessageFlow backward_flow(const FlowGraph& graph, const MessageKey& root);

enum class SegmentKind { kProcessing, kTransport, kWait };

std::string_view to_string(SegmentKind kind);

struct Segment {
  SegmentKind kind = SegmentKind::kProcessing;
  std::string label;
  Timestamp start_t = 0;
  Timestamp end_t = 0;

  Duration duration() const { return end_t - start_t; }
};

struct CriticalPath {
  std::vector<VertexRef> vertices;  // source publish first
  std::vector<Segment> segments;
  Duration total = 0;
};

// Segment labels: processing segments carry the node's display name,
// transport segments the topic, wait segments "wait@<node>".
//
// The chosen path ends at the sink (a vertex with no outgoing edge inside the
// flow) with the latest completion time; ties go to fewer segments, then to
// the lexicographically smaller label sequence. Processing is cut at the
// causal publish, so segments are disjoint and sum to the total.
CriticalPath critical_path(const FlowGraph& graph, const Topology& topology,
                           const MessageFlow& flow);

// Segments for a single hop; exposed so tools can describe arbitrary chains.
std::vector<Segment> hop_segments(const FlowGraph& graph, const Topology& topology, VertexRef from,
                                  VertexRef to);
std::vector<Segment> sink_segments(const FlowGraph& graph, const Topology& topology,
                                   VertexRef sink);
Timestamp vertex_completion(const FlowGraph& graph, VertexRef v);

inline constexpr const char* kTransportRow = "Network Latency + Message Handling";

// Maps segment labels to report rows. Labels not listed fall back to the
// transport row for transport segments and to their own label otherwise.
struct Grouping {
  std::map<std::string, std::string> rows;
  std::string transport_row = kTransportRow;
};

struct BreakdownRow {
  std::string label;
  Duration duration = 0;
  double time_ms = 0.0;
  double percent = 0.0;
};

struct Breakdown {
  std::vector<BreakdownRow> rows;  // longest first, then by label
  Duration total = 0;
  double total_ms = 0.0;
};

Breakdown breakdown(const CriticalPath& path, const Grouping& grouping = {});

}  // namespace msgflow

#endif  // MSGFLOW_ANALYSIS_HPP_
