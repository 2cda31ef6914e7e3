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

#ifndef MSGFLOW_RENDER_HPP_
#define MSGFLOW_RENDER_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msgflow/analysis.hpp"
#include "msgflow/causality.hpp"
#include "msgflow/clock_sync.hpp"
#include "msgflow/diagnostics.hpp"
#include "msgflow/ingest.hpp"

namespace msgflow {

class RenderError : public Error {
 public:
  using Error::Error;
};

// One horizontal lane of the timeline: everything a node does on a topic.
struct Lane {
  EntityId node;
  std::string topic;

  friend bool operator==(const Lane&, const Lane&) = default;
};

struct TimelineSpec {
  std::vector<Lane> lanes;
  Timestamp window_start = 0;
  Timestamp window_end = 1;
  std::optional<MessageFlow> highlight;
  // Fill colour per node id; nodes not listed get the default palette.
  std::map<EntityId, std::string> colors;
  int width = 1200;
};

// Lanes for every (node, topic) a publisher or subscription declares,
// ordered by host, then node display name, then topic. The window spans the
// whole log (or [0, 1] for an empty one).
TimelineSpec default_timeline_spec(const EventLog& log);

// Callbacks are <rect class="cb">; transfers are <line class="transfer">
// from the publish to the callback start; causal links are
// <line class="link"> from the callback to the publish. Only callbacks with
// a known end are drawn as rectangles. Throws RenderError for an empty
// window or a lane that does not exist in the log.
std::string render_timeline(const EventLog& log, const FlowGraph& graph, const TimelineSpec& spec);

inline constexpr const char* kActiveColor = "#2ca02c";
inline constexpr const char* kIdleColor = "#ff7f0e";

// One lane per thread with active (green) and idle (orange) intervals.
std::string render_thread_view(const EventLog& log);

// Fixed-width table: label, time in ms and percent (one decimal each), then
// a total row.
std::string render_report(const Breakdown& breakdown);

// Whole flow graph in Graphviz DOT. Vertices are labelled "topic@node";
// edges carry their time delta in milliseconds.
std::string render_dot(const FlowGraph& graph, const Topology& topology);

// JSON documents emitted by the command-line tool.
nlohmann::json breakdown_json(const Breakdown& breakdown);
nlohmann::json critical_path_json(const CriticalPath& path, const FlowGraph& graph);
nlohmann::json flow_json(const MessageFlow& flow, const FlowGraph& graph, const Topology& topology);
nlohmann::json drops_json(const DropReport& report);
nlohmann::json latency_json(const std::vector<LatencyStats>& stats);
nlohmann::json outliers_json(const std::vector<Outlier>& outliers);
nlohmann::json threads_json(const std::vector<ThreadTimeline>& timelines);
nlohmann::json violations_json(const std::vector<Violation>& violations);
nlohmann::json graph_json(const FlowGraphBuild& build, const Topology& topology);

}  // namespace msgflow

#endif  // MSGFLOW_RENDER_HPP_
