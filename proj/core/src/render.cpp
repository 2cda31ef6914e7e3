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

#include "msgflow/render.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <set>
#include <tuple>

#include <fmt/format.h>

namespace msgflow {
namespace {

using json = nlohmann::json;

constexpr std::array<const char*, 10> kPalette = {"#1f77b4", "#9467bd", "#8c564b", "#e377c2",
                                                  "#17becf", "#bcbd22", "#d62728", "#7f7f7f",
                                                  "#2ca02c", "#ff7f0e"};

constexpr int kLabelWidth = 240;
constexpr int kRightMargin = 20;
constexpr int kTopMargin = 20;
constexpr int kLaneHeight = 28;
constexpr int kAxisHeight = 40;

std::string escape_xml(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string escape_dot(std::string_view text) {
  std::string out;
  for (char ch : text) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out;
}

double ms(Duration d) { return static_cast<double>(d) / 1e6; }

// Maps timestamps inside the window to x pixels.
struct Scale {
  Timestamp t0;
  Timestamp t1;
  double x0;
  double width;

  double operator()(Timestamp t) const {
    t = std::clamp(t, t0, t1);
    return x0 + width * static_cast<double>(t - t0) / static_cast<double>(t1 - t0);
  }
};

void open_svg(std::string& out, int width, int height) {
  out += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" font-size=\"11\">\n",
      width, height, width, height);
}

void draw_axis(std::string& out, const Scale& x, int y) {
  out += fmt::format("<line class=\"axis\" x1=\"{:.2f}\" y1=\"{}\" x2=\"{:.2f}\" y2=\"{}\" "
                     "stroke=\"#000\"/>\n",
                     x.x0, y, x.x0 + x.width, y);
  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const auto t = x.t0 + (x.t1 - x.t0) * i / kTicks;
    const double px = x(t);
    out += fmt::format("<line class=\"tick\" x1=\"{:.2f}\" y1=\"{}\" x2=\"{:.2f}\" y2=\"{}\" "
                       "stroke=\"#000\"/>\n",
                       px, y, px, y + 4);
    out += fmt::format("<text class=\"tick\" x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">"
                       "{:.3f} ms</text>\n",
                       px, y + 16, ms(t - x.t0));
  }
}

struct HostNodeTopic {
  std::string host;
  std::string node_label;
  std::string topic;
  EntityId node;
  friend auto operator<=>(const HostNodeTopic&, const HostNodeTopic&) = default;
};

}  // namespace

TimelineSpec default_timeline_spec(const EventLog& log) {
  const auto& topo = log.topology;
  std::set<HostNodeTopic> lanes;
  auto add = [&](const EntityId& node, const std::string& topic) {
    const auto* info = topo.find_node(node);
    lanes.insert(HostNodeTopic{info ? info->host : std::string(), topo.node_label(node), topic, node});
  };
  for (const auto& p : topo.publishers) add(p.node, p.topic);
  for (const auto& s : topo.subscriptions) add(s.node, s.topic);

  TimelineSpec spec;
  for (const auto& l : lanes) spec.lanes.push_back(Lane{l.node, l.topic});
  if (!log.events.empty() && log.last_time() > log.first_time()) {
    spec.window_start = log.first_time();
    spec.window_end = log.last_time();
  } else if (!log.events.empty()) {
    spec.window_start = log.first_time();
    spec.window_end = log.first_time() + 1;
  }
  return spec;
}

std::string render_timeline(const EventLog& log, const FlowGraph& graph, const TimelineSpec& spec) {
  if (spec.window_end <= spec.window_start) throw RenderError("empty time window");
  const auto& topo = log.topology;

  std::map<std::pair<std::string, std::string>, std::size_t> lane_row;
  for (std::size_t i = 0; i < spec.lanes.size(); ++i) {
    const auto& lane = spec.lanes[i];
    bool exists = false;
    for (const auto& p : topo.publishers) exists |= p.node == lane.node && p.topic == lane.topic;
    for (const auto& s : topo.subscriptions) exists |= s.node == lane.node && s.topic == lane.topic;
    if (!exists) {
      throw RenderError(fmt::format("lane {}@{} does not exist in the trace", lane.topic, lane.node));
    }
    lane_row.emplace(std::make_pair(lane.node, lane.topic), i);
  }

  std::map<EntityId, std::string> colors;
  for (const auto& lane : spec.lanes) {
    if (colors.count(lane.node)) continue;
    auto it = spec.colors.find(lane.node);
    colors[lane.node] =
        it != spec.colors.end() ? it->second : kPalette[colors.size() % kPalette.size()];
  }

  const int lanes = static_cast<int>(spec.lanes.size());
  const int height = kTopMargin + lanes * kLaneHeight + kAxisHeight;
  const Scale x{spec.window_start, spec.window_end, static_cast<double>(kLabelWidth),
                static_cast<double>(spec.width - kLabelWidth - kRightMargin)};
  auto lane_y = [](std::size_t row) { return kTopMargin + static_cast<int>(row) * kLaneHeight; };
  auto row_of = [&](const EntityId& node, const std::string& topic) -> std::optional<std::size_t> {
    auto it = lane_row.find({node, topic});
    if (it == lane_row.end()) return std::nullopt;
    return it->second;
  };

  const bool highlighting = spec.highlight.has_value();
  auto style = [&](bool in_flow) -> std::string {
    if (!highlighting) return "";
    return in_flow ? " hl" : " dim";
  };
  auto opacity = [&](bool in_flow) -> std::string {
    if (!highlighting || in_flow) return "";
    return " opacity=\"0.3\"";
  };

  std::string out;
  open_svg(out, spec.width, height);
  out += "<defs>\n"
         "<marker id=\"arrow-transfer\" viewBox=\"0 0 10 10\" refX=\"10\" refY=\"5\" "
         "markerWidth=\"6\" markerHeight=\"6\" orient=\"auto\"><path d=\"M0,0 L10,5 L0,10 z\" "
         "fill=\"#000\"/></marker>\n"
         "<marker id=\"arrow-link\" viewBox=\"0 0 10 10\" refX=\"10\" refY=\"5\" "
         "markerWidth=\"6\" markerHeight=\"6\" orient=\"auto\"><path d=\"M0,0 L10,5 L0,10 z\" "
         "fill=\"#999\"/></marker>\n"
         "</defs>\n";

  for (std::size_t i = 0; i < spec.lanes.size(); ++i) {
    const auto& lane = spec.lanes[i];
    const int y = lane_y(i);
    out += fmt::format("<text class=\"lane-label\" x=\"4\" y=\"{}\">{}@{}</text>\n",
                       y + kLaneHeight / 2 + 4, escape_xml(lane.topic),
                       escape_xml(topo.node_label(lane.node)));
    out += fmt::format("<line class=\"lane\" x1=\"0\" y1=\"{}\" x2=\"{}\" y2=\"{}\" "
                       "stroke=\"#ddd\"/>\n",
                       y + kLaneHeight, spec.width, y + kLaneHeight);
  }
  draw_axis(out, x, kTopMargin + lanes * kLaneHeight);

  const auto& flow = spec.highlight;
  for (std::size_t c = 0; c < graph.callbacks().size(); ++c) {
    const auto& cb = graph.callbacks()[c];
    if (!cb.end_t || cb.start_t > spec.window_end || *cb.end_t < spec.window_start) continue;
    auto row = row_of(cb.node, cb.topic);
    if (!row) continue;
    const bool in_flow = flow && flow->contains_callback(c);
    const double x1 = x(cb.start_t);
    const double x2 = x(*cb.end_t);
    out += fmt::format("<rect class=\"cb{}\" x=\"{:.2f}\" y=\"{}\" width=\"{:.2f}\" height=\"{}\" "
                       "fill=\"{}\"{}><title>{} {}</title></rect>\n",
                       style(in_flow), x1, lane_y(*row) + 4, std::max(x2 - x1, 0.5),
                       kLaneHeight - 8, colors.at(cb.node), opacity(in_flow), escape_xml(cb.sub),
                       escape_xml(cb.id));
  }

  for (std::size_t m = 0; m < graph.messages().size(); ++m) {
    const auto& msg = graph.messages()[m];
    if (msg.publish_t < spec.window_start || msg.publish_t > spec.window_end) continue;
    auto row = row_of(msg.node, msg.topic);
    if (!row) continue;
    const bool in_flow = flow && flow->contains_message(m);
    out += fmt::format("<circle class=\"pub{}\" cx=\"{:.2f}\" cy=\"{}\" r=\"3\" fill=\"#000\"{}>"
                       "<title>{}</title></circle>\n",
                       style(in_flow), x(msg.publish_t), lane_y(*row) + kLaneHeight / 2,
                       opacity(in_flow), escape_xml(to_string(msg.key)));
  }

  for (std::size_t e = 0; e < graph.causal_edges().size(); ++e) {
    const auto& edge = graph.causal_edges()[e];
    const auto& cb = graph.callbacks()[edge.callback];
    const auto& msg = graph.messages()[edge.message];
    if (msg.publish_t < spec.window_start || msg.publish_t > spec.window_end) continue;
    auto from = row_of(cb.node, cb.topic);
    auto to = row_of(msg.node, msg.topic);
    if (!from || !to) continue;
    const bool in_flow = flow && std::binary_search(flow->causal_edges.begin(),
                                                    flow->causal_edges.end(), e);
    const Timestamp leave = cb.end_t ? std::min(*cb.end_t, msg.publish_t) : msg.publish_t;
    out += fmt::format("<line class=\"link{}\" x1=\"{:.2f}\" y1=\"{}\" x2=\"{:.2f}\" y2=\"{}\" "
                       "stroke=\"#999\" stroke-dasharray=\"3,2\" "
                       "marker-end=\"url(#arrow-link)\"{}/>\n",
                       style(in_flow), x(leave), lane_y(*from) + kLaneHeight / 2,
                       x(msg.publish_t), lane_y(*to) + kLaneHeight / 2, opacity(in_flow));
  }

  for (std::size_t e = 0; e < graph.transport_edges().size(); ++e) {
    const auto& edge = graph.transport_edges()[e];
    const auto& msg = graph.messages()[edge.message];
    const auto& cb = graph.callbacks()[edge.callback];
    if (msg.publish_t > spec.window_end || cb.start_t < spec.window_start) continue;
    auto from = row_of(msg.node, msg.topic);
    auto to = row_of(cb.node, cb.topic);
    if (!from || !to) continue;
    const bool in_flow = flow && std::binary_search(flow->transport_edges.begin(),
                                                    flow->transport_edges.end(), e);
    out += fmt::format("<line class=\"transfer{}\" x1=\"{:.2f}\" y1=\"{}\" x2=\"{:.2f}\" "
                       "y2=\"{}\" stroke=\"#000\" stroke-width=\"{}\" "
                       "marker-end=\"url(#arrow-transfer)\"{}/>\n",
                       style(in_flow), x(msg.publish_t), lane_y(*from) + kLaneHeight / 2,
                       x(cb.start_t), lane_y(*to) + kLaneHeight / 2, in_flow ? 2 : 1,
                       opacity(in_flow));
  }

  out += "</svg>\n";
  return out;
}

std::string render_thread_view(const EventLog& log) {
  const auto timelines = thread_states(log);
  Timestamp t0 = 0;
  Timestamp t1 = 1;
  if (!timelines.empty()) {
    t0 = timelines.front().span_start;
    t1 = timelines.front().span_end;
    for (const auto& tl : timelines) {
      t0 = std::min(t0, tl.span_start);
      t1 = std::max(t1, tl.span_end);
    }
    if (t1 <= t0) t1 = t0 + 1;
  }
  constexpr int kWidth = 1200;
  const int lanes = static_cast<int>(timelines.size());
  const int height = kTopMargin + lanes * kLaneHeight + kAxisHeight;
  const Scale x{t0, t1, static_cast<double>(kLabelWidth),
                static_cast<double>(kWidth - kLabelWidth - kRightMargin)};

  std::string out;
  open_svg(out, kWidth, height);
  for (std::size_t i = 0; i < timelines.size(); ++i) {
    const auto& tl = timelines[i];
    const int y = kTopMargin + static_cast<int>(i) * kLaneHeight;
    out += fmt::format("<text class=\"lane-label\" x=\"4\" y=\"{}\">{} pid {} tid {}{}</text>\n",
                       y + kLaneHeight / 2 + 4, escape_xml(tl.host), tl.pid, tl.tid,
                       tl.node_label.empty() ? "" : " (" + escape_xml(tl.node_label) + ")");
    for (const auto& interval : tl.intervals) {
      const bool active = interval.state == ThreadState::kActive;
      const double x1 = x(interval.start_t);
      const double x2 = x(interval.end_t);
      out += fmt::format("<rect class=\"{}\" x=\"{:.2f}\" y=\"{}\" width=\"{:.2f}\" "
                         "height=\"{}\" fill=\"{}\"/>\n",
                         active ? "active" : "idle", x1, y + 4, std::max(x2 - x1, 0.5),
                         kLaneHeight - 8, active ? kActiveColor : kIdleColor);
    }
  }
  draw_axis(out, x, kTopMargin + lanes * kLaneHeight);
  out += "</svg>\n";
  return out;
}

std::string render_report(const Breakdown& breakdown) {
  std::size_t width = std::string_view("segment").size();
  for (const auto& row : breakdown.rows) width = std::max(width, row.label.size());
  width += 2;
  std::string out = fmt::format("{:<{}}{:>10}{:>9}\n", "segment", width, "time_ms", "percent");
  for (const auto& row : breakdown.rows) {
    out += fmt::format("{:<{}}{:>10.1f}{:>9.1f}\n", row.label, width, row.time_ms, row.percent);
  }
  out += fmt::format("{:<{}}{:>10.1f}{:>9.1f}\n", "total", width, breakdown.total_ms,
                     breakdown.total > 0 ? 100.0 : 0.0);
  return out;
}

std::string render_dot(const FlowGraph& graph, const Topology& topology) {
  std::string out = "digraph flow {\n  rankdir=LR;\n";
  for (std::size_t m = 0; m < graph.messages().size(); ++m) {
    out += fmt::format("  m{} [shape=box, label=\"{}\", tooltip=\"{}\"];\n", m,
                       escape_dot(message_label(graph, topology, m)),
                       escape_dot(to_string(graph.messages()[m].key)));
  }
  for (std::size_t c = 0; c < graph.callbacks().size(); ++c) {
    out += fmt::format("  c{} [shape=ellipse, label=\"{}\", tooltip=\"{}\"];\n", c,
                       escape_dot(callback_label(graph, topology, c)),
                       escape_dot(graph.callbacks()[c].id));
  }
  for (const auto& e : graph.transport_edges()) {
    out += fmt::format("  m{} -> c{} [label=\"{:.3f} ms\"];\n", e.message, e.callback,
                       ms(e.latency));
  }
  for (const auto& e : graph.causal_edges()) {
    const auto gap = graph.messages()[e.message].publish_t - graph.callbacks()[e.callback].start_t;
    out += fmt::format("  c{} -> m{} [label=\"{:.3f} ms\", style=dashed, color=gray{}];\n",
                       e.callback, e.message, ms(gap),
                       e.origin == CausalOrigin::kAnnotated ? ", arrowhead=diamond" : "");
  }
  out += "}\n";
  return out;
}

json breakdown_json(const Breakdown& breakdown) {
  json rows = json::array();
  for (const auto& row : breakdown.rows) {
    rows.push_back({{"label", row.label}, {"time_ms", row.time_ms}, {"percent", row.percent}});
  }
  return {{"rows", rows}, {"total_ms", breakdown.total_ms}};
}

json critical_path_json(const CriticalPath& path, const FlowGraph& graph) {
  json segments = json::array();
  for (const auto& s : path.segments) {
    segments.push_back({{"kind", std::string(to_string(s.kind))},
                        {"label", s.label},
                        {"start_t", s.start_t},
                        {"end_t", s.end_t},
                        {"duration_ns", s.duration()}});
  }
  json vertices = json::array();
  for (const auto& v : path.vertices) {
    if (v.is_message()) {
      vertices.push_back({{"message", to_string(graph.messages()[v.index].key)}});
    } else {
      const auto& cb = graph.callbacks()[v.index];
      vertices.push_back({{"callback", cb.id}, {"sub", cb.sub}});
    }
  }
  return {{"total_ns", path.total},
          {"total_ms", ms(path.total)},
          {"vertices", vertices},
          {"segments", segments}};
}

json flow_json(const MessageFlow& flow, const FlowGraph& graph, const Topology& topology) {
  json messages = json::array();
  for (auto m : flow.messages) {
    const auto& msg = graph.messages()[m];
    messages.push_back({{"key", to_string(msg.key)},
                        {"label", message_label(graph, topology, m)},
                        {"publish_t", msg.publish_t}});
  }
  json callbacks = json::array();
  for (auto c : flow.callbacks) {
    const auto& cb = graph.callbacks()[c];
    json entry{{"cb", cb.id}, {"sub", cb.sub}, {"label", callback_label(graph, topology, c)},
               {"start_t", cb.start_t}};
    entry["end_t"] = cb.end_t ? json(*cb.end_t) : json(nullptr);
    callbacks.push_back(std::move(entry));
  }
  return {{"root", to_string(flow.root)},
          {"direction", std::string(to_string(flow.direction))},
          {"messages", messages},
          {"callbacks", callbacks}};
}

json drops_json(const DropReport& report) {
  json subs = json::array();
  for (const auto& s : report.subscriptions) {
    json dropped = json::array();
    for (const auto& key : s.dropped) dropped.push_back(to_string(key));
    subs.push_back({{"sub", s.sub},
                    {"node", s.node},
                    {"topic", s.topic},
                    {"publish_count", s.publish_count},
                    {"matched_count", s.matched_count},
                    {"drop_count", s.drop_count},
                    {"in_flight_count", s.in_flight_count},
                    {"drop_rate", s.drop_rate()},
                    {"dropped", dropped}});
  }
  return {{"tail_window_ns", report.tail_window},
          {"total_drops", report.total_drops()},
          {"subscriptions", subs}};
}

json latency_json(const std::vector<LatencyStats>& stats) {
  json out = json::array();
  for (const auto& s : stats) {
    out.push_back({{"pub", s.pub},
                   {"sub", s.sub},
                   {"topic", s.topic},
                   {"pub_node", s.pub_node},
                   {"sub_node", s.sub_node},
                   {"count", s.count},
                   {"min_ns", s.min},
                   {"max_ns", s.max},
                   {"mean_ns", s.mean},
                   {"p50_ns", s.p50},
                   {"p95_ns", s.p95},
                   {"p99_ns", s.p99}});
  }
  return out;
}

json outliers_json(const std::vector<Outlier>& outliers) {
  json out = json::array();
  for (const auto& o : outliers) {
    out.push_back({{"sub", o.sub}, {"cb", o.cb}, {"duration_ns", o.duration},
                   {"median_ns", o.median}});
  }
  return out;
}

json threads_json(const std::vector<ThreadTimeline>& timelines) {
  json out = json::array();
  for (const auto& tl : timelines) {
    json intervals = json::array();
    for (const auto& i : tl.intervals) {
      intervals.push_back({{"start_t", i.start_t}, {"end_t", i.end_t},
                           {"state", std::string(to_string(i.state))}});
    }
    out.push_back({{"host", tl.host},
                   {"pid", tl.pid},
                   {"tid", tl.tid},
                   {"node", tl.node_label},
                   {"span_start", tl.span_start},
                   {"span_end", tl.span_end},
                   {"active_fraction", tl.active_fraction()},
                   {"intervals", intervals},
                   {"notes", tl.notes}});
  }
  return out;
}

json violations_json(const std::vector<Violation>& violations) {
  json out = json::array();
  for (const auto& v : violations) {
    json entry{{"kind", std::string(to_string(v.kind))}, {"message", v.message}};
    if (v.source) {
      entry["file"] = v.source->file;
      entry["line"] = v.source->line;
    }
    out.push_back(std::move(entry));
  }
  return out;
}

json graph_json(const FlowGraphBuild& build, const Topology& topology) {
  const auto& g = build.graph;
  json transport = json::array();
  for (const auto& e : g.transport_edges()) {
    transport.push_back({{"message", to_string(g.messages()[e.message].key)},
                         {"cb", g.callbacks()[e.callback].id},
                         {"sub", g.callbacks()[e.callback].sub},
                         {"latency_ns", e.latency}});
  }
  json causal = json::array();
  for (const auto& e : g.causal_edges()) {
    causal.push_back({{"cb", g.callbacks()[e.callback].id},
                      {"sub", g.callbacks()[e.callback].sub},
                      {"message", to_string(g.messages()[e.message].key)},
                      {"origin", std::string(to_string(e.origin))}});
  }
  json unmatched = json::array();
  for (const auto& u : build.unmatched) {
    unmatched.push_back({{"sub", u.sub}, {"message", to_string(g.messages()[u.message].key)}});
  }
  json diagnostics = json::array();
  for (const auto& d : build.diagnostics) {
    diagnostics.push_back({{"kind", std::string(to_string(d.kind))}, {"message", d.message}});
  }
  (void)topology;
  return {{"messages", g.messages().size()},
          {"callbacks", g.callbacks().size()},
          {"transport_edges", transport},
          {"causal_edges", causal},
          {"unmatched", unmatched},
          {"diagnostics", diagnostics}};
}

}  // namespace msgflow
