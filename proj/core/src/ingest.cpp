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

#include "msgflow/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <utility>

#include <fmt/format.h>

namespace msgflow {
namespace {

template <typename T>
const T* find_by_id(const std::vector<T>& items, std::string_view id) {
  for (const auto& item : items) {
    if (item.id == id) return &item;
  }
  return nullptr;
}

struct ParsedFile {
  std::vector<TraceEvent> events;
  std::vector<SourceRef> sources;
};

ParsedFile parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BundleError(fmt::format("cannot open {}", path.string()));
  ParsedFile parsed;
  std::string line;
  std::size_t line_no = 0;
  const auto file = path.filename().string();
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      parsed.events.push_back(decode_event(line));
    } catch (const FormatError& e) {
      throw BundleError(fmt::format("{}:{}: {}", file, line_no, e.what()));
    }
    parsed.sources.push_back(SourceRef{file, line_no});
  }
  return parsed;
}

Topology assemble_topology(const std::vector<TraceEvent>& events) {
  Topology topology;
  for (const auto& event : events) {
    if (const auto* init = event.as<NodeInit>()) {
      if (!find_by_id(topology.nodes, init->node)) {
        topology.nodes.push_back(NodeInfo{init->node, init->name, event.host, event.pid, event.tid});
      }
    } else if (const auto* init = event.as<PubInit>()) {
      if (!find_by_id(topology.publishers, init->pub)) {
        topology.publishers.push_back(PublisherInfo{init->pub, init->node, init->topic});
      }
    } else if (const auto* init = event.as<SubInit>()) {
      if (!find_by_id(topology.subscriptions, init->sub)) {
        topology.subscriptions.push_back(
            SubscriptionInfo{init->sub, init->node, init->topic, init->queue_depth});
      }
    }
  }
  return topology;
}

}  // namespace

const NodeInfo* Topology::find_node(std::string_view id) const { return find_by_id(nodes, id); }

const PublisherInfo* Topology::find_publisher(std::string_view id) const {
  return find_by_id(publishers, id);
}

const SubscriptionInfo* Topology::find_subscription(std::string_view id) const {
  return find_by_id(subscriptions, id);
}

std::string Topology::node_label(std::string_view id) const {
  const auto* node = find_node(id);
  if (node && !node->name.empty()) return node->name;
  return std::string(id);
}

std::vector<std::string> Topology::topics() const {
  std::set<std::string> unique;
  for (const auto& p : publishers) unique.insert(p.topic);
  for (const auto& s : subscriptions) unique.insert(s.topic);
  return {unique.begin(), unique.end()};
}

EventLog make_event_log(std::vector<TraceEvent> events, std::vector<SourceRef> sources) {
  const bool has_sources = sources.size() == events.size() && !sources.empty();
  std::vector<std::size_t> order(events.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&events](std::size_t a, std::size_t b) {
    const auto& ea = events[a];
    const auto& eb = events[b];
    if (ea.t != eb.t) return ea.t < eb.t;
    return ea.host < eb.host;
  });

  EventLog log;
  log.events.reserve(events.size());
  if (has_sources) log.sources.reserve(events.size());
  std::set<std::string> hosts;
  for (auto index : order) {
    hosts.insert(events[index].host);
    log.events.push_back(std::move(events[index]));
    if (has_sources) log.sources.push_back(std::move(sources[index]));
  }
  log.hosts.assign(hosts.begin(), hosts.end());
  log.topology = assemble_topology(log.events);
  return log;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kUnknownNode: return "unknown node";
    case ViolationKind::kUnknownPublisher: return "unknown publisher";
    case ViolationKind::kUnknownSubscription: return "unknown subscription";
    case ViolationKind::kDuplicateEntity: return "duplicate entity";
    case ViolationKind::kUnterminatedCallback: return "unterminated callback";
    case ViolationKind::kUnmatchedCallbackEnd: return "unmatched callback end";
    case ViolationKind::kDuplicateCallbackEnd: return "duplicate callback end";
    case ViolationKind::kCallbackEndsBeforeStart: return "callback ends before start";
    case ViolationKind::kCallbackThreadMismatch: return "callback thread mismatch";
    case ViolationKind::kSequenceRegression: return "sequence regression";
  }
  return "violation";
}

std::string format_violation(const Violation& violation) {
  if (violation.source && !violation.source->file.empty()) {
    return fmt::format("{}:{}: {}", violation.source->file, violation.source->line,
                       violation.message);
  }
  return violation.message;
}

std::vector<Violation> validate(const EventLog& log) {
  std::vector<Violation> out;
  auto report = [&](ViolationKind kind, std::size_t index, std::string message) {
    Violation v{kind, std::move(message), index, std::nullopt};
    if (const auto* src = log.source_of(index)) v.source = *src;
    out.push_back(std::move(v));
  };

  std::set<std::string> nodes;
  std::set<std::string> pubs;
  std::set<std::string> subs;
  for (const auto& n : log.topology.nodes) nodes.insert(n.id);
  for (const auto& p : log.topology.publishers) pubs.insert(p.id);
  for (const auto& s : log.topology.subscriptions) subs.insert(s.id);

  std::set<std::string> seen_nodes;
  std::set<std::string> seen_pubs;
  std::set<std::string> seen_subs;

  struct OpenCallback {
    std::size_t start_index;
    bool ended = false;
  };
  std::map<std::pair<std::string, std::string>, OpenCallback> callbacks;
  std::unordered_map<std::string, std::uint64_t> last_seq;

  for (std::size_t i = 0; i < log.events.size(); ++i) {
    const auto& event = log.events[i];
    switch (event.kind()) {
      case EventKind::kNodeInit: {
        const auto& p = std::get<NodeInit>(event.payload);
        if (!seen_nodes.insert(p.node).second) {
          report(ViolationKind::kDuplicateEntity, i, fmt::format("duplicate node {}", p.node));
        }
        break;
      }
      case EventKind::kPubInit: {
        const auto& p = std::get<PubInit>(event.payload);
        if (!seen_pubs.insert(p.pub).second) {
          report(ViolationKind::kDuplicateEntity, i, fmt::format("duplicate publisher {}", p.pub));
        }
        if (!nodes.count(p.node)) {
          report(ViolationKind::kUnknownNode, i,
                 fmt::format("publisher {} references unknown node {}", p.pub, p.node));
        }
        break;
      }
      case EventKind::kSubInit: {
        const auto& p = std::get<SubInit>(event.payload);
        if (!seen_subs.insert(p.sub).second) {
          report(ViolationKind::kDuplicateEntity, i,
                 fmt::format("duplicate subscription {}", p.sub));
        }
        if (!nodes.count(p.node)) {
          report(ViolationKind::kUnknownNode, i,
                 fmt::format("subscription {} references unknown node {}", p.sub, p.node));
        }
        break;
      }
      case EventKind::kPublish: {
        const auto& key = std::get<Publish>(event.payload).key;
        if (!pubs.count(key.pub)) {
          report(ViolationKind::kUnknownPublisher, i,
                 fmt::format("unknown publisher {}", key.pub));
        }
        auto [it, inserted] = last_seq.try_emplace(key.pub, key.seq);
        if (!inserted) {
          if (key.seq <= it->second) {
            report(ViolationKind::kSequenceRegression, i,
                   fmt::format("sequence regression on publisher {}: {} after {}", key.pub,
                               key.seq, it->second));
          } else {
            it->second = key.seq;
          }
        }
        break;
      }
      case EventKind::kCbStart: {
        const auto& p = std::get<CallbackStart>(event.payload);
        if (!subs.count(p.sub)) {
          report(ViolationKind::kUnknownSubscription, i,
                 fmt::format("unknown subscription {}", p.sub));
        }
        auto [it, inserted] = callbacks.try_emplace({p.sub, p.cb}, OpenCallback{i});
        if (!inserted) {
          report(ViolationKind::kDuplicateEntity, i,
                 fmt::format("duplicate callback {} on subscription {}", p.cb, p.sub));
        }
        break;
      }
      case EventKind::kCbEnd: {
        const auto& p = std::get<CallbackEnd>(event.payload);
        if (!subs.count(p.sub)) {
          report(ViolationKind::kUnknownSubscription, i,
                 fmt::format("unknown subscription {}", p.sub));
        }
        auto it = callbacks.find({p.sub, p.cb});
        if (it == callbacks.end()) {
          report(ViolationKind::kUnmatchedCallbackEnd, i,
                 fmt::format("callback end {} on {} has no start", p.cb, p.sub));
          break;
        }
        if (it->second.ended) {
          report(ViolationKind::kDuplicateCallbackEnd, i,
                 fmt::format("callback {} on {} ended twice", p.cb, p.sub));
          break;
        }
        it->second.ended = true;
        const auto& start = log.events[it->second.start_index];
        if (event.t < start.t) {
          report(ViolationKind::kCallbackEndsBeforeStart, i,
                 fmt::format("callback {} on {} ends before it starts", p.cb, p.sub));
        }
        if (event.tid != start.tid || event.host != start.host || event.pid != start.pid) {
          report(ViolationKind::kCallbackThreadMismatch, i,
                 fmt::format("callback {} on {} starts on tid {} but ends on tid {}", p.cb, p.sub,
                             start.tid, event.tid));
        }
        break;
      }
      case EventKind::kLink:
        // Dangling link keys are diagnosed when the flow graph is built.
        break;
    }
  }

  for (const auto& [id, open] : callbacks) {
    if (!open.ended) {
      report(ViolationKind::kUnterminatedCallback, open.start_index,
             fmt::format("unterminated callback {} on {}", id.second, id.first));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) {
    return a.event_index < b.event_index;
  });
  return out;
}

LoadResult load_bundle(const std::filesystem::path& dir, const LoadOptions& options) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    throw BundleError(fmt::format("{} is not a directory", dir.string()));
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) throw BundleError(fmt::format("no .jsonl files in {}", dir.string()));
  std::sort(files.begin(), files.end());

  std::vector<std::future<ParsedFile>> pending;
  pending.reserve(files.size());
  for (const auto& file : files) {
    pending.push_back(std::async(std::launch::async, parse_file, file));
  }
  std::vector<TraceEvent> events;
  std::vector<SourceRef> sources;
  for (auto& future : pending) {
    auto parsed = future.get();
    events.insert(events.end(), std::make_move_iterator(parsed.events.begin()),
                  std::make_move_iterator(parsed.events.end()));
    sources.insert(sources.end(), std::make_move_iterator(parsed.sources.begin()),
                   std::make_move_iterator(parsed.sources.end()));
  }

  LoadResult result;
  result.log = make_event_log(std::move(events), std::move(sources));
  result.warnings = validate(result.log);
  if (options.strict && !result.warnings.empty()) {
    throw BundleError(fmt::format("{} validation problem(s); first: {}", result.warnings.size(),
                                  format_violation(result.warnings.front())));
  }
  return result;
}

void write_bundle(const EventLog& log, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::map<std::string, std::ofstream> files;
  for (const auto& host : log.hosts) {
    auto path = dir / (host + ".jsonl");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw BundleError(fmt::format("cannot write {}", path.string()));
    files.emplace(host, std::move(out));
  }
  for (const auto& event : log.events) {
    auto& out = files.at(event.host);
    out << encode_event(event) << '\n';
  }
  for (auto& [host, out] : files) {
    out.flush();
    if (!out) throw BundleError(fmt::format("write failed for host {}", host));
  }
}

}  // namespace msgflow
