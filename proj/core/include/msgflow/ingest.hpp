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

#ifndef MSGFLOW_INGEST_HPP_
#define MSGFLOW_INGEST_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "msgflow/trace_model.hpp"

namespace msgflow {

struct NodeInfo {
  EntityId id;
  std::string name;
  std::string host;
  std::int64_t pid = 0;
  std::int64_t tid = 0;
};

struct PublisherInfo {
  EntityId id;
  EntityId node;
  std::string topic;
};

struct SubscriptionInfo {
  EntityId id;
  EntityId node;
  std::string topic;
  std::uint32_t queue_depth = 1;
};

// Entity tables assembled from the *_init records, each in first-seen order.
struct Topology {
  std::vector<NodeInfo> nodes;
  std::vector<PublisherInfo> publishers;
  std::vector<SubscriptionInfo> subscriptions;

  const NodeInfo* find_node(std::string_view id) const;
  const PublisherInfo* find_publisher(std::string_view id) const;
  const SubscriptionInfo* find_subscription(std::string_view id) const;

  // Node display name, falling back to the id when no node_init named it.
  std::string node_label(std::string_view id) const;

  // Distinct topics referenced by any publisher or subscription, sorted.
  std::vector<std::string> topics() const;
};

// Where an event came from on disk. Empty file for in-memory logs.
struct SourceRef {
  std::string file;
  std::size_t line = 0;
};

// Time-ordered events for one or more hosts. Ordering is by timestamp, then
// host name, then input order within the host.
struct EventLog {
  std::vector<TraceEvent> events;
  // Parallel to `events` when present; empty otherwise.
  std::vector<SourceRef> sources;
  Topology topology;
  // Sorted, distinct.
  std::vector<std::string> hosts;

  const SourceRef* source_of(std::size_t index) const {
    return index < sources.size() ? &sources[index] : nullptr;
  }
  Timestamp first_time() const { return events.empty() ? 0 : events.front().t; }
  Timestamp last_time() const { return events.empty() ? 0 : events.back().t; }
};

// Builds an EventLog from events in input order (per host). Sorting and
// topology assembly follow the same rules as load_bundle.
EventLog make_event_log(std::vector<TraceEvent> events, std::vector<SourceRef> sources = {});

enum class ViolationKind {
  kUnknownNode,
  kUnknownPublisher,
  kUnknownSubscription,
  kDuplicateEntity,
  kUnterminatedCallback,
  kUnmatchedCallbackEnd,
  kDuplicateCallbackEnd,
  kCallbackEndsBeforeStart,
  kCallbackThreadMismatch,
  kSequenceRegression,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string message;
  // Index into EventLog::events of the offending record.
  std::size_t event_index = 0;
  std::optional<SourceRef> source;
};

// "file:line: message" when the source is known.
std::string format_violation(const Violation& violation);

// Every invariant violation in the log, in event order. Empty iff clean.
std::vector<Violation> validate(const EventLog& log);

class BundleError : public Error {
 public:
  using Error::Error;
};

struct LoadOptions {
  // Fail the load when validation reports anything.
  bool strict = false;
};

struct LoadResult {
  EventLog log;
  std::vector<Violation> warnings;
};

// Loads every `*.jsonl` file in `dir` (files are visited in name order, so
// results do not depend on directory iteration order). Decode errors throw
// BundleError carrying file and line.
LoadResult load_bundle(const std::filesystem::path& dir, const LoadOptions& options = {});

// Writes one `<host>.jsonl` per host, events in log order.
void write_bundle(const EventLog& log, const std::filesystem::path& dir);

}  // namespace msgflow

#endif  // MSGFLOW_INGEST_HPP_
