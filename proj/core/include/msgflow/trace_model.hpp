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

#ifndef MSGFLOW_TRACE_MODEL_HPP_
#define MSGFLOW_TRACE_MODEL_HPP_

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace msgflow {

// Nanoseconds on some host clock (host-local before correction, reference
// timeline after).
using Timestamp = std::int64_t;
using Duration = std::int64_t;

// Node, publisher, subscription and callback-instance identifiers.
using EntityId = std::string;

inline constexpr Duration kNanosPerMilli = 1'000'000;
inline constexpr Duration kNanosPerSecond = 1'000'000'000;

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by encode_event/decode_event. `field()` names the offending record
// field when the problem is attributable to one.
class FormatError : public Error {
 public:
  FormatError(std::string message, std::string field = {})
      : Error(std::move(message)), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// A message is identified by its publisher and the per-publisher sequence
// number stamped at publish time.
struct MessageKey {
  EntityId pub;
  std::uint64_t seq = 0;

  friend auto operator<=>(const MessageKey&, const MessageKey&) = default;
  friend bool operator==(const MessageKey&, const MessageKey&) = default;
};

// "PUB:SEQ"; the split is on the last colon so publisher ids may contain ':'.
std::string to_string(const MessageKey& key);
std::optional<MessageKey> parse_message_key(std::string_view text);

struct MessageKeyHash {
  std::size_t operator()(const MessageKey& key) const noexcept {
    return std::hash<std::string>{}(key.pub) ^
           (std::hash<std::uint64_t>{}(key.seq) * 0x9e3779b97f4a7c15ULL);
  }
};

enum class EventKind { kNodeInit, kPubInit, kSubInit, kPublish, kCbStart, kCbEnd, kLink };

std::string_view to_string(EventKind kind);
std::optional<EventKind> parse_event_kind(std::string_view text);

struct NodeInit {
  EntityId node;
  std::string name;
  friend bool operator==(const NodeInit&, const NodeInit&) = default;
};

struct PubInit {
  EntityId pub;
  EntityId node;
  std::string topic;
  friend bool operator==(const PubInit&, const PubInit&) = default;
};

struct SubInit {
  EntityId sub;
  EntityId node;
  std::string topic;
  std::uint32_t queue_depth = 1;
  friend bool operator==(const SubInit&, const SubInit&) = default;
};

struct Publish {
  MessageKey key;
  friend bool operator==(const Publish&, const Publish&) = default;
};

struct CallbackStart {
  EntityId sub;
  EntityId cb;
  MessageKey src;
  friend bool operator==(const CallbackStart&, const CallbackStart&) = default;
};

struct CallbackEnd {
  EntityId sub;
  EntityId cb;
  friend bool operator==(const CallbackEnd&, const CallbackEnd&) = default;
};

// Explicit causal annotation: `out` was produced from every key in `in`.
struct Link {
  MessageKey out;
  std::vector<MessageKey> in;
  friend bool operator==(const Link&, const Link&) = default;
};

// Alternative order matches EventKind.
using Payload =
    std::variant<NodeInit, PubInit, SubInit, Publish, CallbackStart, CallbackEnd, Link>;

struct TraceEvent {
  Timestamp t = 0;
  std::string host;
  std::int64_t pid = 0;
  std::int64_t tid = 0;
  Payload payload;
  // Unrecognised record fields, kept in input order so they survive a
  // decode/encode cycle.
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  EventKind kind() const { return static_cast<EventKind>(payload.index()); }

  template <typename T>
  const T* as() const {
    return std::get_if<T>(&payload);
  }

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

// Checks the per-record invariants (t >= 0, non-empty ids, ...). Throws
// FormatError naming the first offending field.
void check_event(const TraceEvent& event);

// One JSON-lines record, no trailing newline. Keys are emitted in a fixed
// order: t, host, pid, tid, kind, the kind's payload fields, then extras.
std::string encode_event(const TraceEvent& event);

// Parses one record. Throws FormatError for malformed JSON, missing or
// mistyped fields, negative timestamps and unknown kinds.
TraceEvent decode_event(std::string_view line);

}  // namespace msgflow

#endif  // MSGFLOW_TRACE_MODEL_HPP_
