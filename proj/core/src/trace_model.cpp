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

#include "msgflow/trace_model.hpp"

#include <array>
#include <charconv>
#include <utility>

#include <fmt/format.h>

namespace msgflow {
namespace {

using ojson = nlohmann::ordered_json;

constexpr std::array<std::string_view, 7> kKindNames = {
    "node_init", "pub_init", "sub_init", "publish", "cb_start", "cb_end", "link"};

constexpr std::array<std::string_view, 5> kCommonFields = {"t", "host", "pid", "tid", "kind"};

// Payload field names per kind, in encoding order.
const std::vector<std::string_view>& payload_fields(EventKind kind) {
  static const std::array<std::vector<std::string_view>, 7> fields = {{
      {"node", "name"},
      {"pub", "node", "topic"},
      {"sub", "node", "topic", "queue_depth"},
      {"pub", "seq"},
      {"sub", "cb", "src_pub", "src_seq"},
      {"sub", "cb"},
      {"out_pub", "out_seq", "in"},
  }};
  return fields[static_cast<std::size_t>(kind)];
}

bool is_known_field(EventKind kind, std::string_view key) {
  for (auto f : kCommonFields) {
    if (f == key) return true;
  }
  for (auto f : payload_fields(kind)) {
    if (f == key) return true;
  }
  return false;
}

void require_id(const std::string& value, std::string_view field) {
  if (value.empty()) {
    throw FormatError(fmt::format("field '{}' must be a non-empty string", field),
                      std::string(field));
  }
}

const ojson& require(const ojson& record, std::string_view field) {
  auto it = record.find(std::string(field));
  if (it == record.end()) {
    throw FormatError(fmt::format("missing field '{}'", field), std::string(field));
  }
  return *it;
}

std::string get_string(const ojson& record, std::string_view field) {
  const auto& value = require(record, field);
  if (!value.is_string()) {
    throw FormatError(fmt::format("field '{}' must be a string", field), std::string(field));
  }
  return value.get<std::string>();
}

std::int64_t get_int(const ojson& record, std::string_view field) {
  const auto& value = require(record, field);
  if (value.is_number_unsigned()) {
    auto v = value.get<std::uint64_t>();
    if (v > static_cast<std::uint64_t>(INT64_MAX)) {
      throw FormatError(fmt::format("field '{}' out of range", field), std::string(field));
    }
    return static_cast<std::int64_t>(v);
  }
  if (value.is_number_integer()) return value.get<std::int64_t>();
  throw FormatError(fmt::format("field '{}' must be an integer", field), std::string(field));
}

std::uint64_t get_uint(const ojson& record, std::string_view field) {
  const auto& value = require(record, field);
  if (value.is_number_unsigned()) return value.get<std::uint64_t>();
  if (value.is_number_integer()) {
    auto v = value.get<std::int64_t>();
    if (v >= 0) return static_cast<std::uint64_t>(v);
  }
  throw FormatError(fmt::format("field '{}' must be a non-negative integer", field),
                    std::string(field));
}

MessageKey get_key_object(const ojson& entry) {
  if (!entry.is_object()) {
    throw FormatError("entries of 'in' must be objects with pub and seq", "in");
  }
  return MessageKey{get_string(entry, "pub"), get_uint(entry, "seq")};
}

}  // namespace

std::string to_string(const MessageKey& key) { return fmt::format("{}:{}", key.pub, key.seq); }

std::optional<MessageKey> parse_message_key(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) {
    return std::nullopt;
  }
  std::uint64_t seq = 0;
  auto digits = text.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), seq);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
  return MessageKey{std::string(text.substr(0, colon)), seq};
}

std::string_view to_string(EventKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<EventKind> parse_event_kind(std::string_view text) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == text) return static_cast<EventKind>(i);
  }
  return std::nullopt;
}

void check_event(const TraceEvent& event) {
  if (event.t < 0) throw FormatError("negative timestamp", "t");
  require_id(event.host, "host");
  if (!event.extra.is_object()) throw FormatError("extra fields must form an object");
  for (const auto& [key, value] : event.extra.items()) {
    if (is_known_field(event.kind(), key)) {
      throw FormatError(fmt::format("extra field '{}' shadows a record field", key), key);
    }
  }
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NodeInit>) {
          require_id(p.node, "node");
        } else if constexpr (std::is_same_v<T, PubInit>) {
          require_id(p.pub, "pub");
          require_id(p.node, "node");
          require_id(p.topic, "topic");
        } else if constexpr (std::is_same_v<T, SubInit>) {
          require_id(p.sub, "sub");
          require_id(p.node, "node");
          require_id(p.topic, "topic");
          if (p.queue_depth < 1) throw FormatError("queue_depth must be >= 1", "queue_depth");
        } else if constexpr (std::is_same_v<T, Publish>) {
          require_id(p.key.pub, "pub");
        } else if constexpr (std::is_same_v<T, CallbackStart>) {
          require_id(p.sub, "sub");
          require_id(p.cb, "cb");
          require_id(p.src.pub, "src_pub");
        } else if constexpr (std::is_same_v<T, CallbackEnd>) {
          require_id(p.sub, "sub");
          require_id(p.cb, "cb");
        } else if constexpr (std::is_same_v<T, Link>) {
          require_id(p.out.pub, "out_pub");
          if (p.in.empty()) throw FormatError("link must name at least one input", "in");
          for (const auto& key : p.in) require_id(key.pub, "in");
        }
      },
      event.payload);
}

std::string encode_event(const TraceEvent& event) {
  check_event(event);
  ojson record;
  record["t"] = event.t;
  record["host"] = event.host;
  record["pid"] = event.pid;
  record["tid"] = event.tid;
  record["kind"] = to_string(event.kind());
  std::visit(
      [&record](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, NodeInit>) {
          record["node"] = p.node;
          record["name"] = p.name;
        } else if constexpr (std::is_same_v<T, PubInit>) {
          record["pub"] = p.pub;
          record["node"] = p.node;
          record["topic"] = p.topic;
        } else if constexpr (std::is_same_v<T, SubInit>) {
          record["sub"] = p.sub;
          record["node"] = p.node;
          record["topic"] = p.topic;
          record["queue_depth"] = p.queue_depth;
        } else if constexpr (std::is_same_v<T, Publish>) {
          record["pub"] = p.key.pub;
          record["seq"] = p.key.seq;
        } else if constexpr (std::is_same_v<T, CallbackStart>) {
          record["sub"] = p.sub;
          record["cb"] = p.cb;
          record["src_pub"] = p.src.pub;
          record["src_seq"] = p.src.seq;
        } else if constexpr (std::is_same_v<T, CallbackEnd>) {
          record["sub"] = p.sub;
          record["cb"] = p.cb;
        } else if constexpr (std::is_same_v<T, Link>) {
          record["out_pub"] = p.out.pub;
          record["out_seq"] = p.out.seq;
          auto inputs = ojson::array();
          for (const auto& key : p.in) {
            ojson entry;
            entry["pub"] = key.pub;
            entry["seq"] = key.seq;
            inputs.push_back(std::move(entry));
          }
          record["in"] = std::move(inputs);
        }
      },
      event.payload);
  for (const auto& [key, value] : event.extra.items()) record[key] = value;
  return record.dump();
}

TraceEvent decode_event(std::string_view line) {
  ojson record;
  try {
    record = ojson::parse(line);
  } catch (const ojson::parse_error& e) {
    throw FormatError(fmt::format("malformed JSON: {}", e.what()));
  }
  if (!record.is_object()) throw FormatError("record must be a JSON object");

  TraceEvent event;
  event.t = get_int(record, "t");
  if (event.t < 0) throw FormatError("negative timestamp", "t");
  event.host = get_string(record, "host");
  event.pid = get_int(record, "pid");
  event.tid = get_int(record, "tid");
  auto kind_name = get_string(record, "kind");
  auto kind = parse_event_kind(kind_name);
  if (!kind) throw FormatError(fmt::format("unknown event kind '{}'", kind_name), "kind");

  switch (*kind) {
    case EventKind::kNodeInit:
      event.payload = NodeInit{get_string(record, "node"), get_string(record, "name")};
      break;
    case EventKind::kPubInit:
      event.payload = PubInit{get_string(record, "pub"), get_string(record, "node"),
                              get_string(record, "topic")};
      break;
    case EventKind::kSubInit: {
      auto depth = get_uint(record, "queue_depth");
      if (depth > UINT32_MAX) throw FormatError("queue_depth out of range", "queue_depth");
      event.payload = SubInit{get_string(record, "sub"), get_string(record, "node"),
                              get_string(record, "topic"), static_cast<std::uint32_t>(depth)};
      break;
    }
    case EventKind::kPublish:
      event.payload = Publish{MessageKey{get_string(record, "pub"), get_uint(record, "seq")}};
      break;
    case EventKind::kCbStart:
      event.payload =
          CallbackStart{get_string(record, "sub"), get_string(record, "cb"),
                        MessageKey{get_string(record, "src_pub"), get_uint(record, "src_seq")}};
      break;
    case EventKind::kCbEnd:
      event.payload = CallbackEnd{get_string(record, "sub"), get_string(record, "cb")};
      break;
    case EventKind::kLink: {
      Link link{MessageKey{get_string(record, "out_pub"), get_uint(record, "out_seq")}, {}};
      const auto& inputs = require(record, "in");
      if (!inputs.is_array()) throw FormatError("field 'in' must be an array", "in");
      for (const auto& entry : inputs) link.in.push_back(get_key_object(entry));
      event.payload = std::move(link);
      break;
    }
  }

  for (auto& [key, value] : record.items()) {
    if (!is_known_field(*kind, key)) event.extra[key] = std::move(value);
  }
  check_event(event);
  return event;
}

}  // namespace msgflow
