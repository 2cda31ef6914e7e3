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

#ifndef MSGFLOW_CLOCK_SYNC_HPP_
#define MSGFLOW_CLOCK_SYNC_HPP_

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "msgflow/ingest.hpp"
#include "msgflow/trace_model.hpp"

namespace msgflow {

// How a correction was obtained. One-sided fits assume a zero minimum
// one-way delay, so their offset is biased by the true minimum delay.
enum class SyncMethod { kReference, kBidirectional, kForwardOnly, kReverseOnly };

std::string_view to_string(SyncMethod method);

// Maps a host-local timestamp t onto the reference timeline:
//   corrected(t) = t + offset + drift * (t - origin)
// where origin is the first timestamp recorded by that host.
struct ClockCorrection {
  std::string host;
  double offset_ns = 0.0;
  double drift = 0.0;
  std::string reference_host;

  SyncMethod method = SyncMethod::kReference;
  std::size_t pairs = 0;
  // Host whose (already corrected) timestamps the fit was made against.
  std::string fitted_against;
  // Half the smallest observed round trip for bidirectional fits; 0 when
  // unknown (one-sided fits cannot bound their error from the data).
  double bound_ns = 0.0;

  double drift_ppm() const { return drift * 1e6; }
  Timestamp apply(Timestamp t, Timestamp origin) const;
};

class SyncError : public Error {
 public:
  using Error::Error;
};

// Host-to-host message observation: sent at `send_t` (sender clock),
// callback started at `recv_t` (receiver clock).
struct CrossHostPair {
  std::string send_host;
  std::string recv_host;
  Timestamp send_t = 0;
  Timestamp recv_t = 0;
};

// Every matched (publish, cb_start) pair whose endpoints are on different
// hosts.
std::vector<CrossHostPair> cross_host_pairs(const EventLog& log);

// Default reference: lexicographically smallest host.
std::vector<ClockCorrection> estimate_corrections(const EventLog& log,
                                                  std::optional<std::string> reference = {});

// Rewrites every timestamp onto the reference timeline. Throws SyncError if
// a host in the log has no correction.
EventLog apply_corrections(const EventLog& log, const std::vector<ClockCorrection>& corrections);

// corrections.json: [{host, offset_ns, drift_ppm, reference_host}]
nlohmann::json corrections_to_json(const std::vector<ClockCorrection>& corrections);
std::vector<ClockCorrection> corrections_from_json(const nlohmann::json& doc);

}  // namespace msgflow

#endif  // MSGFLOW_CLOCK_SYNC_HPP_
