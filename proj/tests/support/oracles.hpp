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

#ifndef MSGFLOW_TESTS_ORACLES_HPP_
#define MSGFLOW_TESTS_ORACLES_HPP_

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <tuple>

#include "msgflow/analysis.hpp"
#include "msgflow/causality.hpp"
#include "msgflow/diagnostics.hpp"
#include "msgflow/simulator.hpp"

// Reference implementations that share no code with the library beyond the
// data types. They trade speed for obviousness.
namespace msgflow::testing {

struct VertexSet {
  std::set<std::size_t> messages;
  std::set<std::size_t> callbacks;

  friend bool operator==(const VertexSet&, const VertexSet&) = default;
};

// Repeated passes over the raw edge lists until nothing changes.
VertexSet reachable_by_fixpoint(const FlowGraph& graph, std::size_t root_message, bool forward);

struct PathEnumeration {
  bool complete = true;  // false when `limit` paths were exceeded
  std::size_t paths = 0;
  Duration longest = 0;
};

// Walks every maximal path of the flow that starts at `source`, timing each
// one from the raw timestamps.
PathEnumeration enumerate_paths(const FlowGraph& graph, const MessageFlow& flow,
                                VertexRef source, std::size_t limit);

// Consecutive vertices joined by a flow edge, first vertex `source`, last
// vertex without outgoing flow edges. On failure `why` says what broke.
bool is_flow_chain(const FlowGraph& graph, const MessageFlow& flow, const CriticalPath& path,
                   VertexRef source, std::string* why);

double percent_of(Duration part, Duration total);

using TransportTuple = std::tuple<std::string, std::uint64_t, std::string, std::string>;
using CausalTuple = std::tuple<std::string, std::string, std::string, std::uint64_t, int>;
using DropTuple = std::tuple<std::string, std::uint64_t, std::string>;

struct FlowFacts {
  std::set<TransportTuple> transport;  // (pub, seq, sub, cb)
  std::set<CausalTuple> causal;        // (sub, cb, out pub, out seq, origin)
  std::set<DropTuple> drops;           // (pub, seq, sub)
};

FlowFacts facts_from_analysis(const FlowGraph& graph, const DropReport& drops);
FlowFacts facts_from_truth(const sim::GroundTruth& truth);

}  // namespace msgflow::testing

#endif  // MSGFLOW_TESTS_ORACLES_HPP_
