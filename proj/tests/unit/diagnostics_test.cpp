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

#include "msgflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "msgflow/clock_sync.hpp"
#include "msgflow/simulator.hpp"
#include "oracles.hpp"
#include "random_config.hpp"
#include "trace_builder.hpp"

namespace msgflow {
namespace {

using testing::TraceBuilder;

constexpr Duration kMs = kNanosPerMilli;

std::string config_path(const char* name) { return std::string(MSGFLOW_CONFIG_DIR) + "/" + name; }

FlowGraph graph_of(const EventLog& log) { return build_flow_graph(log).graph; }

// One fast publisher feeding a slow depth-1 subscriber.
sim::SimConfig fast_into_slow(Duration period, Duration processing, std::uint32_t depth) {
  sim::SimConfig c;
  c.seed = 3;
  c.duration = 2 * kNanosPerSecond;
  c.hosts = {{"h", 0, 0.0}};
  c.nodes = {{"src", "Source", "h", 0, 1}, {"dst", "Sink", "h", 0, 1}};
  c.publishers = {{"P", "src", "/t", period, 0, 0}};
  sim::Subscription s;
  s.id = "S";
  s.node = "dst";
  s.topic = "/t";
  s.queue_depth = depth;
  s.processing = sim::Distribution::constant(processing);
  c.subscriptions = {s};
  return c;
}

TEST(DetectDropsTest, LosslessRunHasNoDrops) {
  auto r = sim::simulate(fast_into_slow(100 * kMs, 5 * kMs, 1));
  auto report = detect_drops(graph_of(r.log), r.log.topology);
  ASSERT_EQ(report.subscriptions.size(), 1u);
  EXPECT_EQ(report.total_drops(), 0u);
  EXPECT_EQ(report.subscriptions[0].matched_count, report.subscriptions[0].publish_count);
  EXPECT_EQ(report.tail_window, kDefaultTailWindow);
}

TEST(DetectDropsTest, TenTimesFasterPublisherDropsExactlyAsTruth) {
  auto r = sim::simulate(fast_into_slow(10 * kMs, 100 * kMs, 1));
  auto report = detect_drops(graph_of(r.log), r.log.topology, 0);
  EXPECT_GT(r.truth.drops.size(), 100u);
  EXPECT_EQ(report.total_drops(), r.truth.drops.size());
  const auto& s = report.subscriptions[0];
  EXPECT_EQ(s.publish_count, s.matched_count + s.drop_count + s.in_flight_count);
  EXPECT_GT(s.drop_rate(), 0.8);
}

TEST(DetectDropsTest, TailWindowTurnsLateLossesIntoInFlight) {
  TraceBuilder b;
  b.at("h", 1, 1).node("a", "A").pub("P", "a", "/t");
  b.at("h", 2, 2).node("z", "Z").sub("S", "z", "/t");
  b.at("h", 1, 1).publish(0, "P", 0).publish(100, "P", 1).publish(900, "P", 2);
  b.at("h", 2, 2).callback(10, 20, "S", "c", "P", 1);
  b.at("h", 1, 1).publish(1000, "P", 3);
  auto g = graph_of(b.log());
  auto report = detect_drops(g, b.log().topology, 200);
  const auto& s = report.subscriptions[0];
  EXPECT_EQ(s.publish_count, 4u);
  EXPECT_EQ(s.matched_count, 1u);
  EXPECT_EQ(s.drop_count, 1u);
  EXPECT_EQ(s.in_flight_count, 2u);
  EXPECT_EQ(s.dropped, (std::vector<MessageKey>{{"P", 0}}));
  EXPECT_EQ(detect_drops(g, b.log().topology, 0).total_drops(), 3u);
}

TEST(DetectDropsTest, CongestedSplitDropsMostImages) {
  auto r = sim::simulate(sim::load_config(config_path("slam_split.json")));
  auto log = apply_corrections(r.log, estimate_corrections(r.log));
  auto g = graph_of(log);
  auto report = detect_drops(g, log.topology, 0);
  EXPECT_EQ(report.total_drops(), r.truth.drops.size());
  const SubscriptionDrops* slam = nullptr;
  for (const auto& s : report.subscriptions) {
    if (s.sub == "slam_cam") slam = &s;
  }
  ASSERT_NE(slam, nullptr);
  EXPECT_GT(slam->drop_rate(), 0.5);
}

class DropPropertyTest : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(DropPropertyTest, PartitionAndTruthEquality) {
  auto w = testing::random_workload(GetParam(), 1500, {8, 1, false});
  auto g = graph_of(w.result.log);
  auto exact = detect_drops(g, w.result.log.topology, 0);
  auto got = testing::facts_from_analysis(g, exact).drops;
  EXPECT_EQ(got, testing::facts_from_truth(w.result.truth).drops);

  auto tailed = detect_drops(g, w.result.log.topology);
  ASSERT_EQ(tailed.subscriptions.size(), exact.subscriptions.size());
  for (std::size_t i = 0; i < tailed.subscriptions.size(); ++i) {
    const auto& s = tailed.subscriptions[i];
    EXPECT_EQ(s.publish_count, s.matched_count + s.drop_count + s.in_flight_count) << s.sub;
    EXPECT_EQ(s.drop_count + s.in_flight_count, exact.subscriptions[i].drop_count) << s.sub;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, DropPropertyTest, ::testing::Range<std::uint64_t>(20, 30));

TEST(NearestRankTest, Definition) {
  std::vector<Duration> v{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  EXPECT_EQ(nearest_rank(v, 50), 50);
  EXPECT_EQ(nearest_rank(v, 95), 100);
  EXPECT_EQ(nearest_rank(v, 0), 10);
  EXPECT_EQ(nearest_rank(v, 100), 100);
  EXPECT_EQ(nearest_rank({}, 50), 0);
  EXPECT_EQ(nearest_rank({7}, 99), 7);
}

TEST(LatencyStatsTest, ConstantLatency) {
  TraceBuilder b;
  b.at("h", 1, 1).node("a", "A").pub("P", "a", "/t");
  b.at("h", 2, 2).node("z", "Z").sub("S", "z", "/t");
  for (int i = 0; i < 20; ++i) {
    const Timestamp t = i * 100 * kMs;
    b.at("h", 1, 1).publish(t, "P", i);
    b.at("h", 2, 2).callback(t + 10 * kMs, t + 12 * kMs, "S", "c" + std::to_string(i), "P", i);
  }
  auto stats = latency_stats(graph_of(b.log()));
  ASSERT_EQ(stats.size(), 1u);
  const auto& s = stats[0];
  EXPECT_EQ(s.count, 20u);
  EXPECT_EQ(s.min, 10 * kMs);
  EXPECT_EQ(s.max, 10 * kMs);
  EXPECT_DOUBLE_EQ(s.mean, 10.0 * kMs);
  EXPECT_EQ(s.p50, 10 * kMs);
  EXPECT_EQ(s.p99, 10 * kMs);
  EXPECT_EQ(s.topic, "/t");
  EXPECT_EQ(s.pub_node, "a");
  EXPECT_EQ(s.sub_node, "z");
}

TEST(LatencyStatsTest, FiltersAndEmptyResult) {
  TraceBuilder b;
  b.at("h", 1, 1).node("a", "A").pub("P", "a", "/t").pub("Q", "a", "/u");
  b.at("h", 2, 2).node("z", "Z").sub("S", "z", "/t");
  b.at("h", 3, 3).node("y", "Y").sub("U", "y", "/u");
  b.at("h", 1, 1).publish(0, "P", 0).publish(0, "Q", 0);
  b.at("h", 2, 2).callback(5, 6, "S", "s", "P", 0);
  b.at("h", 3, 3).callback(7, 8, "U", "u", "Q", 0);
  auto g = graph_of(b.log());
  EXPECT_EQ(latency_stats(g).size(), 2u);
  EXPECT_EQ(latency_stats(g, {"/u", std::nullopt}).size(), 1u);
  EXPECT_EQ(latency_stats(g, {std::nullopt, "z"}).at(0).sub, "S");
  EXPECT_EQ(latency_stats(g, {std::nullopt, "a"}).size(), 2u);
  EXPECT_TRUE(latency_stats(g, {"/none", std::nullopt}).empty());
}

TEST(LatencyStatsTest, MatchesRecomputationFromTruth) {
  auto w = testing::random_workload(41, 1500, {6, 1, false});
  auto stats = latency_stats(graph_of(w.result.log));
  std::map<std::pair<std::string, std::string>, std::vector<Duration>> truth;
  for (const auto& m : w.result.truth.matches) truth[{m.msg.pub, m.sub}].push_back(m.latency);
  ASSERT_EQ(stats.size(), truth.size());
  for (const auto& s : stats) {
    auto v = truth.at({s.pub, s.sub});
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    EXPECT_EQ(s.count, n);
    EXPECT_EQ(s.min, v.front());
    EXPECT_EQ(s.max, v.back());
    double sum = 0;
    for (auto x : v) sum += static_cast<double>(x);
    EXPECT_NEAR(s.mean, sum / static_cast<double>(n), 1e-3);
    // Rank by integer arithmetic: ceil(p * n / 100).
    auto rank = [&](std::size_t p) { return v[std::max<std::size_t>(1, (p * n + 99) / 100) - 1]; };
    EXPECT_EQ(s.p50, rank(50));
    EXPECT_EQ(s.p95, rank(95));
    EXPECT_EQ(s.p99, rank(99));
  }
}

TEST(LatencyStatsTest, CorrectedMultiHostLatenciesAreNonNegative) {
  auto w = testing::random_workload(52, 1500, {6, 3, true});
  auto log = apply_corrections(w.result.log, estimate_corrections(w.result.log));
  for (const auto& s : latency_stats(graph_of(log))) EXPECT_GE(s.min, 0) << s.pub << "->" << s.sub;
}

// Callbacks of `durations` on subscription S, spaced apart.
EventLog callbacks_with(const std::vector<Duration>& durations) {
  TraceBuilder b;
  b.at("h", 1, 1).node("a", "A").pub("P", "a", "/t");
  b.at("h", 2, 2).node("z", "Z").sub("S", "z", "/t");
  Timestamp t = 0;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    b.at("h", 1, 1).publish(t, "P", i);
    b.at("h", 2, 2).callback(t + 1, t + 1 + durations[i], "S", "c" + std::to_string(i), "P", i);
    t += 1000;
  }
  return b.log();
}

TEST(DetectOutliersTest, EqualDurationsHaveNone) {
  EXPECT_TRUE(detect_outliers(callbacks_with({50, 50, 50, 50, 50, 50})).empty());
}

TEST(DetectOutliersTest, TenTimesMedianIsFlagged) {
  auto out = detect_outliers(callbacks_with({40, 50, 60, 50, 500, 50, 45}));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].cb, "c4");
  EXPECT_EQ(out[0].duration, 500);
  EXPECT_DOUBLE_EQ(out[0].median, 50.0);
}

TEST(DetectOutliersTest, KOneFlagsEverythingAboveMedian) {
  std::vector<Duration> d{30, 10, 70, 50, 20, 60, 40};
  auto out = detect_outliers(callbacks_with(d), 1.0);
  std::set<std::string> got;
  for (const auto& o : out) got.insert(o.cb);
  EXPECT_EQ(got, (std::set<std::string>{"c2", "c3", "c5"}));
}

TEST(DetectOutliersTest, SmallSamplesAreSkipped) {
  EXPECT_TRUE(detect_outliers(callbacks_with({1, 1, 1, 100})).empty());
}

TEST(ThreadStatesTest, SingleCallbackBetweenIdleStretches) {
  TraceBuilder b;
  b.at("h", 1, 7).node("n", "Node", 0).sub("S", "n", "/t", 1, 0);
  b.at("h", 1, 1).pub("P", "n", "/t", 0).publish(5, "P", 0);
  b.at("h", 1, 7).callback(10, 20, "S", "c", "P", 0).pub("P2", "n", "/u", 30);
  auto timelines = thread_states(b.log());
  const ThreadTimeline* t7 = nullptr;
  for (const auto& t : timelines) {
    if (t.tid == 7) t7 = &t;
  }
  ASSERT_NE(t7, nullptr);
  EXPECT_EQ(t7->intervals, (std::vector<ThreadInterval>{{0, 10, ThreadState::kIdle},
                                                         {10, 20, ThreadState::kActive},
                                                         {20, 30, ThreadState::kIdle}}));
  EXPECT_EQ(t7->active_time(), 10);
  EXPECT_NEAR(t7->active_fraction(), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(t7->node_label, "Node");
}

TEST(ThreadStatesTest, BackToBackCallbacksMerge) {
  TraceBuilder b;
  b.at("h", 1, 1).node("n", "Node").pub("P", "n", "/t").sub("S", "n", "/t");
  b.publish(0, "P", 0).publish(1, "P", 1);
  b.callback(10, 20, "S", "a", "P", 0).callback(20, 30, "S", "b", "P", 1);
  auto timelines = thread_states(b.log());
  ASSERT_EQ(timelines.size(), 1u);
  EXPECT_EQ(timelines[0].intervals, (std::vector<ThreadInterval>{{0, 10, ThreadState::kIdle},
                                                                 {10, 30, ThreadState::kActive}}));
  EXPECT_TRUE(timelines[0].notes.empty());
}

TEST(ThreadStatesTest, ThreadWithoutCallbacksIsAllIdle) {
  TraceBuilder b;
  b.at("h", 1, 1).node("n", "Node", 0).pub("P", "n", "/t", 0).publish(40, "P", 0);
  auto timelines = thread_states(b.log());
  ASSERT_EQ(timelines.size(), 1u);
  EXPECT_EQ(timelines[0].intervals,
            (std::vector<ThreadInterval>{{0, 40, ThreadState::kIdle}}));
  EXPECT_EQ(timelines[0].active_time(), 0);
}

TEST(ThreadStatesTest, UnterminatedCallbackRunsToTheEndWithNote) {
  TraceBuilder b;
  b.at("h", 1, 1).node("n", "Node", 0).pub("P", "n", "/t").sub("S", "n", "/t");
  b.publish(5, "P", 0).start(10, "S", "c", "P", 0).publish(50, "P", 1);
  auto timelines = thread_states(b.log());
  ASSERT_EQ(timelines.size(), 1u);
  EXPECT_EQ(timelines[0].intervals.back(), (ThreadInterval{10, 50, ThreadState::kActive}));
  EXPECT_EQ(timelines[0].notes.size(), 1u);
}

// Intervals tile the span: contiguous, non-empty, alternating.
void expect_tiling(const ThreadTimeline& t) {
  Timestamp cursor = t.span_start;
  for (std::size_t i = 0; i < t.intervals.size(); ++i) {
    const auto& iv = t.intervals[i];
    EXPECT_EQ(iv.start_t, cursor);
    EXPECT_LT(iv.start_t, iv.end_t);
    if (i > 0) {
      EXPECT_NE(iv.state, t.intervals[i - 1].state);
    }
    cursor = iv.end_t;
  }
  EXPECT_EQ(cursor, t.span_end);
}

TEST(ThreadStatesTest, SimulatedThreadsTileAndMatchTruthBusyTime) {
  auto r = sim::simulate(sim::load_config(config_path("slam_onboard.json")));
  auto timelines = thread_states(r.log);
  std::size_t compared = 0;
  for (const auto& t : timelines) {
    expect_tiling(t);
    for (const auto& truth : r.truth.threads) {
      if (truth.host != t.host || truth.pid != t.pid || truth.tid != t.tid) continue;
      ++compared;
      if (t.span_end == t.span_start) {
        EXPECT_EQ(truth.busy, 0) << truth.node;
        continue;
      }
      const double span = static_cast<double>(t.span_end - t.span_start);
      const double want = static_cast<double>(truth.busy) / span;
      EXPECT_NEAR(t.active_fraction(), want, 0.01) << truth.node;
    }
  }
  EXPECT_GE(compared, 4u);
}

TEST_P(DropPropertyTest, RandomTimelinesTile) {
  auto w = testing::random_workload(GetParam(), 800);
  for (const auto& t : thread_states(w.result.log)) expect_tiling(t);
}

}  // namespace
}  // namespace msgflow
