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

#include "msgflow/clock_sync.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

namespace msgflow {
namespace {

// (x, y) with x = local time on the host being fitted relative to its origin
// and y = partner time minus local time. A correction line a + b*x must lie
// on or above every forward point and on or below every reverse point.
struct Point {
  long double x;
  long double y;
};

struct Line {
  long double a = 0;
  long double b = 0;
};

long double cross(const Point& o, const Point& p, const Point& q) {
  return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
}

// Monotone-chain hull; `upper` selects the upper envelope.
std::vector<Point> hull(std::vector<Point> points, bool upper) {
  std::sort(points.begin(), points.end(), [](const Point& p, const Point& q) {
    return p.x < q.x || (p.x == q.x && p.y < q.y);
  });
  std::vector<Point> chain;
  for (const auto& p : points) {
    // Keep only the extreme y for each x.
    if (!chain.empty() && chain.back().x == p.x) {
      if (upper) {
        chain.pop_back();
      } else {
        continue;
      }
    }
    while (chain.size() >= 2) {
      auto c = cross(chain[chain.size() - 2], chain.back(), p);
      if ((upper && c >= 0) || (!upper && c <= 0)) {
        chain.pop_back();
      } else {
        break;
      }
    }
    chain.push_back(p);
  }
  return chain;
}

// Supporting line of the envelope at the mean abscissa: among lines that
// stay on one side of every point it minimises the summed distance to them.
Line support_at_mean(const std::vector<Point>& points, bool upper) {
  auto envelope = hull(points, upper);
  long double mean = 0;
  for (const auto& p : points) mean += p.x;
  mean /= static_cast<long double>(points.size());
  if (envelope.size() == 1) return Line{envelope.front().y, 0};
  std::size_t k = 0;
  while (k + 2 < envelope.size() && envelope[k + 1].x < mean) ++k;
  const auto& p = envelope[k];
  const auto& q = envelope[k + 1];
  long double b = (q.y - p.y) / (q.x - p.x);
  return Line{p.y - b * p.x, b};
}

long double lower_limit(const std::vector<Point>& forward, long double b) {
  long double v = -std::numeric_limits<long double>::infinity();
  for (const auto& p : forward) v = std::max(v, p.y - b * p.x);
  return v;
}

long double upper_limit(const std::vector<Point>& reverse, long double b) {
  long double v = std::numeric_limits<long double>::infinity();
  for (const auto& p : reverse) v = std::min(v, p.y - b * p.x);
  return v;
}

struct Fit {
  Line line;
  SyncMethod method;
  double bound_ns = 0;
};

Fit fit_line(const std::string& host, const std::vector<Point>& forward,
             const std::vector<Point>& reverse) {
  if (reverse.empty()) {
    auto line = support_at_mean(forward, /*upper=*/true);
    line.a = std::ceil(lower_limit(forward, line.b));
    return Fit{line, SyncMethod::kForwardOnly};
  }
  if (forward.empty()) {
    auto line = support_at_mean(reverse, /*upper=*/false);
    line.a = std::floor(upper_limit(reverse, line.b));
    return Fit{line, SyncMethod::kReverseOnly};
  }

  // Only hull vertices can be binding.
  const auto upper = hull(forward, /*upper=*/true);
  const auto lower = hull(reverse, /*upper=*/false);
  auto gap = [&](long double b) { return upper_limit(lower, b) - lower_limit(upper, b); };

  // gap() is concave in the slope. Find its peak, then the slopes where it
  // falls back to zero; the middle of that interval is the line furthest
  // from both envelopes' extreme tilts.
  long double lo = -0.5L;
  long double hi = 0.5L;
  for (int i = 0; i < 200; ++i) {
    long double m1 = lo + (hi - lo) / 3;
    long double m2 = hi - (hi - lo) / 3;
    if (gap(m1) < gap(m2)) {
      lo = m1;
    } else {
      hi = m2;
    }
  }
  const long double peak = (lo + hi) / 2;
  if (gap(peak) < 0) {
    throw SyncError(
        fmt::format("no causality-preserving linear correction exists for host {}", host));
  }
  auto edge = [&](long double outside) {
    long double good = peak;
    long double bad = outside;
    if (gap(bad) >= 0) return bad;
    for (int i = 0; i < 200; ++i) {
      long double mid = (bad + good) / 2;
      if (gap(mid) >= 0) {
        good = mid;
      } else {
        bad = mid;
      }
    }
    return good;
  };
  const long double b = (edge(peak - 0.5L) + edge(peak + 0.5L)) / 2;
  long double low = lower_limit(upper, b);
  long double high = upper_limit(lower, b);
  return Fit{Line{(low + high) / 2, b}, SyncMethod::kBidirectional,
             static_cast<double>((high - low) / 2)};
}

std::map<std::string, Timestamp> host_origins(const EventLog& log) {
  std::map<std::string, Timestamp> origins;
  for (const auto& event : log.events) origins.try_emplace(event.host, event.t);
  return origins;
}

}  // namespace

std::string_view to_string(SyncMethod method) {
  switch (method) {
    case SyncMethod::kReference: return "reference";
    case SyncMethod::kBidirectional: return "bidirectional";
    case SyncMethod::kForwardOnly: return "one-sided (inbound only)";
    case SyncMethod::kReverseOnly: return "one-sided (outbound only)";
  }
  return "unknown";
}

Timestamp ClockCorrection::apply(Timestamp t, Timestamp origin) const {
  const double delta = offset_ns + drift * static_cast<double>(t - origin);
  return t + static_cast<Timestamp>(std::llround(delta));
}

std::vector<CrossHostPair> cross_host_pairs(const EventLog& log) {
  struct Sent {
    const std::string* host;
    Timestamp t;
  };
  std::unordered_map<MessageKey, Sent, MessageKeyHash> published;
  for (const auto& event : log.events) {
    if (const auto* p = event.as<Publish>()) published.try_emplace(p->key, Sent{&event.host, event.t});
  }
  std::vector<CrossHostPair> pairs;
  for (const auto& event : log.events) {
    const auto* cb = event.as<CallbackStart>();
    if (!cb) continue;
    auto it = published.find(cb->src);
    if (it == published.end() || *it->second.host == event.host) continue;
    pairs.push_back(CrossHostPair{*it->second.host, event.host, it->second.t, event.t});
  }
  return pairs;
}

std::vector<ClockCorrection> estimate_corrections(const EventLog& log,
                                                  std::optional<std::string> reference) {
  if (log.hosts.empty()) return {};
  const std::string ref = reference.value_or(log.hosts.front());
  if (!std::binary_search(log.hosts.begin(), log.hosts.end(), ref)) {
    throw SyncError(fmt::format("reference host {} does not appear in the trace", ref));
  }
  const auto origins = host_origins(log);
  const auto pairs = cross_host_pairs(log);

  std::map<std::string, ClockCorrection> done;
  done.emplace(ref, ClockCorrection{ref, 0.0, 0.0, ref, SyncMethod::kReference, 0, ref});

  auto corrected = [&](const std::string& host, Timestamp t) {
    return done.at(host).apply(t, origins.at(host));
  };

  std::set<std::string> pending(log.hosts.begin(), log.hosts.end());
  pending.erase(ref);
  while (!pending.empty()) {
    bool progressed = false;
    for (auto it = pending.begin(); it != pending.end();) {
      const std::string& host = *it;
      // Choose the already-corrected partner with the most traffic.
      std::map<std::string, std::size_t> counts;
      for (const auto& p : pairs) {
        if (p.recv_host == host && done.count(p.send_host)) ++counts[p.send_host];
        if (p.send_host == host && done.count(p.recv_host)) ++counts[p.recv_host];
      }
      std::string partner;
      std::size_t best = 0;
      for (const auto& [name, n] : counts) {
        if (n > best) {
          best = n;
          partner = name;
        }
      }
      if (best < 2) {
        ++it;
        continue;
      }
      const Timestamp origin = origins.at(host);
      std::vector<Point> forward;
      std::vector<Point> reverse;
      for (const auto& p : pairs) {
        if (p.recv_host == host && p.send_host == partner) {
          auto x = static_cast<long double>(p.recv_t - origin);
          forward.push_back({x, static_cast<long double>(corrected(partner, p.send_t) - p.recv_t)});
        } else if (p.send_host == host && p.recv_host == partner) {
          auto x = static_cast<long double>(p.send_t - origin);
          reverse.push_back({x, static_cast<long double>(corrected(partner, p.recv_t) - p.send_t)});
        }
      }
      auto fit = fit_line(host, forward, reverse);
      if (!(std::fabs(static_cast<double>(fit.line.b)) < 1.0)) {
        throw SyncError(fmt::format("internal error: non-monotonic correction for host {}", host));
      }
      done.emplace(host, ClockCorrection{host, static_cast<double>(fit.line.a),
                                         static_cast<double>(fit.line.b), ref, fit.method,
                                         forward.size() + reverse.size(), partner, fit.bound_ns});
      it = pending.erase(it);
      progressed = true;
    }
    if (!progressed) {
      throw SyncError(fmt::format("insufficient pairs for host {}", *pending.begin()));
    }
  }

  std::vector<ClockCorrection> out;
  out.reserve(done.size());
  for (auto& [host, c] : done) out.push_back(std::move(c));
  return out;
}

EventLog apply_corrections(const EventLog& log, const std::vector<ClockCorrection>& corrections) {
  std::map<std::string, const ClockCorrection*> by_host;
  for (const auto& c : corrections) by_host[c.host] = &c;
  const auto origins = host_origins(log);
  for (const auto& host : log.hosts) {
    if (!by_host.count(host)) {
      throw SyncError(fmt::format("missing clock correction for host {}", host));
    }
  }

  std::vector<TraceEvent> events;
  events.reserve(log.events.size());
  for (const auto& event : log.events) {
    auto copy = event;
    copy.t = by_host.at(event.host)->apply(event.t, origins.at(event.host));
    if (copy.t < 0) copy.t = 0;
    events.push_back(std::move(copy));
  }
  // The per-host mapping is non-decreasing, so the stable re-merge keeps
  // each host's relative order.
  return make_event_log(std::move(events), log.sources);
}

nlohmann::json corrections_to_json(const std::vector<ClockCorrection>& corrections) {
  auto doc = nlohmann::json::array();
  for (const auto& c : corrections) {
    doc.push_back({{"host", c.host},
                   {"offset_ns", c.offset_ns},
                   {"drift_ppm", c.drift_ppm()},
                   {"reference_host", c.reference_host}});
  }
  return doc;
}

std::vector<ClockCorrection> corrections_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw SyncError("corrections document must be an array");
  std::vector<ClockCorrection> out;
  for (const auto& entry : doc) {
    try {
      ClockCorrection c;
      c.host = entry.at("host").get<std::string>();
      c.offset_ns = entry.at("offset_ns").get<double>();
      c.drift = entry.at("drift_ppm").get<double>() * 1e-6;
      c.reference_host = entry.at("reference_host").get<std::string>();
      c.method = c.host == c.reference_host ? SyncMethod::kReference : SyncMethod::kBidirectional;
      c.fitted_against = c.reference_host;
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw SyncError(fmt::format("bad corrections entry: {}", e.what()));
    }
  }
  return out;
}

}  // namespace msgflow
