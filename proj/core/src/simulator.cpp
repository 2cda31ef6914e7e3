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

#include "msgflow/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <queue>
#include <set>
#include <unordered_map>
#include <variant>

#include <fmt/format.h>

namespace msgflow::sim {
namespace {

using json = nlohmann::json;

Duration ms_to_ns(double ms) { return static_cast<Duration>(std::llround(ms * 1e6)); }

// ---------------------------------------------------------------------------
// Config parsing

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                std::string_view where) {
  if (!obj.is_object()) throw ConfigError(fmt::format("{} must be an object", where));
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(fmt::format("{}: unknown field '{}'", where, key));
    }
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, std::string_view where) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("{}: field '{}' has the wrong type", where, key));
  }
}

template <typename T>
T get_required(const json& obj, const char* key, std::string_view where) {
  if (!obj.contains(key)) throw ConfigError(fmt::format("{}: missing field '{}'", where, key));
  return get_or<T>(obj, key, T{}, where);
}

Distribution parse_distribution(const json& doc, std::string_view where) {
  if (doc.is_number()) return Distribution::constant(ms_to_ns(doc.get<double>()));
  check_keys(doc, {"type", "ms", "lo_ms", "hi_ms"}, where);
  const auto type = get_required<std::string>(doc, "type", where);
  if (type == "constant") {
    return Distribution::constant(ms_to_ns(get_required<double>(doc, "ms", where)));
  }
  if (type == "uniform") {
    return Distribution::uniform(ms_to_ns(get_required<double>(doc, "lo_ms", where)),
                                 ms_to_ns(get_required<double>(doc, "hi_ms", where)));
  }
  throw ConfigError(fmt::format("{}: unknown distribution type '{}'", where, type));
}

void check_distribution(const Distribution& d, std::string_view where) {
  if (d.lo < 0 || d.hi < d.lo) {
    throw ConfigError(fmt::format("{}: distribution needs 0 <= lo <= hi", where));
  }
}

}  // namespace

std::string_view to_string(CausalMode mode) {
  switch (mode) {
    case CausalMode::kAutomatic: return "automatic";
    case CausalMode::kAnnotated: return "annotated";
    case CausalMode::kHandoff: return "handoff";
  }
  return "automatic";
}

Duration Distribution::sample(std::mt19937_64& rng) const {
  if (hi <= lo) return lo;
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<Duration>(rng() % span);
}

Timestamp HostClock::local(Timestamp t) const {
  return t + offset_ns + static_cast<Duration>(std::llround(drift_ppm * 1e-6 * static_cast<double>(t)));
}

SimConfig parse_config(const json& doc) {
  check_keys(doc,
             {"seed", "duration_ms", "start_ms", "drop_policy", "local_delay", "remote_delay",
              "hosts", "nodes", "publishers", "subscriptions", "links", "description"},
             "config");
  SimConfig config;
  config.seed = get_or<std::uint64_t>(doc, "seed", 1, "config");
  config.duration = ms_to_ns(get_required<double>(doc, "duration_ms", "config"));
  config.start_time = ms_to_ns(get_or<double>(doc, "start_ms", 1000.0, "config"));
  const auto policy = get_or<std::string>(doc, "drop_policy", "oldest", "config");
  if (policy == "oldest") {
    config.drop_policy = DropPolicy::kOldest;
  } else if (policy == "newest") {
    config.drop_policy = DropPolicy::kNewest;
  } else {
    throw ConfigError(fmt::format("config: unknown drop_policy '{}'", policy));
  }
  if (doc.contains("local_delay")) config.local_delay = parse_distribution(doc["local_delay"], "local_delay");
  if (doc.contains("remote_delay")) config.remote_delay = parse_distribution(doc["remote_delay"], "remote_delay");

  for (const auto& h : doc.value("hosts", json::array())) {
    check_keys(h, {"name", "offset_ms", "drift_ppm"}, "hosts[]");
    config.hosts.push_back(HostClock{get_required<std::string>(h, "name", "hosts[]"),
                                     ms_to_ns(get_or<double>(h, "offset_ms", 0.0, "hosts[]")),
                                     get_or<double>(h, "drift_ppm", 0.0, "hosts[]")});
  }
  for (const auto& n : doc.value("nodes", json::array())) {
    check_keys(n, {"id", "name", "host", "pid", "executor_threads"}, "nodes[]");
    Node node;
    node.id = get_required<std::string>(n, "id", "nodes[]");
    node.name = get_or<std::string>(n, "name", node.id, "nodes[]");
    node.host = get_or<std::string>(n, "host", "localhost", "nodes[]");
    node.pid = get_or<std::int64_t>(n, "pid", 0, "nodes[]");
    node.executor_threads = get_or<int>(n, "executor_threads", 1, "nodes[]");
    config.nodes.push_back(std::move(node));
  }
  for (const auto& p : doc.value("publishers", json::array())) {
    check_keys(p, {"id", "node", "topic", "period_ms", "jitter_ms", "phase_ms"}, "publishers[]");
    Publisher pub;
    pub.id = get_required<std::string>(p, "id", "publishers[]");
    pub.node = get_required<std::string>(p, "node", "publishers[]");
    pub.topic = get_required<std::string>(p, "topic", "publishers[]");
    if (p.contains("period_ms")) pub.period = ms_to_ns(get_required<double>(p, "period_ms", "publishers[]"));
    pub.jitter = ms_to_ns(get_or<double>(p, "jitter_ms", 0.0, "publishers[]"));
    pub.phase = ms_to_ns(get_or<double>(p, "phase_ms", 0.0, "publishers[]"));
    config.publishers.push_back(std::move(pub));
  }
  for (const auto& s : doc.value("subscriptions", json::array())) {
    check_keys(s,
               {"id", "node", "topic", "queue_depth", "processing", "outputs", "publish_at",
                "mode", "handoff_delay_ms", "link_inputs", "transport"},
               "subscriptions[]");
    Subscription sub;
    sub.id = get_required<std::string>(s, "id", "subscriptions[]");
    sub.node = get_required<std::string>(s, "node", "subscriptions[]");
    sub.topic = get_required<std::string>(s, "topic", "subscriptions[]");
    sub.queue_depth = get_or<std::uint32_t>(s, "queue_depth", 10, "subscriptions[]");
    if (s.contains("processing")) sub.processing = parse_distribution(s["processing"], sub.id + ".processing");
    sub.outputs = get_or<std::vector<std::string>>(s, "outputs", {}, "subscriptions[]");
    sub.publish_at = get_or<double>(s, "publish_at", 1.0, "subscriptions[]");
    const auto mode = get_or<std::string>(s, "mode", "automatic", "subscriptions[]");
    if (mode == "automatic") {
      sub.mode = CausalMode::kAutomatic;
    } else if (mode == "annotated") {
      sub.mode = CausalMode::kAnnotated;
    } else if (mode == "handoff") {
      sub.mode = CausalMode::kHandoff;
    } else {
      throw ConfigError(fmt::format("{}: unknown mode '{}'", sub.id, mode));
    }
    sub.handoff_delay = ms_to_ns(get_or<double>(s, "handoff_delay_ms", 0.0, "subscriptions[]"));
    sub.link_inputs = get_or<std::vector<std::string>>(s, "link_inputs", {}, "subscriptions[]");
    if (s.contains("transport")) sub.transport = parse_distribution(s["transport"], sub.id + ".transport");
    config.subscriptions.push_back(std::move(sub));
  }
  for (const auto& l : doc.value("links", json::array())) {
    check_keys(l, {"from", "to", "delay"}, "links[]");
    if (!l.contains("delay")) throw ConfigError("links[]: missing field 'delay'");
    config.links.push_back(LinkDelay{get_required<std::string>(l, "from", "links[]"),
                                     get_required<std::string>(l, "to", "links[]"),
                                     parse_distribution(l["delay"], "links[].delay")});
  }
  validate_config(config);
  return config;
}

SimConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open {}", path.string()));
  try {
    return parse_config(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void validate_config(const SimConfig& config) {
  if (config.duration <= 0) throw ConfigError("duration must be > 0");
  if (config.start_time < 0) throw ConfigError("start time must be >= 0");
  check_distribution(config.local_delay, "local_delay");
  check_distribution(config.remote_delay, "remote_delay");

  std::set<std::string> hosts;
  for (const auto& h : config.hosts) {
    if (h.name.empty()) throw ConfigError("host names must be non-empty");
    if (!hosts.insert(h.name).second) throw ConfigError(fmt::format("duplicate host {}", h.name));
    if (std::fabs(h.drift_ppm) >= 1e5) throw ConfigError(fmt::format("host {}: drift too large", h.name));
    if (h.local(config.start_time) < 0) {
      throw ConfigError(fmt::format("host {}: clock offset makes timestamps negative", h.name));
    }
  }

  std::map<std::string, const Node*> nodes;
  std::set<std::pair<std::string, std::int64_t>> pids;
  for (const auto& n : config.nodes) {
    if (n.id.empty()) throw ConfigError("node ids must be non-empty");
    if (!nodes.emplace(n.id, &n).second) throw ConfigError(fmt::format("duplicate node {}", n.id));
    if (n.host.empty()) throw ConfigError(fmt::format("node {}: empty host", n.id));
    if (n.executor_threads < 1 || n.executor_threads > 32) {
      throw ConfigError(fmt::format("node {}: executor_threads must be in [1, 32]", n.id));
    }
    if (n.pid < 0) throw ConfigError(fmt::format("node {}: negative pid", n.id));
    if (n.pid != 0 && !pids.emplace(n.host, n.pid).second) {
      throw ConfigError(fmt::format("node {}: pid {} already used on host {}", n.id, n.pid, n.host));
    }
  }

  std::map<std::string, const Publisher*> pubs;
  for (const auto& p : config.publishers) {
    if (p.id.empty()) throw ConfigError("publisher ids must be non-empty");
    if (!pubs.emplace(p.id, &p).second) throw ConfigError(fmt::format("duplicate publisher {}", p.id));
    if (!nodes.count(p.node)) throw ConfigError(fmt::format("publisher {}: unknown node {}", p.id, p.node));
    if (p.topic.empty()) throw ConfigError(fmt::format("publisher {}: empty topic", p.id));
    if (p.period) {
      if (*p.period <= 0) throw ConfigError(fmt::format("publisher {}: period must be > 0", p.id));
      if (p.jitter < 0 || p.jitter >= *p.period) {
        throw ConfigError(fmt::format("publisher {}: jitter must be in [0, period)", p.id));
      }
    }
    if (p.phase < 0) throw ConfigError(fmt::format("publisher {}: negative phase", p.id));
  }

  std::map<std::string, const Subscription*> subs;
  std::set<std::pair<std::string, std::string>> node_topics;
  for (const auto& s : config.subscriptions) {
    if (s.id.empty()) throw ConfigError("subscription ids must be non-empty");
    if (!subs.emplace(s.id, &s).second) throw ConfigError(fmt::format("duplicate subscription {}", s.id));
    if (!nodes.count(s.node)) throw ConfigError(fmt::format("subscription {}: unknown node {}", s.id, s.node));
    if (s.topic.empty()) throw ConfigError(fmt::format("subscription {}: empty topic", s.id));
    if (!node_topics.emplace(s.node, s.topic).second) {
      throw ConfigError(fmt::format("node {} subscribes to {} twice", s.node, s.topic));
    }
    if (s.queue_depth < 1) throw ConfigError(fmt::format("subscription {}: queue_depth must be >= 1", s.id));
    check_distribution(s.processing, s.id + ".processing");
    if (s.transport) check_distribution(*s.transport, s.id + ".transport");
    if (!(s.publish_at >= 0.0 && s.publish_at <= 1.0)) {
      throw ConfigError(fmt::format("subscription {}: publish_at must be in [0, 1]", s.id));
    }
    if (s.handoff_delay < 0) throw ConfigError(fmt::format("subscription {}: negative handoff delay", s.id));
    for (const auto& out : s.outputs) {
      auto it = pubs.find(out);
      if (it == pubs.end()) throw ConfigError(fmt::format("subscription {}: unknown output {}", s.id, out));
      if (it->second->node != s.node) {
        throw ConfigError(fmt::format("subscription {}: output {} belongs to another node", s.id, out));
      }
      if (it->second->period) {
        throw ConfigError(fmt::format("subscription {}: output {} is periodic", s.id, out));
      }
    }
  }
  for (const auto& s : config.subscriptions) {
    for (const auto& other : s.link_inputs) {
      auto it = subs.find(other);
      if (it == subs.end() || other == s.id || it->second->node != s.node) {
        throw ConfigError(
            fmt::format("subscription {}: link input {} must be another subscription of the same node",
                        s.id, other));
      }
    }
  }
  for (const auto& l : config.links) {
    check_distribution(l.delay, "links[].delay");
  }
}

// ---------------------------------------------------------------------------
// Event loop

namespace {

struct MessageRec {
  MessageKey key;
  Timestamp publish_t = 0;
  std::uint64_t stamp = 0;  // creation order shared with callbacks
  bool periodic = false;
};

struct CallbackRec {
  std::size_t sub = 0;
  EntityId id;
  std::size_t input = 0;  // message index
  Timestamp start_t = 0;
  Timestamp end_t = 0;
  std::uint64_t stamp = 0;
  std::vector<std::size_t> outputs;  // message indices, causal truth edges
};

struct Queued {
  std::size_t message;
  Timestamp arrival;
};

struct SubState {
  const Subscription* cfg = nullptr;
  std::size_t node = 0;
  std::deque<Queued> queue;
  std::uint64_t next_cb = 0;
  std::optional<std::size_t> last_callback;
};

struct Worker {
  std::int64_t tid = 0;
  bool busy = false;
  Duration busy_time = 0;
};

struct NodeState {
  const Node* cfg = nullptr;
  const HostClock* clock = nullptr;
  std::int64_t pid = 0;
  std::vector<Worker> workers;
  std::vector<std::size_t> subs;
  std::int64_t handoff_tid = 0;
};

struct PubState {
  const Publisher* cfg = nullptr;
  std::size_t node = 0;
  std::uint64_t next_seq = 0;
  std::int64_t driver_tid = 0;
  std::vector<std::size_t> subscribers;
};

struct Fire {
  std::size_t pub;
  std::uint64_t k;
};
struct Arrive {
  std::size_t sub;
  std::size_t message;
};
struct Emit {
  std::size_t callback;
  std::int64_t tid;
};
struct Finish {
  std::size_t callback;
  std::size_t worker;
};

struct Action {
  Timestamp t;
  std::uint64_t order;
  std::variant<Fire, Arrive, Emit, Finish> what;

  bool operator>(const Action& other) const {
    return t != other.t ? t > other.t : order > other.order;
  }
};

class Engine {
 public:
  explicit Engine(const SimConfig& config) : config_(config), rng_(config.seed) { setup(); }

  SimResult run();

 private:
  void setup();
  void schedule(Timestamp t, std::variant<Fire, Arrive, Emit, Finish> what) {
    actions_.push(Action{t, next_order_++, std::move(what)});
  }
  void write(std::size_t node, std::int64_t tid, Timestamp t, Payload payload) {
    const auto& n = nodes_[node];
    TraceEvent event;
    event.t = n.clock->local(t);
    event.host = n.cfg->host;
    event.pid = n.pid;
    event.tid = tid;
    event.payload = std::move(payload);
    events_.push_back(std::move(event));
  }
  std::size_t publish(std::size_t pub, Timestamp now, std::int64_t tid, bool periodic);
  void deliver(std::size_t message, std::size_t pub, Timestamp now);
  Duration delay_for(std::size_t pub, std::size_t sub);
  void dispatch(std::size_t node, Timestamp now);

  void on(const Fire& a, Timestamp now);
  void on(const Arrive& a, Timestamp now);
  void on(const Emit& a, Timestamp now);
  void on(const Finish& a, Timestamp now);

  void compute_end_to_end();

  const SimConfig& config_;
  std::mt19937_64 rng_;
  std::vector<HostClock> clocks_;
  std::vector<NodeState> nodes_;
  std::vector<PubState> pubs_;
  std::vector<SubState> subs_;
  std::map<std::pair<std::string, std::string>, const LinkDelay*> links_;
  std::priority_queue<Action, std::vector<Action>, std::greater<>> actions_;
  std::uint64_t next_order_ = 0;
  std::uint64_t next_stamp_ = 0;

  std::vector<MessageRec> messages_;
  std::vector<CallbackRec> callbacks_;
  std::vector<std::vector<std::size_t>> receivers_;  // message -> callbacks
  std::vector<TraceEvent> events_;
  GroundTruth truth_;
};

void Engine::setup() {
  std::set<std::string> declared;
  for (const auto& h : config_.hosts) declared.insert(h.name);
  clocks_ = config_.hosts;
  for (const auto& n : config_.nodes) {
    if (declared.insert(n.host).second) clocks_.push_back(HostClock{n.host, 0, 0.0});
  }
  std::map<std::string, std::size_t> node_index;
  std::set<std::pair<std::string, std::int64_t>> used;
  for (const auto& n : config_.nodes) {
    if (n.pid != 0) used.emplace(n.host, n.pid);
  }
  std::int64_t next_pid = 1000;
  for (std::size_t i = 0; i < config_.nodes.size(); ++i) {
    const auto& n = config_.nodes[i];
    NodeState state;
    state.cfg = &n;
    for (const auto& c : clocks_) {
      if (c.name == n.host) state.clock = &c;
    }
    state.pid = n.pid;
    if (state.pid == 0) {
      while (used.count({n.host, next_pid})) next_pid += 100;
      state.pid = next_pid;
      used.emplace(n.host, next_pid);
    }
    for (int w = 0; w < n.executor_threads; ++w) state.workers.push_back(Worker{state.pid + w});
    state.handoff_tid = state.pid + 90;
    node_index.emplace(n.id, i);
    nodes_.push_back(std::move(state));
  }
  std::map<std::string, std::size_t> sub_index;
  for (std::size_t i = 0; i < config_.subscriptions.size(); ++i) {
    const auto& s = config_.subscriptions[i];
    SubState state;
    state.cfg = &s;
    state.node = node_index.at(s.node);
    nodes_[state.node].subs.push_back(i);
    sub_index.emplace(s.id, i);
    subs_.push_back(std::move(state));
  }
  std::map<std::size_t, std::int64_t> drivers_per_node;
  for (const auto& p : config_.publishers) {
    PubState state;
    state.cfg = &p;
    state.node = node_index.at(p.node);
    if (p.period) state.driver_tid = nodes_[state.node].pid + 50 + drivers_per_node[state.node]++;
    for (std::size_t s = 0; s < subs_.size(); ++s) {
      if (subs_[s].cfg->topic == p.topic) state.subscribers.push_back(s);
    }
    pubs_.push_back(std::move(state));
  }
  for (const auto& l : config_.links) links_[{l.from, l.to}] = &l;
  for (const auto& c : clocks_) truth_.clocks[c.name] = TruthClock{c.offset_ns, c.drift_ppm};
}

Duration Engine::delay_for(std::size_t pub, std::size_t sub) {
  const auto& s = subs_[sub];
  if (s.cfg->transport) return s.cfg->transport->sample(rng_);
  const auto& from = nodes_[pubs_[pub].node].cfg->host;
  const auto& to = nodes_[s.node].cfg->host;
  if (auto it = links_.find({from, to}); it != links_.end()) return it->second->delay.sample(rng_);
  return from == to ? config_.local_delay.sample(rng_) : config_.remote_delay.sample(rng_);
}

std::size_t Engine::publish(std::size_t pub, Timestamp now, std::int64_t tid, bool periodic) {
  auto& p = pubs_[pub];
  MessageRec m{MessageKey{p.cfg->id, p.next_seq++}, now, next_stamp_++, periodic};
  write(p.node, tid, now, Publish{m.key});
  messages_.push_back(std::move(m));
  receivers_.emplace_back();
  return messages_.size() - 1;
}

void Engine::deliver(std::size_t message, std::size_t pub, Timestamp now) {
  for (auto sub : pubs_[pub].subscribers) schedule(now + delay_for(pub, sub), Arrive{sub, message});
}

void Engine::dispatch(std::size_t node, Timestamp now) {
  auto& n = nodes_[node];
  for (;;) {
    auto worker = std::find_if(n.workers.begin(), n.workers.end(),
                               [](const Worker& w) { return !w.busy; });
    if (worker == n.workers.end()) return;
    std::optional<std::size_t> pick;
    for (auto s : n.subs) {
      const auto& q = subs_[s].queue;
      if (q.empty()) continue;
      if (!pick || q.front().arrival < subs_[*pick].queue.front().arrival) pick = s;
    }
    if (!pick) return;

    auto& sub = subs_[*pick];
    const auto input = sub.queue.front().message;
    sub.queue.pop_front();
    worker->busy = true;

    CallbackRec cb;
    cb.sub = *pick;
    cb.id = fmt::format("{}#{}", sub.cfg->id, sub.next_cb++);
    cb.input = input;
    cb.start_t = now;
    cb.end_t = now + sub.cfg->processing.sample(rng_);
    cb.stamp = next_stamp_++;
    const auto index = callbacks_.size();
    write(node, worker->tid, now, CallbackStart{sub.cfg->id, cb.id, messages_[input].key});
    truth_.matches.push_back(
        TruthMatch{messages_[input].key, sub.cfg->id, cb.id, now - messages_[input].publish_t});
    receivers_[input].push_back(index);
    const auto duration = cb.end_t - cb.start_t;
    const auto end_t = cb.end_t;
    callbacks_.push_back(std::move(cb));

    const auto worker_index = static_cast<std::size_t>(worker - n.workers.begin());
    if (!sub.cfg->outputs.empty() && sub.cfg->mode != CausalMode::kHandoff) {
      const auto at = now + static_cast<Duration>(
                                std::llround(sub.cfg->publish_at * static_cast<double>(duration)));
      schedule(at, Emit{index, worker->tid});
    }
    schedule(end_t, Finish{index, worker_index});
    if (!sub.cfg->outputs.empty() && sub.cfg->mode == CausalMode::kHandoff) {
      schedule(end_t + sub.cfg->handoff_delay, Emit{index, n.handoff_tid});
    }
    sub.last_callback = index;
  }
}

void Engine::on(const Fire& a, Timestamp now) {
  auto& p = pubs_[a.pub];
  const auto message = publish(a.pub, now, p.driver_tid, /*periodic=*/true);
  deliver(message, a.pub, now);
  const auto& cfg = *p.cfg;
  const Timestamp next = config_.start_time + cfg.phase +
                         static_cast<Duration>(a.k + 1) * *cfg.period +
                         Distribution::uniform(0, cfg.jitter).sample(rng_);
  if (next < config_.start_time + config_.duration) schedule(next, Fire{a.pub, a.k + 1});
}

void Engine::on(const Arrive& a, Timestamp now) {
  auto& sub = subs_[a.sub];
  if (sub.queue.size() >= sub.cfg->queue_depth) {
    std::size_t victim = a.message;
    if (config_.drop_policy == DropPolicy::kOldest) {
      victim = sub.queue.front().message;
      sub.queue.pop_front();
      sub.queue.push_back(Queued{a.message, now});
    }
    truth_.drops.push_back(
        TruthDrop{messages_[victim].key, sub.cfg->id, messages_[victim].publish_t});
  } else {
    sub.queue.push_back(Queued{a.message, now});
  }
  dispatch(sub.node, now);
}

void Engine::on(const Emit& a, Timestamp now) {
  const auto cb_index = a.callback;
  const auto& sub = subs_[callbacks_[cb_index].sub];
  const auto node = sub.node;

  // Inputs named in link records: this callback's message plus the latest
  // message handled by each listed sibling subscription.
  std::vector<std::size_t> link_sources{cb_index};
  for (const auto& other : sub.cfg->link_inputs) {
    for (auto s : nodes_[node].subs) {
      if (subs_[s].cfg->id == other && subs_[s].last_callback) {
        link_sources.push_back(*subs_[s].last_callback);
      }
    }
  }

  for (const auto& out_id : sub.cfg->outputs) {
    std::size_t pub = 0;
    while (pubs_[pub].cfg->id != out_id) ++pub;
    const auto message = publish(pub, now, a.tid, /*periodic=*/false);
    const auto& out_key = messages_[message].key;
    if (sub.cfg->mode == CausalMode::kAutomatic) {
      callbacks_[cb_index].outputs.push_back(message);
      truth_.causal_edges.push_back(
          TruthCausalEdge{sub.cfg->id, callbacks_[cb_index].id, out_key, CausalOrigin::kAutomatic});
    } else {
      Link link{out_key, {}};
      for (auto source : link_sources) {
        auto& cb = callbacks_[source];
        link.in.push_back(messages_[cb.input].key);
        cb.outputs.push_back(message);
        truth_.causal_edges.push_back(
            TruthCausalEdge{subs_[cb.sub].cfg->id, cb.id, out_key, CausalOrigin::kAnnotated});
      }
      write(node, a.tid, now, std::move(link));
    }
    deliver(message, pub, now);
  }
}

void Engine::on(const Finish& a, Timestamp now) {
  const auto& cb = callbacks_[a.callback];
  const auto node = subs_[cb.sub].node;
  auto& worker = nodes_[node].workers[a.worker];
  write(node, worker.tid, now, CallbackEnd{subs_[cb.sub].cfg->id, cb.id});
  worker.busy = false;
  worker.busy_time += cb.end_t - cb.start_t;
  dispatch(node, now);
}

void Engine::compute_end_to_end() {
  // Children are always created after their parents, so descending creation
  // stamps give a reverse topological order.
  struct Vertex {
    std::uint64_t stamp;
    bool is_message;
    std::size_t index;
  };
  std::vector<Vertex> order;
  order.reserve(messages_.size() + callbacks_.size());
  for (std::size_t m = 0; m < messages_.size(); ++m) order.push_back({messages_[m].stamp, true, m});
  for (std::size_t c = 0; c < callbacks_.size(); ++c) order.push_back({callbacks_[c].stamp, false, c});
  std::sort(order.begin(), order.end(),
            [](const Vertex& a, const Vertex& b) { return a.stamp > b.stamp; });

  // Latest sink completion reachable from each vertex.
  std::vector<Timestamp> msg_latest(messages_.size());
  std::vector<Timestamp> cb_latest(callbacks_.size());
  for (const auto& v : order) {
    if (v.is_message) {
      const auto& children = receivers_[v.index];
      Timestamp latest = messages_[v.index].publish_t;
      if (!children.empty()) {
        latest = cb_latest[children.front()];
        for (auto c : children) latest = std::max(latest, cb_latest[c]);
      }
      msg_latest[v.index] = latest;
    } else {
      const auto& children = callbacks_[v.index].outputs;
      Timestamp latest = callbacks_[v.index].end_t;
      if (!children.empty()) {
        latest = msg_latest[children.front()];
        for (auto m : children) latest = std::max(latest, msg_latest[m]);
      }
      cb_latest[v.index] = latest;
    }
  }
  for (std::size_t m = 0; m < messages_.size(); ++m) {
    if (messages_[m].periodic) {
      truth_.e2e.push_back(TruthEndToEnd{messages_[m].key, msg_latest[m] - messages_[m].publish_t});
    }
  }
}

SimResult Engine::run() {
  const auto start = config_.start_time;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    const auto tid = n.workers.front().tid;
    write(i, tid, start, NodeInit{n.cfg->id, n.cfg->name});
    for (const auto& p : pubs_) {
      if (p.node == i) write(i, tid, start, PubInit{p.cfg->id, n.cfg->id, p.cfg->topic});
    }
    for (auto s : n.subs) {
      const auto& cfg = *subs_[s].cfg;
      write(i, tid, start, SubInit{cfg.id, n.cfg->id, cfg.topic, cfg.queue_depth});
    }
  }
  for (std::size_t p = 0; p < pubs_.size(); ++p) {
    const auto& cfg = *pubs_[p].cfg;
    if (!cfg.period) continue;
    const Timestamp first = start + cfg.phase + Distribution::uniform(0, cfg.jitter).sample(rng_);
    if (first < start + config_.duration) schedule(first, Fire{p, 0});
  }

  while (!actions_.empty()) {
    auto action = actions_.top();
    actions_.pop();
    std::visit([&](const auto& a) { on(a, action.t); }, action.what);
  }

  compute_end_to_end();
  for (const auto& n : nodes_) {
    for (const auto& w : n.workers) {
      truth_.threads.push_back(TruthThread{n.cfg->host, n.pid, w.tid, n.cfg->id, w.busy_time});
    }
  }
  for (const auto& s : subs_) {
    for (const auto& q : s.queue) {
      truth_.in_flight.push_back(
          TruthDrop{messages_[q.message].key, s.cfg->id, messages_[q.message].publish_t});
    }
  }
  return SimResult{make_event_log(std::move(events_)), std::move(truth_)};
}

}  // namespace

SimResult simulate(const SimConfig& config) {
  validate_config(config);
  return Engine(config).run();
}

namespace {

MessageKey key_from(const json& j, const char* pub, const char* seq) {
  return MessageKey{j.at(pub).get<std::string>(), j.at(seq).get<std::uint64_t>()};
}

}  // namespace

json to_json(const GroundTruth& truth) {
  json doc;
  auto& matches = doc["matches"] = json::array();
  for (const auto& m : truth.matches) {
    matches.push_back({{"pub", m.msg.pub}, {"seq", m.msg.seq}, {"sub", m.sub}, {"cb", m.cb},
                       {"latency_ns", m.latency}});
  }
  auto& causal = doc["causal_edges"] = json::array();
  for (const auto& e : truth.causal_edges) {
    causal.push_back({{"sub", e.sub}, {"cb", e.cb}, {"out_pub", e.out.pub},
                      {"out_seq", e.out.seq}, {"origin", std::string(to_string(e.origin))}});
  }
  auto& drops = doc["drops"] = json::array();
  for (const auto& d : truth.drops) {
    drops.push_back({{"pub", d.msg.pub}, {"seq", d.msg.seq}, {"sub", d.sub},
                     {"publish_t", d.publish_t}});
  }
  auto& clocks = doc["clocks"] = json::object();
  for (const auto& [host, c] : truth.clocks) {
    clocks[host] = {{"offset_ns", c.offset_ns}, {"drift_ppm", c.drift_ppm}};
  }
  auto& e2e = doc["e2e"] = json::array();
  for (const auto& e : truth.e2e) {
    e2e.push_back({{"root", to_string(e.root)}, {"total_ns", e.total}});
  }
  auto& threads = doc["threads"] = json::array();
  for (const auto& t : truth.threads) {
    threads.push_back({{"host", t.host}, {"pid", t.pid}, {"tid", t.tid}, {"node", t.node},
                       {"busy_ns", t.busy}});
  }
  auto& in_flight = doc["in_flight"] = json::array();
  for (const auto& d : truth.in_flight) {
    in_flight.push_back({{"pub", d.msg.pub}, {"seq", d.msg.seq}, {"sub", d.sub},
                         {"publish_t", d.publish_t}});
  }
  return doc;
}

GroundTruth truth_from_json(const json& doc) {
  GroundTruth truth;
  try {
    for (const auto& m : doc.at("matches")) {
      truth.matches.push_back(TruthMatch{key_from(m, "pub", "seq"), m.at("sub").get<std::string>(),
                                         m.at("cb").get<std::string>(),
                                         m.value("latency_ns", Duration{0})});
    }
    for (const auto& e : doc.at("causal_edges")) {
      truth.causal_edges.push_back(TruthCausalEdge{
          e.at("sub").get<std::string>(), e.at("cb").get<std::string>(),
          key_from(e, "out_pub", "out_seq"),
          e.at("origin").get<std::string>() == "annotated" ? CausalOrigin::kAnnotated
                                                            : CausalOrigin::kAutomatic});
    }
    for (const auto& d : doc.at("drops")) {
      truth.drops.push_back(TruthDrop{key_from(d, "pub", "seq"), d.at("sub").get<std::string>(),
                                      d.value("publish_t", Timestamp{0})});
    }
    for (const auto& [host, c] : doc.at("clocks").items()) {
      truth.clocks[host] =
          TruthClock{c.at("offset_ns").get<Duration>(), c.at("drift_ppm").get<double>()};
    }
    for (const auto& e : doc.at("e2e")) {
      auto root = parse_message_key(e.at("root").get<std::string>());
      if (!root) throw ConfigError("truth: bad e2e root");
      truth.e2e.push_back(TruthEndToEnd{*root, e.at("total_ns").get<Duration>()});
    }
    for (const auto& t : doc.value("threads", json::array())) {
      truth.threads.push_back(TruthThread{t.at("host").get<std::string>(),
                                          t.at("pid").get<std::int64_t>(),
                                          t.at("tid").get<std::int64_t>(),
                                          t.at("node").get<std::string>(),
                                          t.at("busy_ns").get<Duration>()});
    }
    for (const auto& d : doc.value("in_flight", json::array())) {
      truth.in_flight.push_back(TruthDrop{key_from(d, "pub", "seq"),
                                          d.at("sub").get<std::string>(),
                                          d.value("publish_t", Timestamp{0})});
    }
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("bad truth document: {}", e.what()));
  }
  return truth;
}

void write_result(const SimResult& result, const std::filesystem::path& dir) {
  write_bundle(result.log, dir);
  std::ofstream out(dir / "truth.json", std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError(fmt::format("cannot write {}", (dir / "truth.json").string()));
  out << to_json(result.truth).dump(1) << '\n';
}

GroundTruth load_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open {}", path.string()));
  try {
    return truth_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace msgflow::sim
