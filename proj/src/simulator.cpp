#include "edgehub/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace edgehub {

Result<void> SimParams::validate() const {
  if (gateways < 1 || nodesPerGateway < 1) {
    return make_error(Errc::validation, "gateway and node counts must be >= 1");
  }
  if (durationMs <= 0 || meanConnectedMs <= 0 || meanDisconnectedMs <= 0 ||
      readingPeriodMs <= 0) {
    return make_error(Errc::validation, "all durations must be > 0");
  }
  if (!(feverProbability >= 0.0 && feverProbability <= 1.0)) {
    return make_error(Errc::validation, "feverProbability must be in [0,1]");
  }
  return {};
}

int64_t DetRng::exponential_ms(double meanMs) {
  double u = uniform01();                        // [0, 1)
  double draw = -meanMs * std::log(1.0 - u);     // inverse CDF, finite for u < 1
  auto ms = static_cast<int64_t>(std::llround(draw));
  return ms < 1 ? 1 : ms;
}

namespace {

std::string mac_for(int gateway, int node) {
  char buf[18];
  std::snprintf(buf, sizeof(buf), "02:ED:%02X:00:%02X:%02X", gateway & 0xFF, (node >> 8) & 0xFF,
                node & 0xFF);
  return buf;
}

std::string gateway_id(int gateway) { return "gw-" + std::to_string(gateway + 1); }

struct NodePlan {
  std::string nodeId;
  std::string mdeviceId;
  bool initiallyConnected = false;
  std::vector<int64_t> transitions;  // ts of status flips, strictly increasing
  std::vector<SimEvent> readings;
};

NodePlan plan_node(const SimParams& p, int gi, int ni, uint64_t nodeSeed) {
  NodePlan plan;
  plan.nodeId = mac_for(gi, ni);
  plan.mdeviceId = gateway_id(gi);
  DetRng rng(nodeSeed);

  if (p.disconnectDisabled) {
    plan.initiallyConnected = true;
  } else {
    // Stationary split of the alternating process, so cycle 1 is not biased.
    double pConnected = static_cast<double>(p.meanConnectedMs) /
                        static_cast<double>(p.meanConnectedMs + p.meanDisconnectedMs);
    plan.initiallyConnected = rng.uniform01() < pConnected;
    bool connected = plan.initiallyConnected;
    int64_t t = 0;
    while (true) {
      t += rng.exponential_ms(static_cast<double>(connected ? p.meanConnectedMs
                                                            : p.meanDisconnectedMs));
      if (t >= p.durationMs) break;
      plan.transitions.push_back(t);
      connected = !connected;
    }
  }

  // Vitals slots come after the dwell walk so the two phases draw from the
  // per-node stream in a fixed order.
  int feverSlotsLeft = 0;
  for (int64_t slot = p.readingPeriodMs; slot < p.durationMs; slot += p.readingPeriodMs) {
    // Connected at `slot`? Count flips that happened at or before it.
    size_t flips = std::upper_bound(plan.transitions.begin(), plan.transitions.end(), slot) -
                   plan.transitions.begin();
    bool connected = plan.initiallyConnected == (flips % 2 == 0);
    if (feverSlotsLeft == 0 && rng.uniform01() < p.feverProbability) {
      feverSlotsLeft = static_cast<int>(rng.uniform_int(3, 6));
    }
    double temp;
    if (feverSlotsLeft > 0) {
      temp = rng.uniform(38.3, 39.5);
      --feverSlotsLeft;
    } else {
      temp = 36.8 + rng.uniform(-0.3, 0.3);
    }
    double oxygen = 97.0 + rng.uniform(-1.0, 1.0);
    double heartRate = 70.0 + rng.uniform(-10.0, 10.0);
    if (!connected) continue;  // draws above still happen: slot rng use is state-independent

    for (auto [kind, value] : {std::pair{VitalKind::temperature, temp},
                               std::pair{VitalKind::oxygen_level, oxygen},
                               std::pair{VitalKind::heart_rate, heartRate}}) {
      SimEvent ev;
      ev.ts = slot;
      ev.type = SimEventType::reading;
      ev.mdeviceId = plan.mdeviceId;
      ev.nodeId = plan.nodeId;
      ev.reading = TelemetryReading{plan.nodeId, kind, value, std::string(unit_for(kind)), slot};
      plan.readings.push_back(std::move(ev));
    }
  }
  return plan;
}

}  // namespace

Result<Timeline> generate_timeline(const SimParams& params) {
  if (auto r = params.validate(); !r) return r.error();

  Timeline timeline;
  timeline.params = params;

  // One independent sub-stream per node, all derived from the master seed in
  // a fixed order, so changing one parameter never reshuffles another node.
  std::mt19937_64 master(params.seed);
  std::vector<std::vector<NodePlan>> plans(params.gateways);
  for (int gi = 0; gi < params.gateways; ++gi) {
    for (int ni = 0; ni < params.nodesPerGateway; ++ni) {
      plans[gi].push_back(plan_node(params, gi, ni, master()));
    }
  }

  for (int gi = 0; gi < params.gateways; ++gi) {
    SimEvent snap;
    snap.ts = 0;
    snap.type = SimEventType::snapshot;
    snap.mdeviceId = gateway_id(gi);
    for (const auto& plan : plans[gi]) {
      snap.snapshotNodes.push_back({plan.nodeId, plan.initiallyConnected
                                                     ? NodeStatus::connected
                                                     : NodeStatus::disconnected});
    }
    timeline.events.push_back(std::move(snap));
  }

  for (int gi = 0; gi < params.gateways; ++gi) {
    for (auto& plan : plans[gi]) {
      bool connected = plan.initiallyConnected;
      for (int64_t t : plan.transitions) {
        connected = !connected;
        SimEvent ev;
        ev.ts = t;
        ev.type = connected ? SimEventType::connect : SimEventType::disconnect;
        ev.mdeviceId = plan.mdeviceId;
        ev.nodeId = plan.nodeId;
        timeline.events.push_back(std::move(ev));
      }
      for (auto& reading : plan.readings) timeline.events.push_back(std::move(reading));
    }
  }

  // Stable: equal timestamps keep per-node generation order, so alternation
  // survives the merge.
  std::stable_sort(timeline.events.begin(), timeline.events.end(),
                   [](const SimEvent& a, const SimEvent& b) { return a.ts < b.ts; });
  return timeline;
}

GroundTruth ground_truth(const Timeline& timeline, const std::vector<int64_t>& cycleEnds) {
  GroundTruth truth;
  truth.cycleEnds = cycleEnds;

  // Reconstruct each node's [connect, disconnect) intervals from the events,
  // exactly as an observer of the stream would.
  struct OpenState {
    bool connected = false;
    int64_t since = 0;
  };
  std::map<std::string, OpenState> open;
  std::map<std::string, std::vector<std::pair<int64_t, int64_t>>> intervals;

  auto flip = [&](const std::string& nodeId, bool toConnected, int64_t ts) {
    intervals.try_emplace(nodeId);  // every observed node reports, even with 0 ms
    auto [it, inserted] = open.try_emplace(nodeId);
    auto& st = it->second;
    if (!inserted && st.connected == toConnected) return;  // same-status repeat
    if (!inserted && st.connected) intervals[nodeId].emplace_back(st.since, ts);
    st.connected = toConnected;
    st.since = ts;
  };

  for (const auto& ev : timeline.events) {
    switch (ev.type) {
      case SimEventType::snapshot:
        for (const auto& node : ev.snapshotNodes) {
          flip(node.id, node.status == NodeStatus::connected, ev.ts);
        }
        break;
      case SimEventType::connect:
        flip(ev.nodeId, true, ev.ts);
        break;
      case SimEventType::disconnect:
        flip(ev.nodeId, false, ev.ts);
        break;
      case SimEventType::reading:
        break;
    }
  }
  int64_t horizon = cycleEnds.empty() ? timeline.params.durationMs : cycleEnds.back();
  for (auto& [nodeId, st] : open) {
    if (st.connected && st.since < horizon) intervals[nodeId].emplace_back(st.since, horizon);
  }

  for (auto& [nodeId, ivs] : intervals) {
    auto& perCycle = truth.perCycleMs[nodeId];
    perCycle.assign(cycleEnds.size(), 0);
    int64_t total = 0;
    for (auto [a, b] : ivs) {
      int64_t prev = 0;
      for (size_t c = 0; c < cycleEnds.size(); ++c) {
        int64_t lo = std::max(a, prev);
        int64_t hi = std::min(b, cycleEnds[c]);
        if (hi > lo) perCycle[c] += hi - lo;
        prev = cycleEnds[c];
      }
      int64_t clippedEnd = std::min(b, horizon);
      if (clippedEnd > a) total += clippedEnd - a;
    }
    truth.totalMs[nodeId] = total;
  }
  return truth;
}

Result<DriveReport> drive(const Timeline& timeline, Hub& hub, SimulatedClock& clock) {
  DriveReport report;
  for (const auto& ev : timeline.events) {
    clock.set_ms(ev.ts);
    hub.advance_to(ev.ts);

    if (ev.type == SimEventType::reading) {
      ++report.readingsSent;
      auto ack = hub.ingest_reading(ev.reading);
      ++(ack.accepted ? report.readingsAccepted : report.readingsRejected);
      continue;
    }

    GatewayEvent wire;
    if (ev.type == SimEventType::snapshot) {
      NodesSnapshot snap;
      snap.mdevices.push_back({ev.mdeviceId, ev.snapshotNodes});
      wire = std::move(snap);
    } else {
      NodeUpdate upd;
      upd.mdeviceId = ev.mdeviceId;
      upd.node = {ev.nodeId, ev.type == SimEventType::connect ? NodeStatus::connected
                                                              : NodeStatus::disconnected};
      wire = std::move(upd);
    }
    auto frame = encode_event(wire);
    if (!frame) return frame.error();
    ++report.framesSent;
    std::string ack = hub.handle_gateway_message(*frame);
    ++(ack.starts_with(R"({"ok":true)") ? report.framesAcked : report.framesRejected);
  }

  clock.set_ms(timeline.params.durationMs);
  hub.advance_to(timeline.params.durationMs);
  return report;
}

}  // namespace edgehub
