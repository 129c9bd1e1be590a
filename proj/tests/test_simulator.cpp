#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "edgehub/simulator.hpp"
#include "support.hpp"

using namespace edgehub;
using testsupport::boundaries;
using testsupport::parse_csv;
using testsupport::sweep_1ms;
using testsupport::TmpDir;

namespace {

SimParams small_params(uint64_t seed) {
  SimParams p;
  p.seed = seed;
  p.gateways = 2;
  p.nodesPerGateway = 3;
  p.durationMs = 4000;
  p.meanConnectedMs = 300;
  p.meanDisconnectedMs = 200;
  p.readingPeriodMs = 1000;
  return p;
}

}  // namespace

TEST_CASE("params validation") {
  SimParams p;
  CHECK(p.validate().ok());
  p.gateways = 0;
  CHECK_FALSE(p.validate().ok());
  p = {};
  p.durationMs = -1;
  CHECK_FALSE(p.validate().ok());
  p = {};
  p.meanConnectedMs = 0;
  CHECK_FALSE(p.validate().ok());
  p = {};
  p.feverProbability = 1.5;
  CHECK_FALSE(p.validate().ok());
}

TEST_CASE("the same seed always yields the same timeline") {
  SimParams p = small_params(7);
  p.feverProbability = 0.3;
  auto a = generate_timeline(p);
  auto b = generate_timeline(p);
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  REQUIRE(a->events.size() == b->events.size());
  for (size_t i = 0; i < a->events.size(); ++i) {
    const SimEvent& x = a->events[i];
    const SimEvent& y = b->events[i];
    CHECK(x.ts == y.ts);
    CHECK(x.type == y.type);
    CHECK(x.nodeId == y.nodeId);
    CHECK(x.mdeviceId == y.mdeviceId);
    if (x.type == SimEventType::reading) CHECK(x.reading == y.reading);
  }

  // And a different seed yields a different one.
  p.seed = 8;
  auto c = generate_timeline(p);
  REQUIRE(c.ok());
  bool differs = c->events.size() != a->events.size();
  for (size_t i = 0; !differs && i < a->events.size(); ++i) {
    differs = a->events[i].ts != c->events[i].ts || a->events[i].type != c->events[i].type;
  }
  CHECK(differs);
}

TEST_CASE("timeline structure: leading snapshots, ordered events, sane macs") {
  SimParams p = small_params(11);
  auto t = generate_timeline(p);
  REQUIRE(t.ok());

  // One snapshot per gateway at ts 0, before anything else.
  REQUIRE(t->events.size() >= size_t(p.gateways));
  std::set<std::string> gateways;
  for (int i = 0; i < p.gateways; ++i) {
    CHECK(t->events[i].ts == 0);
    CHECK(t->events[i].type == SimEventType::snapshot);
    CHECK(int(t->events[i].snapshotNodes.size()) == p.nodesPerGateway);
    gateways.insert(t->events[i].mdeviceId);
  }
  CHECK(gateways.size() == size_t(p.gateways));

  int64_t prev = 0;
  std::set<std::string> macs;
  for (const auto& ev : t->events) {
    CHECK(ev.ts >= prev);
    prev = ev.ts;
    CHECK(ev.ts < p.durationMs);
    if (ev.type == SimEventType::connect || ev.type == SimEventType::disconnect) {
      CHECK(is_valid_mac(ev.nodeId));
      macs.insert(ev.nodeId);
    }
  }

  // Per node, transitions strictly alternate starting from the snapshot state.
  std::map<std::string, NodeStatus> state;
  for (int i = 0; i < p.gateways; ++i) {
    for (const auto& n : t->events[i].snapshotNodes) state[n.id] = n.status;
  }
  for (const auto& ev : t->events) {
    if (ev.type == SimEventType::connect) {
      CHECK(state[ev.nodeId] == NodeStatus::disconnected);
      state[ev.nodeId] = NodeStatus::connected;
    } else if (ev.type == SimEventType::disconnect) {
      CHECK(state[ev.nodeId] == NodeStatus::connected);
      state[ev.nodeId] = NodeStatus::disconnected;
    }
  }
}

TEST_CASE("readings appear only while connected, at whole reading periods") {
  SimParams p = small_params(13);
  auto t = generate_timeline(p);
  REQUIRE(t.ok());

  std::map<std::string, bool> connected;
  for (int i = 0; i < p.gateways; ++i) {
    for (const auto& n : t->events[i].snapshotNodes) {
      connected[n.id] = n.status == NodeStatus::connected;
    }
  }
  size_t readings = 0;
  for (const auto& ev : t->events) {
    switch (ev.type) {
      case SimEventType::connect: connected[ev.nodeId] = true; break;
      case SimEventType::disconnect: connected[ev.nodeId] = false; break;
      case SimEventType::reading: {
        ++readings;
        CHECK(ev.ts % p.readingPeriodMs == 0);
        CHECK(connected[ev.reading.deviceId]);
        CHECK(validate_reading(ev.reading).empty());
        break;
      }
      default: break;
    }
  }
  CHECK(readings > 0);
}

TEST_CASE("vitals stay inside their configured envelopes") {
  SimParams p = small_params(17);
  p.durationMs = 30000;
  p.meanConnectedMs = 5000;
  p.feverProbability = 0.0;
  auto t = generate_timeline(p);
  REQUIRE(t.ok());
  size_t byKind[3] = {0, 0, 0};
  for (const auto& ev : t->events) {
    if (ev.type != SimEventType::reading) continue;
    ++byKind[size_t(ev.reading.kind)];
    switch (ev.reading.kind) {
      case VitalKind::temperature:
        CHECK(ev.reading.value >= 36.5);  // 36.8 +/- 0.3, fever off
        CHECK(ev.reading.value <= 37.1);
        CHECK(ev.reading.unit == "celsius");
        break;
      case VitalKind::oxygen_level:
        CHECK(ev.reading.value >= 96.0);  // 97 +/- 1
        CHECK(ev.reading.value <= 98.0);
        CHECK(ev.reading.unit == "percent");
        break;
      case VitalKind::heart_rate:
        CHECK(ev.reading.value >= 60.0);  // 70 +/- 10
        CHECK(ev.reading.value <= 80.0);
        CHECK(ev.reading.unit == "bpm");
        break;
    }
  }
  // The three vitals come as a triple per occupied reading slot.
  CHECK(byKind[0] > 0);
  CHECK(byKind[0] == byKind[1]);
  CHECK(byKind[1] == byKind[2]);
}

TEST_CASE("fever episodes push temperature into the febrile band") {
  SimParams p = small_params(19);
  p.durationMs = 60000;
  p.readingPeriodMs = 500;
  p.meanConnectedMs = 60000;  // mostly connected so episodes land on slots
  p.disconnectDisabled = true;
  p.feverProbability = 0.35;
  auto t = generate_timeline(p);
  REQUIRE(t.ok());

  // Per device: collect the temperature series and look at febrile stretches.
  std::map<std::string, std::vector<double>> temps;
  for (const auto& ev : t->events) {
    if (ev.type == SimEventType::reading && ev.reading.kind == VitalKind::temperature) {
      temps[ev.reading.deviceId].push_back(ev.reading.value);
    }
  }
  // Episodes are 3-6 slots long and may run back to back, so a febrile
  // stretch that ends mid-series is always at least 3 slots; only the end of
  // the run may truncate one. The value bands are sharp either way.
  size_t episodes = 0;
  bool sawCanonicalLength = false;
  for (const auto& [id, series] : temps) {
    size_t run = 0;
    for (double v : series) {
      CHECK(v <= 39.5);
      if (v >= 38.3) {
        ++run;
      } else {
        if (run > 0) {
          CHECK(run >= 3);
          if (run <= 6) sawCanonicalLength = true;
          ++episodes;
        }
        run = 0;
        CHECK(v <= 37.1);  // baseline band when not febrile
      }
    }
    if (run > 0) ++episodes;  // truncated by the end of the series
  }
  CHECK(episodes > 0);
  CHECK(sawCanonicalLength);
}

TEST_CASE("disconnectDisabled keeps every node connected for the whole run") {
  SimParams p = small_params(23);
  p.disconnectDisabled = true;
  auto t = generate_timeline(p);
  REQUIRE(t.ok());
  for (const auto& ev : t->events) {
    CHECK(ev.type != SimEventType::disconnect);
    if (ev.type == SimEventType::snapshot) {
      for (const auto& n : ev.snapshotNodes) CHECK(n.status == NodeStatus::connected);
    }
  }
  auto truth = ground_truth(*t, {p.durationMs});
  CHECK(truth.perCycleMs.size() == size_t(p.gateways * p.nodesPerGateway));
  for (const auto& [id, cycles] : truth.perCycleMs) {
    CHECK(cycles[0] == p.durationMs);
  }
}

TEST_CASE("ground truth clips intervals at cycle boundaries") {
  // A hand-built timeline: connect at C-2000, disconnect at C+3000 must split
  // into 2000 before the boundary and 3000 after.
  Timeline t;
  t.params = {};
  SimEvent snap;
  snap.ts = 0;
  snap.type = SimEventType::snapshot;
  snap.mdeviceId = "gw-1";
  snap.snapshotNodes = {{"AA:BB:CC:DD:EE:01", NodeStatus::disconnected}};
  SimEvent on{8000, SimEventType::connect, "gw-1", {}, "AA:BB:CC:DD:EE:01", {}};
  SimEvent off{13000, SimEventType::disconnect, "gw-1", {}, "AA:BB:CC:DD:EE:01", {}};
  t.events = {snap, on, off};

  auto truth = ground_truth(t, {10000, 20000});
  REQUIRE(truth.perCycleMs.count("AA:BB:CC:DD:EE:01"));
  const auto& cycles = truth.perCycleMs["AA:BB:CC:DD:EE:01"];
  REQUIRE(cycles.size() == 2);
  CHECK(cycles[0] == 2000);
  CHECK(cycles[1] == 3000);
  CHECK(truth.totalMs["AA:BB:CC:DD:EE:01"] == 5000);

  // An interval still open at the horizon clips there: [8000, 20000).
  t.events = {snap, on};
  auto openTruth = ground_truth(t, {10000, 20000});
  CHECK(openTruth.perCycleMs["AA:BB:CC:DD:EE:01"][0] == 2000);
  CHECK(openTruth.perCycleMs["AA:BB:CC:DD:EE:01"][1] == 10000);
  CHECK(openTruth.totalMs["AA:BB:CC:DD:EE:01"] == 12000);
}

TEST_CASE("ground truth matches a brute-force 1ms sweep") {
  for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
    SimParams p = small_params(seed);
    auto t = generate_timeline(p);
    REQUIRE(t.ok());
    auto ends = boundaries(p.durationMs, 1000);
    auto truth = ground_truth(*t, ends);
    auto swept = sweep_1ms(*t, ends);
    REQUIRE(truth.perCycleMs.size() == swept.size());
    for (const auto& [nodeId, cycles] : truth.perCycleMs) {
      REQUIRE(swept.count(nodeId));
      for (size_t c = 0; c < cycles.size(); ++c) {
        CHECK_MESSAGE(cycles[c] == swept[nodeId][c],
                      "node " << nodeId << " cycle " << c << " seed " << seed);
      }
    }
  }
}

TEST_CASE("driving a hub reproduces the ground truth exactly") {
  for (uint64_t seed : {101ull, 202ull}) {
    SimParams p = small_params(seed);
    auto t = generate_timeline(p);
    REQUIRE(t.ok());

    TmpDir dir("simhub");
    SimulatedClock clock(0);
    HubConfig cfg;
    cfg.logDir = dir.path();
    cfg.intervalMs = 1000;
    auto hub = Hub::open(cfg, clock, nullptr);
    REQUIRE(hub.ok());

    auto report = drive(*t, **hub, clock);
    REQUIRE(report.ok());
    CHECK(report->framesSent == report->framesAcked);
    CHECK(report->framesRejected == 0);
    CHECK(report->readingsRejected == 0);

    auto ends = boundaries(p.durationMs, cfg.intervalMs);
    auto truth = ground_truth(*t, ends);
    for (size_t c = 0; c < ends.size(); ++c) {
      auto rows = parse_csv(dir.path() / ("connectivity-" + std::to_string(ends[c]) + ".csv"));
      REQUIRE(rows.size() == truth.perCycleMs.size());
      for (const auto& [nodeId, cycles] : truth.perCycleMs) {
        CHECK_MESSAGE(rows[nodeId] == cycles[c], "node " << nodeId << " cycle " << c);
      }
    }
  }
}

TEST_CASE("deterministic rng helpers stay inside their contracts") {
  DetRng rng(99);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 1000; ++i) {
    int64_t v = rng.uniform_int(3, 6);
    CHECK(v >= 3);
    CHECK(v <= 6);
    CHECK(rng.exponential_ms(250.0) >= 1);
    double x = rng.uniform(36.5, 37.1);
    CHECK(x >= 36.5);
    CHECK(x < 37.1);
  }
  // The exponential's sample mean lands near the requested mean.
  double sum = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += double(rng.exponential_ms(500.0));
  CHECK(std::abs(sum / n - 500.0) < 25.0);

  // Identical seeds, identical streams.
  DetRng a(1), b(1);
  for (int i = 0; i < 100; ++i) CHECK(a.raw() == b.raw());
}
