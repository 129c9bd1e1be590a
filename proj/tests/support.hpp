#pragma once

// Shared test scaffolding: temp directories, independent oracles, and an
// in-process hub+simulator harness. The oracles here are deliberately written
// as naive brute force so they share no code with the production paths they
// check.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "edgehub/aggregate.hpp"
#include "edgehub/clock.hpp"
#include "edgehub/hub.hpp"
#include "edgehub/simulator.hpp"
#include "edgehub/sync.hpp"

namespace testsupport {

namespace fs = std::filesystem;

class TmpDir {
public:
  explicit TmpDir(const std::string& tag) {
    std::string tmpl = (fs::temp_directory_path() / (tag + ".XXXXXX")).string();
    std::vector<char> buf(tmpl.begin(), tmpl.end());
    buf.push_back('\0');
    if (::mkdtemp(buf.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = buf.data();
  }
  ~TmpDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

/// Parses a connectivity CSV into node -> ms.
inline std::map<std::string, int64_t> parse_csv(const fs::path& p) {
  std::map<std::string, int64_t> rows;
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    size_t comma = line.find(',');
    rows[line.substr(0, comma)] = std::stoll(line.substr(comma + 1));
  }
  return rows;
}

/// Brute-force connectivity oracle: 1 ms scan over explicit status history.
/// O(duration * nodes) — keep the inputs small.
inline std::map<std::string, std::vector<int64_t>> sweep_1ms(
    const edgehub::Timeline& timeline, const std::vector<int64_t>& cycleEnds) {
  using namespace edgehub;
  std::map<std::string, std::map<int64_t, bool>> history;  // node -> ts -> connected
  for (const auto& ev : timeline.events) {
    if (ev.type == SimEventType::snapshot) {
      for (const auto& n : ev.snapshotNodes) {
        history[n.id].emplace(ev.ts, n.status == NodeStatus::connected);
      }
    } else if (ev.type == SimEventType::connect) {
      history[ev.nodeId][ev.ts] = true;
    } else if (ev.type == SimEventType::disconnect) {
      history[ev.nodeId][ev.ts] = false;
    }
  }
  std::map<std::string, std::vector<int64_t>> out;
  int64_t horizon = cycleEnds.back();
  for (const auto& [nodeId, flips] : history) {
    auto& perCycle = out[nodeId];
    perCycle.assign(cycleEnds.size(), 0);
    bool connected = false;
    auto it = flips.begin();
    size_t cycle = 0;
    for (int64_t t = 0; t < horizon; ++t) {
      while (it != flips.end() && it->first <= t) connected = it++->second;
      while (t >= cycleEnds[cycle]) ++cycle;
      if (connected) ++perCycle[cycle];
    }
  }
  return out;
}

/// Brute-force triage oracle: per (device, kind) linear rescan with an
/// explicit window counter.
inline size_t brute_flag_count(const std::vector<edgehub::TelemetryReading>& readings,
                               const edgehub::TriageThresholds& th) {
  using namespace edgehub;
  struct Key {
    std::string device;
    VitalKind kind;
    bool operator<(const Key& o) const {
      return device != o.device ? device < o.device : kind < o.kind;
    }
  };
  std::map<Key, std::pair<int, bool>> state;  // -> {consecutive, alreadyFlagged}
  size_t flags = 0;
  for (const auto& r : readings) {
    bool breach = false;
    switch (r.kind) {
      case VitalKind::temperature: breach = r.value >= th.feverTempC; break;
      case VitalKind::oxygen_level: breach = r.value < th.lowOxygenPct; break;
      case VitalKind::heart_rate: breach = r.value > th.tachycardiaBpm; break;
    }
    auto& [count, flagged] = state[{r.deviceId, r.kind}];
    if (!breach) {
      count = 0;
      flagged = false;
      continue;
    }
    ++count;
    if (count >= th.window && !flagged) {
      ++flags;
      flagged = true;
    }
  }
  return flags;
}

/// Equality that ignores the one field recovery legitimately cannot restore:
/// a disconnected record's lastTimestamp (its accumulated time is already
/// final, so the stamp is inert).
inline bool materially_equal(const edgehub::SessionTable& a, const edgehub::SessionTable& b,
                             std::string* why = nullptr) {
  using namespace edgehub;
  if (a.size() != b.size()) {
    if (why) *why = "size " + std::to_string(a.size()) + " vs " + std::to_string(b.size());
    return false;
  }
  for (const auto& [id, ra] : a) {
    const NodeRecord* rb = b.find(id);
    if (!rb) {
      if (why) *why = "missing node " + id;
      return false;
    }
    bool same = ra.status == rb->status && ra.accumulatedMs == rb->accumulatedMs &&
                ra.mdeviceId == rb->mdeviceId &&
                (ra.status != NodeStatus::connected || ra.lastTimestamp == rb->lastTimestamp);
    if (!same) {
      if (why) *why = "node " + id + " differs";
      return false;
    }
  }
  return true;
}

/// Delivers one simulator event to an in-process hub (the body of drive(),
/// exposed so crash tests can stop and resume mid-timeline).
inline bool deliver(edgehub::Hub& hub, edgehub::SimulatedClock& clock,
                    const edgehub::SimEvent& ev) {
  using namespace edgehub;
  clock.set_ms(ev.ts);
  hub.advance_to(ev.ts);
  if (ev.type == SimEventType::reading) {
    return hub.ingest_reading(ev.reading).accepted;
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
  if (!frame) return false;
  return hub.handle_gateway_message(*frame).starts_with(R"({"ok":true)");
}

inline std::vector<int64_t> boundaries(int64_t durationMs, int64_t intervalMs) {
  std::vector<int64_t> ends;
  for (int64_t t = intervalMs; t <= durationMs; t += intervalMs) ends.push_back(t);
  return ends;
}

/// Serializes ground-truth records for one cycle through the hub's own CSV
/// writer, for byte comparisons against hub output files.
inline std::string truth_csv(const edgehub::GroundTruth& truth, size_t cycle, int64_t cycleStart,
                             int64_t cycleEnd) {
  std::vector<edgehub::ConnectivityRecord> records;
  for (const auto& [nodeId, perCycle] : truth.perCycleMs) {
    records.push_back({nodeId, perCycle[cycle], cycleStart, cycleEnd});
  }
  std::ostringstream out;
  auto w = edgehub::write_csv(records, out);
  return w ? out.str() : std::string("<serialize error>");
}

}  // namespace testsupport
