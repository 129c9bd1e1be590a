#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "edgehub/hub.hpp"
#include "edgehub/protocol.hpp"
#include "edgehub/result.hpp"

namespace edgehub {

// ---------------------------------------------------------------------------
// Deterministic synthetic fleet: gateways full of devices that churn between
// connected and disconnected with exponential dwell times and stream vitals
// while connected. The same seed always yields the same timeline, and the
// interval-sweep ground truth is the oracle the hub's accounting must match
// exactly.
// ---------------------------------------------------------------------------

struct SimParams {
  uint64_t seed = 42;
  int gateways = 3;
  int nodesPerGateway = 10;
  int64_t durationMs = 60'000;
  int64_t meanConnectedMs = 8'000;
  int64_t meanDisconnectedMs = 5'000;
  int64_t readingPeriodMs = 10'000;
  double feverProbability = 0.0;
  bool disconnectDisabled = false;  // the meanDisconnectedMs -> infinity limit

  Result<void> validate() const;
};

enum class SimEventType { snapshot, connect, disconnect, reading };

struct SimEvent {
  int64_t ts = 0;
  SimEventType type = SimEventType::snapshot;
  std::string mdeviceId;
  std::vector<NodeDescriptor> snapshotNodes;  // snapshot only
  std::string nodeId;                         // connect / disconnect
  TelemetryReading reading;                   // reading only
};

struct Timeline {
  SimParams params;
  std::vector<SimEvent> events;  // non-decreasing ts; per-node order preserved
};

/// Deterministic function of params.seed.
Result<Timeline> generate_timeline(const SimParams& params);

/// Exact per-node connected time, per cycle and over the whole run. Cycles
/// are [prevEnd, end) windows starting at 0; open intervals clip at the last
/// boundary.
struct GroundTruth {
  std::vector<int64_t> cycleEnds;
  std::map<std::string, std::vector<int64_t>> perCycleMs;  // node -> one entry per cycle
  std::map<std::string, int64_t> totalMs;                  // node -> clipped run total
};

GroundTruth ground_truth(const Timeline& timeline, const std::vector<int64_t>& cycleEnds);

/// Replays the timeline against an in-process hub sharing `clock`. The clock
/// is advanced to every event's ts before delivery, so accounting is exact.
struct DriveReport {
  size_t framesSent = 0;
  size_t framesAcked = 0;
  size_t framesRejected = 0;
  size_t readingsSent = 0;
  size_t readingsAccepted = 0;
  size_t readingsRejected = 0;
};

Result<DriveReport> drive(const Timeline& timeline, Hub& hub, SimulatedClock& clock);

// Deterministic random helpers. mt19937_64 has a portable bit stream; the
// transforms below avoid std::uniform_real_distribution and friends, whose
// outputs vary across standard libraries.
class DetRng {
public:
  explicit DetRng(uint64_t seed) : eng_(seed) {}

  uint64_t raw() { return eng_(); }

  double uniform01() {  // [0, 1), 53-bit resolution
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
    return lo + static_cast<int64_t>(uniform01() * static_cast<double>(hi - lo + 1));
  }

  /// Inverse-CDF exponential draw, rounded to whole ms, never below 1.
  int64_t exponential_ms(double meanMs);

private:
  std::mt19937_64 eng_;
};

}  // namespace edgehub
