#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "edgehub/protocol.hpp"
#include "edgehub/result.hpp"
#include "edgehub/session.hpp"

namespace edgehub {

// ---------------------------------------------------------------------------
// Cycle aggregation: close an accounting cycle, emit one row per device,
// reset counters, write CSV. Plus log replay and vitals threshold flagging.
// ---------------------------------------------------------------------------

struct ConnectivityRecord {
  std::string nodeId;
  int64_t connectionTimeMs = 0;
  int64_t cycleStart = 0;
  int64_t cycleEnd = 0;

  bool operator==(const ConnectivityRecord&) const = default;
};

/// Snapshot-emit-reset as one step: credits running intervals up to cycleEnd,
/// emits one record per known node, then zeroes every accumulator. Connected
/// nodes keep their status with lastTimestamp = cycleEnd so the next cycle
/// starts clean.
Result<std::vector<ConnectivityRecord>> process_data(SessionTable& table, int64_t cycleStart,
                                                     int64_t cycleEnd);

/// Writes `NodeID,connectionTime` rows, sorted ascending by node id, LF line
/// endings. Returns bytes written; a sink failure reports the byte position
/// reached.
Result<uint64_t> write_csv(const std::vector<ConnectivityRecord>& records, std::ostream& sink);
Result<uint64_t> write_csv_file(const std::vector<ConnectivityRecord>& records,
                                const std::filesystem::path& path);

/// One timestamped gateway event, as recovered from a log.
struct ReplayEvent {
  int64_t ts = 0;
  GatewayEvent event;
};

/// Folds apply_snapshot / apply_update over a timestamp-ordered event log.
/// A timestamp going backwards is log corruption and names the offending
/// 1-based position.
Result<SessionTable> replay_events(std::span<const ReplayEvent> events);

// Triage flagging -------------------------------------------------------------

enum class TriageRule { fever, low_oxygen, tachycardia };

std::string_view to_string(TriageRule r);
std::optional<TriageRule> parse_rule(std::string_view s);
TriageRule rule_for(VitalKind k);

struct TriageThresholds {
  double feverTempC = 38.0;      // fever: temperature >= this
  double lowOxygenPct = 92.0;    // low_oxygen: oxygen_level < this
  double tachycardiaBpm = 120.0; // tachycardia: heart_rate > this
  int window = 3;                // consecutive breaching readings per flag
};

bool breaches(const TelemetryReading& r, const TriageThresholds& t);

struct TriageFlag {
  std::string deviceId;
  TriageRule rule = TriageRule::fever;
  std::vector<std::pair<int64_t, double>> triggeringValues;  // (ts, value), window-sized
  int64_t raisedAt = 0;

  bool operator==(const TriageFlag&) const = default;
};

/// Open run of consecutive breaching readings for one (device, kind);
/// serialized into the log bootstrap so flag state survives rotation.
struct TriageRunState {
  std::string deviceId;
  VitalKind kind = VitalKind::temperature;
  int count = 0;
  bool flagged = false;
  std::vector<std::pair<int64_t, double>> values;

  bool operator==(const TriageRunState&) const = default;
};

/// Incremental flag engine: a flag is raised on the Nth consecutive breaching
/// reading of one kind; one flag per (device, rule) until a non-breaching
/// reading of that kind resets the run.
class FlagTracker {
public:
  explicit FlagTracker(TriageThresholds thresholds = {});

  /// Feeds one validated reading; returns the flag if this reading raised one.
  std::optional<TriageFlag> ingest(const TelemetryReading& r);

  std::vector<TriageRunState> export_runs() const;
  void restore_runs(std::span<const TriageRunState> runs);

  const TriageThresholds& thresholds() const { return thresholds_; }

private:
  struct Run {
    int count = 0;
    bool flagged = false;
    std::vector<std::pair<int64_t, double>> values;
  };

  TriageThresholds thresholds_;
  std::map<std::pair<std::string, VitalKind>, Run> runs_;
};

/// Batch form: folds the tracker over a time-ordered reading stream.
std::vector<TriageFlag> flag_for_testing(std::span<const TelemetryReading> readings,
                                         const TriageThresholds& thresholds = {});

}  // namespace edgehub
