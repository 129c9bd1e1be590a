#include "edgehub/aggregate.hpp"

#include <algorithm>
#include <fstream>

namespace edgehub {

Result<std::vector<ConnectivityRecord>> process_data(SessionTable& table, int64_t cycleStart,
                                                     int64_t cycleEnd) {
  if (auto credited = credit_elapsed(table, cycleEnd); !credited) {
    return credited.error();
  }
  std::vector<ConnectivityRecord> records;
  records.reserve(table.size());
  for (const auto& [id, rec] : table) {
    records.push_back(ConnectivityRecord{id, rec.accumulatedMs, cycleStart, cycleEnd});
  }
  (void)reset_accumulated(table);
  return records;
}

Result<uint64_t> write_csv(const std::vector<ConnectivityRecord>& records, std::ostream& sink) {
  std::vector<const ConnectivityRecord*> sorted;
  sorted.reserve(records.size());
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->nodeId < b->nodeId; });

  uint64_t written = 0;
  auto put = [&](const std::string& chunk) -> bool {
    sink.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    if (!sink.good()) return false;
    written += chunk.size();
    return true;
  };

  if (!put("NodeID,connectionTime\n")) {
    return make_error(Errc::io, "csv write failed after " + std::to_string(written) + " bytes");
  }
  for (const auto* r : sorted) {
    if (!put(r->nodeId + "," + std::to_string(r->connectionTimeMs) + "\n")) {
      return make_error(Errc::io, "csv write failed after " + std::to_string(written) + " bytes");
    }
  }
  sink.flush();
  if (!sink.good()) {
    return make_error(Errc::io, "csv flush failed after " + std::to_string(written) + " bytes");
  }
  return written;
}

Result<uint64_t> write_csv_file(const std::vector<ConnectivityRecord>& records,
                                const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out.is_open()) {
    return make_error(Errc::io, "cannot open " + path.string());
  }
  return write_csv(records, out);
}

Result<SessionTable> replay_events(std::span<const ReplayEvent> events) {
  SessionTable table;
  int64_t last_ts = INT64_MIN;
  size_t line = 0;
  for (const auto& e : events) {
    ++line;
    if (e.ts < last_ts) {
      return make_error(Errc::ordering, "log corruption at line " + std::to_string(line) +
                                            ": timestamp " + std::to_string(e.ts) +
                                            " goes backwards");
    }
    last_ts = e.ts;
    Result<void> applied = std::holds_alternative<NodesSnapshot>(e.event)
                               ? apply_snapshot(table, std::get<NodesSnapshot>(e.event), e.ts)
                               : apply_update(table, std::get<NodeUpdate>(e.event), e.ts);
    if (!applied) {
      return make_error(applied.error().code, "log corruption at line " + std::to_string(line) +
                                                  ": " + applied.error().message);
    }
  }
  return table;
}

// Triage ----------------------------------------------------------------------

std::string_view to_string(TriageRule r) {
  switch (r) {
    case TriageRule::fever: return "fever";
    case TriageRule::low_oxygen: return "low_oxygen";
    case TriageRule::tachycardia: return "tachycardia";
  }
  return "fever";
}

std::optional<TriageRule> parse_rule(std::string_view s) {
  if (s == "fever") return TriageRule::fever;
  if (s == "low_oxygen") return TriageRule::low_oxygen;
  if (s == "tachycardia") return TriageRule::tachycardia;
  return std::nullopt;
}

TriageRule rule_for(VitalKind k) {
  switch (k) {
    case VitalKind::temperature: return TriageRule::fever;
    case VitalKind::oxygen_level: return TriageRule::low_oxygen;
    case VitalKind::heart_rate: return TriageRule::tachycardia;
  }
  return TriageRule::fever;
}

bool breaches(const TelemetryReading& r, const TriageThresholds& t) {
  switch (r.kind) {
    case VitalKind::temperature: return r.value >= t.feverTempC;
    case VitalKind::oxygen_level: return r.value < t.lowOxygenPct;
    case VitalKind::heart_rate: return r.value > t.tachycardiaBpm;
  }
  return false;
}

FlagTracker::FlagTracker(TriageThresholds thresholds) : thresholds_(thresholds) {}

std::optional<TriageFlag> FlagTracker::ingest(const TelemetryReading& r) {
  const auto key = std::make_pair(r.deviceId, r.kind);
  if (!breaches(r, thresholds_)) {
    runs_.erase(key);
    return std::nullopt;
  }
  Run& run = runs_[key];
  run.count += 1;
  if (static_cast<int>(run.values.size()) < thresholds_.window) {
    run.values.emplace_back(r.ts, r.value);
  }
  if (run.count == thresholds_.window && !run.flagged) {
    run.flagged = true;
    return TriageFlag{r.deviceId, rule_for(r.kind), run.values, r.ts};
  }
  return std::nullopt;
}

std::vector<TriageRunState> FlagTracker::export_runs() const {
  std::vector<TriageRunState> out;
  out.reserve(runs_.size());
  for (const auto& [key, run] : runs_) {
    out.push_back(TriageRunState{key.first, key.second, run.count, run.flagged, run.values});
  }
  return out;
}

void FlagTracker::restore_runs(std::span<const TriageRunState> runs) {
  runs_.clear();
  for (const auto& rs : runs) {
    runs_[std::make_pair(rs.deviceId, rs.kind)] = Run{rs.count, rs.flagged, rs.values};
  }
}

std::vector<TriageFlag> flag_for_testing(std::span<const TelemetryReading> readings,
                                         const TriageThresholds& thresholds) {
  FlagTracker tracker(thresholds);
  std::vector<TriageFlag> flags;
  for (const auto& r : readings) {
    if (auto flag = tracker.ingest(r)) {
      flags.push_back(std::move(*flag));
    }
  }
  return flags;
}

}  // namespace edgehub
