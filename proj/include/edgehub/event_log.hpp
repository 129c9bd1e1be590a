#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "edgehub/aggregate.hpp"
#include "edgehub/protocol.hpp"
#include "edgehub/result.hpp"
#include "edgehub/session.hpp"

namespace edgehub {

// ---------------------------------------------------------------------------
// Append-only JSON-lines event log, rotated per aggregation cycle. Every line
// is one object prefixed with "seq" and "ts"; gateway entries reuse the wire
// schema verbatim. Each log file starts with a bootstrap entry (full table
// snapshot + open triage runs) so replaying a single file reproduces the live
// state at any instant of its cycle.
// ---------------------------------------------------------------------------

/// One replayed gateway entry, kept verbatim for raw-mode re-enqueue.
struct RawLogFrame {
  int64_t seq = 0;
  int64_t ts = 0;
  std::string line;  // the full log line, seq/ts prefix included
};

/// Everything recovered from one log file.
struct ReplayedState {
  SessionTable table;
  FlagTracker tracker;
  std::vector<TriageFlag> flagsRaised;  // re-raised by replayed readings, pending again
  int64_t lastSeq = -1;
  int64_t lastTs = -1;
  int64_t cycleStart = -1;  // ts of the leading bootstrap, else of the first entry
  size_t gatewayEntries = 0;
  std::vector<RawLogFrame> rawFrames;
  size_t cleanBytes = 0;   // file prefix covered by intact entries
  bool tornTail = false;   // a crash-torn final line was dropped (never acked)
};

/// Reads one log file. Decreasing timestamps or malformed interior lines are
/// log corruption and name the 1-based line; an unreadable final line is a
/// crash artifact and is dropped instead (its append was never acked).
Result<ReplayedState> replay_log_file(const std::filesystem::path& file,
                                      const TriageThresholds& thresholds = {});

class EventLog {
public:
  static constexpr std::string_view kCurrentName = "events-current.jsonl";

  static std::filesystem::path current_path(const std::filesystem::path& dir);
  static bool exists(const std::filesystem::path& dir);

  /// Starts a fresh current log in `dir` and writes the initial bootstrap.
  static Result<std::unique_ptr<EventLog>> create(const std::filesystem::path& dir, int64_t now,
                                                  const SessionTable& table,
                                                  std::span<const TriageRunState> runs);

  /// Continues appending to an existing current log (after replay).
  static Result<std::unique_ptr<EventLog>> resume(const std::filesystem::path& dir,
                                                  int64_t nextSeq, int64_t lastTs);

  virtual ~EventLog() = default;
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  /// Appends a gateway frame (must be a trimmed JSON object). Returns the
  /// composed log line, which doubles as the raw-mode sync payload item.
  Result<std::string> append_gateway(int64_t ts, std::string_view frame);

  Result<void> append_reading(int64_t ts, const TelemetryReading& r);

  /// Closes the cycle: renames the current file to events-<cycleEnd>.jsonl
  /// and opens a fresh one seeded with a bootstrap of the given state.
  Result<std::filesystem::path> rotate(int64_t cycleEnd, const SessionTable& table,
                                       std::span<const TriageRunState> runs);

  int64_t last_ts() const { return lastTs_; }
  int64_t next_seq() const { return nextSeq_; }
  const std::filesystem::path& dir() const { return dir_; }

protected:
  explicit EventLog(std::filesystem::path dir);

  Result<void> init_fresh(int64_t now, const SessionTable& table,
                          std::span<const TriageRunState> runs);
  Result<void> init_resume(int64_t nextSeq, int64_t lastTs);

  /// Writes one line (without the trailing newline) durably; the single seam
  /// the whole log goes through.
  virtual Result<void> write_line(const std::string& line);

private:
  Result<void> open_stream(std::ios::openmode mode);
  Result<void> append_bootstrap(int64_t ts, const SessionTable& table,
                                std::span<const TriageRunState> runs);
  Result<void> append_line(int64_t ts, const std::string& line);

  std::filesystem::path dir_;
  std::ofstream out_;
  int64_t nextSeq_ = 0;
  int64_t lastTs_ = INT64_MIN;
};

/// Serializes the wire form of a full-table snapshot, grouped by gateway.
Result<std::string> encode_table_snapshot(const SessionTable& table);

}  // namespace edgehub
