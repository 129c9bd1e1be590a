#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "edgehub/aggregate.hpp"
#include "edgehub/clock.hpp"
#include "edgehub/event_log.hpp"
#include "edgehub/result.hpp"
#include "edgehub/session.hpp"
#include "edgehub/sync.hpp"

namespace edgehub {

// ---------------------------------------------------------------------------
// The edge service core: ingests gateway frames and telemetry readings,
// appends the durable event log before acking, keeps the session table, and
// fires the aggregation cycle on schedule. All mutations funnel through one
// mutex — many connections, a single writer.
// ---------------------------------------------------------------------------

enum class OffloadMode { aggregated, raw };

std::string_view to_string(OffloadMode mode);
std::optional<OffloadMode> parse_mode(std::string_view s);

struct HubConfig {
  std::string hubId = "hub-1";
  std::filesystem::path logDir;
  int64_t intervalMs = 86'400'000;  // one aggregation cycle per day unless overridden
  OffloadMode mode = OffloadMode::aggregated;
  TriageThresholds triage;

  Result<void> validate() const;
};

class Hub {
public:
  struct Counters {
    uint64_t eventsTotal = 0;       // accepted gateway events + readings
    uint64_t rejectedMessages = 0;  // both kinds, any reject reason
    int64_t lastCycleEnd = -1;      // -1 until a cycle completes in this process
    uint64_t cyclesCompleted = 0;
    bool degraded = false;
  };

  struct ReadingAck {
    bool accepted = false;
    bool degraded = false;
    std::vector<std::string> violations;
  };

  /// Opens the hub on `logDir`. An existing current log is replayed first, so
  /// every previously acked event is back in the table before new traffic is
  /// admitted. `queue` may be null (no uplink configured).
  static Result<std::unique_ptr<Hub>> open(const HubConfig& cfg, Clock& clock, SyncQueue* queue);

  /// Like open(), but adopts a caller-built log (test seam for fault
  /// injection). The log must already be positioned past its bootstrap.
  static Result<std::unique_ptr<Hub>> adopt(const HubConfig& cfg, Clock& clock, SyncQueue* queue,
                                            std::unique_ptr<EventLog> log);

  /// Full gateway ingestion path for one frame. Always returns the ack text
  /// to write back: {"ok":true} or {"ok":false,"error":"<code>"}.
  std::string handle_gateway_message(std::string_view frame);

  /// Full REST ingestion path for one validated-shape reading.
  ReadingAck ingest_reading(const TelemetryReading& reading);

  /// Fires every cycle boundary that `now` has crossed. The ingestion paths
  /// call this themselves; service loops call it periodically.
  void advance_to(int64_t now);

  /// advance_to(clock now); returns ms until the next boundary.
  int64_t tick();

  void set_flusher(Flusher* flusher) { flusher_ = flusher; }

  Counters counters() const;
  SessionTable table_copy() const;
  std::vector<TriageFlag> pending_flags() const;
  int64_t cycle_start() const;
  int64_t next_boundary() const;
  std::string health_json() const;
  const HubConfig& config() const { return cfg_; }

private:
  Hub(HubConfig cfg, Clock& clock, SyncQueue* queue);

  void advance_locked(int64_t now);
  void run_cycle(int64_t boundary);
  void enqueue_cycle_batches(int64_t cycleEnd, const std::vector<ConnectivityRecord>& records);
  void enqueue_raw(int64_t seq, const std::string& line);
  std::string reject(Errc code, const std::string& why);

  HubConfig cfg_;
  Clock& clock_;
  SyncQueue* queue_;
  Flusher* flusher_ = nullptr;

  mutable std::mutex mu_;
  SessionTable table_;
  FlagTracker tracker_;
  std::vector<TriageFlag> pendingFlags_;
  std::unique_ptr<EventLog> log_;
  Counters counters_;
  int64_t cycleStart_ = 0;
  int64_t nextBoundary_ = 0;
};

}  // namespace edgehub
