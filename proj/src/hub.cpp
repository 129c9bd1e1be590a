#include "edgehub/hub.hpp"

#include <iostream>
#include <variant>

#include <json.hpp>

namespace edgehub {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string_view to_string(OffloadMode mode) {
  return mode == OffloadMode::raw ? "raw" : "aggregated";
}

std::optional<OffloadMode> parse_mode(std::string_view s) {
  if (s == "raw") return OffloadMode::raw;
  if (s == "aggregated") return OffloadMode::aggregated;
  return std::nullopt;
}

Result<void> HubConfig::validate() const {
  if (hubId.empty()) return make_error(Errc::validation, "hubId must not be empty");
  if (logDir.empty()) return make_error(Errc::validation, "logDir must be set");
  if (intervalMs <= 0) return make_error(Errc::validation, "intervalMs must be > 0");
  if (triage.window < 1) return make_error(Errc::validation, "triage window must be >= 1");
  return {};
}

namespace {

constexpr std::string_view kAckOk = R"({"ok":true})";

std::string_view trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Hub::Hub(HubConfig cfg, Clock& clock, SyncQueue* queue)
    : cfg_(std::move(cfg)), clock_(clock), queue_(queue), tracker_(cfg_.triage) {}

Result<std::unique_ptr<Hub>> Hub::open(const HubConfig& cfg, Clock& clock, SyncQueue* queue) {
  if (auto r = cfg.validate(); !r) return r.error();
  std::unique_ptr<Hub> hub(new Hub(cfg, clock, queue));

  if (EventLog::exists(cfg.logDir)) {
    auto replayed = replay_log_file(EventLog::current_path(cfg.logDir), cfg.triage);
    if (!replayed && replayed.error().message.starts_with("empty log")) {
      // Crashed before the very first bootstrap line made it out; start over.
    } else if (!replayed) {
      return replayed.error();
    } else {
      fs::path current = EventLog::current_path(cfg.logDir);
      std::error_code ec;
      uint64_t size = fs::file_size(current, ec);
      if (!ec && replayed->cleanBytes < size) {
        // Drop the crash-torn tail before appending again; it was never acked.
        fs::resize_file(current, replayed->cleanBytes, ec);
        if (ec) return make_error(Errc::io, "cannot trim torn log tail: " + ec.message());
      }
      auto log = EventLog::resume(cfg.logDir, replayed->lastSeq + 1, replayed->lastTs);
      if (!log) return log.error();
      hub->table_ = std::move(replayed->table);
      hub->tracker_ = std::move(replayed->tracker);
      hub->pendingFlags_ = std::move(replayed->flagsRaised);
      hub->log_ = std::move(*log);
      hub->cycleStart_ = replayed->cycleStart;
      hub->nextBoundary_ = replayed->cycleStart + cfg.intervalMs;
      if (cfg.mode == OffloadMode::raw && queue) {
        // Acked events may have missed their enqueue when we died; batch ids
        // are deterministic, so re-offering every replayed frame converges —
        // the queue rejects the ones that already made it.
        for (const auto& frame : replayed->rawFrames) hub->enqueue_raw(frame.seq, frame.line);
      }
      return hub;
    }
  }

  int64_t now = clock.now_ms();
  auto log = EventLog::create(cfg.logDir, now, SessionTable{}, {});
  if (!log) return log.error();
  hub->log_ = std::move(*log);
  hub->cycleStart_ = now;
  hub->nextBoundary_ = now + cfg.intervalMs;
  return hub;
}

Result<std::unique_ptr<Hub>> Hub::adopt(const HubConfig& cfg, Clock& clock, SyncQueue* queue,
                                        std::unique_ptr<EventLog> log) {
  if (auto r = cfg.validate(); !r) return r.error();
  std::unique_ptr<Hub> hub(new Hub(cfg, clock, queue));
  hub->cycleStart_ = log->last_ts();
  hub->nextBoundary_ = hub->cycleStart_ + cfg.intervalMs;
  hub->log_ = std::move(log);
  return hub;
}

std::string Hub::reject(Errc code, const std::string& why) {
  ++counters_.rejectedMessages;
  (void)why;  // carried in logs/tests via the code; ack stays compact
  return std::string(R"({"ok":false,"error":")") + errc_name(code) + "\"}";
}

std::string Hub::handle_gateway_message(std::string_view frame) {
  std::lock_guard lk(mu_);
  int64_t now = clock_.now_ms();
  advance_locked(now);

  if (counters_.degraded) return reject(Errc::degraded, "log unavailable");

  std::string_view body = trim(frame);
  if (body.empty()) return reject(Errc::parse_error, "empty frame");

  auto event = decode_event(body);
  if (!event) return reject(event.error().code, event.error().message);

  if (now < log_->last_ts()) {
    return reject(Errc::ordering, "receive time earlier than the log tail");
  }
  if (auto admissible = check_event(table_, *event, now); !admissible) {
    return reject(admissible.error().code, admissible.error().message);
  }

  // Durability before ack: the event hits the log first; only then the table.
  auto line = log_->append_gateway(now, body);
  if (!line) {
    counters_.degraded = true;
    std::cerr << "hub: log append failed, entering degraded mode: " << line.error().message
              << "\n";
    return reject(Errc::degraded, line.error().message);
  }

  Result<void> applied = std::holds_alternative<NodesSnapshot>(*event)
                             ? apply_snapshot(table_, std::get<NodesSnapshot>(*event), now)
                             : apply_update(table_, std::get<NodeUpdate>(*event), now);
  if (!applied) {  // admission check makes this unreachable; fail loudly if not
    counters_.degraded = true;
    std::cerr << "hub: logged event failed to apply: " << applied.error().message << "\n";
    return reject(applied.error().code, applied.error().message);
  }

  ++counters_.eventsTotal;
  if (cfg_.mode == OffloadMode::raw && queue_) enqueue_raw(log_->next_seq() - 1, *line);
  return std::string(kAckOk);
}

Hub::ReadingAck Hub::ingest_reading(const TelemetryReading& reading) {
  std::lock_guard lk(mu_);
  int64_t now = clock_.now_ms();
  advance_locked(now);

  ReadingAck ack;
  if (counters_.degraded) {
    ++counters_.rejectedMessages;
    ack.degraded = true;
    return ack;
  }

  ack.violations = validate_reading(reading);
  if (!ack.violations.empty()) {
    ++counters_.rejectedMessages;
    return ack;
  }
  if (now < log_->last_ts()) {
    ++counters_.rejectedMessages;
    ack.violations.push_back("receive time earlier than the log tail");
    return ack;
  }

  if (auto r = log_->append_reading(now, reading); !r) {
    counters_.degraded = true;
    std::cerr << "hub: log append failed, entering degraded mode: " << r.error().message << "\n";
    ++counters_.rejectedMessages;
    ack.degraded = true;
    return ack;
  }

  ++counters_.eventsTotal;
  if (auto flag = tracker_.ingest(reading)) {
    pendingFlags_.push_back(std::move(*flag));
  }
  ack.accepted = true;
  return ack;
}

void Hub::advance_to(int64_t now) {
  std::lock_guard lk(mu_);
  advance_locked(now);
}

int64_t Hub::tick() {
  std::lock_guard lk(mu_);
  int64_t now = clock_.now_ms();
  advance_locked(now);
  return nextBoundary_ > now ? nextBoundary_ - now : 0;
}

void Hub::advance_locked(int64_t now) {
  while (nextBoundary_ <= now) {
    if (nextBoundary_ > cycleStart_) run_cycle(nextBoundary_);
    nextBoundary_ += cfg_.intervalMs;
  }
}

void Hub::run_cycle(int64_t boundary) {
  // Events can only land at or after the previous boundary; if the service
  // loop is late, close the cycle at the latest stamped instant instead of
  // crediting time backwards.
  int64_t cycleEnd = std::max(boundary, log_->last_ts());

  auto records = process_data(table_, cycleStart_, cycleEnd);
  if (!records) {
    counters_.degraded = true;
    std::cerr << "hub: aggregation failed: " << records.error().message << "\n";
    return;
  }

  enqueue_cycle_batches(cycleEnd, *records);

  // CSV after the batches: the records are already durable in the queue, so a
  // torn CSV costs nothing (the cloud rebuilds it from the batch).
  fs::path csv = cfg_.logDir / ("connectivity-" + std::to_string(cycleEnd) + ".csv");
  auto written = write_csv_file(*records, csv);
  if (!written) written = write_csv_file(*records, csv);  // one retry, then move on
  if (!written) {
    std::cerr << "hub: cycle CSV failed twice, records remain queued: "
              << written.error().message << "\n";
  }

  auto runs = tracker_.export_runs();
  if (auto rotated = log_->rotate(cycleEnd, table_, runs); !rotated) {
    counters_.degraded = true;
    std::cerr << "hub: log rotation failed, entering degraded mode: "
              << rotated.error().message << "\n";
  }

  counters_.lastCycleEnd = cycleEnd;
  ++counters_.cyclesCompleted;
  cycleStart_ = cycleEnd;
}

void Hub::enqueue_cycle_batches(int64_t cycleEnd, const std::vector<ConnectivityRecord>& records) {
  if (!queue_ || cfg_.mode != OffloadMode::aggregated) {
    pendingFlags_.clear();  // raw mode uplinks the event stream itself
    return;
  }

  if (!records.empty()) {
    std::vector<std::string> items;
    items.reserve(records.size());
    for (const auto& rec : records) items.push_back(encode_record_item(rec));
    SyncBatch batch{batch_id(cfg_.hubId, cycleEnd, 0), BatchKind::connectivity_records, cycleEnd,
                    join_payload(items)};
    if (auto r = queue_->enqueue(batch); !r && r.error().code != Errc::duplicate) {
      std::cerr << "hub: cannot enqueue records batch: " << r.error().message << "\n";
    }
  }
  if (!pendingFlags_.empty()) {
    std::vector<std::string> items;
    items.reserve(pendingFlags_.size());
    for (const auto& flag : pendingFlags_) items.push_back(encode_flag_item(flag));
    SyncBatch batch{batch_id(cfg_.hubId, cycleEnd, 1), BatchKind::triage_flags, cycleEnd,
                    join_payload(items)};
    if (auto r = queue_->enqueue(batch); !r && r.error().code != Errc::duplicate) {
      std::cerr << "hub: cannot enqueue flags batch: " << r.error().message << "\n";
    }
    pendingFlags_.clear();
  }
  if (flusher_) flusher_->kick();
}

void Hub::enqueue_raw(int64_t seq, const std::string& line) {
  SyncBatch batch{batch_id(cfg_.hubId, nextBoundary_, 2 + seq), BatchKind::raw_events,
                  clock_.now_ms(), "[" + line + "]"};
  if (auto r = queue_->enqueue(batch); !r && r.error().code != Errc::duplicate) {
    std::cerr << "hub: cannot enqueue raw batch: " << r.error().message << "\n";
  }
  if (flusher_) flusher_->kick();
}

Hub::Counters Hub::counters() const {
  std::lock_guard lk(mu_);
  return counters_;
}

SessionTable Hub::table_copy() const {
  std::lock_guard lk(mu_);
  return table_;
}

std::vector<TriageFlag> Hub::pending_flags() const {
  std::lock_guard lk(mu_);
  return pendingFlags_;
}

int64_t Hub::cycle_start() const {
  std::lock_guard lk(mu_);
  return cycleStart_;
}

int64_t Hub::next_boundary() const {
  std::lock_guard lk(mu_);
  return nextBoundary_;
}

std::string Hub::health_json() const {
  std::lock_guard lk(mu_);
  ojson health{{"ok", !counters_.degraded},
               {"events_total", counters_.eventsTotal},
               {"rejected_messages", counters_.rejectedMessages},
               {"last_cycle_end", counters_.lastCycleEnd},
               {"cycles_completed", counters_.cyclesCompleted},
               {"degraded", counters_.degraded},
               {"mode", std::string(to_string(cfg_.mode))},
               {"nodes", table_.size()},
               {"pending_flags", pendingFlags_.size()}};
  return health.dump();
}

}  // namespace edgehub
