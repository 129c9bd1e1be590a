#include <random>

#include "doctest.h"
#include "edgehub/hub.hpp"
#include <json.hpp>

#include "support.hpp"

using namespace edgehub;
using testsupport::parse_csv;
using testsupport::read_file;
using testsupport::TmpDir;

namespace {

constexpr const char* kA = "AA:BB:CC:DD:EE:01";
constexpr const char* kB = "AA:BB:CC:DD:EE:02";

HubConfig config_for(const TmpDir& dir, int64_t intervalMs = 10000,
                     OffloadMode mode = OffloadMode::aggregated) {
  HubConfig cfg;
  cfg.logDir = dir.path();
  cfg.intervalMs = intervalMs;
  cfg.mode = mode;
  return cfg;
}

std::string frame_update(const char* id, NodeStatus st, const char* gw = "gw-1") {
  return *encode_event(GatewayEvent{NodeUpdate{gw, {id, st}}});
}

TelemetryReading reading(const char* id, double temp, int64_t ts) {
  return {id, VitalKind::temperature, temp, "celsius", ts};
}

/// EventLog that starts failing writes after a set number of lines.
class FailingLog : public EventLog {
public:
  static std::unique_ptr<FailingLog> create_at(const std::filesystem::path& dir, int64_t now,
                                               int failAfterLines) {
    auto log = std::unique_ptr<FailingLog>(new FailingLog(dir, failAfterLines));
    auto init = log->init_fresh(now, SessionTable{}, {});
    REQUIRE(init.ok());
    return log;
  }

protected:
  Result<void> write_line(const std::string& line) override {
    if (linesLeft_-- <= 0) return make_error(Errc::io, "disk full (injected)");
    return EventLog::write_line(line);
  }

private:
  FailingLog(const std::filesystem::path& dir, int failAfterLines)
      : EventLog(dir), linesLeft_(failAfterLines) {}

  int linesLeft_;
};

}  // namespace

TEST_CASE("config validation") {
  TmpDir dir("hub");
  HubConfig cfg = config_for(dir);
  CHECK(cfg.validate().ok());
  cfg.intervalMs = 0;
  CHECK_FALSE(cfg.validate().ok());
  cfg = config_for(dir);
  cfg.hubId = "";
  CHECK_FALSE(cfg.validate().ok());
  cfg = config_for(dir);
  cfg.logDir = "";
  CHECK_FALSE(cfg.validate().ok());

  CHECK(parse_mode("aggregated") == OffloadMode::aggregated);
  CHECK(parse_mode("raw") == OffloadMode::raw);
  CHECK_FALSE(parse_mode("both").has_value());
}

TEST_CASE("accepts valid frames, rejects bad ones, and counts both") {
  TmpDir dir("hub");
  SimulatedClock clock(0);
  auto hub = Hub::open(config_for(dir), clock, nullptr);
  REQUIRE(hub.ok());

  clock.set_ms(1000);
  CHECK((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::connected)) == R"({"ok":true})");
  CHECK((*hub)->handle_gateway_message("not json at all") == R"({"ok":false,"error":"parse_error"})");
  CHECK((*hub)->handle_gateway_message(R"({"event":"NodeUpdate","data":{}})") ==
        R"({"ok":false,"error":"unsupported_event"})");
  CHECK((*hub)->handle_gateway_message(
            R"({"event":"NodesUpdate","data":{"mdeviceId":"gw-1","node":{"id":"zz","status":"connected"}}})") ==
        R"({"ok":false,"error":"validation"})");

  auto c = (*hub)->counters();
  CHECK(c.eventsTotal == 1);
  CHECK(c.rejectedMessages == 3);
  CHECK_FALSE(c.degraded);
  CHECK(c.lastCycleEnd == -1);

  // The accepted event is in the table.
  auto table = (*hub)->table_copy();
  REQUIRE(table.find(kA) != nullptr);
  CHECK(table.find(kA)->status == NodeStatus::connected);
}

TEST_CASE("rejects clock regressions against the log's high-water mark") {
  TmpDir dir("hub");
  SimulatedClock clock(5000);
  auto hub = Hub::open(config_for(dir, 1000000), clock, nullptr);
  REQUIRE(hub.ok());
  CHECK((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::connected)) == R"({"ok":true})");

  clock.set_ms(4000);  // behind the log now
  auto ack = (*hub)->handle_gateway_message(frame_update(kA, NodeStatus::disconnected));
  CHECK(ack == R"({"ok":false,"error":"ordering"})");
  CHECK((*hub)->counters().rejectedMessages == 1);
  // Nothing was credited.
  CHECK((*hub)->table_copy().find(kA)->status == NodeStatus::connected);
}

TEST_CASE("readings are validated, logged, and feed the triage tracker") {
  TmpDir dir("hub");
  SimulatedClock clock(0);
  auto hub = Hub::open(config_for(dir, 1000000), clock, nullptr);
  REQUIRE(hub.ok());

  clock.set_ms(10);
  CHECK((*hub)->ingest_reading(reading(kA, 36.8, 10)).accepted);

  auto bad = (*hub)->ingest_reading(reading(kA, 60.0, 20));
  CHECK_FALSE(bad.accepted);
  REQUIRE(bad.violations.size() == 1);
  CHECK(bad.violations[0].find("range") != std::string::npos);

  for (int64_t ts : {30, 40, 50}) {
    clock.set_ms(ts);
    CHECK((*hub)->ingest_reading(reading(kA, 38.5, ts)).accepted);
  }
  auto flags = (*hub)->pending_flags();
  REQUIRE(flags.size() == 1);
  CHECK(flags[0].rule == TriageRule::fever);
  CHECK(flags[0].deviceId == kA);

  auto c = (*hub)->counters();
  CHECK(c.eventsTotal == 4);
  CHECK(c.rejectedMessages == 1);
}

TEST_CASE("cycle boundary writes the csv and resets accounting") {
  TmpDir dir("hub");
  SimulatedClock clock(0);
  auto hub = Hub::open(config_for(dir, 10000), clock, nullptr);
  REQUIRE(hub.ok());

  clock.set_ms(1000);
  REQUIRE((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::connected)) == R"({"ok":true})");
  clock.set_ms(4000);
  REQUIRE((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::disconnected)) == R"({"ok":true})");
  REQUIRE((*hub)->handle_gateway_message(frame_update(kB, NodeStatus::connected, "gw-2")) == R"({"ok":true})");

  (*hub)->advance_to(10000);
  auto c = (*hub)->counters();
  CHECK(c.lastCycleEnd == 10000);
  CHECK(c.cyclesCompleted == 1);

  auto rows = parse_csv(dir.path() / "connectivity-10000.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[kA] == 3000);  // 1000..4000
  CHECK(rows[kB] == 6000);  // 4000..10000, still connected at the boundary

  // Next cycle starts clean: kB keeps running from the boundary.
  (*hub)->advance_to(20000);
  auto rows2 = parse_csv(dir.path() / "connectivity-20000.csv");
  CHECK(rows2[kA] == 0);
  CHECK(rows2[kB] == 10000);

  // The archived log of cycle 1 exists and is self-contained.
  CHECK(std::filesystem::exists(dir.path() / "events-10000.jsonl"));
  auto replayed = replay_log_file(dir.path() / "events-10000.jsonl");
  REQUIRE(replayed.ok());
  CHECK(replayed->gatewayEntries == 3);
}

TEST_CASE("a quiet hub still closes every elapsed cycle on advance") {
  TmpDir dir("hub");
  SimulatedClock clock(0);
  auto hub = Hub::open(config_for(dir, 1000), clock, nullptr);
  REQUIRE(hub.ok());
  clock.set_ms(5500);
  CHECK((*hub)->tick() == 500);  // 5 boundaries crossed, next one at 6000
  CHECK((*hub)->counters().cyclesCompleted == 5);
  for (int64_t end = 1000; end <= 5000; end += 1000) {
    CHECK(std::filesystem::exists(dir.path() / ("connectivity-" + std::to_string(end) + ".csv")));
  }
}

TEST_CASE("healthz reports the service counters") {
  TmpDir dir("hub");
  SimulatedClock clock(0);
  auto hub = Hub::open(config_for(dir, 10000), clock, nullptr);
  REQUIRE(hub.ok());
  clock.set_ms(100);
  (*hub)->handle_gateway_message(frame_update(kA, NodeStatus::connected));
  (*hub)->handle_gateway_message("junk");
  (*hub)->advance_to(10000);

  auto health = nlohmann::json::parse((*hub)->health_json());
  CHECK(health["ok"] == true);
  CHECK(health["events_total"] == 1);
  CHECK(health["rejected_messages"] == 1);
  CHECK(health["last_cycle_end"] == 10000);
  CHECK(health["mode"] == "aggregated");
  CHECK(health["nodes"] == 1);
}

TEST_CASE("restart mid-cycle recovers every acked event") {
  TmpDir dir("hub");
  SimulatedClock clock(0);
  SessionTable before;
  {
    auto hub = Hub::open(config_for(dir, 100000), clock, nullptr);
    REQUIRE(hub.ok());
    clock.set_ms(1000);
    REQUIRE((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::connected)) == R"({"ok":true})");
    clock.set_ms(2500);
    REQUIRE((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::disconnected)) == R"({"ok":true})");
    REQUIRE((*hub)->handle_gateway_message(frame_update(kB, NodeStatus::connected, "gw-2")) == R"({"ok":true})");
    REQUIRE((*hub)->ingest_reading(reading(kA, 38.5, 2500)).accepted);
    REQUIRE((*hub)->ingest_reading(reading(kA, 38.6, 2501)).accepted);
    before = (*hub)->table_copy();
  }  // hub destroyed without closing the cycle: the log is all that's left

  auto hub = Hub::open(config_for(dir, 100000), clock, nullptr);
  REQUIRE(hub.ok());
  std::string why;
  CHECK_MESSAGE(testsupport::materially_equal(before, (*hub)->table_copy(), &why), why);

  // The open triage run also survived: one more breach raises the flag with
  // the pre-crash values in its window.
  clock.set_ms(2502);
  CHECK((*hub)->ingest_reading(reading(kA, 38.7, 2502)).accepted);
  auto flags = (*hub)->pending_flags();
  REQUIRE(flags.size() == 1);
  CHECK(flags[0].triggeringValues[0].first == 2500);

  // And the cycle still closes with the right totals.
  (*hub)->advance_to(100000);
  auto rows = parse_csv(dir.path() / "connectivity-100000.csv");
  CHECK(rows[kA] == 1500);
  CHECK(rows[kB] == 97500);
}

TEST_CASE("restart after a torn final log line drops only the unacked tail") {
  TmpDir dir("hub");
  SimulatedClock clock(0);
  {
    auto hub = Hub::open(config_for(dir, 100000), clock, nullptr);
    REQUIRE(hub.ok());
    clock.set_ms(1000);
    REQUIRE((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::connected)) == R"({"ok":true})");
  }
  auto current = EventLog::current_path(dir.path());
  std::string intact = read_file(current);
  testsupport::write_file(current, intact + R"({"seq":2,"ts":2000,"event":"No)");

  clock.set_ms(3000);
  auto hub = Hub::open(config_for(dir, 100000), clock, nullptr);
  REQUIRE(hub.ok());
  CHECK((*hub)->table_copy().find(kA)->status == NodeStatus::connected);
  // The torn bytes are gone: appending resumes on a clean file.
  REQUIRE((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::disconnected)) == R"({"ok":true})");
  auto replayed = replay_log_file(current);
  REQUIRE(replayed.ok());
  CHECK(replayed->lastSeq == 2);
  CHECK_FALSE(replayed->tornTail);
  CHECK((*hub)->table_copy().find(kA)->accumulatedMs == 2000);
}

TEST_CASE("interior log corruption refuses to open") {
  TmpDir dir("hub");
  SimulatedClock clock(0);
  {
    auto hub = Hub::open(config_for(dir, 100000), clock, nullptr);
    REQUIRE(hub.ok());
    clock.set_ms(1000);
    (*hub)->handle_gateway_message(frame_update(kA, NodeStatus::connected));
  }
  auto current = EventLog::current_path(dir.path());
  std::string intact = read_file(current);
  testsupport::write_file(current, "garbage\n" + intact);

  auto hub = Hub::open(config_for(dir, 100000), clock, nullptr);
  REQUIRE_FALSE(hub.ok());
  CHECK(hub.error().message.find("line 1") != std::string::npos);
}

TEST_CASE("log write failure degrades the hub instead of acking blind") {
  TmpDir dir("hub");
  SimulatedClock clock(0);
  // Bootstrap consumes the first write; two event lines then succeed.
  auto hub = Hub::adopt(config_for(dir, 1000000), clock, nullptr,
                        FailingLog::create_at(dir.path(), 0, 3));
  REQUIRE(hub.ok());

  clock.set_ms(100);
  CHECK((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::connected)) == R"({"ok":true})");
  CHECK((*hub)->ingest_reading(reading(kA, 36.8, 100)).accepted);

  // Third write fails: the event must NOT be acked, and the failed log turns
  // the hub degraded on the spot.
  auto ack = (*hub)->handle_gateway_message(frame_update(kA, NodeStatus::disconnected));
  CHECK(ack == R"({"ok":false,"error":"degraded"})");
  CHECK((*hub)->counters().degraded);
  // The un-logged event did not touch the table either.
  CHECK((*hub)->table_copy().find(kA)->status == NodeStatus::connected);

  // Degraded hub sheds all traffic with a dedicated code.
  CHECK((*hub)->handle_gateway_message(frame_update(kB, NodeStatus::connected)) ==
        R"({"ok":false,"error":"degraded"})");
  auto r = (*hub)->ingest_reading(reading(kA, 36.8, 200));
  CHECK_FALSE(r.accepted);
  CHECK(r.degraded);
  auto health = nlohmann::json::parse((*hub)->health_json());
  CHECK(health["ok"] == false);
  CHECK(health["degraded"] == true);
}

TEST_CASE("aggregated mode enqueues records and flags with deterministic ids") {
  TmpDir dir("hub");
  TmpDir qdir("queue");
  SimulatedClock clock(0);
  auto queue = SyncQueue::open(qdir.path());
  REQUIRE(queue.ok());
  auto hub = Hub::open(config_for(dir, 10000), clock, queue->get());
  REQUIRE(hub.ok());

  clock.set_ms(100);
  REQUIRE((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::connected)) == R"({"ok":true})");
  for (int64_t ts : {200, 300, 400}) {
    clock.set_ms(ts);
    REQUIRE((*hub)->ingest_reading(reading(kA, 38.5, ts)).accepted);
  }
  (*hub)->advance_to(10000);

  auto items = (*queue)->pending();
  REQUIRE(items.size() == 2);
  CHECK(items[0].batchId == batch_id("hub-1", 10000, 0));
  CHECK(items[1].batchId == batch_id("hub-1", 10000, 1));

  auto records = decode_batch(read_file(items[0].path));
  REQUIRE(records.ok());
  CHECK(records->kind == BatchKind::connectivity_records);
  auto rec = decode_record_item(nlohmann::json::parse(records->payloadJson)[0].dump());
  REQUIRE(rec.ok());
  CHECK(rec->nodeId == kA);
  CHECK(rec->connectionTimeMs == 9900);
  CHECK(rec->cycleStart == 0);
  CHECK(rec->cycleEnd == 10000);

  auto flags = decode_batch(read_file(items[1].path));
  REQUIRE(flags.ok());
  CHECK(flags->kind == BatchKind::triage_flags);
  auto flag = decode_flag_item(nlohmann::json::parse(flags->payloadJson)[0].dump());
  REQUIRE(flag.ok());
  CHECK(flag->rule == TriageRule::fever);

  // Flags were handed to the batch; they are no longer pending on the hub.
  CHECK((*hub)->pending_flags().empty());

  // A quiet cycle (no nodes would be wrong here — kA is still known, so a
  // records batch goes out; but no flags batch repeats).
  (*hub)->advance_to(20000);
  auto items2 = (*queue)->pending();
  REQUIRE(items2.size() == 3);
  CHECK(items2[2].batchId == batch_id("hub-1", 20000, 0));
}

TEST_CASE("raw mode enqueues each gateway event as its own batch") {
  TmpDir dir("hub");
  TmpDir qdir("queue");
  SimulatedClock clock(0);
  auto queue = SyncQueue::open(qdir.path());
  REQUIRE(queue.ok());
  auto hub = Hub::open(config_for(dir, 10000, OffloadMode::raw), clock, queue->get());
  REQUIRE(hub.ok());

  clock.set_ms(100);
  REQUIRE((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::connected)) == R"({"ok":true})");
  clock.set_ms(200);
  REQUIRE((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::disconnected)) == R"({"ok":true})");

  auto items = (*queue)->pending();
  REQUIRE(items.size() == 2);
  auto b = decode_batch(read_file(items[0].path));
  REQUIRE(b.ok());
  CHECK(b->kind == BatchKind::raw_events);
  auto payload = nlohmann::json::parse(b->payloadJson);
  REQUIRE(payload.size() == 1);
  CHECK(payload[0]["seq"] == 1);
  CHECK(payload[0]["ts"] == 100);
  CHECK(payload[0]["event"] == "NodesUpdate");

  // Raw mode still writes the local CSV at the boundary, but enqueues no
  // aggregate batches.
  (*hub)->advance_to(10000);
  CHECK(std::filesystem::exists(dir.path() / "connectivity-10000.csv"));
  CHECK((*queue)->pending_count() == 2);
}

TEST_CASE("crash before the cycle enqueue converges by deterministic ids") {
  // The cycle's batches carry ids derived from (hub, cycleEnd, ordinal): if
  // the hub crashes after enqueueing but before rotating the log, the rerun
  // of that cycle re-enqueues the same ids and the queue refuses the copies.
  TmpDir dir("hub");
  TmpDir qdir("queue");
  SimulatedClock clock(0);
  auto queue = SyncQueue::open(qdir.path());
  REQUIRE(queue.ok());

  SyncBatch prior;  // what the first run would have enqueued
  prior.batchId = batch_id("hub-1", 10000, 0);
  prior.kind = BatchKind::connectivity_records;
  prior.createdAt = 10000;
  prior.payloadJson = "[" + encode_record_item({kA, 9900, 0, 10000}) + "]";
  REQUIRE((*queue)->enqueue(prior).ok());

  auto hub = Hub::open(config_for(dir, 10000), clock, queue->get());
  REQUIRE(hub.ok());
  clock.set_ms(100);
  REQUIRE((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::connected)) == R"({"ok":true})");
  (*hub)->advance_to(10000);

  // No duplicate: still exactly one records batch for cycle 10000.
  CHECK((*queue)->pending_count() == 1);
}

TEST_CASE("raw-mode restart re-enqueues replayed frames idempotently") {
  TmpDir dir("hub");
  TmpDir qdir("queue");
  SimulatedClock clock(0);
  {
    auto queue = SyncQueue::open(qdir.path());
    REQUIRE(queue.ok());
    auto hub = Hub::open(config_for(dir, 1000000, OffloadMode::raw), clock, queue->get());
    REQUIRE(hub.ok());
    clock.set_ms(100);
    REQUIRE((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::connected)) == R"({"ok":true})");
    clock.set_ms(200);
    REQUIRE((*hub)->handle_gateway_message(frame_update(kB, NodeStatus::connected, "gw-2")) == R"({"ok":true})");
  }
  // Both processes restart; the queue remembers ids, the log replays frames.
  auto queue = SyncQueue::open(qdir.path());
  REQUIRE(queue.ok());
  CHECK((*queue)->pending_count() == 2);
  auto hub = Hub::open(config_for(dir, 1000000, OffloadMode::raw), clock, queue->get());
  REQUIRE(hub.ok());
  CHECK((*queue)->pending_count() == 2);  // replay re-offered both; queue deduped

  // New traffic after the restart still enqueues as usual.
  clock.set_ms(300);
  REQUIRE((*hub)->handle_gateway_message(frame_update(kA, NodeStatus::disconnected)) == R"({"ok":true})");
  CHECK((*queue)->pending_count() == 3);
}

TEST_CASE("interval changes take effect for subsequent cycles") {
  TmpDir dir("hub");
  SimulatedClock clock(0);
  {
    auto hub = Hub::open(config_for(dir, 10000), clock, nullptr);
    REQUIRE(hub.ok());
    (*hub)->advance_to(10000);
    CHECK((*hub)->next_boundary() == 20000);
  }
  // Reopen with a shorter interval: the next boundary follows the new config.
  clock.set_ms(10000);
  auto hub = Hub::open(config_for(dir, 2000), clock, nullptr);
  REQUIRE(hub.ok());
  CHECK((*hub)->next_boundary() - (*hub)->cycle_start() == 2000);
}
