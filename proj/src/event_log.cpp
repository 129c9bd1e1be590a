#include "edgehub/event_log.hpp"

#include <cctype>
#include <map>
#include <system_error>

#include <json.hpp>

namespace edgehub {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string corruption(size_t line, const std::string& why) {
  return "log corruption at line " + std::to_string(line) + ": " + why;
}

ojson run_to_json(const TriageRunState& run) {
  ojson values = ojson::array();
  for (const auto& [ts, v] : run.values) values.push_back(ojson::array({ts, v}));
  return ojson{{"deviceId", run.deviceId},
               {"kind", to_string(run.kind)},
               {"count", run.count},
               {"flagged", run.flagged},
               {"values", std::move(values)}};
}

Result<TriageRunState> run_from_json(const ojson& j) {
  if (!j.is_object() || !j.contains("deviceId") || !j["deviceId"].is_string() ||
      !j.contains("kind") || !j["kind"].is_string() || !j.contains("count") ||
      !j["count"].is_number_integer() || !j.contains("flagged") || !j["flagged"].is_boolean() ||
      !j.contains("values") || !j["values"].is_array()) {
    return make_error(Errc::malformed, "bad flag run entry");
  }
  TriageRunState run;
  run.deviceId = j["deviceId"].get<std::string>();
  auto kind = parse_vital_kind(j["kind"].get<std::string>());
  if (!kind) return make_error(Errc::malformed, "bad flag run kind");
  run.kind = *kind;
  run.count = j["count"].get<int>();
  run.flagged = j["flagged"].get<bool>();
  for (const auto& pair : j["values"]) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
        !pair[1].is_number()) {
      return make_error(Errc::malformed, "bad flag run value");
    }
    run.values.emplace_back(pair[0].get<int64_t>(), pair[1].get<double>());
  }
  return run;
}

}  // namespace

Result<std::string> encode_table_snapshot(const SessionTable& table) {
  // Group records by their owning gateway so the bootstrap reuses the exact
  // wire schema a gateway would send.
  std::map<std::string, MDeviceNodes> byGateway;
  for (const auto& [id, rec] : table) {
    auto& group = byGateway[rec.mdeviceId];
    group.mdeviceId = rec.mdeviceId;
    group.nodes.push_back({rec.nodeId, rec.status});
  }
  NodesSnapshot snap;
  for (auto& [_, group] : byGateway) snap.mdevices.push_back(std::move(group));
  return encode_event(GatewayEvent{std::move(snap)});
}

// ---------------------------------------------------------------------------
// Writer
// ---------------------------------------------------------------------------

EventLog::EventLog(fs::path dir) : dir_(std::move(dir)) {}

fs::path EventLog::current_path(const fs::path& dir) { return dir / kCurrentName; }

bool EventLog::exists(const fs::path& dir) {
  std::error_code ec;
  return fs::exists(current_path(dir), ec);
}

Result<std::unique_ptr<EventLog>> EventLog::create(const fs::path& dir, int64_t now,
                                                   const SessionTable& table,
                                                   std::span<const TriageRunState> runs) {
  std::unique_ptr<EventLog> log(new EventLog(dir));
  if (auto r = log->init_fresh(now, table, runs); !r) return r.error();
  return log;
}

Result<std::unique_ptr<EventLog>> EventLog::resume(const fs::path& dir, int64_t nextSeq,
                                                   int64_t lastTs) {
  std::unique_ptr<EventLog> log(new EventLog(dir));
  if (auto r = log->init_resume(nextSeq, lastTs); !r) return r.error();
  return log;
}

Result<void> EventLog::init_fresh(int64_t now, const SessionTable& table,
                                  std::span<const TriageRunState> runs) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) return make_error(Errc::io, "cannot create log dir: " + ec.message());
  if (auto r = open_stream(std::ios::out | std::ios::trunc); !r) return r;
  return append_bootstrap(now, table, runs);
}

Result<void> EventLog::init_resume(int64_t nextSeq, int64_t lastTs) {
  if (auto r = open_stream(std::ios::out | std::ios::app); !r) return r;
  nextSeq_ = nextSeq;
  lastTs_ = lastTs;
  return {};
}

Result<void> EventLog::open_stream(std::ios::openmode mode) {
  out_.close();
  out_.clear();
  out_.open(current_path(dir_), mode);
  if (!out_) return make_error(Errc::io, "cannot open " + current_path(dir_).string());
  return {};
}

Result<void> EventLog::write_line(const std::string& line) {
  out_ << line << '\n';
  out_.flush();  // the entry must be on its way to disk before anyone is acked
  if (!out_) return make_error(Errc::io, "log write failed");
  return {};
}

Result<void> EventLog::append_line(int64_t ts, const std::string& line) {
  if (ts < lastTs_) {
    return make_error(Errc::ordering, "timestamp went backwards: " + std::to_string(ts) +
                                          " after " + std::to_string(lastTs_));
  }
  if (auto r = write_line(line); !r) return r;
  ++nextSeq_;
  lastTs_ = ts;
  return {};
}

Result<void> EventLog::append_bootstrap(int64_t ts, const SessionTable& table,
                                        std::span<const TriageRunState> runs) {
  auto snapshot = encode_table_snapshot(table);
  if (!snapshot) return snapshot.error();
  ojson flagRuns = ojson::array();
  for (const auto& run : runs) flagRuns.push_back(run_to_json(run));
  std::string line = "{\"seq\":" + std::to_string(nextSeq_) + ",\"ts\":" + std::to_string(ts) +
                     ",\"bootstrap\":{\"snapshot\":" + *snapshot +
                     ",\"flagRuns\":" + flagRuns.dump() + "}}";
  return append_line(ts, line);
}

Result<std::string> EventLog::append_gateway(int64_t ts, std::string_view frame) {
  // Splice our seq/ts prefix into the frame as received, so the log keeps the
  // gateway's own bytes. The frame must be a single-line JSON object.
  size_t open = frame.find_first_not_of(" \t\r\n");
  if (open == std::string_view::npos || frame[open] != '{') {
    return make_error(Errc::encoding, "frame is not a JSON object");
  }
  size_t body = frame.find_first_not_of(" \t\r\n", open + 1);
  if (body == std::string_view::npos || frame[body] == '}') {
    return make_error(Errc::encoding, "frame is empty");
  }
  if (frame.find('\n') != std::string_view::npos || frame.find('\r') != std::string_view::npos) {
    return make_error(Errc::encoding, "frame spans multiple lines");
  }
  std::string line = "{\"seq\":" + std::to_string(nextSeq_) + ",\"ts\":" + std::to_string(ts) +
                     "," + std::string(frame.substr(body));
  if (auto r = append_line(ts, line); !r) return r.error();
  return line;
}

Result<void> EventLog::append_reading(int64_t ts, const TelemetryReading& r) {
  std::string line = "{\"seq\":" + std::to_string(nextSeq_) + ",\"ts\":" + std::to_string(ts) +
                     ",\"reading\":" + encode_reading(r) + "}";
  return append_line(ts, line);
}

Result<fs::path> EventLog::rotate(int64_t cycleEnd, const SessionTable& table,
                                  std::span<const TriageRunState> runs) {
  out_.close();
  fs::path archived = dir_ / ("events-" + std::to_string(cycleEnd) + ".jsonl");
  std::error_code ec;
  fs::rename(current_path(dir_), archived, ec);
  if (ec) return make_error(Errc::io, "log rotation failed: " + ec.message());
  if (auto r = open_stream(std::ios::out | std::ios::trunc); !r) return r.error();
  if (auto r = append_bootstrap(cycleEnd, table, runs); !r) return r.error();
  return archived;
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

Result<ReplayedState> replay_log_file(const fs::path& file, const TriageThresholds& thresholds) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return make_error(Errc::io, "cannot open " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  if (in.bad()) return make_error(Errc::io, "read error in " + file.string());
  const std::string content = buf.str();

  ReplayedState state;
  state.tracker = FlagTracker(thresholds);
  size_t lineNo = 0;
  bool sawBootstrap = false;

  size_t pos = 0;
  while (pos < content.size()) {
    size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) {
      // Unterminated tail: the append never finished, so it was never acked.
      state.tornTail = true;
      break;
    }
    std::string_view line(content.data() + pos, nl - pos);
    size_t lineStart = pos;
    pos = nl + 1;
    ++lineNo;
    bool isLastLine = content.find_first_not_of(" \t\r\n", pos) == std::string::npos;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
      state.cleanBytes = pos;
      continue;
    }

    ojson j = ojson::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("seq") ||
        !j["seq"].is_number_integer() || !j.contains("ts") || !j["ts"].is_number_integer()) {
      if (isLastLine) {  // torn by a crash mid-append; drop, nothing acked it
        state.tornTail = true;
        state.cleanBytes = lineStart;
        return state.lastSeq == -1 ? Result<ReplayedState>(make_error(
                                         Errc::malformed, "empty log " + file.string()))
                                   : Result<ReplayedState>(std::move(state));
      }
      return make_error(Errc::malformed, corruption(lineNo, "not a complete log entry"));
    }
    int64_t seq = j["seq"].get<int64_t>();
    int64_t ts = j["ts"].get<int64_t>();
    if (seq <= state.lastSeq) {
      return make_error(Errc::ordering, corruption(lineNo, "sequence went backwards"));
    }
    if (state.lastTs != -1 && ts < state.lastTs) {
      return make_error(Errc::ordering, corruption(lineNo, "timestamp went backwards"));
    }
    if (state.cycleStart == -1) state.cycleStart = ts;

    if (j.contains("bootstrap")) {
      if (sawBootstrap) {
        return make_error(Errc::malformed, corruption(lineNo, "duplicate bootstrap"));
      }
      sawBootstrap = true;
      const auto& boot = j["bootstrap"];
      if (!boot.is_object() || !boot.contains("snapshot") || !boot.contains("flagRuns") ||
          !boot["flagRuns"].is_array()) {
        return make_error(Errc::malformed, corruption(lineNo, "bad bootstrap"));
      }
      auto event = decode_event(boot["snapshot"].dump());
      if (!event) return make_error(Errc::malformed, corruption(lineNo, event.error().message));
      const auto* snap = std::get_if<NodesSnapshot>(&*event);
      if (!snap) return make_error(Errc::malformed, corruption(lineNo, "bootstrap is not a snapshot"));
      if (auto r = apply_snapshot(state.table, *snap, ts); !r) {
        return make_error(Errc::malformed, corruption(lineNo, r.error().message));
      }
      std::vector<TriageRunState> runs;
      for (const auto& rj : boot["flagRuns"]) {
        auto run = run_from_json(rj);
        if (!run) return make_error(Errc::malformed, corruption(lineNo, run.error().message));
        runs.push_back(std::move(*run));
      }
      state.tracker.restore_runs(runs);
    } else if (j.contains("event")) {
      ojson frame{{"event", j["event"]}, {"data", j.contains("data") ? j["data"] : ojson()}};
      auto event = decode_event(frame.dump());
      if (!event) return make_error(Errc::malformed, corruption(lineNo, event.error().message));
      Result<void> applied = std::holds_alternative<NodesSnapshot>(*event)
                                 ? apply_snapshot(state.table, std::get<NodesSnapshot>(*event), ts)
                                 : apply_update(state.table, std::get<NodeUpdate>(*event), ts);
      if (!applied) return make_error(Errc::malformed, corruption(lineNo, applied.error().message));
      ++state.gatewayEntries;
      state.rawFrames.push_back({seq, ts, std::string(line)});
    } else if (j.contains("reading")) {
      auto reading = decode_reading(j["reading"].dump());
      if (!reading) return make_error(Errc::malformed, corruption(lineNo, reading.error().message));
      if (auto flag = state.tracker.ingest(*reading)) {
        state.flagsRaised.push_back(std::move(*flag));
      }
    } else {
      return make_error(Errc::malformed, corruption(lineNo, "unknown entry type"));
    }

    state.lastSeq = seq;
    state.lastTs = ts;
    state.cleanBytes = pos;
  }
  if (state.lastSeq == -1) {
    return make_error(Errc::malformed, "empty log " + file.string());
  }
  return state;
}

}  // namespace edgehub
