// hub — the edge telemetry service.
//
//   hub run    --listen <addr> --rest <addr> --interval <duration>
//              --log-dir <path> [--cloud-url <url>] [--mode raw|aggregated]
//              [--clock system|simulated] [--hub-id <id>]
//   hub replay --log <file> --csv <out>
//
// Every flag can come from the environment with the EDGEHUB_ prefix
// (e.g. EDGEHUB_INTERVAL=10s).

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "edgehub/aggregate.hpp"
#include "edgehub/clock.hpp"
#include "edgehub/event_log.hpp"
#include "edgehub/hub.hpp"
#include "edgehub/net.hpp"
#include "edgehub/sync.hpp"

namespace {

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop = true; }

/// "500ms", "10s", "5m", "24h", "1d", or a bare millisecond count.
edgehub::Result<int64_t> parse_duration_ms(const std::string& text) {
  if (text.empty()) return edgehub::make_error(edgehub::Errc::validation, "empty duration");
  size_t idx = 0;
  long long value = 0;
  try {
    value = std::stoll(text, &idx);
  } catch (...) {
    return edgehub::make_error(edgehub::Errc::validation, "bad duration: " + text);
  }
  std::string unit = text.substr(idx);
  int64_t scale;
  if (unit.empty() || unit == "ms") {
    scale = 1;
  } else if (unit == "s") {
    scale = 1000;
  } else if (unit == "m") {
    scale = 60'000;
  } else if (unit == "h") {
    scale = 3'600'000;
  } else if (unit == "d") {
    scale = 86'400'000;
  } else {
    return edgehub::make_error(edgehub::Errc::validation, "bad duration unit: " + unit);
  }
  return static_cast<int64_t>(value) * scale;
}

int run_service(const std::string& listen, const std::string& rest, const std::string& interval,
                const std::string& logDir, const std::string& cloudUrl, const std::string& mode,
                const std::string& clockSource, const std::string& hubId) {
  using namespace edgehub;

  auto intervalMs = parse_duration_ms(interval);
  if (!intervalMs) {
    std::cerr << "hub: " << intervalMs.error().message << "\n";
    return 2;
  }
  auto parsedMode = parse_mode(mode);
  if (!parsedMode) {
    std::cerr << "hub: mode must be raw or aggregated\n";
    return 2;
  }
  auto gatewayAddr = parse_addr(listen);
  auto restAddr = parse_addr(rest);
  if (!gatewayAddr || !restAddr) {
    std::cerr << "hub: bad listen address\n";
    return 2;
  }

  SystemClock systemClock;
  SimulatedClock simClock;
  bool simulated = clockSource == "simulated";
  if (!simulated && clockSource != "system") {
    std::cerr << "hub: clock must be system or simulated\n";
    return 2;
  }
  Clock& clock = simulated ? static_cast<Clock&>(simClock) : systemClock;

  std::unique_ptr<SyncQueue> queue;
  if (!cloudUrl.empty()) {
    auto opened = SyncQueue::open(std::filesystem::path(logDir) / "queue");
    if (!opened) {
      std::cerr << "hub: " << opened.error().message << "\n";
      return 1;
    }
    queue = std::move(*opened);
  }

  HubConfig cfg;
  cfg.hubId = hubId;
  cfg.logDir = logDir;
  cfg.intervalMs = *intervalMs;
  cfg.mode = *parsedMode;

  auto hub = Hub::open(cfg, clock, queue.get());
  if (!hub) {
    std::cerr << "hub: " << hub.error().message << "\n";
    return 1;
  }

  std::unique_ptr<HttpUplink> uplink;
  std::unique_ptr<Flusher> flusher;
  if (queue) {
    uplink = std::make_unique<HttpUplink>(cloudUrl);
    flusher = std::make_unique<Flusher>(*queue, *uplink);
    (*hub)->set_flusher(flusher.get());
    flusher->start();
  }

  GatewayServer gateway(*gatewayAddr, [&hub](std::string_view frame) {
    return (*hub)->handle_gateway_message(frame);
  });
  if (auto r = gateway.start(); !r) {
    std::cerr << "hub: " << r.error().message << "\n";
    return 1;
  }
  HubRestServer restServer(*restAddr, **hub, simulated ? &simClock : nullptr);
  if (auto r = restServer.start(); !r) {
    std::cerr << "hub: " << r.error().message << "\n";
    return 1;
  }

  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  std::cout << "hub: gateway on " << gatewayAddr->host << ":" << gateway.port() << ", REST on "
            << restAddr->host << ":" << restServer.port() << ", mode " << to_string(cfg.mode)
            << ", interval " << cfg.intervalMs << " ms, log dir " << logDir << "\n";

  while (!g_stop) {
    int64_t waitMs = 1000;
    if (!simulated) waitMs = std::min<int64_t>(1000, std::max<int64_t>((*hub)->tick(), 10));
    std::this_thread::sleep_for(std::chrono::milliseconds(waitMs));
  }

  std::cout << "hub: shutting down\n";
  gateway.stop();
  restServer.stop();
  if (flusher) flusher->stop();
  return 0;
}

int run_replay(const std::string& logFile, const std::string& csvOut) {
  using namespace edgehub;

  auto replayed = replay_log_file(logFile);
  if (!replayed) {
    std::cerr << "hub: " << replayed.error().message << "\n";
    return 1;
  }

  // Archived logs carry their cycle end in the name; for a current log the
  // last entry's stamp closes the window.
  int64_t cycleEnd = replayed->lastTs;
  std::string name = std::filesystem::path(logFile).filename().string();
  if (name.starts_with("events-") && name.ends_with(".jsonl")) {
    std::string stamp = name.substr(7, name.size() - 7 - 6);
    try {
      cycleEnd = std::stoll(stamp);
    } catch (...) {
      // not a numeric rotation stamp (events-current.jsonl): keep lastTs
    }
  }

  auto records = process_data(replayed->table, replayed->cycleStart, cycleEnd);
  if (!records) {
    std::cerr << "hub: " << records.error().message << "\n";
    return 1;
  }
  if (auto w = write_csv_file(*records, csvOut); !w) {
    std::cerr << "hub: " << w.error().message << "\n";
    return 1;
  }
  std::cout << "hub: replayed " << (replayed->lastSeq + 1) << " entries, " << records->size()
            << " devices, cycle [" << replayed->cycleStart << ", " << cycleEnd << ") -> "
            << csvOut << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edge telemetry hub"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "start the hub service");
  std::string listen = "127.0.0.1:7000";
  std::string rest = "127.0.0.1:8080";
  std::string interval = "24h";
  std::string logDir = "./hub-data";
  std::string cloudUrl;
  std::string mode = "aggregated";
  std::string clockSource = "system";
  std::string hubId = "hub-1";
  run->add_option("--listen", listen, "gateway stream listen address")->envname("EDGEHUB_LISTEN");
  run->add_option("--rest", rest, "REST listen address")->envname("EDGEHUB_REST");
  run->add_option("--interval", interval, "aggregation interval (default 24h)")
      ->envname("EDGEHUB_INTERVAL");
  run->add_option("--log-dir", logDir, "event log directory")->envname("EDGEHUB_LOG_DIR");
  run->add_option("--cloud-url", cloudUrl, "cloud endpoint, empty = no uplink")
      ->envname("EDGEHUB_CLOUD_URL");
  run->add_option("--mode", mode, "offload mode: raw|aggregated")->envname("EDGEHUB_MODE");
  run->add_option("--clock", clockSource, "clock source: system|simulated")
      ->envname("EDGEHUB_CLOCK");
  run->add_option("--hub-id", hubId, "hub identity used in batch ids")->envname("EDGEHUB_HUB_ID");

  auto* replay = app.add_subcommand("replay", "rebuild a cycle CSV from an event log");
  std::string logFile;
  std::string csvOut;
  replay->add_option("--log", logFile, "event log file")->required()->envname("EDGEHUB_LOG");
  replay->add_option("--csv", csvOut, "output CSV path")->required()->envname("EDGEHUB_CSV");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    return run_service(listen, rest, interval, logDir, cloudUrl, mode, clockSource, hubId);
  }
  return run_replay(logFile, csvOut);
}
