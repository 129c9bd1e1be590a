// sim — deterministic device-fleet simulator and oracle.
//
//   sim run    --seed 42 --gateways 3 --nodes 10 --duration 60s
//              --target <gateway addr> --rest <hub REST base url>
//              --clock simulated|realtime [churn/vitals knobs]
//   sim oracle --seed 42 ... --cycles 12000,24000 [--out <dir>]
//
// `run` replays the generated timeline against a live hub; `oracle` prints
// (or writes) the ground-truth connectivity CSVs for the same timeline in the
// hub's own format, so the two outputs diff directly.

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "edgehub/aggregate.hpp"
#include "edgehub/net.hpp"
#include "edgehub/simulator.hpp"

namespace {

edgehub::Result<int64_t> parse_duration_ms(const std::string& text) {
  size_t idx = 0;
  long long value = 0;
  try {
    value = std::stoll(text, &idx);
  } catch (...) {
    return edgehub::make_error(edgehub::Errc::validation, "bad duration: " + text);
  }
  std::string unit = text.substr(idx);
  int64_t scale = 1;
  if (unit.empty() || unit == "ms") scale = 1;
  else if (unit == "s") scale = 1000;
  else if (unit == "m") scale = 60'000;
  else if (unit == "h") scale = 3'600'000;
  else if (unit == "d") scale = 86'400'000;
  else return edgehub::make_error(edgehub::Errc::validation, "bad duration unit: " + unit);
  return static_cast<int64_t>(value) * scale;
}

std::vector<edgehub::ConnectivityRecord> records_for_cycle(const edgehub::GroundTruth& truth,
                                                           size_t cycle, int64_t cycleStart,
                                                           int64_t cycleEnd) {
  std::vector<edgehub::ConnectivityRecord> records;
  for (const auto& [nodeId, perCycle] : truth.perCycleMs) {
    records.push_back({nodeId, perCycle[cycle], cycleStart, cycleEnd});
  }
  return records;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic device-fleet simulator"};
  app.require_subcommand(1);

  edgehub::SimParams params;
  std::string duration = "60s";
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", params.seed, "RNG seed")->envname("EDGEHUB_SIM_SEED");
    cmd->add_option("--gateways", params.gateways, "gateway count");
    cmd->add_option("--nodes", params.nodesPerGateway, "nodes per gateway");
    cmd->add_option("--duration", duration, "run length (e.g. 60s)");
    cmd->add_option("--mean-connected", params.meanConnectedMs, "mean connected dwell, ms");
    cmd->add_option("--mean-disconnected", params.meanDisconnectedMs,
                    "mean disconnected dwell, ms");
    cmd->add_option("--reading-period", params.readingPeriodMs, "vitals period, ms");
    cmd->add_option("--fever", params.feverProbability, "fever episode probability per slot");
    cmd->add_flag("--no-disconnect", params.disconnectDisabled,
                  "every node stays connected for the whole run");
  };

  auto* run = app.add_subcommand("run", "drive a live hub with the timeline");
  add_common(run);
  std::string target = "127.0.0.1:7000";
  std::string rest = "http://127.0.0.1:8080";
  std::string clock = "simulated";
  run->add_option("--target", target, "hub gateway address")->envname("EDGEHUB_SIM_TARGET");
  run->add_option("--rest", rest, "hub REST base URL")->envname("EDGEHUB_SIM_REST");
  run->add_option("--clock", clock, "simulated|realtime");

  auto* oracle = app.add_subcommand("oracle", "print ground-truth connectivity CSVs");
  add_common(oracle);
  std::string cyclesArg;
  std::string outDir;
  oracle->add_option("--cycles", cyclesArg, "comma-separated cycle end timestamps, ms")
      ->required();
  oracle->add_option("--out", outDir, "write connectivity-<end>.csv files here instead");

  CLI11_PARSE(app, argc, argv);

  auto durationMs = parse_duration_ms(duration);
  if (!durationMs) {
    std::cerr << "sim: " << durationMs.error().message << "\n";
    return 2;
  }
  params.durationMs = *durationMs;

  auto timeline = edgehub::generate_timeline(params);
  if (!timeline) {
    std::cerr << "sim: " << timeline.error().message << "\n";
    return 2;
  }

  if (run->parsed()) {
    auto addr = edgehub::parse_addr(target);
    if (!addr) {
      std::cerr << "sim: " << addr.error().message << "\n";
      return 2;
    }
    if (clock != "simulated" && clock != "realtime") {
      std::cerr << "sim: clock must be simulated or realtime\n";
      return 2;
    }
    auto report = edgehub::drive_network(*timeline, addr->host, addr->port, rest,
                                         clock == "simulated");
    if (!report) {
      std::cerr << "sim: " << report.error().message << "\n";
      return 1;
    }
    std::cout << "sim: frames " << report->framesSent << " sent / " << report->framesAcked
              << " acked / " << report->framesRejected << " rejected; readings "
              << report->readingsSent << " sent / " << report->readingsAccepted << " accepted / "
              << report->readingsRejected << " rejected\n";
    return report->framesRejected == 0 && report->readingsRejected == 0 ? 0 : 1;
  }

  // oracle
  std::vector<int64_t> cycleEnds;
  std::stringstream ss(cyclesArg);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    try {
      cycleEnds.push_back(std::stoll(token));
    } catch (...) {
      std::cerr << "sim: bad cycle end: " << token << "\n";
      return 2;
    }
  }
  if (cycleEnds.empty()) {
    std::cerr << "sim: --cycles needs at least one boundary\n";
    return 2;
  }

  auto truth = edgehub::ground_truth(*timeline, cycleEnds);
  int64_t cycleStart = 0;
  for (size_t c = 0; c < cycleEnds.size(); ++c) {
    auto records = records_for_cycle(truth, c, cycleStart, cycleEnds[c]);
    if (!outDir.empty()) {
      auto path = std::filesystem::path(outDir) /
                  ("connectivity-" + std::to_string(cycleEnds[c]) + ".csv");
      std::filesystem::create_directories(outDir);
      if (auto w = edgehub::write_csv_file(records, path); !w) {
        std::cerr << "sim: " << w.error().message << "\n";
        return 1;
      }
    } else {
      std::cout << "# cycle " << cycleEnds[c] << "\n";
      std::ostringstream out;
      if (auto w = edgehub::write_csv(records, out); !w) {
        std::cerr << "sim: " << w.error().message << "\n";
        return 1;
      }
      std::cout << out.str();
    }
    cycleStart = cycleEnds[c];
  }
  return 0;
}
