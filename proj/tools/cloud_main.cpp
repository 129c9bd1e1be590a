// cloud — the receiving stub for hub sync batches.
//
//   cloud stub --listen <addr> --out <dir>
//
// Persists each first-seen batch under <out>/batches/<batchId>.json, rebuilds
// connectivity CSVs under <out>/csv/, and answers duplicates idempotently.

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "edgehub/cloud.hpp"
#include "edgehub/net.hpp"

namespace {

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cloud-side batch receiver stub"};
  app.require_subcommand(1);

  auto* stub = app.add_subcommand("stub", "run the receiver");
  std::string listen = "127.0.0.1:9443";
  std::string out = "./cloud-data";
  stub->add_option("--listen", listen, "listen address")->envname("EDGEHUB_CLOUD_LISTEN");
  stub->add_option("--out", out, "output directory")->envname("EDGEHUB_CLOUD_OUT");

  CLI11_PARSE(app, argc, argv);

  auto addr = edgehub::parse_addr(listen);
  if (!addr) {
    std::cerr << "cloud: " << addr.error().message << "\n";
    return 2;
  }
  auto store = edgehub::CloudStore::open(out);
  if (!store) {
    std::cerr << "cloud: " << store.error().message << "\n";
    return 1;
  }

  edgehub::CloudServer server(*addr, **store);
  if (auto r = server.start(); !r) {
    std::cerr << "cloud: " << r.error().message << "\n";
    return 1;
  }

  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  std::cout << "cloud: listening on " << addr->host << ":" << server.port() << ", output " << out
            << " (" << (*store)->batches_persisted() << " batches already stored)\n";

  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));

  std::cout << "cloud: shutting down\n";
  server.stop();
  return 0;
}
