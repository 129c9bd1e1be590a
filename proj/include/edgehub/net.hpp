#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "edgehub/cloud.hpp"
#include "edgehub/hub.hpp"
#include "edgehub/result.hpp"
#include "edgehub/simulator.hpp"
#include "edgehub/sync.hpp"

namespace edgehub {

// ---------------------------------------------------------------------------
// Network front-ends. The gateway stream is plain TCP with one JSON object
// per newline-terminated frame and an ack line per frame; REST endpoints ride
// on an embedded HTTP server. Port 0 binds an ephemeral port (tests).
// ---------------------------------------------------------------------------

struct ListenAddr {
  std::string host = "127.0.0.1";
  int port = 0;
};

Result<ListenAddr> parse_addr(std::string_view s);  // "host:port"

/// Newline-delimited JSON frame listener; each frame is answered with one ack
/// line from the handler.
class GatewayServer {
public:
  using Handler = std::function<std::string(std::string_view frame)>;

  GatewayServer(ListenAddr addr, Handler handler);
  ~GatewayServer();

  Result<void> start();
  void stop();
  int port() const { return port_; }

private:
  void accept_loop();
  void serve_connection(int fd);

  ListenAddr addr_;
  Handler handler_;
  int listenFd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptThread_;
  std::mutex mu_;
  std::vector<int> connFds_;
  std::vector<std::thread> connThreads_;
};

/// REST boundary of the hub: telemetry ingestion, health, and (only when
/// wired to a simulated clock) a clock-advance endpoint so an external driver
/// can share the hub's logical time.
class HubRestServer {
public:
  HubRestServer(ListenAddr addr, Hub& hub, SimulatedClock* simClock = nullptr);
  ~HubRestServer();

  Result<void> start();
  void stop();
  int port() const { return port_; }

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ListenAddr addr_;
  Hub& hub_;
  SimulatedClock* simClock_;
  int port_ = 0;
  std::thread thread_;
};

/// The cloud stub's HTTP face over a CloudStore.
class CloudServer {
public:
  CloudServer(ListenAddr addr, CloudStore& store);
  ~CloudServer();

  Result<void> start();
  void stop();
  int port() const { return port_; }

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  ListenAddr addr_;
  CloudStore& store_;
  int port_ = 0;
  std::thread thread_;
};

/// HTTP transport to POST /api/v1/batches.
class HttpUplink : public Uplink {
public:
  explicit HttpUplink(std::string baseUrl);  // e.g. "http://127.0.0.1:9443"
  Result<CloudAck> send(const std::string& batchBody) override;

private:
  std::string baseUrl_;
};

/// Replays a timeline over real sockets: one gateway connection per
/// mdeviceId, readings via REST. With a simulated clock every event is
/// preceded by a clock POST so the hub's logical time tracks the timeline;
/// otherwise the driver sleeps out the real inter-event gaps.
Result<DriveReport> drive_network(const Timeline& timeline, const std::string& gatewayHost,
                                  int gatewayPort, const std::string& restBaseUrl,
                                  bool simulatedClock = true);

}  // namespace edgehub
