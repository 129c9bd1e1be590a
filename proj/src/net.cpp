#include "edgehub/net.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <map>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace edgehub {

using ojson = nlohmann::ordered_json;

Result<ListenAddr> parse_addr(std::string_view s) {
  size_t colon = s.rfind(':');
  if (colon == std::string_view::npos || colon + 1 >= s.size()) {
    return make_error(Errc::validation, "address must be host:port");
  }
  ListenAddr addr;
  addr.host = std::string(s.substr(0, colon));
  if (addr.host.empty()) addr.host = "127.0.0.1";
  try {
    addr.port = std::stoi(std::string(s.substr(colon + 1)));
  } catch (...) {
    return make_error(Errc::validation, "bad port in address");
  }
  if (addr.port < 0 || addr.port > 65535) {
    return make_error(Errc::validation, "port out of range");
  }
  return addr;
}

// ---------------------------------------------------------------------------
// Gateway stream server (TCP, newline-delimited JSON)
// ---------------------------------------------------------------------------

GatewayServer::GatewayServer(ListenAddr addr, Handler handler)
    : addr_(std::move(addr)), handler_(std::move(handler)) {}

GatewayServer::~GatewayServer() { stop(); }

Result<void> GatewayServer::start() {
  listenFd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listenFd_ < 0) return make_error(Errc::io, "socket() failed");
  int one = 1;
  ::setsockopt(listenFd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(static_cast<uint16_t>(addr_.port));
  if (::inet_pton(AF_INET, addr_.host.c_str(), &sa.sin_addr) != 1) {
    return make_error(Errc::validation, "bad listen host " + addr_.host);
  }
  if (::bind(listenFd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0) {
    return make_error(Errc::io, "bind failed: " + std::string(strerror(errno)));
  }
  if (::listen(listenFd_, 64) != 0) {
    return make_error(Errc::io, "listen failed: " + std::string(strerror(errno)));
  }
  socklen_t len = sizeof(sa);
  ::getsockname(listenFd_, reinterpret_cast<sockaddr*>(&sa), &len);
  port_ = ntohs(sa.sin_port);

  acceptThread_ = std::thread([this] { accept_loop(); });
  return {};
}

void GatewayServer::accept_loop() {
  while (!stopping_) {
    int fd = ::accept(listenFd_, nullptr, nullptr);
    if (fd < 0) {
      if (stopping_) break;
      continue;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lk(mu_);
    connFds_.push_back(fd);
    connThreads_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void GatewayServer::serve_connection(int fd) {
  std::string buffer;
  char chunk[4096];
  while (!stopping_) {
    ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<size_t>(n));
    size_t nl;
    while ((nl = buffer.find('\n')) != std::string::npos) {
      std::string frame = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      if (frame.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::string ack = handler_(frame);
      ack += '\n';
      if (::send(fd, ack.data(), ack.size(), MSG_NOSIGNAL) < 0) return;
    }
  }
}

void GatewayServer::stop() {
  if (stopping_.exchange(true)) return;
  if (listenFd_ >= 0) {
    ::shutdown(listenFd_, SHUT_RDWR);
    ::close(listenFd_);
    listenFd_ = -1;
  }
  if (acceptThread_.joinable()) acceptThread_.join();
  std::lock_guard lk(mu_);
  for (int fd : connFds_) {
    ::shutdown(fd, SHUT_RDWR);
    ::close(fd);
  }
  for (auto& t : connThreads_) {
    if (t.joinable()) t.join();
  }
  connFds_.clear();
  connThreads_.clear();
}

// ---------------------------------------------------------------------------
// Hub REST server
// ---------------------------------------------------------------------------

struct HubRestServer::Impl {
  httplib::Server server;
};

HubRestServer::HubRestServer(ListenAddr addr, Hub& hub, SimulatedClock* simClock)
    : impl_(std::make_unique<Impl>()), addr_(std::move(addr)), hub_(hub), simClock_(simClock) {}

HubRestServer::~HubRestServer() { stop(); }

Result<void> HubRestServer::start() {
  auto& svr = impl_->server;

  svr.Post("/api/v1/telemetry", [this](const httplib::Request& req, httplib::Response& res) {
    auto reading = decode_reading(req.body);
    if (!reading) {
      res.status = 400;
      res.set_content(std::string(R"({"ok":false,"error":")") + errc_name(reading.error().code) +
                          "\"}",
                      "application/json");
      return;
    }
    auto ack = hub_.ingest_reading(*reading);
    if (ack.accepted) {
      res.status = 202;
      res.set_content(R"({"ok":true})", "application/json");
      return;
    }
    if (ack.degraded) {
      res.status = 503;
      res.set_content(R"({"ok":false,"error":"degraded"})", "application/json");
      return;
    }
    ojson body{{"ok", false}, {"error", "validation"}, {"violations", ack.violations}};
    res.status = 422;
    res.set_content(body.dump(), "application/json");
  });

  svr.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    res.status = 200;
    res.set_content(hub_.health_json(), "application/json");
  });

  if (simClock_) {
    svr.Post("/api/v1/clock", [this](const httplib::Request& req, httplib::Response& res) {
      ojson j = ojson::parse(req.body, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("nowMs") ||
          !j["nowMs"].is_number_integer()) {
        res.status = 400;
        res.set_content(R"({"ok":false,"error":"malformed"})", "application/json");
        return;
      }
      int64_t now = j["nowMs"].get<int64_t>();
      simClock_->set_ms(now);
      hub_.advance_to(now);
      res.status = 200;
      res.set_content(R"({"ok":true})", "application/json");
    });
  }

  int port = addr_.port == 0 ? svr.bind_to_any_port(addr_.host) : addr_.port;
  if (addr_.port != 0 && !svr.bind_to_port(addr_.host, addr_.port)) {
    return make_error(Errc::io, "cannot bind REST port " + std::to_string(addr_.port));
  }
  if (port < 0) return make_error(Errc::io, "cannot bind REST port");
  port_ = port;

  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return {};
}

void HubRestServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

// ---------------------------------------------------------------------------
// Cloud stub server
// ---------------------------------------------------------------------------

struct CloudServer::Impl {
  httplib::Server server;
};

CloudServer::CloudServer(ListenAddr addr, CloudStore& store)
    : impl_(std::make_unique<Impl>()), addr_(std::move(addr)), store_(store) {}

CloudServer::~CloudServer() { stop(); }

Result<void> CloudServer::start() {
  auto& svr = impl_->server;

  svr.Post("/api/v1/batches", [this](const httplib::Request& req, httplib::Response& res) {
    auto result = store_.receive(req.body);
    res.status = result.status;
    res.set_content(result.ackBody, "application/json");
  });

  svr.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
    ojson body{{"ok", true}, {"batches", store_.batches_persisted()}};
    res.status = 200;
    res.set_content(body.dump(), "application/json");
  });

  int port = addr_.port == 0 ? svr.bind_to_any_port(addr_.host) : addr_.port;
  if (addr_.port != 0 && !svr.bind_to_port(addr_.host, addr_.port)) {
    return make_error(Errc::io, "cannot bind cloud port " + std::to_string(addr_.port));
  }
  if (port < 0) return make_error(Errc::io, "cannot bind cloud port");
  port_ = port;

  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return {};
}

void CloudServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

// ---------------------------------------------------------------------------
// Uplink client
// ---------------------------------------------------------------------------

HttpUplink::HttpUplink(std::string baseUrl) : baseUrl_(std::move(baseUrl)) {}

Result<CloudAck> HttpUplink::send(const std::string& batchBody) {
  httplib::Client client(baseUrl_);
  client.set_connection_timeout(2, 0);
  client.set_read_timeout(5, 0);

  auto res = client.Post("/api/v1/batches", batchBody, "application/json");
  if (!res) return make_error(Errc::unavailable, "uplink unreachable: " + to_string(res.error()));
  if (res->status >= 500) {
    return make_error(Errc::unavailable, "cloud error " + std::to_string(res->status));
  }

  CloudAck ack;
  ack.status = res->status;
  if (res->status >= 400) {
    ack.ok = false;
    ack.reason = res->body;
    return ack;
  }
  ojson j = ojson::parse(res->body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("ok")) {
    return make_error(Errc::unavailable, "unparseable cloud ack");
  }
  ack.ok = j["ok"].get<bool>();
  ack.duplicate = j.value("duplicate", false);
  if (!ack.ok) ack.reason = j.value("error", "");
  return ack;
}

// ---------------------------------------------------------------------------
// Socket-level timeline driver
// ---------------------------------------------------------------------------

namespace {

class GatewayConnection {
public:
  Result<void> connect(const std::string& host, int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) return make_error(Errc::io, "socket() failed");
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(static_cast<uint16_t>(port));
    if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) != 1) {
      return make_error(Errc::validation, "bad gateway host");
    }
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0) {
      return make_error(Errc::unavailable, "cannot connect: " + std::string(strerror(errno)));
    }
    return {};
  }

  Result<std::string> send_frame(const std::string& frame) {
    std::string wire = frame + "\n";
    if (::send(fd_, wire.data(), wire.size(), MSG_NOSIGNAL) < 0) {
      return make_error(Errc::unavailable, "send failed");
    }
    // Lock-step: wait for this frame's ack line before the next send.
    while (true) {
      size_t nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string ack = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return ack;
      }
      char chunk[1024];
      ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n <= 0) return make_error(Errc::unavailable, "connection closed");
      buffer_.append(chunk, static_cast<size_t>(n));
    }
  }

  ~GatewayConnection() {
    if (fd_ >= 0) ::close(fd_);
  }

private:
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace

Result<DriveReport> drive_network(const Timeline& timeline, const std::string& gatewayHost,
                                  int gatewayPort, const std::string& restBaseUrl,
                                  bool simulatedClock) {
  DriveReport report;
  std::map<std::string, std::unique_ptr<GatewayConnection>> connections;
  httplib::Client rest(restBaseUrl);
  rest.set_connection_timeout(2, 0);
  rest.set_read_timeout(5, 0);

  auto set_clock = [&](int64_t ts) -> Result<void> {
    if (!simulatedClock) return {};
    auto res = rest.Post("/api/v1/clock", "{\"nowMs\":" + std::to_string(ts) + "}",
                         "application/json");
    if (!res || res->status != 200) return make_error(Errc::unavailable, "clock POST failed");
    return {};
  };

  int64_t prevTs = 0;
  for (const auto& ev : timeline.events) {
    if (!simulatedClock && ev.ts > prevTs) {
      std::this_thread::sleep_for(std::chrono::milliseconds(ev.ts - prevTs));
    }
    prevTs = ev.ts;
    if (auto r = set_clock(ev.ts); !r) return r.error();

    if (ev.type == SimEventType::reading) {
      ++report.readingsSent;
      auto res = rest.Post("/api/v1/telemetry", encode_reading(ev.reading), "application/json");
      if (!res) return make_error(Errc::unavailable, "telemetry POST failed");
      ++(res->status == 202 ? report.readingsAccepted : report.readingsRejected);
      continue;
    }

    auto& conn = connections[ev.mdeviceId];
    if (!conn) {
      conn = std::make_unique<GatewayConnection>();
      if (auto r = conn->connect(gatewayHost, gatewayPort); !r) return r.error();
    }

    GatewayEvent wire;
    if (ev.type == SimEventType::snapshot) {
      NodesSnapshot snap;
      snap.mdevices.push_back({ev.mdeviceId, ev.snapshotNodes});
      wire = std::move(snap);
    } else {
      NodeUpdate upd;
      upd.mdeviceId = ev.mdeviceId;
      upd.node = {ev.nodeId, ev.type == SimEventType::connect ? NodeStatus::connected
                                                              : NodeStatus::disconnected};
      wire = std::move(upd);
    }
    auto frame = encode_event(wire);
    if (!frame) return frame.error();
    ++report.framesSent;
    auto ack = conn->send_frame(*frame);
    if (!ack) return ack.error();
    ++(ack->starts_with(R"({"ok":true)") ? report.framesAcked : report.framesRejected);
  }

  if (!simulatedClock && timeline.params.durationMs > prevTs) {
    std::this_thread::sleep_for(std::chrono::milliseconds(timeline.params.durationMs - prevTs));
  }
  if (auto r = set_clock(timeline.params.durationMs); !r) return r.error();
  return report;
}

}  // namespace edgehub
