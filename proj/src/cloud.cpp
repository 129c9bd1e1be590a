#include "edgehub/cloud.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <system_error>

#include <json.hpp>

#include "edgehub/aggregate.hpp"
#include "edgehub/sync.hpp"

namespace edgehub {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string sanitize(std::string_view id) {
  std::string out;
  for (char c : id.substr(0, 120)) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-')
               ? c
               : '_';
  }
  return out;
}

std::string ack_ok(bool duplicate) {
  return duplicate ? R"({"ok":true,"duplicate":true})" : R"({"ok":true,"duplicate":false})";
}

std::string ack_error(std::string_view code) {
  return std::string(R"({"ok":false,"error":")") + std::string(code) + "\"}";
}

}  // namespace

CloudStore::CloudStore(fs::path dir) : dir_(std::move(dir)) {}

Result<std::unique_ptr<CloudStore>> CloudStore::open(const fs::path& outDir) {
  std::unique_ptr<CloudStore> store(new CloudStore(outDir));
  std::error_code ec;
  for (const char* sub : {"batches", "csv"}) {
    fs::create_directories(outDir / sub, ec);
    if (ec) return make_error(Errc::io, "cannot create output dir: " + ec.message());
  }
  if (auto r = store->scan(); !r) return r.error();
  return store;
}

Result<void> CloudStore::scan() {
  // order.log is the authority on first-sight order; the batches directory
  // backs it up in case a crash landed between the two writes.
  std::ifstream orderIn(dir_ / "order.log");
  std::string line;
  while (std::getline(orderIn, line)) {
    if (line.empty()) continue;
    if (ids_.insert(line).second) order_.push_back(line);
  }
  for (const auto& entry : fs::directory_iterator(dir_ / "batches")) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    std::stringstream buf;
    buf << in.rdbuf();
    auto batch = decode_batch(buf.str());
    if (!batch) {
      return make_error(Errc::io, "corrupt stored batch " + entry.path().string() + ": " +
                                      batch.error().message);
    }
    if (ids_.insert(batch->batchId).second) order_.push_back(batch->batchId);
  }
  return {};
}

CloudStore::ReceiveResult CloudStore::receive(std::string_view body) {
  ReceiveResult res;
  auto batch = decode_batch(body);
  if (!batch) {
    res.status = 400;
    res.reason = batch.error().message;
    res.ackBody = ack_error(errc_name(batch.error().code));
    return res;
  }

  std::lock_guard lk(mu_);
  if (ids_.count(batch->batchId)) {
    res.status = 200;
    res.ok = true;
    res.duplicate = true;
    res.ackBody = ack_ok(true);
    return res;
  }

  // Persist first, commit the id last: a crash in between re-runs this block
  // harmlessly on redelivery.
  fs::path file = dir_ / "batches" / (sanitize(batch->batchId) + ".json");
  {
    std::ofstream out(file, std::ios::trunc);
    out << body;
    out.flush();
    if (!out) {
      res.status = 500;
      res.reason = "cannot persist batch";
      res.ackBody = ack_error("io");
      return res;
    }
  }

  if (batch->kind == BatchKind::connectivity_records) {
    ojson payload = ojson::parse(batch->payloadJson);
    std::vector<ConnectivityRecord> records;
    for (const auto& item : payload) {
      auto rec = decode_record_item(item.dump());
      if (!rec) {  // decode_batch already validated; only a logic bug lands here
        res.status = 400;
        res.reason = rec.error().message;
        res.ackBody = ack_error("malformed");
        return res;
      }
      records.push_back(std::move(*rec));
    }
    fs::path csv = dir_ / "csv" / ("connectivity-" + std::to_string(records.front().cycleEnd) +
                                   ".csv");
    if (auto w = write_csv_file(records, csv); !w) {
      res.status = 500;
      res.reason = w.error().message;
      res.ackBody = ack_error("io");
      return res;
    }
  }

  {
    std::ofstream orderOut(dir_ / "order.log", std::ios::app);
    orderOut << batch->batchId << '\n';
  }
  ids_.insert(batch->batchId);
  order_.push_back(batch->batchId);

  res.status = 200;
  res.ok = true;
  res.ackBody = ack_ok(false);
  return res;
}

size_t CloudStore::batches_persisted() const {
  std::lock_guard lk(mu_);
  return order_.size();
}

std::vector<std::string> CloudStore::first_sight_order() const {
  std::lock_guard lk(mu_);
  return order_;
}

}  // namespace edgehub
