#include "edgehub/sync.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <system_error>

#include <json.hpp>

namespace edgehub {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string_view to_string(BatchKind kind) {
  switch (kind) {
    case BatchKind::raw_events: return "raw_events";
    case BatchKind::connectivity_records: return "connectivity_records";
    case BatchKind::triage_flags: return "triage_flags";
  }
  return "raw_events";
}

std::optional<BatchKind> parse_batch_kind(std::string_view s) {
  if (s == "raw_events") return BatchKind::raw_events;
  if (s == "connectivity_records") return BatchKind::connectivity_records;
  if (s == "triage_flags") return BatchKind::triage_flags;
  return std::nullopt;
}

std::string batch_id(std::string_view hubId, int64_t cycleEnd, int64_t ordinal) {
  std::string id(hubId);
  id += '-';
  id += std::to_string(cycleEnd);
  id += '-';
  id += std::to_string(ordinal);
  return id;
}

// ---------------------------------------------------------------------------
// Batch and payload item codecs
// ---------------------------------------------------------------------------

std::string encode_batch(const SyncBatch& batch) {
  ojson meta{{"batchId", batch.batchId},
             {"kind", std::string(to_string(batch.kind))},
             {"createdAt", batch.createdAt}};
  std::string body = meta.dump();
  body.insert(body.size() - 1, ",\"payload\":" + batch.payloadJson);
  return body;
}

std::string encode_record_item(const ConnectivityRecord& rec) {
  return ojson{{"nodeId", rec.nodeId},
               {"connectionTimeMs", rec.connectionTimeMs},
               {"cycleStart", rec.cycleStart},
               {"cycleEnd", rec.cycleEnd}}
      .dump();
}

std::string encode_flag_item(const TriageFlag& flag) {
  ojson values = ojson::array();
  for (const auto& [ts, v] : flag.triggeringValues) values.push_back(ojson::array({ts, v}));
  return ojson{{"deviceId", flag.deviceId},
               {"rule", std::string(to_string(flag.rule))},
               {"triggeringValues", std::move(values)},
               {"raisedAt", flag.raisedAt}}
      .dump();
}

namespace {

Result<ConnectivityRecord> record_from_json(const ojson& j) {
  if (!j.is_object() || !j.contains("nodeId") || !j["nodeId"].is_string() ||
      !j.contains("connectionTimeMs") || !j["connectionTimeMs"].is_number_integer() ||
      !j.contains("cycleStart") || !j["cycleStart"].is_number_integer() ||
      !j.contains("cycleEnd") || !j["cycleEnd"].is_number_integer()) {
    return make_error(Errc::malformed, "bad connectivity record item");
  }
  ConnectivityRecord rec;
  rec.nodeId = j["nodeId"].get<std::string>();
  rec.connectionTimeMs = j["connectionTimeMs"].get<int64_t>();
  rec.cycleStart = j["cycleStart"].get<int64_t>();
  rec.cycleEnd = j["cycleEnd"].get<int64_t>();
  if (rec.connectionTimeMs < 0) return make_error(Errc::malformed, "negative connectionTimeMs");
  return rec;
}

Result<TriageFlag> flag_from_json(const ojson& j) {
  if (!j.is_object() || !j.contains("deviceId") || !j["deviceId"].is_string() ||
      !j.contains("rule") || !j["rule"].is_string() || !j.contains("triggeringValues") ||
      !j["triggeringValues"].is_array() || !j.contains("raisedAt") ||
      !j["raisedAt"].is_number_integer()) {
    return make_error(Errc::malformed, "bad triage flag item");
  }
  TriageFlag flag;
  flag.deviceId = j["deviceId"].get<std::string>();
  auto rule = parse_rule(j["rule"].get<std::string>());
  if (!rule) return make_error(Errc::malformed, "unknown triage rule");
  flag.rule = *rule;
  for (const auto& pair : j["triggeringValues"]) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
        !pair[1].is_number()) {
      return make_error(Errc::malformed, "bad triggering value");
    }
    flag.triggeringValues.emplace_back(pair[0].get<int64_t>(), pair[1].get<double>());
  }
  flag.raisedAt = j["raisedAt"].get<int64_t>();
  return flag;
}

Result<void> validate_item(BatchKind kind, const ojson& item) {
  switch (kind) {
    case BatchKind::raw_events:
      if (!item.is_object() || !item.contains("seq") || !item.contains("ts") ||
          !item.contains("event")) {
        return make_error(Errc::malformed, "bad raw event item");
      }
      return {};
    case BatchKind::connectivity_records: {
      auto r = record_from_json(item);
      if (!r) return r.error();
      return {};
    }
    case BatchKind::triage_flags: {
      auto r = flag_from_json(item);
      if (!r) return r.error();
      return {};
    }
  }
  return make_error(Errc::malformed, "unknown batch kind");
}

}  // namespace

Result<ConnectivityRecord> decode_record_item(std::string_view json) {
  ojson j = ojson::parse(json, nullptr, false);
  if (j.is_discarded()) return make_error(Errc::parse_error, "record item is not valid JSON");
  return record_from_json(j);
}

Result<TriageFlag> decode_flag_item(std::string_view json) {
  ojson j = ojson::parse(json, nullptr, false);
  if (j.is_discarded()) return make_error(Errc::parse_error, "flag item is not valid JSON");
  return flag_from_json(j);
}

std::string join_payload(const std::vector<std::string>& items) {
  std::string out = "[";
  for (size_t i = 0; i < items.size(); ++i) {
    if (i) out += ',';
    out += items[i];
  }
  out += ']';
  return out;
}

Result<SyncBatch> decode_batch(std::string_view body) {
  ojson j = ojson::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    return make_error(Errc::parse_error, "batch is not a JSON object");
  }
  if (!j.contains("batchId") || !j["batchId"].is_string()) {
    return make_error(Errc::malformed, "missing batchId");
  }
  SyncBatch batch;
  batch.batchId = j["batchId"].get<std::string>();
  if (batch.batchId.empty()) return make_error(Errc::malformed, "empty batchId");
  if (!j.contains("kind") || !j["kind"].is_string()) {
    return make_error(Errc::malformed, "missing kind");
  }
  auto kind = parse_batch_kind(j["kind"].get<std::string>());
  if (!kind) {
    return make_error(Errc::malformed, "unknown batch kind: " + j["kind"].get<std::string>());
  }
  batch.kind = *kind;
  if (!j.contains("createdAt") || !j["createdAt"].is_number_integer()) {
    return make_error(Errc::malformed, "missing createdAt");
  }
  batch.createdAt = j["createdAt"].get<int64_t>();
  if (!j.contains("payload") || !j["payload"].is_array() || j["payload"].empty()) {
    return make_error(Errc::malformed, "payload must be a non-empty array");
  }
  for (const auto& item : j["payload"]) {
    if (auto r = validate_item(batch.kind, item); !r) return r.error();
  }
  batch.payloadJson = j["payload"].dump();
  return batch;
}

// ---------------------------------------------------------------------------
// Durable queue
// ---------------------------------------------------------------------------

SyncQueue::SyncQueue(fs::path dir) : dir_(std::move(dir)) {}

std::string SyncQueue::file_stem(uint64_t seq, std::string_view batchId) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llu", static_cast<unsigned long long>(seq));
  std::string stem(buf);
  stem += '-';
  for (char c : batchId.substr(0, 100)) {
    stem += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-')
                ? c
                : '_';
  }
  return stem;
}

Result<std::unique_ptr<SyncQueue>> SyncQueue::open(const fs::path& dir) {
  std::unique_ptr<SyncQueue> q(new SyncQueue(dir));
  std::error_code ec;
  for (const char* sub : {"pending", "delivered", "dead"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) return make_error(Errc::io, "cannot create queue dir: " + ec.message());
  }
  if (auto r = q->scan(); !r) return r.error();
  return q;
}

Result<void> SyncQueue::scan() {
  for (const char* sub : {"pending", "delivered", "dead"}) {
    for (const auto& entry : fs::directory_iterator(dir_ / sub)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
      std::string name = entry.path().filename().string();
      // Abandoned temp files from a crash mid-enqueue never count: the write
      // was not acknowledged, so the batch will be enqueued again.
      size_t dash = name.find('-');
      if (dash == std::string::npos) continue;
      uint64_t seq = 0;
      try {
        seq = std::stoull(name.substr(0, dash));
      } catch (...) {
        continue;
      }
      nextSeq_ = std::max(nextSeq_, seq + 1);

      std::ifstream in(entry.path());
      std::stringstream buf;
      buf << in.rdbuf();
      auto batch = decode_batch(buf.str());
      if (!batch) {
        return make_error(Errc::io,
                          "corrupt queue file " + entry.path().string() + ": " +
                              batch.error().message);
      }
      ids_.insert(batch->batchId);
      if (std::string(sub) == "pending") {
        pendingBySeq_[seq] = PendingItem{seq, batch->batchId, entry.path()};
      } else if (std::string(sub) == "delivered") {
        ++deliveredCount_;
      } else {
        ++deadCount_;
      }
    }
  }
  return {};
}

Result<void> SyncQueue::enqueue(const SyncBatch& batch) {
  std::lock_guard lk(mu_);
  if (ids_.count(batch.batchId)) {
    return make_error(Errc::duplicate, "batch already queued: " + batch.batchId);
  }
  uint64_t seq = nextSeq_;
  fs::path final = dir_ / "pending" / (file_stem(seq, batch.batchId) + ".json");
  fs::path tmp = final;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << encode_batch(batch);
    out.flush();
    if (!out) return make_error(Errc::io, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, final, ec);
  if (ec) return make_error(Errc::io, "cannot commit " + final.string() + ": " + ec.message());
  ++nextSeq_;
  ids_.insert(batch.batchId);
  pendingBySeq_[seq] = PendingItem{seq, batch.batchId, final};
  return {};
}

std::vector<SyncQueue::PendingItem> SyncQueue::pending() const {
  std::lock_guard lk(mu_);
  std::vector<PendingItem> items;
  items.reserve(pendingBySeq_.size());
  for (const auto& [_, item] : pendingBySeq_) items.push_back(item);
  return items;
}

size_t SyncQueue::pending_count() const {
  std::lock_guard lk(mu_);
  return pendingBySeq_.size();
}

size_t SyncQueue::delivered_count() const {
  std::lock_guard lk(mu_);
  return deliveredCount_;
}

size_t SyncQueue::dead_count() const {
  std::lock_guard lk(mu_);
  return deadCount_;
}

bool SyncQueue::known(std::string_view batchId) const {
  std::lock_guard lk(mu_);
  return ids_.find(batchId) != ids_.end();
}

SyncQueue::FlushStats SyncQueue::flush_once(Uplink& uplink) {
  FlushStats stats;
  for (auto item : pending()) {  // snapshot; sends happen without the lock held
    std::ifstream in(item.path);
    std::stringstream buf;
    buf << in.rdbuf();
    if (!in) {
      stats.transportFailed = true;
      stats.lastError = "cannot read " + item.path.string();
      break;
    }

    auto ack = uplink.send(buf.str());
    if (!ack) {
      stats.transportFailed = true;
      stats.lastError = ack.error().message;
      break;  // keep FIFO order: nothing younger goes out before this one
    }

    const char* destSub = ack->ok ? "delivered" : "dead";
    fs::path dest = dir_ / destSub / item.path.filename();
    std::error_code ec;
    fs::rename(item.path, dest, ec);
    if (ec) {
      stats.transportFailed = true;
      stats.lastError = "cannot move " + item.path.string() + ": " + ec.message();
      break;  // file stays pending; redelivery is safe, the cloud deduplicates
    }

    std::lock_guard lk(mu_);
    pendingBySeq_.erase(item.seq);
    if (ack->ok) {
      ++deliveredCount_;
      ++stats.delivered;
    } else {
      ++deadCount_;
      ++stats.deadLettered;
      std::ofstream reasons(dir_ / "dead" / "reasons.log", std::ios::app);
      reasons << item.batchId << '\t' << ack->status << '\t' << ack->reason << '\n';
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Backoff and background flusher
// ---------------------------------------------------------------------------

int64_t BackoffPolicy::delay_ms(int attempt, std::mt19937_64& rng) const {
  double d = static_cast<double>(baseMs) * std::pow(factor, attempt);
  int64_t full = d >= static_cast<double>(capMs) ? capMs : static_cast<int64_t>(d);
  if (full < 1) full = 1;
  std::uniform_int_distribution<int64_t> jitter(full - full / 2, full);
  return jitter(rng);
}

Flusher::Flusher(SyncQueue& queue, Uplink& uplink, BackoffPolicy policy, uint64_t jitterSeed)
    : queue_(queue), uplink_(uplink), policy_(policy), rng_(jitterSeed) {}

Flusher::~Flusher() { stop(); }

void Flusher::start() {
  if (thread_.joinable()) return;
  stop_ = false;
  thread_ = std::thread([this] { run(); });
}

void Flusher::stop() {
  {
    std::lock_guard lk(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void Flusher::kick() {
  {
    std::lock_guard lk(mu_);
    kicked_ = true;
  }
  cv_.notify_all();
}

void Flusher::run() {
  int attempt = 0;
  std::unique_lock lk(mu_);
  while (!stop_) {
    kicked_ = false;
    lk.unlock();
    SyncQueue::FlushStats stats;
    if (queue_.pending_count() > 0) stats = queue_.flush_once(uplink_);
    delivered_ += stats.delivered;
    lk.lock();
    if (stop_) break;
    if (stats.transportFailed) {
      auto delay = std::chrono::milliseconds(policy_.delay_ms(attempt++, rng_));
      cv_.wait_for(lk, delay, [this] { return stop_ || kicked_; });
    } else {
      attempt = 0;
      if (queue_.pending_count() == 0) cv_.wait(lk, [this] { return stop_ || kicked_; });
    }
  }
}

}  // namespace edgehub
