#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "edgehub/aggregate.hpp"
#include "edgehub/result.hpp"

namespace edgehub {

// ---------------------------------------------------------------------------
// Store-and-forward sync: batches persist in a directory-backed FIFO queue
// before anything is sent, survive restarts, and are retried until the cloud
// acknowledges them. Delivery is at-least-once; receivers deduplicate on
// batchId, so the visible effect is exactly-once.
// ---------------------------------------------------------------------------

enum class BatchKind { raw_events, connectivity_records, triage_flags };

std::string_view to_string(BatchKind kind);
std::optional<BatchKind> parse_batch_kind(std::string_view s);

struct SyncBatch {
  std::string batchId;
  BatchKind kind = BatchKind::raw_events;
  int64_t createdAt = 0;
  std::string payloadJson;  // serialized non-empty JSON array

  bool operator==(const SyncBatch&) const = default;
};

/// Deterministic batch identity: retries and post-crash re-enqueues of the
/// same logical batch always carry the same id.
std::string batch_id(std::string_view hubId, int64_t cycleEnd, int64_t ordinal);

std::string encode_batch(const SyncBatch& batch);
Result<SyncBatch> decode_batch(std::string_view body);

// Payload items. Encoders emit one JSON object; decoders are strict about
// required fields and tolerant of extras.
std::string encode_record_item(const ConnectivityRecord& rec);
std::string encode_flag_item(const TriageFlag& flag);
Result<ConnectivityRecord> decode_record_item(std::string_view json);
Result<TriageFlag> decode_flag_item(std::string_view json);

/// Joins pre-encoded items into a JSON array payload.
std::string join_payload(const std::vector<std::string>& items);

struct CloudAck {
  bool ok = false;
  bool duplicate = false;
  int status = 0;
  std::string reason;
};

/// A transport to the cloud. Transport-level trouble (connect/timeout/5xx) is
/// an error and will be retried; a 4xx-class ack comes back as ok=false and is
/// permanent.
class Uplink {
public:
  virtual ~Uplink() = default;
  virtual Result<CloudAck> send(const std::string& batchBody) = 0;
};

class SyncQueue {
public:
  static Result<std::unique_ptr<SyncQueue>> open(const std::filesystem::path& dir);

  SyncQueue(const SyncQueue&) = delete;
  SyncQueue& operator=(const SyncQueue&) = delete;

  /// Writes the batch durably (temp file + rename) before returning. A
  /// batchId ever seen by this queue is rejected with Errc::duplicate.
  /// Safe to call while a flush is in progress.
  Result<void> enqueue(const SyncBatch& batch);

  struct PendingItem {
    uint64_t seq = 0;
    std::string batchId;
    std::filesystem::path path;
  };
  std::vector<PendingItem> pending() const;  // FIFO order
  size_t pending_count() const;
  size_t delivered_count() const;
  size_t dead_count() const;
  bool known(std::string_view batchId) const;
  const std::filesystem::path& dir() const { return dir_; }

  struct FlushStats {
    size_t delivered = 0;
    size_t deadLettered = 0;
    bool transportFailed = false;
    std::string lastError;
  };

  /// One FIFO pass: sends pending batches oldest-first, stops at the first
  /// transport failure (order is preserved), dead-letters permanent rejects.
  FlushStats flush_once(Uplink& uplink);

private:
  explicit SyncQueue(std::filesystem::path dir);
  Result<void> scan();
  static std::string file_stem(uint64_t seq, std::string_view batchId);

  mutable std::mutex mu_;
  std::filesystem::path dir_;
  uint64_t nextSeq_ = 0;
  std::set<std::string, std::less<>> ids_;
  std::map<uint64_t, PendingItem> pendingBySeq_;
  size_t deliveredCount_ = 0;
  size_t deadCount_ = 0;
};

struct BackoffPolicy {
  int64_t baseMs = 1000;
  double factor = 2.0;
  int64_t capMs = 60000;

  /// Delay before retry number `attempt` (0-based), jittered to the upper
  /// half of the exponential step so stalled hubs don't reconnect in phase.
  int64_t delay_ms(int attempt, std::mt19937_64& rng) const;
};

/// Background flusher: drains the queue whenever batches are waiting, backs
/// off exponentially while the link is down.
class Flusher {
public:
  Flusher(SyncQueue& queue, Uplink& uplink, BackoffPolicy policy = {},
          uint64_t jitterSeed = std::random_device{}());
  ~Flusher();

  void start();
  void stop();
  void kick();  // wake the loop (e.g. after enqueue)

  size_t delivered_total() const { return delivered_.load(); }

private:
  void run();

  SyncQueue& queue_;
  Uplink& uplink_;
  BackoffPolicy policy_;
  std::mt19937_64 rng_;
  std::thread thread_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
  bool kicked_ = false;
  std::atomic<size_t> delivered_{0};
};

}  // namespace edgehub
