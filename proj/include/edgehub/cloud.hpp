#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "edgehub/result.hpp"

namespace edgehub {

// ---------------------------------------------------------------------------
// Receiving side of the sync protocol: validates batches, deduplicates on
// batchId, persists payloads, and rebuilds connectivity CSVs so the cloud-side
// files can be compared byte-for-byte against the hub's own cycle output.
// ---------------------------------------------------------------------------

class CloudStore {
public:
  /// Opens (or reopens) the store under `outDir`; previously persisted batch
  /// ids keep deduplicating across restarts.
  static Result<std::unique_ptr<CloudStore>> open(const std::filesystem::path& outDir);

  struct ReceiveResult {
    int status = 0;        // HTTP status the stub should answer with
    bool ok = false;       // batch accepted (first sight or duplicate)
    bool duplicate = false;
    std::string ackBody;   // exact response body
    std::string reason;    // detail for rejections
  };

  /// Full receive pipeline for one POSTed batch body. Thread-safe.
  ReceiveResult receive(std::string_view body);

  size_t batches_persisted() const;
  std::vector<std::string> first_sight_order() const;
  const std::filesystem::path& dir() const { return dir_; }

private:
  explicit CloudStore(std::filesystem::path dir);
  Result<void> scan();

  mutable std::mutex mu_;
  std::filesystem::path dir_;
  std::set<std::string, std::less<>> ids_;
  std::vector<std::string> order_;
};

}  // namespace edgehub
