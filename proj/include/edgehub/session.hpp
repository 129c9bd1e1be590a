#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "edgehub/protocol.hpp"
#include "edgehub/result.hpp"

namespace edgehub {

// ---------------------------------------------------------------------------
// Per-device session state and connectivity-time accounting. Time never comes
// from a wall clock here; every operation takes `now` so the whole table is a
// pure function of the (event, timestamp) sequence.
// ---------------------------------------------------------------------------

struct NodeRecord {
  std::string nodeId;
  std::string mdeviceId;
  NodeStatus status = NodeStatus::disconnected;
  int64_t lastTimestamp = 0;  // while connected: instant uncredited time runs from
  int64_t accumulatedMs = 0;  // credited connected time since the last cycle reset

  bool operator==(const NodeRecord&) const = default;
};

class SessionTable {
public:
  using Map = std::map<std::string, NodeRecord>;

  bool empty() const { return records_.empty(); }
  size_t size() const { return records_.size(); }

  const NodeRecord* find(const std::string& nodeId) const {
    auto it = records_.find(nodeId);
    return it == records_.end() ? nullptr : &it->second;
  }

  Map::const_iterator begin() const { return records_.begin(); }
  Map::const_iterator end() const { return records_.end(); }

  bool operator==(const SessionTable&) const = default;

private:
  friend Result<void> apply_snapshot(SessionTable&, const NodesSnapshot&, int64_t);
  friend Result<void> apply_update(SessionTable&, const NodeUpdate&, int64_t);
  friend Result<void> credit_elapsed(SessionTable&, int64_t);
  friend Result<void> reset_accumulated(SessionTable&);

  Map records_;
};

/// Upserts every node in the snapshot. New nodes register with zero
/// accumulated time; known nodes are treated as a status assertion (their
/// accumulated time is preserved, a differing status goes through the same
/// transition rules as apply_update). On clock regression the event is
/// rejected and the table is left untouched.
Result<void> apply_snapshot(SessionTable& table, const NodesSnapshot& snap, int64_t now);

/// Applies one status transition. connected -> disconnected credits
/// now - lastTimestamp; disconnected -> connected restarts the running
/// interval; a same-status update is a no-op; an unknown node auto-registers.
Result<void> apply_update(SessionTable& table, const NodeUpdate& upd, int64_t now);

/// Credits now - lastTimestamp to every connected record and advances its
/// lastTimestamp to now. Disconnected records are untouched.
Result<void> credit_elapsed(SessionTable& table, int64_t now);

/// Zeroes every record's accumulated time; statuses and timestamps stay.
Result<void> reset_accumulated(SessionTable& table);

/// Total connected time credited to the node, plus the running interval if it
/// is currently connected. Pure query.
Result<int64_t> connectivity_of(const SessionTable& table, const std::string& nodeId, int64_t now);

/// Dry-run admission check: would applying this event at `now` be rejected
/// (clock regression on any touched record)? Lets callers that must persist
/// before applying guarantee the apply cannot fail afterwards.
Result<void> check_event(const SessionTable& table, const GatewayEvent& event, int64_t now);

}  // namespace edgehub
