#include "edgehub/session.hpp"

namespace edgehub {

namespace {

Error regression_error(const std::string& nodeId, int64_t now, int64_t stored) {
  return make_error(Errc::clock_regression,
                    "clock regression on node " + nodeId + ": now=" + std::to_string(now) +
                        " < stored timestamp " + std::to_string(stored));
}

// Shared transition rule. Caller has already checked now >= rec.lastTimestamp.
void transition(NodeRecord& rec, NodeStatus to, int64_t now) {
  if (rec.status == to) return;
  if (rec.status == NodeStatus::connected) {
    rec.accumulatedMs += now - rec.lastTimestamp;
  }
  rec.lastTimestamp = now;
  rec.status = to;
}

}  // namespace

Result<void> apply_snapshot(SessionTable& table, const NodesSnapshot& snap, int64_t now) {
  // Reject before mutating anything so a bad clock leaves the table intact.
  for (const auto& dev : snap.mdevices) {
    for (const auto& node : dev.nodes) {
      if (const NodeRecord* rec = table.find(node.id); rec && now < rec->lastTimestamp) {
        return regression_error(node.id, now, rec->lastTimestamp);
      }
    }
  }
  for (const auto& dev : snap.mdevices) {
    for (const auto& node : dev.nodes) {
      auto it = table.records_.find(node.id);
      if (it == table.records_.end()) {
        table.records_.emplace(node.id,
                               NodeRecord{node.id, dev.mdeviceId, node.status, now, 0});
      } else {
        transition(it->second, node.status, now);
      }
    }
  }
  return {};
}

Result<void> apply_update(SessionTable& table, const NodeUpdate& upd, int64_t now) {
  auto it = table.records_.find(upd.node.id);
  if (it == table.records_.end()) {
    table.records_.emplace(upd.node.id,
                           NodeRecord{upd.node.id, upd.mdeviceId, upd.node.status, now, 0});
    return {};
  }
  if (now < it->second.lastTimestamp) {
    return regression_error(upd.node.id, now, it->second.lastTimestamp);
  }
  transition(it->second, upd.node.status, now);
  return {};
}

Result<void> credit_elapsed(SessionTable& table, int64_t now) {
  for (const auto& [id, rec] : table.records_) {
    if (rec.status == NodeStatus::connected && now < rec.lastTimestamp) {
      return regression_error(id, now, rec.lastTimestamp);
    }
  }
  for (auto& [id, rec] : table.records_) {
    if (rec.status == NodeStatus::connected) {
      rec.accumulatedMs += now - rec.lastTimestamp;
      rec.lastTimestamp = now;
    }
  }
  return {};
}

Result<void> reset_accumulated(SessionTable& table) {
  for (auto& [id, rec] : table.records_) {
    rec.accumulatedMs = 0;
  }
  return {};
}

Result<void> check_event(const SessionTable& table, const GatewayEvent& event, int64_t now) {
  if (const auto* snap = std::get_if<NodesSnapshot>(&event)) {
    for (const auto& dev : snap->mdevices) {
      for (const auto& node : dev.nodes) {
        if (const NodeRecord* rec = table.find(node.id); rec && now < rec->lastTimestamp) {
          return regression_error(node.id, now, rec->lastTimestamp);
        }
      }
    }
    return {};
  }
  const auto& upd = std::get<NodeUpdate>(event);
  if (const NodeRecord* rec = table.find(upd.node.id); rec && now < rec->lastTimestamp) {
    return regression_error(upd.node.id, now, rec->lastTimestamp);
  }
  return {};
}

Result<int64_t> connectivity_of(const SessionTable& table, const std::string& nodeId,
                                int64_t now) {
  const NodeRecord* rec = table.find(nodeId);
  if (!rec) {
    return make_error(Errc::not_found, "unknown node " + nodeId);
  }
  int64_t total = rec->accumulatedMs;
  if (rec->status == NodeStatus::connected) {
    total += now - rec->lastTimestamp;
  }
  return total;
}

}  // namespace edgehub
