#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "edgehub/result.hpp"

namespace edgehub {

// ---------------------------------------------------------------------------
// Gateway wire protocol: "Nodes" snapshots and "NodesUpdate" transitions,
// one JSON object per frame, plus the vitals reading schema.
// ---------------------------------------------------------------------------

enum class NodeStatus { connected, disconnected };

std::string_view to_string(NodeStatus s);
std::optional<NodeStatus> parse_status(std::string_view s);

/// Device identity is a MAC address; canonical form is six uppercase hex
/// octets separated by colons (AA:BB:CC:DD:EE:FF).
bool is_valid_mac(std::string_view id);

/// Returns the canonical uppercase form, or nullopt if `id` is not a MAC.
std::optional<std::string> normalize_mac(std::string_view id);

struct NodeDescriptor {
  std::string id;
  NodeStatus status = NodeStatus::disconnected;

  bool operator==(const NodeDescriptor&) const = default;
};

struct MDeviceNodes {
  std::string mdeviceId;
  std::vector<NodeDescriptor> nodes;

  bool operator==(const MDeviceNodes&) const = default;
};

/// Full fleet snapshot as announced by the gateways.
struct NodesSnapshot {
  std::vector<MDeviceNodes> mdevices;

  bool operator==(const NodesSnapshot&) const = default;
};

/// Single status transition for one node.
struct NodeUpdate {
  std::string mdeviceId;
  NodeDescriptor node;

  bool operator==(const NodeUpdate&) const = default;
};

using GatewayEvent = std::variant<NodesSnapshot, NodeUpdate>;

// Vitals telemetry ---------------------------------------------------------

enum class VitalKind { temperature, oxygen_level, heart_rate };

std::string_view to_string(VitalKind k);
std::optional<VitalKind> parse_vital_kind(std::string_view s);

/// Fixed unit per kind: celsius / percent / bpm.
std::string_view unit_for(VitalKind k);

struct VitalBounds {
  double lo;
  double hi;
};

/// Plausibility bounds; readings outside are rejected.
VitalBounds bounds_for(VitalKind k);

struct TelemetryReading {
  std::string deviceId;
  VitalKind kind = VitalKind::temperature;
  double value = 0.0;
  std::string unit;
  int64_t ts = 0;  // ms since Unix epoch

  bool operator==(const TelemetryReading&) const = default;
};

// Codec ---------------------------------------------------------------------

/// Checks the type invariants of an event (MAC format, status vocabulary,
/// snapshot node-id uniqueness, non-empty snapshot mdeviceId).
Result<void> validate_event(const GatewayEvent& event);

/// Canonical UTF-8 encoding, fields in declared order. Same event always
/// yields the same bytes; distinct events yield distinct bytes.
Result<std::string> encode_event(const GatewayEvent& event);

/// Strict on required fields, tolerant of unknown extra fields. MAC ids are
/// normalized to uppercase. Never throws on arbitrary input.
Result<GatewayEvent> decode_event(std::string_view text);

/// Returns every violated invariant; empty means valid.
std::vector<std::string> validate_reading(const TelemetryReading& r);

std::string encode_reading(const TelemetryReading& r);
Result<TelemetryReading> decode_reading(std::string_view text);

}  // namespace edgehub
