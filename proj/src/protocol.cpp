#include "edgehub/protocol.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"

namespace edgehub {

using ojson = nlohmann::ordered_json;
using njson = nlohmann::json;

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::parse_error: return "parse_error";
    case Errc::unsupported_event: return "unsupported_event";
    case Errc::validation: return "validation";
    case Errc::encoding: return "encoding";
    case Errc::clock_regression: return "clock_regression";
    case Errc::not_found: return "not_found";
    case Errc::ordering: return "ordering";
    case Errc::duplicate: return "duplicate";
    case Errc::io: return "io";
    case Errc::malformed: return "malformed";
    case Errc::unavailable: return "unavailable";
    case Errc::degraded: return "degraded";
  }
  return "unknown";
}

std::string_view to_string(NodeStatus s) {
  return s == NodeStatus::connected ? "connected" : "disconnected";
}

std::optional<NodeStatus> parse_status(std::string_view s) {
  if (s == "connected") return NodeStatus::connected;
  if (s == "disconnected") return NodeStatus::disconnected;
  return std::nullopt;
}

namespace {

bool is_hex(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
}

char upper_hex(char c) {
  return (c >= 'a' && c <= 'f') ? static_cast<char>(c - 'a' + 'A') : c;
}

}  // namespace

bool is_valid_mac(std::string_view id) {
  if (id.size() != 17) return false;
  for (size_t i = 0; i < 17; ++i) {
    if (i % 3 == 2) {
      if (id[i] != ':') return false;
    } else if (!is_hex(id[i])) {
      return false;
    }
  }
  return true;
}

std::optional<std::string> normalize_mac(std::string_view id) {
  if (!is_valid_mac(id)) return std::nullopt;
  std::string out(id);
  for (char& c : out) c = upper_hex(c);
  return out;
}

std::string_view to_string(VitalKind k) {
  switch (k) {
    case VitalKind::temperature: return "temperature";
    case VitalKind::oxygen_level: return "oxygen_level";
    case VitalKind::heart_rate: return "heart_rate";
  }
  return "temperature";
}

std::optional<VitalKind> parse_vital_kind(std::string_view s) {
  if (s == "temperature") return VitalKind::temperature;
  if (s == "oxygen_level") return VitalKind::oxygen_level;
  if (s == "heart_rate") return VitalKind::heart_rate;
  return std::nullopt;
}

std::string_view unit_for(VitalKind k) {
  switch (k) {
    case VitalKind::temperature: return "celsius";
    case VitalKind::oxygen_level: return "percent";
    case VitalKind::heart_rate: return "bpm";
  }
  return "celsius";
}

VitalBounds bounds_for(VitalKind k) {
  switch (k) {
    case VitalKind::temperature: return {25.0, 45.0};
    case VitalKind::oxygen_level: return {50.0, 100.0};
    case VitalKind::heart_rate: return {20.0, 250.0};
  }
  return {25.0, 45.0};
}

// Event validation -----------------------------------------------------------

namespace {

Result<void> validate_snapshot(const NodesSnapshot& snap) {
  std::set<std::string> seen;
  for (size_t m = 0; m < snap.mdevices.size(); ++m) {
    const auto& dev = snap.mdevices[m];
    if (dev.mdeviceId.empty()) {
      return make_error(Errc::validation,
                        "data.data[" + std::to_string(m) + "].mdeviceId: must be non-empty");
    }
    for (size_t n = 0; n < dev.nodes.size(); ++n) {
      const auto& node = dev.nodes[n];
      const std::string where =
          "data.data[" + std::to_string(m) + "].Nodes[" + std::to_string(n) + "].id";
      if (!is_valid_mac(node.id)) {
        return make_error(Errc::validation, where + ": invalid MAC '" + node.id + "'");
      }
      if (!seen.insert(node.id).second) {
        return make_error(Errc::validation, where + ": duplicate node id '" + node.id + "'");
      }
    }
  }
  return {};
}

Result<void> validate_update(const NodeUpdate& upd) {
  if (!is_valid_mac(upd.node.id)) {
    return make_error(Errc::validation, "data.node.id: invalid MAC '" + upd.node.id + "'");
  }
  return {};
}

}  // namespace

Result<void> validate_event(const GatewayEvent& event) {
  if (const auto* snap = std::get_if<NodesSnapshot>(&event)) return validate_snapshot(*snap);
  return validate_update(std::get<NodeUpdate>(event));
}

Result<std::string> encode_event(const GatewayEvent& event) {
  if (auto v = validate_event(event); !v) {
    return make_error(Errc::encoding, v.error().message);
  }
  ojson root;
  if (const auto* snap = std::get_if<NodesSnapshot>(&event)) {
    root["event"] = "Nodes";
    ojson devices = ojson::array();
    for (const auto& dev : snap->mdevices) {
      ojson d;
      d["mdeviceId"] = dev.mdeviceId;
      ojson nodes = ojson::array();
      for (const auto& node : dev.nodes) {
        ojson n;
        n["id"] = node.id;
        n["status"] = to_string(node.status);
        nodes.push_back(std::move(n));
      }
      d["Nodes"] = std::move(nodes);
      devices.push_back(std::move(d));
    }
    ojson data;
    data["data"] = std::move(devices);
    root["data"] = std::move(data);
  } else {
    const auto& upd = std::get<NodeUpdate>(event);
    root["event"] = "NodesUpdate";
    ojson node;
    node["id"] = upd.node.id;
    node["status"] = to_string(upd.node.status);
    ojson data;
    data["mdeviceId"] = upd.mdeviceId;
    data["node"] = std::move(node);
    root["data"] = std::move(data);
  }
  return root.dump();
}

// Decoding --------------------------------------------------------------------

namespace {

Result<std::string> require_string(const njson& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    return make_error(Errc::parse_error, where + "." + key + ": missing");
  }
  if (!it->is_string()) {
    return make_error(Errc::parse_error, where + "." + key + ": must be a string");
  }
  return it->get<std::string>();
}

Result<NodeDescriptor> decode_node(const njson& obj, const std::string& where) {
  if (!obj.is_object()) {
    return make_error(Errc::parse_error, where + ": must be an object");
  }
  auto id = require_string(obj, "id", where);
  if (!id) return id.error();
  auto status = require_string(obj, "status", where);
  if (!status) return status.error();

  auto mac = normalize_mac(id.value());
  if (!mac) {
    return make_error(Errc::validation, where + ".id: invalid MAC '" + id.value() + "'");
  }
  auto st = parse_status(status.value());
  if (!st) {
    return make_error(Errc::validation, where + ".status: unknown status '" + status.value() + "'");
  }
  return NodeDescriptor{std::move(*mac), *st};
}

}  // namespace

Result<GatewayEvent> decode_event(std::string_view text) {
  njson root = njson::parse(text, nullptr, /*allow_exceptions=*/false);
  if (root.is_discarded()) {
    return make_error(Errc::parse_error, "frame is not valid JSON");
  }
  if (!root.is_object()) {
    return make_error(Errc::parse_error, "frame must be a JSON object");
  }
  auto name = require_string(root, "event", "frame");
  if (!name) return name.error();

  auto data_it = root.find("data");
  if (data_it == root.end() || !data_it->is_object()) {
    return make_error(Errc::parse_error, "frame.data: missing or not an object");
  }
  const njson& data = *data_it;

  if (name.value() == "Nodes") {
    auto list_it = data.find("data");
    if (list_it == data.end() || !list_it->is_array()) {
      return make_error(Errc::parse_error, "data.data: missing or not an array");
    }
    NodesSnapshot snap;
    std::set<std::string> seen;
    size_t m = 0;
    for (const auto& dev : *list_it) {
      const std::string dwhere = "data.data[" + std::to_string(m) + "]";
      if (!dev.is_object()) {
        return make_error(Errc::parse_error, dwhere + ": must be an object");
      }
      auto mdev = require_string(dev, "mdeviceId", dwhere);
      if (!mdev) return mdev.error();
      if (mdev.value().empty()) {
        return make_error(Errc::validation, dwhere + ".mdeviceId: must be non-empty");
      }
      auto nodes_it = dev.find("Nodes");
      if (nodes_it == dev.end() || !nodes_it->is_array()) {
        return make_error(Errc::parse_error, dwhere + ".Nodes: missing or not an array");
      }
      MDeviceNodes out;
      out.mdeviceId = mdev.value();
      size_t n = 0;
      for (const auto& node : *nodes_it) {
        auto nd = decode_node(node, dwhere + ".Nodes[" + std::to_string(n) + "]");
        if (!nd) return nd.error();
        if (!seen.insert(nd.value().id).second) {
          return make_error(Errc::validation, dwhere + ".Nodes[" + std::to_string(n) +
                                                  "].id: duplicate node id '" + nd.value().id + "'");
        }
        out.nodes.push_back(std::move(nd.value()));
        ++n;
      }
      snap.mdevices.push_back(std::move(out));
      ++m;
    }
    return GatewayEvent{std::move(snap)};
  }

  if (name.value() == "NodesUpdate") {
    auto mdev = require_string(data, "mdeviceId", "data");
    if (!mdev) return mdev.error();
    auto node_it = data.find("node");
    if (node_it == data.end()) {
      return make_error(Errc::parse_error, "data.node: missing");
    }
    auto nd = decode_node(*node_it, "data.node");
    if (!nd) return nd.error();
    return GatewayEvent{NodeUpdate{mdev.value(), std::move(nd.value())}};
  }

  return make_error(Errc::unsupported_event, "unsupported event '" + name.value() + "'");
}

// Readings --------------------------------------------------------------------

std::vector<std::string> validate_reading(const TelemetryReading& r) {
  std::vector<std::string> violations;
  if (!is_valid_mac(r.deviceId)) {
    violations.push_back("deviceId: invalid MAC '" + r.deviceId + "'");
  }
  if (r.unit != unit_for(r.kind)) {
    violations.push_back("unit: '" + r.unit + "' does not match fixed unit '" +
                         std::string(unit_for(r.kind)) + "' for kind " +
                         std::string(to_string(r.kind)));
  }
  if (!std::isfinite(r.value)) {
    violations.push_back("value: must be finite");
  } else {
    const VitalBounds b = bounds_for(r.kind);
    if (r.value < b.lo || r.value > b.hi) {
      char msg[128];
      std::snprintf(msg, sizeof(msg), "value: %g outside plausible range [%g, %g] for %s",
                    r.value, b.lo, b.hi, std::string(to_string(r.kind)).c_str());
      violations.emplace_back(msg);
    }
  }
  if (r.ts < 0) {
    violations.push_back("ts: must be >= 0");
  }
  return violations;
}

std::string encode_reading(const TelemetryReading& r) {
  ojson j;
  j["deviceId"] = r.deviceId;
  j["kind"] = to_string(r.kind);
  j["value"] = r.value;
  j["unit"] = r.unit;
  j["ts"] = r.ts;
  return j.dump();
}

Result<TelemetryReading> decode_reading(std::string_view text) {
  njson root = njson::parse(text, nullptr, /*allow_exceptions=*/false);
  if (root.is_discarded()) {
    return make_error(Errc::parse_error, "reading is not valid JSON");
  }
  if (!root.is_object()) {
    return make_error(Errc::parse_error, "reading must be a JSON object");
  }
  auto device = require_string(root, "deviceId", "reading");
  if (!device) return device.error();
  auto kind_s = require_string(root, "kind", "reading");
  if (!kind_s) return kind_s.error();
  auto unit = require_string(root, "unit", "reading");
  if (!unit) return unit.error();

  auto kind = parse_vital_kind(kind_s.value());
  if (!kind) {
    return make_error(Errc::validation, "reading.kind: unknown kind '" + kind_s.value() + "'");
  }

  auto value_it = root.find("value");
  if (value_it == root.end() || !value_it->is_number()) {
    return make_error(Errc::parse_error, "reading.value: missing or not a number");
  }
  auto ts_it = root.find("ts");
  if (ts_it == root.end() || !ts_it->is_number_integer()) {
    return make_error(Errc::parse_error, "reading.ts: missing or not an integer");
  }

  TelemetryReading r;
  auto mac = normalize_mac(device.value());
  r.deviceId = mac ? *mac : device.value();  // invalid ids surface via validate_reading
  r.kind = *kind;
  r.value = value_it->get<double>();
  r.unit = unit.value();
  r.ts = ts_it->get<int64_t>();
  return r;
}

}  // namespace edgehub
