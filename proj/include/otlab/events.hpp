#pragma once

// The simulation event stream. Everything the detection stack is allowed to
// observe — tapped packets, firewall/link drops, link state changes, the
// reporting-cycle tick — flows through this one variant, and the engine writes
// the same records to the event log. Replaying a log therefore feeds the
// detectors byte-identical input. Attack markers and device log notes ride
// along for scoring and reporting; the detectors ignore them.

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "otlab/common.hpp"
#include "otlab/netsim.hpp"

namespace otlab::sim {

using json = nlohmann::ordered_json;

struct PacketSeen {
    SimTimeMs t_ms = 0;
    DeviceId at;  // tap location
    net::Packet packet;
};

struct PacketDropped {
    SimTimeMs t_ms = 0;
    DeviceId at;
    net::DropReason reason = net::DropReason::no_route;
    net::Packet packet;
};

struct LinkChanged {
    SimTimeMs t_ms = 0;
    std::string link_id;
    bool up = true;
};

// Reporting-cycle boundary; the model-based checks run on each one.
struct GridStep {
    SimTimeMs t_ms = 0;
    std::int64_t step = 0;
};

// Scoring annotation describing one injected attack. `detectable` is false
// for attacks the detection stack cannot see by construction (documented
// blind spots); they are excluded from recall.
struct GroundTruth {
    std::string attack_id;
    std::string kind;
    SimTimeMs start_ms = 0;
    SimTimeMs end_ms = 0;
    std::vector<DeviceId> nodes;
    std::vector<std::uint32_t> ioas;
    bool detectable = true;
};

struct AttackMarker {
    SimTimeMs t_ms = 0;
    GroundTruth truth;
};

// Free-text device log line (maintenance entries, configuration changes).
struct DeviceNote {
    SimTimeMs t_ms = 0;
    DeviceId device;
    std::string text;
};

using SimEvent = std::variant<PacketSeen, PacketDropped, LinkChanged, GridStep,
                              AttackMarker, DeviceNote>;

SimTimeMs event_time(const SimEvent& e);

std::string hex_encode(std::span<const std::uint8_t> bytes);
std::optional<std::vector<std::uint8_t>> hex_decode(const std::string& s);

json packet_to_json(const net::Packet& p);
std::optional<net::Packet> packet_from_json(const json& j);

json ground_truth_to_json(const GroundTruth& g);
std::optional<GroundTruth> ground_truth_from_json(const json& j);

json event_to_json(const SimEvent& e);
std::optional<SimEvent> event_from_json(const json& j);

}  // namespace otlab::sim
