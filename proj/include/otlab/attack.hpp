#pragma once

// Scripted adversary actions. Each action carries deterministic parameters —
// no attack decisions are made at run time — and expands into concrete
// simulator operations (probe schedules, payload mutators, device-side
// falsification) plus a ground-truth record for scoring.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "otlab/common.hpp"
#include "otlab/grid.hpp"
#include "otlab/netsim.hpp"

namespace otlab::attack {

enum class Kind : std::uint8_t {
    network_scan,
    unauthorized_connect,
    false_data_injection,
    rogue_command,
    config_tamper,
    cover_up,
    traffic_copy,
};

const char* to_string(Kind k);
std::optional<Kind> kind_from_string(const std::string& s);

// Sweeps every topology address matching `targets` over the port list at a
// fixed rate, one probe per (address, port) pair.
struct ScanParams {
    DeviceId attacker;
    std::string targets;  // L3 pattern, e.g. "10.0.2.*"
    std::vector<std::uint16_t> ports;
    double rate_per_second = 10.0;
};

// Connection attempt to a field device, optionally spoofing the network
// address of a legitimate endpoint (the hardware address stays the
// attacker's own — that mismatch is the tell).
struct UnauthorizedConnectParams {
    DeviceId attacker;
    DeviceId target;
    std::uint16_t port = 2404;
    std::optional<DeviceId> spoof_as;
};

// Rewrites measured values inside telecontrol frames crossing one link.
struct FdiParams {
    std::string link_id;
    std::vector<std::uint32_t> ioas;
    enum class Mode : std::uint8_t { offset, replace, freeze };
    Mode mode = Mode::offset;
    double amount = 0.0;  // offset delta or replacement value; unused by freeze
    SimTimeMs end_ms = 0;
};

const char* to_string(FdiParams::Mode m);
std::optional<FdiParams::Mode> fdi_mode_from_string(const std::string& s);

// A syntactically valid command from a host that has no business sending one.
struct RogueCommandParams {
    DeviceId attacker;
    DeviceId target;           // the RTU addressed
    std::uint32_t command_ioa = 0;
    bool is_setpoint = false;
    double setpoint_value = 0.0;
    bool breaker_close = false;
};

// Persistent manipulation of device configuration: a wrong scaling factor on
// one reported datapoint and/or an unscheduled maintenance-mode entry.
struct ConfigTamperParams {
    DeviceId rtu;
    std::optional<std::uint32_t> scaling_ioa;
    double scaling_factor = 1.0;
    bool enter_maintenance = false;
};

// Local manipulation at a compromised device: force an asset setpoint and
// freeze the device's own affected measurements at pre-attack values so the
// station keeps seeing a consistent picture.
struct CoverUpParams {
    DeviceId rtu;
    std::string asset_id;
    double forced_setpoint_pu = 0.0;
    std::vector<std::uint32_t> falsified_ioas;  // must all belong to `rtu`
    SimTimeMs end_ms = 0;
};

// Mirrors telecontrol traffic crossing a link to a collector host.
struct TrafficCopyParams {
    std::string link_id;
    DeviceId collector;
    std::uint16_t collector_port = 40000;
    SimTimeMs end_ms = 0;
};

using Params = std::variant<ScanParams, UnauthorizedConnectParams, FdiParams,
                            RogueCommandParams, ConfigTamperParams,
                            CoverUpParams, TrafficCopyParams>;

struct Action {
    std::string id;
    Kind kind = Kind::network_scan;
    SimTimeMs start_ms = 0;
    Params params;
};

// Structural validation against the scenario pieces; throws
// std::runtime_error with a message naming the action. `warnings` collects
// non-fatal findings (e.g. an injection window entirely outside the run).
void validate_action(const Action& a, const net::TopologySpec& topo,
                     const grid::GridNetwork& gridnet,
                     const grid::DatapointMap& datapoints, SimTimeMs duration_ms,
                     std::vector<std::string>& warnings);

struct Probe {
    SimTimeMs t_ms = 0;
    net::L3Addr dst;
    std::uint16_t port = 0;
};

// Deterministic probe schedule: targets sorted by address, ports in listed
// order, spaced 1/rate apart starting at start_ms.
std::vector<Probe> expand_scan(const ScanParams& p, const net::TopologySpec& topo,
                               SimTimeMs start_ms);

}  // namespace otlab::attack
