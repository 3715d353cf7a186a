#pragma once

// Passive intrusion detection over the simulation event stream. Three layers
// inspect every tapped packet and every reporting cycle:
//
//   acl       - who talks to whom: known endpoints (L2/L3 pairing), the
//               engineered flow list, and a port-scan heuristic fed by both
//               tapped probes and firewall drop reports.
//   protocol  - what they say: telecontrol frames must decode, follow the
//               session state machine, and stay within the per-flow whitelist
//               of type/cause/object-address combinations.
//   model     - whether it is physically plausible: per-bus power balance,
//               branch limits, staleness, and command plausibility against a
//               grid model mirrored from the observed traffic.
//
// A monitoring board rides on the same stream for device health verdicts.
// The pipeline is a pure fold: state in, event in, alerts out. Feeding the
// recorded event log back through it reproduces the alert log byte for byte.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "otlab/events.hpp"
#include "otlab/grid.hpp"
#include "otlab/iec104.hpp"
#include "otlab/monitor.hpp"
#include "otlab/netsim.hpp"

namespace otlab::ids {

using json = nlohmann::ordered_json;

enum class Layer : std::uint8_t { acl, protocol, model, monitoring };
enum class Severity : std::uint8_t { info, warning, critical };

const char* to_string(Layer l);
const char* to_string(Severity s);
std::optional<Layer> layer_from_string(const std::string& s);
std::optional<Severity> severity_from_string(const std::string& s);

struct Alert {
    SimTimeMs t_ms = 0;       // first occurrence
    SimTimeMs last_t_ms = 0;  // latest suppressed duplicate
    Layer layer = Layer::acl;
    std::string rule;
    DeviceId source_node;     // where the suspicious activity came from
    DeviceId subject_device;  // which asset/device it concerns
    Severity severity = Severity::info;
    int count = 1;            // duplicates folded into this record
    json evidence;
};

json alert_to_json(const Alert& a);
std::optional<Alert> alert_from_json(const json& j);

// --- Whitelists ------------------------------------------------------------

struct AclWhitelist {
    struct Endpoint {
        DeviceId device;
        net::L2Addr l2;
        net::L3Addr l3;
    };
    struct Flow {
        DeviceId center_device;  // connection initiator (control center)
        DeviceId field_device;
        net::L3Addr center_l3;
        net::L3Addr field_l3;
        std::uint16_t port = iec104::kDefaultPort;
    };
    std::vector<Endpoint> endpoints;
    std::vector<Flow> flows;

    const Endpoint* find_by_l3(const net::L3Addr& l3) const;
};

struct ProtocolWhitelist {
    struct FlowRule {
        net::L3Addr center_l3, field_l3;
        DeviceId field_device;
        std::set<std::uint32_t> to_field_ioas;   // commands (plus 0 for GI)
        std::set<std::uint32_t> to_center_ioas;  // measurements + confirmations
    };
    std::vector<FlowRule> rules;

    const FlowRule* find(const net::L3Addr& a, const net::L3Addr& b) const;
};

struct WhitelistBundle {
    AclWhitelist acl;
    ProtocolWhitelist protocol;
};

// Builds both whitelists from the engineered configuration: every scada, rtu
// and terminal-server node is a known endpoint; one telecontrol flow per RTU
// from the (single) control center on the standard port.
WhitelistBundle derive_whitelists(const net::TopologySpec& topo,
                                  const grid::DatapointMap& datapoints);

// --- Pipeline --------------------------------------------------------------

struct ModelConfig {
    double residual_threshold_pu = 0.05;
    SimTimeMs stale_after_ms = 5000;
};

struct IdsConfig {
    ModelConfig model;
    int scan_distinct_targets = 10;   // distinct (dst, port) pairs ...
    SimTimeMs scan_window_ms = 5000;  // ... within this window trip the alarm
    SimTimeMs dedup_window_ms = 10000;
    SimTimeMs reporting_period_ms = 1000;
};

struct Layers {
    bool acl = true;
    bool protocol = true;
    bool model = true;
    bool monitoring = true;
};

class Pipeline {
public:
    Pipeline(net::TopologySpec topo, grid::GridNetwork grid_net,
             grid::DatapointMap datapoints, WhitelistBundle whitelists,
             IdsConfig cfg, mon::MonitorConfig mon_cfg,
             std::vector<mon::DeviceSpec> devices, Layers layers = Layers{});

    void on_event(const sim::SimEvent& e);

    const std::vector<Alert>& alerts() const { return alerts_; }
    const std::vector<json>& monitoring_log() const { return monitoring_log_; }

    struct ImageValue {
        double value = 0.0;
        bool good = true;
        SimTimeMs t_ms = 0;
    };
    const std::map<std::uint32_t, ImageValue>& process_image() const {
        return image_;
    }
    const mon::Board& board() const { return board_; }

private:
    struct FlowSessionState {
        bool started = false;
        std::optional<std::uint16_t> next_from_center;
        std::optional<std::uint16_t> next_from_field;
    };

    void on_packet(const sim::PacketSeen& ev);
    void on_drop(const sim::PacketDropped& ev);
    void on_grid_step(const sim::GridStep& ev);
    void feed_scan_detector(SimTimeMs t, const net::Packet& p);
    void check_acl(SimTimeMs t, const net::Packet& p);
    void check_protocol_and_ingest(SimTimeMs t, const net::Packet& p);
    void check_command_plausibility(SimTimeMs t, const net::Packet& p,
                                    const iec104::Asdu& asdu);
    void ingest_monitor_frame(SimTimeMs t, const net::Packet& p,
                              const iec104::Asdu& asdu);
    void model_checks(SimTimeMs t);
    std::vector<DeviceId> stale_devices(SimTimeMs t) const;

    void emit(SimTimeMs t, Layer layer, const std::string& rule,
              const DeviceId& source, const DeviceId& subject, Severity sev,
              json evidence);
    DeviceId resolve_l3(const net::L3Addr& addr) const;

    net::TopologySpec topo_;
    grid::GridNetwork grid_;
    grid::DatapointMap datapoints_;
    WhitelistBundle wl_;
    IdsConfig cfg_;
    Layers layers_;
    mon::Board board_;

    std::vector<Alert> alerts_;
    std::map<std::string, std::size_t> dedup_;  // alert key -> index
    std::vector<json> monitoring_log_;

    std::set<std::uint64_t> seen_packets_;  // tap de-duplication
    std::map<std::string, FlowSessionState> sessions_;  // keyed by l3 pair
    struct ScanWindow {
        std::vector<std::pair<SimTimeMs, std::string>> probes;  // (t, dst:port)
    };
    std::map<std::string, ScanWindow> scan_;  // per source l3

    std::map<std::uint32_t, ImageValue> image_;
    SimTimeMs last_bad_data_ms_ = -1;
};

}  // namespace otlab::ids
