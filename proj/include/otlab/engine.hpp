#pragma once

// The co-simulation engine: drives the grid, the network, the station agents
// (control center and field devices), the scripted adversary actions and the
// detection stack through one deterministic loop. Every observable event is
// appended to the event log *and* fed to the detection pipeline in the same
// order, which is what makes offline replay reproduce the alert log exactly.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "otlab/correlate.hpp"
#include "otlab/events.hpp"
#include "otlab/grid.hpp"
#include "otlab/iec104.hpp"
#include "otlab/ids.hpp"
#include "otlab/netsim.hpp"
#include "otlab/scenario.hpp"

namespace otlab::engine {

struct RunArtifacts {
    // events.jsonl: one meta record (the resolved scenario) followed by every
    // simulation event in emission order.
    std::vector<sim::json> event_log;
    std::vector<ids::Alert> alerts;
    std::vector<sim::json> monitoring_log;
    std::vector<corr::Incident> incidents;
    std::vector<corr::DeviceAssessment> assessments;
    std::string incident_report_md;
    sim::json metrics;
};

class Engine {
public:
    explicit Engine(scenario::Scenario s, ids::Layers layers = ids::Layers{});

    RunArtifacts run();

private:
    struct ScadaConn {
        DeviceId rtu;
        net::L3Addr rtu_l3;
        std::uint16_t local_port = 0;
        bool connected = false;
        bool started = false;
        iec104::SessionState sess;
    };

    struct RtuPeerSession {
        iec104::SessionState sess;
        bool is_center = false;  // the engineered control-center connection
    };

    struct RtuState {
        DeviceId id;
        std::uint16_t common_address = 1;
        net::L3Addr l3;
        // Keyed by "peerL3:port"; engines talk to one another over these.
        std::map<std::string, RtuPeerSession> peers;
        std::map<std::uint32_t, double> last_report;   // post-falsification
        std::map<std::uint32_t, double> scaling;       // tampered factors
        std::map<std::uint32_t, double> frozen;        // cover-up freezes
        bool maintenance = false;
    };

    // Reactive adversary state machine for connection-oriented actions.
    struct AttackerFsm {
        std::string action_id;
        DeviceId node;
        attack::Kind kind = attack::Kind::unauthorized_connect;
        net::L3Addr target_l3;
        std::uint16_t target_port = 2404;
        std::uint16_t local_port = 0;
        bool spoofed = false;       // replies will never reach us
        bool sent_start = false;
        iec104::SessionState sess;
        // rogue command payload
        std::uint32_t command_ioa = 0;
        bool is_setpoint = false;
        double setpoint_value = 0.0;
        bool breaker_close = false;
        bool done = false;
    };

    void record(const sim::SimEvent& ev);
    void note(SimTimeMs t, const DeviceId& device, const std::string& text);

    void handle_net_event(const net::NetEvent& ev);
    void deliver(const net::Delivery& d);
    void scada_deliver(SimTimeMs t, const net::Packet& p);
    void rtu_deliver(SimTimeMs t, RtuState& rtu, const net::Packet& p);
    void attacker_deliver(SimTimeMs t, AttackerFsm& fsm, const net::Packet& p);

    void scada_send_command(SimTimeMs t, const scenario::ScheduleEntry& e);
    void scada_send_interrogation(SimTimeMs t, const DeviceId& rtu_id);
    void start_attack(SimTimeMs t, const attack::Action& a);
    void apply_profile(SimTimeMs t);
    void report_cycle(SimTimeMs t, const grid::FlowSolution& sol);

    void send_i_frame(SimTimeMs t, const DeviceId& from_node,
                      iec104::SessionState& sess, const net::L3Addr& src_l3,
                      std::uint16_t src_port, const net::L3Addr& dst_l3,
                      std::uint16_t dst_port, iec104::Asdu asdu);
    void send_plain(SimTimeMs t, const DeviceId& from_node,
                    const net::L3Addr& src_l3, std::uint16_t src_port,
                    const net::L3Addr& dst_l3, std::uint16_t dst_port,
                    iec104::UFunction fn);
    net::Packet base_packet(const net::L3Addr& src_l3, std::uint16_t src_port,
                            const net::L3Addr& dst_l3, std::uint16_t dst_port,
                            net::PacketKind kind) const;

    sim::GroundTruth ground_truth_for(const attack::Action& a) const;

    scenario::Scenario s_;
    net::Network net_;
    grid::GridNetwork truth_;
    Rng rng_;
    ids::Pipeline pipeline_;

    DeviceId scada_id_;
    net::L3Addr scada_l3_;
    std::map<DeviceId, ScadaConn> conns_;     // keyed by rtu id
    std::map<DeviceId, RtuState> rtus_;       // keyed by rtu id
    std::vector<AttackerFsm> attackers_;
    std::map<std::string, double> coverup_prev_;  // action id -> setpoint
    std::vector<sim::GroundTruth> truths_;

    std::vector<sim::json> event_log_;
    SimTimeMs now_ = 0;
};

RunArtifacts run_scenario(scenario::Scenario s, ids::Layers layers = ids::Layers{});

// Writes events.jsonl, alerts.jsonl, monitoring.jsonl, incidents.md and
// metrics.json into `out_dir` (created if needed).
void write_artifacts(const RunArtifacts& a, const std::string& out_dir);

// Post-run reporting shared with the CLI.
std::string render_incident_report(const scenario::Scenario& s,
                                   const std::vector<ids::Alert>& alerts,
                                   const std::vector<corr::Incident>& incidents,
                                   const std::vector<corr::DeviceAssessment>& assessments,
                                   const std::vector<sim::json>& monitoring_log);

}  // namespace otlab::engine
