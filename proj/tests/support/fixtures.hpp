#pragma once

// A compact two-substation station fixture for exercising the detection
// pipeline directly: hand-built topology, grid and datapoint map, plus a
// traffic synthesizer that fabricates the tapped-packet event stream a real
// run would produce (connection handshakes, sequenced telecontrol frames,
// reporting-cycle ticks).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "otlab/events.hpp"
#include "otlab/grid.hpp"
#include "otlab/iec104.hpp"
#include "otlab/ids.hpp"
#include "otlab/monitor.hpp"
#include "otlab/netsim.hpp"

namespace testsupport {

inline otlab::net::L3Addr l3(const std::string& s) {
    return *otlab::net::l3_from_string(s);
}
inline otlab::net::L2Addr l2(const std::string& s) {
    return *otlab::net::l2_from_string(s);
}

struct DetectFixture {
    otlab::net::TopologySpec topo;
    otlab::grid::GridNetwork grid;
    otlab::grid::DatapointMap dp;
    otlab::ids::IdsConfig cfg;
    otlab::mon::MonitorConfig mon_cfg;
    std::vector<otlab::mon::DeviceSpec> devices;

    DetectFixture() {
        using namespace otlab;
        auto add_node = [this](const std::string& id, net::NodeKind kind,
                               const std::string& mac, const std::string& ip) {
            topo.nodes.push_back(
                {id, kind, net::Zone::ot, l2(mac), l3(ip)});
        };
        add_node("scada", net::NodeKind::scada, "02:00:00:00:01:10", "10.0.1.10");
        add_node("sw", net::NodeKind::switch_device, "02:00:00:00:09:01",
                 "10.0.9.1");
        add_node("rtu1", net::NodeKind::rtu, "02:00:00:00:02:01", "10.0.2.1");
        add_node("rtu2", net::NodeKind::rtu, "02:00:00:00:02:02", "10.0.2.2");
        add_node("evil", net::NodeKind::attacker, "02:00:00:00:66:02",
                 "10.0.2.66");
        topo.links.push_back({"lnk_core", "scada", "sw", 5, true});
        topo.links.push_back({"lnk_r1", "sw", "rtu1", 5, true});
        topo.links.push_back({"lnk_r2", "sw", "rtu2", 5, true});
        topo.links.push_back({"lnk_rogue", "sw", "evil", 5, true});
        topo.taps.push_back("sw");

        grid.buses = {{"B0", 10.0}, {"B1", 10.0}, {"B2", 10.0}};
        grid.slack_bus_id = "B0";
        grid.branches.push_back({"L1", "B0", "B1", 0.1, 0.60, true});
        grid.branches.push_back({"L2", "B1", "B2", 0.1, 0.40, true});
        grid.assets.push_back(
            {"feeder0", "B0", grid::AssetKind::feeder, -5.0, 5.0, 0.0});
        grid.assets.push_back(
            {"battery1", "B1", grid::AssetKind::battery, -0.1, 0.1, 0.0});
        grid.assets.push_back(
            {"load1", "B1", grid::AssetKind::load, -1.0, 0.0, -0.3});
        grid.assets.push_back(
            {"load2", "B2", grid::AssetKind::load, -1.0, 0.0, -0.2});

        auto meas = [this](std::uint32_t ioa, const std::string& rtu,
                           grid::Quantity q, const std::string& ref) {
            dp.measurements.push_back({ioa, rtu, q, ref});
        };
        meas(101, "rtu1", grid::Quantity::bus_injection, "B0");
        meas(102, "rtu1", grid::Quantity::bus_injection, "B1");
        meas(103, "rtu1", grid::Quantity::branch_flow, "L1");
        meas(104, "rtu1", grid::Quantity::breaker_state, "L1");
        meas(190, "rtu1", grid::Quantity::device_status, "rtu1");
        meas(201, "rtu2", grid::Quantity::bus_injection, "B2");
        meas(202, "rtu2", grid::Quantity::branch_flow, "L2");
        meas(203, "rtu2", grid::Quantity::breaker_state, "L2");
        meas(290, "rtu2", grid::Quantity::device_status, "rtu2");
        dp.commands.push_back({301, "rtu1", grid::CommandKind::setpoint,
                               "battery1"});
        dp.commands.push_back({302, "rtu1", grid::CommandKind::breaker, "L1"});
        dp.commands.push_back({401, "rtu2", grid::CommandKind::breaker, "L2"});

        devices.push_back({"rtu1", "lnk_r1", 190});
        devices.push_back({"rtu2", "lnk_r2", 290});
    }

    otlab::ids::Pipeline make_pipeline(
        otlab::ids::Layers layers = otlab::ids::Layers{}) const {
        return otlab::ids::Pipeline(topo, grid, dp,
                                    otlab::ids::derive_whitelists(topo, dp),
                                    cfg, mon_cfg, devices, layers);
    }

    const otlab::net::TopologyNode& node(const std::string& id) const {
        return *topo.find_node(id);
    }

    std::uint16_t common_address(const std::string& rtu) const {
        return rtu == "rtu1" ? 1 : 2;
    }
    std::uint32_t status_ioa(const std::string& rtu) const {
        return rtu == "rtu1" ? 190 : 290;
    }
};

// Fabricates the event stream of a station run. Sequence counters per flow
// mirror what the real stations would put on the wire, so the synthesized
// traffic is protocol-clean unless a test corrupts it on purpose.
class TrafficSim {
public:
    explicit TrafficSim(const DetectFixture& fix) : fix_(fix) {}

    std::vector<otlab::sim::SimEvent>& events() { return events_; }

    void feed(otlab::ids::Pipeline& p) {
        for (const auto& e : events_) p.on_event(e);
        events_.clear();
    }

    otlab::net::Packet make_packet(const std::string& from, const std::string& to,
                                   std::uint16_t sport, std::uint16_t dport,
                                   otlab::net::PacketKind kind,
                                   std::vector<std::uint8_t> payload = {}) {
        otlab::net::Packet p;
        p.packet_id = next_packet_id_++;
        p.src_l2 = fix_.node(from).l2;
        p.src_l3 = fix_.node(from).l3;
        p.dst_l2 = fix_.node(to).l2;
        p.dst_l3 = fix_.node(to).l3;
        p.src_port = sport;
        p.dst_port = dport;
        p.kind = kind;
        p.payload = std::move(payload);
        return p;
    }

    void see(otlab::SimTimeMs t, otlab::net::Packet p) {
        events_.push_back(otlab::sim::PacketSeen{t, "sw", std::move(p)});
    }

    // Full handshake: connect, accept, STARTDT act / con.
    void connect(otlab::SimTimeMs t, const std::string& rtu,
                 std::uint16_t center_port) {
        using namespace otlab;
        center_port_[rtu] = center_port;
        see(t, make_packet("scada", rtu, center_port, 2404,
                           net::PacketKind::connect_request));
        see(t + 1, make_packet(rtu, "scada", 2404, center_port,
                               net::PacketKind::connect_accept));
        send_u(t + 2, rtu, true, iec104::UFunction::startdt_act);
        send_u(t + 3, rtu, false, iec104::UFunction::startdt_con);
        seq_[rtu] = {0, 0};
    }

    void send_u(otlab::SimTimeMs t, const std::string& rtu, bool to_field,
                otlab::iec104::UFunction fn) {
        using namespace otlab;
        const auto bytes = iec104::encode_apdu(iec104::Apdu::u_frame(fn));
        if (to_field)
            see(t, make_packet("scada", rtu, center_port_[rtu], 2404,
                               net::PacketKind::data, bytes));
        else
            see(t, make_packet(rtu, "scada", 2404, center_port_[rtu],
                               net::PacketKind::data, bytes));
    }

    void send_asdu(otlab::SimTimeMs t, const std::string& rtu, bool to_field,
                   otlab::iec104::Asdu asdu) {
        using namespace otlab;
        auto& [center_seq, field_seq] = seq_[rtu];
        std::uint16_t& send = to_field ? center_seq : field_seq;
        const auto bytes = iec104::encode_apdu(
            iec104::Apdu::i_frame(send, 0, std::move(asdu)));
        send = iec104::seq_next(send);
        if (to_field)
            see(t, make_packet("scada", rtu, center_port_[rtu], 2404,
                               net::PacketKind::data, bytes));
        else
            see(t, make_packet(rtu, "scada", 2404, center_port_[rtu],
                               net::PacketKind::data, bytes));
    }

    // One reporting cycle worth of measurements from `rtu`.
    void report(otlab::SimTimeMs t, const std::string& rtu,
                const std::map<std::uint32_t, float>& analogs,
                const std::map<std::uint32_t, bool>& points = {}) {
        using namespace otlab;
        if (!analogs.empty()) {
            iec104::Asdu a;
            a.type_id = iec104::TypeId::measured_float;
            a.cot = iec104::Cot::spontaneous;
            a.common_address = fix_.common_address(rtu);
            for (const auto& [ioa, v] : analogs)
                a.objects.push_back(
                    {ioa, iec104::MeasuredFloat{v, iec104::Quality::good}});
            send_asdu(t, rtu, false, std::move(a));
        }
        if (!points.empty()) {
            iec104::Asdu a;
            a.type_id = iec104::TypeId::single_point;
            a.cot = iec104::Cot::spontaneous;
            a.common_address = fix_.common_address(rtu);
            for (const auto& [ioa, v] : points)
                a.objects.push_back({ioa, iec104::SinglePoint{v}});
            send_asdu(t, rtu, false, std::move(a));
        }
    }

    void heartbeat(otlab::SimTimeMs t, const std::string& rtu) {
        report(t, rtu, {}, {{fix_.status_ioa(rtu), true}});
    }

    void command_setpoint(otlab::SimTimeMs t, const std::string& rtu,
                          std::uint32_t ioa, float value) {
        using namespace otlab;
        iec104::Asdu a;
        a.type_id = iec104::TypeId::setpoint_float;
        a.cot = iec104::Cot::activation;
        a.common_address = fix_.common_address(rtu);
        a.objects.push_back({ioa, iec104::SetpointFloat{value, false}});
        send_asdu(t, rtu, true, std::move(a));
    }

    void command_breaker(otlab::SimTimeMs t, const std::string& rtu,
                         std::uint32_t ioa, bool close) {
        using namespace otlab;
        iec104::Asdu a;
        a.type_id = iec104::TypeId::single_command;
        a.cot = iec104::Cot::activation;
        a.common_address = fix_.common_address(rtu);
        a.objects.push_back({ioa, iec104::SingleCommand{close, false}});
        send_asdu(t, rtu, true, std::move(a));
    }

    void grid_step(otlab::SimTimeMs t, std::int64_t step) {
        events_.push_back(otlab::sim::GridStep{t, step});
    }

    // Balanced full-station report: every analog matches the scheduled state
    // (load1 -0.3, load2 -0.2, battery 0), breakers closed, heartbeats fresh.
    void baseline_cycle(otlab::SimTimeMs t) {
        report(t, "rtu1", {{101, 0.5f}, {102, -0.3f}, {103, 0.5f}},
               {{104, true}, {190, true}});
        report(t, "rtu2", {{201, -0.2f}, {202, 0.2f}},
               {{203, true}, {290, true}});
    }

private:
    const DetectFixture& fix_;
    std::vector<otlab::sim::SimEvent> events_;
    std::uint64_t next_packet_id_ = 1;
    std::map<std::string, std::uint16_t> center_port_;
    std::map<std::string, std::pair<std::uint16_t, std::uint16_t>> seq_;
};

}  // namespace testsupport
