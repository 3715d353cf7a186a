#pragma once

// Deterministic discrete-event simulation of the OT communication network.
// Nodes are hosts and forwarding devices joined by point-to-point links with
// fixed integer-millisecond latency. Packets walk the precomputed shortest
// path hop by hop; firewalls filter at forwarding time, passive taps copy
// everything that transits them, and an attack hook can rewrite payloads on a
// specific link. All outcomes are totally ordered by (time, insertion
// sequence), so a run is reproducible byte for byte.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "otlab/common.hpp"

namespace otlab::net {

struct L2Addr {
    std::array<std::uint8_t, 6> octets{};
    auto operator<=>(const L2Addr&) const = default;
};

struct L3Addr {
    std::array<std::uint8_t, 4> octets{};
    auto operator<=>(const L3Addr&) const = default;
};

std::string to_string(const L2Addr& a);
std::string to_string(const L3Addr& a);
std::optional<L2Addr> l2_from_string(const std::string& s);  // "aa:bb:cc:dd:ee:ff"
std::optional<L3Addr> l3_from_string(const std::string& s);  // "10.0.2.1"

// Address pattern for firewall rules and scan targets: each octet is a number
// or '*', e.g. "10.0.2.*" or "*".
bool l3_matches(const std::string& pattern, const L3Addr& addr);

enum class NodeKind : std::uint8_t {
    scada,
    rtu,
    switch_device,
    firewall,
    terminal_server,
    attacker,
};

enum class Zone : std::uint8_t { ot, company, internet };

const char* to_string(NodeKind k);
const char* to_string(Zone z);
std::optional<NodeKind> node_kind_from_string(const std::string& s);
std::optional<Zone> zone_from_string(const std::string& s);

struct TopologyNode {
    DeviceId id;
    NodeKind kind = NodeKind::scada;
    Zone zone = Zone::ot;
    L2Addr l2;
    L3Addr l3;
};

struct Link {
    std::string id;
    DeviceId a;
    DeviceId b;
    SimTimeMs latency_ms = 1;
    bool up = true;
};

enum class PacketKind : std::uint8_t {
    connect_request,
    connect_accept,
    data,
    disconnect,
    probe,
};

const char* to_string(PacketKind k);
std::optional<PacketKind> packet_kind_from_string(const std::string& s);

struct Packet {
    std::uint64_t packet_id = 0;  // assigned on send, stable across taps
    L2Addr src_l2, dst_l2;
    L3Addr src_l3, dst_l3;
    std::uint16_t src_port = 0, dst_port = 0;
    PacketKind kind = PacketKind::data;
    std::vector<std::uint8_t> payload;  // telecontrol frame for `data` packets
};

struct FirewallRule {
    std::string src;   // L3 pattern
    std::string dst;   // L3 pattern
    std::string port;  // destination port or "*"
    bool allow = false;
};

struct TopologySpec {
    std::vector<TopologyNode> nodes;
    std::vector<Link> links;
    // Rules per forwarding node, evaluated top-down; no match means deny.
    std::map<DeviceId, std::vector<FirewallRule>> firewall_rules;
    std::vector<DeviceId> taps;  // nodes with a passive mirror port

    const TopologyNode* find_node(const DeviceId& id) const;
    const TopologyNode* find_by_l3(const L3Addr& addr) const;
};

class NetworkError : public std::runtime_error {
public:
    enum class Code { duplicate_address, dangling_reference, invalid_spec };
    NetworkError(Code code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

enum class DropReason : std::uint8_t { firewall, link_down, no_route };
const char* to_string(DropReason r);
std::optional<DropReason> drop_reason_from_string(const std::string& s);

struct Delivery {
    SimTimeMs t_ms = 0;
    DeviceId at;
    Packet packet;
};

struct Tapped {
    SimTimeMs t_ms = 0;
    DeviceId at;
    Packet packet;
};

struct Dropped {
    SimTimeMs t_ms = 0;
    DeviceId at;
    DropReason reason = DropReason::no_route;
    Packet packet;
};

struct LinkChanged {
    SimTimeMs t_ms = 0;
    std::string link_id;
    bool up = true;
};

using NetEvent = std::variant<Delivery, Tapped, Dropped, LinkChanged>;

SimTimeMs event_time(const NetEvent& e);

// Rewrites packet payloads while they cross one link inside a time window.
// The hook sees the packet after any earlier mutator already ran, together
// with the time the packet enters the link; a hook may reentrantly send
// follow-on packets (e.g. mirrored copies).
struct PayloadMutator {
    std::string link_id;
    SimTimeMs from_ms = 0;
    SimTimeMs to_ms = 0;  // exclusive
    std::function<void(Packet&, SimTimeMs)> apply;
};

class Network {
public:
    explicit Network(TopologySpec spec);  // validates, throws NetworkError

    const TopologySpec& spec() const { return spec_; }

    // Injects a packet at `from`. The whole path outcome (taps, drop or
    // delivery) is scheduled immediately; events surface via run_until.
    std::uint64_t send(const DeviceId& from, Packet packet, SimTimeMs t_ms);

    void set_link_state(const std::string& link_id, bool up, SimTimeMs t_ms);

    int install_mutator(PayloadMutator m);
    void remove_mutator(int id);

    // Marks the connection 4-tuple established (both directions). The engine
    // calls this when a connect_accept is delivered.
    void note_established(const L3Addr& a, std::uint16_t ap, const L3Addr& b,
                          std::uint16_t bp);
    bool is_established(const L3Addr& src, std::uint16_t sp, const L3Addr& dst,
                        std::uint16_t dp) const;

    // Pops every event with time <= t in (time, insertion) order and hands it
    // to `sink`. The sink may reentrantly call send(); newly scheduled events
    // inside the window are processed in the same call.
    void run_until(SimTimeMs t_ms, const std::function<void(const NetEvent&)>& sink);

    bool link_is_up(const std::string& link_id) const;

private:
    struct Scheduled {
        SimTimeMs t_ms;
        std::uint64_t seq;
        NetEvent event;
    };
    struct ScheduledAfter {
        bool operator()(const Scheduled& a, const Scheduled& b) const {
            return a.t_ms != b.t_ms ? a.t_ms > b.t_ms : a.seq > b.seq;
        }
    };

    void schedule(SimTimeMs t_ms, NetEvent e);
    std::vector<std::size_t> path_to(std::size_t from, std::size_t to) const;
    bool firewall_permits(const DeviceId& node, const Packet& p) const;

    TopologySpec spec_;
    std::map<DeviceId, std::size_t> node_index_;
    std::map<std::string, std::size_t> link_index_;
    // next_hop_[a][b] = link index of the first hop from node a towards b.
    std::vector<std::vector<int>> next_hop_link_;
    std::priority_queue<Scheduled, std::vector<Scheduled>, ScheduledAfter> queue_;
    std::uint64_t next_seq_ = 0;
    std::uint64_t next_packet_id_ = 1;
    std::map<int, PayloadMutator> mutators_;
    int next_mutator_id_ = 1;
    std::vector<std::tuple<L3Addr, std::uint16_t, L3Addr, std::uint16_t>> established_;
};

}  // namespace otlab::net
