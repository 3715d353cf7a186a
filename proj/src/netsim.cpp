#include "otlab/netsim.hpp"

#include <algorithm>
#include <charconv>
#include <deque>
#include <set>
#include <sstream>

namespace otlab::net {

namespace {

std::optional<std::uint8_t> parse_octet(const std::string& s, int base) {
    if (s.empty() || s.size() > 3) return std::nullopt;
    unsigned value = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), value, base);
    if (ec != std::errc() || p != s.data() + s.size() || value > 0xFF)
        return std::nullopt;
    return static_cast<std::uint8_t>(value);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(cur);
    return parts;
}

}  // namespace

std::string to_string(const L2Addr& a) {
    char buf[18];
    std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", a.octets[0],
                  a.octets[1], a.octets[2], a.octets[3], a.octets[4], a.octets[5]);
    return buf;
}

std::string to_string(const L3Addr& a) {
    std::ostringstream os;
    os << int(a.octets[0]) << '.' << int(a.octets[1]) << '.' << int(a.octets[2])
       << '.' << int(a.octets[3]);
    return os.str();
}

std::optional<L2Addr> l2_from_string(const std::string& s) {
    auto parts = split(s, ':');
    if (parts.size() != 6) return std::nullopt;
    L2Addr a;
    for (std::size_t i = 0; i < 6; ++i) {
        auto o = parse_octet(parts[i], 16);
        if (!o) return std::nullopt;
        a.octets[i] = *o;
    }
    return a;
}

std::optional<L3Addr> l3_from_string(const std::string& s) {
    auto parts = split(s, '.');
    if (parts.size() != 4) return std::nullopt;
    L3Addr a;
    for (std::size_t i = 0; i < 4; ++i) {
        auto o = parse_octet(parts[i], 10);
        if (!o) return std::nullopt;
        a.octets[i] = *o;
    }
    return a;
}

bool l3_matches(const std::string& pattern, const L3Addr& addr) {
    if (pattern == "*") return true;
    auto parts = split(pattern, '.');
    if (parts.size() != 4) return false;
    for (std::size_t i = 0; i < 4; ++i) {
        if (parts[i] == "*") continue;
        auto o = parse_octet(parts[i], 10);
        if (!o || *o != addr.octets[i]) return false;
    }
    return true;
}

const char* to_string(NodeKind k) {
    switch (k) {
        case NodeKind::scada: return "scada";
        case NodeKind::rtu: return "rtu";
        case NodeKind::switch_device: return "switch";
        case NodeKind::firewall: return "firewall";
        case NodeKind::terminal_server: return "terminal-server";
        case NodeKind::attacker: return "attacker";
    }
    return "?";
}

std::optional<NodeKind> node_kind_from_string(const std::string& s) {
    if (s == "scada") return NodeKind::scada;
    if (s == "rtu") return NodeKind::rtu;
    if (s == "switch") return NodeKind::switch_device;
    if (s == "firewall") return NodeKind::firewall;
    if (s == "terminal-server") return NodeKind::terminal_server;
    if (s == "attacker") return NodeKind::attacker;
    return std::nullopt;
}

const char* to_string(Zone z) {
    switch (z) {
        case Zone::ot: return "ot";
        case Zone::company: return "company";
        case Zone::internet: return "internet";
    }
    return "?";
}

std::optional<Zone> zone_from_string(const std::string& s) {
    if (s == "ot") return Zone::ot;
    if (s == "company") return Zone::company;
    if (s == "internet") return Zone::internet;
    return std::nullopt;
}

const char* to_string(PacketKind k) {
    switch (k) {
        case PacketKind::connect_request: return "connect-request";
        case PacketKind::connect_accept: return "connect-accept";
        case PacketKind::data: return "data";
        case PacketKind::disconnect: return "disconnect";
        case PacketKind::probe: return "probe";
    }
    return "?";
}

std::optional<PacketKind> packet_kind_from_string(const std::string& s) {
    if (s == "connect-request") return PacketKind::connect_request;
    if (s == "connect-accept") return PacketKind::connect_accept;
    if (s == "data") return PacketKind::data;
    if (s == "disconnect") return PacketKind::disconnect;
    if (s == "probe") return PacketKind::probe;
    return std::nullopt;
}

const char* to_string(DropReason r) {
    switch (r) {
        case DropReason::firewall: return "firewall";
        case DropReason::link_down: return "link-down";
        case DropReason::no_route: return "no-route";
    }
    return "?";
}

std::optional<DropReason> drop_reason_from_string(const std::string& s) {
    if (s == "firewall") return DropReason::firewall;
    if (s == "link-down") return DropReason::link_down;
    if (s == "no-route") return DropReason::no_route;
    return std::nullopt;
}

SimTimeMs event_time(const NetEvent& e) {
    return std::visit([](const auto& ev) { return ev.t_ms; }, e);
}

const TopologyNode* TopologySpec::find_node(const DeviceId& id) const {
    for (const auto& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

const TopologyNode* TopologySpec::find_by_l3(const L3Addr& addr) const {
    // Deterministic on ambiguity: lowest node id wins.
    const TopologyNode* best = nullptr;
    for (const auto& n : nodes)
        if (n.l3 == addr && (!best || n.id < best->id)) best = &n;
    return best;
}

Network::Network(TopologySpec spec) : spec_(std::move(spec)) {
    for (std::size_t i = 0; i < spec_.nodes.size(); ++i) {
        if (!node_index_.emplace(spec_.nodes[i].id, i).second)
            throw NetworkError(NetworkError::Code::invalid_spec,
                               "duplicate node id '" + spec_.nodes[i].id + "'");
    }
    // L3 addresses must be unique within a zone (spoofing forges the source
    // field of a packet, not the node table).
    std::set<std::pair<int, L3Addr>> seen_l3;
    std::set<L2Addr> seen_l2;
    for (const auto& n : spec_.nodes) {
        if (!seen_l3.insert({static_cast<int>(n.zone), n.l3}).second)
            throw NetworkError(NetworkError::Code::duplicate_address,
                               "address " + to_string(n.l3) +
                                   " assigned twice in zone " + to_string(n.zone));
        if (!seen_l2.insert(n.l2).second)
            throw NetworkError(NetworkError::Code::duplicate_address,
                               "hardware address " + to_string(n.l2) +
                                   " assigned twice");
    }
    for (std::size_t i = 0; i < spec_.links.size(); ++i) {
        const auto& l = spec_.links[i];
        if (!link_index_.emplace(l.id, i).second)
            throw NetworkError(NetworkError::Code::invalid_spec,
                               "duplicate link id '" + l.id + "'");
        if (!node_index_.count(l.a) || !node_index_.count(l.b))
            throw NetworkError(NetworkError::Code::dangling_reference,
                               "link '" + l.id + "' references an unknown node");
        if (l.latency_ms < 0)
            throw NetworkError(NetworkError::Code::invalid_spec,
                               "link '" + l.id + "' has negative latency");
    }
    for (const auto& [node, rules] : spec_.firewall_rules) {
        if (!node_index_.count(node))
            throw NetworkError(NetworkError::Code::dangling_reference,
                               "firewall rules reference unknown node '" + node +
                                   "'");
        (void)rules;
    }
    for (const auto& tap : spec_.taps) {
        if (!node_index_.count(tap))
            throw NetworkError(NetworkError::Code::dangling_reference,
                               "tap references unknown node '" + tap + "'");
    }

    // All-pairs next hop by BFS from every node, neighbours visited in
    // (node id, link id) order so routing is deterministic.
    const std::size_t n = spec_.nodes.size();
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n);
    for (std::size_t e = 0; e < spec_.links.size(); ++e) {
        adj[node_index_[spec_.links[e].a]].push_back({node_index_[spec_.links[e].b], e});
        adj[node_index_[spec_.links[e].b]].push_back({node_index_[spec_.links[e].a], e});
    }
    for (auto& neigh : adj) {
        std::sort(neigh.begin(), neigh.end(),
                  [this](const auto& x, const auto& y) {
                      const auto& nx = spec_.nodes[x.first].id;
                      const auto& ny = spec_.nodes[y.first].id;
                      if (nx != ny) return nx < ny;
                      return spec_.links[x.second].id < spec_.links[y.second].id;
                  });
    }
    next_hop_link_.assign(n, std::vector<int>(n, -1));
    for (std::size_t src = 0; src < n; ++src) {
        std::vector<int> via(n, -1);  // first link taken from src
        std::vector<bool> seen(n, false);
        std::deque<std::size_t> queue{src};
        seen[src] = true;
        while (!queue.empty()) {
            auto u = queue.front();
            queue.pop_front();
            for (auto [v, e] : adj[u]) {
                if (seen[v]) continue;
                seen[v] = true;
                via[v] = (u == src) ? static_cast<int>(e) : via[u];
                queue.push_back(v);
            }
        }
        next_hop_link_[src] = via;
    }
}

void Network::schedule(SimTimeMs t_ms, NetEvent e) {
    queue_.push(Scheduled{t_ms, next_seq_++, std::move(e)});
}

std::vector<std::size_t> Network::path_to(std::size_t from, std::size_t to) const {
    std::vector<std::size_t> links;
    std::size_t cur = from;
    while (cur != to) {
        const int e = next_hop_link_[cur][to];
        if (e < 0) return {};
        links.push_back(static_cast<std::size_t>(e));
        const auto& l = spec_.links[static_cast<std::size_t>(e)];
        cur = node_index_.at(l.a) == cur ? node_index_.at(l.b) : node_index_.at(l.a);
        if (links.size() > spec_.links.size()) return {};  // safety
    }
    return links;
}

bool Network::firewall_permits(const DeviceId& node, const Packet& p) const {
    auto it = spec_.firewall_rules.find(node);
    if (it == spec_.firewall_rules.end()) return false;  // filtering, no rules
    for (const auto& rule : it->second) {
        if (!l3_matches(rule.src, p.src_l3)) continue;
        if (!l3_matches(rule.dst, p.dst_l3)) continue;
        if (rule.port != "*" && rule.port != std::to_string(p.dst_port)) continue;
        return rule.allow;
    }
    return false;
}

std::uint64_t Network::send(const DeviceId& from, Packet packet, SimTimeMs t_ms) {
    auto fit = node_index_.find(from);
    if (fit == node_index_.end())
        throw NetworkError(NetworkError::Code::dangling_reference,
                           "send from unknown node '" + from + "'");
    packet.packet_id = next_packet_id_++;

    const TopologyNode* dst = spec_.find_by_l3(packet.dst_l3);
    if (!dst) {
        schedule(t_ms, Dropped{t_ms, from, DropReason::no_route, packet});
        return packet.packet_id;
    }
    const std::size_t dst_idx = node_index_.at(dst->id);
    const auto path = path_to(fit->second, dst_idx);
    if (path.empty() && fit->second != dst_idx) {
        schedule(t_ms, Dropped{t_ms, from, DropReason::no_route, packet});
        return packet.packet_id;
    }

    SimTimeMs cursor = t_ms;
    std::size_t at = fit->second;
    for (const auto e : path) {
        const Link& link = spec_.links[e];
        if (!link.up) {
            schedule(cursor, Dropped{cursor, spec_.nodes[at].id,
                                     DropReason::link_down, packet});
            return packet.packet_id;
        }
        for (const auto& [id, m] : mutators_) {
            if (m.link_id == link.id && cursor >= m.from_ms && cursor < m.to_ms)
                m.apply(packet, cursor);
        }
        cursor += link.latency_ms;
        at = node_index_.at(link.a) == at ? node_index_.at(link.b)
                                          : node_index_.at(link.a);
        const DeviceId& here = spec_.nodes[at].id;
        if (std::find(spec_.taps.begin(), spec_.taps.end(), here) !=
            spec_.taps.end())
            schedule(cursor, Tapped{cursor, here, packet});
        if (at == dst_idx) break;
        const bool filters = spec_.nodes[at].kind == NodeKind::firewall ||
                             spec_.firewall_rules.count(here) > 0;
        if (filters && !firewall_permits(here, packet)) {
            schedule(cursor, Dropped{cursor, here, DropReason::firewall, packet});
            return packet.packet_id;
        }
    }
    schedule(cursor, Delivery{cursor, spec_.nodes[dst_idx].id, packet});
    return packet.packet_id;
}

void Network::set_link_state(const std::string& link_id, bool up, SimTimeMs t_ms) {
    auto it = link_index_.find(link_id);
    if (it == link_index_.end())
        throw NetworkError(NetworkError::Code::dangling_reference,
                           "unknown link '" + link_id + "'");
    spec_.links[it->second].up = up;
    schedule(t_ms, LinkChanged{t_ms, link_id, up});
}

bool Network::link_is_up(const std::string& link_id) const {
    auto it = link_index_.find(link_id);
    if (it == link_index_.end())
        throw NetworkError(NetworkError::Code::dangling_reference,
                           "unknown link '" + link_id + "'");
    return spec_.links[it->second].up;
}

int Network::install_mutator(PayloadMutator m) {
    if (!link_index_.count(m.link_id))
        throw NetworkError(NetworkError::Code::dangling_reference,
                           "mutator references unknown link '" + m.link_id + "'");
    const int id = next_mutator_id_++;
    mutators_.emplace(id, std::move(m));
    return id;
}

void Network::remove_mutator(int id) { mutators_.erase(id); }

void Network::note_established(const L3Addr& a, std::uint16_t ap, const L3Addr& b,
                               std::uint16_t bp) {
    established_.push_back({a, ap, b, bp});
    established_.push_back({b, bp, a, ap});
}

bool Network::is_established(const L3Addr& src, std::uint16_t sp,
                             const L3Addr& dst, std::uint16_t dp) const {
    return std::find(established_.begin(), established_.end(),
                     std::tuple{src, sp, dst, dp}) != established_.end();
}

void Network::run_until(SimTimeMs t_ms,
                        const std::function<void(const NetEvent&)>& sink) {
    while (!queue_.empty() && queue_.top().t_ms <= t_ms) {
        Scheduled ev = queue_.top();
        queue_.pop();
        sink(ev.event);
    }
}

}  // namespace otlab::net
