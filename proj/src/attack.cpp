#include "otlab/attack.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace otlab::attack {

const char* to_string(Kind k) {
    switch (k) {
        case Kind::network_scan: return "network-scan";
        case Kind::unauthorized_connect: return "unauthorized-connect";
        case Kind::false_data_injection: return "false-data-injection";
        case Kind::rogue_command: return "rogue-command";
        case Kind::config_tamper: return "config-tamper";
        case Kind::cover_up: return "cover-up";
        case Kind::traffic_copy: return "traffic-copy";
    }
    return "?";
}

std::optional<Kind> kind_from_string(const std::string& s) {
    for (Kind k : {Kind::network_scan, Kind::unauthorized_connect,
                   Kind::false_data_injection, Kind::rogue_command,
                   Kind::config_tamper, Kind::cover_up, Kind::traffic_copy}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

const char* to_string(FdiParams::Mode m) {
    switch (m) {
        case FdiParams::Mode::offset: return "offset";
        case FdiParams::Mode::replace: return "replace";
        case FdiParams::Mode::freeze: return "freeze";
    }
    return "?";
}

std::optional<FdiParams::Mode> fdi_mode_from_string(const std::string& s) {
    for (auto m : {FdiParams::Mode::offset, FdiParams::Mode::replace,
                   FdiParams::Mode::freeze}) {
        if (s == to_string(m)) return m;
    }
    return std::nullopt;
}

namespace {

[[noreturn]] void fail(const Action& a, const std::string& what) {
    throw std::runtime_error("attack '" + a.id + "': " + what);
}

bool has_link(const net::TopologySpec& topo, const std::string& id) {
    return std::any_of(topo.links.begin(), topo.links.end(),
                       [&](const net::Link& l) { return l.id == id; });
}

void require_node(const Action& a, const net::TopologySpec& topo,
                  const DeviceId& id, const std::string& role) {
    if (!topo.find_node(id)) fail(a, role + " '" + id + "' is not a topology node");
}

}  // namespace

void validate_action(const Action& a, const net::TopologySpec& topo,
                     const grid::GridNetwork& gridnet,
                     const grid::DatapointMap& datapoints, SimTimeMs duration_ms,
                     std::vector<std::string>& warnings) {
    if (a.id.empty()) throw std::runtime_error("attack with empty id");
    if (a.start_ms < 0) fail(a, "negative start time");
    // Windowed injections that miss the run entirely are a harmless no-op and
    // only warrant a warning; everything else starting after the end of the
    // run is a configuration mistake.
    if (a.start_ms > duration_ms && a.kind != Kind::false_data_injection)
        fail(a, "starts after the end of the run (" + std::to_string(a.start_ms) +
                    " > " + std::to_string(duration_ms) + " ms)");

    switch (a.kind) {
        case Kind::network_scan: {
            const auto& p = std::get<ScanParams>(a.params);
            require_node(a, topo, p.attacker, "attacker");
            if (p.ports.empty()) fail(a, "empty port list");
            if (!(p.rate_per_second > 0.0)) fail(a, "probe rate must be positive");
            if (expand_scan(p, topo, a.start_ms).empty())
                fail(a, "target pattern '" + p.targets + "' matches no hosts");
            break;
        }
        case Kind::unauthorized_connect: {
            const auto& p = std::get<UnauthorizedConnectParams>(a.params);
            require_node(a, topo, p.attacker, "attacker");
            require_node(a, topo, p.target, "target");
            if (p.spoof_as) require_node(a, topo, *p.spoof_as, "spoofed identity");
            break;
        }
        case Kind::false_data_injection: {
            const auto& p = std::get<FdiParams>(a.params);
            if (!has_link(topo, p.link_id))
                fail(a, "link '" + p.link_id + "' is not in the topology");
            if (p.ioas.empty() && p.mode != FdiParams::Mode::freeze)
                fail(a, "no target ioas");
            for (std::uint32_t ioa : p.ioas)
                if (!datapoints.find_measurement(ioa))
                    fail(a, "ioa " + std::to_string(ioa) + " is not a measurement");
            if (p.end_ms <= a.start_ms)
                fail(a, "window end must be after start");
            if (a.start_ms > duration_ms || p.end_ms <= 0)
                warnings.push_back("attack '" + a.id +
                                   "': injection window lies outside the run; no effect");
            break;
        }
        case Kind::rogue_command: {
            const auto& p = std::get<RogueCommandParams>(a.params);
            require_node(a, topo, p.attacker, "attacker");
            require_node(a, topo, p.target, "target");
            const auto* cp = datapoints.find_command(p.command_ioa);
            if (!cp) fail(a, "ioa " + std::to_string(p.command_ioa) + " is not a command point");
            if (cp->rtu != p.target)
                fail(a, "command ioa " + std::to_string(p.command_ioa) +
                            " belongs to '" + cp->rtu + "', not '" + p.target + "'");
            if (p.is_setpoint != (cp->kind == grid::CommandKind::setpoint))
                fail(a, "command ioa kind mismatch");
            break;
        }
        case Kind::config_tamper: {
            const auto& p = std::get<ConfigTamperParams>(a.params);
            require_node(a, topo, p.rtu, "device");
            if (!p.scaling_ioa && !p.enter_maintenance)
                fail(a, "no effect configured (need scaling and/or maintenance)");
            if (p.scaling_ioa) {
                const auto* mp = datapoints.find_measurement(*p.scaling_ioa);
                if (!mp) fail(a, "ioa " + std::to_string(*p.scaling_ioa) + " is not a measurement");
                if (mp->rtu != p.rtu)
                    fail(a, "ioa " + std::to_string(*p.scaling_ioa) + " is not reported by '" + p.rtu + "'");
                if (p.scaling_factor == 1.0)
                    warnings.push_back("attack '" + a.id + "': scaling factor 1.0 has no effect");
            }
            break;
        }
        case Kind::cover_up: {
            const auto& p = std::get<CoverUpParams>(a.params);
            require_node(a, topo, p.rtu, "device");
            gridnet.asset_index(p.asset_id);  // throws on unknown asset
            if (p.falsified_ioas.empty()) fail(a, "no falsified ioas");
            for (std::uint32_t ioa : p.falsified_ioas) {
                const auto* mp = datapoints.find_measurement(ioa);
                if (!mp) fail(a, "ioa " + std::to_string(ioa) + " is not a measurement");
                // Falsification happens inside the device, so it can only touch
                // points that device itself reports.
                if (mp->rtu != p.rtu)
                    fail(a, "inconsistent parameters: ioa " + std::to_string(ioa) +
                                " is reported by '" + mp->rtu + "', not by compromised '" +
                                p.rtu + "'");
            }
            const auto& asset = gridnet.assets[gridnet.asset_index(p.asset_id)];
            if (p.forced_setpoint_pu < asset.p_min_pu || p.forced_setpoint_pu > asset.p_max_pu)
                warnings.push_back("attack '" + a.id +
                                   "': forced setpoint outside asset capability; the device will clamp");
            if (p.end_ms <= a.start_ms) fail(a, "window end must be after start");
            break;
        }
        case Kind::traffic_copy: {
            const auto& p = std::get<TrafficCopyParams>(a.params);
            if (!has_link(topo, p.link_id))
                fail(a, "link '" + p.link_id + "' is not in the topology");
            require_node(a, topo, p.collector, "collector");
            if (p.end_ms <= a.start_ms) fail(a, "window end must be after start");
            break;
        }
    }
}

std::vector<Probe> expand_scan(const ScanParams& p, const net::TopologySpec& topo,
                               SimTimeMs start_ms) {
    std::set<net::L3Addr> targets;
    for (const auto& n : topo.nodes) {
        if (n.id == p.attacker) continue;
        if (net::l3_matches(p.targets, n.l3)) targets.insert(n.l3);
    }
    std::vector<Probe> out;
    const double gap_ms = 1000.0 / p.rate_per_second;
    std::size_t i = 0;
    for (const auto& dst : targets) {
        for (std::uint16_t port : p.ports) {
            Probe pr;
            pr.t_ms = start_ms + static_cast<SimTimeMs>(std::llround(gap_ms * static_cast<double>(i)));
            pr.dst = dst;
            pr.port = port;
            out.push_back(pr);
            ++i;
        }
    }
    return out;
}

}  // namespace otlab::attack
