#include "otlab/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace otlab::scenario {

using sim::json;

const char* to_string(ScheduleEntry::Kind k) {
    switch (k) {
        case ScheduleEntry::Kind::setpoint: return "setpoint";
        case ScheduleEntry::Kind::breaker: return "breaker";
        case ScheduleEntry::Kind::interrogation: return "interrogation";
        case ScheduleEntry::Kind::trip: return "trip";
        case ScheduleEntry::Kind::link: return "link";
    }
    return "?";
}

std::optional<ScheduleEntry::Kind> schedule_kind_from_string(const std::string& s) {
    for (auto k : {ScheduleEntry::Kind::setpoint, ScheduleEntry::Kind::breaker,
                   ScheduleEntry::Kind::interrogation, ScheduleEntry::Kind::trip,
                   ScheduleEntry::Kind::link}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

const RtuSpec* Scenario::find_rtu(const DeviceId& id) const {
    for (const auto& r : rtus)
        if (r.id == id) return &r;
    return nullptr;
}

std::vector<mon::DeviceSpec> Scenario::device_specs() const {
    std::vector<mon::DeviceSpec> out;
    for (const auto& r : rtus)
        out.push_back(mon::DeviceSpec{r.id, r.uplink_link_id, r.status_ioa});
    return out;
}

// --- YAML -> JSON bridge ----------------------------------------------------
//
// Scenario files are parsed through a single JSON-shaped reader; YAML input
// is converted first. Scalars become bool / integer / double only when the
// full token parses as one, so addresses like "10.0.2.1" stay strings.

namespace {

json yaml_scalar_to_json(const std::string& s) {
    if (s == "true") return json(true);
    if (s == "false") return json(false);
    if (s == "null" || s == "~") return json(nullptr);
    {
        long long v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec == std::errc{} && p == s.data() + s.size()) return json(v);
    }
    {
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec == std::errc{} && p == s.data() + s.size()) return json(v);
    }
    return json(s);
}

json yaml_to_json(const YAML::Node& n) {
    switch (n.Type()) {
        case YAML::NodeType::Null:
        case YAML::NodeType::Undefined:
            return json(nullptr);
        case YAML::NodeType::Scalar:
            // Quoted scalars stay strings even when they look like numbers.
            if (n.Tag() == "!") return json(n.Scalar());
            return yaml_scalar_to_json(n.Scalar());
        case YAML::NodeType::Sequence: {
            json arr = json::array();
            for (const auto& item : n) arr.push_back(yaml_to_json(item));
            return arr;
        }
        case YAML::NodeType::Map: {
            json obj = json::object();
            for (const auto& kv : n) obj[kv.first.Scalar()] = yaml_to_json(kv.second);
            return obj;
        }
    }
    return json(nullptr);
}

// --- Typed field access -----------------------------------------------------

[[noreturn]] void bail(const std::string& path, const std::string& what) {
    throw ScenarioError("scenario: " + path + ": " + what);
}

const json& req_field(const json& j, const std::string& path, const char* key) {
    if (!j.is_object()) bail(path, "expected a mapping");
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) bail(path, std::string("missing '") + key + "'");
    return *it;
}

std::string req_str(const json& j, const std::string& path, const char* key) {
    const json& v = req_field(j, path, key);
    if (!v.is_string()) bail(path + "." + key, "expected a string");
    return v.get<std::string>();
}

double req_num(const json& j, const std::string& path, const char* key) {
    const json& v = req_field(j, path, key);
    if (!v.is_number()) bail(path + "." + key, "expected a number");
    return v.get<double>();
}

std::int64_t req_int(const json& j, const std::string& path, const char* key) {
    const json& v = req_field(j, path, key);
    if (!v.is_number_integer()) bail(path + "." + key, "expected an integer");
    return v.get<std::int64_t>();
}

bool req_bool(const json& j, const std::string& path, const char* key) {
    const json& v = req_field(j, path, key);
    if (!v.is_boolean()) bail(path + "." + key, "expected true/false");
    return v.get<bool>();
}

bool has(const json& j, const char* key) {
    if (!j.is_object()) return false;
    auto it = j.find(key);
    return it != j.end() && !it->is_null();
}

double opt_num(const json& j, const std::string& path, const char* key, double d) {
    return has(j, key) ? req_num(j, path, key) : d;
}

std::int64_t opt_int(const json& j, const std::string& path, const char* key,
                     std::int64_t d) {
    return has(j, key) ? req_int(j, path, key) : d;
}

bool opt_bool(const json& j, const std::string& path, const char* key, bool d) {
    return has(j, key) ? req_bool(j, path, key) : d;
}

std::string opt_str(const json& j, const std::string& path, const char* key,
                    const std::string& d) {
    return has(j, key) ? req_str(j, path, key) : d;
}

const json& req_array(const json& j, const std::string& path, const char* key) {
    const json& v = req_field(j, path, key);
    if (!v.is_array()) bail(path + "." + key, "expected a list");
    return v;
}

std::string at(const std::string& path, const char* key, std::size_t i) {
    return path + "." + key + "[" + std::to_string(i) + "]";
}

// --- Section parsers --------------------------------------------------------

net::L2Addr parse_l2(const json& j, const std::string& path, const char* key) {
    std::string s = req_str(j, path, key);
    auto a = net::l2_from_string(s);
    if (!a) bail(path + "." + key, "invalid hardware address '" + s + "'");
    return *a;
}

net::L3Addr parse_l3(const json& j, const std::string& path, const char* key) {
    std::string s = req_str(j, path, key);
    auto a = net::l3_from_string(s);
    if (!a) bail(path + "." + key, "invalid network address '" + s + "'");
    return *a;
}

net::TopologySpec parse_topology(const json& j, const std::string& path) {
    net::TopologySpec topo;
    const json& nodes = req_array(j, path, "nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const json& n = nodes[i];
        std::string p = at(path, "nodes", i);
        net::TopologyNode node;
        node.id = req_str(n, p, "id");
        std::string kind = req_str(n, p, "kind");
        auto k = net::node_kind_from_string(kind);
        if (!k) bail(p + ".kind", "unknown node kind '" + kind + "'");
        node.kind = *k;
        std::string zone = opt_str(n, p, "zone", "ot");
        auto z = net::zone_from_string(zone);
        if (!z) bail(p + ".zone", "unknown zone '" + zone + "'");
        node.zone = *z;
        node.l2 = parse_l2(n, p, "l2");
        node.l3 = parse_l3(n, p, "l3");
        topo.nodes.push_back(node);
    }
    const json& links = req_array(j, path, "links");
    for (std::size_t i = 0; i < links.size(); ++i) {
        const json& l = links[i];
        std::string p = at(path, "links", i);
        net::Link link;
        link.id = req_str(l, p, "id");
        link.a = req_str(l, p, "a");
        link.b = req_str(l, p, "b");
        link.latency_ms = opt_int(l, p, "latencyMs", 1);
        link.up = opt_bool(l, p, "up", true);
        if (link.latency_ms <= 0) bail(p + ".latencyMs", "must be positive");
        topo.links.push_back(link);
    }
    if (has(j, "taps")) {
        const json& taps = req_array(j, path, "taps");
        for (std::size_t i = 0; i < taps.size(); ++i) {
            if (!taps[i].is_string()) bail(at(path, "taps", i), "expected a node id");
            topo.taps.push_back(taps[i].get<std::string>());
        }
    }
    if (has(j, "firewalls")) {
        const json& fws = req_array(j, path, "firewalls");
        for (std::size_t i = 0; i < fws.size(); ++i) {
            const json& f = fws[i];
            std::string p = at(path, "firewalls", i);
            std::string node = req_str(f, p, "node");
            std::vector<net::FirewallRule> rules;
            if (has(f, "rules")) {
                const json& rj = req_array(f, p, "rules");
                for (std::size_t r = 0; r < rj.size(); ++r) {
                    std::string rp = at(p, "rules", r);
                    net::FirewallRule rule;
                    rule.src = req_str(rj[r], rp, "src");
                    rule.dst = req_str(rj[r], rp, "dst");
                    const json& port = req_field(rj[r], rp, "port");
                    rule.port = port.is_string() ? port.get<std::string>()
                                                 : std::to_string(port.get<std::int64_t>());
                    rule.allow = req_bool(rj[r], rp, "allow");
                    rules.push_back(rule);
                }
            }
            topo.firewall_rules[node] = std::move(rules);
        }
    }
    return topo;
}

grid::GridNetwork parse_grid(const json& j, const std::string& path) {
    grid::GridNetwork g;
    g.slack_bus_id = req_str(j, path, "slackBus");
    const json& buses = req_array(j, path, "buses");
    for (std::size_t i = 0; i < buses.size(); ++i) {
        std::string p = at(path, "buses", i);
        grid::Bus b;
        b.id = req_str(buses[i], p, "id");
        b.nominal_kv = opt_num(buses[i], p, "nominalKv", 10.0);
        g.buses.push_back(b);
    }
    const json& branches = req_array(j, path, "branches");
    for (std::size_t i = 0; i < branches.size(); ++i) {
        std::string p = at(path, "branches", i);
        grid::Branch b;
        b.id = req_str(branches[i], p, "id");
        b.from_bus = req_str(branches[i], p, "from");
        b.to_bus = req_str(branches[i], p, "to");
        b.reactance_pu = req_num(branches[i], p, "reactancePu");
        b.rating_pu = req_num(branches[i], p, "ratingPu");
        b.breaker_closed = opt_bool(branches[i], p, "closed", true);
        g.branches.push_back(b);
    }
    const json& assets = req_array(j, path, "assets");
    for (std::size_t i = 0; i < assets.size(); ++i) {
        std::string p = at(path, "assets", i);
        grid::Asset a;
        a.id = req_str(assets[i], p, "id");
        a.bus_id = req_str(assets[i], p, "bus");
        std::string kind = req_str(assets[i], p, "kind");
        auto k = grid::asset_kind_from_string(kind);
        if (!k) bail(p + ".kind", "unknown asset kind '" + kind + "'");
        a.kind = *k;
        a.p_min_pu = req_num(assets[i], p, "pMinPu");
        a.p_max_pu = req_num(assets[i], p, "pMaxPu");
        a.p_set_pu = opt_num(assets[i], p, "pSetPu", 0.0);
        g.assets.push_back(a);
    }
    return g;
}

grid::DatapointMap parse_datapoints(const json& j, const std::string& path) {
    grid::DatapointMap map;
    const json& meas = req_array(j, path, "measurements");
    for (std::size_t i = 0; i < meas.size(); ++i) {
        std::string p = at(path, "measurements", i);
        grid::MeasurementPoint m;
        m.ioa = static_cast<std::uint32_t>(req_int(meas[i], p, "ioa"));
        m.rtu = req_str(meas[i], p, "rtu");
        std::string q = req_str(meas[i], p, "quantity");
        auto qq = grid::quantity_from_string(q);
        if (!qq) bail(p + ".quantity", "unknown quantity '" + q + "'");
        m.quantity = *qq;
        m.ref = req_str(meas[i], p, "ref");
        map.measurements.push_back(m);
    }
    const json& cmds = req_array(j, path, "commands");
    for (std::size_t i = 0; i < cmds.size(); ++i) {
        std::string p = at(path, "commands", i);
        grid::CommandPoint c;
        c.ioa = static_cast<std::uint32_t>(req_int(cmds[i], p, "ioa"));
        c.rtu = req_str(cmds[i], p, "rtu");
        std::string kind = req_str(cmds[i], p, "kind");
        if (kind == "setpoint") c.kind = grid::CommandKind::setpoint;
        else if (kind == "breaker") c.kind = grid::CommandKind::breaker;
        else bail(p + ".kind", "unknown command kind '" + kind + "'");
        c.ref = req_str(cmds[i], p, "ref");
        map.commands.push_back(c);
    }
    return map;
}

std::vector<RtuSpec> parse_rtus(const json& arr, const std::string& path) {
    std::vector<RtuSpec> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        std::string p = path + "[" + std::to_string(i) + "]";
        RtuSpec r;
        r.id = req_str(arr[i], p, "id");
        r.common_address = static_cast<std::uint16_t>(req_int(arr[i], p, "commonAddress"));
        r.status_ioa = static_cast<std::uint32_t>(req_int(arr[i], p, "statusIoa"));
        r.uplink_link_id = opt_str(arr[i], p, "uplink", "");
        out.push_back(r);
    }
    return out;
}

std::vector<ScheduleEntry> parse_schedule(const json& arr, const std::string& path) {
    std::vector<ScheduleEntry> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        std::string p = path + "[" + std::to_string(i) + "]";
        ScheduleEntry e;
        e.t_ms = req_int(arr[i], p, "t");
        std::string kind = req_str(arr[i], p, "do");
        auto k = schedule_kind_from_string(kind);
        if (!k) bail(p + ".do", "unknown schedule action '" + kind + "'");
        e.kind = *k;
        switch (e.kind) {
            case ScheduleEntry::Kind::setpoint:
                e.target = req_str(arr[i], p, "target");
                e.value = req_num(arr[i], p, "value");
                break;
            case ScheduleEntry::Kind::breaker:
                e.target = req_str(arr[i], p, "target");
                e.flag = req_bool(arr[i], p, "close");
                break;
            case ScheduleEntry::Kind::interrogation:
                e.target = opt_str(arr[i], p, "target", "");
                break;
            case ScheduleEntry::Kind::trip:
                e.target = req_str(arr[i], p, "target");
                break;
            case ScheduleEntry::Kind::link:
                e.target = req_str(arr[i], p, "target");
                e.flag = req_bool(arr[i], p, "up");
                break;
        }
        out.push_back(e);
    }
    return out;
}

attack::Action parse_attack(const json& a, const std::string& p) {
    attack::Action act;
    act.id = req_str(a, p, "id");
    std::string kind = req_str(a, p, "kind");
    auto k = attack::kind_from_string(kind);
    if (!k) bail(p + ".kind", "unknown attack kind '" + kind + "'");
    act.kind = *k;
    act.start_ms = req_int(a, p, "startMs");
    switch (act.kind) {
        case attack::Kind::network_scan: {
            attack::ScanParams sp;
            sp.attacker = req_str(a, p, "attacker");
            sp.targets = req_str(a, p, "targets");
            const json& ports = req_array(a, p, "ports");
            for (std::size_t i = 0; i < ports.size(); ++i)
                sp.ports.push_back(static_cast<std::uint16_t>(ports[i].get<std::int64_t>()));
            sp.rate_per_second = opt_num(a, p, "ratePerSecond", 10.0);
            act.params = sp;
            break;
        }
        case attack::Kind::unauthorized_connect: {
            attack::UnauthorizedConnectParams up;
            up.attacker = req_str(a, p, "attacker");
            up.target = req_str(a, p, "target");
            up.port = static_cast<std::uint16_t>(opt_int(a, p, "port", 2404));
            if (has(a, "spoofAs")) up.spoof_as = req_str(a, p, "spoofAs");
            act.params = up;
            break;
        }
        case attack::Kind::false_data_injection: {
            attack::FdiParams fp;
            fp.link_id = req_str(a, p, "link");
            const json& ioas = req_array(a, p, "ioas");
            for (std::size_t i = 0; i < ioas.size(); ++i)
                fp.ioas.push_back(static_cast<std::uint32_t>(ioas[i].get<std::int64_t>()));
            std::string mode = req_str(a, p, "mode");
            auto m = attack::fdi_mode_from_string(mode);
            if (!m) bail(p + ".mode", "unknown injection mode '" + mode + "'");
            fp.mode = *m;
            fp.amount = opt_num(a, p, "amount", 0.0);
            fp.end_ms = req_int(a, p, "endMs");
            act.params = fp;
            break;
        }
        case attack::Kind::rogue_command: {
            attack::RogueCommandParams rp;
            rp.attacker = req_str(a, p, "attacker");
            rp.target = req_str(a, p, "target");
            rp.command_ioa = static_cast<std::uint32_t>(req_int(a, p, "ioa"));
            if (has(a, "setpointValue")) {
                rp.is_setpoint = true;
                rp.setpoint_value = req_num(a, p, "setpointValue");
            } else {
                rp.is_setpoint = false;
                rp.breaker_close = req_bool(a, p, "breakerClose");
            }
            act.params = rp;
            break;
        }
        case attack::Kind::config_tamper: {
            attack::ConfigTamperParams cp;
            cp.rtu = req_str(a, p, "rtu");
            if (has(a, "scaling")) {
                const json& s = req_field(a, p, "scaling");
                cp.scaling_ioa = static_cast<std::uint32_t>(req_int(s, p + ".scaling", "ioa"));
                cp.scaling_factor = req_num(s, p + ".scaling", "factor");
            }
            cp.enter_maintenance = opt_bool(a, p, "maintenance", false);
            act.params = cp;
            break;
        }
        case attack::Kind::cover_up: {
            attack::CoverUpParams cp;
            cp.rtu = req_str(a, p, "rtu");
            cp.asset_id = req_str(a, p, "asset");
            cp.forced_setpoint_pu = req_num(a, p, "forcedSetpointPu");
            const json& ioas = req_array(a, p, "falsifiedIoas");
            for (std::size_t i = 0; i < ioas.size(); ++i)
                cp.falsified_ioas.push_back(
                    static_cast<std::uint32_t>(ioas[i].get<std::int64_t>()));
            cp.end_ms = req_int(a, p, "endMs");
            act.params = cp;
            break;
        }
        case attack::Kind::traffic_copy: {
            attack::TrafficCopyParams tp;
            tp.link_id = req_str(a, p, "link");
            tp.collector = req_str(a, p, "collector");
            tp.collector_port = static_cast<std::uint16_t>(opt_int(a, p, "collectorPort", 40000));
            tp.end_ms = req_int(a, p, "endMs");
            act.params = tp;
            break;
        }
    }
    return act;
}

Scenario parse_scenario(const json& j) {
    Scenario s;
    s.name = req_str(j, "$", "name");
    s.seed = static_cast<std::uint64_t>(opt_int(j, "$", "seed", 1));
    s.duration_ms = req_int(j, "$", "durationMs");
    s.reporting_period_ms = opt_int(j, "$", "reportingPeriodMs", 1000);
    s.noise_sigma_pu = opt_num(j, "$", "noiseSigmaPu", 0.002);

    s.topology = parse_topology(req_field(j, "$", "topology"), "topology");
    s.grid = parse_grid(req_field(j, "$", "grid"), "grid");
    s.datapoints = parse_datapoints(req_field(j, "$", "datapoints"), "datapoints");
    s.rtus = parse_rtus(req_array(j, "$", "rtus"), "rtus");

    if (has(j, "profile")) {
        const json& p = req_field(j, "$", "profile");
        s.profile.step_ms = opt_int(p, "profile", "stepMs", 60000);
        const json& scale = req_array(p, "profile", "scale");
        for (std::size_t i = 0; i < scale.size(); ++i)
            s.profile.scale.push_back(scale[i].get<double>());
    } else {
        s.profile.scale = {1.0};
    }

    if (has(j, "schedule"))
        s.schedule = parse_schedule(req_array(j, "$", "schedule"), "schedule");
    if (has(j, "attacks")) {
        const json& arr = req_array(j, "$", "attacks");
        for (std::size_t i = 0; i < arr.size(); ++i)
            s.attacks.push_back(parse_attack(arr[i], at("$", "attacks", i)));
    }

    if (has(j, "detection")) {
        const json& d = req_field(j, "$", "detection");
        s.detection.model.residual_threshold_pu =
            opt_num(d, "detection", "residualThresholdPu", 0.05);
        s.detection.model.stale_after_ms = opt_int(d, "detection", "staleAfterMs", 5000);
        s.detection.scan_distinct_targets =
            static_cast<int>(opt_int(d, "detection", "scanDistinctTargets", 10));
        s.detection.scan_window_ms = opt_int(d, "detection", "scanWindowMs", 5000);
        s.detection.dedup_window_ms = opt_int(d, "detection", "dedupWindowMs", 10000);
    }
    s.detection.reporting_period_ms = s.reporting_period_ms;

    if (has(j, "monitoring")) {
        const json& m = req_field(j, "$", "monitoring");
        s.monitoring.heartbeat_period_ms =
            opt_int(m, "monitoring", "heartbeatPeriodMs", 10000);
        s.monitoring.missed_heartbeats =
            static_cast<int>(opt_int(m, "monitoring", "missedHeartbeats", 3));
        s.monitoring.flow_epsilon_pu = opt_num(m, "monitoring", "flowEpsilonPu", 0.01);
    }

    if (has(j, "correlation")) {
        const json& c = req_field(j, "$", "correlation");
        s.correlation.window_ms = opt_int(c, "correlation", "windowMs", 60000);
        s.correlation.hop_radius =
            static_cast<int>(opt_int(c, "correlation", "hopRadius", 2));
        if (has(c, "weights")) {
            const json& w = req_field(c, "correlation", "weights");
            s.correlation.weight_info = opt_num(w, "correlation.weights", "info", 0.1);
            s.correlation.weight_warning =
                opt_num(w, "correlation.weights", "warning", 0.3);
            s.correlation.weight_critical =
                opt_num(w, "correlation.weights", "critical", 0.6);
        }
        if (has(c, "thresholds")) {
            const json& t = req_field(c, "correlation", "thresholds");
            s.correlation.suspect_threshold =
                opt_num(t, "correlation.thresholds", "suspect", 0.2);
            s.correlation.compromised_threshold =
                opt_num(t, "correlation.thresholds", "compromised", 0.6);
        }
    }

    validate(s);
    return s;
}

}  // namespace

// --- Validation -------------------------------------------------------------

void validate(Scenario& s) {
    s.warnings.clear();
    if (s.duration_ms <= 0) throw ScenarioError("scenario: durationMs must be positive");
    if (s.reporting_period_ms <= 0)
        throw ScenarioError("scenario: reportingPeriodMs must be positive");
    if (s.noise_sigma_pu < 0)
        throw ScenarioError("scenario: noiseSigmaPu must be non-negative");

    try {
        net::Network probe(s.topology);  // full structural validation
    } catch (const net::NetworkError& e) {
        throw ScenarioError(std::string("scenario: topology: ") + e.what());
    }
    try {
        s.grid.validate();
        s.datapoints.validate(s.grid);
    } catch (const grid::GridError& e) {
        throw ScenarioError(std::string("scenario: grid: ") + e.what());
    }

    // Device roster: every roster entry is an RTU node, every RTU node is in
    // the roster, addresses unique, heartbeat points well-formed.
    std::set<DeviceId> roster;
    std::set<std::uint16_t> cas;
    for (auto& r : s.rtus) {
        const auto* node = s.topology.find_node(r.id);
        if (!node) throw ScenarioError("scenario: rtus: '" + r.id + "' is not a topology node");
        if (node->kind != net::NodeKind::rtu)
            throw ScenarioError("scenario: rtus: '" + r.id + "' is not an rtu node");
        if (!roster.insert(r.id).second)
            throw ScenarioError("scenario: rtus: duplicate entry '" + r.id + "'");
        if (r.common_address == 0 || r.common_address == 0xFFFF)
            throw ScenarioError("scenario: rtus: '" + r.id + "': reserved common address");
        if (!cas.insert(r.common_address).second)
            throw ScenarioError("scenario: rtus: duplicate common address " +
                                std::to_string(r.common_address));
        const auto* sp = s.datapoints.find_measurement(r.status_ioa);
        if (!sp || sp->quantity != grid::Quantity::device_status || sp->rtu != r.id)
            throw ScenarioError("scenario: rtus: '" + r.id + "': statusIoa " +
                                std::to_string(r.status_ioa) +
                                " is not a device-status point of that rtu");
        // Uplink: explicit id must exist and touch the node; otherwise derive
        // it as the node's only link.
        std::vector<const net::Link*> touching;
        for (const auto& l : s.topology.links)
            if (l.a == r.id || l.b == r.id) touching.push_back(&l);
        if (r.uplink_link_id.empty()) {
            if (touching.size() != 1)
                throw ScenarioError("scenario: rtus: '" + r.id +
                                    "': uplink is ambiguous, specify it explicitly");
            r.uplink_link_id = touching.front()->id;
        } else {
            bool ok = std::any_of(touching.begin(), touching.end(),
                                  [&](const net::Link* l) { return l->id == r.uplink_link_id; });
            if (!ok)
                throw ScenarioError("scenario: rtus: '" + r.id + "': uplink '" +
                                    r.uplink_link_id + "' does not touch the node");
        }
    }
    for (const auto& n : s.topology.nodes)
        if (n.kind == net::NodeKind::rtu && !roster.count(n.id))
            throw ScenarioError("scenario: rtus: missing entry for rtu node '" + n.id + "'");
    for (const auto& m : s.datapoints.measurements)
        if (!roster.count(m.rtu))
            throw ScenarioError("scenario: datapoints: ioa " + std::to_string(m.ioa) +
                                " references unknown rtu '" + m.rtu + "'");
    for (const auto& c : s.datapoints.commands)
        if (!roster.count(c.rtu))
            throw ScenarioError("scenario: datapoints: ioa " + std::to_string(c.ioa) +
                                " references unknown rtu '" + c.rtu + "'");

    if (s.profile.scale.empty())
        throw ScenarioError("scenario: profile.scale must not be empty");
    if (s.profile.step_ms <= 0)
        throw ScenarioError("scenario: profile.stepMs must be positive");
    for (double v : s.profile.scale)
        if (v < 0.0 || v > 1.0)
            throw ScenarioError("scenario: profile.scale values must lie in [0, 1]");

    auto has_command_for = [&](grid::CommandKind kind, const std::string& ref) {
        return std::any_of(s.datapoints.commands.begin(), s.datapoints.commands.end(),
                           [&](const grid::CommandPoint& c) {
                               return c.kind == kind && c.ref == ref;
                           });
    };
    for (const auto& e : s.schedule) {
        if (e.t_ms < 0 || e.t_ms > s.duration_ms)
            throw ScenarioError("scenario: schedule entry at t=" + std::to_string(e.t_ms) +
                                " lies outside the run");
        switch (e.kind) {
            case ScheduleEntry::Kind::setpoint:
                if (!s.grid.find_asset(e.target))
                    throw ScenarioError("scenario: schedule: unknown asset '" + e.target + "'");
                if (!has_command_for(grid::CommandKind::setpoint, e.target))
                    throw ScenarioError("scenario: schedule: asset '" + e.target +
                                        "' has no setpoint command point");
                break;
            case ScheduleEntry::Kind::breaker:
                if (!s.grid.find_branch(e.target))
                    throw ScenarioError("scenario: schedule: unknown branch '" + e.target + "'");
                if (!has_command_for(grid::CommandKind::breaker, e.target))
                    throw ScenarioError("scenario: schedule: branch '" + e.target +
                                        "' has no breaker command point");
                break;
            case ScheduleEntry::Kind::trip:
                if (!s.grid.find_branch(e.target))
                    throw ScenarioError("scenario: schedule: unknown branch '" + e.target + "'");
                break;
            case ScheduleEntry::Kind::link: {
                bool ok = std::any_of(s.topology.links.begin(), s.topology.links.end(),
                                      [&](const net::Link& l) { return l.id == e.target; });
                if (!ok)
                    throw ScenarioError("scenario: schedule: unknown link '" + e.target + "'");
                break;
            }
            case ScheduleEntry::Kind::interrogation:
                if (!e.target.empty() && !s.find_rtu(e.target))
                    throw ScenarioError("scenario: schedule: unknown rtu '" + e.target + "'");
                break;
        }
    }

    std::set<std::string> attack_ids;
    for (const auto& a : s.attacks) {
        if (!attack_ids.insert(a.id).second)
            throw ScenarioError("scenario: duplicate attack id '" + a.id + "'");
        try {
            attack::validate_action(a, s.topology, s.grid, s.datapoints, s.duration_ms,
                                    s.warnings);
        } catch (const std::runtime_error& e) {
            throw ScenarioError(std::string("scenario: ") + e.what());
        }
    }
}

// --- Entry points -----------------------------------------------------------

Scenario scenario_from_yaml_text(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ScenarioError(std::string("scenario: ") + e.msg, e.mark.line + 1);
    }
    if (root["extends"])
        throw ScenarioError("scenario: 'extends' requires loading from a file path");
    return parse_scenario(yaml_to_json(root));
}

namespace {

YAML::Node load_yaml_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("scenario: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return YAML::Load(buf.str());
    } catch (const YAML::Exception& e) {
        throw ScenarioError("scenario: " + path + ": " + e.msg, e.mark.line + 1);
    }
}

// Single-level key-wise inheritance: the child's top-level sections replace
// the base's wholesale.
YAML::Node resolve_extends(const std::string& path, int depth) {
    if (depth > 8) throw ScenarioError("scenario: 'extends' chain too deep at '" + path + "'");
    YAML::Node node = load_yaml_file(path);
    if (!node["extends"]) return node;
    std::string rel = node["extends"].as<std::string>();
    std::filesystem::path base_path = std::filesystem::path(path).parent_path() / rel;
    YAML::Node base = resolve_extends(base_path.string(), depth + 1);
    for (const auto& kv : node) {
        std::string key = kv.first.Scalar();
        if (key == "extends") continue;
        base[key] = kv.second;
    }
    return base;
}

}  // namespace

Scenario load_scenario(const std::string& path) {
    return parse_scenario(yaml_to_json(resolve_extends(path, 0)));
}

// --- Resolved JSON round-trip ----------------------------------------------

json scenario_to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["seed"] = s.seed;
    j["durationMs"] = s.duration_ms;
    j["reportingPeriodMs"] = s.reporting_period_ms;
    j["noiseSigmaPu"] = s.noise_sigma_pu;

    json topo;
    topo["nodes"] = json::array();
    for (const auto& n : s.topology.nodes)
        topo["nodes"].push_back({{"id", n.id},
                                 {"kind", net::to_string(n.kind)},
                                 {"zone", net::to_string(n.zone)},
                                 {"l2", net::to_string(n.l2)},
                                 {"l3", net::to_string(n.l3)}});
    topo["links"] = json::array();
    for (const auto& l : s.topology.links)
        topo["links"].push_back({{"id", l.id},
                                 {"a", l.a},
                                 {"b", l.b},
                                 {"latencyMs", l.latency_ms},
                                 {"up", l.up}});
    topo["taps"] = s.topology.taps;
    topo["firewalls"] = json::array();
    for (const auto& [node, rules] : s.topology.firewall_rules) {
        json fr;
        fr["node"] = node;
        fr["rules"] = json::array();
        for (const auto& r : rules)
            fr["rules"].push_back(
                {{"src", r.src}, {"dst", r.dst}, {"port", r.port}, {"allow", r.allow}});
        topo["firewalls"].push_back(fr);
    }
    j["topology"] = topo;

    json g;
    g["slackBus"] = s.grid.slack_bus_id;
    g["buses"] = json::array();
    for (const auto& b : s.grid.buses)
        g["buses"].push_back({{"id", b.id}, {"nominalKv", b.nominal_kv}});
    g["branches"] = json::array();
    for (const auto& b : s.grid.branches)
        g["branches"].push_back({{"id", b.id},
                                 {"from", b.from_bus},
                                 {"to", b.to_bus},
                                 {"reactancePu", b.reactance_pu},
                                 {"ratingPu", b.rating_pu},
                                 {"closed", b.breaker_closed}});
    g["assets"] = json::array();
    for (const auto& a : s.grid.assets)
        g["assets"].push_back({{"id", a.id},
                               {"bus", a.bus_id},
                               {"kind", grid::to_string(a.kind)},
                               {"pMinPu", a.p_min_pu},
                               {"pMaxPu", a.p_max_pu},
                               {"pSetPu", a.p_set_pu}});
    j["grid"] = g;

    json dp;
    dp["measurements"] = json::array();
    for (const auto& m : s.datapoints.measurements)
        dp["measurements"].push_back({{"ioa", m.ioa},
                                      {"rtu", m.rtu},
                                      {"quantity", grid::to_string(m.quantity)},
                                      {"ref", m.ref}});
    dp["commands"] = json::array();
    for (const auto& c : s.datapoints.commands)
        dp["commands"].push_back(
            {{"ioa", c.ioa},
             {"rtu", c.rtu},
             {"kind", c.kind == grid::CommandKind::setpoint ? "setpoint" : "breaker"},
             {"ref", c.ref}});
    j["datapoints"] = dp;

    j["rtus"] = json::array();
    for (const auto& r : s.rtus)
        j["rtus"].push_back({{"id", r.id},
                             {"commonAddress", r.common_address},
                             {"statusIoa", r.status_ioa},
                             {"uplink", r.uplink_link_id}});

    j["profile"] = {{"stepMs", s.profile.step_ms}, {"scale", s.profile.scale}};

    j["schedule"] = json::array();
    for (const auto& e : s.schedule) {
        json ej;
        ej["t"] = e.t_ms;
        ej["do"] = to_string(e.kind);
        switch (e.kind) {
            case ScheduleEntry::Kind::setpoint:
                ej["target"] = e.target;
                ej["value"] = e.value;
                break;
            case ScheduleEntry::Kind::breaker:
                ej["target"] = e.target;
                ej["close"] = e.flag;
                break;
            case ScheduleEntry::Kind::interrogation:
                if (!e.target.empty()) ej["target"] = e.target;
                break;
            case ScheduleEntry::Kind::trip:
                ej["target"] = e.target;
                break;
            case ScheduleEntry::Kind::link:
                ej["target"] = e.target;
                ej["up"] = e.flag;
                break;
        }
        j["schedule"].push_back(ej);
    }

    j["attacks"] = json::array();
    for (const auto& a : s.attacks) {
        json aj;
        aj["id"] = a.id;
        aj["kind"] = attack::to_string(a.kind);
        aj["startMs"] = a.start_ms;
        switch (a.kind) {
            case attack::Kind::network_scan: {
                const auto& p = std::get<attack::ScanParams>(a.params);
                aj["attacker"] = p.attacker;
                aj["targets"] = p.targets;
                aj["ports"] = p.ports;
                aj["ratePerSecond"] = p.rate_per_second;
                break;
            }
            case attack::Kind::unauthorized_connect: {
                const auto& p = std::get<attack::UnauthorizedConnectParams>(a.params);
                aj["attacker"] = p.attacker;
                aj["target"] = p.target;
                aj["port"] = p.port;
                if (p.spoof_as) aj["spoofAs"] = *p.spoof_as;
                break;
            }
            case attack::Kind::false_data_injection: {
                const auto& p = std::get<attack::FdiParams>(a.params);
                aj["link"] = p.link_id;
                aj["ioas"] = p.ioas;
                aj["mode"] = attack::to_string(p.mode);
                aj["amount"] = p.amount;
                aj["endMs"] = p.end_ms;
                break;
            }
            case attack::Kind::rogue_command: {
                const auto& p = std::get<attack::RogueCommandParams>(a.params);
                aj["attacker"] = p.attacker;
                aj["target"] = p.target;
                aj["ioa"] = p.command_ioa;
                if (p.is_setpoint) aj["setpointValue"] = p.setpoint_value;
                else aj["breakerClose"] = p.breaker_close;
                break;
            }
            case attack::Kind::config_tamper: {
                const auto& p = std::get<attack::ConfigTamperParams>(a.params);
                aj["rtu"] = p.rtu;
                if (p.scaling_ioa)
                    aj["scaling"] = {{"ioa", *p.scaling_ioa}, {"factor", p.scaling_factor}};
                aj["maintenance"] = p.enter_maintenance;
                break;
            }
            case attack::Kind::cover_up: {
                const auto& p = std::get<attack::CoverUpParams>(a.params);
                aj["rtu"] = p.rtu;
                aj["asset"] = p.asset_id;
                aj["forcedSetpointPu"] = p.forced_setpoint_pu;
                aj["falsifiedIoas"] = p.falsified_ioas;
                aj["endMs"] = p.end_ms;
                break;
            }
            case attack::Kind::traffic_copy: {
                const auto& p = std::get<attack::TrafficCopyParams>(a.params);
                aj["link"] = p.link_id;
                aj["collector"] = p.collector;
                aj["collectorPort"] = p.collector_port;
                aj["endMs"] = p.end_ms;
                break;
            }
        }
        j["attacks"].push_back(aj);
    }

    j["detection"] = {{"residualThresholdPu", s.detection.model.residual_threshold_pu},
                      {"staleAfterMs", s.detection.model.stale_after_ms},
                      {"scanDistinctTargets", s.detection.scan_distinct_targets},
                      {"scanWindowMs", s.detection.scan_window_ms},
                      {"dedupWindowMs", s.detection.dedup_window_ms}};
    j["monitoring"] = {{"heartbeatPeriodMs", s.monitoring.heartbeat_period_ms},
                       {"missedHeartbeats", s.monitoring.missed_heartbeats},
                       {"flowEpsilonPu", s.monitoring.flow_epsilon_pu}};
    j["correlation"] = {
        {"windowMs", s.correlation.window_ms},
        {"hopRadius", s.correlation.hop_radius},
        {"weights",
         {{"info", s.correlation.weight_info},
          {"warning", s.correlation.weight_warning},
          {"critical", s.correlation.weight_critical}}},
        {"thresholds",
         {{"suspect", s.correlation.suspect_threshold},
          {"compromised", s.correlation.compromised_threshold}}}};
    return j;
}

Scenario scenario_from_json(const json& j) { return parse_scenario(j); }

}  // namespace otlab::scenario
