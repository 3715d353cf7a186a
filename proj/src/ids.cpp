#include "otlab/ids.hpp"

#include <algorithm>
#include <cmath>

namespace otlab::ids {

namespace {

using iec104::Cot;
using iec104::TypeId;

bool type_cot_allowed_to_field(TypeId t, Cot c) {
    switch (t) {
        case TypeId::single_command:
        case TypeId::setpoint_float:
        case TypeId::interrogation:
            return c == Cot::activation;
        default:
            return false;
    }
}

bool type_allowed_to_field(TypeId t) { return iec104::is_command_type(t); }

bool type_cot_allowed_to_center(TypeId t, Cot c) {
    switch (t) {
        case TypeId::single_point:
        case TypeId::measured_float:
            return c == Cot::spontaneous || c == Cot::interrogated;
        case TypeId::single_command:
        case TypeId::setpoint_float:
        case TypeId::interrogation:
            return c == Cot::activation_con || c == Cot::activation_term;
    }
    return false;
}

// Session mirrors track one TCP-like connection each, so the key includes the
// initiator's port: a spoofed connect from another port must not disturb the
// mirror of the legitimate session on the same address pair.
std::string flow_key(const net::L3Addr& center, std::uint16_t center_port,
                     const net::L3Addr& field) {
    return net::to_string(center) + ":" + std::to_string(center_port) + "|" +
           net::to_string(field);
}

bool telecontrol_plane(const net::Packet& p) {
    return p.dst_port == iec104::kDefaultPort ||
           p.src_port == iec104::kDefaultPort;
}

}  // namespace

const char* to_string(Layer l) {
    switch (l) {
        case Layer::acl: return "acl";
        case Layer::protocol: return "protocol";
        case Layer::model: return "model";
        case Layer::monitoring: return "monitoring";
    }
    return "?";
}

const char* to_string(Severity s) {
    switch (s) {
        case Severity::info: return "info";
        case Severity::warning: return "warning";
        case Severity::critical: return "critical";
    }
    return "?";
}

std::optional<Layer> layer_from_string(const std::string& s) {
    if (s == "acl") return Layer::acl;
    if (s == "protocol") return Layer::protocol;
    if (s == "model") return Layer::model;
    if (s == "monitoring") return Layer::monitoring;
    return std::nullopt;
}

std::optional<Severity> severity_from_string(const std::string& s) {
    if (s == "info") return Severity::info;
    if (s == "warning") return Severity::warning;
    if (s == "critical") return Severity::critical;
    return std::nullopt;
}

json alert_to_json(const Alert& a) {
    json j;
    j["t"] = a.t_ms;
    j["lastT"] = a.last_t_ms;
    j["layer"] = to_string(a.layer);
    j["rule"] = a.rule;
    j["source"] = a.source_node;
    j["subject"] = a.subject_device;
    j["severity"] = to_string(a.severity);
    j["count"] = a.count;
    j["evidence"] = a.evidence;
    return j;
}

std::optional<Alert> alert_from_json(const json& j) {
    try {
        Alert a;
        a.t_ms = j.at("t").get<SimTimeMs>();
        a.last_t_ms = j.at("lastT").get<SimTimeMs>();
        auto layer = layer_from_string(j.at("layer").get<std::string>());
        auto sev = severity_from_string(j.at("severity").get<std::string>());
        if (!layer || !sev) return std::nullopt;
        a.layer = *layer;
        a.severity = *sev;
        a.rule = j.at("rule").get<std::string>();
        a.source_node = j.at("source").get<std::string>();
        a.subject_device = j.at("subject").get<std::string>();
        a.count = j.at("count").get<int>();
        a.evidence = j.at("evidence");
        return a;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

const AclWhitelist::Endpoint* AclWhitelist::find_by_l3(const net::L3Addr& l3) const {
    for (const auto& e : endpoints)
        if (e.l3 == l3) return &e;
    return nullptr;
}

const ProtocolWhitelist::FlowRule* ProtocolWhitelist::find(
    const net::L3Addr& a, const net::L3Addr& b) const {
    for (const auto& r : rules) {
        if ((r.center_l3 == a && r.field_l3 == b) ||
            (r.center_l3 == b && r.field_l3 == a))
            return &r;
    }
    return nullptr;
}

WhitelistBundle derive_whitelists(const net::TopologySpec& topo,
                                  const grid::DatapointMap& datapoints) {
    WhitelistBundle out;
    const net::TopologyNode* center = nullptr;
    for (const auto& n : topo.nodes) {
        switch (n.kind) {
            case net::NodeKind::scada:
                if (!center) center = &n;
                [[fallthrough]];
            case net::NodeKind::rtu:
            case net::NodeKind::terminal_server:
                out.acl.endpoints.push_back({n.id, n.l2, n.l3});
                break;
            default:
                break;
        }
    }
    if (!center) return out;

    for (const auto& n : topo.nodes) {
        if (n.kind != net::NodeKind::rtu) continue;
        out.acl.flows.push_back(
            {center->id, n.id, center->l3, n.l3, iec104::kDefaultPort});

        ProtocolWhitelist::FlowRule rule;
        rule.center_l3 = center->l3;
        rule.field_l3 = n.l3;
        rule.field_device = n.id;
        rule.to_field_ioas.insert(0);   // general interrogation
        rule.to_center_ioas.insert(0);  // and its confirmations
        for (const auto& m : datapoints.measurements)
            if (m.rtu == n.id) rule.to_center_ioas.insert(m.ioa);
        for (const auto& c : datapoints.commands) {
            if (c.rtu != n.id) continue;
            rule.to_field_ioas.insert(c.ioa);
            rule.to_center_ioas.insert(c.ioa);  // activation confirmations
        }
        out.protocol.rules.push_back(std::move(rule));
    }
    return out;
}

Pipeline::Pipeline(net::TopologySpec topo, grid::GridNetwork grid_net,
                   grid::DatapointMap datapoints, WhitelistBundle whitelists,
                   IdsConfig cfg, mon::MonitorConfig mon_cfg,
                   std::vector<mon::DeviceSpec> devices, Layers layers)
    : topo_(std::move(topo)),
      grid_(std::move(grid_net)),
      datapoints_(std::move(datapoints)),
      wl_(std::move(whitelists)),
      cfg_(cfg),
      layers_(layers),
      board_(mon_cfg, std::move(devices)) {}

DeviceId Pipeline::resolve_l3(const net::L3Addr& addr) const {
    if (const auto* n = topo_.find_by_l3(addr)) return n->id;
    return net::to_string(addr);
}

void Pipeline::emit(SimTimeMs t, Layer layer, const std::string& rule,
                    const DeviceId& source, const DeviceId& subject,
                    Severity sev, json evidence) {
    const bool enabled = (layer == Layer::acl && layers_.acl) ||
                         (layer == Layer::protocol && layers_.protocol) ||
                         (layer == Layer::model && layers_.model) ||
                         (layer == Layer::monitoring && layers_.monitoring);
    if (!enabled) return;

    const std::string key = std::string(to_string(layer)) + "|" + rule + "|" +
                            source + "|" + subject;
    auto it = dedup_.find(key);
    if (it != dedup_.end()) {
        Alert& existing = alerts_[it->second];
        if (t - existing.t_ms <= cfg_.dedup_window_ms) {
            existing.count += 1;
            existing.last_t_ms = t;
            return;
        }
    }
    Alert a;
    a.t_ms = t;
    a.last_t_ms = t;
    a.layer = layer;
    a.rule = rule;
    a.source_node = source;
    a.subject_device = subject;
    a.severity = sev;
    a.count = 1;
    a.evidence = std::move(evidence);
    dedup_[key] = alerts_.size();
    alerts_.push_back(std::move(a));
}

void Pipeline::on_event(const sim::SimEvent& e) {
    std::visit(
        [this](const auto& ev) {
            using T = std::decay_t<decltype(ev)>;
            if constexpr (std::is_same_v<T, sim::PacketSeen>) {
                on_packet(ev);
            } else if constexpr (std::is_same_v<T, sim::PacketDropped>) {
                on_drop(ev);
            } else if constexpr (std::is_same_v<T, sim::LinkChanged>) {
                board_.on_link(ev.link_id, ev.up);
            } else if constexpr (std::is_same_v<T, sim::GridStep>) {
                on_grid_step(ev);
            }
            // Attack markers and device notes are annotations for scoring and
            // reporting; detection never reads them.
        },
        e);
}

void Pipeline::on_packet(const sim::PacketSeen& ev) {
    // Several taps may mirror the same packet; inspect the first sighting.
    if (!seen_packets_.insert(ev.packet.packet_id).second) return;
    const auto& p = ev.packet;

    if (p.kind == net::PacketKind::probe ||
        p.kind == net::PacketKind::connect_request)
        feed_scan_detector(ev.t_ms, p);

    check_acl(ev.t_ms, p);

    if (p.kind == net::PacketKind::connect_request && telecontrol_plane(p)) {
        // Fresh connection: any previous session on this tuple is gone.
        const bool to_field = p.dst_port == iec104::kDefaultPort;
        sessions_.erase(flow_key(to_field ? p.src_l3 : p.dst_l3,
                                 to_field ? p.src_port : p.dst_port,
                                 to_field ? p.dst_l3 : p.src_l3));
    }
    if (p.kind == net::PacketKind::data && telecontrol_plane(p))
        check_protocol_and_ingest(ev.t_ms, p);
}

void Pipeline::on_drop(const sim::PacketDropped& ev) {
    // Firewall and routing drops reach the detector as log exports; that is
    // enough for the scan heuristic, but the packets never crossed an OT tap,
    // so no endpoint or protocol inspection happens here.
    if (ev.packet.kind == net::PacketKind::probe ||
        ev.packet.kind == net::PacketKind::connect_request)
        feed_scan_detector(ev.t_ms, ev.packet);
}

void Pipeline::feed_scan_detector(SimTimeMs t, const net::Packet& p) {
    auto& window = scan_[net::to_string(p.src_l3)];
    const SimTimeMs horizon = t - cfg_.scan_window_ms;
    auto& probes = window.probes;
    probes.erase(std::remove_if(probes.begin(), probes.end(),
                                [horizon](const auto& e) {
                                    return e.first < horizon;
                                }),
                 probes.end());
    probes.push_back({t, net::to_string(p.dst_l3) + ":" +
                             std::to_string(p.dst_port)});

    std::set<std::string> distinct;
    for (const auto& [pt, target] : probes) distinct.insert(target);
    if (static_cast<int>(distinct.size()) >= cfg_.scan_distinct_targets) {
        const DeviceId src = resolve_l3(p.src_l3);
        json ev;
        ev["distinctTargets"] = distinct.size();
        ev["windowMs"] = cfg_.scan_window_ms;
        ev["sourceL3"] = net::to_string(p.src_l3);
        emit(t, Layer::acl, "scan-detected", src, src, Severity::warning,
             std::move(ev));
        probes.clear();
    }
}

void Pipeline::check_acl(SimTimeMs t, const net::Packet& p) {
    const auto* src_ep = wl_.acl.find_by_l3(p.src_l3);
    if (!src_ep) {
        json ev;
        ev["srcL3"] = net::to_string(p.src_l3);
        ev["srcL2"] = net::to_string(p.src_l2);
        ev["dstL3"] = net::to_string(p.dst_l3);
        ev["packetId"] = p.packet_id;
        emit(t, Layer::acl, "unknown-endpoint", resolve_l3(p.src_l3),
             resolve_l3(p.dst_l3), Severity::critical, std::move(ev));
        return;
    }
    if (src_ep->l2 != p.src_l2) {
        json ev;
        ev["claimedL3"] = net::to_string(p.src_l3);
        ev["expectedL2"] = net::to_string(src_ep->l2);
        ev["observedL2"] = net::to_string(p.src_l2);
        ev["packetId"] = p.packet_id;
        emit(t, Layer::acl, "l2-l3-mismatch", src_ep->device,
             resolve_l3(p.dst_l3), Severity::critical, std::move(ev));
    }

    if (!telecontrol_plane(p) || p.kind == net::PacketKind::probe) return;
    const auto* dst_ep = wl_.acl.find_by_l3(p.dst_l3);
    if (!dst_ep) {
        // Telecontrol payload leaving for a host nobody engineered — the
        // signature of traffic being siphoned off. Connection probes to
        // unknown hosts stay with the scan heuristic instead.
        if (p.kind == net::PacketKind::data) {
            json ev;
            ev["srcL3"] = net::to_string(p.src_l3);
            ev["dstL3"] = net::to_string(p.dst_l3);
            ev["dstPort"] = p.dst_port;
            ev["role"] = "destination";
            ev["packetId"] = p.packet_id;
            emit(t, Layer::acl, "unknown-endpoint", src_ep->device,
                 resolve_l3(p.dst_l3), Severity::critical, std::move(ev));
        }
        return;
    }

    for (const auto& f : wl_.acl.flows) {
        const bool forward = p.src_l3 == f.center_l3 && p.dst_l3 == f.field_l3 &&
                             p.dst_port == f.port;
        const bool reverse = p.src_l3 == f.field_l3 && p.dst_l3 == f.center_l3 &&
                             p.src_port == f.port;
        if (forward || reverse) return;
    }
    json ev;
    ev["srcL3"] = net::to_string(p.src_l3);
    ev["dstL3"] = net::to_string(p.dst_l3);
    ev["dstPort"] = p.dst_port;
    ev["packetId"] = p.packet_id;
    emit(t, Layer::acl, "unwhitelisted-flow", src_ep->device, dst_ep->device,
         Severity::critical, std::move(ev));
}

void Pipeline::check_protocol_and_ingest(SimTimeMs t, const net::Packet& p) {
    const bool to_field = p.dst_port == iec104::kDefaultPort;
    const net::L3Addr center_l3 = to_field ? p.src_l3 : p.dst_l3;
    const net::L3Addr field_l3 = to_field ? p.dst_l3 : p.src_l3;
    const DeviceId source = resolve_l3(p.src_l3);
    const auto* rule = wl_.protocol.find(center_l3, field_l3);
    const DeviceId subject = rule ? rule->field_device : resolve_l3(field_l3);

    const auto decoded = iec104::decode_apdu(p.payload);
    if (decoded.status != iec104::DecodeStatus::ok ||
        decoded.consumed != p.payload.size()) {
        json ev;
        ev["status"] = decoded.status == iec104::DecodeStatus::ok
                           ? "trailing-bytes"
                           : iec104::to_string(decoded.status);
        ev["packetId"] = p.packet_id;
        ev["bytes"] = sim::hex_encode(std::span(p.payload.data(),
                                                std::min<std::size_t>(
                                                    p.payload.size(), 16)));
        emit(t, Layer::protocol, "malformed-telecontrol", source, subject,
             Severity::warning, std::move(ev));
        return;
    }
    const iec104::Apdu& frame = decoded.apdu;

    // Mirror the session state machine of both stations.
    const std::uint16_t center_port = to_field ? p.src_port : p.dst_port;
    auto& session = sessions_[flow_key(center_l3, center_port, field_l3)];
    if (std::holds_alternative<iec104::UControl>(frame.control)) {
        switch (std::get<iec104::UControl>(frame.control).function) {
            case iec104::UFunction::startdt_con:
                session.started = true;
                break;
            case iec104::UFunction::stopdt_con:
                session.started = false;
                break;
            default:
                break;
        }
    } else if (std::holds_alternative<iec104::IControl>(frame.control)) {
        const auto& ctl = std::get<iec104::IControl>(frame.control);
        if (!session.started) {
            json ev;
            ev["packetId"] = p.packet_id;
            emit(t, Layer::protocol, "data-before-start", source, subject,
                 Severity::info, std::move(ev));
        }
        auto& expected =
            to_field ? session.next_from_center : session.next_from_field;
        if (expected && *expected != ctl.send_seq) {
            json ev;
            ev["expected"] = *expected;
            ev["got"] = ctl.send_seq;
            ev["packetId"] = p.packet_id;
            emit(t, Layer::protocol, "sequence-error", source, subject,
                 Severity::warning, std::move(ev));
        }
        expected = iec104::seq_next(ctl.send_seq);
    }

    if (!frame.asdu) return;
    const iec104::Asdu& asdu = *frame.asdu;

    if (rule) {
        // Toward the field only commands are legal; toward the center both
        // reports and command confirmations appear, so the cause-of-
        // transmission carries the restriction.
        const bool type_ok = !to_field || type_allowed_to_field(asdu.type_id);
        const bool pair_ok = to_field
                                 ? type_cot_allowed_to_field(asdu.type_id, asdu.cot)
                                 : type_cot_allowed_to_center(asdu.type_id,
                                                              asdu.cot);
        if (!type_ok) {
            json ev;
            ev["typeId"] = iec104::to_string(asdu.type_id);
            ev["packetId"] = p.packet_id;
            emit(t, Layer::protocol, "typeid-not-allowed", source, subject,
                 Severity::warning, std::move(ev));
        } else if (!pair_ok) {
            json ev;
            ev["typeId"] = iec104::to_string(asdu.type_id);
            ev["cot"] = iec104::to_string(asdu.cot);
            ev["packetId"] = p.packet_id;
            emit(t, Layer::protocol, "cot-not-allowed", source, subject,
                 Severity::warning, std::move(ev));
        }
        const auto& allowed = to_field ? rule->to_field_ioas : rule->to_center_ioas;
        for (const auto& obj : asdu.objects) {
            if (!allowed.count(obj.ioa)) {
                json ev;
                ev["ioa"] = obj.ioa;
                ev["typeId"] = iec104::to_string(asdu.type_id);
                ev["packetId"] = p.packet_id;
                emit(t, Layer::protocol, "ioa-out-of-range", source, subject,
                     Severity::warning, std::move(ev));
            }
        }
    }

    if (to_field && asdu.cot == Cot::activation)
        check_command_plausibility(t, p, asdu);
    if (!to_field) ingest_monitor_frame(t, p, asdu);
}

void Pipeline::check_command_plausibility(SimTimeMs t, const net::Packet& p,
                                          const iec104::Asdu& asdu) {
    const DeviceId source = resolve_l3(p.src_l3);
    for (const auto& obj : asdu.objects) {
        const auto* cp = datapoints_.find_command(obj.ioa);
        if (!cp) continue;
        if (asdu.type_id == TypeId::setpoint_float &&
            cp->kind == grid::CommandKind::setpoint) {
            const auto* asset = grid_.find_asset(cp->ref);
            if (!asset) continue;
            const double value =
                std::get<iec104::SetpointFloat>(obj.payload).value;
            if (value < asset->p_min_pu || value > asset->p_max_pu) {
                json ev;
                ev["asset"] = asset->id;
                ev["requested"] = value;
                ev["pMin"] = asset->p_min_pu;
                ev["pMax"] = asset->p_max_pu;
                ev["packetId"] = p.packet_id;
                emit(t, Layer::model, "implausible-command", source, cp->rtu,
                     Severity::critical, std::move(ev));
            }
        } else if (asdu.type_id == TypeId::single_command &&
                   cp->kind == grid::CommandKind::breaker) {
            const bool close = std::get<iec104::SingleCommand>(obj.payload).on;
            if (close) continue;
            // Opening this breaker: would it cut buses off, judging by the
            // breaker states currently reported?
            std::map<std::string, bool> states;
            for (const auto& m : datapoints_.measurements) {
                if (m.quantity != grid::Quantity::breaker_state) continue;
                auto it = image_.find(m.ioa);
                if (it != image_.end()) states[m.ref] = it->second.value > 0.5;
            }
            if (grid::switch_would_island(grid_, cp->ref, states)) {
                json ev;
                ev["branch"] = cp->ref;
                ev["packetId"] = p.packet_id;
                emit(t, Layer::model, "islanding-command", source, cp->rtu,
                     Severity::critical, std::move(ev));
            }
        }
    }
}

void Pipeline::ingest_monitor_frame(SimTimeMs t, const net::Packet& p,
                                    const iec104::Asdu& asdu) {
    // Model state only trusts frames that claim to come from an engineered
    // flow; everything else was already flagged upstream.
    if (!wl_.protocol.find(p.dst_l3, p.src_l3)) return;
    if (!iec104::is_monitor_type(asdu.type_id)) return;

    for (const auto& obj : asdu.objects) {
        ImageValue v;
        v.t_ms = t;
        if (asdu.type_id == TypeId::single_point) {
            v.value = std::get<iec104::SinglePoint>(obj.payload).on ? 1.0 : 0.0;
            v.good = true;
        } else {
            const auto& mf = std::get<iec104::MeasuredFloat>(obj.payload);
            v.value = mf.value;
            v.good = mf.quality == iec104::Quality::good;
        }
        image_[obj.ioa] = v;
        if (const auto* dev = board_.find_by_status_ioa(obj.ioa))
            board_.on_heartbeat(dev->id, t);
    }
}

std::vector<DeviceId> Pipeline::stale_devices(SimTimeMs t) const {
    std::vector<DeviceId> out;
    for (const auto& m : datapoints_.measurements) {
        if (m.quantity == grid::Quantity::device_status) continue;
        auto it = image_.find(m.ioa);
        const SimTimeMs last = it != image_.end() ? it->second.t_ms : 0;
        if (t - last > cfg_.model.stale_after_ms) {
            if (std::find(out.begin(), out.end(), m.rtu) == out.end())
                out.push_back(m.rtu);
        }
    }
    return out;
}

void Pipeline::model_checks(SimTimeMs t) {
    // Staleness, grouped per reporting device.
    std::map<DeviceId, std::vector<std::uint32_t>> stale;
    for (const auto& m : datapoints_.measurements) {
        if (m.quantity == grid::Quantity::device_status) continue;
        auto it = image_.find(m.ioa);
        const SimTimeMs last = it != image_.end() ? it->second.t_ms : 0;
        if (t - last > cfg_.model.stale_after_ms) stale[m.rtu].push_back(m.ioa);
    }
    for (const auto& [rtu, ioas] : stale) {
        json ev;
        ev["ioas"] = ioas;
        emit(t, Layer::model, "stale-data", rtu, rtu, Severity::warning,
             std::move(ev));
    }

    // Per-bus power balance over the mirrored process image. Stale entries
    // are excluded: values frozen by a comms outage would otherwise drift
    // apart from reality and masquerade as bad data, and the staleness rule
    // above already covers that situation.
    std::map<std::uint32_t, grid::Measurement> values;
    for (const auto& [ioa, v] : image_) {
        if (t - v.t_ms > cfg_.model.stale_after_ms) continue;
        values[ioa] = grid::Measurement{
            v.value,
            v.good ? grid::MeasurementQuality::good
                   : grid::MeasurementQuality::invalid,
            v.t_ms};
    }
    const auto residuals =
        grid::power_balance_residuals(grid_, datapoints_, values);
    std::vector<std::pair<std::string, double>> violated;
    for (const auto& [bus, r] : residuals)
        if (std::abs(r) > cfg_.model.residual_threshold_pu)
            violated.push_back({bus, r});

    if (!violated.empty()) {
        // Attribute suspicion to the datapoint that participates in the most
        // violated balances, weighted by residual magnitude.
        std::map<std::uint32_t, double> suspicion;
        for (const auto& [bus, r] : violated) {
            const double w = std::abs(r);
            for (const auto& m : datapoints_.measurements) {
                const bool involved =
                    (m.quantity == grid::Quantity::bus_injection &&
                     m.ref == bus) ||
                    (m.quantity == grid::Quantity::branch_flow &&
                     (grid_.branches[grid_.branch_index(m.ref)].from_bus == bus ||
                      grid_.branches[grid_.branch_index(m.ref)].to_bus == bus));
                if (involved) suspicion[m.ioa] += w;
            }
        }
        std::uint32_t suspect_ioa = 0;
        double best = -1.0;
        for (const auto& [ioa, s] : suspicion) {
            if (s > best + 1e-15) {  // ties keep the lowest ioa (map order)
                best = s;
                suspect_ioa = ioa;
            }
        }
        const auto* mp = datapoints_.find_measurement(suspect_ioa);
        const DeviceId subject = mp ? mp->rtu : DeviceId{"?"};
        json ev;
        json buses = json::array();
        for (const auto& [bus, r] : violated) {
            json b;
            b["bus"] = bus;
            b["residual"] = r;
            buses.push_back(b);
        }
        ev["violatedBuses"] = buses;
        ev["suspectIoa"] = suspect_ioa;
        ev["thresholdPu"] = cfg_.model.residual_threshold_pu;
        emit(t, Layer::model, "bad-data", subject, subject, Severity::critical,
             std::move(ev));
        last_bad_data_ms_ = t;
    }

    // Branch loading against ratings, again on fresh values only.
    for (const auto& m : datapoints_.measurements) {
        if (m.quantity != grid::Quantity::branch_flow) continue;
        auto it = image_.find(m.ioa);
        if (it == image_.end() || t - it->second.t_ms > cfg_.model.stale_after_ms)
            continue;
        const auto& branch = grid_.branches[grid_.branch_index(m.ref)];
        if (std::abs(it->second.value) > branch.rating_pu) {
            json ev;
            ev["branch"] = branch.id;
            ev["flowPu"] = it->second.value;
            ev["ratingPu"] = branch.rating_pu;
            emit(t, Layer::model, "limit-violation", m.rtu, m.rtu,
                 Severity::warning, std::move(ev));
        }
    }
}

void Pipeline::on_grid_step(const sim::GridStep& ev) {
    const SimTimeMs t = ev.t_ms;
    model_checks(t);

    for (const auto& dev : board_.tick(t)) {
        json e;
        e["device"] = dev;
        emit(t, Layer::monitoring, "device-unreachable", dev, dev,
             Severity::warning, std::move(e));
    }

    if (!layers_.monitoring) return;

    mon::ModelView view;
    view.stale_devices = stale_devices(t);
    view.residual_alert_active =
        last_bad_data_ms_ >= 0 && t - last_bad_data_ms_ <= 2 * cfg_.reporting_period_ms;
    for (const auto& m : datapoints_.measurements) {
        if (m.quantity != grid::Quantity::breaker_state) continue;
        auto it = image_.find(m.ioa);
        if (it == image_.end() || it->second.value > 0.5) continue;
        mon::ModelView::OpenBreaker ob;
        ob.branch_id = m.ref;
        ob.reporting_device = m.rtu;
        try {
            const auto flow_ioa =
                datapoints_.measurement_ioa(grid::Quantity::branch_flow, m.ref);
            auto fit = image_.find(flow_ioa);
            if (fit != image_.end()) {
                ob.flow_known = true;
                ob.flow_abs_pu = std::abs(fit->second.value);
            }
        } catch (const grid::GridError&) {
        }
        view.open_breakers.push_back(std::move(ob));
    }

    const auto cls = board_.classify(t, view);
    json snap = board_.snapshot(t);
    json rec;
    rec["t"] = t;
    rec["step"] = ev.step;
    rec["verdict"] = mon::to_string(cls.verdict);
    rec["rationale"] = cls.rationale;
    rec["devices"] = snap["devices"];
    monitoring_log_.push_back(std::move(rec));
}

}  // namespace otlab::ids
