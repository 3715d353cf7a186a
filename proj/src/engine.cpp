#include "otlab/engine.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "otlab/metrics.hpp"

namespace otlab::engine {

using iec104::Apdu;
using iec104::Asdu;
using iec104::Cot;
using iec104::TypeId;

namespace {

std::string peer_key(const net::L3Addr& l3, std::uint16_t port) {
    return net::to_string(l3) + ":" + std::to_string(port);
}

// Sequence bookkeeping for one of our own outbound I frames.
std::uint16_t take_send_seq(iec104::SessionState& sess) {
    const std::uint16_t seq = sess.next_send;
    sess.next_send = iec104::seq_next(sess.next_send);
    return seq;
}

}  // namespace

Engine::Engine(scenario::Scenario s, ids::Layers layers)
    : s_(std::move(s)),
      net_(s_.topology),
      truth_(s_.grid),
      rng_(s_.seed),
      pipeline_(s_.topology, s_.grid, s_.datapoints,
                ids::derive_whitelists(s_.topology, s_.datapoints), s_.detection,
                s_.monitoring, s_.device_specs(), layers) {
    for (const auto& n : s_.topology.nodes) {
        if (n.kind == net::NodeKind::scada) {
            scada_id_ = n.id;
            scada_l3_ = n.l3;
        }
    }
    if (scada_id_.empty())
        throw scenario::ScenarioError("scenario: topology has no scada node");

    std::uint16_t port = 49152;
    for (const auto& r : s_.rtus) {
        const auto* node = s_.topology.find_node(r.id);
        RtuState st;
        st.id = r.id;
        st.common_address = r.common_address;
        st.l3 = node->l3;
        rtus_.emplace(r.id, std::move(st));

        ScadaConn c;
        c.rtu = r.id;
        c.rtu_l3 = node->l3;
        c.local_port = port++;
        conns_.emplace(r.id, c);
    }
}

void Engine::record(const sim::SimEvent& ev) {
    event_log_.push_back(sim::event_to_json(ev));
    pipeline_.on_event(ev);
}

void Engine::note(SimTimeMs t, const DeviceId& device, const std::string& text) {
    record(sim::DeviceNote{t, device, text});
}

net::Packet Engine::base_packet(const net::L3Addr& src_l3, std::uint16_t src_port,
                                const net::L3Addr& dst_l3, std::uint16_t dst_port,
                                net::PacketKind kind) const {
    net::Packet p;
    p.src_l3 = src_l3;
    p.dst_l3 = dst_l3;
    p.src_port = src_port;
    p.dst_port = dst_port;
    p.kind = kind;
    if (const auto* n = s_.topology.find_by_l3(src_l3)) p.src_l2 = n->l2;
    if (const auto* n = s_.topology.find_by_l3(dst_l3)) p.dst_l2 = n->l2;
    return p;
}

void Engine::send_plain(SimTimeMs t, const DeviceId& from_node,
                        const net::L3Addr& src_l3, std::uint16_t src_port,
                        const net::L3Addr& dst_l3, std::uint16_t dst_port,
                        iec104::UFunction fn) {
    net::Packet p = base_packet(src_l3, src_port, dst_l3, dst_port,
                                net::PacketKind::data);
    p.payload = iec104::encode_apdu(Apdu::u_frame(fn));
    net_.send(from_node, std::move(p), t);
}

void Engine::send_i_frame(SimTimeMs t, const DeviceId& from_node,
                          iec104::SessionState& sess, const net::L3Addr& src_l3,
                          std::uint16_t src_port, const net::L3Addr& dst_l3,
                          std::uint16_t dst_port, Asdu asdu) {
    net::Packet p = base_packet(src_l3, src_port, dst_l3, dst_port,
                                net::PacketKind::data);
    p.payload = iec104::encode_apdu(
        Apdu::i_frame(take_send_seq(sess), sess.next_expected, std::move(asdu)));
    net_.send(from_node, std::move(p), t);
}

// --- Control-center agent ---------------------------------------------------

void Engine::scada_deliver(SimTimeMs t, const net::Packet& p) {
    // Identify the connection by (peer address, our local port).
    ScadaConn* conn = nullptr;
    for (auto& [id, c] : conns_)
        if (c.rtu_l3 == p.src_l3 && c.local_port == p.dst_port) conn = &c;
    if (!conn) return;  // stray packet (e.g. reply to a spoofed connect)

    if (p.kind == net::PacketKind::connect_accept) {
        conn->connected = true;
        net_.note_established(scada_l3_, conn->local_port, conn->rtu_l3,
                              iec104::kDefaultPort);
        send_plain(t, scada_id_, scada_l3_, conn->local_port, conn->rtu_l3,
                   iec104::kDefaultPort, iec104::UFunction::startdt_act);
        return;
    }
    if (p.kind != net::PacketKind::data) return;

    const auto decoded = iec104::decode_apdu(p.payload);
    if (decoded.status != iec104::DecodeStatus::ok) return;
    const Apdu& frame = decoded.apdu;

    auto step = iec104::session_accept(conn->sess, frame, iec104::Direction::inbound);
    conn->sess = step.state;

    if (const auto* u = std::get_if<iec104::UControl>(&frame.control)) {
        if (u->function == iec104::UFunction::startdt_con) conn->started = true;
        return;
    }
    for (const auto& ev : step.events) {
        if (ev.kind == iec104::SessionEvent::Kind::reply_with)
            send_plain(t, scada_id_, scada_l3_, conn->local_port, conn->rtu_l3,
                       iec104::kDefaultPort, ev.reply);
    }
    // Acknowledge every inbound I frame with a supervisory frame. The center
    // consumes reports and confirmations; it does not act on them further.
    if (std::holds_alternative<iec104::IControl>(frame.control)) {
        net::Packet ack = base_packet(scada_l3_, conn->local_port, conn->rtu_l3,
                                      iec104::kDefaultPort, net::PacketKind::data);
        ack.payload = iec104::encode_apdu(Apdu::s_frame(conn->sess.next_expected));
        net_.send(scada_id_, std::move(ack), t);
    }
}

void Engine::scada_send_command(SimTimeMs t, const scenario::ScheduleEntry& e) {
    // Find the command point for the target and route via its owning device.
    const grid::CommandPoint* cp = nullptr;
    for (const auto& c : s_.datapoints.commands) {
        const bool kind_ok = e.kind == scenario::ScheduleEntry::Kind::setpoint
                                 ? c.kind == grid::CommandKind::setpoint
                                 : c.kind == grid::CommandKind::breaker;
        if (kind_ok && c.ref == e.target) cp = &c;
    }
    if (!cp) return;  // validated earlier; defensive
    auto& conn = conns_.at(cp->rtu);
    if (!conn.started) return;

    Asdu asdu;
    asdu.common_address = rtus_.at(cp->rtu).common_address;
    asdu.cot = Cot::activation;
    if (e.kind == scenario::ScheduleEntry::Kind::setpoint) {
        asdu.type_id = TypeId::setpoint_float;
        asdu.objects.push_back({cp->ioa, iec104::SetpointFloat{
                                             static_cast<float>(e.value), false}});
    } else {
        asdu.type_id = TypeId::single_command;
        asdu.objects.push_back({cp->ioa, iec104::SingleCommand{e.flag, false}});
    }
    send_i_frame(t, scada_id_, conn.sess, scada_l3_, conn.local_port, conn.rtu_l3,
                 iec104::kDefaultPort, std::move(asdu));
}

void Engine::scada_send_interrogation(SimTimeMs t, const DeviceId& rtu_id) {
    auto& conn = conns_.at(rtu_id);
    if (!conn.started) return;
    Asdu asdu;
    asdu.type_id = TypeId::interrogation;
    asdu.cot = Cot::activation;
    asdu.common_address = rtus_.at(rtu_id).common_address;
    asdu.objects.push_back({0, iec104::InterrogationQualifier{20}});
    send_i_frame(t, scada_id_, conn.sess, scada_l3_, conn.local_port, conn.rtu_l3,
                 iec104::kDefaultPort, std::move(asdu));
}

// --- Field-device agent -----------------------------------------------------

void Engine::rtu_deliver(SimTimeMs t, RtuState& rtu, const net::Packet& p) {
    if (p.kind == net::PacketKind::connect_request &&
        p.dst_port == iec104::kDefaultPort) {
        auto& peer = rtu.peers[peer_key(p.src_l3, p.src_port)];
        peer.sess = iec104::SessionState{};
        peer.is_center = p.src_l3 == scada_l3_;
        net::Packet accept = base_packet(rtu.l3, iec104::kDefaultPort, p.src_l3,
                                         p.src_port, net::PacketKind::connect_accept);
        net_.send(rtu.id, std::move(accept), t);
        return;
    }
    if (p.kind != net::PacketKind::data) return;
    auto it = rtu.peers.find(peer_key(p.src_l3, p.src_port));
    if (it == rtu.peers.end()) return;
    auto& peer = it->second;

    const auto decoded = iec104::decode_apdu(p.payload);
    if (decoded.status != iec104::DecodeStatus::ok) return;
    const Apdu& frame = decoded.apdu;

    auto step = iec104::session_accept(peer.sess, frame, iec104::Direction::inbound);
    peer.sess = step.state;
    for (const auto& ev : step.events) {
        if (ev.kind == iec104::SessionEvent::Kind::reply_with)
            send_plain(t, rtu.id, rtu.l3, iec104::kDefaultPort, p.src_l3,
                       p.src_port, ev.reply);
    }

    if (!frame.asdu) return;
    const Asdu& asdu = *frame.asdu;
    if (asdu.cot != Cot::activation || asdu.objects.empty()) return;
    const auto& obj = asdu.objects.front();

    auto reply = [&](Asdu a) {
        send_i_frame(t, rtu.id, peer.sess, rtu.l3, iec104::kDefaultPort, p.src_l3,
                     p.src_port, std::move(a));
    };
    auto confirm = [&](const Asdu& request, bool negative) {
        Asdu con = request;
        con.cot = Cot::activation_con;
        for (auto& o : con.objects) {
            if (auto* sc = std::get_if<iec104::SingleCommand>(&o.payload))
                sc->negative = negative;
            if (auto* se = std::get_if<iec104::SetpointFloat>(&o.payload))
                se->negative = negative;
        }
        reply(std::move(con));
    };

    switch (asdu.type_id) {
        case TypeId::single_command: {
            const auto* cp = s_.datapoints.find_command(obj.ioa);
            if (!cp || cp->rtu != rtu.id || cp->kind != grid::CommandKind::breaker) {
                confirm(asdu, true);
                note(t, rtu.id, "rejected switch command for unknown object " +
                                     std::to_string(obj.ioa));
                return;
            }
            const bool close = std::get<iec104::SingleCommand>(obj.payload).on;
            auto result = grid::apply_command(
                truth_, grid::SwitchCommand{cp->ref, close});
            truth_ = std::get<grid::GridNetwork>(result);  // switches always apply
            confirm(asdu, false);
            note(t, rtu.id, std::string("breaker ") + cp->ref + " " +
                                (close ? "closed" : "opened") + " by remote command");
            Asdu term = asdu;
            term.cot = Cot::activation_term;
            reply(std::move(term));
            return;
        }
        case TypeId::setpoint_float: {
            const auto* cp = s_.datapoints.find_command(obj.ioa);
            if (!cp || cp->rtu != rtu.id || cp->kind != grid::CommandKind::setpoint) {
                confirm(asdu, true);
                note(t, rtu.id, "rejected setpoint command for unknown object " +
                                     std::to_string(obj.ioa));
                return;
            }
            const double value = std::get<iec104::SetpointFloat>(obj.payload).value;
            auto result =
                grid::apply_command(truth_, grid::SetpointCommand{cp->ref, value});
            if (const auto* rej = std::get_if<grid::CommandRejection>(&result)) {
                confirm(asdu, true);
                note(t, rtu.id, "setpoint for " + cp->ref + " rejected: " + rej->detail);
                return;
            }
            truth_ = std::get<grid::GridNetwork>(result);
            confirm(asdu, false);
            std::ostringstream os;
            os << "setpoint for " << cp->ref << " changed to " << value << " pu";
            note(t, rtu.id, os.str());
            Asdu term = asdu;
            term.cot = Cot::activation_term;
            reply(std::move(term));
            return;
        }
        case TypeId::interrogation: {
            confirm(asdu, false);
            // Reply from the last reported snapshot: analogs, then discretes.
            Asdu floats;
            floats.type_id = TypeId::measured_float;
            floats.cot = Cot::interrogated;
            floats.common_address = rtu.common_address;
            Asdu points;
            points.type_id = TypeId::single_point;
            points.cot = Cot::interrogated;
            points.common_address = rtu.common_address;
            for (const auto& m : s_.datapoints.measurements) {
                if (m.rtu != rtu.id) continue;
                auto vit = rtu.last_report.find(m.ioa);
                if (vit == rtu.last_report.end()) continue;
                if (m.quantity == grid::Quantity::bus_injection ||
                    m.quantity == grid::Quantity::branch_flow) {
                    floats.objects.push_back(
                        {m.ioa, iec104::MeasuredFloat{
                                    static_cast<float>(vit->second),
                                    iec104::Quality::good}});
                } else if (m.quantity == grid::Quantity::breaker_state) {
                    points.objects.push_back(
                        {m.ioa, iec104::SinglePoint{vit->second > 0.5}});
                }
            }
            if (!floats.objects.empty()) reply(std::move(floats));
            if (!points.objects.empty()) reply(std::move(points));
            Asdu term = asdu;
            term.cot = Cot::activation_term;
            reply(std::move(term));
            return;
        }
        default:
            return;
    }
}

// --- Adversary FSMs ---------------------------------------------------------

void Engine::attacker_deliver(SimTimeMs t, AttackerFsm& fsm, const net::Packet& p) {
    if (fsm.done || fsm.spoofed) return;
    if (p.src_l3 != fsm.target_l3 || p.dst_port != fsm.local_port) return;
    const auto* node = s_.topology.find_node(fsm.node);

    if (p.kind == net::PacketKind::connect_accept) {
        if (fsm.kind == attack::Kind::unauthorized_connect) {
            fsm.done = true;  // the connection itself was the point
            return;
        }
        if (!fsm.sent_start) {
            fsm.sent_start = true;
            send_plain(t, fsm.node, node->l3, fsm.local_port, fsm.target_l3,
                       fsm.target_port, iec104::UFunction::startdt_act);
        }
        return;
    }
    if (p.kind != net::PacketKind::data) return;
    const auto decoded = iec104::decode_apdu(p.payload);
    if (decoded.status != iec104::DecodeStatus::ok) return;
    const Apdu& frame = decoded.apdu;
    auto step = iec104::session_accept(fsm.sess, frame, iec104::Direction::inbound);
    fsm.sess = step.state;

    if (const auto* u = std::get_if<iec104::UControl>(&frame.control)) {
        if (u->function == iec104::UFunction::startdt_con &&
            fsm.kind == attack::Kind::rogue_command) {
            const auto* rtu_node = s_.topology.find_by_l3(fsm.target_l3);
            Asdu asdu;
            asdu.cot = Cot::activation;
            asdu.common_address = 1;
            if (rtu_node) {
                if (const auto* spec = s_.find_rtu(rtu_node->id))
                    asdu.common_address = spec->common_address;
            }
            if (fsm.is_setpoint) {
                asdu.type_id = TypeId::setpoint_float;
                asdu.objects.push_back(
                    {fsm.command_ioa,
                     iec104::SetpointFloat{static_cast<float>(fsm.setpoint_value),
                                           false}});
            } else {
                asdu.type_id = TypeId::single_command;
                asdu.objects.push_back(
                    {fsm.command_ioa, iec104::SingleCommand{fsm.breaker_close, false}});
            }
            send_i_frame(t, fsm.node, fsm.sess, node->l3, fsm.local_port,
                         fsm.target_l3, fsm.target_port, std::move(asdu));
            fsm.done = true;
        }
    }
}

sim::GroundTruth Engine::ground_truth_for(const attack::Action& a) const {
    sim::GroundTruth g;
    g.attack_id = a.id;
    g.kind = attack::to_string(a.kind);
    g.start_ms = a.start_ms;
    g.end_ms = s_.duration_ms;
    switch (a.kind) {
        case attack::Kind::network_scan: {
            const auto& p = std::get<attack::ScanParams>(a.params);
            const auto probes = attack::expand_scan(p, s_.topology, a.start_ms);
            g.end_ms = probes.empty() ? a.start_ms : probes.back().t_ms;
            g.nodes = {p.attacker};
            break;
        }
        case attack::Kind::unauthorized_connect: {
            const auto& p = std::get<attack::UnauthorizedConnectParams>(a.params);
            // A connection attempt is effectively instantaneous; leave a
            // short tail for the handshake round trips.
            g.end_ms = a.start_ms + 1000;
            g.nodes = {p.attacker, p.target};
            break;
        }
        case attack::Kind::false_data_injection: {
            const auto& p = std::get<attack::FdiParams>(a.params);
            g.end_ms = p.end_ms;
            g.ioas = p.ioas;
            std::set<DeviceId> nodes;
            for (auto ioa : p.ioas)
                if (const auto* mp = s_.datapoints.find_measurement(ioa))
                    nodes.insert(mp->rtu);
            g.nodes.assign(nodes.begin(), nodes.end());
            break;
        }
        case attack::Kind::rogue_command: {
            const auto& p = std::get<attack::RogueCommandParams>(a.params);
            g.end_ms = a.start_ms + 1000;
            g.nodes = {p.attacker, p.target};
            g.ioas = {p.command_ioa};
            break;
        }
        case attack::Kind::config_tamper: {
            const auto& p = std::get<attack::ConfigTamperParams>(a.params);
            g.nodes = {p.rtu};  // persists to the end of the run
            if (p.scaling_ioa) g.ioas = {*p.scaling_ioa};
            break;
        }
        case attack::Kind::cover_up: {
            const auto& p = std::get<attack::CoverUpParams>(a.params);
            g.end_ms = p.end_ms;
            g.nodes = {p.rtu};
            g.ioas = p.falsified_ioas;
            // Physics test: blend the frozen pre-force values for the
            // falsified points with honest post-force values everywhere else
            // and check the power balance. If every bus still balances, the
            // books are closed and the model layer is blind by construction.
            grid::GridNetwork post = truth_;
            auto& asset = post.assets[post.asset_index(p.asset_id)];
            asset.p_set_pu = std::clamp(p.forced_setpoint_pu, asset.p_min_pu,
                                        asset.p_max_pu);
            const auto sol_pre = grid::solve_dc_power_flow_tolerant(truth_);
            const auto sol_post = grid::solve_dc_power_flow_tolerant(post);
            Rng quiet(0);
            const auto m_pre = grid::generate_measurements(
                truth_, sol_pre, s_.datapoints, 0.0, quiet, a.start_ms);
            const auto m_post = grid::generate_measurements(
                post, sol_post, s_.datapoints, 0.0, quiet, a.start_ms);
            auto blended = m_post.values;
            for (auto ioa : p.falsified_ioas)
                if (auto it = m_pre.values.find(ioa); it != m_pre.values.end())
                    blended[ioa] = it->second;
            bool exposed = false;
            for (const auto& [bus, r] :
                 grid::power_balance_residuals(post, s_.datapoints, blended))
                if (std::abs(r) > s_.detection.model.residual_threshold_pu)
                    exposed = true;
            g.detectable = exposed;
            break;
        }
        case attack::Kind::traffic_copy: {
            const auto& p = std::get<attack::TrafficCopyParams>(a.params);
            g.end_ms = p.end_ms;
            // The collector receives the copies; the devices on the monitored
            // link are where the duplicated traffic appears to come from, so
            // alerts naming either are correct detections.
            std::set<DeviceId> nodes{p.collector};
            for (const auto& l : s_.topology.links) {
                if (l.id != p.link_id) continue;
                for (const auto& end : {l.a, l.b}) {
                    const auto* n = s_.topology.find_node(end);
                    if (n && (n->kind == net::NodeKind::rtu ||
                              n->kind == net::NodeKind::scada ||
                              n->kind == net::NodeKind::terminal_server))
                        nodes.insert(end);
                }
            }
            g.nodes.assign(nodes.begin(), nodes.end());
            break;
        }
    }
    return g;
}

void Engine::start_attack(SimTimeMs t, const attack::Action& a) {
    sim::GroundTruth truth = ground_truth_for(a);

    switch (a.kind) {
        case attack::Kind::network_scan: {
            const auto& p = std::get<attack::ScanParams>(a.params);
            const auto* node = s_.topology.find_node(p.attacker);
            const auto probes = attack::expand_scan(p, s_.topology, a.start_ms);
            for (const auto& probe : probes) {
                net::Packet pkt = base_packet(node->l3, 51000, probe.dst,
                                              probe.port, net::PacketKind::probe);
                net_.send(p.attacker, std::move(pkt), probe.t_ms);
            }
            break;
        }
        case attack::Kind::unauthorized_connect: {
            const auto& p = std::get<attack::UnauthorizedConnectParams>(a.params);
            const auto* atk = s_.topology.find_node(p.attacker);
            const auto* tgt = s_.topology.find_node(p.target);
            AttackerFsm fsm;
            fsm.action_id = a.id;
            fsm.node = p.attacker;
            fsm.kind = a.kind;
            fsm.target_l3 = tgt->l3;
            fsm.target_port = p.port;
            fsm.local_port = static_cast<std::uint16_t>(51000 + attackers_.size());
            net::L3Addr src_l3 = atk->l3;
            if (p.spoof_as) {
                // Borrow the victim's network address; the hardware address
                // stays ours because the NIC is ours.
                src_l3 = s_.topology.find_node(*p.spoof_as)->l3;
                fsm.spoofed = true;
            }
            net::Packet pkt = base_packet(src_l3, fsm.local_port, tgt->l3, p.port,
                                          net::PacketKind::connect_request);
            pkt.src_l2 = atk->l2;
            attackers_.push_back(fsm);
            net_.send(p.attacker, std::move(pkt), t);
            break;
        }
        case attack::Kind::false_data_injection: {
            const auto& p = std::get<attack::FdiParams>(a.params);
            auto frozen = std::make_shared<std::map<std::uint32_t, float>>();
            auto params = p;
            net::PayloadMutator m;
            m.link_id = p.link_id;
            m.from_ms = a.start_ms;
            m.to_ms = p.end_ms;
            m.apply = [params, frozen](net::Packet& pkt, SimTimeMs) {
                if (pkt.kind != net::PacketKind::data) return;
                if (pkt.src_port != iec104::kDefaultPort) return;  // reports only
                auto decoded = iec104::decode_apdu(pkt.payload);
                if (decoded.status != iec104::DecodeStatus::ok) return;
                Apdu frame = decoded.apdu;
                if (!frame.asdu || frame.asdu->type_id != TypeId::measured_float)
                    return;
                bool touched = false;
                for (auto& obj : frame.asdu->objects) {
                    const bool wanted =
                        params.ioas.empty() ||
                        std::find(params.ioas.begin(), params.ioas.end(), obj.ioa) !=
                            params.ioas.end();
                    if (!wanted) continue;
                    auto& mf = std::get<iec104::MeasuredFloat>(obj.payload);
                    switch (params.mode) {
                        case attack::FdiParams::Mode::offset:
                            mf.value += static_cast<float>(params.amount);
                            break;
                        case attack::FdiParams::Mode::replace:
                            mf.value = static_cast<float>(params.amount);
                            break;
                        case attack::FdiParams::Mode::freeze: {
                            auto [it, fresh] = frozen->try_emplace(obj.ioa, mf.value);
                            (void)fresh;
                            mf.value = it->second;
                            break;
                        }
                    }
                    touched = true;
                }
                if (touched) pkt.payload = iec104::encode_apdu(frame);
            };
            net_.install_mutator(std::move(m));
            break;
        }
        case attack::Kind::rogue_command: {
            const auto& p = std::get<attack::RogueCommandParams>(a.params);
            const auto* atk = s_.topology.find_node(p.attacker);
            const auto* tgt = s_.topology.find_node(p.target);
            AttackerFsm fsm;
            fsm.action_id = a.id;
            fsm.node = p.attacker;
            fsm.kind = a.kind;
            fsm.target_l3 = tgt->l3;
            fsm.target_port = iec104::kDefaultPort;
            fsm.local_port = static_cast<std::uint16_t>(51000 + attackers_.size());
            fsm.command_ioa = p.command_ioa;
            fsm.is_setpoint = p.is_setpoint;
            fsm.setpoint_value = p.setpoint_value;
            fsm.breaker_close = p.breaker_close;
            net::Packet pkt = base_packet(atk->l3, fsm.local_port, tgt->l3,
                                          iec104::kDefaultPort,
                                          net::PacketKind::connect_request);
            attackers_.push_back(fsm);
            net_.send(p.attacker, std::move(pkt), t);
            break;
        }
        case attack::Kind::config_tamper: {
            const auto& p = std::get<attack::ConfigTamperParams>(a.params);
            auto& rtu = rtus_.at(p.rtu);
            if (p.scaling_ioa) rtu.scaling[*p.scaling_ioa] = p.scaling_factor;
            if (p.enter_maintenance && !rtu.maintenance) {
                rtu.maintenance = true;
                note(t, p.rtu, "maintenance mode enabled (no work order on file)");
            }
            if (p.scaling_ioa)
                note(t, p.rtu, "measurement scaling table updated for object " +
                                   std::to_string(*p.scaling_ioa));
            break;
        }
        case attack::Kind::cover_up: {
            const auto& p = std::get<attack::CoverUpParams>(a.params);
            auto& rtu = rtus_.at(p.rtu);
            // Freeze the falsified points at their last reported values, then
            // drive the asset locally. No telecontrol traffic, no log entry:
            // the device has been made to lie.
            for (auto ioa : p.falsified_ioas) {
                auto it = rtu.last_report.find(ioa);
                if (it != rtu.last_report.end()) rtu.frozen[ioa] = it->second;
            }
            const auto& asset = truth_.assets[truth_.asset_index(p.asset_id)];
            coverup_prev_[a.id] = asset.p_set_pu;
            const double clamped = std::clamp(p.forced_setpoint_pu, asset.p_min_pu,
                                              asset.p_max_pu);
            auto result =
                grid::apply_command(truth_, grid::SetpointCommand{p.asset_id, clamped});
            if (auto* ok = std::get_if<grid::GridNetwork>(&result)) truth_ = *ok;
            break;
        }
        case attack::Kind::traffic_copy: {
            const auto& p = std::get<attack::TrafficCopyParams>(a.params);
            const auto* coll = s_.topology.find_node(p.collector);
            const net::L3Addr coll_l3 = coll->l3;
            const net::L2Addr coll_l2 = coll->l2;
            const std::uint16_t coll_port = p.collector_port;
            // Re-inject copies at the edge side of the monitored link so they
            // travel the network like any other frame.
            DeviceId resend_from;
            for (const auto& l : s_.topology.links) {
                if (l.id != p.link_id) continue;
                const auto* na = s_.topology.find_node(l.a);
                const auto* nb = s_.topology.find_node(l.b);
                const auto edge = [](const net::TopologyNode* n) {
                    return n->kind == net::NodeKind::rtu ||
                           n->kind == net::NodeKind::scada ||
                           n->kind == net::NodeKind::terminal_server;
                };
                resend_from = edge(na) ? na->id : edge(nb) ? nb->id : l.a;
            }
            net::PayloadMutator m;
            m.link_id = p.link_id;
            m.from_ms = a.start_ms;
            m.to_ms = p.end_ms;
            m.apply = [this, coll_l3, coll_l2, coll_port,
                       resend_from](net::Packet& pkt, SimTimeMs at) {
                if (pkt.kind != net::PacketKind::data) return;
                if (pkt.dst_l3 == coll_l3) return;  // do not copy the copies
                net::Packet copy = pkt;
                copy.dst_l3 = coll_l3;
                copy.dst_l2 = coll_l2;
                copy.dst_port = coll_port;
                net_.send(resend_from, std::move(copy), at);
            };
            net_.install_mutator(std::move(m));
            break;
        }
    }

    // End-of-window restoration for the cover-up: the device returns to
    // honest reporting. Handled lazily in the report cycle via `frozen` and
    // the stored window. Scheduling state: remember restore points.
    record(sim::AttackMarker{t, truth});
    truths_.push_back(truth);
}

// --- Periodic work ----------------------------------------------------------

void Engine::apply_profile(SimTimeMs t) {
    const auto& scale = s_.profile.scale;
    const std::size_t idx =
        static_cast<std::size_t>((t / s_.profile.step_ms) %
                                 static_cast<SimTimeMs>(scale.size()));
    const double k = scale[idx];
    for (auto& a : truth_.assets)
        if (a.kind == grid::AssetKind::load) a.p_set_pu = a.p_min_pu * k;
}

void Engine::report_cycle(SimTimeMs t, const grid::FlowSolution& sol) {
    const auto meas = grid::generate_measurements(truth_, sol, s_.datapoints,
                                                  s_.noise_sigma_pu, rng_, t);
    for (auto& [id, rtu] : rtus_) {
        // Snapshot this device's points, applying device-side falsification.
        Asdu floats;
        floats.type_id = TypeId::measured_float;
        floats.cot = Cot::spontaneous;
        floats.common_address = rtu.common_address;
        Asdu points;
        points.type_id = TypeId::single_point;
        points.cot = Cot::spontaneous;
        points.common_address = rtu.common_address;
        for (const auto& m : s_.datapoints.measurements) {
            if (m.rtu != id) continue;
            auto vit = meas.values.find(m.ioa);
            if (vit == meas.values.end()) continue;
            double v = vit->second.value;
            if (auto fit = rtu.scaling.find(m.ioa); fit != rtu.scaling.end())
                v *= fit->second;
            if (auto fit = rtu.frozen.find(m.ioa); fit != rtu.frozen.end())
                v = fit->second;
            rtu.last_report[m.ioa] = v;
            if (m.quantity == grid::Quantity::bus_injection ||
                m.quantity == grid::Quantity::branch_flow) {
                floats.objects.push_back(
                    {m.ioa, iec104::MeasuredFloat{static_cast<float>(v),
                                                  iec104::Quality::good}});
            } else if (m.quantity == grid::Quantity::breaker_state) {
                points.objects.push_back({m.ioa, iec104::SinglePoint{v > 0.5}});
            }
        }

        // Spontaneous reporting goes to the engineered control center only.
        auto& conn = conns_.at(id);
        if (!conn.started) continue;
        auto center = rtu.peers.find(peer_key(scada_l3_, conn.local_port));
        if (center == rtu.peers.end()) continue;
        auto send_asdu = [&](Asdu a) {
            send_i_frame(t, id, center->second.sess, rtu.l3, iec104::kDefaultPort,
                         scada_l3_, conn.local_port, std::move(a));
        };
        if (!floats.objects.empty()) send_asdu(floats);
        if (!points.objects.empty()) send_asdu(points);

        if (s_.monitoring.heartbeat_period_ms > 0 &&
            t % s_.monitoring.heartbeat_period_ms == 0) {
            const auto* spec = s_.find_rtu(id);
            if (spec) {
                Asdu hb;
                hb.type_id = TypeId::single_point;
                hb.cot = Cot::spontaneous;
                hb.common_address = rtu.common_address;
                hb.objects.push_back({spec->status_ioa, iec104::SinglePoint{true}});
                rtu.last_report[spec->status_ioa] = 1.0;
                send_asdu(std::move(hb));
            }
        }
    }
}

// --- Event plumbing ---------------------------------------------------------

void Engine::handle_net_event(const net::NetEvent& ev) {
    if (const auto* d = std::get_if<net::Delivery>(&ev)) {
        deliver(*d);
        return;
    }
    if (const auto* t = std::get_if<net::Tapped>(&ev)) {
        record(sim::PacketSeen{t->t_ms, t->at, t->packet});
        return;
    }
    if (const auto* d = std::get_if<net::Dropped>(&ev)) {
        record(sim::PacketDropped{d->t_ms, d->at, d->reason, d->packet});
        return;
    }
    if (const auto* l = std::get_if<net::LinkChanged>(&ev)) {
        record(sim::LinkChanged{l->t_ms, l->link_id, l->up});
        return;
    }
}

void Engine::deliver(const net::Delivery& d) {
    if (d.at == scada_id_) {
        scada_deliver(d.t_ms, d.packet);
        return;
    }
    if (auto it = rtus_.find(d.at); it != rtus_.end()) {
        rtu_deliver(d.t_ms, it->second, d.packet);
        return;
    }
    for (auto& fsm : attackers_)
        if (fsm.node == d.at) attacker_deliver(d.t_ms, fsm, d.packet);
}

// --- Main loop --------------------------------------------------------------

RunArtifacts Engine::run() {
    sim::json meta;
    meta["t"] = 0;
    meta["kind"] = "meta";
    meta["scenario"] = scenario_to_json(s_);
    event_log_.push_back(std::move(meta));

    // Cover-up windows need explicit restoration at their end; the setpoint
    // to return to is captured by start_attack when the force is applied.
    struct Restore {
        SimTimeMs t_ms;
        std::string action_id;
        DeviceId rtu;
        std::vector<std::uint32_t> ioas;
        std::string asset;
    };
    std::vector<Restore> restores;
    for (const auto& a : s_.attacks) {
        if (a.kind != attack::Kind::cover_up) continue;
        const auto& p = std::get<attack::CoverUpParams>(a.params);
        restores.push_back(
            Restore{p.end_ms, a.id, p.rtu, p.falsified_ioas, p.asset_id});
    }

    // Session bring-up at t = 0, in roster order.
    for (const auto& r : s_.rtus) {
        auto& conn = conns_.at(r.id);
        net::Packet pkt = base_packet(scada_l3_, conn.local_port, conn.rtu_l3,
                                      iec104::kDefaultPort,
                                      net::PacketKind::connect_request);
        net_.send(scada_id_, std::move(pkt), 0);
    }

    const SimTimeMs period = s_.reporting_period_ms;
    SimTimeMs prev = -1;
    for (SimTimeMs t = 0; t <= s_.duration_ms; t += period) {
        now_ = t;
        net_.run_until(t, [this](const net::NetEvent& ev) { handle_net_event(ev); });

        for (const auto& e : s_.schedule) {
            if (e.t_ms <= prev || e.t_ms > t) continue;
            switch (e.kind) {
                case scenario::ScheduleEntry::Kind::setpoint:
                case scenario::ScheduleEntry::Kind::breaker:
                    scada_send_command(t, e);
                    break;
                case scenario::ScheduleEntry::Kind::interrogation:
                    if (e.target.empty()) {
                        for (const auto& r : s_.rtus)
                            scada_send_interrogation(t, r.id);
                    } else {
                        scada_send_interrogation(t, e.target);
                    }
                    break;
                case scenario::ScheduleEntry::Kind::trip: {
                    auto& br = truth_.branches[truth_.branch_index(e.target)];
                    if (br.breaker_closed) {
                        br.breaker_closed = false;
                        // Protection acted locally; the owning device logs it.
                        for (const auto& m : s_.datapoints.measurements)
                            if (m.quantity == grid::Quantity::breaker_state &&
                                m.ref == e.target) {
                                note(t, m.rtu,
                                     "protection trip: breaker " + e.target +
                                         " opened locally");
                                break;
                            }
                    }
                    break;
                }
                case scenario::ScheduleEntry::Kind::link:
                    net_.set_link_state(e.target, e.flag, t);
                    break;
            }
        }
        for (const auto& a : s_.attacks) {
            if (a.start_ms <= prev || a.start_ms > t) continue;
            start_attack(t, a);
        }
        for (const auto& r : restores) {
            if (r.t_ms <= prev || r.t_ms > t) continue;
            auto prev_it = coverup_prev_.find(r.action_id);
            if (prev_it == coverup_prev_.end()) continue;  // never started
            auto& rtu = rtus_.at(r.rtu);
            for (auto ioa : r.ioas) rtu.frozen.erase(ioa);
            auto result = grid::apply_command(
                truth_, grid::SetpointCommand{r.asset, prev_it->second});
            if (auto* ok = std::get_if<grid::GridNetwork>(&result)) truth_ = *ok;
        }

        apply_profile(t);
        const auto sol = grid::solve_dc_power_flow_tolerant(truth_);
        record(sim::GridStep{t, t / period});
        if (t > 0) report_cycle(t, sol);
        prev = t;
    }

    RunArtifacts art;
    art.event_log = std::move(event_log_);
    art.alerts = pipeline_.alerts();
    art.monitoring_log = pipeline_.monitoring_log();
    art.incidents = corr::correlate(art.alerts, s_.topology, s_.correlation);
    art.assessments = corr::assess_compromise(art.alerts, s_.topology, s_.correlation);
    art.incident_report_md = render_incident_report(
        s_, art.alerts, art.incidents, art.assessments, art.monitoring_log);
    art.metrics = metrics::to_json(
        metrics::score(s_.name, art.alerts, truths_, s_.reporting_period_ms));
    return art;
}

RunArtifacts run_scenario(scenario::Scenario s, ids::Layers layers) {
    Engine e(std::move(s), layers);
    return e.run();
}

// --- Reporting --------------------------------------------------------------

std::string render_incident_report(
    const scenario::Scenario& s, const std::vector<ids::Alert>& alerts,
    const std::vector<corr::Incident>& incidents,
    const std::vector<corr::DeviceAssessment>& assessments,
    const std::vector<sim::json>& monitoring_log) {
    std::ostringstream md;
    md << "# Incident report: " << s.name << "\n\n";
    md << "- Seed: " << s.seed << "\n";
    md << "- Duration: " << s.duration_ms << " ms\n";
    md << "- Alerts: " << alerts.size() << "\n";
    md << "- Incidents: " << incidents.size() << "\n";

    std::string final_verdict = "none";
    if (!monitoring_log.empty()) {
        const auto& last = monitoring_log.back();
        if (last.contains("verdict")) final_verdict = last["verdict"].get<std::string>();
    }
    md << "- Final monitoring verdict: " << final_verdict << "\n\n";

    if (incidents.empty()) {
        md << "No incidents: the alert log is empty.\n";
    }
    for (const auto& inc : incidents) {
        md << "## " << inc.id << "\n\n";
        md << "- Window: " << inc.first_ms << " .. " << inc.last_ms << " ms\n";
        md << "- Root suspect: `" << inc.root_suspect << "`\n";
        md << "- Alerts: " << inc.alert_indices.size() << "\n\n";
        md << "| t (ms) | layer | rule | severity | source | subject | count |\n";
        md << "|-------:|-------|------|----------|--------|---------|------:|\n";
        for (std::size_t idx : inc.alert_indices) {
            const auto& a = alerts[idx];
            md << "| " << a.t_ms << " | " << ids::to_string(a.layer) << " | "
               << a.rule << " | " << ids::to_string(a.severity) << " | "
               << a.source_node << " | " << a.subject_device << " | " << a.count
               << " |\n";
        }
        md << "\n";
    }

    md << "## Device assessment\n\n";
    bool any = false;
    md << "| device | score | band |\n|--------|------:|------|\n";
    for (const auto& as : assessments) {
        if (as.band == corr::Band::clear) continue;
        any = true;
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3f", as.score);
        md << "| " << as.device << " | " << buf << " | " << corr::to_string(as.band)
           << " |\n";
    }
    if (!any) md << "| _none above threshold_ | | |\n";
    md << "\n";

    // Machine-readable appendix for downstream tooling.
    sim::json appendix;
    appendix["incidents"] = sim::json::array();
    for (const auto& inc : incidents)
        appendix["incidents"].push_back(corr::incident_to_json(inc, alerts));
    appendix["assessments"] = sim::json::array();
    for (const auto& as : assessments)
        appendix["assessments"].push_back(corr::assessment_to_json(as));
    md << "## Appendix (JSON)\n\n```json\n" << appendix.dump(2) << "\n```\n";
    return md.str();
}

void write_artifacts(const RunArtifacts& a, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    {
        std::ofstream out(dir / "events.jsonl");
        for (const auto& e : a.event_log) out << e.dump() << "\n";
    }
    {
        std::ofstream out(dir / "alerts.jsonl");
        for (const auto& al : a.alerts) out << ids::alert_to_json(al).dump() << "\n";
    }
    {
        std::ofstream out(dir / "monitoring.jsonl");
        for (const auto& m : a.monitoring_log) out << m.dump() << "\n";
    }
    {
        std::ofstream out(dir / "incidents.md");
        out << a.incident_report_md;
    }
    {
        std::ofstream out(dir / "metrics.json");
        out << a.metrics.dump(2) << "\n";
    }
}

}  // namespace otlab::engine
