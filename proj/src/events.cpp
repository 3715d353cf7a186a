#include "otlab/events.hpp"

namespace otlab::sim {

SimTimeMs event_time(const SimEvent& e) {
    return std::visit([](const auto& ev) { return ev.t_ms; }, e);
}

std::string hex_encode(std::span<const std::uint8_t> bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0F]);
    }
    return out;
}

std::optional<std::vector<std::uint8_t>> hex_decode(const std::string& s) {
    if (s.size() % 2 != 0) return std::nullopt;
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    std::vector<std::uint8_t> out;
    out.reserve(s.size() / 2);
    for (std::size_t i = 0; i < s.size(); i += 2) {
        const int hi = nibble(s[i]), lo = nibble(s[i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

json packet_to_json(const net::Packet& p) {
    json j;
    j["id"] = p.packet_id;
    j["srcL2"] = net::to_string(p.src_l2);
    j["dstL2"] = net::to_string(p.dst_l2);
    j["srcL3"] = net::to_string(p.src_l3);
    j["dstL3"] = net::to_string(p.dst_l3);
    j["srcPort"] = p.src_port;
    j["dstPort"] = p.dst_port;
    j["kind"] = net::to_string(p.kind);
    j["payload"] = hex_encode(p.payload);
    return j;
}

std::optional<net::Packet> packet_from_json(const json& j) {
    try {
        net::Packet p;
        p.packet_id = j.at("id").get<std::uint64_t>();
        auto sl2 = net::l2_from_string(j.at("srcL2").get<std::string>());
        auto dl2 = net::l2_from_string(j.at("dstL2").get<std::string>());
        auto sl3 = net::l3_from_string(j.at("srcL3").get<std::string>());
        auto dl3 = net::l3_from_string(j.at("dstL3").get<std::string>());
        auto kind = net::packet_kind_from_string(j.at("kind").get<std::string>());
        auto payload = hex_decode(j.at("payload").get<std::string>());
        if (!sl2 || !dl2 || !sl3 || !dl3 || !kind || !payload) return std::nullopt;
        p.src_l2 = *sl2;
        p.dst_l2 = *dl2;
        p.src_l3 = *sl3;
        p.dst_l3 = *dl3;
        p.src_port = j.at("srcPort").get<std::uint16_t>();
        p.dst_port = j.at("dstPort").get<std::uint16_t>();
        p.kind = *kind;
        p.payload = std::move(*payload);
        return p;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

json ground_truth_to_json(const GroundTruth& g) {
    json j;
    j["id"] = g.attack_id;
    j["kind"] = g.kind;
    j["start"] = g.start_ms;
    j["end"] = g.end_ms;
    j["nodes"] = g.nodes;
    j["ioas"] = g.ioas;
    j["detectable"] = g.detectable;
    return j;
}

std::optional<GroundTruth> ground_truth_from_json(const json& j) {
    try {
        GroundTruth g;
        g.attack_id = j.at("id").get<std::string>();
        g.kind = j.at("kind").get<std::string>();
        g.start_ms = j.at("start").get<SimTimeMs>();
        g.end_ms = j.at("end").get<SimTimeMs>();
        g.nodes = j.at("nodes").get<std::vector<DeviceId>>();
        g.ioas = j.at("ioas").get<std::vector<std::uint32_t>>();
        g.detectable = j.at("detectable").get<bool>();
        return g;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

json event_to_json(const SimEvent& e) {
    json j;
    std::visit(
        [&j](const auto& ev) {
            using T = std::decay_t<decltype(ev)>;
            j["t"] = ev.t_ms;
            if constexpr (std::is_same_v<T, PacketSeen>) {
                j["kind"] = "packet";
                j["at"] = ev.at;
                j["packet"] = packet_to_json(ev.packet);
            } else if constexpr (std::is_same_v<T, PacketDropped>) {
                j["kind"] = "drop";
                j["at"] = ev.at;
                j["reason"] = net::to_string(ev.reason);
                j["packet"] = packet_to_json(ev.packet);
            } else if constexpr (std::is_same_v<T, LinkChanged>) {
                j["kind"] = "link";
                j["link"] = ev.link_id;
                j["up"] = ev.up;
            } else if constexpr (std::is_same_v<T, GridStep>) {
                j["kind"] = "grid-step";
                j["step"] = ev.step;
            } else if constexpr (std::is_same_v<T, AttackMarker>) {
                j["kind"] = "attack";
                j["attack"] = ground_truth_to_json(ev.truth);
            } else if constexpr (std::is_same_v<T, DeviceNote>) {
                j["kind"] = "note";
                j["device"] = ev.device;
                j["text"] = ev.text;
            }
        },
        e);
    return j;
}

std::optional<SimEvent> event_from_json(const json& j) {
    try {
        const auto kind = j.at("kind").get<std::string>();
        const auto t = j.at("t").get<SimTimeMs>();
        if (kind == "packet") {
            auto p = packet_from_json(j.at("packet"));
            if (!p) return std::nullopt;
            return SimEvent{PacketSeen{t, j.at("at").get<std::string>(), *p}};
        }
        if (kind == "drop") {
            auto p = packet_from_json(j.at("packet"));
            auto reason =
                net::drop_reason_from_string(j.at("reason").get<std::string>());
            if (!p || !reason) return std::nullopt;
            return SimEvent{
                PacketDropped{t, j.at("at").get<std::string>(), *reason, *p}};
        }
        if (kind == "link") {
            return SimEvent{LinkChanged{t, j.at("link").get<std::string>(),
                                        j.at("up").get<bool>()}};
        }
        if (kind == "grid-step") {
            return SimEvent{GridStep{t, j.at("step").get<std::int64_t>()}};
        }
        if (kind == "attack") {
            auto g = ground_truth_from_json(j.at("attack"));
            if (!g) return std::nullopt;
            return SimEvent{AttackMarker{t, *g}};
        }
        if (kind == "note") {
            return SimEvent{DeviceNote{t, j.at("device").get<std::string>(),
                                       j.at("text").get<std::string>()}};
        }
        return std::nullopt;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

}  // namespace otlab::sim
