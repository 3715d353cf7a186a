#include "otlab/iec104.hpp"

#include <bit>
#include <cstring>

namespace otlab::iec104 {

namespace {

constexpr std::size_t kAsduHeaderSize = 6;  // type, vsq, cot, originator, CA lo/hi
constexpr std::size_t kIoaSize = 3;

bool valid_type_raw(std::uint8_t t) {
    return t == 1 || t == 13 || t == 45 || t == 50 || t == 100;
}

bool valid_cot_raw(std::uint8_t c) {
    return c == 3 || c == 6 || c == 7 || c == 10 || c == 20;
}

bool valid_u_raw(std::uint8_t f) {
    switch (f) {
        case 0x07: case 0x0B: case 0x13: case 0x23: case 0x43: case 0x83:
            return true;
        default:
            return false;
    }
}

void put_u16le(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::uint16_t get_u16le(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void encode_payload(std::vector<std::uint8_t>& out, const ObjectPayload& payload) {
    std::visit(
        [&out](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, SinglePoint>) {
                out.push_back(p.on ? 0x01 : 0x00);
            } else if constexpr (std::is_same_v<T, MeasuredFloat>) {
                auto raw = std::bit_cast<std::uint32_t>(p.value);
                put_u16le(out, static_cast<std::uint16_t>(raw & 0xFFFF));
                put_u16le(out, static_cast<std::uint16_t>(raw >> 16));
                out.push_back(static_cast<std::uint8_t>(p.quality));
            } else if constexpr (std::is_same_v<T, SingleCommand>) {
                std::uint8_t b = p.on ? 0x01 : 0x00;
                if (p.negative) b |= 0x80;
                out.push_back(b);
            } else if constexpr (std::is_same_v<T, SetpointFloat>) {
                auto raw = std::bit_cast<std::uint32_t>(p.value);
                put_u16le(out, static_cast<std::uint16_t>(raw & 0xFFFF));
                put_u16le(out, static_cast<std::uint16_t>(raw >> 16));
                out.push_back(p.negative ? 0x80 : 0x00);
            } else if constexpr (std::is_same_v<T, InterrogationQualifier>) {
                if (p.qoi != 20)
                    throw CodecInvariantViolation("interrogation qualifier must be 20");
                out.push_back(p.qoi);
            }
        },
        payload);
}

TypeId payload_type(const ObjectPayload& payload) {
    switch (payload.index()) {
        case 0: return TypeId::single_point;
        case 1: return TypeId::measured_float;
        case 2: return TypeId::single_command;
        case 3: return TypeId::setpoint_float;
        default: return TypeId::interrogation;
    }
}

// Parses one object payload; returns false on any reserved-bit or range
// violation so the caller can report malformed_asdu.
bool decode_payload(TypeId type, const std::uint8_t* p, ObjectPayload& out) {
    switch (type) {
        case TypeId::single_point: {
            if (p[0] != 0x00 && p[0] != 0x01) return false;
            out = SinglePoint{p[0] == 0x01};
            return true;
        }
        case TypeId::measured_float: {
            std::uint32_t raw = static_cast<std::uint32_t>(get_u16le(p)) |
                                (static_cast<std::uint32_t>(get_u16le(p + 2)) << 16);
            if (p[4] != 0x00 && p[4] != 0x80) return false;
            out = MeasuredFloat{std::bit_cast<float>(raw), static_cast<Quality>(p[4])};
            return true;
        }
        case TypeId::single_command: {
            if ((p[0] & 0x7E) != 0) return false;  // only ON and negative bits
            out = SingleCommand{(p[0] & 0x01) != 0, (p[0] & 0x80) != 0};
            return true;
        }
        case TypeId::setpoint_float: {
            std::uint32_t raw = static_cast<std::uint32_t>(get_u16le(p)) |
                                (static_cast<std::uint32_t>(get_u16le(p + 2)) << 16);
            if (p[4] != 0x00 && p[4] != 0x80) return false;
            out = SetpointFloat{std::bit_cast<float>(raw), p[4] == 0x80};
            return true;
        }
        case TypeId::interrogation: {
            if (p[0] != 20) return false;
            out = InterrogationQualifier{p[0]};
            return true;
        }
    }
    return false;
}

}  // namespace

bool MeasuredFloat::operator==(const MeasuredFloat& o) const {
    return std::bit_cast<std::uint32_t>(value) == std::bit_cast<std::uint32_t>(o.value) &&
           quality == o.quality;
}

bool SetpointFloat::operator==(const SetpointFloat& o) const {
    return std::bit_cast<std::uint32_t>(value) == std::bit_cast<std::uint32_t>(o.value) &&
           negative == o.negative;
}

std::size_t payload_size(TypeId t) {
    switch (t) {
        case TypeId::single_point: return 1;
        case TypeId::measured_float: return 5;
        case TypeId::single_command: return 1;
        case TypeId::setpoint_float: return 5;
        case TypeId::interrogation: return 1;
    }
    return 0;
}

bool is_monitor_type(TypeId t) {
    return t == TypeId::single_point || t == TypeId::measured_float;
}

bool is_command_type(TypeId t) {
    return t == TypeId::single_command || t == TypeId::setpoint_float ||
           t == TypeId::interrogation;
}

std::vector<std::uint8_t> encode_apdu(const Apdu& apdu) {
    std::vector<std::uint8_t> out;
    out.push_back(kStartByte);
    out.push_back(0);  // length patched below

    if (std::holds_alternative<IControl>(apdu.control)) {
        const auto& c = std::get<IControl>(apdu.control);
        if (c.send_seq >= kSeqModulus || c.recv_seq >= kSeqModulus)
            throw CodecInvariantViolation("sequence number exceeds 15 bits");
        if (!apdu.asdu)
            throw CodecInvariantViolation("I frame requires an ASDU");
        put_u16le(out, static_cast<std::uint16_t>(c.send_seq << 1));
        put_u16le(out, static_cast<std::uint16_t>(c.recv_seq << 1));

        const Asdu& a = *apdu.asdu;
        if (a.objects.empty() || a.objects.size() > 127)
            throw CodecInvariantViolation("object count must be 1..127");
        if (is_command_type(a.type_id) && a.objects.size() != 1)
            throw CodecInvariantViolation("command ASDUs carry exactly one object");
        if (a.common_address == 0 || a.common_address == 0xFFFF)
            throw CodecInvariantViolation("common address out of range");

        out.push_back(static_cast<std::uint8_t>(a.type_id));
        out.push_back(static_cast<std::uint8_t>(a.objects.size()));  // VSQ, SQ=0
        out.push_back(static_cast<std::uint8_t>(a.cot));
        out.push_back(0);  // originator address
        put_u16le(out, a.common_address);
        for (const auto& obj : a.objects) {
            if (payload_type(obj.payload) != a.type_id)
                throw CodecInvariantViolation("object payload does not match ASDU type");
            if (obj.ioa >= (1u << 24))
                throw CodecInvariantViolation("information object address exceeds 24 bits");
            out.push_back(static_cast<std::uint8_t>(obj.ioa & 0xFF));
            out.push_back(static_cast<std::uint8_t>((obj.ioa >> 8) & 0xFF));
            out.push_back(static_cast<std::uint8_t>((obj.ioa >> 16) & 0xFF));
            encode_payload(out, obj.payload);
        }
    } else if (std::holds_alternative<SControl>(apdu.control)) {
        const auto& c = std::get<SControl>(apdu.control);
        if (c.recv_seq >= kSeqModulus)
            throw CodecInvariantViolation("sequence number exceeds 15 bits");
        if (apdu.asdu)
            throw CodecInvariantViolation("S frame carries no ASDU");
        out.push_back(0x01);
        out.push_back(0x00);
        put_u16le(out, static_cast<std::uint16_t>(c.recv_seq << 1));
    } else {
        const auto& c = std::get<UControl>(apdu.control);
        if (apdu.asdu)
            throw CodecInvariantViolation("U frame carries no ASDU");
        out.push_back(static_cast<std::uint8_t>(c.function));
        out.push_back(0x00);
        out.push_back(0x00);
        out.push_back(0x00);
    }

    std::size_t length = out.size() - 2;
    if (length > kMaxApduLength)
        throw CodecInvariantViolation("APDU length exceeds 253 octets");
    out[1] = static_cast<std::uint8_t>(length);
    return out;
}

DecodeResult decode_apdu(std::span<const std::uint8_t> bytes) {
    DecodeResult r;
    auto malformed = [&r] {
        r.status = DecodeStatus::malformed_asdu;
        return r;
    };

    if (bytes.empty()) {
        r.status = DecodeStatus::need_more_data;
        r.needed = 2;
        return r;
    }
    if (bytes[0] != kStartByte) {
        r.status = DecodeStatus::bad_start_byte;
        return r;
    }
    if (bytes.size() < 2) {
        r.status = DecodeStatus::need_more_data;
        r.needed = 2;
        return r;
    }

    const std::size_t length = bytes[1];
    if (length < 4 || length > kMaxApduLength) return malformed();
    const std::size_t total = length + 2;
    if (bytes.size() < total) {
        r.status = DecodeStatus::need_more_data;
        r.needed = total;
        return r;
    }

    const std::uint8_t* b = bytes.data();
    const std::uint8_t c0 = b[2], c1 = b[3], c2 = b[4], c3 = b[5];

    if ((c0 & 0x01) == 0) {
        // I format
        if ((c2 & 0x01) != 0) return malformed();
        IControl ctl;
        ctl.send_seq = static_cast<std::uint16_t>(get_u16le(b + 2) >> 1);
        ctl.recv_seq = static_cast<std::uint16_t>(get_u16le(b + 4) >> 1);

        const std::size_t asdu_len = length - 4;
        if (asdu_len < kAsduHeaderSize + kIoaSize + 1) return malformed();
        const std::uint8_t* p = b + 6;

        if (!valid_type_raw(p[0])) {
            r.status = DecodeStatus::unknown_type_id;
            return r;
        }
        Asdu asdu;
        asdu.type_id = static_cast<TypeId>(p[0]);
        const std::uint8_t vsq = p[1];
        if ((vsq & 0x80) != 0) return malformed();  // sequence addressing unsupported
        const std::size_t count = vsq & 0x7F;
        if (count == 0) return malformed();
        if (is_command_type(asdu.type_id) && count != 1) return malformed();
        if (!valid_cot_raw(p[2])) return malformed();
        asdu.cot = static_cast<Cot>(p[2]);
        if (p[3] != 0) return malformed();  // originator address fixed at zero
        asdu.common_address = get_u16le(p + 4);
        if (asdu.common_address == 0 || asdu.common_address == 0xFFFF) return malformed();

        const std::size_t object_size = kIoaSize + payload_size(asdu.type_id);
        if (asdu_len != kAsduHeaderSize + count * object_size) return malformed();

        const std::uint8_t* op = p + kAsduHeaderSize;
        asdu.objects.reserve(count);
        for (std::size_t i = 0; i < count; ++i, op += object_size) {
            InformationObject obj;
            obj.ioa = static_cast<std::uint32_t>(op[0]) |
                      (static_cast<std::uint32_t>(op[1]) << 8) |
                      (static_cast<std::uint32_t>(op[2]) << 16);
            if (!decode_payload(asdu.type_id, op + kIoaSize, obj.payload))
                return malformed();
            asdu.objects.push_back(std::move(obj));
        }
        r.apdu = Apdu{ctl, std::move(asdu)};
    } else if ((c0 & 0x03) == 0x01) {
        // S format
        if (c0 != 0x01 || c1 != 0x00) return malformed();
        if ((c2 & 0x01) != 0) return malformed();
        if (length != 4) return malformed();
        r.apdu = Apdu::s_frame(static_cast<std::uint16_t>(get_u16le(b + 4) >> 1));
    } else {
        // U format
        if (!valid_u_raw(c0)) return malformed();
        if (c1 != 0 || c2 != 0 || c3 != 0) return malformed();
        if (length != 4) return malformed();
        r.apdu = Apdu::u_frame(static_cast<UFunction>(c0));
    }

    r.status = DecodeStatus::ok;
    r.consumed = total;
    return r;
}

SessionStep session_accept(SessionState s, const Apdu& frame, Direction dir) {
    SessionStep step;
    auto& events = step.events;

    if (std::holds_alternative<UControl>(frame.control)) {
        const auto fn = std::get<UControl>(frame.control).function;
        if (dir == Direction::inbound) {
            switch (fn) {
                case UFunction::startdt_act:
                    s.started = true;
                    events.push_back({SessionEvent::Kind::reply_with,
                                      UFunction::startdt_con, 0, 0});
                    break;
                case UFunction::startdt_con:
                    s.started = true;
                    break;
                case UFunction::stopdt_act:
                    s.started = false;
                    events.push_back({SessionEvent::Kind::reply_with,
                                      UFunction::stopdt_con, 0, 0});
                    break;
                case UFunction::stopdt_con:
                    s.started = false;
                    break;
                case UFunction::testfr_act:
                    events.push_back({SessionEvent::Kind::reply_with,
                                      UFunction::testfr_con, 0, 0});
                    break;
                case UFunction::testfr_con:
                    break;
            }
        }
        // Outbound U frames change nothing; the state transition happens when
        // the peer's confirmation arrives.
    } else if (std::holds_alternative<SControl>(frame.control)) {
        if (dir == Direction::inbound)
            s.peer_acked = std::get<SControl>(frame.control).recv_seq;
    } else {
        const auto& ctl = std::get<IControl>(frame.control);
        if (!s.started) {
            events.push_back({SessionEvent::Kind::data_before_start,
                              UFunction::testfr_con, 0, 0});
        }
        if (dir == Direction::inbound) {
            if (ctl.send_seq != s.next_expected) {
                events.push_back({SessionEvent::Kind::sequence_error,
                                  UFunction::testfr_con, s.next_expected,
                                  ctl.send_seq});
            }
            s.next_expected = seq_next(ctl.send_seq);  // resync on mismatch
            s.peer_acked = ctl.recv_seq;
        } else {
            if (ctl.send_seq != s.next_send) {
                events.push_back({SessionEvent::Kind::sequence_error,
                                  UFunction::testfr_con, s.next_send,
                                  ctl.send_seq});
            }
            s.next_send = seq_next(ctl.send_seq);
        }
    }

    step.state = s;
    return step;
}

const char* to_string(TypeId t) {
    switch (t) {
        case TypeId::single_point: return "M_SP_NA_1";
        case TypeId::measured_float: return "M_ME_NC_1";
        case TypeId::single_command: return "C_SC_NA_1";
        case TypeId::setpoint_float: return "C_SE_NC_1";
        case TypeId::interrogation: return "C_IC_NA_1";
    }
    return "?";
}

const char* to_string(Cot c) {
    switch (c) {
        case Cot::spontaneous: return "spontaneous";
        case Cot::activation: return "activation";
        case Cot::activation_con: return "activation-con";
        case Cot::activation_term: return "activation-term";
        case Cot::interrogated: return "interrogated";
    }
    return "?";
}

const char* to_string(UFunction f) {
    switch (f) {
        case UFunction::startdt_act: return "STARTDT_act";
        case UFunction::startdt_con: return "STARTDT_con";
        case UFunction::stopdt_act: return "STOPDT_act";
        case UFunction::stopdt_con: return "STOPDT_con";
        case UFunction::testfr_act: return "TESTFR_act";
        case UFunction::testfr_con: return "TESTFR_con";
    }
    return "?";
}

const char* to_string(DecodeStatus s) {
    switch (s) {
        case DecodeStatus::ok: return "ok";
        case DecodeStatus::bad_start_byte: return "bad-start-byte";
        case DecodeStatus::need_more_data: return "need-more-data";
        case DecodeStatus::unknown_type_id: return "unknown-type-id";
        case DecodeStatus::malformed_asdu: return "malformed-asdu";
    }
    return "?";
}

}  // namespace otlab::iec104
