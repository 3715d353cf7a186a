#pragma once

// Telecontrol framing for the SCADA <-> RTU links. Implements the subset of
// IEC 60870-5-104 the simulated field devices speak: I/S/U frame formats with
// 15-bit sequence numbers and five ASDU types (single-point status, short
// floating point measurement, single command, setpoint command, general
// interrogation). The decoder is total: any byte string yields either a frame
// or a status, never undefined behaviour.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace otlab::iec104 {

constexpr std::uint8_t kStartByte = 0x68;
constexpr std::size_t kMaxApduLength = 253;   // value of the length octet
constexpr std::uint16_t kSeqModulus = 1u << 15;
constexpr std::uint16_t kDefaultPort = 2404;

enum class TypeId : std::uint8_t {
    single_point = 1,        // M_SP_NA_1
    measured_float = 13,     // M_ME_NC_1
    single_command = 45,     // C_SC_NA_1
    setpoint_float = 50,     // C_SE_NC_1
    interrogation = 100,     // C_IC_NA_1
};

enum class Cot : std::uint8_t {
    spontaneous = 3,
    activation = 6,
    activation_con = 7,
    activation_term = 10,
    interrogated = 20,
};

enum class Quality : std::uint8_t {
    good = 0x00,
    invalid = 0x80,  // IV bit set
};

// The six plain (unnumbered) control functions, encoded in control octet 1.
enum class UFunction : std::uint8_t {
    startdt_act = 0x07,
    startdt_con = 0x0B,
    stopdt_act = 0x13,
    stopdt_con = 0x23,
    testfr_act = 0x43,
    testfr_con = 0x83,
};

struct SinglePoint {
    bool on = false;
    bool operator==(const SinglePoint&) const = default;
};

struct MeasuredFloat {
    float value = 0.0f;
    Quality quality = Quality::good;
    bool operator==(const MeasuredFloat& o) const;  // bit-exact on value
};

struct SingleCommand {
    bool on = false;
    bool negative = false;  // set on a negative confirmation
    bool operator==(const SingleCommand&) const = default;
};

struct SetpointFloat {
    float value = 0.0f;
    bool negative = false;
    bool operator==(const SetpointFloat& o) const;  // bit-exact on value
};

struct InterrogationQualifier {
    std::uint8_t qoi = 20;  // station interrogation
    bool operator==(const InterrogationQualifier&) const = default;
};

using ObjectPayload = std::variant<SinglePoint, MeasuredFloat, SingleCommand,
                                   SetpointFloat, InterrogationQualifier>;

struct InformationObject {
    std::uint32_t ioa = 0;  // 24-bit information object address
    ObjectPayload payload;
    bool operator==(const InformationObject&) const = default;
};

struct Asdu {
    TypeId type_id = TypeId::single_point;
    Cot cot = Cot::spontaneous;
    std::uint16_t common_address = 0;
    std::vector<InformationObject> objects;
    bool operator==(const Asdu&) const = default;
};

struct IControl {
    std::uint16_t send_seq = 0;
    std::uint16_t recv_seq = 0;
    bool operator==(const IControl&) const = default;
};

struct SControl {
    std::uint16_t recv_seq = 0;
    bool operator==(const SControl&) const = default;
};

struct UControl {
    UFunction function = UFunction::testfr_act;
    bool operator==(const UControl&) const = default;
};

using ControlField = std::variant<IControl, SControl, UControl>;

struct Apdu {
    ControlField control;
    std::optional<Asdu> asdu;  // present iff I format
    bool operator==(const Apdu&) const = default;

    static Apdu i_frame(std::uint16_t send_seq, std::uint16_t recv_seq, Asdu a) {
        return Apdu{IControl{send_seq, recv_seq}, std::move(a)};
    }
    static Apdu s_frame(std::uint16_t recv_seq) {
        return Apdu{SControl{recv_seq}, std::nullopt};
    }
    static Apdu u_frame(UFunction f) { return Apdu{UControl{f}, std::nullopt}; }
};

enum class DecodeStatus : std::uint8_t {
    ok,
    bad_start_byte,
    need_more_data,
    unknown_type_id,
    malformed_asdu,  // any structural violation: counts, lengths, reserved bits
};

struct DecodeResult {
    DecodeStatus status = DecodeStatus::malformed_asdu;
    Apdu apdu;                // meaningful iff status == ok
    std::size_t consumed = 0; // octets consumed iff status == ok
    std::size_t needed = 0;   // total octets required iff status == need_more_data
};

// Thrown by encode_apdu when the frame violates a framing invariant (object
// count or total length out of range). Frames built by the simulator never
// trip this; it guards against programming errors.
struct CodecInvariantViolation : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

std::vector<std::uint8_t> encode_apdu(const Apdu& apdu);

// Decodes one frame from the front of `bytes`. Never throws and never reads
// past `bytes`; a short buffer reports need_more_data with the total length
// required once known (2 octets to learn the length, then length + 2).
DecodeResult decode_apdu(std::span<const std::uint8_t> bytes);

std::size_t payload_size(TypeId t);
bool is_monitor_type(TypeId t);  // device -> master direction
bool is_command_type(TypeId t);  // master -> device direction

const char* to_string(TypeId t);
const char* to_string(Cot c);
const char* to_string(UFunction f);
const char* to_string(DecodeStatus s);

// ---------------------------------------------------------------------------
// Link session. Tracks start/stop state and both 15-bit sequence counters for
// one side of a connection. accept() is a pure transition: it never performs
// IO, it reports what the station should send back (confirmations, supervisory
// acks) and any anomaly worth logging.

enum class Direction : std::uint8_t { inbound, outbound };

struct SessionState {
    bool started = false;        // STARTDT handshake completed
    std::uint16_t next_send = 0;     // sequence number for our next I frame
    std::uint16_t next_expected = 0; // sequence we expect on the next inbound I frame
    std::uint16_t peer_acked = 0;    // highest recv_seq the peer has confirmed
    bool operator==(const SessionState&) const = default;
};

struct SessionEvent {
    enum class Kind : std::uint8_t {
        reply_with,        // respond with `reply` (confirmation of a U request)
        sequence_error,    // inbound I frame out of order; counters resynced
        data_before_start, // I frame seen while the session was not started
    };
    Kind kind = Kind::reply_with;
    UFunction reply = UFunction::testfr_con;  // valid for reply_with
    std::uint16_t expected = 0;               // valid for sequence_error
    std::uint16_t got = 0;                    // valid for sequence_error
};

struct SessionStep {
    SessionState state;
    std::vector<SessionEvent> events;
};

// Applies one frame to the session. `inbound` frames come from the peer,
// `outbound` frames are the ones this station sends (which advance next_send).
SessionStep session_accept(SessionState s, const Apdu& frame, Direction dir);

inline std::uint16_t seq_next(std::uint16_t s) {
    return static_cast<std::uint16_t>((s + 1) % kSeqModulus);
}

}  // namespace otlab::iec104
