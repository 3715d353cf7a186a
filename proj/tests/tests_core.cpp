#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "otlab/common.hpp"
#include "otlab/events.hpp"
#include "otlab/grid.hpp"
#include "otlab/iec104.hpp"
#include "otlab/netsim.hpp"
#include "support/apdu_gen.hpp"
#include "support/oracle.hpp"

using namespace otlab;

namespace {

std::string hex(const std::vector<std::uint8_t>& b) {
    return sim::hex_encode(std::span(b.data(), b.size()));
}

std::vector<std::uint8_t> bytes(std::initializer_list<int> v) {
    std::vector<std::uint8_t> out;
    for (int x : v) out.push_back(static_cast<std::uint8_t>(x));
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Telecontrol codec
// ---------------------------------------------------------------------------

TEST_SUITE_BEGIN("codec");

TEST_CASE("unnumbered control frames have the fixed six-octet layout") {
    using namespace iec104;
    const std::map<UFunction, int> expected = {
        {UFunction::startdt_act, 0x07}, {UFunction::startdt_con, 0x0B},
        {UFunction::stopdt_act, 0x13},  {UFunction::stopdt_con, 0x23},
        {UFunction::testfr_act, 0x43},  {UFunction::testfr_con, 0x83},
    };
    for (const auto& [fn, octet] : expected) {
        const auto enc = encode_apdu(Apdu::u_frame(fn));
        CHECK(hex(enc) == hex(bytes({0x68, 0x04, octet, 0x00, 0x00, 0x00})));
        const auto dec = decode_apdu(enc);
        REQUIRE(dec.status == DecodeStatus::ok);
        CHECK(dec.consumed == 6);
        CHECK(dec.apdu == Apdu::u_frame(fn));
    }
}

TEST_CASE("supervisory frame carries the receive sequence shifted left") {
    using namespace iec104;
    const auto enc = encode_apdu(Apdu::s_frame(5));
    CHECK(hex(enc) == hex(bytes({0x68, 0x04, 0x01, 0x00, 0x0A, 0x00})));
    const auto dec = decode_apdu(enc);
    REQUIRE(dec.status == DecodeStatus::ok);
    CHECK(dec.apdu == Apdu::s_frame(5));

    // Top of the 15-bit range.
    const auto hi = encode_apdu(Apdu::s_frame(32767));
    CHECK(hex(hi) == hex(bytes({0x68, 0x04, 0x01, 0x00, 0xFE, 0xFF})));
    CHECK(decode_apdu(hi).apdu == Apdu::s_frame(32767));
}

TEST_CASE("measurement frame matches the hand-assembled reference bytes") {
    using namespace iec104;
    // I frame, sendSeq 2, recvSeq 1; short float 12.5 (0x41480000), good
    // quality, object address 2002, station address 2, spontaneous.
    Asdu a;
    a.type_id = TypeId::measured_float;
    a.cot = Cot::spontaneous;
    a.common_address = 2;
    a.objects.push_back({2002, MeasuredFloat{12.5f, Quality::good}});
    const auto enc = encode_apdu(Apdu::i_frame(2, 1, a));
    CHECK(hex(enc) ==
          hex(bytes({0x68, 0x12, 0x04, 0x00, 0x02, 0x00,        // APCI
                     0x0D, 0x01, 0x03, 0x00, 0x02, 0x00,        // ASDU header
                     0xD2, 0x07, 0x00,                          // ioa 2002
                     0x00, 0x00, 0x48, 0x41, 0x00})));          // value+quality
    const auto dec = decode_apdu(enc);
    REQUIRE(dec.status == DecodeStatus::ok);
    CHECK(dec.consumed == enc.size());
    CHECK(dec.apdu == Apdu::i_frame(2, 1, a));
}

TEST_CASE("negative command confirmation sets the high bit of the qualifier") {
    using namespace iec104;
    Asdu a;
    a.type_id = TypeId::single_command;
    a.cot = Cot::activation_con;
    a.common_address = 3;
    a.objects.push_back({5302, SingleCommand{false, true}});
    const auto enc = encode_apdu(Apdu::i_frame(0, 7, a));
    CHECK(hex(enc) == hex(bytes({0x68, 0x0E, 0x00, 0x00, 0x0E, 0x00,
                                 0x2D, 0x01, 0x07, 0x00, 0x03, 0x00,
                                 0xB6, 0x14, 0x00, 0x80})));
    CHECK(decode_apdu(enc).apdu == Apdu::i_frame(0, 7, a));
}

TEST_CASE("interrogation and status frames match reference bytes") {
    using namespace iec104;
    Asdu gi;
    gi.type_id = TypeId::interrogation;
    gi.cot = Cot::activation;
    gi.common_address = 1;
    gi.objects.push_back({0, InterrogationQualifier{20}});
    CHECK(hex(encode_apdu(Apdu::i_frame(0, 0, gi))) ==
          hex(bytes({0x68, 0x0E, 0x00, 0x00, 0x00, 0x00, 0x64, 0x01, 0x06,
                     0x00, 0x01, 0x00, 0x00, 0x00, 0x00, 0x14})));

    Asdu hb;
    hb.type_id = TypeId::single_point;
    hb.cot = Cot::spontaneous;
    hb.common_address = 4;
    hb.objects.push_back({4901, SinglePoint{true}});
    CHECK(hex(encode_apdu(Apdu::i_frame(3, 4, hb))) ==
          hex(bytes({0x68, 0x0E, 0x06, 0x00, 0x08, 0x00, 0x01, 0x01, 0x03,
                     0x00, 0x04, 0x00, 0x25, 0x13, 0x00, 0x01})));

    Asdu sp;
    sp.type_id = TypeId::setpoint_float;
    sp.cot = Cot::activation;
    sp.common_address = 3;
    sp.objects.push_back({5301, SetpointFloat{0.05f, false}});
    CHECK(hex(encode_apdu(Apdu::i_frame(1, 1, sp))) ==
          hex(bytes({0x68, 0x12, 0x02, 0x00, 0x02, 0x00, 0x32, 0x01, 0x06,
                     0x00, 0x03, 0x00, 0xB5, 0x14, 0x00, 0xCD, 0xCC, 0x4C,
                     0x3D, 0x00})));
}

TEST_CASE("short buffers report how many octets a full frame needs") {
    using namespace iec104;
    Asdu a;
    a.type_id = TypeId::measured_float;
    a.cot = Cot::spontaneous;
    a.common_address = 2;
    a.objects.push_back({2002, MeasuredFloat{12.5f, Quality::good}});
    const auto full = encode_apdu(Apdu::i_frame(2, 1, a));
    REQUIRE(full.size() == 20);

    auto first = [&full](std::size_t n) {
        return decode_apdu(std::span(full.data(), n));
    };
    CHECK(decode_apdu({}).status == DecodeStatus::need_more_data);
    CHECK(decode_apdu({}).needed == 2);
    CHECK(first(1).status == DecodeStatus::need_more_data);
    CHECK(first(1).needed == 2);
    CHECK(first(2).status == DecodeStatus::need_more_data);
    CHECK(first(2).needed == 20);
    CHECK(first(19).status == DecodeStatus::need_more_data);
    CHECK(first(19).needed == 20);
    CHECK(first(20).status == DecodeStatus::ok);
}

TEST_CASE("a concatenated stream decodes frame by frame in order") {
    using namespace iec104;
    Rng rng(1337);
    for (int round = 0; round < 200; ++round) {
        std::vector<Apdu> frames;
        std::vector<std::uint8_t> stream;
        for (int k = 0; k < 5; ++k) {
            frames.push_back(testsupport::random_apdu(rng));
            const auto enc = encode_apdu(frames.back());
            stream.insert(stream.end(), enc.begin(), enc.end());
        }
        std::size_t offset = 0;
        for (int k = 0; k < 5; ++k) {
            const auto r = decode_apdu(
                std::span(stream.data() + offset, stream.size() - offset));
            REQUIRE(r.status == DecodeStatus::ok);
            REQUIRE(r.apdu == frames[static_cast<std::size_t>(k)]);
            offset += r.consumed;
        }
        REQUIRE(offset == stream.size());
    }
}

TEST_CASE("structurally broken frames are rejected with a precise status") {
    using namespace iec104;
    Asdu a;
    a.type_id = TypeId::measured_float;
    a.cot = Cot::spontaneous;
    a.common_address = 2;
    a.objects.push_back({2002, MeasuredFloat{12.5f, Quality::good}});
    const auto base = encode_apdu(Apdu::i_frame(2, 1, a));

    auto patched = [&base](std::size_t idx, int value) {
        auto copy = base;
        copy[idx] = static_cast<std::uint8_t>(value);
        return decode_apdu(copy).status;
    };

    CHECK(patched(0, 0x69) == DecodeStatus::bad_start_byte);
    CHECK(patched(6, 99) == DecodeStatus::unknown_type_id);
    CHECK(patched(7, 0x81) == DecodeStatus::malformed_asdu);   // SQ bit set
    CHECK(patched(7, 0x00) == DecodeStatus::malformed_asdu);   // zero objects
    CHECK(patched(7, 0x02) == DecodeStatus::malformed_asdu);   // count/len clash
    CHECK(patched(8, 99) == DecodeStatus::malformed_asdu);     // unknown cause
    CHECK(patched(9, 1) == DecodeStatus::malformed_asdu);      // originator
    CHECK(patched(4, base[4] | 0x01) == DecodeStatus::malformed_asdu);
    CHECK(patched(19, 0x40) == DecodeStatus::malformed_asdu);  // quality bits
    {
        auto copy = base;  // station address 0 is reserved
        copy[10] = 0x00;
        copy[11] = 0x00;
        CHECK(decode_apdu(copy).status == DecodeStatus::malformed_asdu);
    }

    CHECK(decode_apdu(bytes({0x68, 0x03, 0x01, 0x00, 0x00})).status ==
          DecodeStatus::malformed_asdu);  // length below minimum
    CHECK(decode_apdu(bytes({0x68, 0xFE})).status ==
          DecodeStatus::malformed_asdu);  // length above maximum
    CHECK(decode_apdu(bytes({0x68, 0x04, 0x01, 0x01, 0x00, 0x00})).status ==
          DecodeStatus::malformed_asdu);  // S frame reserved octet
    CHECK(decode_apdu(bytes({0x68, 0x05, 0x01, 0x00, 0x00, 0x00, 0x00}))
              .status == DecodeStatus::malformed_asdu);  // S frame length
    CHECK(decode_apdu(bytes({0x68, 0x04, 0x07, 0x00, 0x01, 0x00})).status ==
          DecodeStatus::malformed_asdu);  // U frame reserved octets
    CHECK(decode_apdu(bytes({0x68, 0x04, 0x0F, 0x00, 0x00, 0x00})).status ==
          DecodeStatus::malformed_asdu);  // not a control function
    CHECK(decode_apdu(bytes({0x68, 0x0A, 0x00, 0x00, 0x00, 0x00, 0x0D, 0x01,
                             0x03, 0x00, 0x02, 0x00}))
              .status == DecodeStatus::malformed_asdu);  // truncated ASDU

    {
        Asdu hb;  // double point value on a single point object
        hb.type_id = TypeId::single_point;
        hb.cot = Cot::spontaneous;
        hb.common_address = 4;
        hb.objects.push_back({1, SinglePoint{true}});
        auto copy = encode_apdu(Apdu::i_frame(0, 0, hb));
        copy.back() = 0x02;
        CHECK(decode_apdu(copy).status == DecodeStatus::malformed_asdu);
    }
    {
        Asdu gi;  // interrogation qualifier other than station interrogation
        gi.type_id = TypeId::interrogation;
        gi.cot = Cot::activation;
        gi.common_address = 1;
        gi.objects.push_back({0, InterrogationQualifier{20}});
        auto copy = encode_apdu(Apdu::i_frame(0, 0, gi));
        copy.back() = 19;
        CHECK(decode_apdu(copy).status == DecodeStatus::malformed_asdu);
    }
}

TEST_CASE("encoder refuses frames that violate framing invariants") {
    using namespace iec104;
    Asdu ok;
    ok.type_id = TypeId::single_point;
    ok.cot = Cot::spontaneous;
    ok.common_address = 1;
    ok.objects.push_back({1, SinglePoint{true}});

    CHECK_THROWS_AS(encode_apdu(Apdu::i_frame(32768, 0, ok)),
                    CodecInvariantViolation);
    CHECK_THROWS_AS(encode_apdu(Apdu{IControl{0, 0}, std::nullopt}),
                    CodecInvariantViolation);
    CHECK_THROWS_AS(encode_apdu(Apdu{SControl{0}, ok}), CodecInvariantViolation);
    CHECK_THROWS_AS(encode_apdu(Apdu{UControl{UFunction::testfr_act}, ok}),
                    CodecInvariantViolation);

    auto bad = ok;
    bad.objects.clear();
    CHECK_THROWS_AS(encode_apdu(Apdu::i_frame(0, 0, bad)),
                    CodecInvariantViolation);

    bad = ok;
    bad.common_address = 0;
    CHECK_THROWS_AS(encode_apdu(Apdu::i_frame(0, 0, bad)),
                    CodecInvariantViolation);

    bad = ok;
    bad.objects[0].ioa = 1u << 24;
    CHECK_THROWS_AS(encode_apdu(Apdu::i_frame(0, 0, bad)),
                    CodecInvariantViolation);

    bad = ok;  // payload variant does not match the declared type
    bad.type_id = TypeId::measured_float;
    CHECK_THROWS_AS(encode_apdu(Apdu::i_frame(0, 0, bad)),
                    CodecInvariantViolation);

    Asdu two_cmd;
    two_cmd.type_id = TypeId::single_command;
    two_cmd.cot = Cot::activation;
    two_cmd.common_address = 1;
    two_cmd.objects.push_back({1, SingleCommand{true, false}});
    two_cmd.objects.push_back({2, SingleCommand{true, false}});
    CHECK_THROWS_AS(encode_apdu(Apdu::i_frame(0, 0, two_cmd)),
                    CodecInvariantViolation);

    Asdu qoi;
    qoi.type_id = TypeId::interrogation;
    qoi.cot = Cot::activation;
    qoi.common_address = 1;
    qoi.objects.push_back({0, InterrogationQualifier{21}});
    CHECK_THROWS_AS(encode_apdu(Apdu::i_frame(0, 0, qoi)),
                    CodecInvariantViolation);

    Asdu oversize;  // 31 floats need 258 octets, four above the limit
    oversize.type_id = TypeId::measured_float;
    oversize.cot = Cot::spontaneous;
    oversize.common_address = 1;
    for (std::uint32_t i = 0; i < 31; ++i)
        oversize.objects.push_back({i, MeasuredFloat{1.0f, Quality::good}});
    CHECK_THROWS_AS(encode_apdu(Apdu::i_frame(0, 0, oversize)),
                    CodecInvariantViolation);
}

TEST_CASE("ten thousand random frames round-trip bit-exactly") {
    using namespace iec104;
    Rng rng(20250801);
    int mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto frame = testsupport::random_apdu(rng);
        const auto enc = encode_apdu(frame);
        const auto dec = decode_apdu(enc);
        if (dec.status != DecodeStatus::ok || dec.consumed != enc.size() ||
            !(dec.apdu == frame))
            ++mismatches;
    }
    CHECK(mismatches == 0);
}

TEST_CASE("decoder survives one hundred thousand fuzzed inputs") {
    using namespace iec104;
    Rng rng(987654321);
    int violations = 0;
    int decoded = 0;
    for (int i = 0; i < 100000; ++i) {
        std::vector<std::uint8_t> noise;
        if (i % 4 == 0) {
            // Corrupt a valid frame: flip bytes, sometimes truncate.
            noise = encode_apdu(testsupport::random_apdu(rng));
            const auto flips = 1 + rng.uniform(0, 7);
            for (std::uint64_t f = 0; f < flips; ++f)
                noise[rng.uniform(0, noise.size() - 1)] =
                    static_cast<std::uint8_t>(rng.uniform(0, 255));
            if (rng.uniform(0, 3) == 0) noise.resize(rng.uniform(0, noise.size()));
        } else {
            noise = testsupport::random_bytes(rng, 1024);
        }
        const auto r = decode_apdu(noise);
        if (r.status == DecodeStatus::ok) {
            ++decoded;
            if (r.consumed > noise.size()) ++violations;
        }
    }
    CHECK(violations == 0);
    // Mutated valid frames make sure the happy path is exercised too.
    CHECK(decoded > 0);
}

TEST_CASE("link session tracks start state and both sequence counters") {
    using namespace iec104;
    SessionState s;

    // Data before the handshake is flagged but still resyncs the counter.
    Asdu a;
    a.type_id = TypeId::single_point;
    a.cot = Cot::spontaneous;
    a.common_address = 1;
    a.objects.push_back({1, SinglePoint{true}});
    auto step = session_accept(s, Apdu::i_frame(0, 0, a), Direction::inbound);
    REQUIRE(step.events.size() == 1);
    CHECK(step.events[0].kind == SessionEvent::Kind::data_before_start);
    CHECK(step.state.next_expected == 1);

    // STARTDT request from the peer: start and confirm.
    step = session_accept(SessionState{}, Apdu::u_frame(UFunction::startdt_act),
                          Direction::inbound);
    CHECK(step.state.started);
    REQUIRE(step.events.size() == 1);
    CHECK(step.events[0].kind == SessionEvent::Kind::reply_with);
    CHECK(step.events[0].reply == UFunction::startdt_con);

    // Test-frame request earns a confirmation without touching state.
    step = session_accept(step.state, Apdu::u_frame(UFunction::testfr_act),
                          Direction::inbound);
    REQUIRE(step.events.size() == 1);
    CHECK(step.events[0].reply == UFunction::testfr_con);

    // In-order inbound data: silent, counters advance.
    s = step.state;
    step = session_accept(s, Apdu::i_frame(0, 0, a), Direction::inbound);
    CHECK(step.events.empty());
    CHECK(step.state.next_expected == 1);

    // Out-of-order inbound data: flagged with expected/got, then resynced.
    step = session_accept(step.state, Apdu::i_frame(5, 0, a), Direction::inbound);
    REQUIRE(step.events.size() == 1);
    CHECK(step.events[0].kind == SessionEvent::Kind::sequence_error);
    CHECK(step.events[0].expected == 1);
    CHECK(step.events[0].got == 5);
    CHECK(step.state.next_expected == 6);

    // Supervisory ack records the peer's progress.
    step = session_accept(step.state, Apdu::s_frame(3), Direction::inbound);
    CHECK(step.state.peer_acked == 3);

    // Outbound side tracks our own send counter the same way.
    SessionState out;
    out.started = true;
    step = session_accept(out, Apdu::i_frame(0, 0, a), Direction::outbound);
    CHECK(step.events.empty());
    CHECK(step.state.next_send == 1);
    step = session_accept(step.state, Apdu::i_frame(4, 0, a), Direction::outbound);
    REQUIRE(step.events.size() == 1);
    CHECK(step.events[0].kind == SessionEvent::Kind::sequence_error);
    CHECK(step.state.next_send == 5);

    // STOPDT closes the started state and is confirmed.
    step = session_accept(step.state, Apdu::u_frame(UFunction::stopdt_act),
                          Direction::inbound);
    CHECK_FALSE(step.state.started);
    REQUIRE(step.events.size() == 1);
    CHECK(step.events[0].reply == UFunction::stopdt_con);

    // The sequence space wraps at 2^15.
    CHECK(seq_next(32767) == 0);
}

TEST_SUITE_END();

// ---------------------------------------------------------------------------
// Grid model
// ---------------------------------------------------------------------------

TEST_SUITE_BEGIN("powerflow");

namespace {

grid::GridNetwork chain_network() {
    grid::GridNetwork net;
    net.buses = {{"B0", 10.0}, {"B1", 10.0}, {"B2", 10.0}};
    net.slack_bus_id = "B0";
    net.branches.push_back({"L1", "B0", "B1", 0.1, 0.60, true});
    net.branches.push_back({"L2", "B1", "B2", 0.2, 0.40, true});
    net.assets.push_back({"feeder", "B0", grid::AssetKind::feeder, -5, 5, 0});
    net.assets.push_back({"load1", "B1", grid::AssetKind::load, -1, 0, -0.5});
    net.assets.push_back({"pv2", "B2", grid::AssetKind::pv, 0, 0.5, 0.2});
    return net;
}

}  // namespace

TEST_CASE("three-bus chain solves to the hand-computed angles and flows") {
    const auto net = chain_network();
    net.validate();
    const auto sol = grid::solve_dc_power_flow(net);

    CHECK(sol.angle_rad[0] == 0.0);  // slack angle is the reference
    CHECK(sol.angle_rad[1] == doctest::Approx(-0.03).epsilon(1e-12));
    CHECK(sol.angle_rad[2] == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(sol.branch_flow_pu[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(sol.branch_flow_pu[1] == doctest::Approx(-0.2).epsilon(1e-12));
    CHECK(sol.injection_pu[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(sol.injection_pu[1] == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(sol.injection_pu[2] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(sol.energized == std::vector<bool>{true, true, true});
}

TEST_CASE("parallel circuits split the transfer evenly") {
    grid::GridNetwork net;
    net.buses = {{"B0", 10.0}, {"B1", 10.0}};
    net.slack_bus_id = "B0";
    net.branches.push_back({"La", "B0", "B1", 0.1, 0.5, true});
    net.branches.push_back({"Lb", "B0", "B1", 0.1, 0.5, true});
    net.assets.push_back({"feeder", "B0", grid::AssetKind::feeder, -5, 5, 0});
    net.assets.push_back({"load", "B1", grid::AssetKind::load, -1, 0, -0.4});
    const auto sol = grid::solve_dc_power_flow(net);
    CHECK(sol.branch_flow_pu[0] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(sol.branch_flow_pu[1] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(sol.angle_rad[1] == doctest::Approx(-0.02).epsilon(1e-12));
}

TEST_CASE("meshed triangle distributes flow by susceptance") {
    grid::GridNetwork net;
    net.buses = {{"B0", 10.0}, {"B1", 10.0}, {"B2", 10.0}};
    net.slack_bus_id = "B0";
    net.branches.push_back({"L01", "B0", "B1", 0.1, 1.0, true});
    net.branches.push_back({"L12", "B1", "B2", 0.1, 1.0, true});
    net.branches.push_back({"L02", "B0", "B2", 0.1, 1.0, true});
    net.assets.push_back({"feeder", "B0", grid::AssetKind::feeder, -5, 5, 0});
    net.assets.push_back({"load", "B1", grid::AssetKind::load, -1, 0, -0.3});
    const auto sol = grid::solve_dc_power_flow(net);
    CHECK(sol.angle_rad[1] == doctest::Approx(-0.02).epsilon(1e-12));
    CHECK(sol.angle_rad[2] == doctest::Approx(-0.01).epsilon(1e-12));
    CHECK(sol.branch_flow_pu[0] == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(sol.branch_flow_pu[1] == doctest::Approx(-0.1).epsilon(1e-12));
    CHECK(sol.branch_flow_pu[2] == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("an open breaker isolates downstream buses") {
    auto net = chain_network();
    net.branches[1].breaker_closed = false;

    CHECK_THROWS_AS(grid::solve_dc_power_flow(net), grid::GridError);
    try {
        grid::solve_dc_power_flow(net);
    } catch (const grid::GridError& e) {
        CHECK(e.code() == grid::GridError::Code::islanded_bus);
    }

    const auto sol = grid::solve_dc_power_flow_tolerant(net);
    CHECK(sol.energized == std::vector<bool>{true, true, false});
    CHECK(sol.branch_flow_pu[1] == 0.0);
    CHECK(sol.injection_pu[2] == 0.0);
    CHECK(sol.angle_rad[2] == 0.0);
    // The connected part still solves: only the feeder and the load remain.
    CHECK(sol.branch_flow_pu[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sol.injection_pu[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("solver agrees with an independent dense reference on random networks") {
    Rng rng(7);
    double worst_flow = 0.0;
    double worst_balance = 0.0;
    int buses_total = 0;
    for (int i = 0; i < 100; ++i) {
        const auto net = testsupport::random_network(rng, 50, true);
        net.validate();
        buses_total += static_cast<int>(net.buses.size());

        const auto sol = grid::solve_dc_power_flow(net);
        const auto ref = testsupport::reference_power_flow(net);

        for (std::size_t e = 0; e < net.branches.size(); ++e)
            worst_flow = std::max(
                worst_flow,
                std::fabs(sol.branch_flow_pu[e] - ref.branch_flow_pu[e]));

        // Every bus must balance exactly: injection minus net outflow.
        for (std::size_t b = 0; b < net.buses.size(); ++b) {
            double r = sol.injection_pu[b];
            for (std::size_t e = 0; e < net.branches.size(); ++e) {
                if (net.branches[e].from_bus == net.buses[b].id)
                    r -= sol.branch_flow_pu[e];
                if (net.branches[e].to_bus == net.buses[b].id)
                    r += sol.branch_flow_pu[e];
            }
            worst_balance = std::max(worst_balance, std::fabs(r));
        }
    }
    CHECK(worst_flow <= 1e-9);
    CHECK(worst_balance <= 1e-9);
    CHECK(buses_total > 1000);  // the sample actually covered large networks
}

TEST_CASE("setpoint commands respect capability bands") {
    const auto net = chain_network();

    auto ok = grid::apply_command(net, grid::SetpointCommand{"pv2", 0.4});
    REQUIRE(std::holds_alternative<grid::GridNetwork>(ok));
    CHECK(std::get<grid::GridNetwork>(ok).assets[2].p_set_pu ==
          doctest::Approx(0.4));
    CHECK(net.assets[2].p_set_pu == doctest::Approx(0.2));  // input untouched

    auto high = grid::apply_command(net, grid::SetpointCommand{"pv2", 0.6});
    REQUIRE(std::holds_alternative<grid::CommandRejection>(high));
    CHECK(std::get<grid::CommandRejection>(high).reason ==
          grid::CommandRejection::Reason::capability_violation);

    auto unknown = grid::apply_command(net, grid::SetpointCommand{"nope", 0.0});
    REQUIRE(std::holds_alternative<grid::CommandRejection>(unknown));
    CHECK(std::get<grid::CommandRejection>(unknown).reason ==
          grid::CommandRejection::Reason::unknown_target);

    auto sw = grid::apply_command(net, grid::SwitchCommand{"L2", false});
    REQUIRE(std::holds_alternative<grid::GridNetwork>(sw));
    CHECK_FALSE(std::get<grid::GridNetwork>(sw).branches[1].breaker_closed);

    auto badsw = grid::apply_command(net, grid::SwitchCommand{"L9", false});
    REQUIRE(std::holds_alternative<grid::CommandRejection>(badsw));
}

TEST_CASE("limit check flags branches loaded above their rating") {
    auto net = chain_network();
    net.branches[0].rating_pu = 0.25;  // below the 0.3 this case carries
    const auto sol = grid::solve_dc_power_flow(net);
    const auto v = grid::check_limits(net, sol);
    REQUIRE(v.size() == 1);
    CHECK(v[0].branch_id == "L1");
    CHECK(v[0].flow_pu == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(v[0].rating_pu == doctest::Approx(0.25));
}

TEST_CASE("islanding prediction distinguishes radial spurs from loops") {
    grid::GridNetwork net;
    net.buses = {{"B0", 10.0}, {"B1", 10.0}, {"B2", 10.0}};
    net.slack_bus_id = "B0";
    net.branches.push_back({"La", "B0", "B1", 0.1, 1.0, true});
    net.branches.push_back({"Lb", "B0", "B1", 0.1, 1.0, true});
    net.branches.push_back({"L2", "B1", "B2", 0.1, 1.0, true});
    net.assets.push_back({"feeder", "B0", grid::AssetKind::feeder, -5, 5, 0});

    CHECK_FALSE(grid::switch_would_island(net, "La", {}));  // twin still closed
    CHECK(grid::switch_would_island(net, "L2", {}));        // radial spur
    // With the twin already open, the remaining circuit becomes critical.
    CHECK(grid::switch_would_island(net, "La", {{"Lb", false}}));
}

TEST_CASE("measurement generation is exact without noise and seeded with it") {
    const auto net = chain_network();
    const auto sol = grid::solve_dc_power_flow(net);
    grid::DatapointMap map;
    map.measurements.push_back({1, "r", grid::Quantity::bus_injection, "B1"});
    map.measurements.push_back({2, "r", grid::Quantity::branch_flow, "L1"});
    map.measurements.push_back({3, "r", grid::Quantity::breaker_state, "L1"});
    map.measurements.push_back({4, "r", grid::Quantity::device_status, "r"});

    Rng quiet(1);
    const auto exact = grid::generate_measurements(net, sol, map, 0.0, quiet, 42);
    CHECK(exact.t_ms == 42);
    CHECK(exact.values.at(1).value == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(exact.values.at(2).value == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(exact.values.at(3).value == 1.0);  // breaker states carry no noise
    CHECK(exact.values.count(4) == 0);       // status points ride on heartbeats

    Rng a(99), b(99), c(100);
    const auto m1 = grid::generate_measurements(net, sol, map, 0.01, a, 0);
    const auto m2 = grid::generate_measurements(net, sol, map, 0.01, b, 0);
    const auto m3 = grid::generate_measurements(net, sol, map, 0.01, c, 0);
    CHECK(m1.values.at(1).value == m2.values.at(1).value);
    CHECK(m1.values.at(2).value == m2.values.at(2).value);
    CHECK(m1.values.at(1).value != m3.values.at(1).value);
    CHECK(m1.values.at(1).value != -0.5);  // noise actually applied
    CHECK(m1.values.at(3).value == 1.0);   // but never to breaker states
}

TEST_CASE("power balance residuals localise a corrupted value") {
    const auto net = chain_network();
    const auto sol = grid::solve_dc_power_flow(net);
    grid::DatapointMap map;
    map.measurements.push_back({10, "r", grid::Quantity::bus_injection, "B0"});
    map.measurements.push_back({11, "r", grid::Quantity::bus_injection, "B1"});
    map.measurements.push_back({12, "r", grid::Quantity::bus_injection, "B2"});
    map.measurements.push_back({13, "r", grid::Quantity::branch_flow, "L1"});
    map.measurements.push_back({14, "r", grid::Quantity::branch_flow, "L2"});

    Rng quiet(1);
    auto ms = grid::generate_measurements(net, sol, map, 0.0, quiet, 0);

    auto clean = grid::power_balance_residuals(net, map, ms.values);
    for (const auto& [bus, r] : clean) CHECK(std::fabs(r) <= 1e-12);

    // An 0.08 pu error on the B1 injection shows up on exactly that bus.
    auto corrupted = ms.values;
    corrupted[11].value += 0.08;
    auto residuals = grid::power_balance_residuals(net, map, corrupted);
    CHECK(residuals.at("B1") == doctest::Approx(0.08).epsilon(1e-12));
    CHECK(std::fabs(residuals.at("B0")) <= 1e-12);
    CHECK(std::fabs(residuals.at("B2")) <= 1e-12);

    // A flow error shows on both endpoints with opposite signs.
    auto flow_bad = ms.values;
    flow_bad[13].value += 0.06;
    residuals = grid::power_balance_residuals(net, map, flow_bad);
    CHECK(residuals.at("B0") == doctest::Approx(-0.06).epsilon(1e-12));
    CHECK(residuals.at("B1") == doctest::Approx(0.06).epsilon(1e-12));

    // Not-yet-reported values exclude the bus instead of faking a residual.
    auto partial = ms.values;
    partial.erase(12);  // B2 injection unreported: only B2 is silenced
    residuals = grid::power_balance_residuals(net, map, partial);
    CHECK(residuals.count("B2") == 0);
    CHECK(residuals.count("B1") == 1);
    CHECK(residuals.count("B0") == 1);

    partial = ms.values;
    partial.erase(14);  // L2 flow unreported: both endpoints are silenced
    residuals = grid::power_balance_residuals(net, map, partial);
    CHECK(residuals.count("B2") == 0);
    CHECK(residuals.count("B1") == 0);
    CHECK(residuals.count("B0") == 1);

    // A bus with no injection datapoint at all is a configuration error.
    grid::DatapointMap broken = map;
    broken.measurements.erase(broken.measurements.begin() + 2);
    CHECK_THROWS_AS(grid::power_balance_residuals(net, broken, ms.values),
                    grid::GridError);
}

TEST_CASE("structural validation rejects inconsistent networks and maps") {
    auto net = chain_network();
    net.branches[0].reactance_pu = 0.0;
    CHECK_THROWS_AS(net.validate(), grid::GridError);

    net = chain_network();
    net.branches[0].to_bus = "B9";
    CHECK_THROWS_AS(net.validate(), grid::GridError);

    net = chain_network();
    net.assets[1].p_set_pu = 0.5;  // outside [-1, 0]
    CHECK_THROWS_AS(net.validate(), grid::GridError);

    net = chain_network();
    net.buses.push_back({"B0", 10.0});
    CHECK_THROWS_AS(net.validate(), grid::GridError);

    const auto good = chain_network();
    grid::DatapointMap map;
    map.measurements.push_back({1, "r", grid::Quantity::bus_injection, "B1"});
    map.commands.push_back({1, "r", grid::CommandKind::setpoint, "pv2"});
    CHECK_THROWS_AS(map.validate(good), grid::GridError);  // duplicate address

    grid::DatapointMap dangling;
    dangling.measurements.push_back(
        {1, "r", grid::Quantity::branch_flow, "L9"});
    CHECK_THROWS_AS(dangling.validate(good), grid::GridError);
}

TEST_SUITE_END();

// ---------------------------------------------------------------------------
// Network simulation
// ---------------------------------------------------------------------------

TEST_SUITE_BEGIN("netsim");

namespace {

net::TopologySpec small_topo() {
    net::TopologySpec topo;
    auto add = [&topo](const std::string& id, net::NodeKind kind,
                       const std::string& mac, const std::string& ip) {
        topo.nodes.push_back({id, kind, net::Zone::ot,
                              *net::l2_from_string(mac),
                              *net::l3_from_string(ip)});
    };
    add("alpha", net::NodeKind::scada, "02:00:00:00:00:01", "10.0.0.1");
    add("mid", net::NodeKind::switch_device, "02:00:00:00:00:09", "10.0.0.9");
    add("bravo", net::NodeKind::rtu, "02:00:00:00:00:02", "10.0.0.2");
    add("wall", net::NodeKind::firewall, "02:00:00:00:00:08", "10.0.0.8");
    add("charlie", net::NodeKind::rtu, "02:00:00:00:00:03", "10.0.0.3");
    topo.links.push_back({"lnk_am", "alpha", "mid", 2, true});
    topo.links.push_back({"lnk_mb", "mid", "bravo", 3, true});
    topo.links.push_back({"lnk_mw", "mid", "wall", 1, true});
    topo.links.push_back({"lnk_wc", "wall", "charlie", 1, true});
    topo.taps.push_back("mid");
    topo.firewall_rules["wall"] = {
        {"10.0.0.1", "10.0.0.3", "2404", true},
    };
    return topo;
}

net::Packet packet_between(const net::TopologySpec& topo, const std::string& a,
                           const std::string& b, std::uint16_t dport,
                           net::PacketKind kind = net::PacketKind::data) {
    const auto* na = topo.find_node(a);
    const auto* nb = topo.find_node(b);
    net::Packet p;
    p.src_l2 = na->l2;
    p.src_l3 = na->l3;
    p.dst_l2 = nb->l2;
    p.dst_l3 = nb->l3;
    p.src_port = 40000;
    p.dst_port = dport;
    p.kind = kind;
    p.payload = {0xAA, 0xBB};
    return p;
}

struct Trace {
    std::vector<std::string> lines;
    void operator()(const net::NetEvent& e) {
        std::ostringstream os;
        std::visit(
            [&os](const auto& ev) {
                using T = std::decay_t<decltype(ev)>;
                if constexpr (std::is_same_v<T, net::Delivery>) {
                    os << ev.t_ms << " deliver@" << ev.at << " id="
                       << ev.packet.packet_id;
                } else if constexpr (std::is_same_v<T, net::Tapped>) {
                    os << ev.t_ms << " tap@" << ev.at << " id="
                       << ev.packet.packet_id;
                } else if constexpr (std::is_same_v<T, net::Dropped>) {
                    os << ev.t_ms << " drop@" << ev.at << " reason="
                       << net::to_string(ev.reason);
                } else {
                    os << ev.t_ms << " link " << ev.link_id << " up="
                       << ev.up;
                }
            },
            e);
        lines.push_back(os.str());
    }
};

}  // namespace

TEST_CASE("address parsing and wildcard matching") {
    auto a = net::l3_from_string("10.0.2.1");
    REQUIRE(a.has_value());
    CHECK(net::to_string(*a) == "10.0.2.1");
    CHECK_FALSE(net::l3_from_string("10.0.2").has_value());
    CHECK_FALSE(net::l3_from_string("10.0.2.256").has_value());

    auto m = net::l2_from_string("02:00:00:00:01:10");
    REQUIRE(m.has_value());
    CHECK(net::to_string(*m) == "02:00:00:00:01:10");
    CHECK_FALSE(net::l2_from_string("02:00:00:00:01").has_value());

    CHECK(net::l3_matches("10.0.2.*", *net::l3_from_string("10.0.2.7")));
    CHECK_FALSE(net::l3_matches("10.0.2.*", *net::l3_from_string("10.0.3.7")));
    CHECK(net::l3_matches("*", *net::l3_from_string("203.0.113.66")));
    CHECK(net::l3_matches("10.0.2.7", *net::l3_from_string("10.0.2.7")));
    CHECK_FALSE(net::l3_matches("10.0.2.7", *net::l3_from_string("10.0.2.8")));
}

TEST_CASE("packets walk the path with per-link latency and tap copies") {
    net::Network n(small_topo());
    Trace trace;
    n.send("alpha", packet_between(n.spec(), "alpha", "bravo", 2404), 100);
    n.run_until(1000, std::ref(trace));
    REQUIRE(trace.lines.size() == 2);
    CHECK(trace.lines[0] == "102 tap@mid id=1");
    CHECK(trace.lines[1] == "105 deliver@bravo id=1");
}

TEST_CASE("two runs with identical inputs produce identical event sequences") {
    auto run_once = [] {
        net::Network n(small_topo());
        Trace trace;
        n.send("alpha", packet_between(n.spec(), "alpha", "bravo", 2404), 10);
        n.send("bravo", packet_between(n.spec(), "bravo", "alpha", 40000), 10);
        n.send("alpha", packet_between(n.spec(), "alpha", "charlie", 2404), 11);
        n.run_until(500, std::ref(trace));
        return trace.lines;
    };
    CHECK(run_once() == run_once());
}

TEST_CASE("same-time events surface in insertion order") {
    net::Network n(small_topo());
    Trace trace;
    n.send("alpha", packet_between(n.spec(), "alpha", "bravo", 2404), 0);
    n.send("alpha", packet_between(n.spec(), "alpha", "bravo", 2404), 0);
    n.run_until(100, std::ref(trace));
    REQUIRE(trace.lines.size() == 4);
    CHECK(trace.lines[0] == "2 tap@mid id=1");
    CHECK(trace.lines[1] == "2 tap@mid id=2");
    CHECK(trace.lines[2] == "5 deliver@bravo id=1");
    CHECK(trace.lines[3] == "5 deliver@bravo id=2");
}

TEST_CASE("the firewall forwards matching flows and drops the rest") {
    net::Network n(small_topo());
    Trace trace;
    // Allowed: alpha -> charlie on the telecontrol port.
    n.send("alpha", packet_between(n.spec(), "alpha", "charlie", 2404), 0);
    // Denied: same hosts, different port. Dropped at the firewall.
    n.send("alpha", packet_between(n.spec(), "alpha", "charlie", 80), 10);
    // Denied: reverse direction has no rule (implicit deny).
    n.send("charlie", packet_between(n.spec(), "charlie", "alpha", 40000), 20);
    n.run_until(1000, std::ref(trace));
    REQUIRE(trace.lines.size() == 5);
    CHECK(trace.lines[0] == "2 tap@mid id=1");
    CHECK(trace.lines[1] == "4 deliver@charlie id=1");
    CHECK(trace.lines[2] == "12 tap@mid id=2");
    CHECK(trace.lines[3] == "13 drop@wall reason=firewall");
    // The reverse packet dies at the firewall before reaching the tap.
    CHECK(trace.lines[4] == "21 drop@wall reason=firewall");
}

TEST_CASE("a downed link drops traffic at the entry node and is logged") {
    net::Network n(small_topo());
    Trace trace;
    n.set_link_state("lnk_mb", false, 50);
    n.send("alpha", packet_between(n.spec(), "alpha", "bravo", 2404), 60);
    n.run_until(1000, std::ref(trace));
    REQUIRE(trace.lines.size() == 3);
    CHECK(trace.lines[0] == "50 link lnk_mb up=0");
    CHECK(trace.lines[1] == "62 tap@mid id=1");
    CHECK(trace.lines[2] == "62 drop@mid reason=link-down");

    n.set_link_state("lnk_mb", true, 1100);
    Trace after;
    n.send("alpha", packet_between(n.spec(), "alpha", "bravo", 2404), 1200);
    n.run_until(2000, std::ref(after));
    CHECK(after.lines.back() == "1205 deliver@bravo id=2");
}

TEST_CASE("unroutable destinations are dropped at the sender") {
    net::Network n(small_topo());
    Trace trace;
    auto p = packet_between(n.spec(), "alpha", "bravo", 2404);
    p.dst_l3 = *net::l3_from_string("192.168.77.77");
    n.send("alpha", p, 5);
    n.run_until(100, std::ref(trace));
    REQUIRE(trace.lines.size() == 1);
    CHECK(trace.lines[0] == "5 drop@alpha reason=no-route");
}

TEST_CASE("payload mutators rewrite only inside their link and window") {
    net::Network n(small_topo());
    const int id = n.install_mutator(net::PayloadMutator{
        "lnk_mb", 200, 300,
        [](net::Packet& p, SimTimeMs) { p.payload = {0xFF}; }});

    std::map<std::uint64_t, std::vector<std::uint8_t>> delivered;
    auto sink = [&delivered](const net::NetEvent& e) {
        if (const auto* d = std::get_if<net::Delivery>(&e))
            delivered[d->packet.packet_id] = d->packet.payload;
    };

    // Enters lnk_mb at t+2: 199 is before the window, 200 and 298 inside,
    // 300 at the exclusive end.
    n.send("alpha", packet_between(n.spec(), "alpha", "bravo", 2404), 197);
    n.send("alpha", packet_between(n.spec(), "alpha", "bravo", 2404), 198);
    n.send("alpha", packet_between(n.spec(), "alpha", "bravo", 2404), 296);
    n.send("alpha", packet_between(n.spec(), "alpha", "bravo", 2404), 298);
    n.run_until(1000, sink);
    REQUIRE(delivered.size() == 4);
    CHECK(delivered[1] == std::vector<std::uint8_t>{0xAA, 0xBB});
    CHECK(delivered[2] == std::vector<std::uint8_t>{0xFF});
    CHECK(delivered[3] == std::vector<std::uint8_t>{0xFF});
    CHECK(delivered[4] == std::vector<std::uint8_t>{0xAA, 0xBB});

    n.remove_mutator(id);
    n.send("alpha", packet_between(n.spec(), "alpha", "bravo", 2404), 299);
    n.run_until(2000, sink);
    CHECK(delivered[5] == std::vector<std::uint8_t>{0xAA, 0xBB});
}

TEST_CASE("a sink may send follow-on packets inside the same window") {
    net::Network n(small_topo());
    std::vector<std::string> got;
    auto sink = [&](const net::NetEvent& e) {
        if (const auto* d = std::get_if<net::Delivery>(&e)) {
            got.push_back(d->at + "@" + std::to_string(d->t_ms));
            if (d->at == "bravo")  // reply immediately
                n.send("bravo",
                       packet_between(n.spec(), "bravo", "alpha", 40000),
                       d->t_ms);
        }
    };
    n.send("alpha", packet_between(n.spec(), "alpha", "bravo", 2404), 0);
    n.run_until(100, sink);
    REQUIRE(got.size() == 2);
    CHECK(got[0] == "bravo@5");
    CHECK(got[1] == "alpha@10");
}

TEST_CASE("connection bookkeeping is symmetric") {
    net::Network n(small_topo());
    const auto a = *net::l3_from_string("10.0.0.1");
    const auto b = *net::l3_from_string("10.0.0.2");
    CHECK_FALSE(n.is_established(a, 50000, b, 2404));
    n.note_established(a, 50000, b, 2404);
    CHECK(n.is_established(a, 50000, b, 2404));
    CHECK(n.is_established(b, 2404, a, 50000));
    CHECK_FALSE(n.is_established(a, 50001, b, 2404));
}

TEST_CASE("topology validation rejects structural errors") {
    auto dup_l3 = small_topo();
    dup_l3.nodes[2].l3 = dup_l3.nodes[0].l3;
    CHECK_THROWS_AS(net::Network{dup_l3}, net::NetworkError);

    auto dup_l2 = small_topo();
    dup_l2.nodes[2].l2 = dup_l2.nodes[0].l2;
    CHECK_THROWS_AS(net::Network{dup_l2}, net::NetworkError);

    auto bad_link = small_topo();
    bad_link.links.push_back({"lnk_x", "alpha", "ghost", 1, true});
    CHECK_THROWS_AS(net::Network{bad_link}, net::NetworkError);

    auto bad_tap = small_topo();
    bad_tap.taps.push_back("ghost");
    CHECK_THROWS_AS(net::Network{bad_tap}, net::NetworkError);

    auto bad_rules = small_topo();
    bad_rules.firewall_rules["ghost"] = {};
    CHECK_THROWS_AS(net::Network{bad_rules}, net::NetworkError);

    // Same address in different zones is legitimate (private ranges reused).
    auto two_zones = small_topo();
    two_zones.nodes.push_back({"remote", net::NodeKind::attacker,
                               net::Zone::internet,
                               *net::l2_from_string("02:00:00:00:00:99"),
                               two_zones.nodes[0].l3});
    CHECK_NOTHROW(net::Network{two_zones});
}

TEST_SUITE_END();
