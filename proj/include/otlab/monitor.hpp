#pragma once

// ICT health monitoring for field devices: heartbeat bookkeeping, uplink
// state, and the ordered rule table that separates plain ICT faults and
// primary-equipment faults from situations that deserve security suspicion.

#include <nlohmann/json.hpp>

#include <map>
#include <string>
#include <vector>

#include "otlab/common.hpp"

namespace otlab::mon {

using json = nlohmann::ordered_json;

struct MonitorConfig {
    SimTimeMs heartbeat_period_ms = 10000;
    int missed_heartbeats = 3;  // unreachable after this many silent periods
    double flow_epsilon_pu = 0.01;  // |flow| below this counts as "no flow"
};

struct DeviceSpec {
    DeviceId id;
    std::string uplink_link_id;
    std::uint32_t status_ioa = 0;  // heartbeat datapoint
};

enum class Verdict : std::uint8_t { none, ict_fault, primary_fault, security_suspect };

const char* to_string(Verdict v);

struct Classification {
    Verdict verdict = Verdict::none;
    std::vector<std::string> rationale;
};

// Observations the model layer supplies for one classification pass.
struct ModelView {
    // Devices whose reported datapoints have gone stale.
    std::vector<DeviceId> stale_devices;
    // True while a power-balance (bad data) alert is active.
    bool residual_alert_active = false;
    struct OpenBreaker {
        std::string branch_id;
        DeviceId reporting_device;
        bool flow_known = false;
        double flow_abs_pu = 0.0;
    };
    std::vector<OpenBreaker> open_breakers;
};

class Board {
public:
    Board() = default;
    Board(MonitorConfig cfg, std::vector<DeviceSpec> devices);

    void on_heartbeat(const DeviceId& device, SimTimeMs t_ms);
    void on_link(const std::string& link_id, bool up);

    bool reachable(const DeviceId& device, SimTimeMs now_ms) const;
    bool uplink_up(const DeviceId& device) const;

    // Devices that newly crossed the unreachable threshold since the last
    // tick; the caller turns these into monitoring alerts.
    std::vector<DeviceId> tick(SimTimeMs now_ms);

    // Ordered rule table; first match wins:
    //   1. a device is unreachable, its uplink is down and its data is stale
    //      -> ictFault
    //   2. a reachable device reports an open breaker and the measured flow
    //      on that branch agrees -> primaryFault
    //   3. all data fresh but the power-balance check is alarming
    //      -> securitySuspect
    //   otherwise -> none
    Classification classify(SimTimeMs now_ms, const ModelView& view) const;

    json snapshot(SimTimeMs now_ms) const;

    const std::vector<DeviceSpec>& devices() const { return devices_; }
    const DeviceSpec* find_by_status_ioa(std::uint32_t ioa) const;

private:
    struct State {
        SimTimeMs last_heartbeat_ms = 0;
        bool uplink_up = true;
        bool marked_unreachable = false;
    };

    MonitorConfig cfg_;
    std::vector<DeviceSpec> devices_;
    std::map<DeviceId, State> state_;
};

}  // namespace otlab::mon
