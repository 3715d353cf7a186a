#pragma once

// Scenario files tie everything together: topology, grid, datapoint map,
// device roster, load profile, benign operator schedule, scripted attacks and
// tuning knobs. Loaded from YAML (with single-level `extends` inheritance);
// a fully resolved scenario round-trips through JSON so a recorded event log
// can embed the exact configuration it was produced with.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "otlab/attack.hpp"
#include "otlab/common.hpp"
#include "otlab/correlate.hpp"
#include "otlab/events.hpp"
#include "otlab/grid.hpp"
#include "otlab/ids.hpp"
#include "otlab/monitor.hpp"
#include "otlab/netsim.hpp"

namespace otlab::scenario {

class ScenarioError : public std::runtime_error {
public:
    explicit ScenarioError(const std::string& what, int line = 0)
        : std::runtime_error(line > 0 ? what + " (line " + std::to_string(line) + ")"
                                      : what),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// Per-device telecontrol identity: link-layer common address plus the object
// address its heartbeat status point uses, and which network link is its
// uplink (for the monitoring board's uplink-state rule).
struct RtuSpec {
    DeviceId id;
    std::uint16_t common_address = 1;
    std::string uplink_link_id;       // derived if the node has a single link
    std::uint32_t status_ioa = 0;
};

struct ProfileSpec {
    SimTimeMs step_ms = 60000;
    std::vector<double> scale;  // repeats cyclically; applied to load p_min
};

struct ScheduleEntry {
    enum class Kind : std::uint8_t { setpoint, breaker, interrogation, trip, link };
    SimTimeMs t_ms = 0;
    Kind kind = Kind::interrogation;
    std::string target;   // asset / branch / link id; empty = all (interrogation)
    double value = 0.0;   // setpoint value
    bool flag = false;    // breaker close / link up
};

const char* to_string(ScheduleEntry::Kind k);
std::optional<ScheduleEntry::Kind> schedule_kind_from_string(const std::string& s);

struct Scenario {
    std::string name;
    std::uint64_t seed = 1;
    SimTimeMs duration_ms = 60000;
    SimTimeMs reporting_period_ms = 1000;
    double noise_sigma_pu = 0.002;

    net::TopologySpec topology;
    grid::GridNetwork grid;
    grid::DatapointMap datapoints;
    std::vector<RtuSpec> rtus;

    ProfileSpec profile;
    std::vector<ScheduleEntry> schedule;
    std::vector<attack::Action> attacks;

    ids::IdsConfig detection;
    mon::MonitorConfig monitoring;
    corr::CorrelationConfig correlation;

    std::vector<std::string> warnings;  // non-fatal findings from validation

    const RtuSpec* find_rtu(const DeviceId& id) const;
    std::vector<mon::DeviceSpec> device_specs() const;
};

// Parses and validates; throws ScenarioError on any structural problem.
Scenario scenario_from_yaml_text(const std::string& text);
Scenario load_scenario(const std::string& path);  // resolves `extends`

// Cross-reference validation (also called by the loaders). Fills `warnings`.
void validate(Scenario& s);

// Lossless resolved form, embedded in recorded event logs.
sim::json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const sim::json& j);  // throws ScenarioError

}  // namespace otlab::scenario
