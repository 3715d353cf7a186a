#pragma once

// Electrical model of the simulated distribution network: buses, branches with
// breakers, controllable assets, a DC power-flow solver, and the measurement
// plumbing (datapoint map, noisy measurement generation, per-bus power-balance
// residuals) that the model-based detection layer feeds on.
//
// Everything is in per-unit on a 1 MVA base; angles are radians.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "otlab/common.hpp"

namespace otlab::grid {

struct Bus {
    std::string id;
    double nominal_kv = 10.0;
};

enum class AssetKind : std::uint8_t { battery, pv, chp, load, feeder };

const char* to_string(AssetKind k);
std::optional<AssetKind> asset_kind_from_string(const std::string& s);

struct Asset {
    std::string id;
    std::string bus_id;
    AssetKind kind = AssetKind::load;
    double p_min_pu = 0.0;  // capability band, p_min <= p_set <= p_max
    double p_max_pu = 0.0;
    double p_set_pu = 0.0;  // current active-power setpoint (+ = injection)
};

struct Branch {
    std::string id;
    std::string from_bus;
    std::string to_bus;
    double reactance_pu = 0.1;  // must be > 0
    double rating_pu = 1.0;     // thermal limit on |flow|
    bool breaker_closed = true;
};

class GridError : public std::runtime_error {
public:
    enum class Code {
        islanded_bus,
        singular_system,
        unknown_target,
        missing_datapoint,
        invalid_network,
    };
    GridError(Code code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

struct GridNetwork {
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Asset> assets;
    std::string slack_bus_id;

    std::size_t bus_index(const std::string& id) const;      // throws unknown_target
    std::size_t branch_index(const std::string& id) const;   // throws unknown_target
    std::size_t asset_index(const std::string& id) const;    // throws unknown_target
    const Asset* find_asset(const std::string& id) const;    // nullptr if absent
    const Branch* find_branch(const std::string& id) const;

    // Net scheduled injection at each bus (sum of asset setpoints; the slack
    // bus absorbs the system imbalance during the solve, so its own assets
    // contribute nothing here).
    std::vector<double> scheduled_injections() const;

    // Structural validation: ids unique, endpoints exist, reactances positive,
    // capability bands sane. Throws GridError{invalid_network}.
    void validate() const;
};

struct FlowSolution {
    std::vector<double> angle_rad;       // per bus, slack fixed at 0
    std::vector<double> branch_flow_pu;  // per branch, positive from->to
    std::vector<double> injection_pu;    // per bus, realised injection
    std::vector<bool> energized;         // per bus; false = de-energized island
};

// Solves B' theta = P over the buses connected to the slack. If any bus is
// unreachable through closed branches the strict variant throws
// GridError{islanded_bus}; the tolerant variant instead marks those buses
// de-energized with zero injection and zero flow on their branches.
FlowSolution solve_dc_power_flow(const GridNetwork& net);
FlowSolution solve_dc_power_flow_tolerant(const GridNetwork& net);

struct LimitViolation {
    std::string branch_id;
    double flow_pu = 0.0;    // signed flow at the time of the violation
    double rating_pu = 0.0;
};

std::vector<LimitViolation> check_limits(const GridNetwork& net,
                                         const FlowSolution& sol);

// --- Commands -------------------------------------------------------------

struct SetpointCommand {
    std::string asset_id;
    double p_pu = 0.0;
};

struct SwitchCommand {
    std::string branch_id;
    bool close = false;
};

using GridCommand = std::variant<SetpointCommand, SwitchCommand>;

struct CommandRejection {
    enum class Reason { unknown_target, capability_violation };
    Reason reason = Reason::unknown_target;
    std::string detail;
};

// Pure update: returns the modified network, or a rejection explaining why the
// command is not applicable. Setpoints outside the asset capability band and
// references to unknown assets/branches are rejected; the input is untouched.
std::variant<GridNetwork, CommandRejection> apply_command(GridNetwork net,
                                                          const GridCommand& cmd);

// --- Measurements ---------------------------------------------------------

enum class Quantity : std::uint8_t {
    bus_injection,
    branch_flow,
    breaker_state,
    device_status,
};

const char* to_string(Quantity q);
std::optional<Quantity> quantity_from_string(const std::string& s);

enum class CommandKind : std::uint8_t { setpoint, breaker };

// One remotely readable value: which RTU reports it, under which object
// address, and which grid quantity it carries. `ref` names the bus, branch or
// device the quantity belongs to.
struct MeasurementPoint {
    std::uint32_t ioa = 0;
    DeviceId rtu;
    Quantity quantity = Quantity::bus_injection;
    std::string ref;
};

struct CommandPoint {
    std::uint32_t ioa = 0;
    DeviceId rtu;
    CommandKind kind = CommandKind::setpoint;
    std::string ref;  // asset id for setpoints, branch id for breakers
};

struct DatapointMap {
    std::vector<MeasurementPoint> measurements;
    std::vector<CommandPoint> commands;

    const MeasurementPoint* find_measurement(std::uint32_t ioa) const;
    const CommandPoint* find_command(std::uint32_t ioa) const;
    // Measurement ioa for (quantity, ref); throws unknown_target if absent.
    std::uint32_t measurement_ioa(Quantity q, const std::string& ref) const;
    std::vector<const MeasurementPoint*> owned_by(const DeviceId& rtu) const;

    // ioas unique across measurements and commands; refs resolvable in `net`.
    void validate(const GridNetwork& net) const;
};

enum class MeasurementQuality : std::uint8_t { good, invalid };

struct Measurement {
    double value = 0.0;
    MeasurementQuality quality = MeasurementQuality::good;
    SimTimeMs t_ms = 0;
};

struct MeasurementSet {
    SimTimeMs t_ms = 0;
    std::map<std::uint32_t, Measurement> values;  // keyed by ioa
};

// True values from the solution plus zero-mean gaussian noise (sigma_pu) on
// analog quantities; breaker states are exact. device_status points are
// reported by the device heartbeat path, not generated here.
MeasurementSet generate_measurements(const GridNetwork& net,
                                     const FlowSolution& sol,
                                     const DatapointMap& map,
                                     double noise_sigma_pu, Rng& rng,
                                     SimTimeMs t_ms);

// Per-bus power balance computed from measured values alone: injection minus
// the sum of measured flows leaving the bus. A bus whose datapoints exist but
// have not reported a value yet is omitted (staleness handles that case); a
// bus or branch with no datapoint at all is a configuration error and throws
// GridError{missing_datapoint}.
std::map<std::string, double> power_balance_residuals(
    const GridNetwork& net, const DatapointMap& map,
    const std::map<std::uint32_t, Measurement>& values);

// True when opening `branch_id` (on top of the given breaker states) would cut
// at least one energized bus off from the slack.
bool switch_would_island(const GridNetwork& net, const std::string& branch_id,
                         const std::map<std::string, bool>& breaker_closed);

}  // namespace otlab::grid
