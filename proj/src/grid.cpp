#include "otlab/grid.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>

namespace otlab::grid {

namespace {

std::vector<bool> reachable_from_slack(const GridNetwork& net,
                                       const std::vector<bool>& closed,
                                       std::size_t skip_branch = SIZE_MAX) {
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(net.buses.size());
    for (std::size_t e = 0; e < net.branches.size(); ++e) {
        if (e == skip_branch || !closed[e]) continue;
        auto f = net.bus_index(net.branches[e].from_bus);
        auto t = net.bus_index(net.branches[e].to_bus);
        adj[f].push_back({t, e});
        adj[t].push_back({f, e});
    }
    std::vector<bool> seen(net.buses.size(), false);
    std::deque<std::size_t> queue{net.bus_index(net.slack_bus_id)};
    seen[queue.front()] = true;
    while (!queue.empty()) {
        auto b = queue.front();
        queue.pop_front();
        for (auto [n, e] : adj[b]) {
            if (!seen[n]) {
                seen[n] = true;
                queue.push_back(n);
            }
        }
    }
    return seen;
}

FlowSolution solve_impl(const GridNetwork& net, bool tolerate_islands) {
    net.validate();
    const std::size_t nbus = net.buses.size();
    const std::size_t slack = net.bus_index(net.slack_bus_id);

    std::vector<bool> closed(net.branches.size());
    for (std::size_t e = 0; e < net.branches.size(); ++e)
        closed[e] = net.branches[e].breaker_closed;

    const auto energized = reachable_from_slack(net, closed);
    if (!tolerate_islands) {
        for (std::size_t b = 0; b < nbus; ++b) {
            if (!energized[b])
                throw GridError(GridError::Code::islanded_bus,
                                "bus '" + net.buses[b].id +
                                    "' has no closed path to the slack bus");
        }
    }

    // Map energized non-slack buses into the reduced system.
    std::vector<int> reduced(nbus, -1);
    int nred = 0;
    for (std::size_t b = 0; b < nbus; ++b)
        if (energized[b] && b != slack) reduced[b] = nred++;

    const auto injections = net.scheduled_injections();

    Eigen::MatrixXd bprime = Eigen::MatrixXd::Zero(nred, nred);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(nred);
    for (int i = 0; static_cast<std::size_t>(i) < nbus; ++i)
        if (reduced[i] >= 0) p(reduced[i]) = injections[i];

    for (std::size_t e = 0; e < net.branches.size(); ++e) {
        if (!closed[e]) continue;
        const auto f = net.bus_index(net.branches[e].from_bus);
        const auto t = net.bus_index(net.branches[e].to_bus);
        if (!energized[f] || !energized[t]) continue;
        const double y = 1.0 / net.branches[e].reactance_pu;
        if (reduced[f] >= 0) bprime(reduced[f], reduced[f]) += y;
        if (reduced[t] >= 0) bprime(reduced[t], reduced[t]) += y;
        if (reduced[f] >= 0 && reduced[t] >= 0) {
            bprime(reduced[f], reduced[t]) -= y;
            bprime(reduced[t], reduced[f]) -= y;
        }
    }

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(nred);
    if (nred > 0) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(bprime);
        if (ldlt.info() != Eigen::Success)
            throw GridError(GridError::Code::singular_system,
                            "susceptance matrix is not factorable");
        theta = ldlt.solve(p);
        if (!theta.allFinite())
            throw GridError(GridError::Code::singular_system,
                            "power flow solution is not finite");
    }

    FlowSolution sol;
    sol.angle_rad.assign(nbus, 0.0);
    sol.energized.assign(nbus, false);
    for (std::size_t b = 0; b < nbus; ++b) {
        sol.energized[b] = energized[b];
        if (reduced[b] >= 0) sol.angle_rad[b] = theta(reduced[b]);
    }

    sol.branch_flow_pu.assign(net.branches.size(), 0.0);
    for (std::size_t e = 0; e < net.branches.size(); ++e) {
        if (!closed[e]) continue;
        const auto f = net.bus_index(net.branches[e].from_bus);
        const auto t = net.bus_index(net.branches[e].to_bus);
        if (!energized[f] || !energized[t]) continue;
        sol.branch_flow_pu[e] =
            (sol.angle_rad[f] - sol.angle_rad[t]) / net.branches[e].reactance_pu;
    }

    sol.injection_pu.assign(nbus, 0.0);
    for (std::size_t b = 0; b < nbus; ++b)
        if (energized[b] && b != slack) sol.injection_pu[b] = injections[b];
    // The slack picks up whatever keeps its own balance: sum of flows leaving it.
    double slack_out = 0.0;
    for (std::size_t e = 0; e < net.branches.size(); ++e) {
        if (net.bus_index(net.branches[e].from_bus) == slack)
            slack_out += sol.branch_flow_pu[e];
        if (net.bus_index(net.branches[e].to_bus) == slack)
            slack_out -= sol.branch_flow_pu[e];
    }
    sol.injection_pu[slack] = slack_out;
    return sol;
}

}  // namespace

const char* to_string(AssetKind k) {
    switch (k) {
        case AssetKind::battery: return "battery";
        case AssetKind::pv: return "pv";
        case AssetKind::chp: return "chp";
        case AssetKind::load: return "load";
        case AssetKind::feeder: return "feeder";
    }
    return "?";
}

std::optional<AssetKind> asset_kind_from_string(const std::string& s) {
    if (s == "battery") return AssetKind::battery;
    if (s == "pv") return AssetKind::pv;
    if (s == "chp") return AssetKind::chp;
    if (s == "load") return AssetKind::load;
    if (s == "feeder") return AssetKind::feeder;
    return std::nullopt;
}

const char* to_string(Quantity q) {
    switch (q) {
        case Quantity::bus_injection: return "bus-injection";
        case Quantity::branch_flow: return "branch-flow";
        case Quantity::breaker_state: return "breaker-state";
        case Quantity::device_status: return "device-status";
    }
    return "?";
}

std::optional<Quantity> quantity_from_string(const std::string& s) {
    if (s == "bus-injection") return Quantity::bus_injection;
    if (s == "branch-flow") return Quantity::branch_flow;
    if (s == "breaker-state") return Quantity::breaker_state;
    if (s == "device-status") return Quantity::device_status;
    return std::nullopt;
}

std::size_t GridNetwork::bus_index(const std::string& id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == id) return i;
    throw GridError(GridError::Code::unknown_target, "unknown bus '" + id + "'");
}

std::size_t GridNetwork::branch_index(const std::string& id) const {
    for (std::size_t i = 0; i < branches.size(); ++i)
        if (branches[i].id == id) return i;
    throw GridError(GridError::Code::unknown_target, "unknown branch '" + id + "'");
}

std::size_t GridNetwork::asset_index(const std::string& id) const {
    for (std::size_t i = 0; i < assets.size(); ++i)
        if (assets[i].id == id) return i;
    throw GridError(GridError::Code::unknown_target, "unknown asset '" + id + "'");
}

const Asset* GridNetwork::find_asset(const std::string& id) const {
    for (const auto& a : assets)
        if (a.id == id) return &a;
    return nullptr;
}

const Branch* GridNetwork::find_branch(const std::string& id) const {
    for (const auto& b : branches)
        if (b.id == id) return &b;
    return nullptr;
}

std::vector<double> GridNetwork::scheduled_injections() const {
    std::vector<double> inj(buses.size(), 0.0);
    const auto slack = bus_index(slack_bus_id);
    for (const auto& a : assets) {
        const auto b = bus_index(a.bus_id);
        if (b == slack) continue;  // the slack balances, its assets don't schedule
        inj[b] += a.p_set_pu;
    }
    return inj;
}

void GridNetwork::validate() const {
    if (buses.empty())
        throw GridError(GridError::Code::invalid_network, "network has no buses");
    std::set<std::string> ids;
    for (const auto& b : buses)
        if (!ids.insert(b.id).second)
            throw GridError(GridError::Code::invalid_network,
                            "duplicate bus id '" + b.id + "'");
    std::set<std::string> bids;
    for (const auto& br : branches) {
        if (!bids.insert(br.id).second)
            throw GridError(GridError::Code::invalid_network,
                            "duplicate branch id '" + br.id + "'");
        bus_index(br.from_bus);
        bus_index(br.to_bus);
        if (br.from_bus == br.to_bus)
            throw GridError(GridError::Code::invalid_network,
                            "branch '" + br.id + "' is a self loop");
        if (!(br.reactance_pu > 0.0))
            throw GridError(GridError::Code::invalid_network,
                            "branch '" + br.id + "' reactance must be positive");
        if (br.rating_pu < 0.0)
            throw GridError(GridError::Code::invalid_network,
                            "branch '" + br.id + "' rating must be non-negative");
    }
    std::set<std::string> aids;
    for (const auto& a : assets) {
        if (!aids.insert(a.id).second)
            throw GridError(GridError::Code::invalid_network,
                            "duplicate asset id '" + a.id + "'");
        bus_index(a.bus_id);
        if (a.p_min_pu > a.p_max_pu)
            throw GridError(GridError::Code::invalid_network,
                            "asset '" + a.id + "' has an empty capability band");
        if (a.p_set_pu < a.p_min_pu || a.p_set_pu > a.p_max_pu)
            throw GridError(GridError::Code::invalid_network,
                            "asset '" + a.id + "' setpoint outside capability band");
    }
    bus_index(slack_bus_id);
}

FlowSolution solve_dc_power_flow(const GridNetwork& net) {
    return solve_impl(net, false);
}

FlowSolution solve_dc_power_flow_tolerant(const GridNetwork& net) {
    return solve_impl(net, true);
}

std::vector<LimitViolation> check_limits(const GridNetwork& net,
                                         const FlowSolution& sol) {
    std::vector<LimitViolation> out;
    for (std::size_t e = 0; e < net.branches.size(); ++e) {
        if (std::abs(sol.branch_flow_pu[e]) > net.branches[e].rating_pu) {
            out.push_back({net.branches[e].id, sol.branch_flow_pu[e],
                           net.branches[e].rating_pu});
        }
    }
    return out;
}

std::variant<GridNetwork, CommandRejection> apply_command(GridNetwork net,
                                                          const GridCommand& cmd) {
    if (std::holds_alternative<SetpointCommand>(cmd)) {
        const auto& c = std::get<SetpointCommand>(cmd);
        Asset* asset = nullptr;
        for (auto& a : net.assets)
            if (a.id == c.asset_id) asset = &a;
        if (!asset)
            return CommandRejection{CommandRejection::Reason::unknown_target,
                                    "unknown asset '" + c.asset_id + "'"};
        if (c.p_pu < asset->p_min_pu || c.p_pu > asset->p_max_pu) {
            std::ostringstream msg;
            msg << "setpoint " << c.p_pu << " pu outside capability ["
                << asset->p_min_pu << ", " << asset->p_max_pu << "] of '"
                << c.asset_id << "'";
            return CommandRejection{CommandRejection::Reason::capability_violation,
                                    msg.str()};
        }
        asset->p_set_pu = c.p_pu;
        return net;
    }
    const auto& c = std::get<SwitchCommand>(cmd);
    Branch* branch = nullptr;
    for (auto& b : net.branches)
        if (b.id == c.branch_id) branch = &b;
    if (!branch)
        return CommandRejection{CommandRejection::Reason::unknown_target,
                                "unknown branch '" + c.branch_id + "'"};
    branch->breaker_closed = c.close;
    return net;
}

const MeasurementPoint* DatapointMap::find_measurement(std::uint32_t ioa) const {
    for (const auto& m : measurements)
        if (m.ioa == ioa) return &m;
    return nullptr;
}

const CommandPoint* DatapointMap::find_command(std::uint32_t ioa) const {
    for (const auto& c : commands)
        if (c.ioa == ioa) return &c;
    return nullptr;
}

std::uint32_t DatapointMap::measurement_ioa(Quantity q, const std::string& ref) const {
    for (const auto& m : measurements)
        if (m.quantity == q && m.ref == ref) return m.ioa;
    throw GridError(GridError::Code::unknown_target,
                    std::string("no measurement of ") + to_string(q) + " for '" +
                        ref + "'");
}

std::vector<const MeasurementPoint*> DatapointMap::owned_by(const DeviceId& rtu) const {
    std::vector<const MeasurementPoint*> out;
    for (const auto& m : measurements)
        if (m.rtu == rtu) out.push_back(&m);
    return out;
}

void DatapointMap::validate(const GridNetwork& net) const {
    std::set<std::uint32_t> ioas;
    auto check_unique = [&ioas](std::uint32_t ioa) {
        if (!ioas.insert(ioa).second)
            throw GridError(GridError::Code::invalid_network,
                            "duplicate information object address " +
                                std::to_string(ioa));
    };
    for (const auto& m : measurements) {
        check_unique(m.ioa);
        switch (m.quantity) {
            case Quantity::bus_injection:
                net.bus_index(m.ref);
                break;
            case Quantity::branch_flow:
            case Quantity::breaker_state:
                net.branch_index(m.ref);
                break;
            case Quantity::device_status:
                break;  // ref is the device itself, checked by the scenario
        }
    }
    for (const auto& c : commands) {
        check_unique(c.ioa);
        if (c.kind == CommandKind::setpoint)
            net.asset_index(c.ref);
        else
            net.branch_index(c.ref);
    }
}

MeasurementSet generate_measurements(const GridNetwork& net,
                                     const FlowSolution& sol,
                                     const DatapointMap& map,
                                     double noise_sigma_pu, Rng& rng,
                                     SimTimeMs t_ms) {
    MeasurementSet out;
    out.t_ms = t_ms;
    for (const auto& m : map.measurements) {
        Measurement meas;
        meas.t_ms = t_ms;
        switch (m.quantity) {
            case Quantity::bus_injection:
                meas.value = sol.injection_pu[net.bus_index(m.ref)] +
                             rng.gaussian(noise_sigma_pu);
                break;
            case Quantity::branch_flow:
                meas.value = sol.branch_flow_pu[net.branch_index(m.ref)] +
                             rng.gaussian(noise_sigma_pu);
                break;
            case Quantity::breaker_state:
                meas.value =
                    net.branches[net.branch_index(m.ref)].breaker_closed ? 1.0 : 0.0;
                break;
            case Quantity::device_status:
                continue;  // carried by heartbeats
        }
        out.values.emplace(m.ioa, meas);
    }
    return out;
}

std::map<std::string, double> power_balance_residuals(
    const GridNetwork& net, const DatapointMap& map,
    const std::map<std::uint32_t, Measurement>& values) {
    std::map<std::string, double> residuals;
    for (const auto& bus : net.buses) {
        std::uint32_t inj_ioa = 0;
        try {
            inj_ioa = map.measurement_ioa(Quantity::bus_injection, bus.id);
        } catch (const GridError&) {
            throw GridError(GridError::Code::missing_datapoint,
                            "bus '" + bus.id + "' has no injection datapoint");
        }
        bool complete = true;
        auto it = values.find(inj_ioa);
        if (it == values.end()) complete = false;
        double r = complete ? it->second.value : 0.0;

        for (const auto& br : net.branches) {
            const double sign = (br.from_bus == bus.id)   ? -1.0
                                : (br.to_bus == bus.id) ? 1.0
                                                        : 0.0;
            if (sign == 0.0) continue;
            std::uint32_t flow_ioa = 0;
            try {
                flow_ioa = map.measurement_ioa(Quantity::branch_flow, br.id);
            } catch (const GridError&) {
                throw GridError(GridError::Code::missing_datapoint,
                                "branch '" + br.id + "' has no flow datapoint");
            }
            auto fit = values.find(flow_ioa);
            if (fit == values.end()) {
                complete = false;
                break;
            }
            r += sign * fit->second.value;
        }
        // Buses whose datapoints have not reported yet are skipped; staleness
        // monitoring flags them separately.
        if (complete) residuals[bus.id] = r;
    }
    return residuals;
}

bool switch_would_island(const GridNetwork& net, const std::string& branch_id,
                         const std::map<std::string, bool>& breaker_closed) {
    std::vector<bool> closed(net.branches.size());
    for (std::size_t e = 0; e < net.branches.size(); ++e) {
        auto it = breaker_closed.find(net.branches[e].id);
        closed[e] = it != breaker_closed.end() ? it->second
                                               : net.branches[e].breaker_closed;
    }
    const auto before = reachable_from_slack(net, closed);
    const auto after =
        reachable_from_slack(net, closed, net.branch_index(branch_id));
    for (std::size_t b = 0; b < net.buses.size(); ++b)
        if (before[b] && !after[b]) return true;
    return false;
}

}  // namespace otlab::grid
