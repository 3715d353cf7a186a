#include "otlab/monitor.hpp"

#include <algorithm>

namespace otlab::mon {

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::none: return "none";
        case Verdict::ict_fault: return "ictFault";
        case Verdict::primary_fault: return "primaryFault";
        case Verdict::security_suspect: return "securitySuspect";
    }
    return "?";
}

Board::Board(MonitorConfig cfg, std::vector<DeviceSpec> devices)
    : cfg_(cfg), devices_(std::move(devices)) {
    for (const auto& d : devices_) state_[d.id] = State{};
}

void Board::on_heartbeat(const DeviceId& device, SimTimeMs t_ms) {
    auto it = state_.find(device);
    if (it == state_.end()) return;
    it->second.last_heartbeat_ms = t_ms;
    it->second.marked_unreachable = false;
}

void Board::on_link(const std::string& link_id, bool up) {
    for (const auto& d : devices_) {
        if (d.uplink_link_id == link_id) state_[d.id].uplink_up = up;
    }
}

bool Board::reachable(const DeviceId& device, SimTimeMs now_ms) const {
    auto it = state_.find(device);
    if (it == state_.end()) return true;
    const SimTimeMs silence = now_ms - it->second.last_heartbeat_ms;
    return silence <= cfg_.missed_heartbeats * cfg_.heartbeat_period_ms;
}

bool Board::uplink_up(const DeviceId& device) const {
    auto it = state_.find(device);
    return it == state_.end() ? true : it->second.uplink_up;
}

std::vector<DeviceId> Board::tick(SimTimeMs now_ms) {
    std::vector<DeviceId> newly_unreachable;
    for (const auto& d : devices_) {
        auto& st = state_[d.id];
        if (!reachable(d.id, now_ms)) {
            if (!st.marked_unreachable) {
                st.marked_unreachable = true;
                newly_unreachable.push_back(d.id);
            }
        }
    }
    return newly_unreachable;
}

Classification Board::classify(SimTimeMs now_ms, const ModelView& view) const {
    Classification out;
    auto is_stale = [&view](const DeviceId& id) {
        return std::find(view.stale_devices.begin(), view.stale_devices.end(),
                         id) != view.stale_devices.end();
    };

    for (const auto& d : devices_) {
        if (!reachable(d.id, now_ms) && !uplink_up(d.id) && is_stale(d.id)) {
            out.verdict = Verdict::ict_fault;
            out.rationale.push_back("device '" + d.id +
                                    "' unreachable with uplink down and stale data");
            return out;
        }
    }

    for (const auto& ob : view.open_breakers) {
        if (!ob.flow_known) continue;
        if (!reachable(ob.reporting_device, now_ms)) continue;
        if (ob.flow_abs_pu <= cfg_.flow_epsilon_pu) {
            out.verdict = Verdict::primary_fault;
            out.rationale.push_back("breaker on branch '" + ob.branch_id +
                                    "' open and measured flow agrees");
            return out;
        }
    }

    if (view.stale_devices.empty() && view.residual_alert_active) {
        out.verdict = Verdict::security_suspect;
        out.rationale.push_back(
            "telemetry fresh and plausible transport, but power balance is "
            "violated");
        return out;
    }

    return out;  // none
}

json Board::snapshot(SimTimeMs now_ms) const {
    json devices = json::array();
    for (const auto& d : devices_) {
        const auto& st = state_.at(d.id);
        json e;
        e["id"] = d.id;
        e["reachable"] = reachable(d.id, now_ms);
        e["lastHeartbeat"] = st.last_heartbeat_ms;
        e["uplinkUp"] = st.uplink_up;
        devices.push_back(e);
    }
    json j;
    j["devices"] = devices;
    return j;
}

const DeviceSpec* Board::find_by_status_ioa(std::uint32_t ioa) const {
    for (const auto& d : devices_)
        if (d.status_ioa == ioa) return &d;
    return nullptr;
}

}  // namespace otlab::mon
