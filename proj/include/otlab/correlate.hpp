#pragma once

// Groups related alerts into incidents and turns alert evidence into a
// per-device compromise likelihood. Two alerts belong to the same incident
// when they are close in time and close on the communication graph; the
// likelihood combines independent pieces of evidence so that several weak
// indications add up but never exceed certainty.

#include <string>
#include <vector>

#include "otlab/ids.hpp"
#include "otlab/netsim.hpp"

namespace otlab::corr {

struct CorrelationConfig {
    SimTimeMs window_ms = 60000;  // max time distance between related alerts
    int hop_radius = 2;           // max graph distance between related alerts
    double weight_info = 0.1;
    double weight_warning = 0.3;
    double weight_critical = 0.6;
    double suspect_threshold = 0.2;
    double compromised_threshold = 0.6;
};

struct Incident {
    std::string id;  // INC-001, INC-002, ... ordered by first alert time
    std::vector<std::size_t> alert_indices;  // into the input alert list
    SimTimeMs first_ms = 0;
    SimTimeMs last_ms = 0;
    DeviceId root_suspect;  // primary device of the earliest member alert
};

// Single-linkage clustering: alerts i and j are related when
// |t_i - t_j| <= window_ms and the graph distance between their devices is
// <= hop_radius; incidents are the connected components of that relation.
std::vector<Incident> correlate(const std::vector<ids::Alert>& alerts,
                                const net::TopologySpec& topo,
                                const CorrelationConfig& cfg);

enum class Band : std::uint8_t { clear, suspect, compromised };
const char* to_string(Band b);

struct DeviceAssessment {
    DeviceId device;
    double score = 0.0;
    Band band = Band::clear;
};

// score(d) = 1 - prod over alerts (1 - w), where w is the severity weight if
// the alert names d (source or subject) and half of it if d is one hop away;
// each alert contributes at most once per device.
std::vector<DeviceAssessment> assess_compromise(
    const std::vector<ids::Alert>& alerts, const net::TopologySpec& topo,
    const CorrelationConfig& cfg);

// Hop distance between two devices on the link graph; -1 when disconnected or
// unknown (except that a device is always at distance 0 from itself).
int graph_distance(const net::TopologySpec& topo, const DeviceId& a,
                   const DeviceId& b);

nlohmann::ordered_json incident_to_json(const Incident& inc,
                                        const std::vector<ids::Alert>& alerts);
nlohmann::ordered_json assessment_to_json(const DeviceAssessment& a);

}  // namespace otlab::corr
