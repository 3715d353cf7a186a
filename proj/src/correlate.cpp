#include "otlab/correlate.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <numeric>
#include <set>

namespace otlab::corr {

namespace {

// Devices an alert points at: the source first, the subject if different.
std::vector<DeviceId> alert_devices(const ids::Alert& a) {
    std::vector<DeviceId> out;
    if (!a.source_node.empty()) out.push_back(a.source_node);
    if (!a.subject_device.empty() && a.subject_device != a.source_node)
        out.push_back(a.subject_device);
    return out;
}

DeviceId primary_device(const ids::Alert& a) {
    return !a.source_node.empty() ? a.source_node : a.subject_device;
}

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), 0);
    }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

double severity_weight(ids::Severity s, const CorrelationConfig& cfg) {
    switch (s) {
        case ids::Severity::info: return cfg.weight_info;
        case ids::Severity::warning: return cfg.weight_warning;
        case ids::Severity::critical: return cfg.weight_critical;
    }
    return 0.0;
}

}  // namespace

const char* to_string(Band b) {
    switch (b) {
        case Band::clear: return "clear";
        case Band::suspect: return "suspect";
        case Band::compromised: return "compromised";
    }
    return "?";
}

int graph_distance(const net::TopologySpec& topo, const DeviceId& a,
                   const DeviceId& b) {
    if (a == b) return 0;
    std::map<DeviceId, std::vector<DeviceId>> adj;
    for (const auto& l : topo.links) {
        adj[l.a].push_back(l.b);
        adj[l.b].push_back(l.a);
    }
    if (!adj.count(a) || !adj.count(b)) return -1;
    std::map<DeviceId, int> dist{{a, 0}};
    std::deque<DeviceId> queue{a};
    while (!queue.empty()) {
        const auto cur = queue.front();
        queue.pop_front();
        for (const auto& n : adj[cur]) {
            if (dist.count(n)) continue;
            dist[n] = dist[cur] + 1;
            if (n == b) return dist[n];
            queue.push_back(n);
        }
    }
    return -1;
}

std::vector<Incident> correlate(const std::vector<ids::Alert>& alerts,
                                const net::TopologySpec& topo,
                                const CorrelationConfig& cfg) {
    const std::size_t n = alerts.size();
    UnionFind uf(n);

    auto device_distance = [&](const ids::Alert& x, const ids::Alert& y) {
        int best = -1;
        for (const auto& dx : alert_devices(x)) {
            for (const auto& dy : alert_devices(y)) {
                const int d = graph_distance(topo, dx, dy);
                if (d >= 0 && (best < 0 || d < best)) best = d;
            }
        }
        return best;
    };

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const SimTimeMs dt = alerts[i].t_ms > alerts[j].t_ms
                                     ? alerts[i].t_ms - alerts[j].t_ms
                                     : alerts[j].t_ms - alerts[i].t_ms;
            if (dt > cfg.window_ms) continue;
            const int d = device_distance(alerts[i], alerts[j]);
            if (d >= 0 && d <= cfg.hop_radius) uf.unite(i, j);
        }
    }

    std::map<std::size_t, Incident> groups;
    for (std::size_t i = 0; i < n; ++i) {
        auto& inc = groups[uf.find(i)];
        inc.alert_indices.push_back(i);
    }

    std::vector<Incident> out;
    for (auto& [root, inc] : groups) {
        inc.first_ms = alerts[inc.alert_indices.front()].t_ms;
        inc.last_ms = inc.first_ms;
        std::size_t earliest = inc.alert_indices.front();
        for (const auto idx : inc.alert_indices) {
            inc.first_ms = std::min(inc.first_ms, alerts[idx].t_ms);
            inc.last_ms = std::max(inc.last_ms, alerts[idx].last_t_ms);
            if (alerts[idx].t_ms < alerts[earliest].t_ms) earliest = idx;
        }
        inc.root_suspect = primary_device(alerts[earliest]);
        out.push_back(std::move(inc));
    }
    std::sort(out.begin(), out.end(), [](const Incident& a, const Incident& b) {
        if (a.first_ms != b.first_ms) return a.first_ms < b.first_ms;
        return a.alert_indices.front() < b.alert_indices.front();
    });
    for (std::size_t i = 0; i < out.size(); ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "INC-%03zu", i + 1);
        out[i].id = buf;
    }
    return out;
}

std::vector<DeviceAssessment> assess_compromise(
    const std::vector<ids::Alert>& alerts, const net::TopologySpec& topo,
    const CorrelationConfig& cfg) {
    std::vector<DeviceAssessment> out;
    for (const auto& node : topo.nodes) {
        double innocent = 1.0;
        for (const auto& a : alerts) {
            const auto at = alert_devices(a);
            double w = 0.0;
            if (std::find(at.begin(), at.end(), node.id) != at.end()) {
                w = severity_weight(a.severity, cfg);
            } else {
                for (const auto& d : at) {
                    if (graph_distance(topo, node.id, d) == 1) {
                        w = severity_weight(a.severity, cfg) / 2.0;
                        break;
                    }
                }
            }
            innocent *= 1.0 - w;
        }
        DeviceAssessment da;
        da.device = node.id;
        da.score = 1.0 - innocent;
        da.band = da.score >= cfg.compromised_threshold ? Band::compromised
                  : da.score >= cfg.suspect_threshold   ? Band::suspect
                                                        : Band::clear;
        out.push_back(std::move(da));
    }
    std::sort(out.begin(), out.end(),
              [](const DeviceAssessment& a, const DeviceAssessment& b) {
                  return a.device < b.device;
              });
    return out;
}

nlohmann::ordered_json incident_to_json(const Incident& inc,
                                        const std::vector<ids::Alert>& alerts) {
    nlohmann::ordered_json j;
    j["id"] = inc.id;
    j["firstT"] = inc.first_ms;
    j["lastT"] = inc.last_ms;
    j["rootSuspect"] = inc.root_suspect;
    nlohmann::ordered_json members = nlohmann::ordered_json::array();
    for (const auto idx : inc.alert_indices) {
        const auto& a = alerts[idx];
        nlohmann::ordered_json m;
        m["t"] = a.t_ms;
        m["layer"] = ids::to_string(a.layer);
        m["rule"] = a.rule;
        m["source"] = a.source_node;
        m["subject"] = a.subject_device;
        m["severity"] = ids::to_string(a.severity);
        m["count"] = a.count;
        members.push_back(std::move(m));
    }
    j["alerts"] = std::move(members);
    return j;
}

nlohmann::ordered_json assessment_to_json(const DeviceAssessment& a) {
    nlohmann::ordered_json j;
    j["device"] = a.device;
    j["score"] = a.score;
    j["band"] = to_string(a.band);
    return j;
}

}  // namespace otlab::corr
