#include "otlab/metrics.hpp"

#include <algorithm>

namespace otlab::metrics {

namespace {

bool overlaps(SimTimeMs a_lo, SimTimeMs a_hi, SimTimeMs b_lo, SimTimeMs b_hi) {
    return a_lo <= b_hi && b_lo <= a_hi;
}

bool names_device(const ids::Alert& a, const sim::GroundTruth& g) {
    for (const auto& n : g.nodes)
        if (a.subject_device == n || a.source_node == n) return true;
    return false;
}

}  // namespace

Summary score(const std::string& scenario_name,
              const std::vector<ids::Alert>& alerts,
              const std::vector<sim::GroundTruth>& truths,
              SimTimeMs reporting_period_ms) {
    Summary sum;
    sum.scenario_name = scenario_name;

    std::vector<bool> alert_matched(alerts.size(), false);

    for (const auto& truth : truths) {
        AttackOutcome out;
        out.truth = truth;
        const SimTimeMs lo = truth.start_ms;
        const SimTimeMs hi = truth.end_ms + 2 * reporting_period_ms;
        for (std::size_t i = 0; i < alerts.size(); ++i) {
            const auto& a = alerts[i];
            if (!overlaps(a.t_ms, a.last_t_ms, lo, hi)) continue;
            if (!names_device(a, truth)) continue;
            alert_matched[i] = true;
            ++out.matched_alerts;
            if (a.t_ms >= lo && (!out.first_alert_ms || a.t_ms < *out.first_alert_ms))
                out.first_alert_ms = a.t_ms;
        }
        out.detected = out.matched_alerts > 0;
        if (out.first_alert_ms) out.latency_ms = *out.first_alert_ms - truth.start_ms;
        sum.attacks.push_back(std::move(out));
    }

    sum.true_positives = static_cast<int>(
        std::count(alert_matched.begin(), alert_matched.end(), true));
    sum.false_positives = static_cast<int>(alerts.size()) - sum.true_positives;

    int detectable = 0;
    int detected = 0;
    for (const auto& out : sum.attacks) {
        if (!out.truth.detectable) continue;
        ++detectable;
        if (out.detected) ++detected;
    }
    sum.false_negatives = detectable - detected;
    if (detectable > 0)
        sum.recall = static_cast<double>(detected) / static_cast<double>(detectable);
    if (!alerts.empty())
        sum.precision = static_cast<double>(sum.true_positives) /
                        static_cast<double>(alerts.size());
    return sum;
}

sim::json to_json(const Summary& s) {
    sim::json j;
    j["scenario"] = s.scenario_name;
    j["truePositives"] = s.true_positives;
    j["falsePositives"] = s.false_positives;
    j["falseNegatives"] = s.false_negatives;
    j["precision"] = s.precision ? sim::json(*s.precision) : sim::json(nullptr);
    j["recall"] = s.recall ? sim::json(*s.recall) : sim::json(nullptr);
    j["attacks"] = sim::json::array();
    for (const auto& out : s.attacks) {
        sim::json a;
        a["id"] = out.truth.attack_id;
        a["kind"] = out.truth.kind;
        a["startMs"] = out.truth.start_ms;
        a["endMs"] = out.truth.end_ms;
        a["detectable"] = out.truth.detectable;
        a["detected"] = out.detected;
        a["matchedAlerts"] = out.matched_alerts;
        a["firstAlertMs"] =
            out.first_alert_ms ? sim::json(*out.first_alert_ms) : sim::json(nullptr);
        a["detectionLatencyMs"] =
            out.latency_ms ? sim::json(*out.latency_ms) : sim::json(nullptr);
        j["attacks"].push_back(a);
    }
    return j;
}

}  // namespace otlab::metrics
