#pragma once

// Detection scoring: matches alert records against the ground-truth attack
// annotations from a run and reduces them to precision / recall / latency.
// An alert record matches an attack when its active span overlaps the
// attack's response window [start, end + 2 * reporting period] AND the alert
// names a device from the attack's ground-truth label (source or subject).
// Matched records are true positives, unmatched ones false positives; a
// detectable attack with no matching record is a false negative.

#include <optional>
#include <string>
#include <vector>

#include "otlab/common.hpp"
#include "otlab/events.hpp"
#include "otlab/ids.hpp"

namespace otlab::metrics {

struct AttackOutcome {
    sim::GroundTruth truth;
    int matched_alerts = 0;
    std::optional<SimTimeMs> first_alert_ms;  // earliest in-window record start
    std::optional<SimTimeMs> latency_ms;      // first_alert - attack start
    bool detected = false;
};

struct Summary {
    std::string scenario_name;
    int true_positives = 0;   // alert records matching at least one attack
    int false_positives = 0;  // alert records matching none
    int false_negatives = 0;  // detectable attacks with no matching record
    std::optional<double> precision;  // TP / (TP + FP); empty without alerts
    std::optional<double> recall;     // over detectable attacks only
    std::vector<AttackOutcome> attacks;
};

Summary score(const std::string& scenario_name,
              const std::vector<ids::Alert>& alerts,
              const std::vector<sim::GroundTruth>& truths,
              SimTimeMs reporting_period_ms);

sim::json to_json(const Summary& s);

}  // namespace otlab::metrics
