#pragma once

// Offline re-analysis of a recorded run. The first line of an event log is a
// meta record embedding the resolved scenario; everything needed to rebuild
// the detection stack (topology, datapoints, thresholds) comes from there, so
// a log file is self-contained. Feeding the remaining records through a fresh
// pipeline reproduces the alert stream of the original run byte for byte.

#include <iosfwd>
#include <string>
#include <vector>

#include "otlab/events.hpp"
#include "otlab/ids.hpp"
#include "otlab/scenario.hpp"

namespace otlab::replay {

struct ReplayResult {
    scenario::Scenario scenario;
    std::vector<ids::Alert> alerts;
    std::vector<sim::json> monitoring_log;
};

// Throws scenario::ScenarioError if the stream does not start with a valid
// meta record. Unparseable event lines are skipped.
ReplayResult replay_events(std::istream& in, ids::Layers layers = ids::Layers{});
ReplayResult replay_file(const std::string& path,
                         ids::Layers layers = ids::Layers{});

}  // namespace otlab::replay
