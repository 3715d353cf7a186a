#include "otlab/replay.hpp"

#include <fstream>
#include <istream>
#include <string>

namespace otlab::replay {

ReplayResult replay_events(std::istream& in, ids::Layers layers) {
    std::string line;
    if (!std::getline(in, line))
        throw scenario::ScenarioError("replay: event log is empty");

    sim::json meta = sim::json::parse(line, nullptr, false);
    if (meta.is_discarded() || meta.value("kind", "") != "meta" ||
        !meta.contains("scenario"))
        throw scenario::ScenarioError(
            "replay: first record is not a scenario meta record");

    ReplayResult out;
    out.scenario = scenario::scenario_from_json(meta["scenario"]);
    const auto& s = out.scenario;

    ids::Pipeline pipeline(s.topology, s.grid, s.datapoints,
                           ids::derive_whitelists(s.topology, s.datapoints),
                           s.detection, s.monitoring, s.device_specs(), layers);

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        sim::json j = sim::json::parse(line, nullptr, false);
        if (j.is_discarded()) continue;
        if (auto ev = sim::event_from_json(j)) pipeline.on_event(*ev);
    }

    out.alerts = pipeline.alerts();
    out.monitoring_log = pipeline.monitoring_log();
    return out;
}

ReplayResult replay_file(const std::string& path, ids::Layers layers) {
    std::ifstream in(path);
    if (!in)
        throw scenario::ScenarioError("replay: cannot open '" + path + "'");
    return replay_events(in, layers);
}

}  // namespace otlab::replay
