// otlab — scenario runner, detection scorer, log replayer and guideline
// browser for the OT security testbed. One command per process; see
// README.md for the file formats involved.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "otlab/engine.hpp"
#include "otlab/guide.hpp"
#include "otlab/metrics.hpp"
#include "otlab/replay.hpp"
#include "otlab/scenario.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInternalError = 1;
constexpr int kInputError = 2;

int cmd_run(const std::string& scenario_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed,
            std::optional<std::int64_t> duration) {
    auto s = otlab::scenario::load_scenario(scenario_path);
    if (seed) s.seed = *seed;
    if (duration) {
        s.duration_ms = *duration;
        otlab::scenario::validate(s);  // attack/schedule windows may now warn
    }
    for (const auto& w : s.warnings) std::cerr << "warning: " << w << "\n";

    auto artifacts = otlab::engine::run_scenario(s);
    otlab::engine::write_artifacts(artifacts, out_dir);
    std::cout << artifacts.metrics.dump(2) << "\n";
    return kOk;
}

int cmd_metrics(const std::string& alerts_path, const std::string& events_path) {
    std::ifstream events(events_path);
    if (!events) {
        std::cerr << "error: cannot open '" << events_path << "'\n";
        return kInputError;
    }
    std::string line;
    if (!std::getline(events, line)) {
        std::cerr << "error: '" << events_path << "' is empty\n";
        return kInputError;
    }
    auto meta = otlab::sim::json::parse(line, nullptr, false);
    if (meta.is_discarded() || meta.value("kind", "") != "meta" ||
        !meta.contains("scenario")) {
        std::cerr << "error: '" << events_path
                  << "' does not start with a scenario meta record\n";
        return kInputError;
    }
    const auto scenario = otlab::scenario::scenario_from_json(meta["scenario"]);

    std::vector<otlab::sim::GroundTruth> truths;
    while (std::getline(events, line)) {
        if (line.empty()) continue;
        auto j = otlab::sim::json::parse(line, nullptr, false);
        if (j.is_discarded()) continue;
        auto ev = otlab::sim::event_from_json(j);
        if (!ev) continue;
        if (const auto* m = std::get_if<otlab::sim::AttackMarker>(&*ev))
            truths.push_back(m->truth);
    }

    std::ifstream alerts_in(alerts_path);
    if (!alerts_in) {
        std::cerr << "error: cannot open '" << alerts_path << "'\n";
        return kInputError;
    }
    std::vector<otlab::ids::Alert> alerts;
    while (std::getline(alerts_in, line)) {
        if (line.empty()) continue;
        auto j = otlab::sim::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            std::cerr << "error: unparseable alert record in '" << alerts_path
                      << "'\n";
            return kInputError;
        }
        auto a = otlab::ids::alert_from_json(j);
        if (!a) {
            std::cerr << "error: malformed alert record in '" << alerts_path
                      << "'\n";
            return kInputError;
        }
        alerts.push_back(std::move(*a));
    }

    const auto summary = otlab::metrics::score(scenario.name, alerts, truths,
                                               scenario.reporting_period_ms);
    std::cout << otlab::metrics::to_json(summary).dump(2) << "\n";
    return kOk;
}

int cmd_replay(const std::string& events_path) {
    auto result = otlab::replay::replay_file(events_path);
    for (const auto& a : result.alerts)
        std::cout << otlab::ids::alert_to_json(a).dump() << "\n";
    return kOk;
}

// --- Guideline browser ------------------------------------------------------

void guide_print_position(const otlab::guide::Session& session) {
    using otlab::guide::to_string;
    if (session.done()) {
        std::cout << "-> escalated to: " << *session.escalated_to() << "\n";
        return;
    }
    if (const auto* obs = session.at_observation()) {
        std::cout << "[" << to_string(obs->category) << "] " << obs->id << ": "
                  << obs->title << "\n  " << obs->text << "\n";
    } else if (const auto* act = session.at_action()) {
        std::cout << "(action) " << act->id << ": " << act->title << "\n  "
                  << act->text << "\n";
    } else {
        std::cout << "(no active session; use `start <observation>` or "
                     "`lookup <alert-rule>`)\n";
        return;
    }
    const auto choices = session.choices();
    if (choices.empty()) return;
    std::cout << "  choices:\n";
    for (std::size_t i = 0; i < choices.size(); ++i)
        std::cout << "    " << (i + 1) << ") " << choices[i] << "\n";
}

void guide_export(const otlab::guide::Session& session, const std::string& path) {
    if (path.empty()) {
        std::cout << session.export_markdown();
        return;
    }
    std::ofstream out(path);
    out << session.export_markdown();
    std::cout << "session written to " << path << "\n";
}

int cmd_guide(const std::string& guide_path, const std::string& script_path) {
    const auto guideline = otlab::guide::load_guideline(guide_path);

    const auto issues = guideline.validate();
    for (const auto& issue : issues)
        std::cerr << "guideline issue: " << otlab::guide::to_string(issue.kind)
                  << ": " << issue.node
                  << (issue.detail.empty() ? "" : " — " + issue.detail) << "\n";
    if (!issues.empty()) return kInputError;

    std::ifstream script;
    const bool scripted = !script_path.empty();
    if (scripted) {
        script.open(script_path);
        if (!script) {
            std::cerr << "error: cannot open script '" << script_path << "'\n";
            return kInputError;
        }
    }
    std::istream& in = scripted ? static_cast<std::istream&>(script) : std::cin;

    std::cout << "guideline: " << guideline.name << " (version "
              << guideline.version << ")\n";
    std::cout << "entry points:\n";
    for (const auto* obs : guideline.entry_points())
        std::cout << "  " << obs->id << ": " << obs->title << "\n";

    otlab::guide::Session session(guideline);
    std::string line;
    while (true) {
        if (!scripted) std::cout << "guide> " << std::flush;
        if (!std::getline(in, line)) break;  // EOF ends the session
        if (scripted) std::cout << "guide> " << line << "\n";
        std::istringstream words(line);
        std::string cmd;
        words >> cmd;
        if (cmd.empty()) continue;

        if (cmd == "quit" || cmd == "exit") break;
        if (cmd == "help") {
            std::cout << "commands: lookup <alert-rule> | start <observation> | "
                         "choices | choose <n|id> | trail | export [path] | "
                         "entries | quit\n";
        } else if (cmd == "entries") {
            for (const auto* obs : guideline.entry_points())
                std::cout << "  " << obs->id << ": " << obs->title << "\n";
        } else if (cmd == "lookup") {
            std::string rule;
            words >> rule;
            const auto hits = guideline.lookup(rule);
            if (hits.empty()) {
                std::cout << "no entry point is triggered by '" << rule << "'\n";
            } else {
                for (const auto* obs : hits)
                    std::cout << "  " << obs->id << ": " << obs->title << "\n";
                if (hits.size() == 1 && session.start(hits.front()->id))
                    guide_print_position(session);
            }
        } else if (cmd == "start") {
            std::string id;
            words >> id;
            if (!session.start(id)) {
                std::cout << "'" << id << "' is not an entry observation\n";
            } else {
                guide_print_position(session);
            }
        } else if (cmd == "choices") {
            guide_print_position(session);
        } else if (cmd == "choose") {
            std::string choice;
            words >> choice;
            if (!session.choose(choice)) {
                std::cout << "invalid choice '" << choice
                          << "'; pick one of:\n";
                const auto choices = session.choices();
                for (std::size_t i = 0; i < choices.size(); ++i)
                    std::cout << "    " << (i + 1) << ") " << choices[i] << "\n";
            } else {
                guide_print_position(session);
            }
        } else if (cmd == "trail") {
            for (const auto& e : session.trail())
                std::cout << "  " << e.observation_id << " -> " << e.action_id
                          << "\n";
        } else if (cmd == "export") {
            std::string path;
            words >> path;
            guide_export(session, path);
        } else {
            std::cout << "unknown command '" << cmd << "' (try `help`)\n";
        }
    }

    // Session over (quit or EOF): leave a record of the walk taken so far.
    if (!session.trail().empty() || session.done()) {
        std::cout << "\n";
        guide_export(session, "");
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OT security testbed: scenario runner and analysis tools"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> duration;
    auto* run = app.add_subcommand("run", "Run a scenario and write artifacts");
    run->add_option("--scenario", scenario_path, "Scenario YAML file")
        ->required();
    run->add_option("--out", out_dir, "Output directory for artifacts");
    run->add_option("--seed", seed, "Override the scenario RNG seed");
    run->add_option("--duration", duration, "Override the run length (ms)");

    std::string alerts_path, events_path;
    auto* metrics =
        app.add_subcommand("metrics", "Score an alert log against ground truth");
    metrics->add_option("--alerts", alerts_path, "Alert log (JSONL)")->required();
    metrics->add_option("--events", events_path, "Event log (JSONL)")->required();

    std::string guide_path, script_path;
    auto* guide = app.add_subcommand("guide", "Browse an incident guideline");
    guide->add_option("--file", guide_path, "Guideline YAML file")->required();
    guide->add_option("--script", script_path, "Read commands from a file");

    std::string replay_events;
    auto* replay =
        app.add_subcommand("replay", "Re-run detection over a stored event log");
    replay->add_option("--events", replay_events, "Event log (JSONL)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kInputError;
    }

    try {
        if (run->parsed()) return cmd_run(scenario_path, out_dir, seed, duration);
        if (metrics->parsed()) return cmd_metrics(alerts_path, events_path);
        if (guide->parsed()) return cmd_guide(guide_path, script_path);
        if (replay->parsed()) return cmd_replay(replay_events);
    } catch (const otlab::scenario::ScenarioError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const otlab::guide::GuideError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternalError;
    }
    return kOk;
}
