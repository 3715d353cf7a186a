#include "otlab/guide.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace otlab::guide {

namespace {

int mark_line(const YAML::Node& n) {
    return n.Mark().line >= 0 ? n.Mark().line + 1 : -1;
}

std::string require_string(const YAML::Node& n, const char* key) {
    if (!n[key] || !n[key].IsScalar())
        throw GuideError(std::string("missing '") + key + "'", mark_line(n));
    return n[key].as<std::string>();
}

std::vector<std::string> optional_list(const YAML::Node& n, const char* key) {
    std::vector<std::string> out;
    if (!n[key]) return out;
    if (!n[key].IsSequence())
        throw GuideError(std::string("'") + key + "' must be a list",
                         mark_line(n));
    for (const auto& e : n[key]) out.push_back(e.as<std::string>());
    return out;
}

}  // namespace

const char* to_string(Category c) {
    switch (c) {
        case Category::meas: return "MEAS";
        case Category::comm: return "COMM";
        case Category::device: return "DEVICE";
        case Category::log: return "LOG";
        case Category::grid: return "GRID";
    }
    return "?";
}

std::optional<Category> category_from_string(const std::string& s) {
    if (s == "MEAS") return Category::meas;
    if (s == "COMM") return Category::comm;
    if (s == "DEVICE") return Category::device;
    if (s == "LOG") return Category::log;
    if (s == "GRID") return Category::grid;
    return std::nullopt;
}

const char* to_string(Issue::Kind k) {
    switch (k) {
        case Issue::Kind::dangling_reference: return "dangling-reference";
        case Issue::Kind::unreachable_node: return "unreachable-node";
        case Issue::Kind::no_escalation_path: return "no-escalation-path";
        case Issue::Kind::no_entry_points: return "no-entry-points";
    }
    return "?";
}

const Observation* Guideline::find_observation(const std::string& id) const {
    for (const auto& o : observations)
        if (o.id == id) return &o;
    return nullptr;
}

const Action* Guideline::find_action(const std::string& id) const {
    for (const auto& a : actions)
        if (a.id == id) return &a;
    return nullptr;
}

std::vector<const Observation*> Guideline::entry_points() const {
    std::vector<const Observation*> out;
    for (const auto& o : observations)
        if (o.entry) out.push_back(&o);
    return out;
}

std::vector<const Observation*> Guideline::lookup(
    const std::string& alert_rule) const {
    std::vector<const Observation*> out;
    for (const auto& o : observations) {
        if (std::find(o.triggers.begin(), o.triggers.end(), alert_rule) !=
            o.triggers.end())
            out.push_back(&o);
    }
    return out;
}

std::vector<Issue> Guideline::validate() const {
    std::vector<Issue> issues;

    for (const auto& o : observations) {
        for (const auto& a : o.actions) {
            if (!find_action(a))
                issues.push_back({Issue::Kind::dangling_reference, o.id,
                                  "references unknown action '" + a + "'"});
        }
    }
    for (const auto& a : actions) {
        for (const auto& o : a.leads_to) {
            if (!find_observation(o))
                issues.push_back({Issue::Kind::dangling_reference, a.id,
                                  "references unknown observation '" + o + "'"});
        }
    }

    const auto entries = entry_points();
    if (entries.empty()) {
        issues.push_back(
            {Issue::Kind::no_entry_points, "", "no observation is marked entry"});
        return issues;  // the remaining checks need a starting point
    }

    // Forward reachability from the entry points.
    std::set<std::string> seen_obs, seen_act;
    std::vector<const Observation*> frontier = entries;
    for (const auto* e : frontier) seen_obs.insert(e->id);
    while (!frontier.empty()) {
        const auto* obs = frontier.back();
        frontier.pop_back();
        for (const auto& aid : obs->actions) {
            const auto* act = find_action(aid);
            if (!act || !seen_act.insert(aid).second) continue;
            for (const auto& oid : act->leads_to) {
                const auto* next = find_observation(oid);
                if (next && seen_obs.insert(oid).second)
                    frontier.push_back(next);
            }
        }
    }
    for (const auto& o : observations) {
        if (!seen_obs.count(o.id))
            issues.push_back({Issue::Kind::unreachable_node, o.id,
                              "not reachable from any entry point"});
    }
    for (const auto& a : actions) {
        if (!seen_act.count(a.id))
            issues.push_back({Issue::Kind::unreachable_node, a.id,
                              "not reachable from any entry point"});
    }

    // Minimum number of actions from each observation to an escalation,
    // relaxed to a fixpoint (the graphs are small and may contain cycles).
    const int inf = 1 << 20;
    std::map<std::string, int> obs_dist, act_dist;
    for (const auto& o : observations) obs_dist[o.id] = inf;
    for (const auto& a : actions)
        act_dist[a.id] = a.escalate ? 1 : inf;
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& a : actions) {
            if (a.escalate) continue;
            int best = inf;
            for (const auto& oid : a.leads_to) {
                auto it = obs_dist.find(oid);
                if (it != obs_dist.end() && it->second + 1 < best)
                    best = it->second + 1;
            }
            if (best < act_dist[a.id]) {
                act_dist[a.id] = best;
                changed = true;
            }
        }
        for (const auto& o : observations) {
            int best = inf;
            for (const auto& aid : o.actions) {
                auto it = act_dist.find(aid);
                if (it != act_dist.end() && it->second < best) best = it->second;
            }
            if (best < obs_dist[o.id]) {
                obs_dist[o.id] = best;
                changed = true;
            }
        }
    }
    for (const auto& o : observations) {
        if (!seen_obs.count(o.id)) continue;  // already flagged unreachable
        if (obs_dist[o.id] > max_escalation_steps) {
            issues.push_back(
                {Issue::Kind::no_escalation_path, o.id,
                 obs_dist[o.id] >= inf
                     ? "no escalation reachable"
                     : "escalation needs " + std::to_string(obs_dist[o.id]) +
                           " actions, limit is " +
                           std::to_string(max_escalation_steps)});
        }
    }
    return issues;
}

Guideline guideline_from_yaml(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw GuideError(std::string("YAML parse error: ") + e.msg,
                         e.mark.line + 1);
    }
    if (!root.IsMap()) throw GuideError("guideline file must be a mapping");

    Guideline g;
    g.name = root["name"] ? root["name"].as<std::string>() : "unnamed";
    g.version = root["version"] ? root["version"].as<std::string>() : "0";
    if (root["maxEscalationSteps"])
        g.max_escalation_steps = root["maxEscalationSteps"].as<int>();

    std::set<std::string> ids;
    auto claim_id = [&ids](const std::string& id, const YAML::Node& n) {
        if (!ids.insert(id).second)
            throw GuideError("duplicate id '" + id + "'", mark_line(n));
    };

    if (!root["observations"] || !root["observations"].IsSequence())
        throw GuideError("missing 'observations' list");
    for (const auto& n : root["observations"]) {
        Observation o;
        o.id = require_string(n, "id");
        claim_id(o.id, n);
        const auto cat = category_from_string(require_string(n, "category"));
        if (!cat)
            throw GuideError("unknown category for '" + o.id + "'",
                             mark_line(n));
        o.category = *cat;
        o.title = require_string(n, "title");
        o.text = n["text"] ? n["text"].as<std::string>() : "";
        o.entry = n["entry"] ? n["entry"].as<bool>() : false;
        o.triggers = optional_list(n, "triggers");
        o.actions = optional_list(n, "actions");
        g.observations.push_back(std::move(o));
    }

    if (!root["actions"] || !root["actions"].IsSequence())
        throw GuideError("missing 'actions' list");
    for (const auto& n : root["actions"]) {
        Action a;
        a.id = require_string(n, "id");
        claim_id(a.id, n);
        a.title = require_string(n, "title");
        a.text = n["text"] ? n["text"].as<std::string>() : "";
        a.leads_to = optional_list(n, "leadsTo");
        if (n["escalate"]) a.escalate = n["escalate"].as<std::string>();
        if (!a.escalate && a.leads_to.empty())
            throw GuideError("action '" + a.id +
                                 "' neither escalates nor leads anywhere",
                             mark_line(n));
        g.actions.push_back(std::move(a));
    }
    return g;
}

Guideline load_guideline(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw GuideError("cannot open guideline file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return guideline_from_yaml(buf.str());
}

bool Session::start(const std::string& observation_id) {
    const auto* obs = g_->find_observation(observation_id);
    if (!obs) return false;
    current_obs_ = observation_id;
    current_action_.clear();
    escalated_to_.reset();
    trail_.clear();
    return true;
}

const Observation* Session::at_observation() const {
    if (done() || current_obs_.empty() || !current_action_.empty()) return nullptr;
    return g_->find_observation(current_obs_);
}

const Action* Session::at_action() const {
    if (done() || current_action_.empty()) return nullptr;
    return g_->find_action(current_action_);
}

std::vector<std::string> Session::choices() const {
    if (done()) return {};
    if (const auto* a = at_action()) return a->leads_to;
    if (const auto* o = at_observation()) return o->actions;
    return {};
}

bool Session::choose(const std::string& id_or_index) {
    const auto options = choices();
    if (options.empty()) return false;

    std::string picked;
    unsigned index = 0;
    const auto [p, ec] = std::from_chars(
        id_or_index.data(), id_or_index.data() + id_or_index.size(), index);
    if (ec == std::errc() && p == id_or_index.data() + id_or_index.size()) {
        if (index < 1 || index > options.size()) return false;
        picked = options[index - 1];
    } else {
        if (std::find(options.begin(), options.end(), id_or_index) ==
            options.end())
            return false;
        picked = id_or_index;
    }

    if (!current_action_.empty()) {
        // Moving from an action to its follow-up observation.
        current_obs_ = picked;
        current_action_.clear();
        return true;
    }
    // Taking an action from the current observation.
    const auto* act = g_->find_action(picked);
    if (!act) return false;
    trail_.push_back({current_obs_, picked});
    if (act->escalate) {
        escalated_to_ = act->escalate;
        current_action_.clear();
        return true;
    }
    current_action_ = picked;
    return true;
}

std::string Session::export_markdown() const {
    std::ostringstream os;
    os << "# Response walkthrough\n\n";
    int step = 1;
    for (const auto& e : trail_) {
        const auto* obs = g_->find_observation(e.observation_id);
        const auto* act = g_->find_action(e.action_id);
        os << step++ << ". **" << e.observation_id << "** "
           << (obs ? obs->title : "") << "\n";
        os << "   - action `" << e.action_id << "`: " << (act ? act->title : "")
           << "\n";
    }
    if (escalated_to_)
        os << "\nEscalated to: **" << *escalated_to_ << "**\n";
    else
        os << "\n(walkthrough still open)\n";
    return os.str();
}

}  // namespace otlab::guide
