#pragma once

// Operator guidance for suspected ICT attacks as a navigable graph:
// observations (what the operator sees) offer actions (what to do next), and
// actions either lead to new observations or escalate to a named hand-off
// point. A validator keeps authored guideline files honest: no dangling
// references, everything reachable from an entry point, and a bounded number
// of actions between any observation and an escalation.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace otlab::guide {

enum class Category : std::uint8_t { meas, comm, device, log, grid };

const char* to_string(Category c);
std::optional<Category> category_from_string(const std::string& s);

struct Observation {
    std::string id;
    Category category = Category::meas;
    std::string title;
    std::string text;
    bool entry = false;  // a starting point operators can jump to directly
    std::vector<std::string> triggers;  // alert rules that suggest this entry
    std::vector<std::string> actions;   // ordered action ids
};

struct Action {
    std::string id;
    std::string title;
    std::string text;
    std::vector<std::string> leads_to;     // observation ids
    std::optional<std::string> escalate;   // terminal hand-off, e.g. a role
};

class GuideError : public std::runtime_error {
public:
    GuideError(const std::string& what, int line = -1)
        : std::runtime_error(line >= 0 ? what + " (line " +
                                             std::to_string(line) + ")"
                                       : what),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_ = -1;
};

struct Issue {
    enum class Kind {
        dangling_reference,
        unreachable_node,
        no_escalation_path,
        no_entry_points,
    };
    Kind kind = Kind::dangling_reference;
    std::string node;    // offending observation/action id, if any
    std::string detail;
};

const char* to_string(Issue::Kind k);

struct Guideline {
    std::string name;
    std::string version;
    int max_escalation_steps = 10;
    std::vector<Observation> observations;  // authored order
    std::vector<Action> actions;

    const Observation* find_observation(const std::string& id) const;
    const Action* find_action(const std::string& id) const;
    std::vector<const Observation*> entry_points() const;
    // Entry observations whose trigger list contains `alert_rule`.
    std::vector<const Observation*> lookup(const std::string& alert_rule) const;

    std::vector<Issue> validate() const;
};

Guideline guideline_from_yaml(const std::string& text);  // throws GuideError
Guideline load_guideline(const std::string& path);       // throws GuideError

// One operator walk through the graph. The session sits either on an
// observation (pick an action next) or on an action (pick the follow-up
// observation next) until an escalating action completes it.
class Session {
public:
    explicit Session(const Guideline& g) : g_(&g) {}

    bool start(const std::string& observation_id);
    bool done() const { return static_cast<bool>(escalated_to_); }
    const std::optional<std::string>& escalated_to() const { return escalated_to_; }

    const Observation* at_observation() const;  // null while on an action/done
    const Action* at_action() const;            // null while on an observation

    // Choices at the current position, in guideline order.
    std::vector<std::string> choices() const;
    // Takes a choice either by id or by 1-based index into choices().
    bool choose(const std::string& id_or_index);

    struct TrailEntry {
        std::string observation_id;
        std::string action_id;
    };
    const std::vector<TrailEntry>& trail() const { return trail_; }

    std::string export_markdown() const;

private:
    const Guideline* g_;
    std::string current_obs_;
    std::string current_action_;
    std::optional<std::string> escalated_to_;
    std::vector<TrailEntry> trail_;
};

}  // namespace otlab::guide
