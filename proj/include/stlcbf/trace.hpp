#pragma once

#include "stlcbf/types.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace stlcbf {

enum class QpStatus { Nominal = 0, Modified = 1, Infeasible = 2 };

const char* to_string(QpStatus s);

struct TraceRow {
    double t = 0.0;
    State x;
    Input u_nom;
    Input u_safe;
    int active_constraints = 0;
    QpStatus qp_status = QpStatus::Nominal;
    /// Scenario-specific quantities, aligned with Trace::channel_names.
    std::vector<double> channels;
};

/// One finite-time convergence obligation as engaged at runtime.
struct EngagementEvent {
    std::string key;
    double time = 0.0;
    double h_engage = 0.0;
    double rho = 0.0;
    double gamma = 0.0;
    double deadline = 0.0;
    /// Convergence-time bound from the engagement margin.
    double bound = 0.0;
};

/// Time-indexed record of a closed-loop run.
struct Trace {
    std::vector<std::string> state_names;
    std::vector<std::string> channel_names;
    std::vector<TraceRow> rows;
    double dt = 0.0;
    std::string scenario_hash;
    std::vector<EngagementEvent> engagements;
    /// Free-form log of benign runtime events (domain clamps and the like).
    std::vector<std::string> events;

    std::optional<std::size_t> channel_index(const std::string& name) const;
    std::optional<std::size_t> state_index(const std::string& name) const;
};

}  // namespace stlcbf
