#pragma once

#include "stlcbf/contract.hpp"
#include "stlcbf/qp.hpp"
#include "stlcbf/system.hpp"
#include "stlcbf/trace.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace stlcbf {

struct StepResult {
    State x;
    /// sanitize() pulled the state back into the domain.
    bool sanitized = false;
    bool left_domain = false;
};

/// One classical Runge-Kutta 4 step of x' = f(t, x) + g(t, x) u with u held.
StepResult integrate_step(const ControlSystem& sys, double t, const State& x, const Input& u, double dt);

struct SimConfig {
    double dt = 0.01;
    double horizon = 0.0;
    InputBox box;
    /// Initial states may sit this far outside a first-segment safe set.
    double initial_tolerance = kSetTolerance;
};

using NominalController = std::function<Input(double t, const State& x, double dt)>;

/// Extra per-row quantities recorded alongside the state.
struct TraceAnnotator {
    std::vector<std::string> names;
    std::function<std::vector<double>(double t, const State& x)> evaluate;
};

enum class FailureKind { InitialCondition, Infeasible, DomainExit, NonFinite };

const char* to_string(FailureKind k);

struct SimFailure {
    FailureKind kind = FailureKind::Infeasible;
    double time = 0.0;
    std::string reason;
    std::vector<HalfspaceConstraint> constraints;
};

struct SimResult {
    Trace trace;
    std::optional<SimFailure> failure;

    bool ok() const { return !failure; }
};

/// Fixed-step closed loop: gather the conjoined safe input set, filter the
/// nominal input through the QP, integrate, record. Stops at the first
/// infeasible QP or domain exit and returns the trace prefix.
SimResult run_simulation(const ControlSystem& sys, const std::vector<ContractSchedule>& schedules,
                         const NominalController& nominal, const SimConfig& cfg, const State& x0,
                         const TraceAnnotator* annotator = nullptr);

}  // namespace stlcbf
