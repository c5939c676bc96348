#pragma once

#include "stlcbf/barrier.hpp"
#include "stlcbf/stl.hpp"
#include "stlcbf/system.hpp"
#include "stlcbf/trace.hpp"

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace stlcbf {

enum class CheckMethod { Exact, Sampled };
enum class Verdict { Subset, OverlapWithDeadline, Incompatible };

const char* to_string(CheckMethod m);
const char* to_string(Verdict v);

/// Margins within this band of zero count as inside a safe set.
inline constexpr double kSetTolerance = 1e-9;

struct SubsetResult {
    bool subset = false;
    CheckMethod method = CheckMethod::Exact;
    /// Grid points per dimension for sampled checks.
    int resolution = 0;
    /// A point of C_prev(t^-) outside C_next(t), when one was found.
    std::optional<State> counterexample;
    /// min of h_next(t, .) over C_prev(t^-) within the domain; +inf when that set is empty.
    double worst_margin = 0.0;
};

struct IntersectionResult {
    std::optional<State> witness;
    CheckMethod method = CheckMethod::Exact;
    int resolution = 0;
};

/// C_prev(t^-) within domain is contained in C_next(t)? Exact for affine
/// barriers (a small LP over the box), grid sampled otherwise.
SubsetResult check_subset(const Barrier& prev, const Barrier& next, double t, const Box& domain,
                          int grid_points = 101);

/// A state in C_prev(t^-) and C_next(t). The exact method returns the point
/// of the box that maximizes min(h_prev, h_next).
IntersectionResult check_intersection(const Barrier& prev, const Barrier& next, double t, const Box& domain,
                                      int grid_points = 101);

struct Invariance {
    AlphaFn alpha = AlphaFn::identity();
};

struct FiniteTime {
    double rho = 0.9;
    /// Length of the convergence window.
    double t_conv = 0.0;
    std::optional<double> gamma;
};

struct ContractSegment {
    std::string barrier_id;
    BarrierPtr barrier;
    TimeInterval interval;
    std::variant<Invariance, FiniteTime> kind;
    /// Engagement time tau (FiniteTime only); equals interval.start.
    double engage_time = 0.0;

    bool vacuous() const { return barrier->vacuous(); }
};

struct BoundaryReport {
    double time = 0.0;
    std::string prev_id;
    std::string next_id;
    Verdict verdict = Verdict::Subset;
    CheckMethod method = CheckMethod::Exact;
    int resolution = 0;
    std::optional<State> witness;
    std::string reason;
    // deadline data, meaningful for OverlapWithDeadline and deadline failures
    double engage_time = 0.0;
    double window = 0.0;
    double worst_engage_margin = 0.0;
    double bound = 0.0;
};

struct CompatibilityReport {
    std::string group;
    std::vector<BoundaryReport> boundaries;

    bool compatible() const;
    const BoundaryReport* first_failure() const;
};

struct ScheduleConfig {
    Box domain;
    double horizon = 0.0;
    int grid_points = 101;
    /// Convergence must complete this long before the boundary.
    double step_margin = 0.01;
    double gamma_min = kDefaultGammaMin;
};

/// Composed contract for one task group: invariance segments tile the span;
/// each boundary may carry a finite-time segment on [tau_i, t_i).
struct ContractSchedule {
    std::string label;
    TimeInterval span;
    std::vector<ContractSegment> segments;
    std::vector<Verdict> verdicts;
    std::vector<std::optional<ContractSegment>> convergence;
    double step_margin = 0.01;
    double gamma_min = kDefaultGammaMin;

    /// Segment index covering t; t == span.end maps to the last segment.
    std::size_t segment_at(double t) const;
};

struct BuildResult {
    ContractSchedule schedule;
    CompatibilityReport report;

    bool ok() const { return report.compatible(); }
};

/// Composes the group's predicates, filling gaps with vacuous segments, and
/// classifies every boundary. The schedule is usable only when ok().
BuildResult build_schedule(const TaskGroup& group, const ScheduleConfig& cfg);

/// Runtime memory of finite-time obligations: gamma is fixed at engagement.
class EngagementLog {
public:
    const EngagementEvent* find(const std::string& key) const;
    const EngagementEvent& record(EngagementEvent ev);
    const std::vector<EngagementEvent>& events() const { return events_; }

private:
    std::map<std::string, std::size_t> index_;
    std::vector<EngagementEvent> events_;
};

/// Halfspaces of the safe input set of one schedule at (t, x).
/// Throws std::out_of_range outside the schedule span.
std::vector<HalfspaceConstraint> active_constraints(const ContractSchedule& schedule, double t, const State& x,
                                                   const ControlSystem& sys, EngagementLog& log);

/// Intersection of the groups' safe input sets.
std::vector<HalfspaceConstraint> conjoin_groups(const std::vector<ContractSchedule>& schedules, double t,
                                                const State& x, const ControlSystem& sys, EngagementLog& log);

}  // namespace stlcbf
