#pragma once

#include "stlcbf/barrier.hpp"
#include "stlcbf/trace.hpp"
#include "stlcbf/types.hpp"

#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace stlcbf {

/// Reference to a registry barrier. Negation is already folded into the
/// resolved entry (its barrier is -h).
struct PredicateRef {
    std::string barrier_id;
    bool negated = false;
    EntryPtr entry;

    const Barrier& barrier() const { return *entry->barrier; }
    std::string label() const { return (negated ? "!sat(" : "sat(") + barrier_id + ")"; }
};

struct SatisfactionTime {
    double t_s = 0.0;
    double epsilon = 0.5;
};

struct StlFormula;

struct Truth {};
/// phi_h evaluated at t = 0.
struct Atom {
    PredicateRef pred;
};
struct Globally {
    TimeInterval interval;
    PredicateRef pred;
};
struct Eventually {
    TimeInterval interval;
    PredicateRef pred;
    std::optional<SatisfactionTime> when;
};
struct And {
    std::vector<StlFormula> terms;
};

struct StlFormula {
    std::variant<Truth, Atom, Globally, Eventually, And> node;
};

std::string to_string(const StlFormula& f);

struct StlSpec {
    std::vector<StlFormula> tasks;
    double horizon = 0.0;
};

/// Predicates of one group are pairwise disjoint in time, sorted by start.
struct TaskGroup {
    std::string label;
    std::vector<std::pair<TimeInterval, PredicateRef>> predicates;
};

class SpecParseError : public std::runtime_error {
public:
    SpecParseError(int line, int column, const std::string& what);
    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

/// Line-oriented grammar:
///   horizon <T>
///   G[a,b) sat(id)      F[a,b) sat(id) @ts=<t> [eps=<e>]
///   sat(id)  !sat(id)  true       terms joined by '&' or by new lines
///   # comment
StlSpec parse_spec(std::string_view text, const BarrierRegistry& registry, double default_epsilon = 0.5);

/// Replaces every F_G phi by G_[t_s, t_s + eps) phi.
StlSpec eventually_to_globally(const StlSpec& spec);

/// Minimum partition into groups of pairwise time-disjoint Globally predicates.
/// Atoms and truth constants are not grouped (they constrain t = 0 only).
std::vector<TaskGroup> group_tasks(const StlSpec& spec);

/// Flattens nested conjunctions into leaf formulas.
std::vector<StlFormula> flatten(const StlSpec& spec);

struct SatisfactionEntry {
    std::string formula;
    bool satisfied = true;
    /// Globally: min margin over the window; Eventually: max margin.
    double margin = 0.0;
    double time = 0.0;
};

struct SatisfactionReport {
    std::vector<SatisfactionEntry> entries;
    bool satisfied() const;
};

inline constexpr double kMonitorTolerance = 1e-3;

/// Sampled Boolean semantics with margin tolerance tol.
/// Throws InvalidArgument when the trace ends before the horizon.
SatisfactionReport monitor_trace(const Trace& trace, const StlSpec& spec, double tol = kMonitorTolerance);
SatisfactionReport monitor_formula(const Trace& trace, const StlFormula& f, double tol = kMonitorTolerance);

}  // namespace stlcbf
