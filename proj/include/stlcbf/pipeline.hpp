#pragma once

#include "stlcbf/config.hpp"
#include "stlcbf/contract.hpp"
#include "stlcbf/sim.hpp"
#include "stlcbf/stl.hpp"
#include "stlcbf/vehicle.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace stlcbf {

/// Everything a run needs, instantiated from a config.
struct Scenario {
    ScenarioConfig cfg;
    std::shared_ptr<const vehicle::LeadProfile> lead;
    std::shared_ptr<const vehicle::VehicleSystem> sys;
    std::shared_ptr<const vehicle::SpacingBarrier> h1;
    std::shared_ptr<const AffineBarrier> h_v;
    std::shared_ptr<const vehicle::SignalBarrier> h_pos;
    std::shared_ptr<const vehicle::SignalSchedule> signals;
    std::shared_ptr<const vehicle::SpeedLimitSchedule> limits;
    BarrierRegistry registry;
    TraceAnnotator annotator;
};

/// Throws ConfigError when the pieces are inconsistent.
Scenario build_scenario(const ScenarioConfig& cfg);

enum class Stage { Config, Parse, Preprocess, Group, Schedule, Simulate, Monitor, Done };
enum class Outcome { Success, ConfigError, StaticIncompatible, RuntimeInfeasible, MonitorViolation, InternalError };

const char* to_string(Stage s);
const char* to_string(Outcome o);

/// 0 success, 1 internal error, 2 static incompatibility, 3 runtime
/// infeasibility, 4 config error, 5 monitor violation.
int exit_code(Outcome o);

struct RunStats {
    std::size_t steps = 0;
    std::size_t qp_nominal = 0;
    std::size_t qp_modified = 0;
    std::size_t sanitized = 0;
    double min_h1 = 0.0;
    double min_h_v = 0.0;
    double min_h_pos = 0.0;
    double max_speed_excess = 0.0;
    std::size_t red_crossings = 0;
};

struct RunReport {
    std::string scenario;
    std::string config_hash;
    double dt = 0.0;
    double horizon = 0.0;
    std::uint64_t seed = 0;
    Outcome outcome = Outcome::Success;
    /// Stage that produced the outcome.
    Stage stage = Stage::Done;
    std::string message;

    std::vector<TaskGroup> groups;
    std::vector<CompatibilityReport> compatibility;
    std::optional<SimFailure> failure;
    std::optional<SatisfactionReport> monitor;
    std::optional<RunStats> stats;
    std::vector<EngagementEvent> engagements;
    std::vector<std::string> events;

    bool success() const { return outcome == Outcome::Success; }
};

struct PipelineOptions {
    std::optional<double> dt;
    std::optional<std::uint64_t> seed;
    /// Stop after the static compatibility check.
    bool check_only = false;
};

struct PipelineResult {
    RunReport report;
    Trace trace;
};

/// parse -> preprocess -> group -> build schedules -> check -> simulate ->
/// monitor. Stops at the first failing stage; the trace holds whatever prefix
/// was simulated.
PipelineResult run_pipeline(const ScenarioConfig& cfg, const PipelineOptions& opts = {});

/// Offline monitoring of a recorded trace against the config's spec.
RunReport monitor_recorded(const Trace& trace, const ScenarioConfig& cfg);

/// 64-bit FNV-1a of the canonical config plus overrides, as hex.
std::string config_hash(const ScenarioConfig& cfg);

/// Columns: t, X_f, V_f, X_l, V_l, V_max, u_nom, u_safe, h1, h_v, h_pos,
/// qp_status, active_signal, signal_phase; reals with 6 decimals.
void write_trace_csv(const Trace& trace, std::ostream& out);
void write_trace_csv(const Trace& trace, const std::filesystem::path& path);
Trace read_trace_csv(std::istream& in);
Trace read_trace_csv(const std::filesystem::path& path);

/// key=value lines, always including status=success|failure.
void write_report(const RunReport& report, std::ostream& out);
void write_report(const RunReport& report, const std::filesystem::path& path);

}  // namespace stlcbf
