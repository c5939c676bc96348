#pragma once

#include "stlcbf/barrier.hpp"
#include "stlcbf/sim.hpp"
#include "stlcbf/system.hpp"
#include "stlcbf/trace.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stlcbf::vehicle {

/// State layout: (X_f, V_f, X_l).
inline constexpr Eigen::Index kXf = 0;
inline constexpr Eigen::Index kVf = 1;
inline constexpr Eigen::Index kXl = 2;

struct VehicleParams {
    double mass = 1650.0;          // kg
    double c0 = 0.1;               // N
    double c1 = 5.0;               // N/(m/s)
    double c2 = 0.25;              // N/(m/s)^2
    double time_headway = 1.0;     // s
    double standstill_gap = 5.0;   // m
    double a_max = 0.4 * 9.8;      // m/s^2, braking capability
    double beta = 2.0;             // s, signal headway
    double g_grav = 9.8;           // m/s^2

    /// One message per violated invariant; empty when valid.
    std::vector<std::string> violations() const;
};

double friction_force(double v_f, const VehicleParams& p);

/// Lead vehicle driven by a piecewise-constant acceleration; its velocity
/// never drops below zero.
class LeadProfile {
public:
    /// steps: (start time, acceleration) sorted by time; acceleration before
    /// the first step is zero.
    LeadProfile(double x0, double v0, std::vector<std::pair<double, double>> steps);

    double initial_position() const { return x0_; }
    double velocity(double t) const;
    double acceleration(double t) const;
    /// Instants where the acceleration is discontinuous.
    const std::vector<double>& switch_times() const { return switches_; }

private:
    struct Piece {
        double start;
        double v_start;
        double accel;
    };
    const Piece& piece(double t) const;

    double x0_;
    std::vector<Piece> pieces_;
    std::vector<double> switches_;
};

/// Piecewise-constant limit V_max(t) on consecutive half-open intervals.
class SpeedLimitSchedule {
public:
    static SpeedLimitSchedule make(std::vector<std::pair<TimeInterval, double>> pieces);
    /// Equal-length intervals of `period` seconds cycling through `values`
    /// until `horizon`.
    static SpeedLimitSchedule periodic(double period, const std::vector<double>& values, double horizon);

    /// Value on the interval containing t; the last value persists past the end.
    double value(double t) const;
    const std::vector<std::pair<TimeInterval, double>>& pieces() const { return pieces_; }

private:
    std::vector<std::pair<TimeInterval, double>> pieces_;
};

enum class SignalPhase { None = 0, Green = 1, Yellow = 2, Red = 3 };

const char* to_string(SignalPhase p);

/// Instants at which a signal turns green, yellow and red in one cycle.
struct SignalCycle {
    double green = 0.0;
    double yellow = 0.0;
    double red = 0.0;
};

/// Cycles are consecutive; red lasts until the next cycle's green (or forever
/// after the last cycle).
struct TrafficSignal {
    double position = 0.0;
    std::vector<SignalCycle> cycles;
};

struct PhaseAt {
    SignalPhase phase = SignalPhase::None;
    /// Index into cycles; -1 before the first green.
    int cycle = -1;
};

struct SignalGeneratorSettings {
    int count = 10;
    double first_min = 300.0, first_max = 800.0;
    double spacing_min = 300.0, spacing_max = 800.0;
    double green_min = 20.0, green_max = 40.0;
    double yellow_min = 3.0, yellow_max = 5.0;
    double red_min = 15.0, red_max = 30.0;
};

class SignalSchedule {
public:
    static SignalSchedule make(std::vector<TrafficSignal> signals);
    /// Periodic signal with the first green at `offset` (shifted back so that
    /// cycles cover [0, horizon]).
    static TrafficSignal periodic(double position, double offset, double green, double yellow, double red,
                                  double horizon);
    /// Unequal spacings and cycle lengths drawn from a seeded generator.
    static SignalSchedule generate(std::uint64_t seed, const SignalGeneratorSettings& s, double horizon);

    std::size_t size() const { return signals_.size(); }
    const TrafficSignal& signal(std::size_t i) const { return signals_.at(i); }
    const std::vector<TrafficSignal>& signals() const { return signals_; }

    PhaseAt phase(std::size_t i, double t) const;
    /// k = min{i : X_f <= P_i}; empty beyond the last signal.
    std::optional<std::size_t> active_index(double x_f) const;

private:
    std::vector<TrafficSignal> signals_;
};

/// Ego longitudinal dynamics with the lead position as a third state.
class VehicleSystem final : public ControlSystem {
public:
    VehicleSystem(VehicleParams params, std::shared_ptr<const LeadProfile> lead, Box domain);

    Eigen::Index state_dim() const override { return 3; }
    Eigen::Index input_dim() const override { return 1; }
    State drift(double t, const State& x) const override;
    Eigen::MatrixXd input_map(double t, const State& x) const override;
    const Box& domain() const override { return domain_; }
    /// Negative ego speed is clamped to rest.
    bool sanitize(State& x) const override;
    std::vector<std::string> state_names() const override { return {"X_f", "V_f", "X_l"}; }

    const VehicleParams& params() const { return params_; }
    const LeadProfile& lead() const { return *lead_; }

private:
    VehicleParams params_;
    std::shared_ptr<const LeadProfile> lead_;
    Box domain_;
};

/// h1 = X_r - t_hw V_f - S0 - (V_f^2 - V_l(t)^2) / (2 a_max).
class SpacingBarrier final : public Barrier {
public:
    SpacingBarrier(std::string id, VehicleParams params, std::shared_ptr<const LeadProfile> lead);

    double value(double t, const State& x) const override;
    double dh_dt(double t, const State& x) const override;
    Eigen::VectorXd grad_x(double t, const State& x) const override;
    bool near_switch(double t, const State& x, double dt_radius, double dx_radius) const override;

private:
    VehicleParams params_;
    std::shared_ptr<const LeadProfile> lead_;
};

/// h_v = V_max(t) - V_f, right-continuous jumps at the schedule switches.
std::shared_ptr<AffineBarrier> speed_limit_barrier(std::string id, const SpeedLimitSchedule& limits);
std::shared_ptr<AffineBarrier> speed_limit_barrier(std::string id, double v_max);

/// h_pos: stitched from h_r,k = P_k - X_f - beta V_f - S0 (signal k red) and
/// h_rbar,k = P_{k+1} - X_f - beta V_f - S0 (otherwise), with k the active
/// signal. Yellow phases announce a finite-time obligation toward h_r,k with
/// the red instant as deadline. Vacuous beyond the last signal.
class SignalBarrier final : public Barrier, public PhasedBarrier {
public:
    SignalBarrier(std::string id, std::shared_ptr<const SignalSchedule> schedule, VehicleParams params,
                  double rho);

    double value(double t, const State& x) const override;
    double value_left(double t, const State& x) const override;
    double dh_dt(double, const State&) const override { return 0.0; }
    Eigen::VectorXd grad_x(double t, const State& x) const override;
    bool near_switch(double t, const State& x, double dt_radius, double dx_radius) const override;
    const PhasedBarrier* phased() const override { return this; }

    Phase phase(double t, const State& x) const override;

    /// Component barriers for signal k.
    const BarrierPtr& red_component(std::size_t k) const { return red_.at(k); }
    const BarrierPtr& clear_component(std::size_t k) const { return clear_.at(k); }
    const SignalSchedule& schedule() const { return *schedule_; }

private:
    BarrierPtr selected(std::size_t k, SignalPhase ph) const;

    std::shared_ptr<const SignalSchedule> schedule_;
    VehicleParams params_;
    double rho_;
    std::vector<BarrierPtr> red_;
    std::vector<BarrierPtr> clear_;
};

enum class BoundKind { H1, RBar, RFcbf, V, VFcbf };

/// Throws InvalidArgument for unknown names ("h1", "rbar", "r_fcbf", "v", "v_fcbf").
BoundKind bound_kind_from_string(const std::string& name);
const char* to_string(BoundKind k);

/// Inputs of the closed-form safe-input bounds at one instant.
struct BoundQuery {
    State x;              // (X_f, V_f, X_l)
    double v_lead = 0.0;
    double a_lead = 0.0;
    double position = 0.0;  // P_k for r_fcbf, P_{k+1} for rbar
    double v_max = 0.0;     // limit of the (current or next) speed segment
    double gamma = 1.0;     // FCBF kinds
    double rho = 0.9;       // FCBF kinds
};

/// Upper bound on u from each condition, derived by hand for this model:
///   h1     u <= m a/(t_hw a + V_f) (h1 + V_r + V_l a_l / a) + F_r
///   rbar   u <= (m/beta)(h_rbar - V_f) + F_r
///   r_fcbf u <= (m/beta)(gamma sgn(h_r)|h_r|^rho - V_f) + F_r
///   v      u <= (m/beta) h_v + F_r              (alpha = h/beta)
///   v_fcbf u <= m gamma sgn(h_v)|h_v|^rho + F_r
double closed_form_bound(BoundKind kind, const BoundQuery& q, const VehicleParams& p);

/// A commonly quoted variant of the same bounds, kept for comparison. It
/// differs from closed_form_bound for r_fcbf (no -V_f term) and v_fcbf (an
/// extra 1/beta factor).
double alternative_bound(BoundKind kind, const BoundQuery& q, const VehicleParams& p);

/// gamma for the red-phase FCBF: |h_r(t_s)|^(1-rho) / (Y (1-rho)), gamma_min if h_r(t_s) >= 0.
double red_phase_gamma(double h_r_at_engage, double rho, double yellow_duration,
                       double gamma_min = kDefaultGammaMin);

struct RedCrossing {
    std::size_t signal = 0;
    double time = 0.0;
};

/// Samples where the ego passes a signal position while that signal is red.
std::vector<RedCrossing> red_crossings(const Trace& trace, const SignalSchedule& signals);

/// Channel layout written next to the state: V_l, V_max, h1, h_v, h_pos,
/// active_signal (1-based, 0 beyond the last signal), signal_phase (code).
TraceAnnotator make_annotator(std::shared_ptr<const LeadProfile> lead, std::shared_ptr<const Barrier> h1,
                              std::shared_ptr<const Barrier> h_v, std::shared_ptr<const SignalBarrier> h_pos,
                              std::shared_ptr<const SpeedLimitSchedule> limits);

}  // namespace stlcbf::vehicle
