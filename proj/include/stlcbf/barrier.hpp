#pragma once

#include "stlcbf/system.hpp"
#include "stlcbf/types.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace stlcbf {

/// h(t, x) = coeffs . x + offset, valid at one time instant.
struct AffineForm {
    Eigen::VectorXd coeffs;
    double offset = 0.0;

    double operator()(const State& x) const { return coeffs.dot(x) + offset; }
};

class PhasedBarrier;

/// Time-varying scalar function h(t, x) whose superlevel set {h >= 0} is the
/// safe set C(t). Implementations supply analytic partial derivatives.
///
/// Piecewise templates are right-continuous in t; value_left gives the left
/// limit used for C(t^-).
class Barrier {
public:
    Barrier(std::string id, Eigen::Index state_dim);
    virtual ~Barrier() = default;

    const std::string& id() const { return id_; }
    Eigen::Index state_dim() const { return state_dim_; }

    virtual double value(double t, const State& x) const = 0;
    virtual double value_left(double t, const State& x) const { return value(t, x); }
    virtual double dh_dt(double t, const State& x) const = 0;
    virtual Eigen::VectorXd grad_x(double t, const State& x) const = 0;

    /// True when a switch of the piecewise definition lies within dt_radius
    /// of t or within dx_radius (infinity norm) of x.
    virtual bool near_switch(double /*t*/, const State& /*x*/, double /*dt_radius*/,
                             double /*dx_radius*/) const {
        return false;
    }

    /// Exact affine description at time t (resp. t^-), when the template has one.
    virtual std::optional<AffineForm> affine(double /*t*/) const { return std::nullopt; }
    virtual std::optional<AffineForm> affine_left(double t) const { return affine(t); }

    virtual const PhasedBarrier* phased() const { return nullptr; }
    /// The trivially true predicate; contributes no constraint.
    virtual bool vacuous() const { return false; }

private:
    std::string id_;
    Eigen::Index state_dim_;
};

using BarrierPtr = std::shared_ptr<const Barrier>;

/// Membership view of C(t) (or C(t^-) when left is set).
struct SafeSet {
    BarrierPtr barrier;
    double t = 0.0;
    bool left = false;

    double margin(const State& x) const {
        return left ? barrier->value_left(t, x) : barrier->value(t, x);
    }
    bool contains(const State& x) const { return margin(x) >= 0.0; }
};

/// h = coeffs . x + d(t), with d piecewise constant and right-continuous.
class AffineBarrier final : public Barrier {
public:
    /// switch_times must be strictly increasing; offsets has one more entry
    /// than switch_times (offsets[k] holds on [switch_times[k-1], switch_times[k])).
    AffineBarrier(std::string id, Eigen::VectorXd coeffs, std::vector<double> switch_times,
                  std::vector<double> offsets);
    AffineBarrier(std::string id, Eigen::VectorXd coeffs, double offset);

    double value(double t, const State& x) const override;
    double value_left(double t, const State& x) const override;
    double dh_dt(double, const State&) const override { return 0.0; }
    Eigen::VectorXd grad_x(double, const State&) const override { return coeffs_; }
    bool near_switch(double t, const State& x, double dt_radius, double dx_radius) const override;
    std::optional<AffineForm> affine(double t) const override;
    std::optional<AffineForm> affine_left(double t) const override;

    double offset_at(double t) const;
    double offset_left(double t) const;
    const Eigen::VectorXd& coeffs() const { return coeffs_; }
    const std::vector<double>& switch_times() const { return switch_times_; }

private:
    Eigen::VectorXd coeffs_;
    std::vector<double> switch_times_;
    std::vector<double> offsets_;
};

/// h = +1 everywhere.
class TrueBarrier final : public Barrier {
public:
    explicit TrueBarrier(Eigen::Index state_dim);

    double value(double, const State&) const override { return 1.0; }
    double dh_dt(double, const State&) const override { return 0.0; }
    Eigen::VectorXd grad_x(double, const State&) const override;
    std::optional<AffineForm> affine(double) const override;
    bool vacuous() const override { return true; }
};

/// -h for a wrapped barrier h; realizes the negated predicate.
class NegatedBarrier final : public Barrier {
public:
    explicit NegatedBarrier(BarrierPtr base);

    double value(double t, const State& x) const override { return -base_->value(t, x); }
    double value_left(double t, const State& x) const override {
        return -base_->value_left(t, x);
    }
    double dh_dt(double t, const State& x) const override { return -base_->dh_dt(t, x); }
    Eigen::VectorXd grad_x(double t, const State& x) const override {
        return -base_->grad_x(t, x);
    }
    bool near_switch(double t, const State& x, double dtr, double dxr) const override {
        return base_->near_switch(t, x, dtr, dxr);
    }
    std::optional<AffineForm> affine(double t) const override;
    std::optional<AffineForm> affine_left(double t) const override;

private:
    BarrierPtr base_;
};

/// Extended class-K-infinity function alpha(h) = kappa * h.
class AlphaFn {
public:
    static AlphaFn identity() { return AlphaFn(1.0); }
    static AlphaFn scaled(double kappa);

    double operator()(double h) const { return kappa_ * h; }
    double kappa() const { return kappa_; }

private:
    explicit AlphaFn(double kappa) : kappa_(kappa) {}
    double kappa_;
};

/// Finite-time convergence parameters: 0 <= rho < 1, gamma > 0.
class FcbfParams {
public:
    static FcbfParams make(double rho, double gamma);

    double rho() const { return rho_; }
    double gamma() const { return gamma_; }

private:
    FcbfParams(double rho, double gamma) : rho_(rho), gamma_(gamma) {}
    double rho_;
    double gamma_;
};

inline constexpr double kDefaultGammaMin = 1e-3;

/// a . u <= b.
struct HalfspaceConstraint {
    Eigen::VectorXd a;
    double b = 0.0;
    std::string origin;

    bool satisfied_by(const Input& u, double tol = 0.0) const { return a.dot(u) <= b + tol; }
    /// Zero input coefficients with negative right-hand side.
    bool infeasible_marker() const { return a.isZero(0.0) && b < 0.0; }
};

/// dh/dt + L_f h + L_g h u + alpha(h) >= 0, rewritten as a . u <= b.
HalfspaceConstraint cbf_constraint(const Barrier& bar, const ControlSystem& sys,
                                   const AlphaFn& alpha, double t, const State& x);

/// dh/dt + L_f h + L_g h u + gamma sign(h) |h|^rho >= 0, with sign(0) = 0.
HalfspaceConstraint fcbf_constraint(const Barrier& bar, const ControlSystem& sys,
                                    const FcbfParams& p, double t, const State& x);

/// Time to reach h = 0 from h0 < 0 under the finite-time comparison dynamics;
/// zero when h0 >= 0.
double convergence_time(double h0, const FcbfParams& p);

/// gamma such that convergence_time(h_engage, {rho, gamma}) == t_target.
/// Returns gamma_min when h_engage >= 0.
double gamma_for_deadline(double h_engage, double rho, double t_target,
                          double gamma_min = kDefaultGammaMin);

/// gamma fixed when a convergence obligation engages: gamma_for_deadline when
/// h_engage < 0, otherwise max(gamma_min, |h|^(1-rho) / (t_target (1-rho))).
/// A tiny gamma on an already-safe state would throttle the input for no gain.
double engagement_gamma(double h_engage, double rho, double t_target, double gamma_min = kDefaultGammaMin);

struct FiniteDiffResult {
    double max_rel_error = 0.0;
    /// The query sits on a switch of the piecewise definition (or where h is
    /// not finite); nothing was compared.
    bool non_smooth = false;
};

/// Compares dh_dt and grad_x against central differences of h. Steps are
/// scaled by max(1, |coordinate|); errors are relative to max(1, |analytic|).
FiniteDiffResult finite_diff_check(const Barrier& bar, double t, const State& x, double step);

/// Per-barrier choices that are not part of h itself.
struct ConvergenceSettings {
    double rho = 0.9;
    /// Length of the window [tau, t_i) before a boundary in which the FCBF runs.
    double t_conv = 5.0;
    /// Fixed gamma; when empty it is chosen at engagement from the deadline.
    std::optional<double> gamma;
};

struct BarrierEntry {
    BarrierPtr barrier;
    AlphaFn alpha = AlphaFn::identity();
    ConvergenceSettings convergence;
};

using EntryPtr = std::shared_ptr<const BarrierEntry>;

/// Name -> barrier template instance.
class BarrierRegistry {
public:
    void add(BarrierEntry entry);
    bool contains(const std::string& id) const { return entries_.count(id) != 0; }
    /// Throws std::out_of_range on unknown ids. Negated lookups return an
    /// entry wrapping -h with the same alpha and convergence settings.
    EntryPtr resolve(const std::string& id, bool negated = false) const;
    std::vector<std::string> ids() const;

private:
    std::map<std::string, EntryPtr> entries_;
};

/// Convergence obligation announced by a phased barrier.
struct PendingConvergence {
    std::string key;
    BarrierPtr target;
    /// Nominal engagement instant; the FCBF applies on (engage_time, deadline).
    double engage_time = 0.0;
    double deadline = 0.0;
    double rho = 0.9;
};

struct Phase {
    /// Barrier to keep invariant right now; null when nothing applies.
    BarrierPtr component;
    std::optional<PendingConvergence> pending;
};

/// A barrier stitched from per-region components selected by state and time
/// indicators. It carries its own internal switching schedule.
class PhasedBarrier {
public:
    virtual ~PhasedBarrier() = default;
    virtual Phase phase(double t, const State& x) const = 0;
};

}  // namespace stlcbf
