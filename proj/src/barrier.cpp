#include "stlcbf/barrier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stlcbf {

Barrier::Barrier(std::string id, Eigen::Index state_dim) : id_(std::move(id)), state_dim_(state_dim) {
    if (state_dim <= 0) throw InvalidArgument("barrier state dimension must be positive");
}

// ---------------------------------------------------------------------------
// AffineBarrier

AffineBarrier::AffineBarrier(std::string id, Eigen::VectorXd coeffs, std::vector<double> switch_times,
                             std::vector<double> offsets)
    : Barrier(std::move(id), coeffs.size()),
      coeffs_(std::move(coeffs)),
      switch_times_(std::move(switch_times)),
      offsets_(std::move(offsets)) {
    if (offsets_.size() != switch_times_.size() + 1)
        throw InvalidArgument("affine barrier needs one more offset than switch times");
    for (std::size_t k = 1; k < switch_times_.size(); ++k)
        if (!(switch_times_[k] > switch_times_[k - 1]))
            throw InvalidArgument("affine barrier switch times must be strictly increasing");
    if (!coeffs_.allFinite()) throw InvalidArgument("affine barrier coefficients must be finite");
    for (double d : offsets_)
        if (!std::isfinite(d)) throw InvalidArgument("affine barrier offsets must be finite");
}

AffineBarrier::AffineBarrier(std::string id, Eigen::VectorXd coeffs, double offset)
    : AffineBarrier(std::move(id), std::move(coeffs), {}, {offset}) {}

double AffineBarrier::offset_at(double t) const {
    // number of switch times <= t
    auto it = std::upper_bound(switch_times_.begin(), switch_times_.end(), t);
    return offsets_[static_cast<std::size_t>(it - switch_times_.begin())];
}

double AffineBarrier::offset_left(double t) const {
    auto it = std::lower_bound(switch_times_.begin(), switch_times_.end(), t);
    return offsets_[static_cast<std::size_t>(it - switch_times_.begin())];
}

double AffineBarrier::value(double t, const State& x) const { return coeffs_.dot(x) + offset_at(t); }

double AffineBarrier::value_left(double t, const State& x) const {
    return coeffs_.dot(x) + offset_left(t);
}

bool AffineBarrier::near_switch(double t, const State&, double dt_radius, double) const {
    return std::any_of(switch_times_.begin(), switch_times_.end(),
                       [&](double s) { return std::abs(s - t) <= dt_radius; });
}

std::optional<AffineForm> AffineBarrier::affine(double t) const {
    return AffineForm{coeffs_, offset_at(t)};
}

std::optional<AffineForm> AffineBarrier::affine_left(double t) const {
    return AffineForm{coeffs_, offset_left(t)};
}

// ---------------------------------------------------------------------------

TrueBarrier::TrueBarrier(Eigen::Index state_dim) : Barrier("true", state_dim) {}

Eigen::VectorXd TrueBarrier::grad_x(double, const State&) const {
    return Eigen::VectorXd::Zero(state_dim());
}

std::optional<AffineForm> TrueBarrier::affine(double) const {
    return AffineForm{Eigen::VectorXd::Zero(state_dim()), 1.0};
}

NegatedBarrier::NegatedBarrier(BarrierPtr base)
    : Barrier("!" + base->id(), base->state_dim()), base_(std::move(base)) {}

std::optional<AffineForm> NegatedBarrier::affine(double t) const {
    auto f = base_->affine(t);
    if (!f) return std::nullopt;
    return AffineForm{-f->coeffs, -f->offset};
}

std::optional<AffineForm> NegatedBarrier::affine_left(double t) const {
    auto f = base_->affine_left(t);
    if (!f) return std::nullopt;
    return AffineForm{-f->coeffs, -f->offset};
}

// ---------------------------------------------------------------------------

AlphaFn AlphaFn::scaled(double kappa) {
    if (!(kappa > 0.0) || !std::isfinite(kappa)) throw InvalidArgument("alpha gain must be positive");
    return AlphaFn(kappa);
}

FcbfParams FcbfParams::make(double rho, double gamma) {
    if (!(rho >= 0.0 && rho < 1.0)) throw InvalidArgument("FCBF rho must lie in [0, 1)");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgument("FCBF gamma must be positive");
    return FcbfParams(rho, gamma);
}

namespace {

// Shared part of both conditions: a = -(dh/dx g), b0 = dh/dt + dh/dx f.
HalfspaceConstraint lie_terms(const Barrier& bar, const ControlSystem& sys, double t, const State& x) {
    const Eigen::VectorXd grad = bar.grad_x(t, x);
    HalfspaceConstraint c;
    c.a = -(sys.input_map(t, x).transpose() * grad);
    c.b = bar.dh_dt(t, x) + grad.dot(sys.drift(t, x));
    c.origin = bar.id();
    return c;
}

double signed_power(double h, double rho) {
    if (h == 0.0) return 0.0;
    return std::copysign(std::pow(std::abs(h), rho), h);
}

}  // namespace

HalfspaceConstraint cbf_constraint(const Barrier& bar, const ControlSystem& sys, const AlphaFn& alpha,
                                   double t, const State& x) {
    HalfspaceConstraint c = lie_terms(bar, sys, t, x);
    c.b += alpha(bar.value(t, x));
    return c;
}

HalfspaceConstraint fcbf_constraint(const Barrier& bar, const ControlSystem& sys, const FcbfParams& p,
                                    double t, const State& x) {
    HalfspaceConstraint c = lie_terms(bar, sys, t, x);
    c.b += p.gamma() * signed_power(bar.value(t, x), p.rho());
    c.origin = bar.id() + "/fcbf";
    return c;
}

double convergence_time(double h0, const FcbfParams& p) {
    if (h0 >= 0.0) return 0.0;
    return std::pow(std::abs(h0), 1.0 - p.rho()) / (p.gamma() * (1.0 - p.rho()));
}

double gamma_for_deadline(double h_engage, double rho, double t_target, double gamma_min) {
    if (!(t_target > 0.0)) throw InvalidArgument("convergence deadline must be positive");
    if (!(rho >= 0.0 && rho < 1.0)) throw InvalidArgument("FCBF rho must lie in [0, 1)");
    if (h_engage >= 0.0) return gamma_min;
    return std::pow(std::abs(h_engage), 1.0 - rho) / (t_target * (1.0 - rho));
}

double engagement_gamma(double h_engage, double rho, double t_target, double gamma_min) {
    if (h_engage < 0.0) return gamma_for_deadline(h_engage, rho, t_target, gamma_min);
    if (!(t_target > 0.0)) throw InvalidArgument("convergence deadline must be positive");
    if (!(rho >= 0.0 && rho < 1.0)) throw InvalidArgument("FCBF rho must lie in [0, 1)");
    return std::max(gamma_min, std::pow(h_engage, 1.0 - rho) / (t_target * (1.0 - rho)));
}

FiniteDiffResult finite_diff_check(const Barrier& bar, double t, const State& x, double step) {
    if (!(step > 0.0)) throw InvalidArgument("finite-difference step must be positive");
    FiniteDiffResult out;
    const double dt = step * std::max(1.0, std::abs(t));
    double dx_max = 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) dx_max = std::max(dx_max, step * std::max(1.0, std::abs(x[j])));
    // a vacuous +inf region has nothing to differentiate either
    if (bar.near_switch(t, x, 2.0 * dt, 2.0 * dx_max) || !std::isfinite(bar.value(t, x))) {
        out.non_smooth = true;
        return out;
    }

    auto rel = [](double analytic, double numeric) {
        return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
    };

    const double t_lo = std::max(0.0, t - dt);
    const double fd_t = (bar.value(t + dt, x) - bar.value(t_lo, x)) / (t + dt - t_lo);
    out.max_rel_error = rel(bar.dh_dt(t, x), fd_t);

    const Eigen::VectorXd grad = bar.grad_x(t, x);
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = step * std::max(1.0, std::abs(x[j]));
        State xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const double fd = (bar.value(t, xp) - bar.value(t, xm)) / (2.0 * h);
        out.max_rel_error = std::max(out.max_rel_error, rel(grad[j], fd));
    }
    return out;
}

// ---------------------------------------------------------------------------

void BarrierRegistry::add(BarrierEntry entry) {
    if (!entry.barrier) throw InvalidArgument("registry entry without barrier");
    const std::string id = entry.barrier->id();
    if (entries_.count(id)) throw InvalidArgument("duplicate barrier id '" + id + "'");
    entries_.emplace(id, std::make_shared<const BarrierEntry>(std::move(entry)));
}

EntryPtr BarrierRegistry::resolve(const std::string& id, bool negated) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw std::out_of_range("unknown barrier id '" + id + "'");
    if (!negated) return it->second;
    BarrierEntry neg = *it->second;
    neg.barrier = std::make_shared<NegatedBarrier>(it->second->barrier);
    return std::make_shared<const BarrierEntry>(std::move(neg));
}

std::vector<std::string> BarrierRegistry::ids() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

}  // namespace stlcbf
