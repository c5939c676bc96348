#include "stlcbf/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace stlcbf::vehicle {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double signed_power(double h, double rho) {
    if (h == 0.0) return 0.0;
    return (h > 0.0 ? 1.0 : -1.0) * std::pow(std::abs(h), rho);
}

// Uniform draw on [lo, hi) from the top 53 bits; identical on every platform,
// unlike std::uniform_real_distribution.
double draw(std::mt19937_64& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

}  // namespace

std::vector<std::string> VehicleParams::violations() const {
    std::vector<std::string> out;
    auto positive = [&](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) out.push_back(std::string(name) + " must be positive");
    };
    auto non_negative = [&](double v, const char* name) {
        if (!(v >= 0.0) || !std::isfinite(v)) out.push_back(std::string(name) + " must be non-negative");
    };
    positive(mass, "mass");
    non_negative(c0, "c0");
    non_negative(c1, "c1");
    non_negative(c2, "c2");
    positive(time_headway, "time_headway");
    non_negative(standstill_gap, "standstill_gap");
    positive(a_max, "a_max");
    positive(beta, "beta");
    positive(g_grav, "g");
    if (a_max > g_grav) out.push_back("a_max must not exceed g");
    return out;
}

double friction_force(double v_f, const VehicleParams& p) { return p.c0 + p.c1 * v_f + p.c2 * v_f * v_f; }

// ---------------------------------------------------------------- lead

LeadProfile::LeadProfile(double x0, double v0, std::vector<std::pair<double, double>> steps) : x0_(x0) {
    if (!std::isfinite(x0) || !(v0 >= 0.0)) throw InvalidArgument("lead: initial speed must be non-negative");
    for (std::size_t i = 1; i < steps.size(); ++i)
        if (!(steps[i].first > steps[i - 1].first)) throw InvalidArgument("lead: step times must increase");
    if (!steps.empty() && steps.front().first < 0.0) throw InvalidArgument("lead: step times must be >= 0");

    pieces_.push_back({0.0, v0, 0.0});
    for (const auto& [ts, a] : steps) {
        if (!std::isfinite(a)) throw InvalidArgument("lead: acceleration must be finite");
        Piece& last = pieces_.back();
        const double v_at = std::max(0.0, last.v_start + last.accel * (ts - last.start));
        if (ts == 0.0) {
            last.accel = a;
        } else {
            pieces_.push_back({ts, v_at, a});
        }
        switches_.push_back(ts);
    }
}

const LeadProfile::Piece& LeadProfile::piece(double t) const {
    auto it = std::upper_bound(pieces_.begin(), pieces_.end(), t,
                               [](double v, const Piece& p) { return v < p.start; });
    return it == pieces_.begin() ? pieces_.front() : *(it - 1);
}

double LeadProfile::velocity(double t) const {
    const Piece& p = piece(t);
    return std::max(0.0, p.v_start + p.accel * (t - p.start));
}

double LeadProfile::acceleration(double t) const {
    const Piece& p = piece(t);
    // a stopped lead stays stopped
    if (p.accel < 0.0 && p.v_start + p.accel * (t - p.start) <= 0.0) return 0.0;
    return p.accel;
}

// ---------------------------------------------------------------- speed limits

SpeedLimitSchedule SpeedLimitSchedule::make(std::vector<std::pair<TimeInterval, double>> pieces) {
    if (pieces.empty()) throw InvalidArgument("speed limits: at least one interval required");
    std::stable_sort(pieces.begin(), pieces.end(),
                     [](const auto& a, const auto& b) { return a.first.start < b.first.start; });
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        if (!(pieces[i].second > 0.0) || !std::isfinite(pieces[i].second))
            throw InvalidArgument("speed limits: values must be positive");
        if (i > 0 && pieces[i].first.start < pieces[i - 1].first.end)
            throw InvalidArgument("speed limits: overlapping intervals");
    }
    SpeedLimitSchedule s;
    s.pieces_ = std::move(pieces);
    return s;
}

SpeedLimitSchedule SpeedLimitSchedule::periodic(double period, const std::vector<double>& values, double horizon) {
    if (!(period > 0.0) || values.empty() || !(horizon > 0.0))
        throw InvalidArgument("speed limits: period, values and horizon required");
    std::vector<std::pair<TimeInterval, double>> pieces;
    for (std::size_t k = 0; k * period < horizon; ++k) {
        const double a = static_cast<double>(k) * period;
        pieces.emplace_back(TimeInterval::make(a, std::min(a + period, horizon)), values[k % values.size()]);
    }
    return make(std::move(pieces));
}

double SpeedLimitSchedule::value(double t) const {
    // gaps keep the previous value
    double v = pieces_.front().second;
    for (const auto& [iv, val] : pieces_) {
        if (iv.start > t) break;
        v = val;
    }
    return v;
}

std::shared_ptr<AffineBarrier> speed_limit_barrier(std::string id, const SpeedLimitSchedule& limits) {
    Eigen::Vector3d c(0.0, -1.0, 0.0);
    std::vector<double> switches;
    std::vector<double> offsets{limits.pieces().front().second};
    for (std::size_t i = 1; i < limits.pieces().size(); ++i) {
        const auto& [iv, val] = limits.pieces()[i];
        if (val == offsets.back()) continue;
        switches.push_back(iv.start);
        offsets.push_back(val);
    }
    return std::make_shared<AffineBarrier>(std::move(id), c, std::move(switches), std::move(offsets));
}

std::shared_ptr<AffineBarrier> speed_limit_barrier(std::string id, double v_max) {
    return std::make_shared<AffineBarrier>(std::move(id), Eigen::Vector3d(0.0, -1.0, 0.0), v_max);
}

// ---------------------------------------------------------------- signals

const char* to_string(SignalPhase p) {
    switch (p) {
        case SignalPhase::None: return "none";
        case SignalPhase::Green: return "green";
        case SignalPhase::Yellow: return "yellow";
        case SignalPhase::Red: return "red";
    }
    return "?";
}

SignalSchedule SignalSchedule::make(std::vector<TrafficSignal> signals) {
    for (std::size_t i = 0; i < signals.size(); ++i) {
        const TrafficSignal& s = signals[i];
        const std::string tag = "signal " + std::to_string(i + 1) + ": ";
        if (!std::isfinite(s.position)) throw InvalidArgument(tag + "position must be finite");
        if (i > 0 && !(s.position > signals[i - 1].position))
            throw InvalidArgument(tag + "positions must be strictly increasing");
        if (s.cycles.empty()) throw InvalidArgument(tag + "no cycles");
        if (s.cycles.front().green > 0.0) throw InvalidArgument(tag + "first green must be at or before t = 0");
        for (std::size_t j = 0; j < s.cycles.size(); ++j) {
            const SignalCycle& c = s.cycles[j];
            if (!(c.green < c.yellow && c.yellow < c.red))
                throw InvalidArgument(tag + "cycle needs green < yellow < red");
            if (j > 0 && !(c.green > s.cycles[j - 1].red))
                throw InvalidArgument(tag + "cycles must not overlap");
        }
    }
    SignalSchedule out;
    out.signals_ = std::move(signals);
    return out;
}

TrafficSignal SignalSchedule::periodic(double position, double offset, double green, double yellow, double red,
                                       double horizon) {
    if (!(green > 0.0 && yellow > 0.0 && red > 0.0)) throw InvalidArgument("signal phase durations must be positive");
    const double cycle = green + yellow + red;
    double g = offset - cycle * std::ceil(offset / cycle);
    TrafficSignal s;
    s.position = position;
    for (; g <= horizon + cycle; g += cycle) s.cycles.push_back({g, g + green, g + green + yellow});
    return s;
}

SignalSchedule SignalSchedule::generate(std::uint64_t seed, const SignalGeneratorSettings& st, double horizon) {
    if (st.count < 0) throw InvalidArgument("signal count must be non-negative");
    std::mt19937_64 rng(seed);
    std::vector<TrafficSignal> signals;
    double pos = 0.0;
    for (int i = 0; i < st.count; ++i) {
        pos += i == 0 ? draw(rng, st.first_min, st.first_max) : draw(rng, st.spacing_min, st.spacing_max);
        const double green = draw(rng, st.green_min, st.green_max);
        const double yellow = draw(rng, st.yellow_min, st.yellow_max);
        const double red = draw(rng, st.red_min, st.red_max);
        const double offset = draw(rng, 0.0, green + yellow + red);
        signals.push_back(periodic(pos, offset, green, yellow, red, horizon));
    }
    return make(std::move(signals));
}

PhaseAt SignalSchedule::phase(std::size_t i, double t) const {
    const auto& cycles = signals_.at(i).cycles;
    auto it = std::upper_bound(cycles.begin(), cycles.end(), t,
                               [](double v, const SignalCycle& c) { return v < c.green; });
    if (it == cycles.begin()) return {};
    const SignalCycle& c = *(it - 1);
    const int j = static_cast<int>(it - cycles.begin()) - 1;
    if (t < c.yellow) return {SignalPhase::Green, j};
    if (t < c.red) return {SignalPhase::Yellow, j};
    return {SignalPhase::Red, j};
}

std::optional<std::size_t> SignalSchedule::active_index(double x_f) const {
    auto it = std::lower_bound(signals_.begin(), signals_.end(), x_f,
                               [](const TrafficSignal& s, double v) { return s.position < v; });
    if (it == signals_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - signals_.begin());
}

// ---------------------------------------------------------------- system

VehicleSystem::VehicleSystem(VehicleParams params, std::shared_ptr<const LeadProfile> lead, Box domain)
    : params_(params), lead_(std::move(lead)), domain_(std::move(domain)) {
    if (auto v = params_.violations(); !v.empty()) throw InvalidArgument("vehicle: " + v.front());
    if (!lead_) throw InvalidArgument("vehicle: lead profile required");
    if (domain_.lower.size() != 3 || domain_.upper.size() != 3) throw InvalidArgument("vehicle: domain must be 3-D");
}

State VehicleSystem::drift(double t, const State& x) const {
    State f(3);
    f << x[kVf], -friction_force(x[kVf], params_) / params_.mass, lead_->velocity(t);
    return f;
}

Eigen::MatrixXd VehicleSystem::input_map(double, const State&) const {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(3, 1);
    g(kVf, 0) = 1.0 / params_.mass;
    return g;
}

bool VehicleSystem::sanitize(State& x) const {
    if (x[kVf] < 0.0) {
        x[kVf] = 0.0;
        return true;
    }
    return false;
}

// ---------------------------------------------------------------- spacing

SpacingBarrier::SpacingBarrier(std::string id, VehicleParams params, std::shared_ptr<const LeadProfile> lead)
    : Barrier(std::move(id), 3), params_(params), lead_(std::move(lead)) {
    if (!lead_) throw InvalidArgument("spacing barrier: lead profile required");
}

double SpacingBarrier::value(double t, const State& x) const {
    const double vl = lead_->velocity(t);
    const double vf = x[kVf];
    return x[kXl] - x[kXf] - params_.time_headway * vf - params_.standstill_gap -
           (vf * vf - vl * vl) / (2.0 * params_.a_max);
}

double SpacingBarrier::dh_dt(double t, const State&) const {
    return lead_->velocity(t) * lead_->acceleration(t) / params_.a_max;
}

Eigen::VectorXd SpacingBarrier::grad_x(double, const State& x) const {
    return Eigen::Vector3d(-1.0, -params_.time_headway - x[kVf] / params_.a_max, 1.0);
}

bool SpacingBarrier::near_switch(double t, const State&, double dt_radius, double) const {
    for (double s : lead_->switch_times())
        if (std::abs(s - t) <= dt_radius) return true;
    return false;
}

// ---------------------------------------------------------------- signal barrier

SignalBarrier::SignalBarrier(std::string id, std::shared_ptr<const SignalSchedule> schedule, VehicleParams params,
                             double rho)
    : Barrier(std::move(id), 3), schedule_(std::move(schedule)), params_(params), rho_(rho) {
    if (!schedule_) throw InvalidArgument("signal barrier: schedule required");
    if (!(rho >= 0.0 && rho < 1.0)) throw InvalidArgument("signal barrier: rho must lie in [0, 1)");
    const Eigen::Vector3d c(-1.0, -params_.beta, 0.0);
    const std::size_t n = schedule_->size();
    for (std::size_t k = 0; k < n; ++k) {
        const double pk = schedule_->signal(k).position;
        red_.push_back(std::make_shared<AffineBarrier>("h_r" + std::to_string(k + 1), c,
                                                       pk - params_.standstill_gap));
        if (k + 1 < n) {
            const double pn = schedule_->signal(k + 1).position;
            clear_.push_back(std::make_shared<AffineBarrier>("h_rbar" + std::to_string(k + 1), c,
                                                             pn - params_.standstill_gap));
        } else {
            clear_.push_back(std::make_shared<TrueBarrier>(3));
        }
    }
}

BarrierPtr SignalBarrier::selected(std::size_t k, SignalPhase ph) const {
    return ph == SignalPhase::Red ? red_[k] : clear_[k];
}

double SignalBarrier::value(double t, const State& x) const {
    const auto k = schedule_->active_index(x[kXf]);
    if (!k) return kInf;
    const BarrierPtr b = selected(*k, schedule_->phase(*k, t).phase);
    return b->vacuous() ? kInf : b->value(t, x);
}

double SignalBarrier::value_left(double t, const State& x) const {
    return value(std::nextafter(t, -kInf), x);
}

Eigen::VectorXd SignalBarrier::grad_x(double t, const State& x) const {
    const auto k = schedule_->active_index(x[kXf]);
    if (!k) return Eigen::Vector3d::Zero();
    return selected(*k, schedule_->phase(*k, t).phase)->grad_x(t, x);
}

bool SignalBarrier::near_switch(double t, const State& x, double dt_radius, double dx_radius) const {
    for (const auto& s : schedule_->signals()) {
        if (std::abs(s.position - x[kXf]) <= dx_radius) return true;
    }
    const auto k = schedule_->active_index(x[kXf]);
    if (!k) return false;
    for (const auto& c : schedule_->signal(*k).cycles) {
        for (double s : {c.green, c.yellow, c.red})
            if (std::abs(s - t) <= dt_radius) return true;
    }
    return false;
}

Phase SignalBarrier::phase(double t, const State& x) const {
    const auto k = schedule_->active_index(x[kXf]);
    if (!k) return {};
    const PhaseAt pa = schedule_->phase(*k, t);
    Phase out;
    out.component = selected(*k, pa.phase);
    if (pa.phase == SignalPhase::Yellow) {
        const SignalCycle& c = schedule_->signal(*k).cycles[static_cast<std::size_t>(pa.cycle)];
        out.pending = PendingConvergence{"s" + std::to_string(*k + 1) + "c" + std::to_string(pa.cycle), red_[*k],
                                         c.yellow, c.red, rho_};
    }
    return out;
}

// ---------------------------------------------------------------- closed-form bounds

BoundKind bound_kind_from_string(const std::string& name) {
    if (name == "h1") return BoundKind::H1;
    if (name == "rbar") return BoundKind::RBar;
    if (name == "r_fcbf") return BoundKind::RFcbf;
    if (name == "v") return BoundKind::V;
    if (name == "v_fcbf") return BoundKind::VFcbf;
    throw InvalidArgument("unknown bound kind '" + name + "'");
}

const char* to_string(BoundKind k) {
    switch (k) {
        case BoundKind::H1: return "h1";
        case BoundKind::RBar: return "rbar";
        case BoundKind::RFcbf: return "r_fcbf";
        case BoundKind::V: return "v";
        case BoundKind::VFcbf: return "v_fcbf";
    }
    return "?";
}

namespace {

double signal_h(const BoundQuery& q, const VehicleParams& p) {
    return q.position - q.x[kXf] - p.beta * q.x[kVf] - p.standstill_gap;
}

}  // namespace

double closed_form_bound(BoundKind kind, const BoundQuery& q, const VehicleParams& p) {
    const double vf = q.x[kVf];
    const double fr = friction_force(vf, p);
    const double m = p.mass;
    switch (kind) {
        case BoundKind::H1: {
            const double a = p.a_max;
            const double h1 = q.x[kXl] - q.x[kXf] - p.time_headway * vf - p.standstill_gap -
                              (vf * vf - q.v_lead * q.v_lead) / (2.0 * a);
            const double vr = q.v_lead - vf;
            return m * a / (p.time_headway * a + vf) * (h1 + vr + q.v_lead * q.a_lead / a) + fr;
        }
        case BoundKind::RBar: return m / p.beta * (signal_h(q, p) - vf) + fr;
        case BoundKind::RFcbf: return m / p.beta * (q.gamma * signed_power(signal_h(q, p), q.rho) - vf) + fr;
        case BoundKind::V: return m / p.beta * (q.v_max - vf) + fr;
        case BoundKind::VFcbf: return m * q.gamma * signed_power(q.v_max - vf, q.rho) + fr;
    }
    throw InvalidArgument("unknown bound kind");
}

double alternative_bound(BoundKind kind, const BoundQuery& q, const VehicleParams& p) {
    const double vf = q.x[kVf];
    const double fr = friction_force(vf, p);
    const double m = p.mass;
    switch (kind) {
        case BoundKind::RFcbf: return m / p.beta * q.gamma * signed_power(signal_h(q, p), q.rho) + fr;
        case BoundKind::VFcbf: return m / p.beta * q.gamma * signed_power(q.v_max - vf, q.rho) + fr;
        default: return closed_form_bound(kind, q, p);
    }
}

double red_phase_gamma(double h_r_at_engage, double rho, double yellow_duration, double gamma_min) {
    return gamma_for_deadline(h_r_at_engage, rho, yellow_duration, gamma_min);
}

// ---------------------------------------------------------------- trace helpers

std::vector<RedCrossing> red_crossings(const Trace& trace, const SignalSchedule& signals) {
    std::vector<RedCrossing> out;
    const auto col = trace.state_index("X_f");
    if (!col) throw InvalidArgument("trace has no X_f column");
    const auto ix = static_cast<Eigen::Index>(*col);
    for (std::size_t r = 1; r < trace.rows.size(); ++r) {
        const double x0 = trace.rows[r - 1].x[ix];
        const double x1 = trace.rows[r].x[ix];
        const double t0 = trace.rows[r - 1].t;
        const double t1 = trace.rows[r].t;
        for (std::size_t i = 0; i < signals.size(); ++i) {
            const double p = signals.signal(i).position;
            if (!(x0 < p && p <= x1)) continue;
            const double tc = x1 > x0 ? t0 + (t1 - t0) * (p - x0) / (x1 - x0) : t1;
            if (signals.phase(i, tc).phase == SignalPhase::Red) out.push_back({i, tc});
        }
    }
    return out;
}

TraceAnnotator make_annotator(std::shared_ptr<const LeadProfile> lead, std::shared_ptr<const Barrier> h1,
                              std::shared_ptr<const Barrier> h_v, std::shared_ptr<const SignalBarrier> h_pos,
                              std::shared_ptr<const SpeedLimitSchedule> limits) {
    TraceAnnotator a;
    a.names = {"V_l", "V_max", "h1", "h_v", "h_pos", "active_signal", "signal_phase"};
    a.evaluate = [lead, h1, h_v, h_pos, limits](double t, const State& x) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        double active = 0.0, phase = 0.0;
        if (h_pos) {
            if (auto k = h_pos->schedule().active_index(x[kXf])) {
                active = static_cast<double>(*k + 1);
                phase = static_cast<double>(h_pos->schedule().phase(*k, t).phase);
            }
        }
        return std::vector<double>{lead ? lead->velocity(t) : nan,
                                   limits ? limits->value(t) : nan,
                                   h1 ? h1->value(t, x) : nan,
                                   h_v ? h_v->value(t, x) : nan,
                                   h_pos ? h_pos->value(t, x) : nan,
                                   active,
                                   phase};
    };
    return a;
}

}  // namespace stlcbf::vehicle
