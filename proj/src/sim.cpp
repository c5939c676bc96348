#include "stlcbf/sim.hpp"

#include "log.hpp"

#include <cmath>
#include <sstream>

namespace stlcbf {

const char* to_string(QpStatus s) {
    switch (s) {
        case QpStatus::Nominal: return "nominal";
        case QpStatus::Modified: return "modified";
        case QpStatus::Infeasible: return "infeasible";
    }
    return "?";
}

const char* to_string(FailureKind k) {
    switch (k) {
        case FailureKind::InitialCondition: return "initial_condition";
        case FailureKind::Infeasible: return "infeasible";
        case FailureKind::DomainExit: return "domain_exit";
        case FailureKind::NonFinite: return "non_finite";
    }
    return "?";
}

std::optional<std::size_t> Trace::channel_index(const std::string& name) const {
    for (std::size_t i = 0; i < channel_names.size(); ++i)
        if (channel_names[i] == name) return i;
    return std::nullopt;
}

std::optional<std::size_t> Trace::state_index(const std::string& name) const {
    for (std::size_t i = 0; i < state_names.size(); ++i)
        if (state_names[i] == name) return i;
    return std::nullopt;
}

StepResult integrate_step(const ControlSystem& sys, double t, const State& x, const Input& u, double dt) {
    if (!(dt > 0.0)) throw InvalidArgument("integration step must be positive");
    auto rate = [&](double s, const State& y) -> State { return sys.drift(s, y) + sys.input_map(s, y) * u; };
    const State k1 = rate(t, x);
    const State k2 = rate(t + 0.5 * dt, x + 0.5 * dt * k1);
    const State k3 = rate(t + 0.5 * dt, x + 0.5 * dt * k2);
    const State k4 = rate(t + dt, x + dt * k3);
    StepResult r;
    r.x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    r.sanitized = sys.sanitize(r.x);
    r.left_domain = !sys.domain().contains(r.x);
    return r;
}

namespace {

std::string describe(const std::vector<HalfspaceConstraint>& cs) {
    std::ostringstream os;
    for (std::size_t i = 0; i < cs.size(); ++i) {
        if (i) os << "; ";
        os << cs[i].origin << ": " << cs[i].a.transpose() << " u <= " << cs[i].b;
    }
    return os.str();
}

}  // namespace

SimResult run_simulation(const ControlSystem& sys, const std::vector<ContractSchedule>& schedules,
                         const NominalController& nominal, const SimConfig& cfg, const State& x0,
                         const TraceAnnotator* annotator) {
    if (!(cfg.dt > 0.0)) throw InvalidArgument("dt must be positive");
    if (!(cfg.horizon >= 0.0)) throw InvalidArgument("horizon must be non-negative");
    if (x0.size() != sys.state_dim()) throw InvalidArgument("initial state has wrong dimension");

    SimResult res;
    Trace& tr = res.trace;
    tr.dt = cfg.dt;
    tr.state_names = sys.state_names();
    if (annotator) tr.channel_names = annotator->names;

    for (const auto& s : schedules) {
        const ContractSegment& first = s.segments.front();
        if (first.vacuous()) continue;
        const double h = first.barrier->value(0.0, x0);
        if (h < -cfg.initial_tolerance) {
            std::ostringstream os;
            os << "initial state violates the assumption of group " << s.label << ": " << first.barrier_id
               << "(0, x0) = " << h;
            res.failure = SimFailure{FailureKind::InitialCondition, 0.0, os.str(), {}};
            return res;
        }
    }

    EngagementLog log;
    const auto steps = static_cast<long long>(std::llround(cfg.horizon / cfg.dt));
    State x = x0;
    for (long long k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * cfg.dt;
        auto constraints = conjoin_groups(schedules, t, x, sys, log);
        const Input u_nom = nominal(t, x, cfg.dt);
        const auto u = solve_qp(u_nom, constraints, cfg.box);

        TraceRow row;
        row.t = t;
        row.x = x;
        row.u_nom = u_nom;
        row.u_safe = u.value_or(Input::Constant(u_nom.size(), std::nan("")));
        row.active_constraints = static_cast<int>(constraints.size());
        row.qp_status = !u ? QpStatus::Infeasible : (*u == u_nom ? QpStatus::Nominal : QpStatus::Modified);
        if (annotator) row.channels = annotator->evaluate(t, x);
        tr.rows.push_back(std::move(row));

        if (!u) {
            std::ostringstream os;
            os << "empty safe input set at t=" << t << " [" << describe(constraints) << "]";
            res.failure = SimFailure{FailureKind::Infeasible, t, os.str(), std::move(constraints)};
            break;
        }
        if (k == steps) break;

        StepResult st = integrate_step(sys, t, x, *u, cfg.dt);
        if (!st.x.allFinite()) {
            res.failure = SimFailure{FailureKind::NonFinite, t + cfg.dt, "state became non-finite", {}};
            break;
        }
        if (st.sanitized) {
            std::ostringstream os;
            os << "t=" << t + cfg.dt << " state clamped into domain";
            tr.events.push_back(os.str());
            detail::log().debug("{}", os.str());
        }
        if (st.left_domain) {
            std::ostringstream os;
            os << "state left the domain at t=" << t + cfg.dt << ": " << st.x.transpose();
            res.failure = SimFailure{FailureKind::DomainExit, t + cfg.dt, os.str(), {}};
            break;
        }
        x = std::move(st.x);
    }
    tr.engagements = log.events();
    return res;
}

}  // namespace stlcbf
