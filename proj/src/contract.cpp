#include "stlcbf/contract.hpp"

#include "stlcbf/small_lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace stlcbf {

const char* to_string(CheckMethod m) { return m == CheckMethod::Exact ? "exact" : "sampled"; }

const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::Subset: return "subset";
        case Verdict::OverlapWithDeadline: return "overlap_with_deadline";
        case Verdict::Incompatible: return "incompatible";
    }
    return "?";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_domain(const Box& domain, const Barrier& a, const Barrier& b) {
    if (domain.degenerate()) throw InvalidArgument("degenerate state domain (zero-width box)");
    if (domain.dim() != a.state_dim() || domain.dim() != b.state_dim())
        throw InvalidArgument("domain dimension does not match barrier dimension");
}

// Visits every point of a grid with `points` samples per dimension over the box.
template <class F>
void for_each_grid_point(const Box& box, int points, F&& visit) {
    const Eigen::Index n = box.dim();
    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    State x(n);
    while (true) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double frac = points > 1 ? static_cast<double>(idx[static_cast<std::size_t>(j)]) / (points - 1) : 0.5;
            x[j] = box.lower[j] + frac * (box.upper[j] - box.lower[j]);
        }
        visit(x);
        Eigen::Index j = 0;
        while (j < n && ++idx[static_cast<std::size_t>(j)] == points) {
            idx[static_cast<std::size_t>(j)] = 0;
            ++j;
        }
        if (j == n) return;
    }
}

// Box rows: x_j <= u_j and -x_j <= -l_j, placed after `extra` leading rows,
// over `vars` variables of which the first n are the state.
void box_rows(const Box& box, Eigen::Index first_row, Eigen::MatrixXd& a, Eigen::VectorXd& b) {
    const Eigen::Index n = box.dim();
    for (Eigen::Index j = 0; j < n; ++j) {
        a(first_row + 2 * j, j) = 1.0;
        b[first_row + 2 * j] = box.upper[j];
        a(first_row + 2 * j + 1, j) = -1.0;
        b[first_row + 2 * j + 1] = -box.lower[j];
    }
}

}  // namespace

SubsetResult check_subset(const Barrier& prev, const Barrier& next, double t, const Box& domain, int grid_points) {
    require_domain(domain, prev, next);
    SubsetResult res;
    const auto fp = prev.affine_left(t);
    const auto fn = next.affine(t);
    if (fp && fn) {
        res.method = CheckMethod::Exact;
        const Eigen::Index n = domain.dim();
        // min fn(x)  s.t.  fp(x) >= 0, x in box
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(1 + 2 * n, n);
        Eigen::VectorXd b(1 + 2 * n);
        a.row(0) = -fp->coeffs.transpose();
        b[0] = fp->offset;
        box_rows(domain, 1, a, b);
        auto sol = maximize_by_vertices(-fn->coeffs, a, b);
        if (!sol) {
            res.subset = true;
            res.worst_margin = kInf;
            return res;
        }
        res.worst_margin = (*fn)(sol->x);
        res.subset = res.worst_margin >= -kSetTolerance;
        if (!res.subset) res.counterexample = sol->x;
        return res;
    }

    res.method = CheckMethod::Sampled;
    res.resolution = grid_points;
    res.worst_margin = kInf;
    for_each_grid_point(domain, grid_points, [&](const State& x) {
        if (prev.value_left(t, x) < 0.0) return;
        const double m = next.value(t, x);
        if (m < res.worst_margin) {
            res.worst_margin = m;
            if (m < -kSetTolerance) res.counterexample = x;
        }
    });
    res.subset = res.worst_margin >= -kSetTolerance;
    return res;
}

IntersectionResult check_intersection(const Barrier& prev, const Barrier& next, double t, const Box& domain,
                                      int grid_points) {
    require_domain(domain, prev, next);
    IntersectionResult res;
    const auto fp = prev.affine_left(t);
    const auto fn = next.affine(t);
    if (fp && fn) {
        res.method = CheckMethod::Exact;
        const Eigen::Index n = domain.dim();
        // max s  s.t.  s <= fp(x), s <= fn(x), x in box  (variables: x, s)
        const Eigen::Index rows = 3 + 2 * n;
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, n + 1);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
        a.block(0, 0, 1, n) = -fp->coeffs.transpose();
        a(0, n) = 1.0;
        b[0] = fp->offset;
        a.block(1, 0, 1, n) = -fn->coeffs.transpose();
        a(1, n) = 1.0;
        b[1] = fn->offset;
        // s bounded below so that every basis is a proper vertex
        double span = 1.0 + std::abs(fp->offset) + std::abs(fn->offset);
        for (Eigen::Index j = 0; j < n; ++j)
            span += (std::abs(fp->coeffs[j]) + std::abs(fn->coeffs[j])) *
                    std::max(std::abs(domain.lower[j]), std::abs(domain.upper[j]));
        a(2, n) = -1.0;
        b[2] = 2.0 * span;
        Eigen::MatrixXd abox = Eigen::MatrixXd::Zero(2 * n, n);
        Eigen::VectorXd bbox(2 * n);
        box_rows(domain, 0, abox, bbox);
        a.block(3, 0, 2 * n, n) = abox;
        b.segment(3, 2 * n) = bbox;

        Eigen::VectorXd c = Eigen::VectorXd::Zero(n + 1);
        c[n] = 1.0;
        auto sol = maximize_by_vertices(c, a, b);
        if (sol && sol->value >= -kSetTolerance) res.witness = State(sol->x.head(n));
        return res;
    }

    res.method = CheckMethod::Sampled;
    res.resolution = grid_points;
    double best = -kInf;
    for_each_grid_point(domain, grid_points, [&](const State& x) {
        const double m = std::min(prev.value_left(t, x), next.value(t, x));
        if (m > best) {
            best = m;
            if (m >= 0.0) res.witness = x;
        }
    });
    return res;
}

bool CompatibilityReport::compatible() const { return first_failure() == nullptr; }

const BoundaryReport* CompatibilityReport::first_failure() const {
    for (const auto& b : boundaries)
        if (b.verdict == Verdict::Incompatible) return &b;
    return nullptr;
}

std::size_t ContractSchedule::segment_at(double t) const {
    if (t < span.start || t > span.end)
        throw std::out_of_range("t=" + std::to_string(t) + " outside schedule '" + label + "'");
    for (std::size_t k = 0; k < segments.size(); ++k)
        if (t < segments[k].interval.end) return k;
    return segments.size() - 1;
}

BuildResult build_schedule(const TaskGroup& group, const ScheduleConfig& cfg) {
    BuildResult out;
    ContractSchedule& s = out.schedule;
    s.label = group.label;
    s.step_margin = cfg.step_margin;
    s.gamma_min = cfg.gamma_min;
    out.report.group = group.label;

    const Eigen::Index n = cfg.domain.dim();
    auto top = std::make_shared<const TrueBarrier>(n);
    std::vector<ConvergenceSettings> conv;

    auto push_true = [&](double a, double b) {
        s.segments.push_back(ContractSegment{"true", top, TimeInterval{a, b}, Invariance{}, a});
        conv.emplace_back();
    };

    double cursor = 0.0;
    for (const auto& [iv, pred] : group.predicates) {
        if (iv.start < cursor) throw InvalidArgument("group '" + group.label + "' has overlapping intervals");
        if (iv.start > cursor) push_true(cursor, iv.start);
        s.segments.push_back(
            ContractSegment{pred.label(), pred.entry->barrier, iv, Invariance{pred.entry->alpha}, iv.start});
        conv.push_back(pred.entry->convergence);
        cursor = iv.end;
    }
    const double end = std::max(cfg.horizon, cursor);
    if (cursor < end || s.segments.empty()) push_true(cursor, std::max(end, cursor));
    s.span = TimeInterval{0.0, s.segments.back().interval.end};

    for (std::size_t k = 0; k + 1 < s.segments.size(); ++k) {
        const ContractSegment& prev = s.segments[k];
        const ContractSegment& next = s.segments[k + 1];
        BoundaryReport br;
        br.time = prev.interval.end;
        br.prev_id = prev.barrier_id;
        br.next_id = next.barrier_id;

        if (next.vacuous()) {
            br.verdict = Verdict::Subset;
            s.verdicts.push_back(br.verdict);
            s.convergence.emplace_back();
            out.report.boundaries.push_back(std::move(br));
            continue;
        }

        const SubsetResult sub = check_subset(*prev.barrier, *next.barrier, br.time, cfg.domain, cfg.grid_points);
        const IntersectionResult inter =
            check_intersection(*prev.barrier, *next.barrier, br.time, cfg.domain, cfg.grid_points);
        br.method = sub.method == CheckMethod::Sampled || inter.method == CheckMethod::Sampled
                        ? CheckMethod::Sampled
                        : CheckMethod::Exact;
        br.resolution = std::max(sub.resolution, inter.resolution);
        br.witness = inter.witness;

        std::optional<ContractSegment> fcbf;
        if (sub.subset) {
            br.verdict = Verdict::Subset;
        } else if (!inter.witness) {
            br.verdict = Verdict::Incompatible;
            br.reason = "empty intersection of consecutive safe sets";
        } else {
            const ConvergenceSettings& c = conv[k + 1];
            br.window = c.t_conv;
            br.engage_time = br.time - c.t_conv;
            std::ostringstream why;
            if (!(c.t_conv > cfg.step_margin) || !(br.engage_time > prev.interval.start)) {
                br.verdict = Verdict::Incompatible;
                why << "deadline violated: no convergence window (t_conv=" << c.t_conv << " must exceed "
                    << cfg.step_margin << " and fit after t=" << prev.interval.start << ")";
                br.reason = why.str();
            } else {
                const SubsetResult engage =
                    check_subset(*prev.barrier, *next.barrier, br.engage_time, cfg.domain, cfg.grid_points);
                br.worst_engage_margin = engage.worst_margin;
                const double h0 = std::isfinite(engage.worst_margin) ? engage.worst_margin : 0.0;
                const double gamma =
                    c.gamma.value_or(gamma_for_deadline(h0, c.rho, c.t_conv - cfg.step_margin, cfg.gamma_min));
                br.bound = convergence_time(h0, FcbfParams::make(c.rho, gamma));
                if (br.engage_time + br.bound < br.time) {
                    br.verdict = Verdict::OverlapWithDeadline;
                    fcbf = ContractSegment{next.barrier_id, next.barrier, TimeInterval{br.engage_time, br.time},
                                           FiniteTime{c.rho, c.t_conv, c.gamma}, br.engage_time};
                } else {
                    br.verdict = Verdict::Incompatible;
                    why << "deadline violated: convergence bound " << br.bound << " s from engagement at t="
                        << br.engage_time << " does not finish before t=" << br.time;
                    br.reason = why.str();
                }
            }
        }
        s.verdicts.push_back(br.verdict);
        s.convergence.push_back(std::move(fcbf));
        out.report.boundaries.push_back(std::move(br));
    }
    return out;
}

const EngagementEvent* EngagementLog::find(const std::string& key) const {
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : &events_[it->second];
}

const EngagementEvent& EngagementLog::record(EngagementEvent ev) {
    const std::string key = ev.key;
    events_.push_back(std::move(ev));
    index_[key] = events_.size() - 1;
    return events_.back();
}

namespace {

HalfspaceConstraint engaged_fcbf(const std::string& key, const Barrier& target, double rho,
                                 std::optional<double> fixed_gamma, double deadline, double t, const State& x,
                                 const ControlSystem& sys, EngagementLog& log, double margin, double gamma_min) {
    const EngagementEvent* ev = log.find(key);
    if (!ev) {
        const double h = target.value(t, x);
        double window = deadline - t - margin;
        if (!(window > 0.0)) window = 0.5 * (deadline - t);
        const double gamma = fixed_gamma.value_or(engagement_gamma(h, rho, window, gamma_min));
        const FcbfParams p = FcbfParams::make(rho, gamma);
        ev = &log.record(EngagementEvent{key, t, h, rho, gamma, deadline, convergence_time(h, p)});
    }
    return fcbf_constraint(target, sys, FcbfParams::make(ev->rho, ev->gamma), t, x);
}

}  // namespace

std::vector<HalfspaceConstraint> active_constraints(const ContractSchedule& schedule, double t, const State& x,
                                                   const ControlSystem& sys, EngagementLog& log) {
    const std::size_t k = schedule.segment_at(t);
    const ContractSegment& seg = schedule.segments[k];
    std::vector<HalfspaceConstraint> out;

    if (!seg.vacuous()) {
        const AlphaFn& alpha = std::get<Invariance>(seg.kind).alpha;
        if (const PhasedBarrier* ph = seg.barrier->phased()) {
            const Phase p = ph->phase(t, x);
            if (p.component && !p.component->vacuous()) {
                out.push_back(cbf_constraint(*p.component, sys, alpha, t, x));
                out.back().origin = seg.barrier_id + "/" + p.component->id();
            }
            if (p.pending && p.pending->engage_time < t && t < p.pending->deadline) {
                const PendingConvergence& pc = *p.pending;
                out.push_back(engaged_fcbf(schedule.label + ":" + seg.barrier_id + ":" + pc.key, *pc.target, pc.rho,
                                           std::nullopt, pc.deadline, t, x, sys, log, schedule.step_margin,
                                           schedule.gamma_min));
                out.back().origin = seg.barrier_id + "/" + pc.target->id() + "/fcbf";
            }
        } else {
            out.push_back(cbf_constraint(*seg.barrier, sys, alpha, t, x));
            out.back().origin = seg.barrier_id;
        }
    }

    if (k < schedule.convergence.size() && schedule.convergence[k]) {
        const ContractSegment& fc = *schedule.convergence[k];
        if (fc.interval.start < t && t < fc.interval.end) {
            const FiniteTime& ft = std::get<FiniteTime>(fc.kind);
            out.push_back(engaged_fcbf(schedule.label + ":b" + std::to_string(k), *fc.barrier, ft.rho, ft.gamma,
                                       fc.interval.end, t, x, sys, log, schedule.step_margin, schedule.gamma_min));
            out.back().origin = fc.barrier_id + "/fcbf";
        }
    }
    return out;
}

std::vector<HalfspaceConstraint> conjoin_groups(const std::vector<ContractSchedule>& schedules, double t,
                                                const State& x, const ControlSystem& sys, EngagementLog& log) {
    std::vector<HalfspaceConstraint> out;
    for (const auto& s : schedules) {
        auto part = active_constraints(s, t, x, sys, log);
        out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return out;
}

}  // namespace stlcbf
