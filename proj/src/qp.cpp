#include "stlcbf/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace stlcbf {

InputBox InputBox::make(Input lower, Input upper) {
    if (lower.size() == 0 || lower.size() != upper.size()) throw InvalidArgument("input box dimension mismatch");
    if (!lower.allFinite() || !upper.allFinite()) throw InvalidArgument("input box bounds must be finite");
    if ((lower.array() > upper.array()).any()) throw InvalidArgument("input box lower bound exceeds upper bound");
    return InputBox{std::move(lower), std::move(upper)};
}

InputBox InputBox::symmetric(Eigen::Index m, double bound) {
    return make(Input::Constant(m, -bound), Input::Constant(m, bound));
}

namespace {

struct Row {
    Eigen::VectorXd a;
    double b;
};

bool feasible(const std::vector<Row>& rows, const Input& u) {
    for (const auto& r : rows) {
        const double scale = 1.0 + std::abs(r.b) + r.a.cwiseAbs().dot(u.cwiseAbs());
        if (r.a.dot(u) - r.b > 1e-12 * scale) return false;
    }
    return true;
}

std::optional<Input> solve_scalar(double u_nom, std::span<const HalfspaceConstraint> constraints,
                                  const InputBox& box) {
    double lo = box.lower[0];
    double hi = box.upper[0];
    for (const auto& c : constraints) {
        const double a = c.a[0];
        if (a > 0.0) {
            hi = std::min(hi, c.b / a);
        } else if (a < 0.0) {
            lo = std::max(lo, c.b / a);
        } else if (c.b < 0.0) {
            return std::nullopt;
        }
    }
    if (lo > hi) {
        if (lo - hi > 1e-12 * (1.0 + std::abs(lo) + std::abs(hi))) return std::nullopt;
        hi = lo;
    }
    return Input::Constant(1, std::clamp(u_nom, lo, hi));
}

}  // namespace

std::optional<Input> solve_qp(const Input& u_nom, std::span<const HalfspaceConstraint> constraints,
                              const InputBox& box) {
    const Eigen::Index m = box.dim();
    if (u_nom.size() != m) throw InvalidArgument("nominal input has wrong dimension");
    for (const auto& c : constraints)
        if (c.a.size() != m) throw InvalidArgument("constraint '" + c.origin + "' has wrong input dimension");

    if (m == 1) return solve_scalar(u_nom[0], constraints, box);

    // normalized, deduplicated rows; zero rows are either vacuous or infeasible
    std::vector<Row> rows;
    auto add = [&](Eigen::VectorXd a, double b) {
        const double norm = a.norm();
        if (norm == 0.0) return b >= 0.0;
        a /= norm;
        b /= norm;
        for (const auto& r : rows)
            if (r.a.isApprox(a, 1e-14) && std::abs(r.b - b) <= 1e-14 * (1.0 + std::abs(b))) return true;
        rows.push_back(Row{std::move(a), b});
        return true;
    };
    for (const auto& c : constraints)
        if (!add(c.a, c.b)) return std::nullopt;
    for (Eigen::Index j = 0; j < m; ++j) {
        add(Eigen::VectorXd::Unit(m, j), box.upper[j]);
        add(-Eigen::VectorXd::Unit(m, j), -box.lower[j]);
    }

    if (feasible(rows, u_nom)) return u_nom;

    // The projection is the projection onto the affine hull of some set of at
    // most m independent active rows; it is the closest feasible such candidate.
    std::optional<Input> best;
    double best_dist = std::numeric_limits<double>::infinity();
    const int nrows = static_cast<int>(rows.size());
    std::vector<int> idx;
    auto try_subset = [&]() {
        const auto k = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd a(k, m);
        Eigen::VectorXd b(k);
        for (Eigen::Index i = 0; i < k; ++i) {
            a.row(i) = rows[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])].a.transpose();
            b[i] = rows[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])].b;
        }
        Eigen::MatrixXd gram = a * a.transpose();
        Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
        if (lu.rank() < k) return;
        const Eigen::VectorXd lambda = lu.solve(a * u_nom - b);
        const Input u = u_nom - a.transpose() * lambda;
        if (!u.allFinite() || !feasible(rows, u)) return;
        const double d = (u - u_nom).squaredNorm();
        if (d < best_dist) {
            best_dist = d;
            best = u;
        }
    };
    // subsets in increasing size, lexicographic
    for (int k = 1; k <= std::min<int>(static_cast<int>(m), nrows); ++k) {
        idx.assign(static_cast<std::size_t>(k), 0);
        for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
        while (true) {
            try_subset();
            int i = k - 1;
            while (i >= 0 && idx[static_cast<std::size_t>(i)] == nrows - k + i) --i;
            if (i < 0) break;
            ++idx[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    return best;
}

double pid_nominal(double spacing_error, double relative_velocity, PidState& pid, double dt, double mass,
                   double feedforward) {
    if (!(dt > 0.0)) throw InvalidArgument("PID step must be positive");
    const PidGains& g = pid.gains;
    pid.integral = std::clamp(pid.integral + spacing_error * dt, -g.integral_limit, g.integral_limit);
    return mass * (g.k1 * relative_velocity + g.k2 * spacing_error + g.k3 * pid.integral) + feedforward;
}

}  // namespace stlcbf
