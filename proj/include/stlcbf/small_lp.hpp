#pragma once

#include <Eigen/Dense>

#include <optional>

namespace stlcbf {

struct LpSolution {
    Eigen::VectorXd x;
    double value = 0.0;
};

/// maximize c . x subject to A x <= b, by enumerating basic solutions.
///
/// Meant for the handful of variables that appear in set-compatibility
/// checks (n <= 4, a dozen rows). The feasible region must be bounded in the
/// direction of c; callers include box rows. Returns nullopt when no vertex
/// is feasible within tol.
std::optional<LpSolution> maximize_by_vertices(const Eigen::VectorXd& c, const Eigen::MatrixXd& a,
                                               const Eigen::VectorXd& b, double tol = 1e-9);

}  // namespace stlcbf
