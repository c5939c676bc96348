#pragma once

#include "stlcbf/barrier.hpp"
#include "stlcbf/types.hpp"

#include <optional>
#include <span>

namespace stlcbf {

/// Admissible inputs U: lower <= u <= upper componentwise.
struct InputBox {
    Input lower;
    Input upper;

    static InputBox make(Input lower, Input upper);
    static InputBox symmetric(Eigen::Index m, double bound);
    Eigen::Index dim() const { return lower.size(); }
};

/// Euclidean projection of u_nom onto {u : a_k . u <= b_k for all k} within box.
/// nullopt when that set is empty.
///
/// One input: closed-form clamp. Otherwise: enumeration of active sets of
/// at most m linearly independent constraints (m <= 3 intended).
std::optional<Input> solve_qp(const Input& u_nom, std::span<const HalfspaceConstraint> constraints,
                              const InputBox& box);

struct PidGains {
    double k1 = 0.5;   // relative velocity
    double k2 = 0.1;   // spacing error
    double k3 = 0.01;  // integral of spacing error
    double integral_limit = 100.0;
};

struct PidState {
    PidGains gains;
    double integral = 0.0;
};

/// u_nom = m (k1 v_rel + k2 e + k3 I) + feedforward, with I += e dt clamped
/// to +-integral_limit before use.
double pid_nominal(double spacing_error, double relative_velocity, PidState& pid, double dt, double mass,
                   double feedforward);

}  // namespace stlcbf
