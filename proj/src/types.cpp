#include "stlcbf/system.hpp"
#include "stlcbf/types.hpp"

#include <cmath>

namespace stlcbf {

TimeInterval TimeInterval::make(double start, double end) {
    if (!std::isfinite(start) || !std::isfinite(end))
        throw InvalidArgument("time interval bounds must be finite");
    if (start < 0.0) throw InvalidArgument("time interval must start at t >= 0");
    if (!(start < end)) throw InvalidArgument("empty time interval: start must be < end");
    return TimeInterval{start, end};
}

bool Box::contains(const Eigen::VectorXd& x, double tol) const {
    if (x.size() != lower.size()) return false;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (x[i] < lower[i] - tol || x[i] > upper[i] + tol) return false;
    return true;
}

bool Box::degenerate() const {
    if (lower.size() == 0 || lower.size() != upper.size()) return true;
    for (Eigen::Index i = 0; i < lower.size(); ++i)
        if (!(upper[i] > lower[i])) return true;
    return false;
}

std::vector<std::string> ControlSystem::state_names() const {
    std::vector<std::string> names;
    for (Eigen::Index i = 0; i < state_dim(); ++i) names.push_back("x" + std::to_string(i));
    return names;
}

LinearSystem::LinearSystem(Eigen::MatrixXd a, Eigen::MatrixXd b, Box domain)
    : a_(std::move(a)), b_(std::move(b)), domain_(std::move(domain)) {
    if (a_.rows() != a_.cols() || b_.rows() != a_.rows() || domain_.dim() != a_.rows())
        throw InvalidArgument("inconsistent linear system dimensions");
}

LinearSystem LinearSystem::double_integrator(Box domain) {
    Eigen::MatrixXd a(2, 2);
    a << 0, 1, 0, 0;
    Eigen::MatrixXd b(2, 1);
    b << 0, 1;
    return LinearSystem(a, b, std::move(domain));
}

LinearSystem LinearSystem::scalar_integrator(Box domain) {
    return LinearSystem(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Ones(1, 1), std::move(domain));
}

State LinearSystem::drift(double, const State& x) const { return a_ * x; }

Eigen::MatrixXd LinearSystem::input_map(double, const State&) const { return b_; }

}  // namespace stlcbf
