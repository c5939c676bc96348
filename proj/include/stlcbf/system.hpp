#pragma once

#include "stlcbf/types.hpp"

#include <string>
#include <vector>

namespace stlcbf {

/// Control-affine dynamics x' = f(t, x) + g(t, x) u on a box domain.
///
/// The drift may depend on time through exogenous signals (e.g. a lead
/// vehicle's broadcast velocity); the input map is dense n x m.
class ControlSystem {
public:
    virtual ~ControlSystem() = default;

    virtual Eigen::Index state_dim() const = 0;
    virtual Eigen::Index input_dim() const = 0;
    virtual State drift(double t, const State& x) const = 0;
    virtual Eigen::MatrixXd input_map(double t, const State& x) const = 0;
    virtual const Box& domain() const = 0;

    /// Pulls a state that left the domain for a benign numerical reason back
    /// inside. Returns true if x was modified.
    virtual bool sanitize(State& /*x*/) const { return false; }

    virtual std::vector<std::string> state_names() const;
};

/// x' = A x + B u.
class LinearSystem final : public ControlSystem {
public:
    LinearSystem(Eigen::MatrixXd a, Eigen::MatrixXd b, Box domain);

    /// Position/velocity pair with unit input gain on acceleration.
    static LinearSystem double_integrator(Box domain);
    /// x' = u.
    static LinearSystem scalar_integrator(Box domain);

    Eigen::Index state_dim() const override { return a_.rows(); }
    Eigen::Index input_dim() const override { return b_.cols(); }
    State drift(double t, const State& x) const override;
    Eigen::MatrixXd input_map(double t, const State& x) const override;
    const Box& domain() const override { return domain_; }

private:
    Eigen::MatrixXd a_;
    Eigen::MatrixXd b_;
    Box domain_;
};

}  // namespace stlcbf
