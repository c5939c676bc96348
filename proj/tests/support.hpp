#pragma once

#include "stlcbf/barrier.hpp"
#include "stlcbf/trace.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace support {

// Seeded generator; the uniform mapping is spelled out so draws do not depend
// on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform(double lo, double hi) {
        const double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }
    int integer(int lo, int hi) {  // inclusive
        return lo + static_cast<int>(eng_() % static_cast<std::uint64_t>(hi - lo + 1));
    }
    bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }

private:
    std::mt19937_64 eng_;
};

inline stlcbf::BarrierEntry affine_entry(const std::string& id, std::vector<double> coeffs, double offset,
                                        double kappa = 1.0) {
    Eigen::VectorXd c = Eigen::Map<Eigen::VectorXd>(coeffs.data(), static_cast<Eigen::Index>(coeffs.size()));
    return {std::make_shared<stlcbf::AffineBarrier>(id, c, offset), stlcbf::AlphaFn::scaled(kappa), {}};
}

// Trace of a 1-D state sampled every dt on [0, T].
inline stlcbf::Trace scalar_trace(double dt, double horizon, double (*x_of_t)(double)) {
    stlcbf::Trace tr;
    tr.dt = dt;
    tr.state_names = {"x0"};
    const auto n = static_cast<long long>(std::llround(horizon / dt));
    for (long long k = 0; k <= n; ++k) {
        stlcbf::TraceRow r;
        r.t = static_cast<double>(k) * dt;
        r.x = Eigen::VectorXd::Constant(1, x_of_t(r.t));
        r.u_nom = r.u_safe = Eigen::VectorXd::Zero(1);
        tr.rows.push_back(r);
    }
    return tr;
}

}  // namespace support
