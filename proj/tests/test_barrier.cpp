#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stlcbf/barrier.hpp"
#include "stlcbf/vehicle.hpp"
#include "support.hpp"

#include <cmath>

using namespace stlcbf;

namespace {

Box wide_box(Eigen::Index n) {
    return Box{Eigen::VectorXd::Constant(n, -1e6), Eigen::VectorXd::Constant(n, 1e6)};
}

State vec(std::initializer_list<double> v) {
    State x(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double d : v) x[i++] = d;
    return x;
}

// Time at which h' = -gamma sign(h)|h|^rho first reaches 0 from h0 < 0 (explicit Euler, fine step).
double simulated_crossing(double h0, double rho, double gamma, double step = 1e-5) {
    double h = h0, t = 0.0;
    while (h < 0.0) {
        h += step * gamma * std::pow(-h, rho);
        t += step;
        if (t > 1e4) break;
    }
    return t;
}

// Constant h with zero gradient.
class ConstantBarrier final : public Barrier {
public:
    ConstantBarrier(double c, Eigen::Index n) : Barrier("const", n), c_(c) {}
    double value(double, const State&) const override { return c_; }
    double dh_dt(double, const State&) const override { return 0.0; }
    Eigen::VectorXd grad_x(double, const State&) const override { return Eigen::VectorXd::Zero(state_dim()); }

private:
    double c_;
};

}  // namespace

TEST_CASE("cbf_constraint examples") {
    const auto sys = LinearSystem::double_integrator(wide_box(2));
    SUBCASE("speed limit on a double integrator") {
        // h = 25 - v
        const AffineBarrier h("v", vec({0.0, -1.0}), 25.0);
        const auto c = cbf_constraint(h, sys, AlphaFn::identity(), 0.0, vec({0.0, 20.0}));
        CHECK(c.a[0] == doctest::Approx(1.0));
        CHECK(c.b == doctest::Approx(5.0));
    }
    SUBCASE("constant positive barrier is vacuous") {
        const auto c = cbf_constraint(ConstantBarrier(1.0, 2), sys, AlphaFn::identity(), 0.0, vec({0, 0}));
        CHECK(c.a.isZero());
        CHECK(c.b == 1.0);
        CHECK_FALSE(c.infeasible_marker());
    }
    SUBCASE("constant negative barrier is the infeasible marker") {
        const auto c = cbf_constraint(ConstantBarrier(-1.0, 2), sys, AlphaFn::identity(), 0.0, vec({0, 0}));
        CHECK(c.b == -1.0);
        CHECK(c.infeasible_marker());
    }
    SUBCASE("scaled alpha") {
        const AffineBarrier h("v", vec({0.0, -1.0}), 25.0);
        const auto c = cbf_constraint(h, sys, AlphaFn::scaled(0.5), 0.0, vec({0.0, 20.0}));
        CHECK(c.b == doctest::Approx(2.5));
    }
    CHECK_THROWS_AS(AlphaFn::scaled(0.0), InvalidArgument);
}

TEST_CASE("fcbf_constraint examples") {
    const auto sys = LinearSystem::scalar_integrator(wide_box(1));
    // h = x, so L_g h = 1
    const AffineBarrier h("x", vec({1.0}), 0.0);
    SUBCASE("negative h forces u >= 2") {
        const auto c = fcbf_constraint(h, sys, FcbfParams::make(0.9, 2.0), 0.0, vec({-1.0}));
        CHECK(c.a[0] == doctest::Approx(-1.0));
        CHECK(c.b == doctest::Approx(-2.0));
    }
    SUBCASE("h = 0 drops the convergence term") {
        const auto c = fcbf_constraint(h, sys, FcbfParams::make(0.9, 2.0), 0.0, vec({0.0}));
        CHECK(c.b == 0.0);
    }
    SUBCASE("parameter validation") {
        CHECK_THROWS_AS(FcbfParams::make(1.0, 1.0), InvalidArgument);
        CHECK_THROWS_AS(FcbfParams::make(-0.1, 1.0), InvalidArgument);
        CHECK_THROWS_AS(FcbfParams::make(0.5, 0.0), InvalidArgument);
        CHECK_NOTHROW(FcbfParams::make(0.0, 1.0));
    }
}

TEST_CASE("convergence_time") {
    CHECK(convergence_time(-1.0, FcbfParams::make(0.9, 2.0)) == doctest::Approx(5.0));
    CHECK(convergence_time(3.0, FcbfParams::make(0.9, 2.0)) == 0.0);
    CHECK(convergence_time(-4.0, FcbfParams::make(0.5, 1.0)) == doctest::Approx(4.0));
    CHECK(simulated_crossing(-4.0, 0.5, 1.0) == doctest::Approx(4.0).epsilon(1e-3));
}

TEST_CASE("convergence_time matches the simulated crossing") {
    support::Rng rng(99);
    for (int i = 0; i < 30; ++i) {
        const double rho = rng.uniform(0.0, 0.95);
        const double gamma = rng.uniform(0.5, 5.0);
        const double h0 = rng.uniform(-10.0, -0.1);
        const double T = convergence_time(h0, FcbfParams::make(rho, gamma));
        CHECK(simulated_crossing(h0, rho, gamma, 1e-5 * std::max(T, 0.1)) == doctest::Approx(T).epsilon(2e-3));
    }
}

TEST_CASE("gamma_for_deadline") {
    CHECK(gamma_for_deadline(-1.0, 0.9, 5.0) == doctest::Approx(2.0));
    CHECK(gamma_for_deadline(0.0, 0.9, 5.0) == kDefaultGammaMin);
    CHECK(gamma_for_deadline(7.0, 0.9, 5.0, 0.25) == 0.25);
    CHECK(gamma_for_deadline(-4.0, 0.5, 4.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(gamma_for_deadline(-1.0, 0.9, 0.0), InvalidArgument);
    CHECK_THROWS_AS(gamma_for_deadline(-1.0, 0.9, -2.0), InvalidArgument);

    support::Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double rho = rng.uniform(0.0, 0.95);
        const double h0 = rng.uniform(-50.0, -1e-3);
        const double T = rng.uniform(0.1, 60.0);
        const double g = gamma_for_deadline(h0, rho, T);
        CHECK(convergence_time(h0, FcbfParams::make(rho, g)) == doctest::Approx(T).epsilon(1e-12));
    }
}

TEST_CASE("engagement_gamma") {
    // agrees with the deadline inversion when h < 0
    CHECK(engagement_gamma(-1.0, 0.9, 5.0) == gamma_for_deadline(-1.0, 0.9, 5.0));
    // |h|^(1-rho) / (T (1-rho)) on the safe side
    CHECK(engagement_gamma(1.0, 0.9, 5.0) == doctest::Approx(2.0));
    CHECK(engagement_gamma(0.0, 0.9, 5.0) == kDefaultGammaMin);
    CHECK(engagement_gamma(1e-30, 0.5, 1.0, 0.01) == 0.01);
    CHECK_THROWS_AS(engagement_gamma(1.0, 0.9, 0.0), InvalidArgument);
}

TEST_CASE("finite_diff_check") {
    SUBCASE("affine is exact") {
        const AffineBarrier h("a", vec({1.5, -2.0, 0.25}), {10.0}, {3.0, -1.0});
        const auto r = finite_diff_check(h, 4.0, vec({10.0, -3.0, 7.0}), 1e-6);
        CHECK_FALSE(r.non_smooth);
        CHECK(r.max_rel_error < 1e-8);
    }
    SUBCASE("spacing barrier at a generic state") {
        auto lead = std::make_shared<vehicle::LeadProfile>(100.0, 20.0,
                                                           std::vector<std::pair<double, double>>{{0.0, 0.5}, {30.0, -1.0}});
        const vehicle::SpacingBarrier h1("h1", vehicle::VehicleParams{}, lead);
        const auto r = finite_diff_check(h1, 12.3, vec({40.0, 18.0, 250.0}), 1e-6);
        CHECK_FALSE(r.non_smooth);
        CHECK(r.max_rel_error < 1e-5);
    }
    SUBCASE("speed-limit switch is flagged") {
        const auto limits = vehicle::SpeedLimitSchedule::periodic(50.0, {30.0, 25.0, 10.0}, 150.0);
        const auto hv = vehicle::speed_limit_barrier("h_v", limits);
        CHECK(finite_diff_check(*hv, 50.0, vec({0.0, 20.0, 100.0}), 1e-6).non_smooth);
        CHECK_FALSE(finite_diff_check(*hv, 25.0, vec({0.0, 20.0, 100.0}), 1e-6).non_smooth);
    }
    CHECK_THROWS_AS(finite_diff_check(AffineBarrier("a", vec({1.0}), 0.0), 0.0, vec({0.0}), 0.0), InvalidArgument);
}

TEST_CASE("cbf boundary input makes hdot + alpha(h) vanish") {
    auto lead = std::make_shared<vehicle::LeadProfile>(0.0, 20.0, std::vector<std::pair<double, double>>{{0.0, 0.7}});
    const vehicle::VehicleParams params;
    const vehicle::VehicleSystem veh(params, lead, wide_box(3));
    const vehicle::SpacingBarrier h1("h1", params, lead);
    const auto dbl = LinearSystem::double_integrator(wide_box(2));

    support::Rng rng(17);
    for (int i = 0; i < 500; ++i) {
        const bool use_vehicle = rng.coin();
        const ControlSystem& sys = use_vehicle ? static_cast<const ControlSystem&>(veh) : dbl;
        std::shared_ptr<Barrier> bar;
        State x;
        if (use_vehicle) {
            bar = std::make_shared<vehicle::SpacingBarrier>(h1);
            x = vec({rng.uniform(0, 500), rng.uniform(0, 35), rng.uniform(0, 800)});
        } else {
            bar = std::make_shared<AffineBarrier>("a", vec({rng.uniform(-2, 2), rng.uniform(0.1, 2)}), rng.uniform(-5, 5));
            x = vec({rng.uniform(-10, 10), rng.uniform(-10, 10)});
        }
        const double t = rng.uniform(0, 20);
        const AlphaFn alpha = AlphaFn::scaled(rng.uniform(0.1, 3.0));
        const auto c = cbf_constraint(*bar, sys, alpha, t, x);
        REQUIRE(std::abs(c.a[0]) > 0.0);
        const Input u = Input::Constant(1, c.b / c.a[0]);
        const Eigen::VectorXd xdot = sys.drift(t, x) + sys.input_map(t, x) * u;
        const double hdot = bar->dh_dt(t, x) + bar->grad_x(t, x).dot(xdot);
        const double h = bar->value(t, x);
        const double scale = std::max({1.0, std::abs(hdot), std::abs(alpha(h))});
        CHECK(std::abs(hdot + alpha(h)) / scale < 1e-9);
    }
}

TEST_CASE("fcbf right-hand side exceeds the alpha-free bound by gamma h^rho") {
    const auto sys = LinearSystem::double_integrator(wide_box(2));
    support::Rng rng(23);
    for (int i = 0; i < 500; ++i) {
        const AffineBarrier bar("a", vec({rng.uniform(-2, 2), rng.uniform(-2, 2)}), rng.uniform(-5, 5));
        const State x = vec({rng.uniform(-10, 10), rng.uniform(-10, 10)});
        const double h = bar.value(0.0, x);
        if (!(h > 0.0)) continue;
        const auto p = FcbfParams::make(rng.uniform(0.0, 0.95), rng.uniform(0.1, 5.0));
        const double b0 = bar.dh_dt(0.0, x) + bar.grad_x(0.0, x).dot(sys.drift(0.0, x));
        const auto c = fcbf_constraint(bar, sys, p, 0.0, x);
        CHECK(c.b - b0 == doctest::Approx(p.gamma() * std::pow(h, p.rho())).epsilon(1e-12));
    }
}

TEST_CASE("negated barrier and registry") {
    BarrierRegistry reg;
    reg.add(support::affine_entry("a", {2.0}, -1.0, 0.5));
    CHECK_THROWS_AS(reg.add(support::affine_entry("a", {1.0}, 0.0)), InvalidArgument);
    CHECK_THROWS_AS(reg.resolve("missing"), std::out_of_range);
    const auto neg = reg.resolve("a", true);
    CHECK(neg->barrier->value(0.0, vec({3.0})) == doctest::Approx(-5.0));
    CHECK(neg->barrier->grad_x(0.0, vec({3.0}))[0] == doctest::Approx(-2.0));
    CHECK(neg->alpha.kappa() == 0.5);
    CHECK(neg->barrier->affine(0.0)->offset == doctest::Approx(1.0));

    const AffineBarrier piecewise("p", vec({1.0}), {5.0}, {0.0, 10.0});
    CHECK(piecewise.value(5.0, vec({0.0})) == 10.0);
    CHECK(piecewise.value_left(5.0, vec({0.0})) == 0.0);
    CHECK_THROWS_AS(AffineBarrier("bad", vec({1.0}), {5.0}, {0.0}), InvalidArgument);
}
