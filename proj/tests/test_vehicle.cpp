#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stlcbf/vehicle.hpp"
#include "support.hpp"

#include <cmath>
#include <set>

using namespace stlcbf;
using namespace stlcbf::vehicle;

namespace {

Box wide_box() { return Box{Eigen::Vector3d::Constant(-1e6), Eigen::Vector3d::Constant(1e6)}; }

std::shared_ptr<LeadProfile> lead_at(double x0, double v0, std::vector<std::pair<double, double>> steps = {}) {
    return std::make_shared<LeadProfile>(x0, v0, std::move(steps));
}

// Signals at 200 and 400. Signal 1 is green on [-10, 20), yellow on [20, 23),
// red from 23; signal 2 is red on [0, 30) and green from 30.
std::shared_ptr<SignalSchedule> two_signals() {
    return std::make_shared<SignalSchedule>(SignalSchedule::make({
        TrafficSignal{200.0, {{-10.0, 20.0, 23.0}}},
        TrafficSignal{400.0, {{-40.0, -35.0, 0.0}, {30.0, 60.0, 65.0}}},
    }));
}

double upper_bound_from(const HalfspaceConstraint& c) {
    REQUIRE(c.a[0] > 0.0);
    return c.b / c.a[0];
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("friction_force") {
    const VehicleParams p;
    CHECK(friction_force(0.0, p) == doctest::Approx(0.1));
    CHECK(friction_force(20.0, p) == doctest::Approx(200.1));
    CHECK(friction_force(10.0, p) == doctest::Approx(75.1));
}

TEST_CASE("vehicle parameters are validated") {
    CHECK(VehicleParams{}.violations().empty());
    VehicleParams bad;
    bad.mass = -1.0;
    bad.beta = 0.0;
    CHECK(bad.violations().size() == 2);
    CHECK(VehicleParams{}.a_max == doctest::Approx(3.92));
}

TEST_CASE("lead profile") {
    const LeadProfile lead(10.0, 5.0, {{0.0, 1.0}, {2.0, -10.0}, {10.0, 0.5}});
    CHECK(lead.velocity(1.0) == doctest::Approx(6.0));
    CHECK(lead.velocity(2.0) == doctest::Approx(7.0));
    // stops at 2.7 and stays at rest until the next step
    CHECK(lead.velocity(5.0) == 0.0);
    CHECK(lead.acceleration(5.0) == 0.0);
    CHECK(lead.velocity(12.0) == doctest::Approx(1.0));
    const std::set<double> sw(lead.switch_times().begin(), lead.switch_times().end());
    CHECK(sw.count(2.0));
    CHECK(sw.count(10.0));
}

TEST_CASE("spacing barrier") {
    const VehicleParams p;
    auto lead = lead_at(0.0, 20.0);
    const SpacingBarrier h1("h1", p, lead);
    // X_r = 50 with equal speeds
    CHECK(h1.value(0.0, Eigen::Vector3d(0.0, 20.0, 50.0)) == doctest::Approx(25.0));
    CHECK(h1.value(0.0, Eigen::Vector3d(0.0, 20.0, 25.0)) == doctest::Approx(0.0));
    const Eigen::VectorXd g = h1.grad_x(0.0, Eigen::Vector3d(0.0, 20.0, 50.0));
    CHECK(g[0] == -1.0);
    CHECK(g[1] == doctest::Approx(-1.0 - 20.0 / p.a_max));
    CHECK(g[2] == 1.0);

    auto accel = lead_at(0.0, 20.0, {{0.0, 0.5}, {40.0, 0.0}});
    const SpacingBarrier moving("h1", p, accel);
    CHECK(moving.dh_dt(10.0, Eigen::Vector3d(0.0, 20.0, 50.0)) == doctest::Approx(25.0 * 0.5 / p.a_max));
    CHECK(finite_diff_check(moving, 13.7, Eigen::Vector3d(12.0, 17.0, 90.0), 1e-6).max_rel_error < 1e-5);
    CHECK(finite_diff_check(moving, 40.0, Eigen::Vector3d(12.0, 17.0, 90.0), 1e-6).non_smooth);
}

TEST_CASE("speed limit barrier") {
    const auto lim = SpeedLimitSchedule::periodic(50.0, {30.0, 25.0, 10.0}, 150.0);
    const auto hv = speed_limit_barrier("h_v", lim);
    const Eigen::Vector3d x(0.0, 20.0, 0.0);
    CHECK(hv->value(75.0, x) == doctest::Approx(5.0));
    CHECK(hv->value_left(50.0, x) == doctest::Approx(10.0));
    CHECK(hv->value(50.0, x) == doctest::Approx(5.0));
    CHECK(hv->value(100.0, x) - hv->value_left(100.0, x) == doctest::Approx(-15.0));
    CHECK(lim.value(500.0) == 10.0);
    CHECK_THROWS_AS(SpeedLimitSchedule::make({{TimeInterval{0, 10}, 5.0}, {TimeInterval{5, 20}, 6.0}}),
                    InvalidArgument);
}

TEST_CASE("signal barrier examples") {
    const VehicleParams p;
    const auto sched = two_signals();
    const SignalBarrier hpos("h_pos", sched, p, 0.9);
    const Eigen::Vector3d x(100.0, 10.0, 0.0);
    CHECK(sched->phase(0, 10.0).phase == SignalPhase::Green);
    CHECK(sched->phase(0, 21.0).phase == SignalPhase::Yellow);
    CHECK(sched->phase(0, 23.0).phase == SignalPhase::Red);
    CHECK(sched->phase(1, -100.0).phase == SignalPhase::None);

    SUBCASE("red selects the active signal") { CHECK(hpos.value(25.0, x) == doctest::Approx(75.0)); }
    SUBCASE("green selects the following signal") { CHECK(hpos.value(10.0, x) == doctest::Approx(275.0)); }
    SUBCASE("yellow keeps the clear component and announces the red deadline") {
        CHECK(hpos.value(21.0, x) == doctest::Approx(275.0));
        const Phase ph = hpos.phase(21.0, x);
        REQUIRE(ph.pending);
        CHECK(ph.pending->engage_time == 20.0);
        CHECK(ph.pending->deadline == 23.0);
        CHECK(ph.pending->target->value(21.0, x) == doctest::Approx(75.0));
        CHECK_FALSE(hpos.phase(10.0, x).pending);
    }
    SUBCASE("handoff past a green signal") {
        // signal 2 red at t = 10: the handoff is continuous
        const double eps = 1e-9;
        const double before = hpos.value(10.0, Eigen::Vector3d(200.0 - eps, 10.0, 0.0));
        const double after = hpos.value(10.0, Eigen::Vector3d(200.0 + eps, 10.0, 0.0));
        CHECK(*sched->active_index(200.0 + eps) == 1);
        CHECK(before == doctest::Approx(after).epsilon(1e-9));
        // signal 2 green at t = 40: the set only grows
        const double before_g = hpos.value(40.0, Eigen::Vector3d(200.0 - eps, 10.0, 0.0));
        const double after_g = hpos.value(40.0, Eigen::Vector3d(200.0 + eps, 10.0, 0.0));
        CHECK(after_g >= before_g);
    }
    SUBCASE("beyond the last signal nothing applies") {
        CHECK_FALSE(sched->active_index(401.0));
        CHECK(std::isinf(hpos.value(10.0, Eigen::Vector3d(401.0, 10.0, 0.0))));
        CHECK_FALSE(hpos.phase(10.0, Eigen::Vector3d(401.0, 10.0, 0.0)).component);
    }
}

TEST_CASE("stitched signal barrier equals the selected component") {
    const VehicleParams p;
    const auto sched = two_signals();
    const SignalBarrier hpos("h_pos", sched, p, 0.9);
    support::Rng rng(81);
    for (int i = 0; i < 2000; ++i) {
        const double t = rng.uniform(0.0, 70.0);
        const Eigen::Vector3d x(rng.uniform(-50.0, 400.0), rng.uniform(0.0, 30.0), 0.0);
        const Phase ph = hpos.phase(t, x);
        REQUIRE(ph.component);
        // a vacuous component (last signal not red) reports +inf
        if (ph.component->vacuous())
            CHECK(std::isinf(hpos.value(t, x)));
        else
            CHECK(hpos.value(t, x) == ph.component->value(t, x));
        const auto k = *sched->active_index(x[kXf]);
        const bool red = sched->phase(k, t).phase == SignalPhase::Red;
        CHECK(ph.component.get() == (red ? hpos.red_component(k) : hpos.clear_component(k)).get());
    }
}

TEST_CASE("signal schedule validation and generation") {
    CHECK_THROWS_AS(SignalSchedule::make({TrafficSignal{100.0, {{5.0, 10.0, 12.0}}}}), InvalidArgument);
    CHECK_THROWS_AS(SignalSchedule::make({TrafficSignal{100.0, {{0.0, 10.0, 8.0}}}}), InvalidArgument);
    CHECK_THROWS_AS(SignalSchedule::make({TrafficSignal{100.0, {{0.0, 10.0, 12.0}, {11.0, 20.0, 25.0}}}}),
                    InvalidArgument);
    CHECK_THROWS_AS(SignalSchedule::make({TrafficSignal{100.0, {{0.0, 1.0, 2.0}}}, TrafficSignal{50.0, {{0.0, 1.0, 2.0}}}}),
                    InvalidArgument);

    const TrafficSignal per = SignalSchedule::periodic(300.0, 12.0, 20.0, 4.0, 16.0, 200.0);
    CHECK(per.cycles.front().green <= 0.0);
    CHECK(per.cycles.back().green + 40.0 >= 200.0);
    for (std::size_t i = 0; i + 1 < per.cycles.size(); ++i)
        CHECK(per.cycles[i + 1].green - per.cycles[i].green == doctest::Approx(40.0));

    const SignalGeneratorSettings s;
    const auto a = SignalSchedule::generate(7, s, 500.0);
    const auto b = SignalSchedule::generate(7, s, 500.0);
    const auto c = SignalSchedule::generate(8, s, 500.0);
    REQUIRE(a.size() == 10);
    std::set<long> spacings;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.signal(i).position == b.signal(i).position);
        CHECK(a.signal(i).cycles.size() == b.signal(i).cycles.size());
        if (i > 0) {
            const double gap = a.signal(i).position - a.signal(i - 1).position;
            CHECK(gap >= s.spacing_min);
            CHECK(gap <= s.spacing_max);
            spacings.insert(std::lround(gap));
        }
        for (const auto& cy : a.signal(i).cycles) {
            CHECK(cy.yellow - cy.green >= s.green_min);
            CHECK(cy.yellow - cy.green <= s.green_max);
            CHECK(cy.red - cy.yellow >= s.yellow_min);
            CHECK(cy.red - cy.yellow <= s.yellow_max);
        }
    }
    CHECK(spacings.size() > 1);
    CHECK(a.signal(0).position != c.signal(0).position);
}

TEST_CASE("closed-form bound examples") {
    const VehicleParams p;
    BoundQuery q;
    q.x = Eigen::Vector3d(0.0, 20.0, 50.0);
    q.v_lead = 20.0;
    CHECK(closed_form_bound(BoundKind::H1, q, p) == doctest::Approx(6960.0).epsilon(1e-4));
    CHECK(closed_form_bound(BoundKind::H1, q, p) ==
          doctest::Approx(1650.0 * 3.92 / 23.92 * 25.0 + 200.1).epsilon(1e-12));

    BoundQuery r;
    r.x = Eigen::Vector3d(100.0, 10.0, 0.0);
    r.position = 400.0;  // h_rbar = 275
    CHECK(closed_form_bound(BoundKind::RBar, r, p) == doctest::Approx(825.0 * 265.0 + 75.1));

    CHECK(bound_kind_from_string("v_fcbf") == BoundKind::VFcbf);
    CHECK_THROWS_AS(bound_kind_from_string("nope"), InvalidArgument);
}

TEST_CASE("closed-form bounds match the generic constraint construction") {
    const VehicleParams p;
    support::Rng rng(91);
    for (int i = 0; i < 3000; ++i) {
        const double t = rng.uniform(0.0, 100.0);
        const double accel = rng.uniform(-1.0, 1.0);
        auto lead = lead_at(0.0, rng.uniform(5.0, 30.0), {{0.0, accel}});
        const VehicleSystem sys(p, lead, wide_box());
        BoundQuery q;
        q.x = Eigen::Vector3d(rng.uniform(0.0, 1000.0), rng.uniform(0.0, 35.0), rng.uniform(0.0, 1500.0));
        q.v_lead = lead->velocity(t);
        q.a_lead = lead->acceleration(t);
        q.position = rng.uniform(0.0, 1500.0);
        q.v_max = rng.uniform(5.0, 35.0);
        q.gamma = rng.uniform(0.1, 5.0);
        q.rho = rng.uniform(0.0, 0.95);
        const auto fp = FcbfParams::make(q.rho, q.gamma);

        const SpacingBarrier h1("h1", p, lead);
        CHECK(rel_err(closed_form_bound(BoundKind::H1, q, p),
                      upper_bound_from(cbf_constraint(h1, sys, AlphaFn::identity(), t, q.x))) < 1e-9);

        const AffineBarrier hs("hs", Eigen::Vector3d(-1.0, -p.beta, 0.0), q.position - p.standstill_gap);
        CHECK(rel_err(closed_form_bound(BoundKind::RBar, q, p),
                      upper_bound_from(cbf_constraint(hs, sys, AlphaFn::identity(), t, q.x))) < 1e-9);
        CHECK(rel_err(closed_form_bound(BoundKind::RFcbf, q, p), upper_bound_from(fcbf_constraint(hs, sys, fp, t, q.x))) <
              1e-9);

        const auto hv = speed_limit_barrier("h_v", q.v_max);
        CHECK(rel_err(closed_form_bound(BoundKind::V, q, p),
                      upper_bound_from(cbf_constraint(*hv, sys, AlphaFn::scaled(1.0 / p.beta), t, q.x))) < 1e-9);
        CHECK(rel_err(closed_form_bound(BoundKind::VFcbf, q, p), upper_bound_from(fcbf_constraint(*hv, sys, fp, t, q.x))) <
              1e-9);
    }
}

TEST_CASE("alternative FCBF bound forms differ from the derived ones") {
    const VehicleParams p;
    BoundQuery q;
    q.x = Eigen::Vector3d(100.0, 10.0, 0.0);
    q.position = 200.0;
    q.v_max = 5.0;
    q.gamma = 2.0;
    q.rho = 0.5;
    // the alternative r_fcbf omits the -V_f term
    CHECK(alternative_bound(BoundKind::RFcbf, q, p) - closed_form_bound(BoundKind::RFcbf, q, p) ==
          doctest::Approx(p.mass / p.beta * q.x[kVf]));
    // the alternative v_fcbf carries an extra 1/beta
    const double drift = closed_form_bound(BoundKind::VFcbf, q, p) - friction_force(10.0, p);
    CHECK(alternative_bound(BoundKind::VFcbf, q, p) - friction_force(10.0, p) == doctest::Approx(drift / p.beta));
    for (auto k : {BoundKind::H1, BoundKind::RBar, BoundKind::V})
        CHECK(alternative_bound(k, q, p) == closed_form_bound(k, q, p));
}

TEST_CASE("red-phase gamma") {
    // deadline equal to the yellow duration
    const double g = red_phase_gamma(-30.0, 0.9, 4.0);
    CHECK(g == doctest::Approx(std::pow(30.0, 0.1) / (4.0 * 0.1)));
    CHECK(convergence_time(-30.0, FcbfParams::make(0.9, g)) == doctest::Approx(4.0));
    CHECK(red_phase_gamma(12.0, 0.9, 4.0) == kDefaultGammaMin);
}

TEST_CASE("red crossings are detected with the interpolated time") {
    const auto sched = two_signals();
    Trace tr;
    tr.dt = 1.0;
    tr.state_names = {"X_f", "V_f", "X_l"};
    for (int k = 0; k <= 30; ++k) {
        TraceRow r;
        r.t = k;
        r.x = Eigen::Vector3d(10.0 * k, 10.0, 0.0);
        tr.rows.push_back(r);
    }
    // passes 200 at t = 20 (green edge) and 400 at t = 40 (beyond the trace)
    CHECK(red_crossings(tr, *sched).empty());
    for (auto& r : tr.rows) r.x[0] += 5.0;  // passes 200 at t = 19.5, still green
    CHECK(red_crossings(tr, *sched).empty());
    for (auto& r : tr.rows) r.x[0] -= 40.0;  // passes 200 at t = 23.5, red
    const auto rc = red_crossings(tr, *sched);
    REQUIRE(rc.size() == 1);
    CHECK(rc[0].signal == 0);
    CHECK(rc[0].time == doctest::Approx(23.5));
}
