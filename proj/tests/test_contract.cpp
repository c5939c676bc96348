#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stlcbf/contract.hpp"
#include "stlcbf/vehicle.hpp"
#include "support.hpp"

#include <cmath>

using namespace stlcbf;
namespace veh = stlcbf::vehicle;

namespace {

// X_f, V_f, X_l with V_f in [0, 40]
Box road_box() {
    Box b;
    b.lower = Eigen::Vector3d(0.0, 0.0, 0.0);
    b.upper = Eigen::Vector3d(1000.0, 40.0, 1000.0);
    return b;
}

Box unit_box(Eigen::Index n) { return Box{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)}; }

EntryPtr speed_entry(const std::string& id, double v_max, double t_conv = 5.0, double rho = 0.91) {
    auto e = std::make_shared<BarrierEntry>();
    e->barrier = veh::speed_limit_barrier(id, v_max);
    e->alpha = AlphaFn::scaled(0.5);
    e->convergence = ConvergenceSettings{rho, t_conv, std::nullopt};
    return e;
}

TaskGroup speed_group(const std::vector<double>& limits, double seg = 50.0) {
    TaskGroup g;
    g.label = "G1";
    for (std::size_t i = 0; i < limits.size(); ++i) {
        const std::string id = "v" + std::to_string(i + 1);
        g.predicates.push_back({TimeInterval{seg * i, seg * (i + 1)}, PredicateRef{id, false, speed_entry(id, limits[i])}});
    }
    return g;
}

ScheduleConfig config(double horizon) {
    ScheduleConfig c;
    c.domain = road_box();
    c.horizon = horizon;
    return c;
}

std::shared_ptr<AffineBarrier> random_affine(support::Rng& rng, Eigen::Index n) {
    Eigen::VectorXd c(n);
    for (Eigen::Index j = 0; j < n; ++j) c[j] = rng.integer(-3, 3);
    return std::make_shared<AffineBarrier>("r", c, rng.integer(-4, 4) * 0.5);
}

}  // namespace

TEST_CASE("check_subset examples") {
    const Box box = road_box();
    const auto v25 = veh::speed_limit_barrier("a", 25.0);
    const auto v30 = veh::speed_limit_barrier("b", 30.0);
    const auto v10 = veh::speed_limit_barrier("c", 10.0);
    CHECK(check_subset(*v25, *v30, 50.0, box).subset);
    const auto r = check_subset(*v30, *v10, 50.0, box);
    CHECK_FALSE(r.subset);
    REQUIRE(r.counterexample);
    CHECK(v30->value(50.0, *r.counterexample) >= 0.0);
    CHECK(v10->value(50.0, *r.counterexample) < 0.0);
    // witness V_f = 20 lies in the first set only
    const Eigen::Vector3d w(0.0, 20.0, 0.0);
    CHECK(v30->value(50.0, w) >= 0.0);
    CHECK(v10->value(50.0, w) < 0.0);
    CHECK(r.worst_margin == doctest::Approx(-20.0));
    CHECK(check_subset(*v30, *v30, 50.0, box).subset);
    CHECK(r.method == CheckMethod::Exact);
}

TEST_CASE("check_subset compares the left limit with the right value") {
    const auto lim = veh::SpeedLimitSchedule::periodic(50.0, {30.0, 10.0}, 100.0);
    const auto hv = veh::speed_limit_barrier("h_v", lim);
    const auto v10 = veh::speed_limit_barrier("c", 10.0);
    // at t = 50 the left limit is the 30 limit
    CHECK_FALSE(check_subset(*hv, *v10, 50.0, road_box()).subset);
    CHECK(check_subset(*hv, *v10, 60.0, road_box()).subset);
}

TEST_CASE("check_intersection examples") {
    const Box box = road_box();
    SUBCASE("both thresholds admit standstill") {
        const auto r = check_intersection(*veh::speed_limit_barrier("a", 30.0), *veh::speed_limit_barrier("b", 10.0),
                                          0.0, box);
        REQUIRE(r.witness);
        CHECK((*r.witness)[veh::kVf] == doctest::Approx(0.0));
    }
    SUBCASE("empty first set") {
        const auto r = check_intersection(*veh::speed_limit_barrier("a", -1.0), *veh::speed_limit_barrier("b", 10.0),
                                          0.0, box);
        CHECK_FALSE(r.witness);
    }
    SUBCASE("overlapping corners agree with a dense grid") {
        // x + y <= 1.2 and x - y >= 0.5 on the unit square
        const AffineBarrier a("a", Eigen::Vector2d(-1.0, -1.0), 1.2);
        const AffineBarrier b("b", Eigen::Vector2d(1.0, -1.0), -0.5);
        const auto r = check_intersection(a, b, 0.0, unit_box(2));
        REQUIRE(r.witness);
        CHECK(a.value(0.0, *r.witness) >= -kSetTolerance);
        CHECK(b.value(0.0, *r.witness) >= -kSetTolerance);
        bool grid_hit = false;
        for (int i = 0; i <= 100 && !grid_hit; ++i)
            for (int j = 0; j <= 100; ++j) {
                const Eigen::Vector2d p(i * 0.01, j * 0.01);
                if (a.value(0.0, p) >= 0.0 && b.value(0.0, p) >= 0.0) {
                    grid_hit = true;
                    break;
                }
            }
        CHECK(grid_hit);
    }
}

TEST_CASE("exact subset is transitive") {
    support::Rng rng(41);
    const Box box = unit_box(2);
    int chains = 0;
    for (int i = 0; i < 3000; ++i) {
        auto a = random_affine(rng, 2), b = random_affine(rng, 2), c = random_affine(rng, 2);
        if (check_subset(*a, *b, 0.0, box).subset && check_subset(*b, *c, 0.0, box).subset) {
            ++chains;
            CHECK(check_subset(*a, *c, 0.0, box).subset);
        }
    }
    CHECK(chains > 50);
}

TEST_CASE("subset implies an intersection witness when the first set is nonempty") {
    support::Rng rng(43);
    const Box box = unit_box(3);
    for (int i = 0; i < 1000; ++i) {
        auto a = random_affine(rng, 3), b = random_affine(rng, 3);
        if (!check_intersection(*a, *a, 0.0, box).witness) continue;
        if (check_subset(*a, *b, 0.0, box).subset) CHECK(check_intersection(*a, *b, 0.0, box).witness);
    }
}

TEST_CASE("exact checks agree with a 0.01 grid oracle") {
    support::Rng rng(47);
    const Box box = unit_box(2);
    constexpr double band = 1e-6;
    for (int i = 0; i < 300; ++i) {
        auto a = random_affine(rng, 2), b = random_affine(rng, 2);
        const auto sub = check_subset(*a, *b, 0.0, box);
        const auto inter = check_intersection(*a, *b, 0.0, box);
        bool grid_out = false, grid_both = false;
        for (int p = 0; p <= 100; ++p)
            for (int q = 0; q <= 100; ++q) {
                const Eigen::Vector2d x(p * 0.01, q * 0.01);
                const double ha = a->value(0.0, x), hb = b->value(0.0, x);
                if (ha > band && hb < -band) grid_out = true;
                if (ha > band && hb > band) grid_both = true;
            }
        if (sub.subset) CHECK_FALSE(grid_out);
        if (grid_out) CHECK_FALSE(sub.subset);
        if (grid_both) CHECK(inter.witness);
        if (!inter.witness) CHECK_FALSE(grid_both);
    }
}

TEST_CASE("build_schedule: tightening limits overlap with a deadline") {
    const auto res = build_schedule(speed_group({30.0, 25.0, 10.0}), config(150.0));
    REQUIRE(res.ok());
    REQUIRE(res.schedule.verdicts.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(res.schedule.verdicts[k] == Verdict::OverlapWithDeadline);
        REQUIRE(res.schedule.convergence[k]);
        const double ti = 50.0 * (k + 1);
        CHECK(res.schedule.convergence[k]->interval == TimeInterval{ti - 5.0, ti});
        CHECK(res.report.boundaries[k].engage_time == doctest::Approx(ti - 5.0));
        CHECK(res.report.boundaries[k].bound < 5.0);
    }
    // worst engagement: the fastest state allowed by the previous limit
    CHECK(res.report.boundaries[0].worst_engage_margin == doctest::Approx(-5.0));
    CHECK(res.report.boundaries[1].worst_engage_margin == doctest::Approx(-15.0));
}

TEST_CASE("build_schedule: loosening limits are subsets") {
    const auto res = build_schedule(speed_group({10.0, 25.0, 30.0}), config(150.0));
    REQUIRE(res.ok());
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(res.schedule.verdicts[k] == Verdict::Subset);
        CHECK_FALSE(res.schedule.convergence[k]);
    }
}

TEST_CASE("build_schedule: disjoint sets are incompatible") {
    TaskGroup g;
    g.label = "G1";
    auto slow = speed_entry("slow", 20.0);
    auto fast = std::make_shared<BarrierEntry>();
    fast->barrier = std::make_shared<AffineBarrier>("fast", Eigen::Vector3d(0.0, 1.0, 0.0), -25.0);
    g.predicates.push_back({TimeInterval{0, 50}, PredicateRef{"slow", false, slow}});
    g.predicates.push_back({TimeInterval{50, 100}, PredicateRef{"fast", false, fast}});
    const auto res = build_schedule(g, config(100.0));
    CHECK_FALSE(res.ok());
    const BoundaryReport* f = res.report.first_failure();
    REQUIRE(f);
    CHECK(f->verdict == Verdict::Incompatible);
    CHECK(f->time == 50.0);
    CHECK(f->reason.find("empty intersection") != std::string::npos);
}

TEST_CASE("build_schedule: convergence window too short for the deadline") {
    auto g = speed_group({30.0, 10.0});
    // ask for convergence that cannot finish: gamma fixed very small
    auto e = std::make_shared<BarrierEntry>(*g.predicates[1].second.entry);
    e->convergence.gamma = 1e-3;
    g.predicates[1].second.entry = e;
    const auto res = build_schedule(g, config(100.0));
    CHECK_FALSE(res.ok());
    CHECK(res.report.first_failure()->reason.find("deadline violated") != std::string::npos);
}

TEST_CASE("build_schedule: gaps are tiled with vacuous segments") {
    TaskGroup g;
    g.label = "G1";
    g.predicates.push_back({TimeInterval{10, 20}, PredicateRef{"v1", false, speed_entry("v1", 20.0)}});
    const auto res = build_schedule(g, config(40.0));
    REQUIRE(res.ok());
    REQUIRE(res.schedule.segments.size() == 3);
    CHECK(res.schedule.segments[0].vacuous());
    CHECK(res.schedule.segments[2].vacuous());
    CHECK(res.schedule.span == TimeInterval{0, 40});
}

TEST_CASE("active_constraints around an overlapping boundary") {
    auto lead = std::make_shared<veh::LeadProfile>(100.0, 20.0, std::vector<std::pair<double, double>>{});
    const veh::VehicleSystem sys(veh::VehicleParams{}, lead, road_box());
    const auto res = build_schedule(speed_group({30.0, 25.0}), config(100.0));
    REQUIRE(res.ok());
    const Eigen::Vector3d x(0.0, 28.0, 100.0);
    EngagementLog log;
    CHECK(active_constraints(res.schedule, 20.0, x, sys, log).size() == 1);
    CHECK(active_constraints(res.schedule, 45.0, x, sys, log).size() == 1);
    CHECK(log.events().empty());
    CHECK(active_constraints(res.schedule, 47.0, x, sys, log).size() == 2);
    REQUIRE(log.events().size() == 1);
    const EngagementEvent ev = log.events()[0];
    CHECK(ev.time == 47.0);
    CHECK(ev.h_engage == doctest::Approx(-3.0));
    // gamma is frozen after engagement
    active_constraints(res.schedule, 48.0, Eigen::Vector3d(0.0, 26.0, 100.0), sys, log);
    CHECK(log.events().size() == 1);
    CHECK(log.events()[0].gamma == ev.gamma);
    CHECK(active_constraints(res.schedule, 50.0, x, sys, log).size() == 1);
    CHECK_THROWS_AS(active_constraints(res.schedule, 101.0, x, sys, log), std::out_of_range);
}

TEST_CASE("active_constraints never yields an FCBF outside its window") {
    auto lead = std::make_shared<veh::LeadProfile>(100.0, 20.0, std::vector<std::pair<double, double>>{});
    const veh::VehicleSystem sys(veh::VehicleParams{}, lead, road_box());
    const auto res = build_schedule(speed_group({30.0, 25.0, 10.0, 30.0, 5.0}), config(250.0));
    REQUIRE(res.ok());
    EngagementLog log;
    for (int k = 0; k <= 25000; ++k) {
        const double t = k * 0.01;
        const auto cs = active_constraints(res.schedule, t, Eigen::Vector3d(0.0, 20.0, 100.0), sys, log);
        bool fcbf = false;
        for (const auto& c : cs) fcbf |= c.origin.find("/fcbf") != std::string::npos;
        bool inside = false;
        for (const auto& conv : res.schedule.convergence)
            if (conv) inside |= conv->interval.start < t && t < conv->interval.end;
        if (fcbf) CHECK(inside);
    }
}

TEST_CASE("conjoin_groups") {
    auto lead = std::make_shared<veh::LeadProfile>(100.0, 20.0, std::vector<std::pair<double, double>>{});
    const veh::VehicleParams params;
    const veh::VehicleSystem sys(params, lead, road_box());
    const Eigen::Vector3d x(0.0, 15.0, 100.0);

    SUBCASE("two groups, one constraint each") {
        auto g1 = speed_group({30.0});
        auto g2 = speed_group({20.0});
        g2.label = "G2";
        const std::vector<ContractSchedule> s{build_schedule(g1, config(50.0)).schedule,
                                              build_schedule(g2, config(50.0)).schedule};
        EngagementLog log;
        CHECK(conjoin_groups(s, 10.0, x, sys, log).size() == 2);
    }
    SUBCASE("vacuous group adds nothing") {
        TaskGroup empty;
        empty.label = "G2";
        const std::vector<ContractSchedule> s{build_schedule(speed_group({30.0}), config(50.0)).schedule,
                                              build_schedule(empty, config(50.0)).schedule};
        EngagementLog log;
        CHECK(conjoin_groups(s, 10.0, x, sys, log).size() == 1);
    }
    SUBCASE("yellow phase during a speed transition") {
        // signal 1 turns yellow at 47 and red at 50; the speed limit changes at 50
        auto signals = std::make_shared<veh::SignalSchedule>(veh::SignalSchedule::make(
            {veh::TrafficSignal{300.0, {{0.0, 47.0, 50.0}}}, veh::TrafficSignal{600.0, {{0.0, 100.0, 110.0}}}}));
        auto hpos = std::make_shared<BarrierEntry>();
        hpos->barrier = std::make_shared<veh::SignalBarrier>("h_pos", signals, params, 0.9);
        auto h1 = std::make_shared<BarrierEntry>();
        h1->barrier = std::make_shared<veh::SpacingBarrier>("h1", params, lead);

        auto build_all = [&](std::vector<double> limits) {
            TaskGroup gs = speed_group(limits);
            TaskGroup gh1{"G2", {{TimeInterval{0, 100}, PredicateRef{"h1", false, h1}}}};
            TaskGroup gpos{"G3", {{TimeInterval{0, 100}, PredicateRef{"h_pos", false, hpos}}}};
            return std::vector<ContractSchedule>{build_schedule(gs, config(100.0)).schedule,
                                                 build_schedule(gh1, config(100.0)).schedule,
                                                 build_schedule(gpos, config(100.0)).schedule};
        };
        EngagementLog log;
        // h1, h_rbar, h_r FCBF, h_v on a loosening transition
        CHECK(conjoin_groups(build_all({10.0, 30.0}), 48.0, x, sys, log).size() == 4);
        // a tightening transition adds the speed FCBF
        EngagementLog log2;
        CHECK(conjoin_groups(build_all({30.0, 10.0}), 48.0, x, sys, log2).size() == 5);
    }
}
