#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "gradenav/dp_planner.hpp"
#include "gradenav/sensor_sim.hpp"
#include "dp_oracle.hpp"
#include "test_util.hpp"

using namespace gradenav;

namespace {

const VehicleParams kP;

RouteProfile flat_route(std::size_t n_cells, double ds, double v_max, double v_min_mid) {
    RouteProfile r;
    r.ds = ds;
    r.grade.assign(n_cells, 0.0);
    r.v_max.assign(n_cells + 1, v_max);
    r.v_min.assign(n_cells + 1, v_min_mid);
    r.v_min.front() = 0.0;
    r.v_min.back() = 0.0;
    return r;
}

TEST(StageCostTest, HandValueAndBrakingIsFree) {
    EXPECT_DOUBLE_EQ(stage_cost(10.0, 500.0, 15.0, 2.0, 10.0), 50500.0);
    EXPECT_DOUBLE_EQ(stage_cost(10.0, -500.0, 15.0, 2.0, 10.0), 500.0);
    EXPECT_DOUBLE_EQ(stage_cost(15.0, 0.0, 15.0, 2.0, 10.0), 0.0);
}

TEST(DpGridTest, VelocityLevelsHitBoundsExactly) {
    DpGrid g;
    g.n_v = 5;
    const std::vector<double> lev = g.velocity_levels(2.0, 10.0);
    EXPECT_EQ(lev, (std::vector<double>{2.0, 4.0, 6.0, 8.0, 10.0}));
}

TEST(DpGridTest, InputLevelNearestZeroSnapsToZero) {
    DpGrid g;  // 25 levels over [-3000, 3000]
    EXPECT_DOUBLE_EQ(g.input_levels()[12], 0.0);

    g.n_u = 4;
    EXPECT_EQ(g.input_levels(), (std::vector<double>{-3000.0, 0.0, 1000.0, 3000.0}));

    g.n_u = 3;
    g.u_min = 100.0;
    g.u_max = 300.0;
    EXPECT_EQ(g.input_levels(), (std::vector<double>{100.0, 200.0, 300.0}));
}

TEST(DpGridTest, ValidateRejectsDegenerateGrids) {
    DpGrid g;
    g.n_v = 1;
    EXPECT_THROW(g.validate(), ConfigError);
    g = DpGrid{};
    g.n_u = 2;
    EXPECT_THROW(g.validate(), ConfigError);
    g = DpGrid{};
    g.u_min = g.u_max;
    EXPECT_THROW(g.validate(), ConfigError);
}

TEST(RouteValidateTest, RejectsBadRoutes) {
    RouteProfile r = flat_route(3, 10.0, 12.0, 2.0);
    EXPECT_NO_THROW(r.validate());
    r.grade[1] = 1.0;
    EXPECT_THROW(r.validate(), ConfigError);
    r = flat_route(3, 10.0, 12.0, 2.0);
    r.v_min[1] = 13.0;
    EXPECT_THROW(r.validate(), ConfigError);
    r = flat_route(3, 10.0, 12.0, 2.0);
    r.v_min.front() = 0.5;
    EXPECT_THROW(r.validate(), ConfigError);
    r = flat_route(3, 10.0, 12.0, 2.0);
    r.v_max.pop_back();
    EXPECT_THROW(r.validate(), ConfigError);
}

TEST(SnapIndexTest, HalfSpacingTiesRoundUp) {
    const std::vector<double> lev = {0.0, 1.0, 2.0};
    EXPECT_EQ(detail::snap_index(lev, 0.5), 1u);
    EXPECT_EQ(detail::snap_index(lev, 1.4999), 1u);
    EXPECT_EQ(detail::snap_index(lev, 1.5), 2u);
    EXPECT_EQ(detail::snap_index(lev, -5.0), 0u);
    EXPECT_EQ(detail::snap_index(lev, 7.0), 2u);
}

TEST(InterpLevelsTest, SaturatesOnInfinityAndClampsEnds) {
    const std::vector<double> lev = {0.0, 1.0, 2.0};
    EXPECT_DOUBLE_EQ(detail::interp_levels(lev, {5.0, 6.0, 7.0}, 0.25), 5.25);
    EXPECT_DOUBLE_EQ(detail::interp_levels(lev, {5.0, 6.0, 7.0}, -1.0), 5.0);
    EXPECT_DOUBLE_EQ(detail::interp_levels(lev, {5.0, 6.0, 7.0}, 3.0), 7.0);
    EXPECT_TRUE(std::isinf(detail::interp_levels(lev, {5.0, kInfCost, 7.0}, 0.5)));
    EXPECT_TRUE(std::isinf(detail::interp_levels(lev, {5.0, kInfCost, 7.0}, 1.0)));
    EXPECT_DOUBLE_EQ(detail::interp_levels(lev, {5.0, kInfCost, 7.0}, 2.0), 7.0);
}

TEST(BackwardSweepTest, TerminalCostIsZeroOnlyAtRest) {
    const RouteProfile r = flat_route(1, 10.0, 5.0, 0.0);
    DpGrid g;
    g.n_v = 6;
    g.n_u = 5;
    PlannerConfig cfg;
    cfg.mode = TransitionMode::snapped;
    const DpTables t = backward_sweep(r, g, kP, cfg);
    ASSERT_EQ(t.cost[1].size(), 6u);
    EXPECT_DOUBLE_EQ(t.cost[1][0], 0.0);
    for (std::size_t i = 1; i < 6; ++i) EXPECT_TRUE(std::isinf(t.cost[1][i]));
}

TEST(BackwardSweepTest, InfeasibleCellIsNamedInError) {
    RouteProfile r;
    r.ds = 10.0;
    r.grade = {0.0, 0.0};
    r.v_max = {1.0, 10.0, 12.0};
    r.v_min = {0.0, 9.0, 0.0};
    DpGrid g;
    g.n_v = 5;
    g.n_u = 5;
    PlannerConfig cfg;
    cfg.mode = TransitionMode::snapped;
    try {
        backward_sweep(r, g, kP, cfg);
        FAIL() << "expected InfeasibleError";
    } catch (const InfeasibleError& e) {
        EXPECT_NE(std::string(e.what()).find("cell 1"), std::string::npos);
    }
}

TEST(SnappedOracleTest, SweepMatchesExhaustiveEnumerationExactly) {
    int valid = 0;
    for (std::uint64_t seed = 1000; valid < 20 && seed < 1200; ++seed) {
        RouteProfile r;
        DpGrid g;
        PlannerConfig cfg;
        dporacle::random_instance(seed, r, g, cfg);

        DpTables t;
        try {
            t = backward_sweep(r, g, kP, cfg);
        } catch (const InfeasibleError&) {
            continue;
        }
        ++valid;

        const std::vector<double> inputs = g.input_levels();
        for (std::size_t k = 0; k <= r.n_cells(); ++k) {
            for (std::size_t i = 0; i < t.levels[k].size(); ++i) {
                const dporacle::Best ob =
                    dporacle::enumerate_best(r, kP, inputs, t.levels, cfg.gamma, k, i);
                ASSERT_EQ(t.cost[k][i], ob.cost) << "seed " << seed << " node " << k << " level " << i;
                if (k < r.n_cells()) {
                    if (std::isinf(ob.cost)) {
                        ASSERT_TRUE(std::isnan(t.policy[k][i]));
                    } else {
                        ASSERT_EQ(t.policy[k][i], ob.u) << "seed " << seed << " node " << k << " level " << i;
                    }
                }
            }
        }
    }
    ASSERT_GE(valid, 20);
}

// The interpolated sweep must satisfy its own Bellman recursion when the
// right-hand side is re-evaluated independently.
TEST(InterpolatedSweepTest, SatisfiesBellmanRecursion) {
    RouteProfile r = flat_route(4, 10.0, 12.0, 2.0);
    r.grade = {0.01, -0.02, 0.015, 0.0};
    DpGrid g;
    g.n_v = 9;
    g.n_u = 7;
    PlannerConfig cfg;
    cfg.gamma = 3.0;
    const DpTables t = backward_sweep(r, g, kP, cfg);
    for (std::size_t k = 0; k < r.n_cells(); ++k) {
        const double theta = std::asin(r.grade[k]);
        for (std::size_t i = 0; i < t.levels[k].size(); ++i) {
            const double v = t.levels[k][i];
            double best = kInfCost;
            for (double u : g.input_levels()) {
                const SpatialStep st = step_spatial(v, theta, u, kP, r.ds);
                if (st.stopped && k + 1 < r.n_cells()) continue;
                const double v2 = st.stopped ? 0.0 : st.v_next;
                if (v2 < r.v_min[k + 1] - 1e-9 || v2 > r.v_max[k + 1] + 1e-9) continue;
                const double fut = detail::interp_levels(t.levels[k + 1], t.cost[k + 1], v2);
                if (std::isinf(fut)) continue;
                best = std::min(best, stage_cost(v, u, r.v_max[k], cfg.gamma, r.ds) + fut);
            }
            ASSERT_EQ(t.cost[k][i], best) << "node " << k << " level " << i;
        }
    }
}

TEST(RolloutTest, StaysInCorridorAndReachesRest) {
    const GradeMap map({0.0, 600.0}, {0.01, 0.01});
    const RouteProfile r = make_route_const_bounds(map, 600.0, 10.0, 12.0, 100.0);
    DpGrid g;
    PlannerConfig cfg;
    cfg.gamma = 10.0;
    const DpTables t = backward_sweep(r, g, kP, cfg);
    const VelocityPlan plan = forward_rollout(t, r, g, kP, cfg, 0.0);

    ASSERT_EQ(plan.s.size(), r.n_nodes());
    ASSERT_EQ(plan.u.size(), r.n_cells());
    EXPECT_DOUBLE_EQ(plan.s.front(), 0.0);
    EXPECT_DOUBLE_EQ(plan.s.back(), 600.0);
    EXPECT_TRUE(plan.terminal_ok);
    EXPECT_GT(plan.energy_kwh, 0.0);
    EXPECT_GT(plan.trip_time_s, 600.0 / 12.0);
    const double spacing = 12.0 / static_cast<double>(g.n_v - 1);
    for (std::size_t k = 0; k < plan.v_ref.size(); ++k) {
        EXPECT_GE(plan.v_ref[k], r.v_min[k] - spacing);
        EXPECT_LE(plan.v_ref[k], r.v_max[k] + spacing);
    }
    for (double u : plan.u) {
        EXPECT_GE(u, g.u_min);
        EXPECT_LE(u, g.u_max);
    }
}

TEST(GammaTest, HigherGammaTradesEnergyForTime) {
    const GradeMap map({0.0, 800.0}, {0.0, 0.0});
    const RouteProfile r = make_route_const_bounds(map, 800.0, 10.0, 12.0, 100.0);
    DpGrid g;
    PlannerConfig lo, hi;
    lo.gamma = 0.1;
    hi.gamma = 10.0;
    const VelocityPlan plan_lo = forward_rollout(backward_sweep(r, g, kP, lo), r, g, kP, lo, 0.0);
    const VelocityPlan plan_hi = forward_rollout(backward_sweep(r, g, kP, hi), r, g, kP, hi, 0.0);
    EXPECT_LE(plan_lo.energy_kwh, plan_hi.energy_kwh + 1e-12);
    EXPECT_LE(plan_hi.trip_time_s, plan_lo.trip_time_s + 1e-9);
}

TEST(SpeedBoundsTest, LoadsAndDefaultsLowerBound) {
    testutil::TempDir tmp;
    const std::string path = tmp.path("b.csv");
    testutil::write_file(path, "arc_m,v_max_mps\n0,12\n500,16\n");
    const SpeedBounds b = load_speed_bounds(path);
    ASSERT_EQ(b.arc_m.size(), 2u);
    EXPECT_DOUBLE_EQ(b.v_min[0], 6.0);
    EXPECT_DOUBLE_EQ(b.v_min[1], 8.0);

    testutil::write_file(path, "arc_m,v_max_mps,v_min_mps\n0,12,3\n500,16,4\n");
    const SpeedBounds b3 = load_speed_bounds(path);
    EXPECT_DOUBLE_EQ(b3.v_min[1], 4.0);
}

TEST(SpeedBoundsTest, RejectsBadFiles) {
    testutil::TempDir tmp;
    const std::string path = tmp.path("b.csv");
    testutil::write_file(path, "arc_m,speed\n0,12\n500,16\n");
    EXPECT_THROW(load_speed_bounds(path), ConfigError);
    testutil::write_file(path, "arc_m,v_max_mps\n0,12\n");
    EXPECT_THROW(load_speed_bounds(path), ConfigError);
    testutil::write_file(path, "arc_m,v_max_mps\n0,12\n0,16\n");
    EXPECT_THROW(load_speed_bounds(path), ConfigError);
    testutil::write_file(path, "arc_m,v_max_mps\n0,12\n500,0\n");
    EXPECT_THROW(load_speed_bounds(path), ConfigError);
}

TEST(MakeRouteTest, TapersLowerBoundAndSamplesMidpointGrade) {
    const GradeMap map({0.0, 1000.0}, {0.0, 0.1});
    SpeedBounds b;
    b.arc_m = {0.0, 1000.0};
    b.v_max = {12.0, 12.0};
    b.v_min = {6.0, 6.0};
    const RouteProfile r = make_route(map, 1000.0, 10.0, b, 100.0);
    ASSERT_EQ(r.n_cells(), 100u);
    EXPECT_NEAR(r.grade[0], 0.0005, 1e-12);
    EXPECT_NEAR(r.grade[99], 0.0995, 1e-12);
    EXPECT_DOUBLE_EQ(r.v_min.front(), 0.0);
    EXPECT_DOUBLE_EQ(r.v_min.back(), 0.0);
    EXPECT_NEAR(r.v_min[5], 3.0, 1e-9);    // s = 50, half-tapered
    EXPECT_NEAR(r.v_min[50], 6.0, 1e-9);   // mid-route, full lower bound
    EXPECT_NEAR(r.v_min[95], 3.0, 1e-9);
    EXPECT_DOUBLE_EQ(r.v_max[50], 12.0);
}

TEST(MakeRouteTest, RejectsUncoveredRoute) {
    const GradeMap map({0.0, 1000.0}, {0.0, 0.0});
    SpeedBounds b;
    b.arc_m = {0.0, 500.0};
    b.v_max = {12.0, 12.0};
    b.v_min = {6.0, 6.0};
    EXPECT_THROW(make_route(map, 1000.0, 10.0, b, 100.0), ConfigError);
}

TEST(TaperedVmaxTest, RampsBothEnds) {
    const RouteProfile r = flat_route(3, 10.0, 12.0, 2.0);
    const std::vector<double> v = tapered_vmax_profile(r, 20.0);
    ASSERT_EQ(v.size(), 4u);
    EXPECT_DOUBLE_EQ(v[0], 0.0);
    EXPECT_DOUBLE_EQ(v[1], 6.0);
    EXPECT_DOUBLE_EQ(v[2], 6.0);
    EXPECT_DOUBLE_EQ(v[3], 0.0);
}

TEST(SpeedProfileTest, InverseDynamicsRecoverCruiseInput) {
    const RouteProfile r = flat_route(3, 10.0, 12.0, 2.0);
    const VelocityPlan plan = plan_from_speed_profile(r, kP, {10.0, 10.0, 10.0, 10.0});
    for (double u : plan.u) EXPECT_NEAR(u, 167.226, 1e-9);
    EXPECT_NEAR(plan.energy_kwh, 3.0 * 167.226 * 10.0 / kJoulePerKwh, 1e-12);
    EXPECT_NEAR(plan.trip_time_s, 3.0, 1e-12);
    EXPECT_THROW(plan_from_speed_profile(r, kP, {10.0, 10.0}), ConfigError);
    EXPECT_THROW(plan_from_speed_profile(r, kP, {0.0, 0.0, 0.0, 0.0}), ConfigError);
}

TEST(VRefAtTest, InterpolatesAndStopsPastEnd) {
    VelocityPlan plan;
    plan.s = {0.0, 10.0, 20.0};
    plan.v_ref = {5.0, 7.0, 9.0};
    EXPECT_DOUBLE_EQ(plan.v_ref_at(15.0), 8.0);
    EXPECT_DOUBLE_EQ(plan.v_ref_at(-5.0), 5.0);
    EXPECT_DOUBLE_EQ(plan.v_ref_at(20.0), 0.0);
    EXPECT_DOUBLE_EQ(plan.v_ref_at(25.0), 0.0);
}

TEST(PlanCsvTest, RoundTripsPlan) {
    testutil::TempDir tmp;
    const std::string path = tmp.path("plan.csv");
    const GradeMap map({0.0, 400.0}, {0.005, 0.005});
    const RouteProfile r = make_route_const_bounds(map, 400.0, 10.0, 10.0, 80.0);
    DpGrid g;
    PlannerConfig cfg;
    const VelocityPlan plan = forward_rollout(backward_sweep(r, g, kP, cfg), r, g, kP, cfg, 0.0);
    save_plan_csv(plan, path);
    const VelocityPlan back = load_plan_csv(path);
    ASSERT_EQ(back.s.size(), plan.s.size());
    ASSERT_EQ(back.u.size(), plan.u.size());
    EXPECT_NEAR(back.ds, plan.ds, 1e-9);
    for (std::size_t k = 0; k < plan.u.size(); ++k) EXPECT_NEAR(back.u[k], plan.u[k], 1e-6);
    for (std::size_t k = 0; k < plan.s.size(); ++k) {
        EXPECT_NEAR(back.v_ref[k], plan.v_ref[k], 1e-9);
        EXPECT_NEAR(back.cost_to_go[k], plan.cost_to_go[k], 1e-5);
    }
}

}  // namespace
