#include <gtest/gtest.h>

#include <cmath>

#include "gradenav/vehicle.hpp"

using namespace gradenav;

namespace {

const VehicleParams kP;  // defaults: m=1360, A_f=2.30, rho=1.225, C_d=0.24, C_r=0.01

TEST(ForcesTest, HandComputedBreakdownOnFlat) {
    const ForceBreakdown f = forces(10.0, 0.0, 2000.0, kP);
    EXPECT_NEAR(f.airdrag, 33.81, 1e-9);
    EXPECT_NEAR(f.rolling, 133.416, 1e-9);
    EXPECT_NEAR(f.gravity, 0.0, 1e-12);
    EXPECT_NEAR(f.total, 2000.0 - 33.81 - 133.416, 1e-9);
}

TEST(ForcesTest, HandComputedBreakdownOnGrade) {
    const double theta = std::asin(0.05);
    const ForceBreakdown f = forces(10.0, theta, 500.0, kP);
    EXPECT_NEAR(f.gravity, 667.08, 1e-9);
    EXPECT_NEAR(f.rolling, 133.416 * std::sqrt(1.0 - 0.05 * 0.05), 1e-9);
    EXPECT_NEAR(f.total, 500.0 - 33.81 - f.rolling - 667.08, 1e-9);
}

TEST(StepTimeTest, HandComputedEulerStep) {
    EXPECT_NEAR(step_time(10.0, 0.0, 2000.0, kP, 0.1), 10.1347628, 1e-6);
}

TEST(StepTimeTest, ClampsAtZeroSpeed) {
    EXPECT_DOUBLE_EQ(step_time(0.1, 0.0, 0.0, kP, 2.0), 0.0);
    EXPECT_DOUBLE_EQ(step_time(0.0, 0.0, 0.0, kP, 1.0), 0.0);
}

TEST(StepSpatialTest, HandComputedDecelOnGrade) {
    const SpatialStep s = step_spatial(10.0, std::asin(0.05), 500.0, kP, 10.0);
    EXPECT_FALSE(s.stopped);
    EXPECT_NEAR(s.v_next, 9.7512148, 1e-5);
}

TEST(StepSpatialTest, LaunchFromStandstill) {
    const SpatialStep s = step_spatial(0.0, 0.0, 3000.0, kP, 10.0);
    EXPECT_FALSE(s.stopped);
    const double expect = std::sqrt(2.0 * 10.0 * (3000.0 - 133.416) / 1360.0);
    EXPECT_NEAR(s.v_next, expect, 1e-12);
    EXPECT_NEAR(s.v_next, 6.4927, 1e-4);
}

TEST(StepSpatialTest, StopsWhenRadicandCollapses) {
    const SpatialStep s = step_spatial(1.0, 0.0, 0.0, kP, 10.0);
    EXPECT_TRUE(s.stopped);
    EXPECT_DOUBLE_EQ(s.v_next, 0.0);
}

TEST(StepSpatialTest, RejectsNonPositiveCell) {
    EXPECT_THROW(step_spatial(10.0, 0.0, 100.0, kP, 0.0), ConfigError);
    EXPECT_THROW(step_spatial(10.0, 0.0, 100.0, kP, -5.0), ConfigError);
}

// Fine-step Euler must track a coarse RK4 reference of the same ODE.
TEST(StepTimeTest, AgreesWithRk4Reference) {
    const double theta = 0.02, u = 800.0, T = 5.0;
    double v_euler = 15.0;
    const double dt_e = 1e-3;
    for (int k = 0; k < static_cast<int>(T / dt_e); ++k) v_euler = step_time(v_euler, theta, u, kP, dt_e);

    auto f = [&](double v) { return forces(v, theta, u, kP).total / kP.m; };
    double v_rk = 15.0;
    const double dt_r = 0.05;
    for (int k = 0; k < static_cast<int>(T / dt_r); ++k) {
        const double k1 = f(v_rk);
        const double k2 = f(v_rk + 0.5 * dt_r * k1);
        const double k3 = f(v_rk + 0.5 * dt_r * k2);
        const double k4 = f(v_rk + dt_r * k3);
        v_rk += dt_r / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    EXPECT_NEAR(v_euler, v_rk, 5e-3);
}

TEST(PowerTest, OnlyTractionCounts) {
    EXPECT_DOUBLE_EQ(wheel_power(10.0, 500.0), 5000.0);
    EXPECT_DOUBLE_EQ(wheel_power(10.0, -500.0), 0.0);
    EXPECT_DOUBLE_EQ(wheel_power(0.0, 500.0), 0.0);
}

TEST(EnergyTest, SpatialSumSkipsBraking) {
    EXPECT_NEAR(trip_energy_spatial({1000.0}, 1000.0), 0.2777778, 1e-6);
    EXPECT_NEAR(trip_energy_spatial({1000.0, -500.0, 1000.0}, 1000.0), 2.0e6 / kJoulePerKwh, 1e-12);
}

TEST(EnergyTest, TimeSumIntegratesPower) {
    EXPECT_NEAR(trip_energy_time({1000.0, 2000.0}, 0.5), 1500.0 / kJoulePerKwh, 1e-15);
}

TEST(VehicleParamsTest, ValidateRejectsNonPositive) {
    VehicleParams p;
    p.m = 0.0;
    EXPECT_THROW(p.validate(), ConfigError);
    p = VehicleParams{};
    p.C_d = -0.1;
    EXPECT_THROW(p.validate(), ConfigError);
    p = VehicleParams{};
    p.T_s = 0.0;
    EXPECT_THROW(p.validate(), ConfigError);
    EXPECT_NO_THROW(VehicleParams{}.validate());
}

}  // namespace
