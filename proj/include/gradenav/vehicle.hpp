#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "gradenav/errors.hpp"

namespace gradenav {

/// Longitudinal-dynamics constants. Defaults are a mid-size sedan.
struct VehicleParams {
    double m = 1360.0;    // kg
    double A_f = 2.30;    // m^2 frontal area
    double rho = 1.225;   // kg/m^3
    double C_d = 0.24;
    double C_r = 0.01;
    double g = 9.81;      // m/s^2
    double T_s = 0.2;     // s, controller/plant sampling time

    void validate() const {
        if (m <= 0 || A_f <= 0 || rho <= 0 || C_d <= 0 || C_r <= 0 || g <= 0 || T_s <= 0)
            throw ConfigError("vehicle params must all be positive");
    }
};

struct ForceBreakdown {
    double u = 0.0;        // traction minus brake, N
    double airdrag = 0.0;  // N
    double rolling = 0.0;  // N
    double gravity = 0.0;  // N
    double total = 0.0;    // u - airdrag - rolling - gravity
};

/// Longitudinal force balance at speed v on slope theta with input u.
inline ForceBreakdown forces(double v, double theta, double u, const VehicleParams& p) {
    ForceBreakdown f;
    f.u = u;
    f.airdrag = 0.5 * p.rho * p.C_d * p.A_f * v * v;
    f.rolling = p.m * p.g * p.C_r * std::cos(theta);
    f.gravity = p.m * p.g * std::sin(theta);
    f.total = u - f.airdrag - f.rolling - f.gravity;
    return f;
}

/// Euler step of m*dv/dt = F_total over dt. Speed clamps at zero so rolling
/// resistance never reverses a stopped vehicle (stiction).
inline double step_time(double v, double theta, double u, const VehicleParams& p, double dt) {
    const double f = forces(v, theta, u, p).total;
    return std::max(0.0, v + dt * f / p.m);
}

struct SpatialStep {
    double v_next = 0.0;
    bool stopped = false;  // radicand went non-positive: vehicle stops within the cell
};

/// Constant-acceleration step over a distance cell: v' = sqrt(v^2 + 2 ds F/m).
/// Well defined at v = 0, which the Euler spatial form is not.
inline SpatialStep step_spatial(double v, double theta, double u, const VehicleParams& p, double ds) {
    if (ds <= 0) throw ConfigError("step_spatial: ds must be > 0");
    const double f = forces(v, theta, u, p).total;
    const double radicand = v * v + 2.0 * ds * f / p.m;
    if (radicand <= 0.0) return {0.0, true};
    return {std::sqrt(radicand), false};
}

/// Instantaneous wheel power; only traction (u > 0) counts.
inline double wheel_power(double v, double u) { return v * std::max(u, 0.0); }

constexpr double kJoulePerKwh = 3.6e6;

/// Energy of a position-indexed plan: sum of u_p * ds over cells, in kWh.
inline double trip_energy_spatial(const std::vector<double>& u_per_cell, double ds) {
    double joules = 0.0;
    for (double u : u_per_cell) joules += std::max(u, 0.0) * ds;
    return joules / kJoulePerKwh;
}

/// Energy of a time-domain log: sum of power * dt, in kWh.
inline double trip_energy_time(const std::vector<double>& power_w, double dt) {
    double joules = 0.0;
    for (double p : power_w) joules += p * dt;
    return joules / kJoulePerKwh;
}

}  // namespace gradenav
