#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradenav/csv.hpp"
#include "gradenav/dp_planner.hpp"
#include "gradenav/ekf.hpp"
#include "gradenav/errors.hpp"
#include "gradenav/grade_map.hpp"
#include "gradenav/sensor_sim.hpp"
#include "gradenav/vehicle.hpp"

namespace gradenav {

/// Receding-horizon velocity tracker. Minimizes
///   sum_{k=1..N} (v_k - r_k)^2 + gamma_u * sum u_k^2 + w_term * (v_N - r_N)^2
/// subject to the longitudinal dynamics, box bounds on u, and (optionally)
/// speed-box penalties on v.
struct MpcConfig {
    int horizon = 5;
    double dt = 0.2;               // s
    double gamma_u = 1e-5;         // input effort weight
    double terminal_weight = 1e3;  // extra weight on the final tracking term
    double u_min = -3000.0;        // N
    double u_max = 3000.0;         // N
    double v_penalty = 1e6;        // quadratic penalty weight on speed-box violation
    int max_iter = 2000;
    double grad_tol = 1e-9;        // projected-gradient stationarity threshold

    void validate() const {
        if (horizon < 1) throw ConfigError("mpc: horizon must be >= 1");
        if (dt <= 0) throw ConfigError("mpc: dt must be > 0");
        if (gamma_u < 0 || terminal_weight < 0) throw ConfigError("mpc: weights must be >= 0");
        if (!(u_min < u_max)) throw ConfigError("mpc: need u_min < u_max");
    }
};

/// Per-step data the solver sees over the horizon. Entry k of `theta` is the
/// road angle used for the step from k to k+1; `r`, `v_lo`, `v_hi` are
/// per-node with index 0 informational only.
struct HorizonPreview {
    std::vector<double> s;      // predicted positions, N+1
    std::vector<double> r;      // reference speeds, N+1
    std::vector<double> theta;  // road angle per step, N
    std::vector<double> v_lo;   // speed box, N+1 (-inf when unconstrained)
    std::vector<double> v_hi;   // speed box, N+1 (+inf when unconstrained)
};

/// Constant-speed position extrapolation: step k is predicted at
/// s_hat + k*dt*v_now. Past the route end the reference is zero.
inline HorizonPreview build_preview(const VelocityPlan& plan, const GradeMap& map, double s_hat,
                                    double v_now, const MpcConfig& cfg) {
    const int N = cfg.horizon;
    HorizonPreview p;
    p.s.resize(N + 1);
    p.r.resize(N + 1);
    p.theta.resize(N);
    p.v_lo.assign(N + 1, -std::numeric_limits<double>::infinity());
    p.v_hi.assign(N + 1, std::numeric_limits<double>::infinity());
    for (int k = 0; k <= N; ++k) {
        p.s[k] = s_hat + static_cast<double>(k) * cfg.dt * v_now;
        p.r[k] = plan.v_ref_at(p.s[k]);
        if (k < N) p.theta[k] = std::asin(map.grade_at(p.s[k]));
    }
    return p;
}

struct MpcSolution {
    std::vector<double> u;       // N inputs
    std::vector<double> v;       // N+1 speeds from the clamped plant rollout
    double cost = 0.0;           // objective on the clamped rollout
    int iterations = 0;
    bool converged = false;
    bool bounds_ok = true;  // speed box satisfied to 1e-3 m/s on the rollout
};

namespace detail {

// smooth (unclamped) one-step model and its state sensitivity
inline double mpc_step(double v, double theta, double u, const VehicleParams& p, double dt) {
    return v + dt / p.m * (u + forces(v, theta, 0.0, p).total);
}

inline double mpc_step_dv(double v, const VehicleParams& p, double dt) {
    return 1.0 - dt / p.m * p.rho * p.C_d * p.A_f * v;
}

struct MpcCostParts {
    double total = 0.0;
    std::vector<double> v;  // N+1 smooth rollout
};

inline double box_penalty(double v, double lo, double hi, double w) {
    double pen = 0.0;
    if (v > hi) pen += w * (v - hi) * (v - hi);
    if (v < lo) pen += w * (lo - v) * (lo - v);
    return pen;
}

inline double box_penalty_grad(double v, double lo, double hi, double w) {
    double g = 0.0;
    if (v > hi) g += 2.0 * w * (v - hi);
    if (v < lo) g -= 2.0 * w * (lo - v);
    return g;
}

inline MpcCostParts mpc_smooth_cost(const std::vector<double>& u, double v0,
                                    const HorizonPreview& pre, const VehicleParams& params,
                                    const MpcConfig& cfg) {
    const int N = cfg.horizon;
    MpcCostParts out;
    out.v.resize(N + 1);
    out.v[0] = v0;
    for (int k = 0; k < N; ++k) out.v[k + 1] = mpc_step(out.v[k], pre.theta[k], u[k], params, cfg.dt);
    for (int k = 1; k <= N; ++k) {
        const double w = k == N ? 1.0 + cfg.terminal_weight : 1.0;
        const double e = out.v[k] - pre.r[k];
        out.total += w * e * e + box_penalty(out.v[k], pre.v_lo[k], pre.v_hi[k], cfg.v_penalty);
    }
    for (int k = 0; k < N; ++k) out.total += cfg.gamma_u * u[k] * u[k];
    return out;
}

// adjoint pass for the gradient of the smooth cost
inline std::vector<double> mpc_smooth_grad(const std::vector<double>& u,
                                           const std::vector<double>& v,
                                           const HorizonPreview& pre, const VehicleParams& params,
                                           const MpcConfig& cfg) {
    const int N = cfg.horizon;
    std::vector<double> grad(N);
    double lambda = 0.0;
    for (int k = N; k >= 1; --k) {
        const double w = k == N ? 1.0 + cfg.terminal_weight : 1.0;
        lambda += 2.0 * w * (v[k] - pre.r[k]) +
                  box_penalty_grad(v[k], pre.v_lo[k], pre.v_hi[k], cfg.v_penalty);
        grad[k - 1] = 2.0 * cfg.gamma_u * u[k - 1] + cfg.dt / params.m * lambda;
        lambda *= mpc_step_dv(v[k - 1], params, cfg.dt);
    }
    return grad;
}

}  // namespace detail

/// Solves the horizon problem by projected gradient descent on the smooth
/// model (Barzilai-Borwein steps with an Armijo backtracking safeguard).
/// The reported cost re-evaluates the objective on the clamped plant
/// rollout, which coincides with the model whenever v stays positive.
inline MpcSolution solve_mpc(double v0, const HorizonPreview& pre, const VehicleParams& params,
                             const MpcConfig& cfg,
                             const std::vector<double>* warm_start = nullptr) {
    cfg.validate();
    params.validate();
    const int N = cfg.horizon;
    if (static_cast<int>(pre.theta.size()) != N || static_cast<int>(pre.r.size()) != N + 1)
        throw ConfigError("mpc: preview size does not match the horizon");

    auto clamp_u = [&](std::vector<double>& u) {
        for (double& x : u) x = std::clamp(x, cfg.u_min, cfg.u_max);
    };

    std::vector<double> u(N, 0.0);
    if (warm_start && static_cast<int>(warm_start->size()) == N) u = *warm_start;
    clamp_u(u);

    auto parts = detail::mpc_smooth_cost(u, v0, pre, params, cfg);
    std::vector<double> grad = detail::mpc_smooth_grad(u, parts.v, pre, params, cfg);

    // initial step from a crude Lipschitz bound of the quadratic part
    const double b = cfg.dt / params.m;
    double step = 1.0 / (2.0 * cfg.gamma_u +
                         2.0 * (1.0 + cfg.terminal_weight) * b * b * static_cast<double>(N) + 1e-12);

    MpcSolution sol;
    std::vector<double> u_prev = u, grad_prev = grad;
    for (int it = 0; it < cfg.max_iter; ++it) {
        sol.iterations = it + 1;

        double stat = 0.0;  // ||u - proj(u - grad)||_inf
        for (int k = 0; k < N; ++k)
            stat = std::max(stat, std::abs(u[k] - std::clamp(u[k] - grad[k], cfg.u_min, cfg.u_max)));
        if (stat <= cfg.grad_tol) {
            sol.converged = true;
            break;
        }

        double alpha = step;
        std::vector<double> u_trial(N);
        double phi_trial = 0.0;
        detail::MpcCostParts parts_trial;
        for (int bt = 0; bt < 60; ++bt) {
            for (int k = 0; k < N; ++k)
                u_trial[k] = std::clamp(u[k] - alpha * grad[k], cfg.u_min, cfg.u_max);
            parts_trial = detail::mpc_smooth_cost(u_trial, v0, pre, params, cfg);
            phi_trial = parts_trial.total;
            double descent = 0.0;
            for (int k = 0; k < N; ++k) descent += grad[k] * (u[k] - u_trial[k]);
            if (phi_trial <= parts.total - 1e-4 * descent || alpha < 1e-16) break;
            alpha *= 0.5;
        }

        u_prev.swap(u);
        grad_prev.swap(grad);
        u = u_trial;
        const bool tiny_decrease = parts.total - phi_trial <= 1e-15 * (1.0 + std::abs(parts.total));
        parts = parts_trial;
        grad = detail::mpc_smooth_grad(u, parts.v, pre, params, cfg);

        if (tiny_decrease) {
            sol.converged = true;
            break;
        }

        double sy = 0.0, ss = 0.0;
        for (int k = 0; k < N; ++k) {
            const double du = u[k] - u_prev[k], dg = grad[k] - grad_prev[k];
            sy += du * dg;
            ss += du * du;
        }
        if (sy > 1e-300) step = std::clamp(ss / sy, 1e-6, 1e12);
    }

    if (!std::isfinite(parts.total)) throw NumericalError("mpc: cost diverged");

    // re-evaluate on the clamped plant
    sol.u = u;
    sol.v.resize(N + 1);
    sol.v[0] = v0;
    sol.cost = 0.0;
    for (int k = 0; k < N; ++k) {
        sol.v[k + 1] = step_time(sol.v[k], pre.theta[k], u[k], params, cfg.dt);
        sol.cost += cfg.gamma_u * u[k] * u[k];
    }
    for (int k = 1; k <= N; ++k) {
        const double w = k == N ? 1.0 + cfg.terminal_weight : 1.0;
        const double e = sol.v[k] - pre.r[k];
        sol.cost += w * e * e;
        if (sol.v[k] > pre.v_hi[k] + 1e-3 || sol.v[k] < pre.v_lo[k] - 1e-3) sol.bounds_ok = false;
    }
    return sol;
}

// ---------------------------------------------------------------------------
// Closed loop

/// Which position estimate feeds the controller.
struct LocalizerSpec {
    enum class Kind { truth, ekf, offset };
    Kind kind = Kind::truth;
    double offset_m = 0.0;

    /// Accepts "truth", "ekf", or "offset:<meters>".
    static LocalizerSpec parse(const std::string& text) {
        LocalizerSpec spec;
        if (text == "truth") {
            spec.kind = Kind::truth;
        } else if (text == "ekf") {
            spec.kind = Kind::ekf;
        } else if (text.rfind("offset:", 0) == 0) {
            spec.kind = Kind::offset;
            try {
                spec.offset_m = std::stod(text.substr(7));
            } catch (const std::exception&) {
                throw ConfigError("localizer: cannot parse offset in '" + text + "'");
            }
        } else {
            throw ConfigError("localizer: expected truth, ekf, or offset:<m>, got '" + text + "'");
        }
        return spec;
    }
};

struct ClosedLoopConfig {
    LocalizerSpec localizer;
    double launch_vref = 1.0;   // start where the reference first reaches this speed
    double stop_margin_m = 25.0;
    double stop_v = 0.3;        // m/s; with the margin, declares arrival
    double t_max = 7200.0;      // s, safety cutoff
    NoiseSpec noise;            // ekf localizer only
    EkfConfig ekf;              // ekf localizer only
};

struct ClosedLoopLog {
    std::vector<double> t, s_true, s_hat, v, v_ref, u, power;
};

struct ClosedLoopResult {
    ClosedLoopLog log;
    double dt = 0.2;
    double energy_kwh = 0.0;
    double time_s = 0.0;
    double tracking_rmse = 0.0;  // v against the logged reference
    double mean_ref_speed = 0.0;
    double position_rmse = 0.0;  // s_hat against s_true
    bool reached_end = false;
    int unconverged_steps = 0;
};

/// Runs plant + localizer + tracker from the launch point to the route end.
/// The plant always advances with the true grade; the controller only sees
/// the localizer's position, so a biased localizer previews the wrong part
/// of the grade map and reference.
inline ClosedLoopResult run_closed_loop(const VelocityPlan& plan, const GradeMap& map,
                                        const VehicleParams& params, const MpcConfig& mpc_cfg,
                                        const ClosedLoopConfig& cl) {
    mpc_cfg.validate();
    params.validate();
    const double L = plan.s.back();

    std::size_t k0 = 0;
    while (k0 < plan.v_ref.size() && plan.v_ref[k0] < cl.launch_vref) ++k0;
    if (k0 >= plan.v_ref.size())
        throw InfeasibleError("closed loop: reference never reaches the launch speed");

    double s = plan.s[k0];
    double v = plan.v_ref[k0];
    const double dt = mpc_cfg.dt;

    GaussianRng rng(cl.noise.seed);
    EkfEstimate est;
    est.mean << s, v;
    est.cov = cl.ekf.p0;

    ClosedLoopResult out;
    out.dt = dt;
    std::vector<double> warm(mpc_cfg.horizon, 0.0);
    double joules = 0.0, sq_err = 0.0, ref_sum = 0.0, pos_sq = 0.0;
    std::size_t n = 0;

    for (double t = 0.0; t < cl.t_max; t += dt) {
        double s_hat = s, v_hat = v;
        switch (cl.localizer.kind) {
            case LocalizerSpec::Kind::truth:
                break;
            case LocalizerSpec::Kind::offset:
                s_hat = s + cl.localizer.offset_m;
                break;
            case LocalizerSpec::Kind::ekf: {
                const double v_m = v + cl.noise.sigma_v * rng.normal();
                const double theta_m = std::asin(std::clamp(map.grade_at(s), -1.0, 1.0)) +
                                       cl.noise.sigma_theta * rng.normal();
                est = update(est, v_m, theta_m, map, cl.ekf).est;
                s_hat = est.s();
                v_hat = est.v();
                break;
            }
        }

        const HorizonPreview pre = build_preview(plan, map, s_hat, v_hat, mpc_cfg);
        const MpcSolution sol = solve_mpc(v_hat, pre, params, mpc_cfg, &warm);
        if (!sol.converged) ++out.unconverged_steps;
        warm = sol.u;
        std::rotate(warm.begin(), warm.begin() + 1, warm.end());
        warm.back() = warm[warm.size() - 2];

        const double u = sol.u[0];
        const double theta_true = std::asin(std::clamp(map.grade_at(s), -1.0, 1.0));
        const double v_next = step_time(v, theta_true, u, params, dt);
        const double p_w = wheel_power(v, u);
        const double r_now = pre.r[0];

        out.log.t.push_back(t);
        out.log.s_true.push_back(s);
        out.log.s_hat.push_back(s_hat);
        out.log.v.push_back(v);
        out.log.v_ref.push_back(r_now);
        out.log.u.push_back(u);
        out.log.power.push_back(p_w);
        joules += p_w * dt;
        sq_err += (v - r_now) * (v - r_now);
        pos_sq += (s_hat - s) * (s_hat - s);
        ref_sum += r_now;
        ++n;

        if (cl.localizer.kind == LocalizerSpec::Kind::ekf) {
            const double a_sensor = (v_next - v) / dt + kGravity * map.grade_at(s) +
                                    cl.noise.accel_noise_std * rng.normal() +
                                    cl.noise.bias_rate * t;
            est = predict(est, a_sensor, dt, map, cl.ekf);
        }

        s += 0.5 * (v + v_next) * dt;
        v = v_next;
        out.time_s = t + dt;
        if (s >= L || (s >= L - cl.stop_margin_m && v <= cl.stop_v)) {
            out.reached_end = true;
            break;
        }
        // a biased localizer can put the route end short of the true one; once
        // the vehicle has stopped with no reference ahead of its believed
        // position the drive is over, without arrival
        if (v <= cl.stop_v && plan.v_ref_at(s_hat) <= cl.stop_v) break;
    }

    out.energy_kwh = joules / kJoulePerKwh;
    if (n > 0) {
        out.tracking_rmse = std::sqrt(sq_err / static_cast<double>(n));
        out.position_rmse = std::sqrt(pos_sq / static_cast<double>(n));
        out.mean_ref_speed = ref_sum / static_cast<double>(n);
    }
    return out;
}

/// Wheel energy (kWh) spent while the true position lies in [s_a, s_b].
inline double segment_energy_kwh(const ClosedLoopResult& run, double s_a, double s_b) {
    if (!(s_a < s_b)) throw ConfigError("segment: need s_a < s_b");
    double joules = 0.0;
    for (std::size_t i = 0; i < run.log.t.size(); ++i)
        if (run.log.s_true[i] >= s_a && run.log.s_true[i] < s_b)
            joules += run.log.power[i] * run.dt;
    return joules / kJoulePerKwh;
}

/// CSV `t_s,s_true_m,s_hat_m,v_mps,v_ref_mps,u_N,power_W`.
inline void save_closed_loop_csv(const ClosedLoopResult& run, const std::string& path) {
    csv::Writer w(path);
    w.header({"t_s", "s_true_m", "s_hat_m", "v_mps", "v_ref_mps", "u_N", "power_W"});
    for (std::size_t i = 0; i < run.log.t.size(); ++i)
        w.row({run.log.t[i], run.log.s_true[i], run.log.s_hat[i], run.log.v[i], run.log.v_ref[i],
               run.log.u[i], run.log.power[i]});
}

inline nlohmann::json closed_loop_summary_json(const ClosedLoopResult& run) {
    return {{"energy_kwh", run.energy_kwh},
            {"time_s", run.time_s},
            {"tracking_rmse_mps", run.tracking_rmse},
            {"mean_ref_speed_mps", run.mean_ref_speed},
            {"position_rmse_m", run.position_rmse},
            {"reached_end", run.reached_end},
            {"unconverged_steps", run.unconverged_steps}};
}

}  // namespace gradenav
