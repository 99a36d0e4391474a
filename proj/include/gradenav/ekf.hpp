#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gradenav/csv.hpp"
#include "gradenav/errors.hpp"
#include "gradenav/grade_map.hpp"
#include "gradenav/sensor_sim.hpp"

namespace gradenav {

/// Gaussian belief over (position, velocity).
struct EkfEstimate {
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();   // [s, v]
    Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();

    double s() const { return mean(0); }
    double v() const { return mean(1); }

    /// Symmetric positive semi-definite within tolerance.
    bool covariance_ok(double tol = 1e-10) const {
        if (std::abs(cov(0, 1) - cov(1, 0)) > tol * std::max(1.0, cov.cwiseAbs().maxCoeff()))
            return false;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
        return eig.eigenvalues().minCoeff() >= -tol;
    }
};

struct EkfConfig {
    double q = 0.0025;     // (m/s^2)^2 process noise variance
    double r_v = 0.01;     // (m/s)^2
    double r_theta = 1e-4; // rad^2
    Eigen::Matrix2d p0 = (Eigen::Matrix2d() << 1.0, 0.0, 0.0, 0.25).finished();
    double g = kGravity;

    void validate() const {
        if (q <= 0 || r_v <= 0 || r_theta <= 0)
            throw ConfigError("ekf config: q, r_v, r_theta must be > 0");
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(p0);
        if (eig.eigenvalues().minCoeff() < -1e-12) throw ConfigError("ekf config: p0 must be PSD");
    }
};

namespace detail {
inline Eigen::Matrix2d symmetrize(const Eigen::Matrix2d& m) { return 0.5 * (m + m.transpose()); }

// d/ds asin(p(s)) with the derivative capped near |p| = 1 (grades that steep
// are not traversable roads; the cap keeps transients finite).
inline double asin_jacobian_entry(const GradeMap& map, double s) {
    const double p = map.grade_at(s);
    const double dp = map.grade_slope_at(s);
    const double one_minus_p2 = std::max(1.0 - p * p, 1e-6);
    return dp / std::sqrt(one_minus_p2);
}
}  // namespace detail

/// Propagates the belief one step through the gravity-compensated kinematic
/// model: s' = s + v dt, v' = v + (a_sensor - g p(s)) dt. Covariance follows
/// the linearization F = [[1, dt], [-g p'(s) dt, 1]] with process noise
/// entering through G = [0, dt]^T.
inline EkfEstimate predict(const EkfEstimate& est, double a_sensor, double dt, const GradeMap& map,
                           const EkfConfig& cfg) {
    if (dt <= 0) throw ConfigError("ekf predict: dt must be > 0");
    const double s = est.mean(0), v = est.mean(1);

    EkfEstimate out;
    out.mean(0) = s + v * dt;
    out.mean(1) = v + (a_sensor - cfg.g * map.grade_at(s)) * dt;

    Eigen::Matrix2d F;
    F << 1.0, dt, -cfg.g * map.grade_slope_at(s) * dt, 1.0;
    const Eigen::Vector2d G(0.0, dt);
    out.cov = detail::symmetrize(F * est.cov * F.transpose() + G * cfg.q * G.transpose());
    return out;
}

struct UpdateResult {
    EkfEstimate est;
    Eigen::Vector2d innovation = Eigen::Vector2d::Zero();
    Eigen::Matrix2d innovation_cov = Eigen::Matrix2d::Zero();
    double nis = 0.0;      // innovation' * S^-1 * innovation
    bool skipped = false;  // singular innovation covariance; estimate passed through
};

/// Measurement update with y = [v_m, theta_m], h(x) = [v, asin(p(s))].
/// Joseph-form covariance update; innovation statistics are returned for
/// consistency (NIS) checks.
inline UpdateResult update(const EkfEstimate& est, double v_m, double theta_m, const GradeMap& map,
                           const EkfConfig& cfg) {
    const double s = est.mean(0), v = est.mean(1);
    const double p = map.grade_at(s);

    Eigen::Matrix2d H;
    H << 0.0, 1.0, detail::asin_jacobian_entry(map, s), 0.0;
    const Eigen::Matrix2d R = Eigen::Vector2d(cfg.r_v, cfg.r_theta).asDiagonal();

    UpdateResult r;
    r.innovation = Eigen::Vector2d(v_m - v, theta_m - std::asin(std::clamp(p, -1.0, 1.0)));
    r.innovation_cov = detail::symmetrize(H * est.cov * H.transpose() + R);

    const double det = r.innovation_cov.determinant();
    if (!(det > 1e-300) || !std::isfinite(det)) {
        r.est = est;
        r.skipped = true;
        return r;
    }
    const Eigen::Matrix2d S_inv = r.innovation_cov.inverse();
    const Eigen::Matrix2d K = est.cov * H.transpose() * S_inv;

    r.est.mean = est.mean + K * r.innovation;
    const Eigen::Matrix2d IKH = Eigen::Matrix2d::Identity() - K * H;
    r.est.cov = detail::symmetrize(IKH * est.cov * IKH.transpose() + K * R * K.transpose());
    r.nis = r.innovation.dot(S_inv * r.innovation);
    return r;
}

struct InclinationOptions {
    double filter_alpha = 0.2;
    DiffMode mode = DiffMode::central;
};

struct FilterRun {
    std::vector<EkfEstimate> estimates;  // one per sample, after that sample's update
    std::vector<double> nis;
    int clamp_count = 0;   // from the inclination derivation (0 when theta supplied)
    int skipped_updates = 0;
};

/// Runs update-then-predict over a whole trace. The inclination channel is
/// derived from the trace (expected bias-free) unless `theta_m` supplies a
/// pre-generated signal, as a simulation front end does.
inline FilterRun run_filter(const SensorTrace& trace, const GradeMap& map, const EkfConfig& cfg,
                            const EkfEstimate& init, const InclinationOptions& opts = {},
                            const std::optional<std::vector<double>>& theta_m = std::nullopt) {
    cfg.validate();
    trace.validate();
    if (trace.size() == 0) throw ConfigError("run_filter: empty trace");

    std::vector<double> theta;
    FilterRun run;
    if (theta_m) {
        if (theta_m->size() != trace.size()) throw ConfigError("run_filter: theta_m length mismatch");
        theta = *theta_m;
    } else {
        auto incl = inclination_from_sensors(trace, opts.filter_alpha, opts.mode);
        theta = std::move(incl.theta_rad);
        run.clamp_count = incl.clamp_count;
    }

    run.estimates.reserve(trace.size());
    run.nis.reserve(trace.size());
    EkfEstimate est = init;
    for (std::size_t k = 0; k < trace.size(); ++k) {
        UpdateResult u = update(est, trace.wheel_speed[k], theta[k], map, cfg);
        if (u.skipped) ++run.skipped_updates;
        run.estimates.push_back(u.est);
        run.nis.push_back(u.nis);
        est = predict(u.est, trace.accel[k], trace.dt, map, cfg);
    }
    return run;
}

/// Dead-reckoning baseline: left Riemann sum of the measured wheel speed.
/// Returns n+1 positions; entry k is the estimate at time t_k, so entry n is
/// the terminal position after the whole trace.
inline std::vector<double> integrate_velocity(const SensorTrace& trace, double s0) {
    std::vector<double> s(trace.size() + 1);
    s[0] = s0;
    for (std::size_t k = 0; k < trace.size(); ++k) s[k + 1] = s[k] + trace.wheel_speed[k] * trace.dt;
    return s;
}

/// CSV `t_s,s_hat_m,v_hat_mps,p11,p12,p22,nis`.
inline void save_estimates_csv(const FilterRun& run, double dt, double t0, const std::string& path) {
    csv::Writer w(path);
    w.header({"t_s", "s_hat_m", "v_hat_mps", "p11", "p12", "p22", "nis"});
    for (std::size_t k = 0; k < run.estimates.size(); ++k) {
        const auto& e = run.estimates[k];
        w.row({t0 + static_cast<double>(k) * dt, e.mean(0), e.mean(1), e.cov(0, 0), e.cov(0, 1),
               e.cov(1, 1), run.nis[k]});
    }
}

}  // namespace gradenav
