#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gradenav/csv.hpp"
#include "gradenav/errors.hpp"
#include "gradenav/grade_map.hpp"

namespace gradenav {

constexpr double kGravity = 9.81;  // m/s^2

/// Deterministic Gaussian generator: mt19937_64 + Box-Muller, so a given
/// seed reproduces the same stream on any platform.
class GaussianRng {
public:
    explicit GaussianRng(std::uint64_t seed) : engine_(seed) {}

    double normal(double mean = 0.0, double std = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + std * spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return mean + std * r * std::cos(2.0 * M_PI * u2);
    }

    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Uniformly sampled wheel-speed and longitudinal-accelerometer readings.
struct SensorTrace {
    double dt = 0.1;  // s
    double t0 = 0.0;  // s
    std::vector<double> wheel_speed;  // m/s
    std::vector<double> accel;        // m/s^2, raw accelerometer (gravity-coupled)

    std::size_t size() const { return wheel_speed.size(); }
    double time_at(std::size_t k) const { return t0 + static_cast<double>(k) * dt; }

    void validate() const {
        if (wheel_speed.size() != accel.size()) throw ConfigError("sensor trace: channel length mismatch");
        if (dt <= 0) throw ConfigError("sensor trace: dt must be > 0");
        for (std::size_t k = 0; k < size(); ++k)
            if (!std::isfinite(wheel_speed[k]) || !std::isfinite(accel[k]))
                throw ConfigError("sensor trace: non-finite sample " + std::to_string(k));
    }
};

struct NoiseSpec {
    double sigma_v = 0.1;           // m/s wheel-speed noise std
    double sigma_theta = 0.01;      // rad inclination noise std (direct-theta synthesis)
    double accel_noise_std = 0.05;  // m/s^2
    double bias_rate = 0.0;         // m/s^2 per s, accelerometer drift rate at acceleration level
    double process_noise_q = 0.0025;  // (m/s^2)^2
    std::uint64_t seed = 1;

    void validate() const {
        if (sigma_v < 0 || sigma_theta < 0 || accel_noise_std < 0 || process_noise_q < 0)
            throw ConfigError("noise spec: standard deviations must be >= 0");
    }
};

/// Kinematic ground truth sampled at dt; position/velocity follow forward
/// Euler on the stored accelerations.
struct GroundTruth {
    double dt = 0.1;
    std::vector<double> position;  // m
    std::vector<double> velocity;  // m/s
    std::vector<double> accel;     // m/s^2, true longitudinal acceleration

    std::size_t size() const { return position.size(); }

    void validate(double tol = 1e-9) const {
        if (position.size() != velocity.size() || position.size() != accel.size())
            throw ConfigError("ground truth: length mismatch");
        for (std::size_t k = 0; k + 1 < size(); ++k) {
            if (std::abs(position[k + 1] - (position[k] + velocity[k] * dt)) > tol ||
                std::abs(velocity[k + 1] - (velocity[k] + accel[k] * dt)) > tol)
                throw ConfigError("ground truth: kinematic inconsistency at step " + std::to_string(k));
        }
    }
};

/// Integrates an acceleration program with forward Euler, the same
/// discretization the estimator assumes. Programs that would drive the
/// velocity negative are rejected.
inline GroundTruth simulate_truth(const std::vector<double>& accel_program, double dt, double v0,
                                  double s0 = 0.0) {
    if (accel_program.empty()) throw ConfigError("simulate_truth: empty acceleration program");
    if (dt <= 0) throw ConfigError("simulate_truth: dt must be > 0");
    GroundTruth g;
    g.dt = dt;
    const std::size_t n = accel_program.size();
    g.position.resize(n);
    g.velocity.resize(n);
    g.accel = accel_program;
    double s = s0, v = v0;
    for (std::size_t k = 0; k < n; ++k) {
        if (v < 0)
            throw ConfigError("simulate_truth: program drives velocity negative at step " + std::to_string(k));
        g.position[k] = s;
        g.velocity[k] = v;
        s += v * dt;
        v += accel_program[k] * dt;
    }
    return g;
}

/// Corrupts ground truth into sensor readings: the accelerometer picks up
/// g*p(s) gravity coupling, a linear bias ramp and white noise; the wheel
/// speed picks up white noise. Deterministic for a given seed.
inline SensorTrace synthesize_sensors(const GroundTruth& truth, const GradeMap& map,
                                      const NoiseSpec& noise, double t0 = 0.0) {
    noise.validate();
    GaussianRng rng(noise.seed);
    SensorTrace trace;
    trace.dt = truth.dt;
    trace.t0 = t0;
    const std::size_t n = truth.size();
    trace.wheel_speed.resize(n);
    trace.accel.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = t0 + static_cast<double>(k) * truth.dt;
        trace.accel[k] = truth.accel[k] + kGravity * map.grade_at(truth.position[k]) +
                         noise.bias_rate * t + rng.normal(0.0, noise.accel_noise_std);
        trace.wheel_speed[k] = truth.velocity[k] + rng.normal(0.0, noise.sigma_v);
    }
    return trace;
}

/// First-order exponential low-pass, y[0] = x[0].
inline std::vector<double> low_pass(const std::vector<double>& signal, double alpha) {
    if (signal.empty()) throw ConfigError("low_pass: empty signal");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("low_pass: alpha must be in (0, 1]");
    std::vector<double> y(signal.size());
    y[0] = signal[0];
    for (std::size_t k = 1; k < signal.size(); ++k)
        y[k] = alpha * signal[k] + (1.0 - alpha) * y[k - 1];
    return y;
}

enum class DiffMode {
    central,   // central differences interior, one-sided at the ends
    backward,  // causal backward differences (online use)
};

struct InclinationResult {
    std::vector<double> theta_rad;
    int clamp_count = 0;  // samples where |(a_sensor - v_dot)/g| exceeded 1
};

/// Indirect inclination from the sensor channels: v_dot is the numerical
/// derivative of the low-pass-filtered wheel speed, theta = asin((a - v_dot)/g)
/// with the asin argument clamped to [-1, 1]. The clamp count is reported so
/// callers can spot traces where transients dominated.
inline InclinationResult inclination_from_sensors(const SensorTrace& trace, double filter_alpha = 0.2,
                                                  DiffMode mode = DiffMode::central) {
    trace.validate();
    const std::size_t n = trace.size();
    if (n < 2) throw ConfigError("inclination_from_sensors: need >= 2 samples");
    const std::vector<double> v = low_pass(trace.wheel_speed, filter_alpha);

    std::vector<double> vdot(n);
    if (mode == DiffMode::central) {
        vdot[0] = (v[1] - v[0]) / trace.dt;
        vdot[n - 1] = (v[n - 1] - v[n - 2]) / trace.dt;
        for (std::size_t k = 1; k + 1 < n; ++k) vdot[k] = (v[k + 1] - v[k - 1]) / (2.0 * trace.dt);
    } else {
        vdot[0] = (v[1] - v[0]) / trace.dt;
        for (std::size_t k = 1; k < n; ++k) vdot[k] = (v[k] - v[k - 1]) / trace.dt;
    }

    InclinationResult r;
    r.theta_rad.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        double arg = (trace.accel[k] - vdot[k]) / kGravity;
        if (arg > 1.0 || arg < -1.0) {
            ++r.clamp_count;
            arg = std::clamp(arg, -1.0, 1.0);
        }
        r.theta_rad[k] = std::asin(arg);
    }
    return r;
}

/// Through-origin least squares of the slope error against time: the drift
/// rate b minimizing sum_k (e[k] - b t_k)^2 with t_k = k*dt from trace start.
/// Returned in rad/s (inclination level).
inline double fit_bias(const std::vector<double>& theta_measured,
                       const std::vector<double>& theta_reference, double dt) {
    if (theta_measured.size() != theta_reference.size())
        throw ConfigError("fit_bias: length mismatch");
    if (theta_measured.size() < 2) throw ConfigError("fit_bias: need >= 2 samples");
    if (dt <= 0) throw ConfigError("fit_bias: dt must be > 0");
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < theta_measured.size(); ++k) {
        const double t = static_cast<double>(k) * dt;
        num += t * (theta_measured[k] - theta_reference[k]);
        den += t * t;
    }
    if (den == 0.0) throw ConfigError("fit_bias: all sample times are zero");
    return num / den;
}

/// Subtracts the fitted inclination drift from the accelerometer channel:
/// accel[k] -= g * b * t_k (small-angle form of g*sin(b t)). With
/// b = bias_rate / g this exactly cancels the ramp synthesize_sensors injects.
inline SensorTrace remove_bias(const SensorTrace& trace, double bias_rad_per_s) {
    SensorTrace out = trace;
    for (std::size_t k = 0; k < out.size(); ++k)
        out.accel[k] -= kGravity * bias_rad_per_s * out.time_at(k);
    return out;
}

/// CSV `t_s,wheel_speed_mps,accel_mps2`; also the replay format for logged
/// real traces. Sample times must be uniform.
inline void save_trace_csv(const SensorTrace& trace, const std::string& path) {
    csv::Writer w(path);
    w.header({"t_s", "wheel_speed_mps", "accel_mps2"});
    for (std::size_t k = 0; k < trace.size(); ++k)
        w.row({trace.time_at(k), trace.wheel_speed[k], trace.accel[k]});
}

inline SensorTrace load_trace_csv(const std::string& path) {
    auto t = csv::read(path);
    const int ct = t.column("t_s"), cv = t.column("wheel_speed_mps"), ca = t.column("accel_mps2");
    if (ct < 0 || cv < 0 || ca < 0)
        throw ConfigError("'" + path + "': expected header t_s,wheel_speed_mps,accel_mps2");
    if (t.rows.size() < 2) throw ConfigError("'" + path + "': need >= 2 samples");
    SensorTrace trace;
    trace.t0 = t.rows.front()[ct];
    trace.dt = t.rows[1][ct] - t.rows[0][ct];
    if (trace.dt <= 0) throw ConfigError("'" + path + "': non-increasing time column");
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const double expect = trace.t0 + static_cast<double>(k) * trace.dt;
        if (std::abs(t.rows[k][ct] - expect) > 1e-6 * std::max(1.0, std::abs(expect)))
            throw ConfigError("'" + path + "': non-uniform sampling at row " + std::to_string(k));
        trace.wheel_speed.push_back(t.rows[k][cv]);
        trace.accel.push_back(t.rows[k][ca]);
    }
    trace.validate();
    return trace;
}

}  // namespace gradenav
