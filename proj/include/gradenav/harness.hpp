#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradenav/config.hpp"
#include "gradenav/dp_planner.hpp"
#include "gradenav/ekf.hpp"
#include "gradenav/errors.hpp"
#include "gradenav/grade_map.hpp"
#include "gradenav/mpc.hpp"
#include "gradenav/sensor_sim.hpp"
#include "gradenav/vehicle.hpp"

namespace gradenav {

// ---------------------------------------------------------------------------
// Small statistics helpers

inline double mean_of(const std::vector<double>& x) {
    if (x.empty()) throw ConfigError("mean of empty series");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double rmse_of(const std::vector<double>& e) {
    if (e.empty()) throw ConfigError("rmse of empty series");
    double s = 0.0;
    for (double v : e) s += v * v;
    return std::sqrt(s / static_cast<double>(e.size()));
}

inline double max_abs_of(const std::vector<double>& e) {
    double m = 0.0;
    for (double v : e) m = std::max(m, std::abs(v));
    return m;
}

/// Least-squares slope of y against t.
inline double ls_slope(const std::vector<double>& t, const std::vector<double>& y) {
    if (t.size() != y.size() || t.size() < 2) throw ConfigError("slope: need >= 2 paired samples");
    const double tm = mean_of(t), ym = mean_of(y);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        num += (t[i] - tm) * (y[i] - ym);
        den += (t[i] - tm) * (t[i] - tm);
    }
    if (den == 0.0) throw ConfigError("slope: degenerate time axis");
    return num / den;
}

/// Mean, sample SD, and the one-sample t statistic for H0: mean = 0.
struct SampleStats {
    double mean = 0.0;
    double sd = 0.0;
    int n = 0;

    double t_stat() const {
        if (n < 2 || sd == 0.0) return 0.0;
        return mean / (sd / std::sqrt(static_cast<double>(n)));
    }
};

inline SampleStats sample_stats(const std::vector<double>& xs) {
    SampleStats st;
    st.n = static_cast<int>(xs.size());
    if (xs.empty()) return st;
    st.mean = mean_of(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - st.mean) * (x - st.mean);
    if (st.n > 1) st.sd = std::sqrt(ss / static_cast<double>(st.n - 1));
    return st;
}

// ---------------------------------------------------------------------------
// Road construction

/// Declarative road description, either analytic or file-backed.
struct MapSpec {
    enum class Kind { flat, sine, polynomial, grade_csv, profile_csv, elevation_json };
    Kind kind = Kind::sine;
    double length = 5000.0;  // m, analytic kinds
    double spacing = 2.0;    // m, knot spacing for analytic kinds

    // sine elevation amplitude*sin(2*pi*s/wavelength + phase)
    double wavelength = 250.0;
    double amplitude = 3.5;
    double phase = 0.0;

    // polynomial elevation sum_i coeffs[i]*(s/scale)^i
    std::vector<double> coeffs;
    double scale = 1.0;

    std::string path;          // file-backed kinds
    int smoothing_window = 5;  // profile/elevation ingestion
};

inline MapSpec::Kind map_kind_from_string(const std::string& text) {
    if (text == "flat") return MapSpec::Kind::flat;
    if (text == "sine") return MapSpec::Kind::sine;
    if (text == "polynomial") return MapSpec::Kind::polynomial;
    if (text == "grade-csv") return MapSpec::Kind::grade_csv;
    if (text == "profile-csv") return MapSpec::Kind::profile_csv;
    if (text == "elevation-json") return MapSpec::Kind::elevation_json;
    throw ConfigError("map: unknown kind '" + text + "'");
}

namespace detail {

inline double polyval(const std::vector<double>& c, double x) {
    double y = 0.0;
    for (std::size_t i = c.size(); i-- > 0;) y = y * x + c[i];
    return y;
}

inline std::vector<double> polyder(const std::vector<double>& c) {
    if (c.size() <= 1) return {0.0};
    std::vector<double> d(c.size() - 1);
    for (std::size_t i = 1; i < c.size(); ++i) d[i - 1] = static_cast<double>(i) * c[i];
    return d;
}

inline GradeMap map_from_slope(double length, double spacing,
                               const std::function<double(double)>& slope) {
    if (length <= 0 || spacing <= 0) throw ConfigError("map: length and spacing must be > 0");
    const auto n = static_cast<std::size_t>(std::ceil(length / spacing));
    std::vector<double> arc(n + 1), grade(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        arc[i] = std::min(length, static_cast<double>(i) * spacing);
        const double m = slope(arc[i]);
        grade[i] = m / std::sqrt(1.0 + m * m);  // sin(atan(slope))
    }
    return GradeMap(arc, grade);
}

}  // namespace detail

inline GradeMap build_map(const MapSpec& spec) {
    switch (spec.kind) {
        case MapSpec::Kind::flat:
            return GradeMap({0.0, spec.length}, {0.0, 0.0});
        case MapSpec::Kind::sine: {
            const double w = 2.0 * M_PI / spec.wavelength;
            return detail::map_from_slope(spec.length, spec.spacing, [&](double s) {
                return spec.amplitude * w * std::cos(w * s + spec.phase);
            });
        }
        case MapSpec::Kind::polynomial: {
            if (spec.coeffs.empty()) throw ConfigError("map: polynomial needs coeffs");
            if (spec.scale <= 0) throw ConfigError("map: polynomial scale must be > 0");
            const std::vector<double> der = detail::polyder(spec.coeffs);
            return detail::map_from_slope(spec.length, spec.spacing, [&](double s) {
                return detail::polyval(der, s / spec.scale) / spec.scale;
            });
        }
        case MapSpec::Kind::grade_csv:
            return load_grade_csv(spec.path);
        case MapSpec::Kind::profile_csv:
            return from_elevation(load_profile_csv(spec.path), spec.smoothing_window);
        case MapSpec::Kind::elevation_json:
            return from_elevation(from_geo_samples(load_elevation_json(spec.path)),
                                  spec.smoothing_window);
    }
    throw ConfigError("map: unknown kind");
}

/// Monomial coefficients of the degree-n Chebyshev polynomial (first kind).
inline std::vector<double> chebyshev_coeffs(int n) {
    if (n < 0) throw ConfigError("chebyshev: order must be >= 0");
    std::vector<double> tkm1 = {1.0}, tk = {0.0, 1.0};
    if (n == 0) return tkm1;
    for (int k = 1; k < n; ++k) {
        std::vector<double> next(tk.size() + 1, 0.0);
        for (std::size_t i = 0; i < tk.size(); ++i) next[i + 1] += 2.0 * tk[i];
        for (std::size_t i = 0; i < tkm1.size(); ++i) next[i] -= tkm1[i];
        tkm1 = tk;
        tk = next;
    }
    return tk;
}

/// Elevation coefficients (in x = s/length) whose slope equioscillates:
/// dz/ds = amp * T_n(2x - 1). Produces an n-ripple hill sequence with a
/// uniform slope envelope, convenient for calibrated hilly test roads.
inline std::vector<double> hilly_elevation_coeffs(int n, double slope_amp, double length) {
    const std::vector<double> t = chebyshev_coeffs(n);
    // compose T_n(2x - 1) by accumulating powers of (2x - 1)
    std::vector<double> comp = {0.0};
    std::vector<double> pw = {1.0};  // (2x-1)^k
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (comp.size() < pw.size()) comp.resize(pw.size(), 0.0);
        for (std::size_t i = 0; i < pw.size(); ++i) comp[i] += t[k] * pw[i];
        std::vector<double> nxt(pw.size() + 1, 0.0);
        for (std::size_t i = 0; i < pw.size(); ++i) {
            nxt[i + 1] += 2.0 * pw[i];
            nxt[i] -= pw[i];
        }
        pw = nxt;
    }
    // z(s) = length * amp * integral of the composed slope in x
    std::vector<double> z(comp.size() + 1, 0.0);
    for (std::size_t i = 0; i < comp.size(); ++i)
        z[i + 1] = length * slope_amp * comp[i] / static_cast<double>(i + 1);
    return z;
}

// ---------------------------------------------------------------------------
// Localization experiments

// independent rng streams per run are derived from the run seed
constexpr std::uint64_t kThetaStreamSalt = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kInitStreamSalt = 0xD1B54A32D192ED03ull;

struct LocalizationSetup {
    MapSpec map;
    NoiseSpec noise;
    EkfConfig ekf;
    double dt = 0.1;         // s
    double duration = 100.0; // s
    double v0 = 7.0;         // m/s
    double s0 = 0.0;         // m
    double accel_amp = 0.25;    // drive program a(t) = amp*sin(2*pi*t/period)
    double accel_period = 40.0; // s
    bool theta_direct = true;   // synthesize the inclination channel from the map
    InclinationOptions incl;    // when deriving it from the accelerometer instead
    int runs = 10;
    std::uint64_t base_seed = 1;
};

struct LocalizationRun {
    std::uint64_t seed = 0;
    std::vector<double> t;
    std::vector<double> err_ekf;  // estimate - truth, m
    std::vector<double> err_int;  // integrated wheel speed - truth, m
    double rmse_ekf = 0, rmse_int = 0;
    double max_ekf = 0, max_int = 0;
    double final_ekf = 0, final_int = 0;
    double mean_nis = 0;
    int skipped_updates = 0;
    bool cov_ok = true;
};

/// Everything a single seed produces, for replay or CSV export.
struct LocalizationArtifacts {
    GroundTruth truth;
    SensorTrace trace;
    EkfEstimate init;
    FilterRun filter;
    std::vector<double> s_integrated;
};

/// One seed: simulate truth, synthesize sensors, run the filter and the
/// dead-reckoning baseline from the same drawn initial position.
inline LocalizationArtifacts run_localization_artifacts(const GradeMap& map,
                                                        const LocalizationSetup& setup,
                                                        std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(std::llround(setup.duration / setup.dt));
    if (n < 2) throw ConfigError("localization: duration too short");

    std::vector<double> program(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double t = static_cast<double>(k) * setup.dt;
        program[k] = setup.accel_amp * std::sin(2.0 * M_PI * t / setup.accel_period);
    }

    LocalizationArtifacts art;
    art.truth = simulate_truth(program, setup.dt, setup.v0, setup.s0);

    NoiseSpec noise = setup.noise;
    noise.seed = seed;
    art.trace = synthesize_sensors(art.truth, map, noise);

    std::optional<std::vector<double>> theta;
    if (setup.theta_direct) {
        GaussianRng trng(seed ^ kThetaStreamSalt);
        std::vector<double> th(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double p = std::clamp(map.grade_at(art.truth.position[k]), -1.0, 1.0);
            th[k] = std::asin(p) + noise.sigma_theta * trng.normal();
        }
        theta = std::move(th);
    }

    GaussianRng irng(seed ^ kInitStreamSalt);
    art.init.mean << art.truth.position[0] + std::sqrt(setup.ekf.p0(0, 0)) * irng.normal(),
        art.truth.velocity[0] + std::sqrt(setup.ekf.p0(1, 1)) * irng.normal();
    art.init.cov = setup.ekf.p0;

    art.filter = run_filter(art.trace, map, setup.ekf, art.init, setup.incl, theta);
    art.s_integrated = integrate_velocity(art.trace, art.init.mean(0));
    return art;
}

inline LocalizationRun run_localization_once(const GradeMap& map, const LocalizationSetup& setup,
                                             std::uint64_t seed) {
    const LocalizationArtifacts art = run_localization_artifacts(map, setup, seed);
    const GroundTruth& truth = art.truth;
    const SensorTrace& trace = art.trace;
    const FilterRun& fr = art.filter;
    const std::vector<double>& s_int = art.s_integrated;
    const std::size_t n = trace.size();

    LocalizationRun out;
    out.seed = seed;
    out.skipped_updates = fr.skipped_updates;
    out.t.resize(n);
    out.err_ekf.resize(n);
    out.err_int.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        out.t[k] = trace.time_at(k);
        out.err_ekf[k] = fr.estimates[k].s() - truth.position[k];
        out.err_int[k] = s_int[k] - truth.position[k];
        if (!fr.estimates[k].covariance_ok()) out.cov_ok = false;
    }
    out.rmse_ekf = rmse_of(out.err_ekf);
    out.rmse_int = rmse_of(out.err_int);
    out.max_ekf = max_abs_of(out.err_ekf);
    out.max_int = max_abs_of(out.err_int);
    out.final_ekf = std::abs(out.err_ekf.back());
    out.final_int = std::abs(out.err_int.back());
    out.mean_nis = fr.nis.empty() ? 0.0 : mean_of(fr.nis);
    return out;
}

struct LocalizationReport {
    std::vector<LocalizationRun> runs;
    double avg_rmse_ekf = 0, avg_rmse_int = 0, rmse_ratio = 0;
    double avg_final_ekf = 0, avg_final_int = 0, final_ratio = 0;
    double avg_max_ekf = 0, avg_max_int = 0;
    double avg_nis = 0;
    SampleStats slope_ekf, slope_int;  // per-run |error| slopes across seeds
    int skipped_updates_total = 0;
    bool cov_ok = true;
};

/// Monte Carlo over seeds base_seed .. base_seed+runs-1, one thread each.
inline LocalizationReport run_localization_mc(const LocalizationSetup& setup) {
    if (setup.runs < 1) throw ConfigError("localization: runs must be >= 1");
    const GradeMap map = build_map(setup.map);

    std::vector<std::future<LocalizationRun>> futs;
    futs.reserve(setup.runs);
    for (int i = 0; i < setup.runs; ++i) {
        const std::uint64_t seed = setup.base_seed + static_cast<std::uint64_t>(i);
        futs.push_back(std::async(std::launch::async,
                                  [&map, &setup, seed] { return run_localization_once(map, setup, seed); }));
    }

    LocalizationReport rep;
    std::vector<double> sl_ekf, sl_int;
    for (auto& f : futs) {
        rep.runs.push_back(f.get());
        const LocalizationRun& r = rep.runs.back();
        rep.avg_rmse_ekf += r.rmse_ekf;
        rep.avg_rmse_int += r.rmse_int;
        rep.avg_final_ekf += r.final_ekf;
        rep.avg_final_int += r.final_int;
        rep.avg_max_ekf += r.max_ekf;
        rep.avg_max_int += r.max_int;
        rep.avg_nis += r.mean_nis;
        rep.skipped_updates_total += r.skipped_updates;
        rep.cov_ok = rep.cov_ok && r.cov_ok;
        std::vector<double> abs_e(r.err_ekf.size()), abs_i(r.err_int.size());
        for (std::size_t k = 0; k < r.err_ekf.size(); ++k) {
            abs_e[k] = std::abs(r.err_ekf[k]);
            abs_i[k] = std::abs(r.err_int[k]);
        }
        sl_ekf.push_back(ls_slope(r.t, abs_e));
        sl_int.push_back(ls_slope(r.t, abs_i));
    }
    const auto nr = static_cast<double>(rep.runs.size());
    rep.avg_rmse_ekf /= nr;
    rep.avg_rmse_int /= nr;
    rep.avg_final_ekf /= nr;
    rep.avg_final_int /= nr;
    rep.avg_max_ekf /= nr;
    rep.avg_max_int /= nr;
    rep.avg_nis /= nr;
    rep.rmse_ratio = rep.avg_rmse_ekf > 0 ? rep.avg_rmse_int / rep.avg_rmse_ekf : 0.0;
    rep.final_ratio = rep.avg_final_ekf > 0 ? rep.avg_final_int / rep.avg_final_ekf : 0.0;
    rep.slope_ekf = sample_stats(sl_ekf);
    rep.slope_int = sample_stats(sl_int);
    return rep;
}

inline nlohmann::json localization_report_json(const LocalizationReport& rep) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : rep.runs)
        runs.push_back({{"seed", r.seed},
                        {"rmse_ekf_m", r.rmse_ekf},
                        {"rmse_integration_m", r.rmse_int},
                        {"max_ekf_m", r.max_ekf},
                        {"max_integration_m", r.max_int},
                        {"final_ekf_m", r.final_ekf},
                        {"final_integration_m", r.final_int},
                        {"mean_nis", r.mean_nis}});
    return {{"runs", runs},
            {"avg_rmse_ekf_m", rep.avg_rmse_ekf},
            {"avg_rmse_integration_m", rep.avg_rmse_int},
            {"rmse_ratio", rep.rmse_ratio},
            {"avg_final_ekf_m", rep.avg_final_ekf},
            {"avg_final_integration_m", rep.avg_final_int},
            {"final_ratio", rep.final_ratio},
            {"avg_max_ekf_m", rep.avg_max_ekf},
            {"avg_max_integration_m", rep.avg_max_int},
            {"avg_nis", rep.avg_nis},
            {"abs_error_slope_ekf", {{"mean", rep.slope_ekf.mean}, {"sd", rep.slope_ekf.sd}, {"t", rep.slope_ekf.t_stat()}}},
            {"abs_error_slope_integration",
             {{"mean", rep.slope_int.mean}, {"sd", rep.slope_int.sd}, {"t", rep.slope_int.t_stat()}}},
            {"skipped_updates", rep.skipped_updates_total},
            {"covariance_ok", rep.cov_ok}};
}

inline void write_localization_text(const LocalizationReport& rep, std::ostream& os) {
    os << std::fixed << std::setprecision(3);
    os << "position error over " << rep.runs.size() << " runs (m)\n";
    os << "  " << std::left << std::setw(22) << "method" << std::right << std::setw(9) << "rmse"
       << std::setw(9) << "max" << std::setw(9) << "final" << "\n";
    os << "  " << std::left << std::setw(22) << "velocity integration" << std::right << std::setw(9)
       << rep.avg_rmse_int << std::setw(9) << rep.avg_max_int << std::setw(9) << rep.avg_final_int
       << "\n";
    os << "  " << std::left << std::setw(22) << "grade-aided ekf" << std::right << std::setw(9)
       << rep.avg_rmse_ekf << std::setw(9) << rep.avg_max_ekf << std::setw(9) << rep.avg_final_ekf
       << "\n";
    os << "  rmse ratio " << rep.rmse_ratio << "x, final ratio " << rep.final_ratio
       << "x, mean nis " << rep.avg_nis << "\n";
    os << "  |error| slope t-stats: integration " << rep.slope_int.t_stat() << ", ekf "
       << rep.slope_ekf.t_stat() << "\n";
}

// ---------------------------------------------------------------------------
// Planning and tracking experiments

struct PlanSetup {
    MapSpec map;
    double length = 5000.0;  // m
    double ds = 10.0;        // m
    double v_max = 0.0;      // constant bound when no explicit bounds are given
    SpeedBounds bounds;      // inline bounds (used when non-empty)
    std::string bounds_path; // CSV bounds (highest priority)
    double taper_m = 150.0;
    DpGrid grid;
    PlannerConfig planner;
    VehicleParams vehicle;
};

inline RouteProfile build_route(const PlanSetup& setup, const GradeMap& map) {
    if (!setup.bounds_path.empty())
        return make_route(map, setup.length, setup.ds, load_speed_bounds(setup.bounds_path),
                          setup.taper_m);
    if (!setup.bounds.arc_m.empty())
        return make_route(map, setup.length, setup.ds, setup.bounds, setup.taper_m);
    if (setup.v_max <= 0)
        throw ConfigError("plan: need a bounds file, inline bounds, or v_max > 0");
    return make_route_const_bounds(map, setup.length, setup.ds, setup.v_max, setup.taper_m);
}

inline VelocityPlan run_plan(const PlanSetup& setup, const GradeMap& map,
                             const RouteProfile& route) {
    const DpTables tables = backward_sweep(route, setup.grid, setup.vehicle, setup.planner);
    return forward_rollout(tables, route, setup.grid, setup.vehicle, setup.planner, 0.0);
}

inline VelocityPlan run_plan(const PlanSetup& setup) {
    const GradeMap map = build_map(setup.map);
    const RouteProfile route = build_route(setup, map);
    return run_plan(setup, map, route);
}

/// Sweep-of-gamma comparison against driving the (tapered) upper bound.
struct PlanStudy {
    VelocityPlan gamma_lo;
    VelocityPlan gamma_hi;
    VelocityPlan bound_ref;
    double saving_hi_pct = 0.0;  // energy saved by gamma_hi vs the bound profile
};

inline PlanStudy run_plan_study(const PlanSetup& base, double gamma_lo, double gamma_hi) {
    const GradeMap map = build_map(base.map);
    const RouteProfile route = build_route(base, map);

    PlanSetup lo = base, hi = base;
    lo.planner.gamma = gamma_lo;
    hi.planner.gamma = gamma_hi;

    PlanStudy study;
    study.gamma_lo = run_plan(lo, map, route);
    study.gamma_hi = run_plan(hi, map, route);
    study.bound_ref = plan_from_speed_profile(route, base.vehicle,
                                              tapered_vmax_profile(route, base.taper_m));
    study.bound_ref.gamma = std::numeric_limits<double>::quiet_NaN();
    if (study.bound_ref.energy_kwh > 0)
        study.saving_hi_pct =
            100.0 * (study.bound_ref.energy_kwh - study.gamma_hi.energy_kwh) /
            study.bound_ref.energy_kwh;
    return study;
}

inline nlohmann::json plan_study_json(const PlanStudy& s) {
    auto entry = [](const VelocityPlan& p) {
        return nlohmann::json{{"energy_kwh", p.energy_kwh},
                              {"trip_time_min", p.trip_time_s / 60.0}};
    };
    nlohmann::json j = {{"gamma_lo", entry(s.gamma_lo)},
                        {"gamma_hi", entry(s.gamma_hi)},
                        {"drive_at_bound", entry(s.bound_ref)},
                        {"saving_hi_pct", s.saving_hi_pct}};
    j["gamma_lo"]["gamma"] = s.gamma_lo.gamma;
    j["gamma_hi"]["gamma"] = s.gamma_hi.gamma;
    return j;
}

struct TrackSetup {
    PlanSetup plan;
    MpcConfig mpc;
    ClosedLoopConfig loop;
};

struct TrackResult {
    VelocityPlan plan;
    ClosedLoopResult loop;
};

inline TrackResult run_track(const TrackSetup& setup) {
    const GradeMap map = build_map(setup.plan.map);
    const RouteProfile route = build_route(setup.plan, map);
    TrackResult out;
    out.plan = run_plan(setup.plan, map, route);
    out.loop = run_closed_loop(out.plan, map, setup.plan.vehicle, setup.mpc, setup.loop);
    return out;
}

/// Same plan tracked twice, with an exact and a biased localizer; energy is
/// compared over a window of true positions.
struct OffsetSetup {
    TrackSetup track;  // localizer for the reference run
    double offset_m = 60.0;
    double seg_a = 600.0;
    double seg_b = 1600.0;
};

struct OffsetResult {
    double energy_ref_kwh = 0.0;
    double energy_off_kwh = 0.0;
    double delta_pct = 0.0;
    ClosedLoopResult ref_run, off_run;
};

inline OffsetResult run_energy_vs_offset(const OffsetSetup& setup) {
    const GradeMap map = build_map(setup.track.plan.map);
    const RouteProfile route = build_route(setup.track.plan, map);
    const VelocityPlan plan = run_plan(setup.track.plan, map, route);

    ClosedLoopConfig ref_cfg = setup.track.loop;
    ref_cfg.localizer = LocalizerSpec{};  // truth
    ClosedLoopConfig off_cfg = setup.track.loop;
    off_cfg.localizer.kind = LocalizerSpec::Kind::offset;
    off_cfg.localizer.offset_m = setup.offset_m;

    OffsetResult out;
    out.ref_run = run_closed_loop(plan, map, setup.track.plan.vehicle, setup.track.mpc, ref_cfg);
    out.off_run = run_closed_loop(plan, map, setup.track.plan.vehicle, setup.track.mpc, off_cfg);
    out.energy_ref_kwh = segment_energy_kwh(out.ref_run, setup.seg_a, setup.seg_b);
    out.energy_off_kwh = segment_energy_kwh(out.off_run, setup.seg_a, setup.seg_b);
    if (out.energy_ref_kwh <= 0)
        throw NumericalError("offset study: reference segment consumed no energy");
    out.delta_pct = 100.0 * (out.energy_off_kwh - out.energy_ref_kwh) / out.energy_ref_kwh;
    return out;
}

inline nlohmann::json offset_result_json(const OffsetSetup& setup, const OffsetResult& r) {
    return {{"offset_m", setup.offset_m},
            {"segment", {setup.seg_a, setup.seg_b}},
            {"energy_ref_kwh", r.energy_ref_kwh},
            {"energy_offset_kwh", r.energy_off_kwh},
            {"delta_pct", r.delta_pct}};
}

// ---------------------------------------------------------------------------
// Named presets

/// 1.2 km road whose slope equioscillates (9 ripples), short calibrated
/// drive used for the headline accuracy comparison.
inline LocalizationSetup preset_table1() {
    LocalizationSetup s;
    s.map.kind = MapSpec::Kind::polynomial;
    s.map.length = 1200.0;
    s.map.spacing = 1.0;
    s.map.scale = 1200.0;
    s.map.coeffs = hilly_elevation_coeffs(9, 0.12, 1200.0);
    s.noise.sigma_v = 0.25;
    s.noise.sigma_theta = 0.004;
    s.noise.accel_noise_std = 0.05;
    s.noise.bias_rate = 0.0;
    s.ekf.q = s.noise.accel_noise_std * s.noise.accel_noise_std;
    s.ekf.r_v = s.noise.sigma_v * s.noise.sigma_v;
    s.ekf.r_theta = s.noise.sigma_theta * s.noise.sigma_theta;
    s.ekf.p0 = (Eigen::Matrix2d() << 0.25, 0.0, 0.0, 0.25).finished();
    s.dt = 0.1;
    s.duration = 140.0;
    s.v0 = 7.0;
    s.runs = 10;
    return s;
}

/// Long rolling road for drift studies; duration selects the horizon.
inline LocalizationSetup preset_drift(double duration_s = 500.0) {
    LocalizationSetup s;
    s.map.kind = MapSpec::Kind::sine;
    s.map.length = 16000.0;
    s.map.spacing = 2.0;
    s.map.wavelength = 250.0;
    s.map.amplitude = 3.5;
    s.noise.sigma_v = 0.35;
    s.noise.sigma_theta = 0.004;
    s.noise.accel_noise_std = 0.05;
    s.ekf.q = s.noise.accel_noise_std * s.noise.accel_noise_std;
    s.ekf.r_v = s.noise.sigma_v * s.noise.sigma_v;
    s.ekf.r_theta = s.noise.sigma_theta * s.noise.sigma_theta;
    s.ekf.p0 = (Eigen::Matrix2d() << 0.25, 0.0, 0.0, 0.25).finished();
    s.dt = 0.1;
    s.duration = duration_s;
    s.v0 = 11.0;
    s.runs = 20;
    return s;
}

/// 5 km route with stepped speed limits over rolling terrain.
inline PlanSetup preset_plan_5km(double gamma = 10.0) {
    PlanSetup p;
    p.map.kind = MapSpec::Kind::sine;
    p.map.length = 5200.0;
    p.map.spacing = 2.0;
    p.map.wavelength = 600.0;
    p.map.amplitude = 6.0;
    p.length = 5000.0;
    p.ds = 10.0;
    p.taper_m = 150.0;
    p.bounds.arc_m = {0, 900, 1100, 1900, 2100, 2900, 3100, 3900, 4100, 5000};
    p.bounds.v_max = {12, 12, 15, 15, 10, 10, 14, 14, 11, 11};
    p.bounds.v_min.clear();
    for (double v : p.bounds.v_max) p.bounds.v_min.push_back(v / 2.0);
    p.grid.n_v = 41;
    p.grid.n_u = 241;  // 25 N spacing; coarser grids cannot hold a cruise force
    p.planner.gamma = gamma;
    return p;
}

inline TrackSetup preset_track_5km() {
    TrackSetup t;
    t.plan = preset_plan_5km(10.0);
    // the preview extrapolates position at constant speed, so a short horizon
    // tracks the burst-and-coast reference more faithfully than a long one
    t.mpc.horizon = 3;
    t.loop.localizer.kind = LocalizerSpec::Kind::truth;
    return t;
}

/// Short rolling segment with a constant limit; the comparison window sits
/// well inside the route so launch and arrival transients stay outside it.
inline OffsetSetup preset_offset_hilly() {
    OffsetSetup o;
    o.track.plan.map.kind = MapSpec::Kind::sine;
    o.track.plan.map.length = 2600.0;
    o.track.plan.map.spacing = 2.0;
    o.track.plan.map.wavelength = 250.0;
    o.track.plan.map.amplitude = 3.2;  // slope amplitude 0.08
    o.track.plan.length = 2400.0;
    o.track.plan.ds = 10.0;
    // tight corridor: the reference cruises steadily, so the window energy
    // responds to the localizer bias and not to reference phasing
    o.track.plan.bounds.arc_m = {0.0, 2400.0};
    o.track.plan.bounds.v_max = {13.0, 13.0};
    o.track.plan.bounds.v_min = {11.5, 11.5};
    o.track.plan.taper_m = 150.0;
    o.track.plan.grid.n_u = 241;  // fine enough to cruise steadily
    o.track.plan.planner.gamma = 10.0;
    o.track.loop.localizer.kind = LocalizerSpec::Kind::truth;
    o.offset_m = 60.0;
    o.seg_a = 600.0;
    o.seg_b = 1600.0;
    return o;
}

inline OffsetSetup preset_offset_flat() {
    OffsetSetup o = preset_offset_hilly();
    o.track.plan.map.kind = MapSpec::Kind::flat;
    o.track.plan.map.length = 2600.0;
    return o;
}

// ---------------------------------------------------------------------------
// Config-file overrides

inline void apply_map_config(const Config& c, MapSpec& m) {
    if (c.has("map", "kind")) m.kind = map_kind_from_string(c.string_or("map", "kind", ""));
    m.length = c.number_or("map", "length", m.length);
    m.spacing = c.number_or("map", "spacing", m.spacing);
    m.wavelength = c.number_or("map", "wavelength", m.wavelength);
    m.amplitude = c.number_or("map", "amplitude", m.amplitude);
    m.phase = c.number_or("map", "phase", m.phase);
    m.coeffs = c.numbers_or("map", "coeffs", m.coeffs);
    m.scale = c.number_or("map", "scale", m.scale);
    m.path = c.string_or("map", "path", m.path);
    m.smoothing_window = static_cast<int>(c.integer_or("map", "smoothing_window", m.smoothing_window));
}

inline void apply_noise_config(const Config& c, NoiseSpec& n) {
    n.sigma_v = c.number_or("noise", "sigma_v", n.sigma_v);
    n.sigma_theta = c.number_or("noise", "sigma_theta", n.sigma_theta);
    n.accel_noise_std = c.number_or("noise", "accel_noise_std", n.accel_noise_std);
    n.bias_rate = c.number_or("noise", "bias_rate", n.bias_rate);
    n.process_noise_q = c.number_or("noise", "process_noise_q", n.process_noise_q);
    n.seed = static_cast<std::uint64_t>(c.integer_or("noise", "seed", static_cast<long>(n.seed)));
}

inline void apply_ekf_config(const Config& c, EkfConfig& e) {
    e.q = c.number_or("ekf", "q", e.q);
    e.r_v = c.number_or("ekf", "r_v", e.r_v);
    e.r_theta = c.number_or("ekf", "r_theta", e.r_theta);
    const double p0s = c.number_or("ekf", "p0_s", e.p0(0, 0));
    const double p0v = c.number_or("ekf", "p0_v", e.p0(1, 1));
    e.p0 = (Eigen::Matrix2d() << p0s, 0.0, 0.0, p0v).finished();
}

inline void apply_vehicle_config(const Config& c, VehicleParams& v) {
    v.m = c.number_or("vehicle", "m", v.m);
    v.A_f = c.number_or("vehicle", "a_f", v.A_f);
    v.rho = c.number_or("vehicle", "rho", v.rho);
    v.C_d = c.number_or("vehicle", "c_d", v.C_d);
    v.C_r = c.number_or("vehicle", "c_r", v.C_r);
    v.g = c.number_or("vehicle", "g", v.g);
    v.T_s = c.number_or("vehicle", "ts", v.T_s);
}

inline void apply_planner_config(const Config& c, PlanSetup& p) {
    p.length = c.number_or("planner", "length", p.length);
    p.ds = c.number_or("planner", "ds", p.ds);
    p.v_max = c.number_or("planner", "v_max", p.v_max);
    p.bounds_path = c.string_or("planner", "bounds", p.bounds_path);
    p.taper_m = c.number_or("planner", "taper_m", p.taper_m);
    p.grid.n_v = static_cast<int>(c.integer_or("planner", "n_v", p.grid.n_v));
    p.grid.n_u = static_cast<int>(c.integer_or("planner", "n_u", p.grid.n_u));
    p.grid.u_min = c.number_or("planner", "u_min", p.grid.u_min);
    p.grid.u_max = c.number_or("planner", "u_max", p.grid.u_max);
    p.planner.gamma = c.number_or("planner", "gamma", p.planner.gamma);
    if (c.string_or("planner", "mode", "interpolated") == "snapped")
        p.planner.mode = TransitionMode::snapped;
}

inline void apply_mpc_config(const Config& c, MpcConfig& m) {
    m.horizon = static_cast<int>(c.integer_or("mpc", "horizon", m.horizon));
    m.dt = c.number_or("mpc", "dt", m.dt);
    m.gamma_u = c.number_or("mpc", "gamma_u", m.gamma_u);
    m.terminal_weight = c.number_or("mpc", "terminal_weight", m.terminal_weight);
    m.u_min = c.number_or("mpc", "u_min", m.u_min);
    m.u_max = c.number_or("mpc", "u_max", m.u_max);
    m.v_penalty = c.number_or("mpc", "v_penalty", m.v_penalty);
    m.max_iter = static_cast<int>(c.integer_or("mpc", "max_iter", m.max_iter));
    m.grad_tol = c.number_or("mpc", "grad_tol", m.grad_tol);
}

inline void apply_localization_config(const Config& c, LocalizationSetup& s) {
    apply_map_config(c, s.map);
    apply_noise_config(c, s.noise);
    apply_ekf_config(c, s.ekf);
    s.dt = c.number_or("experiment", "dt", s.dt);
    s.duration = c.number_or("experiment", "duration", s.duration);
    s.v0 = c.number_or("experiment", "v0", s.v0);
    s.s0 = c.number_or("experiment", "s0", s.s0);
    s.accel_amp = c.number_or("experiment", "accel_amp", s.accel_amp);
    s.accel_period = c.number_or("experiment", "accel_period", s.accel_period);
    s.theta_direct = c.integer_or("experiment", "theta_direct", s.theta_direct ? 1 : 0) != 0;
    s.runs = static_cast<int>(c.integer_or("experiment", "runs", s.runs));
    s.base_seed =
        static_cast<std::uint64_t>(c.integer_or("experiment", "seed", static_cast<long>(s.base_seed)));
}

inline void apply_track_config(const Config& c, TrackSetup& t) {
    apply_map_config(c, t.plan.map);
    apply_planner_config(c, t.plan);
    apply_vehicle_config(c, t.plan.vehicle);
    apply_mpc_config(c, t.mpc);
    apply_noise_config(c, t.loop.noise);
    apply_ekf_config(c, t.loop.ekf);
    t.loop.launch_vref = c.number_or("experiment", "launch_vref", t.loop.launch_vref);
    t.loop.stop_margin_m = c.number_or("experiment", "stop_margin_m", t.loop.stop_margin_m);
    t.loop.stop_v = c.number_or("experiment", "stop_v", t.loop.stop_v);
    t.loop.t_max = c.number_or("experiment", "t_max", t.loop.t_max);
    if (c.has("experiment", "localizer"))
        t.loop.localizer = LocalizerSpec::parse(c.string_or("experiment", "localizer", "truth"));
}

inline void apply_offset_config(const Config& c, OffsetSetup& o) {
    apply_track_config(c, o.track);
    o.offset_m = c.number_or("experiment", "offset_m", o.offset_m);
    o.seg_a = c.number_or("experiment", "segment_a", o.seg_a);
    o.seg_b = c.number_or("experiment", "segment_b", o.seg_b);
}

}  // namespace gradenav
