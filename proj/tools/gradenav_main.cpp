// Command-line front end: map generation, localization studies, velocity
// planning, closed-loop tracking, and the combined report.
//
// Exit codes: 0 success, 2 configuration error, 3 infeasible problem,
// 4 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gradenav/gradenav.hpp"

namespace gn = gradenav;
namespace fs = std::filesystem;

namespace {

gn::Config load_overrides(const std::string& path) {
    return path.empty() ? gn::Config{} : gn::Config::parse_file(path);
}

void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw gn::ConfigError("cannot write '" + path + "'");
    out << j.dump(2) << "\n";
}

void parse_segment(const std::string& text, double& a, double& b) {
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw gn::ConfigError("segment: expected <start>:<end>, got '" + text + "'");
    try {
        a = std::stod(text.substr(0, colon));
        b = std::stod(text.substr(colon + 1));
    } catch (const std::exception&) {
        throw gn::ConfigError("segment: cannot parse '" + text + "'");
    }
    if (!(a < b)) throw gn::ConfigError("segment: need start < end");
}

struct GenMapArgs {
    std::string kind = "sine";
    std::string out;
    std::string from;
    double length = 5000.0, spacing = 2.0;
    double wavelength = 250.0, amplitude = 3.5, phase = 0.0;
    std::vector<double> coeffs;
    double scale = 1.0;
    int smoothing_window = 5;
};

void cmd_gen_map(const GenMapArgs& a) {
    gn::MapSpec spec;
    spec.kind = gn::map_kind_from_string(a.kind);
    spec.length = a.length;
    spec.spacing = a.spacing;
    spec.wavelength = a.wavelength;
    spec.amplitude = a.amplitude;
    spec.phase = a.phase;
    spec.coeffs = a.coeffs;
    spec.scale = a.scale;
    spec.path = a.from;
    spec.smoothing_window = a.smoothing_window;
    const gn::GradeMap map = gn::build_map(spec);
    gn::save_grade_csv(map, a.out);
    std::cout << "wrote " << a.out << " (" << map.knots_arc().size() << " knots, "
              << map.s_max() - map.s_min() << " m)\n";
}

struct LocalizeArgs {
    std::string preset = "table1";
    std::string config;
    std::optional<int> runs;
    std::optional<std::uint64_t> seed;
    std::optional<double> duration;
    std::string out_dir;
    std::string estimates_out;
    std::string trace_out;
};

gn::LocalizationSetup localization_setup_from(const std::string& preset, double fallback_duration) {
    if (preset == "table1" || preset == "table1_calibrated") return gn::preset_table1();
    if (preset == "drift") return gn::preset_drift(fallback_duration);
    throw gn::ConfigError("localize: unknown preset '" + preset + "' (table1, drift)");
}

void cmd_localize(const LocalizeArgs& a) {
    gn::LocalizationSetup setup = localization_setup_from(a.preset, a.duration.value_or(500.0));
    gn::apply_localization_config(load_overrides(a.config), setup);
    if (a.runs) setup.runs = *a.runs;
    if (a.seed) setup.base_seed = *a.seed;
    if (a.duration) setup.duration = *a.duration;

    const gn::LocalizationReport rep = gn::run_localization_mc(setup);
    gn::write_localization_text(rep, std::cout);

    if (!a.out_dir.empty()) {
        fs::create_directories(a.out_dir);
        write_json(gn::localization_report_json(rep), (fs::path(a.out_dir) / "report.json").string());
        std::ofstream txt(fs::path(a.out_dir) / "report.txt");
        gn::write_localization_text(rep, txt);
    }
    if (!a.estimates_out.empty() || !a.trace_out.empty()) {
        const gn::GradeMap map = gn::build_map(setup.map);
        const gn::LocalizationArtifacts art =
            gn::run_localization_artifacts(map, setup, setup.base_seed);
        if (!a.estimates_out.empty())
            gn::save_estimates_csv(art.filter, art.trace.dt, art.trace.t0, a.estimates_out);
        if (!a.trace_out.empty()) gn::save_trace_csv(art.trace, a.trace_out);
    }
}

struct PlanArgs {
    std::string preset;
    std::string config;
    std::string map_path;
    std::string route;  // speed bounds CSV
    std::optional<double> gamma;
    std::optional<double> length;
    std::optional<double> ds;
    std::optional<double> v_max;
    std::string mode = "interpolated";
    std::string out;
    std::string summary;
};

void cmd_plan(const PlanArgs& a) {
    gn::PlanSetup setup;
    if (!a.preset.empty()) {
        if (a.preset != "plan5km")
            throw gn::ConfigError("plan: unknown preset '" + a.preset + "' (plan5km)");
        setup = gn::preset_plan_5km(a.gamma.value_or(10.0));
    }
    gn::Config cfg = load_overrides(a.config);
    gn::apply_map_config(cfg, setup.map);
    gn::apply_planner_config(cfg, setup);
    gn::apply_vehicle_config(cfg, setup.vehicle);
    if (!a.map_path.empty()) {
        setup.map.kind = gn::MapSpec::Kind::grade_csv;
        setup.map.path = a.map_path;
    }
    if (!a.route.empty()) setup.bounds_path = a.route;
    if (a.gamma) setup.planner.gamma = *a.gamma;
    if (a.ds) setup.ds = *a.ds;
    if (a.v_max) setup.v_max = *a.v_max;
    if (a.mode == "snapped") setup.planner.mode = gn::TransitionMode::snapped;
    else if (a.mode != "interpolated")
        throw gn::ConfigError("plan: mode must be interpolated or snapped");

    const gn::GradeMap map = gn::build_map(setup.map);
    if (a.length) setup.length = *a.length;
    else if (setup.map.kind == gn::MapSpec::Kind::grade_csv ||
             setup.map.kind == gn::MapSpec::Kind::profile_csv ||
             setup.map.kind == gn::MapSpec::Kind::elevation_json)
        setup.length = map.s_max();

    const gn::RouteProfile route = gn::build_route(setup, map);
    const gn::VelocityPlan plan = gn::run_plan(setup, map, route);
    if (!a.out.empty()) gn::save_plan_csv(plan, a.out);

    const nlohmann::json summary = gn::plan_summary_json(plan);
    if (!a.summary.empty()) write_json(summary, a.summary);
    std::cout << summary.dump(2) << "\n";
}

struct TrackArgs {
    std::string preset;
    std::string config;
    std::string plan_path;
    std::string map_path;
    std::string localizer = "truth";
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string summary;
};

void cmd_track(const TrackArgs& a) {
    gn::ClosedLoopResult result;
    if (!a.plan_path.empty()) {
        if (a.map_path.empty()) throw gn::ConfigError("track: --plan needs --map <grade csv>");
        const gn::VelocityPlan plan = gn::load_plan_csv(a.plan_path);
        const gn::GradeMap map = gn::load_grade_csv(a.map_path);
        gn::TrackSetup setup;
        gn::Config cfg = load_overrides(a.config);
        gn::apply_track_config(cfg, setup);
        setup.loop.localizer = gn::LocalizerSpec::parse(a.localizer);
        if (a.seed) setup.loop.noise.seed = *a.seed;
        result = gn::run_closed_loop(plan, map, setup.plan.vehicle, setup.mpc, setup.loop);
    } else {
        gn::TrackSetup setup = gn::preset_track_5km();
        if (!a.preset.empty() && a.preset != "track5km")
            throw gn::ConfigError("track: unknown preset '" + a.preset + "' (track5km)");
        gn::apply_track_config(load_overrides(a.config), setup);
        setup.loop.localizer = gn::LocalizerSpec::parse(a.localizer);
        if (a.seed) setup.loop.noise.seed = *a.seed;
        result = gn::run_track(setup).loop;
    }

    if (!a.out.empty()) gn::save_closed_loop_csv(result, a.out);
    const nlohmann::json summary = gn::closed_loop_summary_json(result);
    if (!a.summary.empty()) write_json(summary, a.summary);
    std::cout << summary.dump(2) << "\n";
}

struct OffsetArgs {
    std::string preset = "offset-hilly";
    std::string config;
    std::optional<double> offset_m;
    std::string segment;
    std::string json_out;
};

void cmd_energy_offset(const OffsetArgs& a) {
    gn::OffsetSetup setup;
    if (a.preset == "offset-hilly") setup = gn::preset_offset_hilly();
    else if (a.preset == "offset-flat") setup = gn::preset_offset_flat();
    else throw gn::ConfigError("energy-offset: unknown preset '" + a.preset +
                               "' (offset-hilly, offset-flat)");
    gn::apply_offset_config(load_overrides(a.config), setup);
    if (a.offset_m) setup.offset_m = *a.offset_m;
    if (!a.segment.empty()) parse_segment(a.segment, setup.seg_a, setup.seg_b);

    const gn::OffsetResult result = gn::run_energy_vs_offset(setup);
    const nlohmann::json j = gn::offset_result_json(setup, result);
    if (!a.json_out.empty()) write_json(j, a.json_out);
    std::cout << j.dump(2) << "\n";
}

struct ReportArgs {
    std::string out_dir = "report";
    bool quick = false;
    std::uint64_t seed = 1;
};

void cmd_report(const ReportArgs& a) {
    fs::create_directories(a.out_dir);
    const fs::path dir(a.out_dir);
    nlohmann::json combined;
    std::ofstream txt(dir / "report.txt");
    if (!txt) throw gn::ConfigError("cannot write into '" + a.out_dir + "'");

    // short calibrated drive: accuracy head-to-head
    gn::LocalizationSetup short_setup = gn::preset_table1();
    short_setup.base_seed = a.seed;
    if (a.quick) {
        short_setup.runs = 3;
        short_setup.duration = 40.0;
    }
    const gn::LocalizationReport short_rep = gn::run_localization_mc(short_setup);
    combined["localization_short"] = gn::localization_report_json(short_rep);
    txt << "== short drive, calibrated sensors ==\n";
    gn::write_localization_text(short_rep, txt);

    // long drives: drift characteristics
    gn::LocalizationSetup drift_mid = gn::preset_drift(a.quick ? 60.0 : 500.0);
    drift_mid.base_seed = a.seed;
    if (a.quick) drift_mid.runs = 3;
    const gn::LocalizationReport drift_mid_rep = gn::run_localization_mc(drift_mid);
    combined["drift_mid"] = gn::localization_report_json(drift_mid_rep);
    txt << "\n== long drive (" << drift_mid.duration << " s) ==\n";
    gn::write_localization_text(drift_mid_rep, txt);

    gn::LocalizationSetup drift_far = gn::preset_drift(a.quick ? 90.0 : 1000.0);
    drift_far.base_seed = a.seed;
    if (a.quick) drift_far.runs = 3;
    const gn::LocalizationReport drift_far_rep = gn::run_localization_mc(drift_far);
    combined["drift_far"] = gn::localization_report_json(drift_far_rep);
    txt << "\n== long drive (" << drift_far.duration << " s) ==\n";
    gn::write_localization_text(drift_far_rep, txt);

    // energy-optimal planning at two smoothness weights
    gn::PlanSetup plan_setup = gn::preset_plan_5km(10.0);
    if (a.quick) {
        plan_setup.map.length = 1400.0;
        plan_setup.length = 1200.0;
        plan_setup.bounds = gn::SpeedBounds{};
        plan_setup.v_max = 12.0;
    }
    const gn::PlanStudy study = gn::run_plan_study(plan_setup, 0.1, 10.0);
    combined["plan_study"] = gn::plan_study_json(study);
    gn::save_plan_csv(study.gamma_lo, (dir / "plan_gamma_lo.csv").string());
    gn::save_plan_csv(study.gamma_hi, (dir / "plan_gamma_hi.csv").string());
    txt << "\n== velocity planning (5 km stepped-limit route) ==\n" << std::setprecision(3);
    txt << "  drive at bound: " << study.bound_ref.energy_kwh << " kWh, "
        << study.bound_ref.trip_time_s / 60.0 << " min\n";
    txt << "  gamma=" << study.gamma_hi.gamma << ": " << study.gamma_hi.energy_kwh << " kWh, "
        << study.gamma_hi.trip_time_s / 60.0 << " min\n";
    txt << "  gamma=" << study.gamma_lo.gamma << ": " << study.gamma_lo.energy_kwh << " kWh, "
        << study.gamma_lo.trip_time_s / 60.0 << " min\n";
    txt << "  saving at gamma=" << study.gamma_hi.gamma << ": " << study.saving_hi_pct << "%\n";

    // closed-loop tracking of the gamma_hi plan
    {
        const gn::GradeMap map = gn::build_map(plan_setup.map);
        gn::TrackSetup track;
        track.plan = plan_setup;
        const gn::ClosedLoopResult loop =
            gn::run_closed_loop(study.gamma_hi, map, track.plan.vehicle, track.mpc, track.loop);
        combined["track"] = gn::closed_loop_summary_json(loop);
        gn::save_closed_loop_csv(loop, (dir / "track_log.csv").string());
        txt << "\n== closed-loop tracking ==\n";
        txt << "  rmse " << loop.tracking_rmse << " m/s on mean ref "
            << loop.mean_ref_speed << " m/s, energy " << loop.energy_kwh << " kWh, time "
            << loop.time_s / 60.0 << " min, reached_end " << (loop.reached_end ? "yes" : "no")
            << "\n";
    }

    // localization-offset sensitivity
    for (const char* name : {"offset-hilly", "offset-flat"}) {
        gn::OffsetSetup os =
            std::string(name) == "offset-hilly" ? gn::preset_offset_hilly() : gn::preset_offset_flat();
        if (a.quick) {
            os.track.plan.map.length = 1400.0;
            os.track.plan.length = 1200.0;
            os.seg_a = 400.0;
            os.seg_b = 800.0;
        }
        const gn::OffsetResult r = gn::run_energy_vs_offset(os);
        combined[std::string(name) == "offset-hilly" ? "offset_hilly" : "offset_flat"] =
            gn::offset_result_json(os, r);
        txt << "\n== energy vs +" << os.offset_m << " m localization offset (" << name << ") ==\n";
        txt << "  segment [" << os.seg_a << ", " << os.seg_b << "] m: " << r.energy_ref_kwh
            << " -> " << r.energy_off_kwh << " kWh (" << (r.delta_pct >= 0 ? "+" : "")
            << r.delta_pct << "%)\n";
    }

    write_json(combined, (dir / "report.json").string());
    std::cout << "report written to " << a.out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"grade-map-aided localization and energy-optimal velocity planning"};
    app.require_subcommand(1);

    GenMapArgs gm;
    auto* gen = app.add_subcommand("gen-map", "generate or convert a road grade map");
    gen->add_option("--kind", gm.kind, "flat|sine|polynomial|grade-csv|profile-csv|elevation-json");
    gen->add_option("--out", gm.out, "output grade CSV (arc_m,grade)")->required();
    gen->add_option("--from", gm.from, "input file for the file-backed kinds");
    gen->add_option("--length", gm.length, "road length, m");
    gen->add_option("--spacing", gm.spacing, "knot spacing, m");
    gen->add_option("--wavelength", gm.wavelength, "sine elevation wavelength, m");
    gen->add_option("--amplitude", gm.amplitude, "sine elevation amplitude, m");
    gen->add_option("--phase", gm.phase, "sine phase, rad");
    gen->add_option("--coeffs", gm.coeffs, "polynomial elevation coefficients")->delimiter(',');
    gen->add_option("--scale", gm.scale, "polynomial coordinate scale, m");
    gen->add_option("--smoothing-window", gm.smoothing_window, "odd grade-smoothing window");
    gen->callback([&gm] { cmd_gen_map(gm); });

    LocalizeArgs lo;
    auto* loc = app.add_subcommand("localize", "Monte Carlo localization study");
    loc->add_option("--preset", lo.preset, "table1|drift");
    loc->add_option("--config", lo.config, "config file with overrides");
    loc->add_option("--runs", [&lo](const CLI::results_t& r) { lo.runs = std::stoi(r[0]); return true; },
                    "number of seeds");
    loc->add_option("--seed", [&lo](const CLI::results_t& r) { lo.seed = std::stoull(r[0]); return true; },
                    "base seed");
    loc->add_option("--duration",
                    [&lo](const CLI::results_t& r) { lo.duration = std::stod(r[0]); return true; },
                    "run length, s");
    loc->add_option("--out-dir", lo.out_dir, "write report.json/report.txt here");
    loc->add_option("--estimates-out", lo.estimates_out, "estimates CSV for the first seed");
    loc->add_option("--trace-out", lo.trace_out, "sensor trace CSV for the first seed");
    loc->callback([&lo] { cmd_localize(lo); });

    PlanArgs pl;
    auto* plan = app.add_subcommand("plan", "energy-optimal velocity plan for a route");
    plan->add_option("--preset", pl.preset, "plan5km");
    plan->add_option("--config", pl.config, "config file with overrides");
    plan->add_option("--map", pl.map_path, "grade CSV of the route");
    plan->add_option("--route", pl.route, "speed bound CSV (arc_m,v_max_mps[,v_min_mps])");
    plan->add_option("--gamma", [&pl](const CLI::results_t& r) { pl.gamma = std::stod(r[0]); return true; },
                     "bound-tracking weight");
    plan->add_option("--length", [&pl](const CLI::results_t& r) { pl.length = std::stod(r[0]); return true; },
                     "route length, m");
    plan->add_option("--ds", [&pl](const CLI::results_t& r) { pl.ds = std::stod(r[0]); return true; },
                     "cell length, m");
    plan->add_option("--v-max", [&pl](const CLI::results_t& r) { pl.v_max = std::stod(r[0]); return true; },
                     "constant speed limit, m/s");
    plan->add_option("--mode", pl.mode, "interpolated|snapped");
    plan->add_option("--out", pl.out, "plan CSV (arc_m,v_ref_mps,u_N,cost_to_go)");
    plan->add_option("--summary", pl.summary, "summary JSON path");
    plan->callback([&pl] { cmd_plan(pl); });

    TrackArgs tr;
    auto* track = app.add_subcommand("track", "closed-loop tracking of a velocity plan");
    track->add_option("--preset", tr.preset, "track5km");
    track->add_option("--config", tr.config, "config file with overrides");
    track->add_option("--plan", tr.plan_path, "plan CSV to track (needs --map)");
    track->add_option("--map", tr.map_path, "grade CSV of the route");
    track->add_option("--localizer", tr.localizer, "truth|ekf|offset:<m>");
    track->add_option("--seed", [&tr](const CLI::results_t& r) { tr.seed = std::stoull(r[0]); return true; },
                      "noise seed for the ekf localizer");
    track->add_option("--out", tr.out, "closed-loop log CSV");
    track->add_option("--summary", tr.summary, "summary JSON path");
    track->callback([&tr] { cmd_track(tr); });

    OffsetArgs of;
    auto* off = app.add_subcommand("energy-offset", "energy sensitivity to a localization offset");
    off->add_option("--preset", of.preset, "offset-hilly|offset-flat");
    off->add_option("--config", of.config, "config file with overrides");
    off->add_option("--offset-m",
                    [&of](const CLI::results_t& r) { of.offset_m = std::stod(r[0]); return true; },
                    "position offset, m");
    off->add_option("--segment", of.segment, "energy window <start>:<end> in m");
    off->add_option("--json", of.json_out, "result JSON path");
    off->callback([&of] { cmd_energy_offset(of); });

    ReportArgs re;
    auto* rep = app.add_subcommand("report", "run the full study suite and write a report");
    rep->add_option("--out-dir", re.out_dir, "output directory");
    rep->add_option("--seed", re.seed, "base seed");
    rep->add_flag("--quick", re.quick, "scaled-down runs (smoke testing)");
    rep->callback([&re] { cmd_report(re); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const gn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const gn::InfeasibleError& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return 3;
    } catch (const gn::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
