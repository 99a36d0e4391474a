#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "gradenav/csv.hpp"
#include "gradenav/grade_map.hpp"
#include "test_util.hpp"

namespace {

struct CmdResult {
    int code = -1;
    std::string out;
};

CmdResult run_cli(const std::string& args) {
    const std::string cmd = std::string(GRADENAV_CLI_PATH) + " " + args + " 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) throw std::runtime_error("popen failed for: " + cmd);
    CmdResult r;
    char buf[4096];
    std::size_t n = 0;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = pclose(p);
    if (WIFEXITED(status)) r.code = WEXITSTATUS(status);
    return r;
}

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    EXPECT_TRUE(in.good()) << "missing " << path;
    return nlohmann::json::parse(in);
}

TEST(CliTest, HelpExitsZero) {
    const CmdResult r = run_cli("--help");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("gen-map"), std::string::npos);
    EXPECT_NE(r.out.find("energy-offset"), std::string::npos);
}

TEST(CliTest, BadInvocationsExitTwo) {
    EXPECT_EQ(run_cli("").code, 2);
    EXPECT_EQ(run_cli("gen-map --out /tmp/x.csv --bogus-flag").code, 2);
    EXPECT_EQ(run_cli("gen-map").code, 2);  // missing required --out
    EXPECT_EQ(run_cli("localize --preset nosuch").code, 2);
}

TEST(CliTest, GenMapWritesGradeCsv) {
    testutil::TempDir tmp;
    const std::string map_csv = tmp.path("map.csv");
    const CmdResult r = run_cli("gen-map --kind sine --length 500 --spacing 2 --out " + map_csv);
    ASSERT_EQ(r.code, 0) << r.out;
    const gradenav::csv::Table t = gradenav::csv::read(map_csv);
    EXPECT_EQ(t.header, (std::vector<std::string>{"arc_m", "grade"}));
    const gradenav::GradeMap map = gradenav::load_grade_csv(map_csv);
    EXPECT_DOUBLE_EQ(map.s_max(), 500.0);

    EXPECT_EQ(run_cli("gen-map --kind bumpy --out " + tmp.path("x.csv")).code, 2);
}

TEST(CliTest, LocalizeWritesReportsAndArtifacts) {
    testutil::TempDir tmp;
    const std::string dir = tmp.path("loc");
    const std::string est = tmp.path("est.csv");
    const std::string trace = tmp.path("trace.csv");
    const CmdResult r = run_cli("localize --preset table1 --runs 2 --duration 20 --out-dir " + dir +
                                " --estimates-out " + est + " --trace-out " + trace);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("rmse ratio"), std::string::npos);

    const nlohmann::json rep = load_json(dir + "/report.json");
    EXPECT_TRUE(rep.contains("rmse_ratio"));
    EXPECT_EQ(rep["runs"].size(), 2u);
    EXPECT_TRUE(std::ifstream(dir + "/report.txt").good());

    EXPECT_EQ(gradenav::csv::read(est).header,
              (std::vector<std::string>{"t_s", "s_hat_m", "v_hat_mps", "p11", "p12", "p22", "nis"}));
    EXPECT_EQ(gradenav::csv::read(trace).header,
              (std::vector<std::string>{"t_s", "wheel_speed_mps", "accel_mps2"}));
}

TEST(CliTest, PlanTrackAndInfeasiblePipeline) {
    testutil::TempDir tmp;
    const std::string map_csv = tmp.path("map.csv");
    const std::string bounds_csv = tmp.path("bounds.csv");
    const std::string plan_csv = tmp.path("plan.csv");
    const std::string sum_json = tmp.path("plan.json");

    ASSERT_EQ(run_cli("gen-map --kind flat --length 1200 --out " + map_csv).code, 0);
    testutil::write_file(bounds_csv, "arc_m,v_max_mps\n0,12\n1200,12\n");

    const CmdResult pr = run_cli("plan --map " + map_csv + " --route " + bounds_csv + " --out " +
                                 plan_csv + " --summary " + sum_json);
    ASSERT_EQ(pr.code, 0) << pr.out;
    EXPECT_EQ(gradenav::csv::read(plan_csv).header,
              (std::vector<std::string>{"arc_m", "v_ref_mps", "u_N", "cost_to_go"}));
    const nlohmann::json sum = load_json(sum_json);
    EXPECT_GT(sum["energy_kwh"].get<double>(), 0.0);
    EXPECT_GT(sum["trip_time_min"].get<double>(), 0.0);

    // weak drivetrain config: no feasible chain through the speed corridor
    const std::string weak = tmp.path("weak.toml");
    testutil::write_file(weak, "[planner]\nu_min = -50\nu_max = 50\n");
    const CmdResult infeasible =
        run_cli("plan --map " + map_csv + " --route " + bounds_csv + " --config " + weak);
    EXPECT_EQ(infeasible.code, 3) << infeasible.out;
    EXPECT_NE(infeasible.out.find("infeasible"), std::string::npos);

    EXPECT_EQ(run_cli("plan --map " + tmp.path("missing.csv")).code, 2);

    const std::string log_csv = tmp.path("log.csv");
    const std::string tsum = tmp.path("track.json");
    const CmdResult tr = run_cli("track --plan " + plan_csv + " --map " + map_csv +
                                 " --localizer truth --out " + log_csv + " --summary " + tsum);
    ASSERT_EQ(tr.code, 0) << tr.out;
    EXPECT_EQ(gradenav::csv::read(log_csv).header,
              (std::vector<std::string>{"t_s", "s_true_m", "s_hat_m", "v_mps", "v_ref_mps", "u_N",
                                        "power_W"}));
    const nlohmann::json tj = load_json(tsum);
    EXPECT_TRUE(tj["reached_end"].get<bool>());

    EXPECT_EQ(run_cli("track --plan " + plan_csv + " --map " + map_csv + " --localizer bogus").code, 2);
    EXPECT_EQ(run_cli("track --plan " + plan_csv).code, 2);  // --plan without --map
}

TEST(CliTest, EnergyOffsetRunsAndValidatesSegment) {
    testutil::TempDir tmp;
    const std::string cfg = tmp.path("small.toml");
    testutil::write_file(cfg, "[map]\nlength = 1400\n\n[planner]\nlength = 1200\n\n[experiment]\n"
                              "segment_a = 400\nsegment_b = 800\n");
    const std::string out_json = tmp.path("offset.json");
    const CmdResult r =
        run_cli("energy-offset --preset offset-flat --config " + cfg + " --json " + out_json);
    ASSERT_EQ(r.code, 0) << r.out;
    const nlohmann::json j = load_json(out_json);
    EXPECT_LT(std::abs(j["delta_pct"].get<double>()), 1.0);
    EXPECT_GT(j["energy_ref_kwh"].get<double>(), 0.0);

    EXPECT_EQ(run_cli("energy-offset --preset offset-flat --segment 20:10").code, 2);
    EXPECT_EQ(run_cli("energy-offset --preset nosuch").code, 2);
}

TEST(CliTest, QuickReportProducesAllSections) {
    testutil::TempDir tmp;
    const std::string dir = tmp.path("rep");
    const CmdResult r = run_cli("report --quick --out-dir " + dir);
    ASSERT_EQ(r.code, 0) << r.out;
    const nlohmann::json j = load_json(dir + "/report.json");
    for (const char* key : {"localization_short", "drift_mid", "drift_far", "plan_study", "track",
                            "offset_hilly", "offset_flat"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_TRUE(std::ifstream(dir + "/report.txt").good());
    EXPECT_TRUE(std::ifstream(dir + "/plan_gamma_hi.csv").good());
    EXPECT_TRUE(std::ifstream(dir + "/track_log.csv").good());
}

}  // namespace
