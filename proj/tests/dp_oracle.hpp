#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "gradenav/dp_planner.hpp"
#include "gradenav/sensor_sim.hpp"

// Exhaustive oracle for snapped-grid planning: depth-first enumeration of every
// input sequence, costs accumulated back-to-front so the float grouping matches
// a Bellman recursion term for term. Shared by the planner unit tests and the
// acceptance runner.
namespace dporacle {

inline std::size_t snap(const std::vector<double>& lev, double v) {
    const double step = (lev.back() - lev.front()) / static_cast<double>(lev.size() - 1);
    const double idx = std::floor((v - lev.front()) / step + 0.5);
    return static_cast<std::size_t>(std::clamp(idx, 0.0, static_cast<double>(lev.size() - 1)));
}

struct Best {
    double cost = gradenav::kInfCost;
    double u = std::numeric_limits<double>::quiet_NaN();
};

inline Best enumerate_best(const gradenav::RouteProfile& r, const gradenav::VehicleParams& p,
                           const std::vector<double>& inputs,
                           const std::vector<std::vector<double>>& levels, double gamma,
                           std::size_t k, std::size_t i) {
    const std::size_t N = r.n_cells();
    Best out;
    if (k == N) {
        out.cost = levels[N][i] == 0.0 ? 0.0 : gradenav::kInfCost;
        return out;
    }
    const double v = levels[k][i];
    const double theta = std::asin(r.grade[k]);
    for (double u : inputs) {
        const gradenav::SpatialStep st = gradenav::step_spatial(v, theta, u, p, r.ds);
        if (st.stopped && k + 1 < N) continue;
        const double v2 = st.stopped ? 0.0 : st.v_next;
        if (v2 < r.v_min[k + 1] - 1e-9 || v2 > r.v_max[k + 1] + 1e-9) continue;
        const Best sub = enumerate_best(r, p, inputs, levels, gamma, k + 1, snap(levels[k + 1], v2));
        if (std::isinf(sub.cost)) continue;
        const double cand = gradenav::stage_cost(v, u, r.v_max[k], gamma, r.ds) + sub.cost;
        const bool better = cand < out.cost;
        const bool tie_wins =
            cand == out.cost &&
            (std::abs(u) < std::abs(out.u) || (std::abs(u) == std::abs(out.u) && u < out.u));
        if (better || tie_wins) {
            out.cost = cand;
            out.u = u;
        }
    }
    return out;
}

/// Small random instance with snapped transitions; bounds may turn out
/// infeasible, callers skip those seeds.
inline void random_instance(std::uint64_t seed, gradenav::RouteProfile& r, gradenav::DpGrid& g,
                            gradenav::PlannerConfig& cfg) {
    gradenav::GaussianRng rng(seed);
    auto uni = [&](double a, double b) { return a + (b - a) * rng.uniform01(); };
    const auto n_cells = static_cast<std::size_t>(uni(2.0, 6.999));
    r = gradenav::RouteProfile{};
    r.ds = uni(8.0, 12.0);
    for (std::size_t k = 0; k < n_cells; ++k) r.grade.push_back(uni(-0.05, 0.05));
    for (std::size_t k = 0; k <= n_cells; ++k) {
        r.v_max.push_back(uni(8.0, 14.0));
        r.v_min.push_back((k == 0 || k == n_cells) ? 0.0 : uni(0.0, 2.5));
    }
    g = gradenav::DpGrid{};
    g.n_v = static_cast<int>(uni(2.0, 6.999));
    g.n_u = static_cast<int>(uni(3.0, 5.999));
    g.u_min = -uni(1500.0, 3000.0);
    g.u_max = uni(1500.0, 3000.0);
    cfg = gradenav::PlannerConfig{};
    cfg.gamma = uni(0.05, 12.0);
    cfg.mode = gradenav::TransitionMode::snapped;
}

}  // namespace dporacle
