#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradenav/csv.hpp"
#include "gradenav/errors.hpp"
#include "gradenav/grade_map.hpp"
#include "gradenav/vehicle.hpp"

namespace gradenav {

constexpr double kInfCost = std::numeric_limits<double>::infinity();

/// Discretized route: N cells of length ds. Grade (sin of slope) is sampled
/// per cell at the midpoint; speed bounds are per node (N+1 of them, node k
/// at s = k*ds). Both route ends must admit v = 0.
struct RouteProfile {
    double ds = 10.0;
    std::vector<double> grade;   // per cell
    std::vector<double> v_max;   // per node
    std::vector<double> v_min;   // per node

    std::size_t n_cells() const { return grade.size(); }
    std::size_t n_nodes() const { return grade.size() + 1; }
    double length() const { return ds * static_cast<double>(grade.size()); }
    double node_s(std::size_t k) const { return ds * static_cast<double>(k); }

    void validate() const {
        if (ds <= 0) throw ConfigError("route: ds must be > 0");
        if (grade.empty()) throw ConfigError("route: need >= 1 cell");
        if (v_max.size() != n_nodes() || v_min.size() != n_nodes())
            throw ConfigError("route: bounds must have one entry per node");
        for (std::size_t k = 0; k < n_nodes(); ++k) {
            if (!(v_min[k] >= 0.0) || !(v_min[k] < v_max[k]))
                throw ConfigError("route: need 0 <= v_min < v_max at node " + std::to_string(k));
        }
        if (v_min.front() != 0.0 || v_min.back() != 0.0)
            throw ConfigError("route: boundary nodes must admit v = 0");
        for (double p : grade)
            if (!std::isfinite(p) || std::abs(p) >= 1.0) throw ConfigError("route: invalid cell grade");
    }
};

/// State/input discretization. Velocity levels are per node, spanning that
/// node's bounds; input levels span [u_min, u_max] with the level nearest
/// zero snapped to exactly zero.
struct DpGrid {
    int n_v = 41;
    int n_u = 25;
    double u_min = -3000.0;  // N
    double u_max = 3000.0;   // N

    void validate() const {
        if (n_v < 2 || n_u < 3) throw ConfigError("dp grid: need n_v >= 2 and n_u >= 3");
        if (!(u_min < u_max)) throw ConfigError("dp grid: need u_min < u_max");
    }

    std::vector<double> velocity_levels(double lo, double hi) const {
        std::vector<double> lev(n_v);
        for (int i = 0; i < n_v; ++i)
            lev[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_v - 1);
        lev.front() = lo;
        lev.back() = hi;
        return lev;
    }

    std::vector<double> input_levels() const {
        std::vector<double> lev(n_u);
        for (int i = 0; i < n_u; ++i)
            lev[i] = u_min + (u_max - u_min) * static_cast<double>(i) / static_cast<double>(n_u - 1);
        if (u_min < 0.0 && u_max > 0.0) {
            std::size_t nearest = 0;
            for (std::size_t i = 1; i < lev.size(); ++i)
                if (std::abs(lev[i]) < std::abs(lev[nearest])) nearest = i;
            lev[nearest] = 0.0;
        }
        return lev;
    }
};

enum class TransitionMode {
    interpolated,  // cost-to-go linearly interpolated at the continuous successor
    snapped,       // successor snapped to the nearest velocity level (oracle-exact mode)
};

struct PlannerConfig {
    double gamma = 10.0;
    TransitionMode mode = TransitionMode::interpolated;

    void validate() const {
        if (gamma < 0) throw ConfigError("planner: gamma must be >= 0");
    }
};

/// Per-cell running cost: wheel power through the cell plus the penalty for
/// running below the speed bound, (v*u_p + gamma*(v - v_max)^2) * ds.
inline double stage_cost(double v, double u, double v_max_cell, double gamma, double ds) {
    const double dv = v - v_max_cell;
    return (v * std::max(u, 0.0) + gamma * dv * dv) * ds;
}

/// Backward-sweep output: cost-to-go and greedy input per (node, velocity
/// level). Infeasible states carry +inf cost and NaN policy.
struct DpTables {
    std::vector<std::vector<double>> levels;  // [node][i] velocity values
    std::vector<std::vector<double>> cost;    // [node][i] cost-to-go
    std::vector<std::vector<double>> policy;  // [node][i] optimal input, nodes 0..N-1
};

namespace detail {

// feasibility slack against node speed bounds
constexpr double kBoundEps = 1e-9;

inline bool within_bounds(double v, double lo, double hi) {
    return v >= lo - kBoundEps && v <= hi + kBoundEps;
}

// nearest-level snap for uniform levels; half-spacing ties round up
inline std::size_t snap_index(const std::vector<double>& levels, double v) {
    if (levels.size() == 1) return 0;
    const double step = (levels.back() - levels.front()) / static_cast<double>(levels.size() - 1);
    const double idx = std::floor((v - levels.front()) / step + 0.5);
    return static_cast<std::size_t>(std::clamp(idx, 0.0, static_cast<double>(levels.size() - 1)));
}

// linear interpolation of per-level values; +inf at either bracket poisons
// the result (saturating arithmetic), exact level hits take that level only
inline double interp_levels(const std::vector<double>& levels, const std::vector<double>& values,
                            double v) {
    if (v <= levels.front()) return values.front();
    if (v >= levels.back()) return values.back();
    const auto it = std::upper_bound(levels.begin(), levels.end(), v);
    const std::size_t j = static_cast<std::size_t>(it - levels.begin()) - 1;
    const double w = (v - levels[j]) / (levels[j + 1] - levels[j]);
    if (w == 0.0) return values[j];
    if (std::isinf(values[j]) || std::isinf(values[j + 1])) return kInfCost;
    return values[j] + w * (values[j + 1] - values[j]);
}

}  // namespace detail

/// Bellman backward sweep over the (position, velocity) grid. Transitions run
/// through the spatial dynamics; successors leaving the next node's bounds
/// are infeasible, as is stopping (radicand clamp) anywhere but the final
/// cell. The terminal condition admits only v = 0. Cost ties break toward
/// the input with the smallest magnitude, then the smaller signed value.
inline DpTables backward_sweep(const RouteProfile& route, const DpGrid& grid,
                               const VehicleParams& params, const PlannerConfig& cfg) {
    route.validate();
    grid.validate();
    cfg.validate();
    params.validate();

    const std::size_t N = route.n_cells();
    DpTables t;
    t.levels.resize(N + 1);
    t.cost.resize(N + 1);
    t.policy.assign(N, {});
    for (std::size_t k = 0; k <= N; ++k)
        t.levels[k] = grid.velocity_levels(route.v_min[k], route.v_max[k]);

    t.cost[N].assign(t.levels[N].size(), kInfCost);
    for (std::size_t i = 0; i < t.levels[N].size(); ++i)
        if (t.levels[N][i] == 0.0) t.cost[N][i] = 0.0;

    // scan inputs smallest-|u|-first so the first strict improvement also
    // settles ties deterministically
    std::vector<double> inputs = grid.input_levels();
    std::sort(inputs.begin(), inputs.end(), [](double a, double b) {
        if (std::abs(a) != std::abs(b)) return std::abs(a) < std::abs(b);
        return a < b;
    });

    for (std::size_t k = N; k-- > 0;) {
        const double theta = std::asin(route.grade[k]);
        t.cost[k].assign(t.levels[k].size(), kInfCost);
        t.policy[k].assign(t.levels[k].size(), std::numeric_limits<double>::quiet_NaN());
        bool any_feasible = false;
        for (std::size_t i = 0; i < t.levels[k].size(); ++i) {
            const double v = t.levels[k][i];
            double best = kInfCost, best_u = std::numeric_limits<double>::quiet_NaN();
            for (double u : inputs) {
                const SpatialStep step = step_spatial(v, theta, u, params, route.ds);
                if (step.stopped && k + 1 < N) continue;  // stalls mid-route
                const double v2 = step.stopped ? 0.0 : step.v_next;
                if (!detail::within_bounds(v2, route.v_min[k + 1], route.v_max[k + 1])) continue;
                double future;
                if (cfg.mode == TransitionMode::snapped)
                    future = t.cost[k + 1][detail::snap_index(t.levels[k + 1], v2)];
                else
                    future = detail::interp_levels(t.levels[k + 1], t.cost[k + 1], v2);
                if (std::isinf(future)) continue;
                const double cand = stage_cost(v, u, route.v_max[k], cfg.gamma, route.ds) + future;
                if (cand < best) {
                    best = cand;
                    best_u = u;
                }
            }
            t.cost[k][i] = best;
            t.policy[k][i] = best_u;
            if (!std::isinf(best)) any_feasible = true;
        }
        if (!any_feasible)
            throw InfeasibleError("no feasible transition from any velocity level at cell " +
                                  std::to_string(k) + " (grid too coarse or bounds inconsistent)");
    }
    return t;
}

/// Position-indexed reference produced by the forward sweep.
struct VelocityPlan {
    double ds = 10.0;
    std::vector<double> s;           // node positions
    std::vector<double> v_ref;       // per node
    std::vector<double> u;           // per cell
    std::vector<double> cost_to_go;  // per node
    double energy_kwh = 0.0;
    double trip_time_s = 0.0;
    double gamma = 0.0;
    bool terminal_ok = true;  // final velocity within one grid spacing of 0

    /// Reference speed at arbitrary position; 0 past the route end.
    double v_ref_at(double pos) const {
        if (pos >= s.back()) return 0.0;
        return detail::interp_levels(s, v_ref, pos);
    }
};

/// Rolls the optimal policy forward from v0 through the continuous spatial
/// dynamics, interpolating the policy between velocity levels.
inline VelocityPlan forward_rollout(const DpTables& tables, const RouteProfile& route,
                                    const DpGrid& grid, const VehicleParams& params,
                                    const PlannerConfig& cfg, double v0 = 0.0) {
    const std::size_t N = route.n_cells();
    VelocityPlan plan;
    plan.ds = route.ds;
    plan.gamma = cfg.gamma;
    plan.s.resize(N + 1);
    plan.v_ref.resize(N + 1);
    plan.u.resize(N);
    plan.cost_to_go.resize(N + 1);

    double v = v0;
    double joules = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
        plan.s[k] = route.node_s(k);
        plan.v_ref[k] = v;

        const auto& lev = tables.levels[k];
        const auto& pol = tables.policy[k];
        double u;
        if (cfg.mode == TransitionMode::snapped) {
            u = pol[detail::snap_index(lev, v)];
        } else {
            const std::size_t j =
                std::min<std::size_t>(lev.size() - 2,
                                      static_cast<std::size_t>(std::max<std::ptrdiff_t>(
                                          0, std::upper_bound(lev.begin(), lev.end(), v) - lev.begin() - 1)));
            const double u_lo = pol[j], u_hi = pol[j + 1];
            if (std::isnan(u_lo) && std::isnan(u_hi))
                throw InfeasibleError("rollout entered an infeasible state at cell " + std::to_string(k));
            if (std::isnan(u_lo)) u = u_hi;
            else if (std::isnan(u_hi)) u = u_lo;
            else {
                const double w = std::clamp((v - lev[j]) / (lev[j + 1] - lev[j]), 0.0, 1.0);
                u = u_lo + w * (u_hi - u_lo);
            }
        }
        if (std::isnan(u))
            throw InfeasibleError("rollout entered an infeasible state at cell " + std::to_string(k));

        plan.cost_to_go[k] = detail::interp_levels(tables.levels[k], tables.cost[k], v);
        plan.u[k] = u;

        const SpatialStep step = step_spatial(v, std::asin(route.grade[k]), u, params, route.ds);
        const double v2 = step.stopped ? 0.0 : step.v_next;
        if (k + 1 < N) {
            const double spacing = (route.v_max[k + 1] - route.v_min[k + 1]) /
                                   static_cast<double>(grid.n_v - 1);
            if (v2 < route.v_min[k + 1] - spacing || v2 > route.v_max[k + 1] + spacing)
                throw InfeasibleError("rollout left the speed corridor at cell " + std::to_string(k));
        }
        joules += std::max(u, 0.0) * route.ds;
        if (v + v2 <= 0.0)
            throw InfeasibleError("rollout stalled (v = 0 across cell " + std::to_string(k) + ")");
        plan.trip_time_s += 2.0 * route.ds / (v + v2);
        v = v2;
    }
    plan.s[N] = route.node_s(N);
    plan.v_ref[N] = v;
    plan.cost_to_go[N] = v == 0.0 ? 0.0 : detail::interp_levels(tables.levels[N], tables.cost[N], v);
    const double terminal_spacing =
        (route.v_max[N] - route.v_min[N]) / static_cast<double>(grid.n_v - 1);
    plan.terminal_ok = std::abs(v) <= terminal_spacing;
    plan.energy_kwh = joules / kJoulePerKwh;
    return plan;
}

/// Cost/energy/time of driving a prescribed per-node speed profile, with the
/// input recovered from inverse dynamics (unclamped; a pure reference
/// evaluation, not a drivability check).
inline VelocityPlan plan_from_speed_profile(const RouteProfile& route, const VehicleParams& params,
                                            const std::vector<double>& v_nodes) {
    if (v_nodes.size() != route.n_nodes())
        throw ConfigError("speed profile must have one entry per route node");
    const std::size_t N = route.n_cells();
    VelocityPlan plan;
    plan.ds = route.ds;
    plan.v_ref = v_nodes;
    plan.s.resize(N + 1);
    plan.u.resize(N);
    plan.cost_to_go.assign(N + 1, 0.0);
    double joules = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
        plan.s[k] = route.node_s(k);
        const double theta = std::asin(route.grade[k]);
        const double v = v_nodes[k], v2 = v_nodes[k + 1];
        const ForceBreakdown f = forces(v, theta, 0.0, params);
        const double u = params.m * (v2 * v2 - v * v) / (2.0 * route.ds) - f.total;
        plan.u[k] = u;
        joules += std::max(u, 0.0) * route.ds;
        if (v + v2 <= 0.0) throw ConfigError("speed profile stalls at cell " + std::to_string(k));
        plan.trip_time_s += 2.0 * route.ds / (v + v2);
    }
    plan.s[N] = route.node_s(N);
    plan.energy_kwh = joules / kJoulePerKwh;
    return plan;
}

/// The route's v_max profile with a linear taper to zero over `taper_m` at
/// both ends, the "drive at the bound" reference.
inline std::vector<double> tapered_vmax_profile(const RouteProfile& route, double taper_m) {
    std::vector<double> v(route.n_nodes());
    const double L = route.length();
    for (std::size_t k = 0; k < route.n_nodes(); ++k) {
        const double s = route.node_s(k);
        const double ramp = taper_m > 0 ? std::min({1.0, s / taper_m, (L - s) / taper_m}) : 1.0;
        v[k] = route.v_max[k] * std::max(0.0, ramp);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Speed bounds ingestion and route assembly

struct SpeedBounds {
    std::vector<double> arc_m;
    std::vector<double> v_max;
    std::vector<double> v_min;
};

/// CSV `arc_m,v_max_mps[,v_min_mps]`; a missing lower bound defaults to half
/// the upper bound.
inline SpeedBounds load_speed_bounds(const std::string& path) {
    auto t = csv::read(path);
    const int ca = t.column("arc_m"), cx = t.column("v_max_mps"), cn = t.column("v_min_mps");
    if (ca < 0 || cx < 0) throw ConfigError("'" + path + "': expected header arc_m,v_max_mps[,v_min_mps]");
    SpeedBounds b;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        if (row[cx] <= 0.0)
            throw ConfigError("'" + path + "': v_max <= 0 at row " + std::to_string(i));
        if (i > 0 && row[ca] <= b.arc_m.back())
            throw ConfigError("'" + path + "': arc_m not strictly increasing at row " + std::to_string(i));
        b.arc_m.push_back(row[ca]);
        b.v_max.push_back(row[cx]);
        b.v_min.push_back(cn >= 0 ? row[cn] : row[cx] / 2.0);
    }
    if (b.arc_m.size() < 2) throw ConfigError("'" + path + "': need >= 2 bound samples");
    return b;
}

/// Builds the DP route: per-cell grade from the map at cell midpoints and
/// per-node bounds resampled from `bounds` (piecewise-linear), with the lower
/// bound tapered to zero over `taper_m` at both ends so the boundary
/// conditions v(0) = v(end) = 0 stay reachable.
inline RouteProfile make_route(const GradeMap& map, double length, double ds,
                               const SpeedBounds& bounds, double taper_m = 100.0) {
    if (length <= 0 || ds <= 0) throw ConfigError("route: length and ds must be > 0");
    const auto n_cells = static_cast<std::size_t>(std::llround(length / ds));
    if (n_cells < 1) throw ConfigError("route: shorter than one cell");
    if (bounds.arc_m.front() > 1e-9 || bounds.arc_m.back() < length - 1e-9)
        throw ConfigError("speed bounds cover [" + std::to_string(bounds.arc_m.front()) + ", " +
                          std::to_string(bounds.arc_m.back()) + "] m but the route needs [0, " +
                          std::to_string(length) + "] m");

    RouteProfile r;
    r.ds = ds;
    r.grade.resize(n_cells);
    r.v_max.resize(n_cells + 1);
    r.v_min.resize(n_cells + 1);
    for (std::size_t k = 0; k < n_cells; ++k)
        r.grade[k] = map.grade_at((static_cast<double>(k) + 0.5) * ds);
    const double L = static_cast<double>(n_cells) * ds;
    for (std::size_t k = 0; k <= n_cells; ++k) {
        const double s = static_cast<double>(k) * ds;
        r.v_max[k] = detail::interp_levels(bounds.arc_m, bounds.v_max, s);
        const double ramp = taper_m > 0 ? std::clamp(std::min(s, L - s) / taper_m, 0.0, 1.0) : 1.0;
        r.v_min[k] = detail::interp_levels(bounds.arc_m, bounds.v_min, s) * ramp;
    }
    r.v_min.front() = 0.0;
    r.v_min.back() = 0.0;
    r.validate();
    return r;
}

inline RouteProfile make_route_const_bounds(const GradeMap& map, double length, double ds,
                                            double v_max, double taper_m = 100.0) {
    SpeedBounds b;
    b.arc_m = {0.0, length};
    b.v_max = {v_max, v_max};
    b.v_min = {v_max / 2.0, v_max / 2.0};
    return make_route(map, length, ds, b, taper_m);
}

// ---------------------------------------------------------------------------
// Plan serialization

/// CSV `arc_m,v_ref_mps,u_N,cost_to_go` (the last node reports u = 0).
inline void save_plan_csv(const VelocityPlan& plan, const std::string& path) {
    csv::Writer w(path);
    w.header({"arc_m", "v_ref_mps", "u_N", "cost_to_go"});
    for (std::size_t k = 0; k < plan.s.size(); ++k)
        w.row({plan.s[k], plan.v_ref[k], k < plan.u.size() ? plan.u[k] : 0.0, plan.cost_to_go[k]});
}

inline VelocityPlan load_plan_csv(const std::string& path) {
    auto t = csv::read(path);
    const int cs = t.column("arc_m"), cv = t.column("v_ref_mps"), cu = t.column("u_N"),
              cc = t.column("cost_to_go");
    if (cs < 0 || cv < 0 || cu < 0 || cc < 0)
        throw ConfigError("'" + path + "': expected header arc_m,v_ref_mps,u_N,cost_to_go");
    if (t.rows.size() < 2) throw ConfigError("'" + path + "': need >= 2 plan rows");
    VelocityPlan plan;
    for (const auto& row : t.rows) {
        plan.s.push_back(row[cs]);
        plan.v_ref.push_back(row[cv]);
        plan.u.push_back(row[cu]);
        plan.cost_to_go.push_back(row[cc]);
    }
    plan.u.pop_back();
    plan.ds = plan.s[1] - plan.s[0];
    return plan;
}

inline nlohmann::json plan_summary_json(const VelocityPlan& plan) {
    return {{"energy_kwh", plan.energy_kwh},
            {"trip_time_min", plan.trip_time_s / 60.0},
            {"gamma", plan.gamma}};
}

}  // namespace gradenav
