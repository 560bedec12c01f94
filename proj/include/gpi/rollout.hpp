#pragma once

// Closed-loop execution on desk-scale environments: point-mass integration
// with optional wall clipping, receding-horizon replanning, Lyapunov
// monitoring, the Y-shape scenario, diversity statistics and field grids.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gpi/parallel.hpp"
#include "gpi/policy.hpp"
#include "gpi/store.hpp"

namespace gpi {

struct Wall {
    double x1, y1, x2, y2;
};

enum class EnvKind { point_mass, maze };

/// Actuated-space dynamics x' <- x' + u dt, with walls (2D only) that stop
/// motion just short of the first contact.
struct Environment {
    EnvKind kind = EnvKind::point_mass;
    std::vector<std::pair<double, double>> bounds;  ///< per actuated dim
    std::vector<Wall> walls;
    std::vector<Vec> goals;  ///< success when within goal_tol of any
    double goal_tol = 0.02;

    static constexpr double kWallClearance = 1e-6;

    void validate() const {
        for (const auto& [lo, hi] : bounds)
            if (!(lo < hi)) throw Error("environment: empty bounds");
        if (!walls.empty() && bounds.size() != 2) throw Error("environment: walls need a 2D environment");
        for (const auto& w : walls)
            if (!in_bounds(std::array{w.x1, w.y1}) || !in_bounds(std::array{w.x2, w.y2}))
                throw Error("environment: wall outside bounds");
        for (const auto& g : goals)
            if (g.size() != bounds.size() || !in_bounds(g)) throw Error("environment: goal outside bounds");
        if (!(goal_tol > 0.0)) throw Error("environment: goal_tol must be positive");
    }

    [[nodiscard]] bool in_bounds(std::span<const double> x) const noexcept {
        if (x.size() != bounds.size()) return false;
        for (std::size_t j = 0; j < x.size(); ++j)
            if (x[j] < bounds[j].first || x[j] > bounds[j].second) return false;
        return true;
    }

    [[nodiscard]] bool at_goal(std::span<const double> x) const noexcept {
        for (const auto& g : goals) {
            double s = 0.0;
            for (std::size_t j = 0; j < g.size(); ++j) s += (x[j] - g[j]) * (x[j] - g[j]);
            if (std::sqrt(s) < goal_tol) return true;
        }
        return false;
    }

    /// Parameter in [0,1] along p->q of the first wall contact, if any.
    [[nodiscard]] std::optional<double> first_contact(std::span<const double> p, std::span<const double> q) const {
        std::optional<double> best;
        const double rx = q[0] - p[0], ry = q[1] - p[1];
        for (const auto& w : walls) {
            const double sx = w.x2 - w.x1, sy = w.y2 - w.y1;
            const double denom = rx * sy - ry * sx;
            const double qpx = w.x1 - p[0], qpy = w.y1 - p[1];
            std::optional<double> t;
            if (std::abs(denom) < 1e-15) {
                if (std::abs(qpx * ry - qpy * rx) > 1e-15) continue;  // parallel, not collinear
                const double rr = rx * rx + ry * ry;
                if (rr == 0.0) continue;
                double t0 = (qpx * rx + qpy * ry) / rr;
                double t1 = t0 + (sx * rx + sy * ry) / rr;
                if (t0 > t1) std::swap(t0, t1);
                if (t1 < 0.0 || t0 > 1.0) continue;
                t = std::max(0.0, t0);
            } else {
                const double tt = (qpx * sy - qpy * sx) / denom;
                const double uu = (qpx * ry - qpy * rx) / denom;
                if (tt < 0.0 || tt > 1.0 || uu < 0.0 || uu > 1.0) continue;
                t = tt;
            }
            if (!best || *t < *best) best = t;
        }
        return best;
    }

    /// End point of a move from p toward q after wall clipping.
    [[nodiscard]] Vec move(std::span<const double> p, std::span<const double> q) const {
        Vec out(q.begin(), q.end());
        if (walls.empty()) return out;
        const auto t = first_contact(p, q);
        if (!t) return out;
        const double len = std::hypot(q[0] - p[0], q[1] - p[1]);
        const double s = std::max(0.0, *t - kWallClearance / len);
        return {p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])};
    }

    [[nodiscard]] bool on_wall(std::span<const double> x) const {
        for (const auto& w : walls) {
            const double sx = w.x2 - w.x1, sy = w.y2 - w.y1;
            const double cross = (x[0] - w.x1) * sy - (x[1] - w.y1) * sx;
            if (std::abs(cross) > 1e-12 * std::max(1.0, std::hypot(sx, sy))) continue;
            const double along = (x[0] - w.x1) * sx + (x[1] - w.y1) * sy;
            if (along >= 0.0 && along <= sx * sx + sy * sy) return true;
        }
        return false;
    }
};

/// Point-mass environment spanning the bounding box of the dataset's actuated
/// coordinates, padded by `margin`, with every demo end state as a goal.
[[nodiscard]] inline Environment point_mass_for(const Dataset& ds, double margin = 0.0, double goal_tol = 0.02) {
    const auto& layout = ds.layout;
    Environment env;
    env.goal_tol = goal_tol;
    env.bounds.assign(layout.actuated_dims(),
                      {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
    for (const auto& d : ds.demos) {
        for (std::size_t t = 0; t < d.states.rows(); ++t) {
            auto a = layout.actuated_view(d.states.row(t));
            for (std::size_t j = 0; j < a.size(); ++j) {
                env.bounds[j].first = std::min(env.bounds[j].first, a[j] - margin);
                env.bounds[j].second = std::max(env.bounds[j].second, a[j] + margin);
            }
        }
        auto g = layout.actuated_view(d.states.row(d.states.rows() - 1));
        env.goals.emplace_back(g.begin(), g.end());
    }
    for (auto& [lo, hi] : env.bounds)
        if (!(lo < hi)) hi = lo + 1.0;
    return env;
}

/// min over demos of the Euclidean distance from an actuated point to the demo curve.
[[nodiscard]] inline double curve_distance(const Dataset& ds, std::span<const double> act) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& d : ds.demos) best = std::min(best, project_to_polyline(act, d, ds.layout).distance);
    return best;
}

struct RolloutTrace {
    Matrix states;   ///< (N+1) x dims
    Matrix actions;  ///< N x m
    Vec d_min;       ///< N+1
    Vec V;           ///< N+1, d_min^2 / 2
    bool success = false;
    std::optional<std::size_t> steps_to_success;
    std::size_t act_lo = 0;
    std::size_t act_hi = 0;
    double dt = 0.0;
    std::size_t replans = 0;

    [[nodiscard]] std::span<const double> actuated(std::size_t t) const {
        return states.row(t).subspan(act_lo, act_hi - act_lo);
    }
};

/// Closed loop: a policy step every H steps, replaying the top demo's next
/// stored actions in between, Euler-integrated on the actuated dims.
[[nodiscard]] inline RolloutTrace run_episode(const Environment& env, const Dataset& ds, const MetricConfig& mcfg,
                                              const PolicyConfig& pcfg, std::span<const double> x0, std::size_t steps,
                                              double dt, std::uint64_t episode = 0, ThreadPool* pool = nullptr) {
    const auto& layout = ds.layout;
    if (x0.size() != layout.dims()) throw Error("run_episode: x0 does not match layout");
    if (!env.in_bounds(layout.actuated_view(x0))) throw Error("run_episode: x0 out of bounds");
    if (!(dt > 0.0)) throw Error("run_episode: dt must be positive");

    const Policy policy(ds, mcfg, pcfg);
    ExecState exec(pcfg, episode, steps);
    const std::size_t m = layout.actuated_dims(), lo = layout.actuated_lo();
    const std::size_t H = pcfg.horizon;
    std::optional<std::size_t> angle;
    if (pcfg.frame == Frame::relative) angle = RelativeFrame::from_layout(layout).angle;

    RolloutTrace tr;
    tr.act_lo = lo;
    tr.act_hi = layout.actuated_hi();
    tr.dt = dt;
    tr.actions = Matrix(0, m);
    Vec x(x0.begin(), x0.end());
    auto record = [&](std::size_t n) {
        tr.states.append_row(x);
        const double d = curve_distance(ds, layout.actuated_view(x));
        tr.d_min.push_back(d);
        tr.V.push_back(0.5 * d * d);
        if (!tr.success && env.at_goal(layout.actuated_view(x))) {
            tr.success = true;
            tr.steps_to_success = n;
        }
    };
    record(0);

    const Demonstration* replay = nullptr;
    std::size_t replay_k = 0;
    Vec u(m);
    for (std::size_t n = 0; n < steps; ++n) {
        if (n % H == 0) {
            auto decision = policy.step(x, exec, pool);
            u = std::move(decision.action);
            replay = ds.find(decision.selected.front());
            replay_k = decision.top_kappa + 1;
            ++tr.replans;
        } else {
            if (replay && replay_k < replay->actions.rows()) {
                auto row = replay->actions.row(replay_k);
                u.assign(row.begin(), row.end());
                if (angle) u = rotate_to_global(u, x[*angle]);
            } else {
                std::fill(u.begin(), u.end(), 0.0);
            }
            ++replay_k;
        }
        Vec target(m);
        for (std::size_t j = 0; j < m; ++j) target[j] = x[lo + j] + u[j] * dt;
        const auto next = env.move(layout.actuated_view(x), target);
        std::copy(next.begin(), next.end(), x.begin() + static_cast<std::ptrdiff_t>(lo));
        tr.actions.append_row(u);
        record(n + 1);
    }
    return tr;
}

/// Independent episodes from each row of `starts`; episode RNG streams are
/// keyed by row index so results do not depend on the thread count.
[[nodiscard]] inline std::vector<RolloutTrace> run_batch(const Environment& env, const Dataset& ds,
                                                         const MetricConfig& mcfg, const PolicyConfig& pcfg,
                                                         const Matrix& starts, std::size_t steps, double dt,
                                                         std::size_t threads = 1) {
    std::vector<RolloutTrace> traces(starts.rows());
    ThreadPool pool(threads);
    pool.parallel_for(starts.rows(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) traces[i] = run_episode(env, ds, mcfg, pcfg, starts.row(i), steps, dt, i);
    });
    return traces;
}

struct LyapunovReport {
    bool monotone = true;
    std::optional<std::size_t> first_violation;
};

/// V[t+1] <= V[t] + tol wherever d_min[t] lies outside the convergence band.
[[nodiscard]] inline LyapunovReport lyapunov_check(const RolloutTrace& trace, double tol, double band = 0.0) {
    LyapunovReport r;
    for (std::size_t t = 0; t + 1 < trace.V.size(); ++t) {
        if (trace.d_min[t] <= band) continue;
        if (trace.V[t + 1] > trace.V[t] + tol) {
            r.monotone = false;
            r.first_violation = t;
            return r;
        }
    }
    return r;
}

/// Band below which discrete overshoot of the attraction flow is expected.
[[nodiscard]] inline double convergence_band(const PolicyConfig& pcfg, double dt) noexcept {
    return 2.0 * dt * pcfg.lambda2.max_value();
}

/// Two planar demos sharing a vertical stem, then splitting by +-branch_angle
/// from vertical. Demo 0 bends toward -x, demo 1 toward +x.
[[nodiscard]] inline Dataset generate_y_shape(double branch_angle = kPi / 6.0, double stem_len = 0.4,
                                              double branch_len = 0.4, std::size_t points_per_demo = 81,
                                              double dt = 0.01, double origin_x = 0.5, double origin_y = 0.1) {
    if (points_per_demo < 3) throw Error("y_shape: need at least 3 points per demo");
    if (!(stem_len >= 0.0) || !(branch_len > 0.0)) throw Error("y_shape: lengths must be positive");
    const std::size_t segments = points_per_demo - 1;
    std::size_t stem_segs = static_cast<std::size_t>(
        std::llround(static_cast<double>(segments) * stem_len / (stem_len + branch_len)));
    if (stem_len > 0.0) stem_segs = std::clamp<std::size_t>(stem_segs, 1, segments - 1);
    const std::size_t branch_segs = segments - stem_segs;

    Dataset ds;
    ds.layout = euclidean_layout(2);
    ds.dt = dt;
    for (int side = 0; side < 2; ++side) {
        const double sign = side == 0 ? -1.0 : 1.0;
        Demonstration d;
        d.id = side;
        d.states = Matrix(points_per_demo, 2);
        const double fork_y = origin_y + stem_len;
        for (std::size_t i = 0; i <= stem_segs; ++i) {
            d.states(i, 0) = origin_x;
            d.states(i, 1) = stem_segs ? origin_y + stem_len * static_cast<double>(i) / static_cast<double>(stem_segs)
                                       : origin_y;
        }
        const double dx = sign * std::sin(branch_angle), dy = std::cos(branch_angle);
        for (std::size_t i = 1; i <= branch_segs; ++i) {
            const double s = branch_len * static_cast<double>(i) / static_cast<double>(branch_segs);
            d.states(stem_segs + i, 0) = origin_x + s * dx;
            d.states(stem_segs + i, 1) = fork_y + s * dy;
        }
        finalize_demonstration(d, ds.layout, dt);
        ds.demos.push_back(std::move(d));
    }
    return ds;
}

/// Mean over unordered trace pairs of the mean pointwise actuated distance,
/// truncated to the shorter trace.
[[nodiscard]] inline double diversity(const std::vector<RolloutTrace>& traces) {
    if (traces.size() < 2) return 0.0;
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < traces.size(); ++a)
        for (std::size_t b = a + 1; b < traces.size(); ++b) {
            const std::size_t n = std::min(traces[a].states.rows(), traces[b].states.rows());
            double s = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                auto pa = traces[a].actuated(t), pb = traces[b].actuated(t);
                double d2 = 0.0;
                for (std::size_t j = 0; j < pa.size(); ++j) d2 += (pa[j] - pb[j]) * (pa[j] - pb[j]);
                s += std::sqrt(d2);
            }
            total += n ? s / static_cast<double>(n) : 0.0;
            ++pairs;
        }
    return total / static_cast<double>(pairs);
}

struct GridSpec {
    std::size_t resolution = 50;
    std::array<double, 2> lo{0.0, 0.0};
    std::array<double, 2> hi{1.0, 1.0};

    /// Coordinate of index i along axis; a single-point grid sits at the center.
    [[nodiscard]] double coord(std::size_t axis, std::size_t i) const noexcept {
        if (resolution <= 1) return 0.5 * (lo[axis] + hi[axis]);
        return lo[axis] + (hi[axis] - lo[axis]) * static_cast<double>(i) / static_cast<double>(resolution - 1);
    }
};

struct FieldSample {
    double gx = 0.0, gy = 0.0;
    double d_min = 0.0;    ///< min over demos of d_total
    double energy = 0.0;   ///< soft-min -log(sum exp(-beta d)) / beta
    double entropy = 0.0;  ///< of the top-K weights
    double flow_x = 0.0, flow_y = 0.0;
};

/// Distance, energy and composed flow on a 2D grid over the actuated plane.
/// `fixed_state` supplies the non-actuated coordinates (empty when all are actuated).
[[nodiscard]] inline std::vector<FieldSample> field_grid(const Dataset& ds, const MetricConfig& mcfg,
                                                         const PolicyConfig& pcfg, const GridSpec& grid,
                                                         std::span<const double> fixed_state = {}) {
    const auto& layout = ds.layout;
    if (layout.actuated_dims() != 2) throw Error("field_grid: actuated space must be 2D");
    if (grid.resolution < 1) throw Error("field_grid: resolution must be >= 1");
    Vec base(layout.dims(), 0.0);
    if (!fixed_state.empty()) {
        if (fixed_state.size() != layout.dims()) throw Error("field_grid: fixed state does not match layout");
        base.assign(fixed_state.begin(), fixed_state.end());
    }
    const Policy policy(ds, mcfg, pcfg);
    const std::size_t lo = layout.actuated_lo();
    std::vector<FieldSample> out;
    out.reserve(grid.resolution * grid.resolution);
    for (std::size_t iy = 0; iy < grid.resolution; ++iy)
        for (std::size_t ix = 0; ix < grid.resolution; ++ix) {
            FieldSample s;
            s.gx = grid.coord(0, ix);
            s.gy = grid.coord(1, iy);
            Vec x = base;
            x[lo] = s.gx;
            x[lo + 1] = s.gy;
            ExecState exec(pcfg, out.size());
            const auto dec = policy.step(x, exec);
            s.d_min = std::numeric_limits<double>::infinity();
            for (const auto& d : dec.per_demo) s.d_min = std::min(s.d_min, d.d_total);
            if (pcfg.beta > 0.0) {
                double acc = 0.0;
                for (const auto& d : dec.per_demo) acc += std::exp(-pcfg.beta * (d.d_total - s.d_min));
                s.energy = s.d_min - std::log(acc) / pcfg.beta;
            } else {
                s.energy = s.d_min;
            }
            for (double w : dec.weights)
                if (w > 0.0) s.entropy -= w * std::log(w);
            s.flow_x = dec.action[0];
            s.flow_y = dec.action[1];
            out.push_back(s);
        }
    return out;
}

}  // namespace gpi
