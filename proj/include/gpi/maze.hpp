#pragma once

// Grid mazes, waypoint demonstrations and training-free suffix selection:
//   D(i, k) = c_start |x0 - x_k^(i)| + c_goal |x_g - x_g^(i)| + c_horizon (H_i - k)

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <vector>

#include "gpi/rollout.hpp"
#include "gpi/store.hpp"

namespace gpi {

/// Perfect maze on an n x n grid of unit cells spanning [0, n]^2.
struct MazeGrid {
    enum Dir { east = 0, north = 1, west = 2, south = 3 };

    std::size_t cells = 4;
    std::vector<std::array<bool, 4>> open;  ///< per cell, passage in each direction
    std::size_t goal_cell = 0;
    double goal_tol = 0.05;

    [[nodiscard]] std::size_t index(std::size_t cx, std::size_t cy) const noexcept { return cy * cells + cx; }
    [[nodiscard]] std::array<double, 2> center(std::size_t cell) const noexcept {
        return {static_cast<double>(cell % cells) + 0.5, static_cast<double>(cell / cells) + 0.5};
    }

    [[nodiscard]] std::optional<std::size_t> neighbor(std::size_t cell, int dir) const noexcept {
        const std::size_t cx = cell % cells, cy = cell / cells;
        switch (dir) {
            case east: return cx + 1 < cells ? std::optional(index(cx + 1, cy)) : std::nullopt;
            case north: return cy + 1 < cells ? std::optional(index(cx, cy + 1)) : std::nullopt;
            case west: return cx > 0 ? std::optional(index(cx - 1, cy)) : std::nullopt;
            case south: return cy > 0 ? std::optional(index(cx, cy - 1)) : std::nullopt;
        }
        return std::nullopt;
    }

    /// Shortest cell path from a to b (inclusive).
    [[nodiscard]] std::vector<std::size_t> path(std::size_t a, std::size_t b) const {
        std::vector<std::size_t> prev(open.size(), std::numeric_limits<std::size_t>::max());
        std::queue<std::size_t> q;
        q.push(a);
        prev[a] = a;
        while (!q.empty()) {
            const auto c = q.front();
            q.pop();
            if (c == b) break;
            for (int d = 0; d < 4; ++d) {
                if (!open[c][static_cast<std::size_t>(d)]) continue;
                const auto n = neighbor(c, d);
                if (n && prev[*n] == std::numeric_limits<std::size_t>::max()) {
                    prev[*n] = c;
                    q.push(*n);
                }
            }
        }
        std::vector<std::size_t> out{b};
        while (out.back() != a) out.push_back(prev[out.back()]);
        std::reverse(out.begin(), out.end());
        return out;
    }

    [[nodiscard]] Environment environment() const {
        Environment env;
        env.kind = EnvKind::maze;
        const double n = static_cast<double>(cells);
        env.bounds = {{0.0, n}, {0.0, n}};
        env.walls = {{0, 0, n, 0}, {n, 0, n, n}, {n, n, 0, n}, {0, n, 0, 0}};
        for (std::size_t c = 0; c < open.size(); ++c) {
            const double x = static_cast<double>(c % cells), y = static_cast<double>(c / cells);
            if (neighbor(c, east) && !open[c][east]) env.walls.push_back({x + 1, y, x + 1, y + 1});
            if (neighbor(c, north) && !open[c][north]) env.walls.push_back({x, y + 1, x + 1, y + 1});
        }
        const auto g = center(goal_cell);
        env.goals = {Vec{g[0], g[1]}};
        env.goal_tol = goal_tol;
        return env;
    }
};

/// Randomized depth-first carving; the goal cell is drawn from the same stream.
[[nodiscard]] inline MazeGrid generate_maze(std::size_t cells, std::uint64_t seed) {
    if (cells < 2) throw Error("maze: need at least 2 cells per side");
    MazeGrid g;
    g.cells = cells;
    g.open.assign(cells * cells, {false, false, false, false});
    Rng rng(derive_seed(seed, "maze"));
    std::vector<bool> seen(cells * cells, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
        const auto c = stack.back();
        std::vector<int> dirs;
        for (int d = 0; d < 4; ++d) {
            const auto n = g.neighbor(c, d);
            if (n && !seen[*n]) dirs.push_back(d);
        }
        if (dirs.empty()) {
            stack.pop_back();
            continue;
        }
        const int d = dirs[std::uniform_int_distribution<std::size_t>(0, dirs.size() - 1)(rng)];
        const auto n = *g.neighbor(c, d);
        g.open[c][static_cast<std::size_t>(d)] = true;
        g.open[n][static_cast<std::size_t>((d + 2) % 4)] = true;
        seen[n] = true;
        stack.push_back(n);
    }
    g.goal_cell = std::uniform_int_distribution<std::size_t>(0, cells * cells - 1)(rng);
    return g;
}

/// Cell-center waypoint demonstrations ending at the goal; about half detour
/// through an intermediate cell first.
[[nodiscard]] inline Dataset generate_maze_demos(const MazeGrid& g, std::size_t count, std::uint64_t seed,
                                                 double dt = 1.0) {
    if (count == 0) throw Error("maze: need at least one demonstration");
    Rng rng(derive_seed(seed, "maze-demos"));
    std::uniform_int_distribution<std::size_t> pick(0, g.open.size() - 1);
    Dataset ds;
    ds.layout = euclidean_layout(2);
    ds.dt = dt;
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t start = pick(rng);
        while (start == g.goal_cell) start = pick(rng);
        std::vector<std::size_t> cells;
        if (std::bernoulli_distribution(0.5)(rng)) {
            const auto via = pick(rng);
            cells = g.path(start, via);
            const auto rest = g.path(via, g.goal_cell);
            cells.insert(cells.end(), rest.begin() + 1, rest.end());
        } else {
            cells = g.path(start, g.goal_cell);
        }
        if (cells.size() < 2) cells = g.path(start, g.goal_cell);
        Demonstration d;
        d.id = static_cast<int>(i);
        for (auto c : cells) d.states.append_row(g.center(c));
        finalize_demonstration(d, ds.layout, dt);
        ds.demos.push_back(std::move(d));
    }
    return ds;
}

struct SuffixCoefficients {
    double start = 10.0;
    double goal = 5.0;
    double horizon = 0.1;
};

struct SuffixSelection {
    int demo = 0;
    std::size_t k = 0;
    double cost = 0.0;
    Matrix suffix;  ///< actuated states k..H of the chosen demo
};

/// Exhaustive argmin of D(i, k); each demo's goal is its final state and H_i its
/// last index. Ties keep the first (i, k) in dataset order.
[[nodiscard]] inline SuffixSelection maze_select_suffix(const Dataset& ds, std::span<const double> x0,
                                                        std::span<const double> goal,
                                                        const SuffixCoefficients& c = {}) {
    if (ds.demos.empty()) throw Error("maze_select_suffix: empty demo set");
    const auto& layout = ds.layout;
    const std::size_t m = layout.actuated_dims();
    if (x0.size() != m || goal.size() != m) throw Error("maze_select_suffix: expected actuated-space points");
    auto dist = [m](std::span<const double> a, std::span<const double> b) {
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
        return std::sqrt(s);
    };
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0, best_k = 0;
    for (std::size_t i = 0; i < ds.demos.size(); ++i) {
        const auto& d = ds.demos[i];
        const std::size_t H = d.states.rows() - 1;
        const double goal_term = c.goal * dist(goal, layout.actuated_view(d.states.row(H)));
        for (std::size_t k = 0; k <= H; ++k) {
            const double D = c.start * dist(x0, layout.actuated_view(d.states.row(k))) + goal_term +
                             c.horizon * static_cast<double>(H - k);
            if (D < best) {
                best = D;
                best_i = i;
                best_k = k;
            }
        }
    }
    SuffixSelection sel;
    const auto& d = ds.demos[best_i];
    sel.demo = d.id;
    sel.k = best_k;
    sel.cost = best;
    for (std::size_t t = best_k; t < d.states.rows(); ++t) sel.suffix.append_row(layout.actuated_view(d.states.row(t)));
    return sel;
}

struct MazeTrial {
    bool success = false;
    bool collided = false;
    int demo = 0;
    std::size_t k = 0;
    double selection_seconds = 0.0;
    std::size_t steps = 0;
    Matrix path;
};

/// Select a suffix, then track its waypoints at constant speed with wall clipping.
[[nodiscard]] inline MazeTrial run_maze_trial(const Environment& env, const Dataset& ds, std::span<const double> x0,
                                              std::span<const double> goal, double speed = 1.0, double dt = 0.01,
                                              std::size_t max_steps = 20000, const SuffixCoefficients& coeffs = {}) {
    MazeTrial r;
    const auto t0 = std::chrono::steady_clock::now();
    const auto sel = maze_select_suffix(ds, x0, goal, coeffs);
    r.selection_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.demo = sel.demo;
    r.k = sel.k;

    Vec x(x0.begin(), x0.end());
    r.path.append_row(x);
    std::size_t wp = 0;
    const double step_len = speed * dt;
    for (std::size_t n = 0; n < max_steps; ++n) {
        if (env.at_goal(x)) {
            r.success = true;
            break;
        }
        if (wp >= sel.suffix.rows()) break;
        auto target = sel.suffix.row(wp);
        const double dx = target[0] - x[0], dy = target[1] - x[1];
        const double dist = std::hypot(dx, dy);
        Vec want = dist <= step_len ? Vec(target.begin(), target.end())
                                    : Vec{x[0] + dx / dist * step_len, x[1] + dy / dist * step_len};
        auto next = env.move(x, want);
        if (next != want) r.collided = true;
        if (next == want && dist <= step_len) ++wp;
        if (r.collided) {
            x = next;
            r.path.append_row(x);
            break;
        }
        x = std::move(next);
        r.path.append_row(x);
        r.steps = n + 1;
    }
    if (!r.success) r.success = env.at_goal(x);
    return r;
}

/// Trial start: a random stored state plus uniform noise of +-jitter per axis.
[[nodiscard]] inline Matrix sample_maze_starts(const Dataset& ds, std::size_t trials, std::uint64_t seed,
                                               double jitter = 0.1) {
    Rng rng(derive_seed(seed, "maze-trials"));
    std::uniform_int_distribution<std::size_t> demo_pick(0, ds.demos.size() - 1);
    std::uniform_real_distribution<double> noise(-jitter, jitter);
    Matrix starts;
    for (std::size_t i = 0; i < trials; ++i) {
        const auto& d = ds.demos[demo_pick(rng)];
        const auto k = std::uniform_int_distribution<std::size_t>(0, d.states.rows() - 2)(rng);
        auto s = ds.layout.actuated_view(d.states.row(k));
        starts.append_row(Vec{s[0] + noise(rng), s[1] + noise(rng)});
    }
    return starts;
}

}  // namespace gpi
