#pragma once

// Flow policy synthesis: nearest-state retrieval, progression and attraction
// flows, softmax composition over the K closest demonstrations, and the
// execution-time variants (relative frame, smoothing, recent-action
// suppression, query perturbation, demonstration subsampling).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "gpi/metrics.hpp"
#include "gpi/parallel.hpp"
#include "gpi/store.hpp"

namespace gpi {

// ── Configuration ───────────────────────────────────────────────────────────

/// Flow weight lambda(d): a constant, exp(-gamma d) or 1 - exp(-gamma d).
struct FlowWeight {
    enum class Kind { constant, decay, rise };
    Kind kind = Kind::constant;
    double value = 1.0;
    double gamma = 1.0;

    [[nodiscard]] static FlowWeight constant(double v) { return {Kind::constant, v, 1.0}; }
    [[nodiscard]] static FlowWeight decaying(double gamma) { return {Kind::decay, 1.0, gamma}; }
    [[nodiscard]] static FlowWeight rising(double gamma) { return {Kind::rise, 1.0, gamma}; }

    [[nodiscard]] double operator()(double d) const noexcept {
        switch (kind) {
            case Kind::constant: return value;
            case Kind::decay: return std::exp(-gamma * d);
            case Kind::rise: return 1.0 - std::exp(-gamma * d);
        }
        return value;
    }

    /// Supremum over d >= 0.
    [[nodiscard]] double max_value() const noexcept { return kind == Kind::constant ? value : 1.0; }

    void validate(const char* name) const {
        if (kind == Kind::constant && !(value >= 0.0 && std::isfinite(value)))
            throw Error(std::string("policy: ") + name + " must be finite and >= 0");
        if (kind != Kind::constant && !(gamma > 0.0 && std::isfinite(gamma)))
            throw Error(std::string("policy: ") + name + " schedule needs gamma > 0");
    }
};

/// Vertex mode attracts toward the nearest stored state; polyline mode
/// measures the robot distance to the continuous piecewise-linear curve.
enum class AttractionMode { vertex, polyline };

struct PolicyConfig {
    FlowWeight lambda1 = FlowWeight::constant(1.0);
    FlowWeight lambda2 = FlowWeight::constant(1.0);
    std::size_t K = 3;
    double beta = 10.0;
    std::size_t horizon = 1;
    double smoothing_alpha = 1.0;
    std::size_t suppress_window = 0;  ///< M; 0 disables suppression
    double suppress_eps = 0.0;
    double noise_sigma_start = 0.0;
    double noise_sigma_end = 0.0;
    double subsample_fraction = 1.0;
    Frame frame = Frame::absolute;
    AttractionMode mode = AttractionMode::vertex;
    std::uint64_t seed = 0;

    void validate() const {
        lambda1.validate("lambda1");
        lambda2.validate("lambda2");
        if (K < 1) throw Error("policy: K must be >= 1");
        if (horizon < 1) throw Error("policy: horizon must be >= 1");
        if (!(beta >= 0.0 && std::isfinite(beta))) throw Error("policy: beta must be finite and >= 0");
        if (!(smoothing_alpha >= 0.0 && smoothing_alpha <= 1.0)) throw Error("policy: smoothing_alpha must be in [0,1]");
        if (!(suppress_eps >= 0.0)) throw Error("policy: suppress_eps must be >= 0");
        if (!(noise_sigma_start >= 0.0) || !(noise_sigma_end >= 0.0)) throw Error("policy: noise sigmas must be >= 0");
        if (!(subsample_fraction > 0.0 && subsample_fraction <= 1.0))
            throw Error("policy: subsample_fraction must be in (0,1]");
    }

    [[nodiscard]] bool stochastic() const noexcept {
        return noise_sigma_start > 0.0 || noise_sigma_end > 0.0 || subsample_fraction < 1.0;
    }
};

/// Per-episode mutable execution memory. One owner per episode.
struct ExecState {
    ExecState(const PolicyConfig& cfg, std::uint64_t episode = 0, std::size_t total_steps = 1)
        : total_steps(total_steps),
          perturb_rng(derive_seed(cfg.seed, "perturbation", episode)),
          subsample_rng(derive_seed(cfg.seed, "subsample", episode)) {}

    std::size_t step = 0;
    std::size_t total_steps = 1;
    std::optional<Vec> smoothed;
    std::deque<Vec> window;
    Rng perturb_rng;
    Rng subsample_rng;
};

// ── Elementary operations ───────────────────────────────────────────────────

struct NearestState {
    std::size_t kappa = 0;
    CompositeDistance distance;
};

/// argmin over t of the composite distance to the demo states; ties to the lowest t.
[[nodiscard]] inline NearestState nearest_index(std::span<const double> query, const Demonstration& demo,
                                                const CompositeMetric& metric) {
    if (query.size() != metric.dims()) throw Error("nearest_index: query does not match layout");
    const auto [t, d] = metric.nearest_row(query.data(), demo.states.data().data(), demo.states.rows());
    return {t, d};
}

[[nodiscard]] inline NearestState nearest_index(std::span<const double> query, const Demonstration& demo,
                                                const StateLayout& layout, const MetricConfig& cfg) {
    return nearest_index(query, demo, CompositeMetric(layout, cfg));
}

inline constexpr double kAttractionEps = 1e-9;

/// Unit vector from the query toward a target point; zero inside kAttractionEps.
[[nodiscard]] inline Vec attraction(std::span<const double> query_act, std::span<const double> target_act) {
    if (query_act.size() != target_act.size()) throw Error("attraction: length mismatch");
    Vec g(query_act.size());
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = target_act[j] - query_act[j];
    const double n = norm(g);
    if (n < kAttractionEps) {
        std::fill(g.begin(), g.end(), 0.0);
        return g;
    }
    for (double& v : g) v /= n;
    return g;
}

/// Attraction toward the nearest stored vertex x'_kappa.
[[nodiscard]] inline Vec attraction(std::span<const double> query_act, const Demonstration& demo,
                                    const StateLayout& layout, std::size_t kappa) {
    return attraction(query_act, layout.actuated_view(demo.states.row(kappa)));
}

/// Attraction toward the projected point on the continuous curve.
[[nodiscard]] inline Vec attraction(std::span<const double> query_act, const Projection& projection) {
    return attraction(query_act, projection.closest);
}

/// exp(-beta d_i) / sum_j exp(-beta d_j), shifted by the minimum distance.
[[nodiscard]] inline Vec softmax_weights(std::span<const double> distances, double beta) {
    Vec w(distances.size());
    if (w.empty()) return w;
    const double dmin = *std::min_element(distances.begin(), distances.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(-beta * (distances[i] - dmin));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

/// u_smooth = alpha u + (1 - alpha) u_prev_smooth; the first call passes u through.
[[nodiscard]] inline Vec smooth_action(std::span<const double> u, ExecState& state, double alpha) {
    Vec out(u.begin(), u.end());
    if (state.smoothed && state.smoothed->size() == out.size())
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = alpha * out[j] + (1.0 - alpha) * (*state.smoothed)[j];
    state.smoothed = out;
    return out;
}

struct SuppressionResult {
    Vec action;
    std::size_t index = 0;
    bool fallback = false;  ///< every candidate sat within eps of the window
};

[[nodiscard]] inline double inf_norm_distance(std::span<const double> a, std::span<const double> b) noexcept {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Picks the best-ranked candidate farther than eps (infinity norm) from every
/// action in the sliding window, then records the choice in the window.
[[nodiscard]] inline SuppressionResult suppress_recent(const std::vector<Vec>& ranked, ExecState& state,
                                                       std::size_t window, double eps) {
    if (ranked.empty()) throw Error("suppress_recent: no candidates");
    SuppressionResult r{ranked.front(), 0, false};
    if (window == 0) return r;
    bool found = false;
    for (std::size_t c = 0; c < ranked.size() && !found; ++c) {
        const bool clear = std::all_of(state.window.begin(), state.window.end(),
                                       [&](const Vec& w) { return inf_norm_distance(ranked[c], w) > eps; });
        if (clear) {
            r = {ranked[c], c, false};
            found = true;
        }
    }
    if (!found) r.fallback = true;
    state.window.push_back(r.action);
    while (state.window.size() > window) state.window.pop_front();
    return r;
}

/// Noise level at `step`, interpolated log-linearly (linearly if an endpoint is 0).
[[nodiscard]] inline double scheduled_sigma(std::size_t step, std::size_t total_steps, double sigma_start,
                                            double sigma_end) noexcept {
    const double frac = total_steps > 1
                            ? std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps - 1))
                            : 0.0;
    if (sigma_start > 0.0 && sigma_end > 0.0) return sigma_start * std::pow(sigma_end / sigma_start, frac);
    return sigma_start + (sigma_end - sigma_start) * frac;
}

/// Adds iid Gaussian noise to the actuated coordinates only.
[[nodiscard]] inline Vec perturb_query(std::span<const double> query, const StateLayout& layout, std::size_t step,
                                       std::size_t total_steps, double sigma_start, double sigma_end, Rng& rng) {
    Vec out(query.begin(), query.end());
    const double sigma = scheduled_sigma(step, total_steps, sigma_start, sigma_end);
    if (sigma <= 0.0) return out;
    std::normal_distribution<double> noise(0.0, sigma);
    for (std::size_t j = layout.actuated_lo(); j < layout.actuated_hi(); ++j) out[j] += noise(rng);
    return out;
}

// ── Object-relative frame ───────────────────────────────────────────────────

/// Indices of the agent position, object position and object angle in a
/// planar pushing layout.
struct RelativeFrame {
    std::size_t agent = 0;
    std::size_t object = 0;
    std::size_t angle = 0;

    [[nodiscard]] static RelativeFrame from_layout(const StateLayout& layout) {
        std::optional<std::size_t> agent, object, angle;
        const auto& blocks = layout.blocks();
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto& b = blocks[i];
            if (layout.is_actuated(i) && b.metric == MetricKind::euclidean && b.size() == 2 && !agent) agent = b.lo;
            else if (!layout.is_actuated(i) && b.metric == MetricKind::euclidean && b.size() == 2 && !object)
                object = b.lo;
            else if (b.metric == MetricKind::angular_axial && !angle) angle = b.lo;
        }
        if (!agent || !object || !angle || layout.actuated_dims() != 2)
            throw Error("relative frame: layout mismatch (needs 2D agent, 2D object and an angle block)");
        return {*agent, *object, *angle};
    }
};

[[nodiscard]] inline std::array<double, 2> rotate(std::span<const double> v, double theta) noexcept {
    const double c = std::cos(theta), s = std::sin(theta);
    return {c * v[0] - s * v[1], s * v[0] + c * v[1]};
}

/// Agent position re-expressed as R(-theta_b) (p_a - p_b); other entries unchanged.
[[nodiscard]] inline Vec to_relative(std::span<const double> state, const StateLayout& layout) {
    if (state.size() != layout.dims()) throw Error("relative frame: layout mismatch");
    const auto f = RelativeFrame::from_layout(layout);
    Vec out(state.begin(), state.end());
    const double d[2] = {state[f.agent] - state[f.object], state[f.agent + 1] - state[f.object + 1]};
    const auto r = rotate(d, -state[f.angle]);
    out[f.agent] = r[0];
    out[f.agent + 1] = r[1];
    return out;
}

/// Inverse point map R(theta_b) p + p_b, with block_pose = (x_b, y_b, theta_b).
[[nodiscard]] inline Vec from_relative(std::span<const double> point, std::span<const double> block_pose) {
    if (point.size() != 2 || block_pose.size() != 3) throw Error("from_relative: expected a 2-vector and a 3-pose");
    const auto r = rotate(point, block_pose[2]);
    return {r[0] + block_pose[0], r[1] + block_pose[1]};
}

/// Rotate a relative-frame velocity back to the global frame (no translation).
[[nodiscard]] inline Vec rotate_to_global(std::span<const double> v, double theta) {
    const auto r = rotate(v, theta);
    return {r[0], r[1]};
}

/// Express every demo state and action in its object's frame.
[[nodiscard]] inline Dataset make_relative(Dataset ds) {
    if (ds.frame == Frame::relative) throw Error("dataset is already relative");
    const auto f = RelativeFrame::from_layout(ds.layout);
    for (auto& d : ds.demos) {
        for (std::size_t t = 0; t < d.actions.rows(); ++t) {
            const auto r = rotate(d.actions.row(t), -d.states(t, f.angle));
            d.actions(t, 0) = r[0];
            d.actions(t, 1) = r[1];
        }
        for (std::size_t t = 0; t < d.states.rows(); ++t) {
            const auto rel = to_relative(d.states.row(t), ds.layout);
            std::copy(rel.begin(), rel.end(), d.states.row(t).begin());
        }
    }
    ds.frame = Frame::relative;
    return ds;
}

// ── Composition ─────────────────────────────────────────────────────────────

struct DemoDistance {
    int id = 0;
    double d_total = 0.0;
    double d_rob = 0.0;
    double d_env = 0.0;
    std::size_t kappa = 0;
};

/// Full provenance of one policy step.
struct FlowDecision {
    Vec query;                       ///< query the distances were evaluated at (after perturbation/frame map)
    std::vector<DemoDistance> per_demo;  ///< every demo considered this step, in dataset order
    std::vector<int> selected;       ///< top-K ids, ordered by (d_total, id)
    Vec weights;
    Matrix local_actions;            ///< K x m, in the policy frame
    Matrix progression_terms;        ///< K x m, demonstrated actions u_kappa
    Matrix attraction_terms;         ///< K x m
    Vec composed;                    ///< weighted sum, global frame, before suppression and smoothing
    Vec action;                      ///< executed action
    std::size_t top_kappa = 0;       ///< kappa of selected[0]
    std::size_t chosen_candidate = 0;
    bool k_clamped = false;
    bool suppression_fallback = false;
};

/// Policy over a dataset: owns resolved metric and configuration, borrows the dataset.
class Policy {
public:
    Policy(const Dataset& dataset, const MetricConfig& mcfg, const PolicyConfig& pcfg)
        : dataset_(&dataset), metric_(dataset.layout, mcfg), pcfg_(pcfg) {
        pcfg_.validate();
        if (pcfg_.frame == Frame::relative) {
            if (dataset.frame != Frame::relative)
                throw Error("policy: relative frame requires a dataset converted with make_relative");
            if (dataset.normalized) throw Error("policy: relative frame requires an unnormalized dataset");
            frame_ = RelativeFrame::from_layout(dataset.layout);
        }
    }

    [[nodiscard]] const Dataset& dataset() const noexcept { return *dataset_; }
    [[nodiscard]] const CompositeMetric& metric() const noexcept { return metric_; }
    [[nodiscard]] const PolicyConfig& config() const noexcept { return pcfg_; }

    /// Distance of a (policy-frame) query to one demo plus its retrieval index.
    [[nodiscard]] DemoDistance distance_to(std::span<const double> q, const Demonstration& demo) const {
        const auto& layout = dataset_->layout;
        DemoDistance r;
        r.id = demo.id;
        if (pcfg_.mode == AttractionMode::vertex) {
            const auto n = nearest_index(q, demo, metric_);
            r.kappa = n.kappa;
            r.d_rob = n.distance.rob;
            r.d_env = n.distance.env;
            r.d_total = n.distance.total;
            return r;
        }
        const auto p = project_to_polyline(layout.actuated_view(q), demo, layout);
        r.kappa = p.time_index();
        r.d_rob = p.distance;
        r.d_env = metric_.evaluate(q.data(), demo.states.row(r.kappa).data()).env;
        r.d_total = metric_.alpha_rob() * r.d_rob + metric_.alpha_env() * r.d_env;
        return r;
    }

    /// Demonstrated action at kappa; zero at the terminal state.
    [[nodiscard]] Vec progression(const Demonstration& demo, std::size_t kappa) const {
        if (kappa >= demo.actions.rows()) return Vec(dataset_->layout.actuated_dims(), 0.0);
        auto u = demo.actions.row(kappa);
        return {u.begin(), u.end()};
    }

    /// -grad of d_rob toward the retrieval target of this mode.
    [[nodiscard]] Vec attraction_term(std::span<const double> q, const Demonstration& demo, std::size_t kappa) const {
        const auto& layout = dataset_->layout;
        if (pcfg_.mode == AttractionMode::polyline)
            return attraction(layout.actuated_view(q), project_to_polyline(layout.actuated_view(q), demo, layout));
        auto g = metric_.rob_gradient(q, demo.states.row(kappa), layout.actuated_lo(), layout.actuated_hi(),
                                      kAttractionEps);
        for (double& v : g) v = -v;
        return g;
    }

    /// lambda1(d) u_kappa + lambda2(d) attraction, in the policy frame.
    [[nodiscard]] Vec local_policy(std::span<const double> q, const Demonstration& demo) const {
        const auto d = distance_to(q, demo);
        return combine(d, progression(demo, d.kappa), attraction_term(q, demo, d.kappa));
    }

    [[nodiscard]] Vec combine(const DemoDistance& d, std::span<const double> prog, std::span<const double> att) const {
        const double l1 = pcfg_.lambda1(d.d_total), l2 = pcfg_.lambda2(d.d_total);
        Vec out(prog.size());
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = l1 * prog[j] + l2 * att[j];
        return out;
    }

    /// One full step: perturb, subsample, retrieve, select top-K, compose,
    /// then suppress recent actions and smooth.
    [[nodiscard]] FlowDecision step(std::span<const double> query, ExecState& exec, ThreadPool* pool = nullptr) const {
        const auto& ds = *dataset_;
        const auto& layout = ds.layout;
        if (ds.demos.empty()) throw Error("gpi_step: empty dataset");
        if (query.size() != layout.dims()) throw Error("gpi_step: query does not match layout");
        if (!all_finite(query)) throw Error("gpi_step: non-finite query");
        const std::size_t m = layout.actuated_dims();

        FlowDecision out;
        Vec q(query.begin(), query.end());
        if (pcfg_.noise_sigma_start > 0.0 || pcfg_.noise_sigma_end > 0.0)
            q = perturb_query(q, layout, exec.step, exec.total_steps, pcfg_.noise_sigma_start, pcfg_.noise_sigma_end,
                              exec.perturb_rng);
        double theta = 0.0;
        if (pcfg_.frame == Frame::relative) {
            theta = q[frame_.angle];
            q = to_relative(q, layout);
        }

        std::vector<std::size_t> pool_idx(ds.demos.size());
        std::iota(pool_idx.begin(), pool_idx.end(), std::size_t{0});
        if (pcfg_.subsample_fraction < 1.0) {
            const auto keep = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::ceil(pcfg_.subsample_fraction * static_cast<double>(pool_idx.size()))));
            std::shuffle(pool_idx.begin(), pool_idx.end(), exec.subsample_rng);
            pool_idx.resize(keep);
            std::sort(pool_idx.begin(), pool_idx.end());
        }

        out.per_demo.resize(pool_idx.size());
        auto scan = [&](std::size_t b, std::size_t e) {
            for (std::size_t i = b; i < e; ++i) out.per_demo[i] = distance_to(q, ds.demos[pool_idx[i]]);
        };
        if (pool) pool->parallel_for(pool_idx.size(), scan);
        else scan(0, pool_idx.size());

        std::vector<std::size_t> order(out.per_demo.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto less = [&](std::size_t a, std::size_t b) {
            const auto &x = out.per_demo[a], &y = out.per_demo[b];
            return x.d_total != y.d_total ? x.d_total < y.d_total : x.id < y.id;
        };
        std::size_t K = pcfg_.K;
        if (K > order.size()) {
            K = order.size();
            out.k_clamped = true;
        }
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(K), order.end(), less);
        order.resize(K);

        Vec dists(K);
        for (std::size_t k = 0; k < K; ++k) {
            dists[k] = out.per_demo[order[k]].d_total;
            out.selected.push_back(out.per_demo[order[k]].id);
        }
        out.weights = softmax_weights(dists, pcfg_.beta);
        out.top_kappa = out.per_demo[order[0]].kappa;

        out.local_actions = Matrix(K, m);
        out.progression_terms = Matrix(K, m);
        out.attraction_terms = Matrix(K, m);
        Vec composed(m, 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            const auto& d = out.per_demo[order[k]];
            const auto& demo = ds.demos[pool_idx[order[k]]];
            const auto prog = progression(demo, d.kappa);
            const auto att = attraction_term(q, demo, d.kappa);
            const auto local = combine(d, prog, att);
            for (std::size_t j = 0; j < m; ++j) {
                out.progression_terms(k, j) = prog[j];
                out.attraction_terms(k, j) = att[j];
                out.local_actions(k, j) = local[j];
                composed[j] += out.weights[k] * local[j];
            }
        }

        auto to_global = [&](Vec v) { return pcfg_.frame == Frame::relative ? rotate_to_global(v, theta) : v; };
        out.composed = to_global(composed);
        out.query = std::move(q);

        Vec chosen = out.composed;
        if (pcfg_.suppress_window > 0) {
            std::vector<Vec> ranked{out.composed};
            for (std::size_t k = 0; k < K; ++k) {
                auto row = out.local_actions.row(k);
                ranked.push_back(to_global(Vec(row.begin(), row.end())));
            }
            auto s = suppress_recent(ranked, exec, pcfg_.suppress_window, pcfg_.suppress_eps);
            chosen = std::move(s.action);
            out.chosen_candidate = s.index;
            out.suppression_fallback = s.fallback;
        }
        out.action = smooth_action(chosen, exec, pcfg_.smoothing_alpha);
        ++exec.step;
        return out;
    }

private:
    const Dataset* dataset_;
    CompositeMetric metric_;
    PolicyConfig pcfg_;
    RelativeFrame frame_{};
};

[[nodiscard]] inline Vec local_policy(std::span<const double> query, const Demonstration& demo, const Dataset& ds,
                                      const MetricConfig& mcfg, const PolicyConfig& pcfg) {
    return Policy(ds, mcfg, pcfg).local_policy(query, demo);
}

[[nodiscard]] inline FlowDecision gpi_step(std::span<const double> query, const Dataset& ds, const MetricConfig& mcfg,
                                           const PolicyConfig& pcfg, ExecState& exec, ThreadPool* pool = nullptr) {
    return Policy(ds, mcfg, pcfg).step(query, exec, pool);
}

}  // namespace gpi
