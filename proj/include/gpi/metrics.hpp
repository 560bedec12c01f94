#pragma once

// Elementary distances and the robot/environment composite distance.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>
#include <span>
#include <string>
#include <vector>

#include "gpi/store.hpp"

namespace gpi {

[[nodiscard]] inline double euclidean(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error("euclidean: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

/// Geodesic angle between two unit quaternions, invariant to the double cover.
[[nodiscard]] inline double quat_geodesic(std::span<const double> q1, std::span<const double> q2) {
    if (q1.size() != 4 || q2.size() != 4) throw Error("quat_geodesic: expected 4-vectors");
    if (std::abs(norm(q1) - 1.0) > kQuaternionUnitTol || std::abs(norm(q2) - 1.0) > kQuaternionUnitTol)
        throw Error("quat_geodesic: quaternion not unit");
    // |<q1,q2>| can exceed 1 by a few ulps
    const double c = std::clamp(std::abs(dot(q1, q2)), 0.0, 1.0);
    return 2.0 * std::acos(c);
}

/// Wrapped angular distance; period pi treats the angle as an axis.
[[nodiscard]] inline double angular_axial(double t1, double t2, double period = 2.0 * kPi) {
    double d = std::abs(t1 - t2);
    if (d >= period) d = std::fmod(d, period);
    return std::min(d, period - d);
}

[[nodiscard]] inline double cosine_distance(std::span<const double> z1, std::span<const double> z2) {
    if (z1.size() != z2.size()) throw Error("cosine_distance: length mismatch");
    const double n1 = norm(z1), n2 = norm(z2);
    if (n1 == 0.0 || n2 == 0.0) throw Error("cosine_distance: zero vector");
    return 1.0 - dot(z1, z2) / (n1 * n2);
}

enum class EnvDistance { euclidean, cosine };

struct MetricConfig {
    std::map<std::string, double> block_weights;  ///< missing blocks weigh 1.0
    double alpha_rob = 1.0;
    double alpha_env = 1.0;
    EnvDistance env_distance = EnvDistance::euclidean;

    void validate() const {
        if (!(alpha_rob >= 0.0) || !(alpha_env >= 0.0) || !(alpha_rob + alpha_env > 0.0))
            throw Error("metric: alpha_rob and alpha_env must be nonnegative with a positive sum");
        for (const auto& [name, w] : block_weights)
            if (!std::isfinite(w) || w < 0.0) throw Error("metric: weight of block '" + name + "' must be finite and >= 0");
    }

    [[nodiscard]] double weight(const std::string& block) const {
        auto it = block_weights.find(block);
        return it == block_weights.end() ? 1.0 : it->second;
    }
};

struct CompositeDistance {
    double total = 0.0;
    double rob = 0.0;
    double env = 0.0;
};

/// MetricConfig bound to a layout: per-block weights and metric kinds resolved
/// once so inner loops never touch the name map.
class CompositeMetric {
public:
    struct Term {
        std::size_t lo, hi;
        MetricKind kind;
        double period;
        double weight;
        bool actuated;
    };

    CompositeMetric(const StateLayout& layout, const MetricConfig& cfg)
        : dims_(layout.dims()), alpha_rob_(cfg.alpha_rob), alpha_env_(cfg.alpha_env),
          env_distance_(cfg.env_distance) {
        cfg.validate();
        for (const auto& n : cfg.block_weights)
            if (!layout.find(n.first)) throw Error("metric: weight given for unknown block '" + n.first + "'");
        const auto& blocks = layout.blocks();
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const auto& b = blocks[i];
            const double w = cfg.weight(b.name);
            if (w > 0.0) terms_.push_back({b.lo, b.hi, b.metric, b.period, w, layout.is_actuated(i)});
        }
    }

    [[nodiscard]] std::size_t dims() const noexcept { return dims_; }
    [[nodiscard]] const std::vector<Term>& terms() const noexcept { return terms_; }
    [[nodiscard]] double alpha_rob() const noexcept { return alpha_rob_; }
    [[nodiscard]] double alpha_env() const noexcept { return alpha_env_; }

    [[nodiscard]] double term_distance(const Term& t, const double* a, const double* b) const {
        switch (t.kind) {
            case MetricKind::angular_axial: return angular_axial(a[t.lo], b[t.lo], t.period);
            case MetricKind::quaternion: return quaternion_term(t, a, b);
            case MetricKind::latent:
                if (!t.actuated && env_distance_ == EnvDistance::cosine) return cosine_term(t, a, b);
                [[fallthrough]];
            case MetricKind::euclidean: {
                double s = 0.0;
                for (std::size_t j = t.lo; j < t.hi; ++j) {
                    const double d = a[j] - b[j];
                    s += d * d;
                }
                return std::sqrt(s);
            }
        }
        return 0.0;
    }

    [[nodiscard]] CompositeDistance operator()(std::span<const double> query, std::span<const double> state) const {
        if (query.size() != dims_ || state.size() != dims_) throw Error("composite_distance: layout mismatch");
        return evaluate(query.data(), state.data());
    }

    /// Unchecked evaluation for the scan loops.
    [[nodiscard]] CompositeDistance evaluate(const double* query, const double* state) const {
        CompositeDistance d;
        for (const auto& t : terms_) {
            const double v = t.weight * term_distance(t, query, state);
            (t.actuated ? d.rob : d.env) += v;
        }
        d.total = alpha_rob_ * d.rob + alpha_env_ * d.env;
        return d;
    }

    /// Row of a row-major state block minimizing the total distance; ties to the lowest row.
    [[nodiscard]] std::pair<std::size_t, CompositeDistance> nearest_row(const double* query, const double* rows,
                                                                        std::size_t count) const {
        // Term-major accumulation: each term sweeps every row, which keeps the
        // inner loops free of per-row dispatch.
        thread_local std::vector<double> rob, env;
        rob.assign(count, 0.0);
        env.assign(count, 0.0);
        const std::size_t stride = dims_;
        for (const auto& term : terms_) {
            double* acc = term.actuated ? rob.data() : env.data();
            const double w = term.weight;
            if (term.kind == MetricKind::euclidean ||
                (term.kind == MetricKind::latent && (term.actuated || env_distance_ == EnvDistance::euclidean))) {
                const std::size_t lo = term.lo, n = term.hi - term.lo;
                if (n == 1) {
                    const double q0 = query[lo];
                    for (std::size_t t = 0; t < count; ++t) acc[t] += w * std::abs(q0 - rows[t * stride + lo]);
                } else if (n == 2) {
                    const double q0 = query[lo], q1 = query[lo + 1];
                    for (std::size_t t = 0; t < count; ++t) {
                        const double* r = rows + t * stride + lo;
                        const double d0 = q0 - r[0], d1 = q1 - r[1];
                        acc[t] += w * std::sqrt(d0 * d0 + d1 * d1);
                    }
                } else {
                    for (std::size_t t = 0; t < count; ++t) {
                        const double* r = rows + t * stride;
                        double s = 0.0;
                        for (std::size_t j = lo; j < term.hi; ++j) s += (query[j] - r[j]) * (query[j] - r[j]);
                        acc[t] += w * std::sqrt(s);
                    }
                }
            } else if (term.kind == MetricKind::angular_axial) {
                const double q0 = query[term.lo], p = term.period;
                for (std::size_t t = 0; t < count; ++t)
                    acc[t] += w * angular_axial(q0, rows[t * stride + term.lo], p);
            } else {
                for (std::size_t t = 0; t < count; ++t) acc[t] += w * term_distance(term, query, rows + t * stride);
            }
        }
        std::size_t best_t = 0;
        CompositeDistance best{std::numeric_limits<double>::infinity(), 0.0, 0.0};
        for (std::size_t t = 0; t < count; ++t) {
            const double total = alpha_rob_ * rob[t] + alpha_env_ * env[t];
            if (total < best.total) {
                best = {total, rob[t], env[t]};
                best_t = t;
            }
        }
        return {best_t, best};
    }

    /// Gradient of d_rob with respect to the actuated query coordinates,
    /// evaluated against a fixed target state. Blocks closer than `eps` contribute zero.
    [[nodiscard]] Vec rob_gradient(std::span<const double> query, std::span<const double> target,
                                   std::size_t act_lo, std::size_t act_hi, double eps = 1e-9) const {
        Vec g(act_hi - act_lo, 0.0);
        for (const auto& t : terms_) {
            if (!t.actuated || t.weight == 0.0) continue;
            switch (t.kind) {
                case MetricKind::angular_axial: {
                    double diff = std::remainder(query[t.lo] - target[t.lo], t.period);
                    if (std::abs(diff) >= eps) g[t.lo - act_lo] = t.weight * (diff > 0.0 ? 1.0 : -1.0);
                    break;
                }
                case MetricKind::quaternion: {
                    double c = 0.0;
                    for (std::size_t j = t.lo; j < t.hi; ++j) c += query[j] * target[j];
                    const double ac = std::abs(c);
                    if (ac >= 1.0 || 2.0 * std::acos(ac) < eps) break;
                    const double scale = -2.0 * t.weight * (c > 0.0 ? 1.0 : -1.0) / std::sqrt(1.0 - ac * ac);
                    for (std::size_t j = t.lo; j < t.hi; ++j) g[j - act_lo] = scale * target[j];
                    break;
                }
                case MetricKind::latent:
                case MetricKind::euclidean: {
                    double s = 0.0;
                    for (std::size_t j = t.lo; j < t.hi; ++j) s += (query[j] - target[j]) * (query[j] - target[j]);
                    const double n = std::sqrt(s);
                    if (n < eps) break;
                    for (std::size_t j = t.lo; j < t.hi; ++j) g[j - act_lo] = t.weight * (query[j] - target[j]) / n;
                    break;
                }
            }
        }
        return g;
    }

private:
    [[gnu::noinline]] static double quaternion_term(const Term& t, const double* a, const double* b) {
        double c = 0.0;
        for (std::size_t j = t.lo; j < t.hi; ++j) c += a[j] * b[j];
        return 2.0 * std::acos(std::clamp(std::abs(c), 0.0, 1.0));
    }

    [[gnu::noinline]] static double cosine_term(const Term& t, const double* a, const double* b) {
        return cosine_distance({a + t.lo, t.hi - t.lo}, {b + t.lo, t.hi - t.lo});
    }

    std::size_t dims_;
    double alpha_rob_, alpha_env_;
    EnvDistance env_distance_;
    std::vector<Term> terms_;
};

[[nodiscard]] inline CompositeDistance composite_distance(std::span<const double> query,
                                                          std::span<const double> demo_state,
                                                          const StateLayout& layout, const MetricConfig& cfg) {
    return CompositeMetric(layout, cfg)(query, demo_state);
}

}  // namespace gpi
