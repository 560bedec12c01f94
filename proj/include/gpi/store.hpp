#pragma once

// Demonstration storage: state layouts, datasets, normalization and the
// piecewise-linear curve geometry every query runs against.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gpi/core.hpp"

namespace gpi {

enum class MetricKind { euclidean, angular_axial, quaternion, latent };

[[nodiscard]] inline std::string_view to_string(MetricKind k) noexcept {
    switch (k) {
        case MetricKind::euclidean: return "euclidean";
        case MetricKind::angular_axial: return "angular_axial";
        case MetricKind::quaternion: return "quaternion";
        case MetricKind::latent: return "latent";
    }
    return "euclidean";
}

[[nodiscard]] inline MetricKind metric_kind_from_string(std::string_view s) {
    if (s == "euclidean") return MetricKind::euclidean;
    if (s == "angular_axial" || s == "angular") return MetricKind::angular_axial;
    if (s == "quaternion") return MetricKind::quaternion;
    if (s == "latent") return MetricKind::latent;
    throw Error("unknown metric kind '" + std::string(s) + "'");
}

/// A named slice [lo, hi) of the state vector with its metric.
struct Block {
    std::string name;
    std::size_t lo = 0;
    std::size_t hi = 0;
    MetricKind metric = MetricKind::euclidean;
    double period = 2.0 * kPi;  ///< angular blocks only; pi gives axial symmetry

    [[nodiscard]] std::size_t size() const noexcept { return hi - lo; }
    friend bool operator==(const Block&, const Block&) = default;
};

/// Partition of the state into metric blocks plus the actuated subspace.
///
/// The actuated blocks must form one contiguous index range, so projecting a
/// state onto the actuated subspace is a slice.
class StateLayout {
public:
    StateLayout() = default;

    StateLayout(std::vector<Block> blocks, const std::vector<std::string>& actuated)
        : blocks_(std::move(blocks)) {
        std::sort(blocks_.begin(), blocks_.end(),
                  [](const Block& a, const Block& b) { return a.lo < b.lo; });
        std::size_t cursor = 0;
        for (const auto& b : blocks_) {
            if (b.hi <= b.lo) throw Error("block '" + b.name + "' has an empty range");
            if (b.lo != cursor) throw Error("block ranges must be disjoint and cover [0, dims)");
            if (b.metric == MetricKind::quaternion && b.size() != 4)
                throw Error("quaternion block '" + b.name + "' must have exactly 4 indices");
            if (b.metric == MetricKind::angular_axial && b.size() != 1)
                throw Error("angular block '" + b.name + "' must have exactly 1 index");
            if (b.metric == MetricKind::angular_axial && !(b.period > 0.0))
                throw Error("angular block '" + b.name + "' needs a positive period");
            cursor = b.hi;
        }
        dims_ = cursor;
        if (dims_ == 0) throw Error("layout has no dimensions");

        actuated_.assign(blocks_.size(), false);
        for (const auto& name : actuated) {
            auto it = std::find_if(blocks_.begin(), blocks_.end(),
                                   [&](const Block& b) { return b.name == name; });
            if (it == blocks_.end()) throw Error("actuated block '" + name + "' not in layout");
            actuated_[static_cast<std::size_t>(it - blocks_.begin())] = true;
        }
        if (std::none_of(actuated_.begin(), actuated_.end(), [](bool a) { return a; }))
            throw Error("layout must actuate at least one block");

        bool seen = false, closed = false;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            if (actuated_[i]) {
                if (closed) throw Error("actuated blocks must be contiguous");
                if (!seen) act_lo_ = blocks_[i].lo;
                seen = true;
                act_hi_ = blocks_[i].hi;
            } else if (seen) {
                closed = true;
            }
        }
    }

    [[nodiscard]] std::size_t dims() const noexcept { return dims_; }
    [[nodiscard]] std::size_t actuated_dims() const noexcept { return act_hi_ - act_lo_; }
    [[nodiscard]] std::size_t actuated_lo() const noexcept { return act_lo_; }
    [[nodiscard]] std::size_t actuated_hi() const noexcept { return act_hi_; }
    [[nodiscard]] const std::vector<Block>& blocks() const noexcept { return blocks_; }
    [[nodiscard]] bool is_actuated(std::size_t block) const noexcept { return actuated_[block]; }

    [[nodiscard]] std::vector<bool> actuated_mask() const {
        std::vector<bool> mask(dims_, false);
        for (std::size_t i = act_lo_; i < act_hi_; ++i) mask[i] = true;
        return mask;
    }

    [[nodiscard]] std::vector<std::string> actuated_names() const {
        std::vector<std::string> names;
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            if (actuated_[i]) names.push_back(blocks_[i].name);
        return names;
    }

    [[nodiscard]] const Block* find(std::string_view name) const noexcept {
        for (const auto& b : blocks_)
            if (b.name == name) return &b;
        return nullptr;
    }

    /// P(x): the actuated coordinates of a full state, in order.
    [[nodiscard]] std::span<const double> actuated_view(std::span<const double> state) const {
        if (state.size() != dims_) throw Error("state length does not match layout");
        return state.subspan(act_lo_, act_hi_ - act_lo_);
    }

    friend bool operator==(const StateLayout&, const StateLayout&) = default;

private:
    std::vector<Block> blocks_;
    std::vector<bool> actuated_;
    std::size_t dims_ = 0;
    std::size_t act_lo_ = 0;
    std::size_t act_hi_ = 0;
};

[[nodiscard]] inline Vec project_actuated(std::span<const double> state, const StateLayout& layout) {
    auto view = layout.actuated_view(state);
    return {view.begin(), view.end()};
}

/// Euclidean layout where every dimension is actuated.
[[nodiscard]] inline StateLayout euclidean_layout(std::size_t dims, std::string name = "pos") {
    return StateLayout({Block{name, 0, dims, MetricKind::euclidean}}, {name});
}

struct Demonstration {
    int id = 0;
    Matrix states;   ///< (T+1) x dims
    Matrix actions;  ///< T x m, tangents in the actuated subspace

    [[nodiscard]] std::size_t length() const noexcept { return states.rows(); }
    friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

enum class Frame { absolute, relative };

struct NormParam {
    double min = 0.0;
    double max = 1.0;
    bool scaled = false;  ///< false for angular/quaternion dims, which are never rescaled

    [[nodiscard]] double range() const noexcept { return max - min; }
    friend bool operator==(const NormParam&, const NormParam&) = default;
};

struct Dataset {
    StateLayout layout;
    std::vector<Demonstration> demos;
    double dt = 1.0;
    bool normalized = false;
    std::vector<NormParam> norm_params;  ///< one per state dim once normalized
    Frame frame = Frame::absolute;

    [[nodiscard]] std::size_t total_rows() const noexcept {
        std::size_t n = 0;
        for (const auto& d : demos) n += d.states.rows();
        return n;
    }

    [[nodiscard]] const Demonstration* find(int id) const noexcept {
        for (const auto& d : demos)
            if (d.id == id) return &d;
        return nullptr;
    }

    /// Map a raw state into the dataset's normalized coordinates (no-op when unnormalized).
    [[nodiscard]] Vec normalize_state(std::span<const double> x) const {
        Vec out(x.begin(), x.end());
        if (!normalized) return out;
        for (std::size_t j = 0; j < out.size(); ++j) {
            const auto& p = norm_params[j];
            if (!p.scaled) continue;
            out[j] = p.range() > 0.0 ? (out[j] - p.min) / p.range() : 0.5;
        }
        return out;
    }

    [[nodiscard]] Vec denormalize_state(std::span<const double> x) const {
        Vec out(x.begin(), x.end());
        if (!normalized) return out;
        for (std::size_t j = 0; j < out.size(); ++j) {
            const auto& p = norm_params[j];
            if (p.scaled) out[j] = out[j] * p.range() + p.min;
        }
        return out;
    }

    /// Rescale a normalized actuated-space action back to raw units.
    [[nodiscard]] Vec denormalize_action(std::span<const double> u) const {
        Vec out(u.begin(), u.end());
        if (!normalized) return out;
        for (std::size_t j = 0; j < out.size(); ++j) {
            const auto& p = norm_params[layout.actuated_lo() + j];
            if (p.scaled && p.range() > 0.0) out[j] *= p.range();
        }
        return out;
    }
};

// ── Validation and construction ─────────────────────────────────────────────

inline constexpr double kQuaternionUnitTol = 1e-6;

/// Checks shapes, finiteness and quaternion norms; synthesizes missing actions.
inline void finalize_demonstration(Demonstration& demo, const StateLayout& layout, double dt) {
    const std::size_t dims = layout.dims();
    const std::size_t m = layout.actuated_dims();
    if (demo.states.cols() != dims)
        throw Error("demo " + std::to_string(demo.id) + ": state width " +
                    std::to_string(demo.states.cols()) + " does not match layout dims " +
                    std::to_string(dims));
    if (demo.states.rows() < 2)
        throw Error("demo " + std::to_string(demo.id) + ": needs at least 2 states");
    if (!all_finite(demo.states.data()))
        throw Error("demo " + std::to_string(demo.id) + ": non-finite state value");

    for (const auto& b : layout.blocks()) {
        if (b.metric != MetricKind::quaternion) continue;
        for (std::size_t t = 0; t < demo.states.rows(); ++t) {
            const double n = norm(demo.states.row(t).subspan(b.lo, 4));
            if (std::abs(n - 1.0) > kQuaternionUnitTol)
                throw Error("demo " + std::to_string(demo.id) + ": quaternion not unit in block '" +
                            b.name + "' at t=" + std::to_string(t));
        }
    }

    const std::size_t T = demo.states.rows() - 1;
    if (demo.actions.empty()) {
        if (!(dt > 0.0)) throw Error("dt must be positive to synthesize actions");
        Matrix actions(T, m);
        for (std::size_t t = 0; t < T; ++t) {
            auto a = layout.actuated_view(demo.states.row(t));
            auto b = layout.actuated_view(demo.states.row(t + 1));
            for (std::size_t j = 0; j < m; ++j) actions(t, j) = (b[j] - a[j]) / dt;
        }
        demo.actions = std::move(actions);
        return;
    }
    if (demo.actions.cols() != m)
        throw Error("demo " + std::to_string(demo.id) + ": action width does not match actuated dims");
    if (demo.actions.rows() == T + 1) {
        demo.actions.drop_last_row();
    } else if (demo.actions.rows() != T) {
        throw Error("demo " + std::to_string(demo.id) + ": expected " + std::to_string(T) +
                    " actions, got " + std::to_string(demo.actions.rows()));
    }
    if (!all_finite(demo.actions.data()))
        throw Error("demo " + std::to_string(demo.id) + ": non-finite action value");
}

/// Min-max scaling of every euclidean/latent dimension over all demo states.
/// Constant dimensions map to 0.5; actions on actuated dims share the state scale.
[[nodiscard]] inline Dataset normalize(Dataset ds) {
    if (ds.normalized) throw Error("dataset is already normalized");
    const std::size_t dims = ds.layout.dims();
    std::vector<NormParam> params(dims);
    for (const auto& b : ds.layout.blocks()) {
        const bool scaled = b.metric == MetricKind::euclidean || b.metric == MetricKind::latent;
        for (std::size_t j = b.lo; j < b.hi; ++j) {
            params[j].scaled = scaled;
            if (!scaled) continue;
            double lo = std::numeric_limits<double>::infinity();
            double hi = -lo;
            for (const auto& d : ds.demos)
                for (std::size_t t = 0; t < d.states.rows(); ++t) {
                    lo = std::min(lo, d.states(t, j));
                    hi = std::max(hi, d.states(t, j));
                }
            params[j].min = lo;
            params[j].max = hi;
        }
    }
    const std::size_t act_lo = ds.layout.actuated_lo();
    for (auto& d : ds.demos) {
        for (std::size_t t = 0; t < d.states.rows(); ++t)
            for (std::size_t j = 0; j < dims; ++j) {
                const auto& p = params[j];
                if (!p.scaled) continue;
                d.states(t, j) = p.range() > 0.0 ? (d.states(t, j) - p.min) / p.range() : 0.5;
            }
        for (std::size_t t = 0; t < d.actions.rows(); ++t)
            for (std::size_t j = 0; j < d.actions.cols(); ++j) {
                const auto& p = params[act_lo + j];
                if (p.scaled && p.range() > 0.0) d.actions(t, j) /= p.range();
            }
    }
    ds.norm_params = std::move(params);
    ds.normalized = true;
    return ds;
}

[[nodiscard]] inline Dataset denormalize(Dataset ds) {
    if (!ds.normalized) return ds;
    const std::size_t act_lo = ds.layout.actuated_lo();
    for (auto& d : ds.demos) {
        for (std::size_t t = 0; t < d.states.rows(); ++t)
            for (std::size_t j = 0; j < d.states.cols(); ++j) {
                const auto& p = ds.norm_params[j];
                if (p.scaled) d.states(t, j) = d.states(t, j) * p.range() + p.min;
            }
        for (std::size_t t = 0; t < d.actions.rows(); ++t)
            for (std::size_t j = 0; j < d.actions.cols(); ++j) {
                const auto& p = ds.norm_params[act_lo + j];
                if (p.scaled && p.range() > 0.0) d.actions(t, j) *= p.range();
            }
    }
    ds.normalized = false;
    ds.norm_params.clear();
    return ds;
}

// ── Curve geometry ──────────────────────────────────────────────────────────

struct Projection {
    std::size_t segment = 0;
    double s = 0.0;  ///< position on the segment, in [0, 1]
    Vec closest;
    double distance = 0.0;

    /// Time index of the demonstrated state the projection belongs to: the
    /// segment start, or its end when the projection sits on the far vertex.
    [[nodiscard]] std::size_t time_index() const noexcept { return s >= 1.0 ? segment + 1 : segment; }
};

/// Exact closest point on the polyline through the actuated projections of
/// the demo states. Ties go to the lower segment index.
[[nodiscard]] inline Projection project_to_polyline(std::span<const double> query_act,
                                                    const Demonstration& demo,
                                                    const StateLayout& layout) {
    const std::size_t m = layout.actuated_dims();
    if (query_act.size() != m) throw Error("query length does not match actuated dims");
    const std::size_t lo = layout.actuated_lo();
    const std::size_t segments = demo.states.rows() - 1;

    double best = std::numeric_limits<double>::infinity();
    std::size_t best_seg = 0;
    double best_s = 0.0;
    for (std::size_t i = 0; i < segments; ++i) {
        const double* a = demo.states.row(i).data() + lo;
        const double* b = demo.states.row(i + 1).data() + lo;
        double ab2 = 0.0, proj = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double e = b[j] - a[j];
            ab2 += e * e;
            proj += (query_act[j] - a[j]) * e;
        }
        double s = ab2 > 0.0 ? std::clamp(proj / ab2, 0.0, 1.0) : 0.0;
        double d2 = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double p = s >= 1.0 ? b[j] : a[j] + s * (b[j] - a[j]);
            const double r = query_act[j] - p;
            d2 += r * r;
        }
        if (d2 < best) {
            best = d2;
            best_seg = i;
            best_s = s;
        }
    }

    Projection out;
    out.segment = best_seg;
    out.s = best_s;
    out.closest.resize(m);
    const double* a = demo.states.row(best_seg).data() + lo;
    const double* b = demo.states.row(best_seg + 1).data() + lo;
    for (std::size_t j = 0; j < m; ++j)
        out.closest[j] = best_s >= 1.0 ? b[j] : a[j] + best_s * (b[j] - a[j]);
    out.distance = std::sqrt(best);
    return out;
}

/// Unit tangent of a demonstration segment in actuated space (zero if degenerate).
[[nodiscard]] inline Vec segment_direction(const Demonstration& demo, const StateLayout& layout,
                                           std::size_t segment) {
    auto a = layout.actuated_view(demo.states.row(segment));
    auto b = layout.actuated_view(demo.states.row(segment + 1));
    Vec dir(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) dir[j] = b[j] - a[j];
    const double n = norm(dir);
    if (n > 0.0)
        for (double& v : dir) v /= n;
    return dir;
}

/// Summed Euclidean segment lengths of the actuated curve.
[[nodiscard]] inline double arc_length(const Demonstration& demo, const StateLayout& layout) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < demo.states.rows(); ++i) {
        auto a = layout.actuated_view(demo.states.row(i));
        auto b = layout.actuated_view(demo.states.row(i + 1));
        double s = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) s += (b[j] - a[j]) * (b[j] - a[j]);
        total += std::sqrt(s);
    }
    return total;
}

}  // namespace gpi
