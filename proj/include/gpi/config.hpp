#pragma once

// Run-config file {"metric": {...}, "policy": {...}, "rollout": {...}} and
// dotted-key overrides ("policy.K=5").

#include <optional>
#include <set>
#include <string>

#include "gpi/metrics.hpp"
#include "gpi/policy.hpp"
#include "gpi/store_io.hpp"

namespace gpi {

struct RolloutConfig {
    double dt = 0.01;
    std::size_t steps = 2000;
    double goal_tol = 0.02;
    double bounds_margin = 0.1;  ///< point-mass bounds pad around the demo bounding box
};

struct RunConfig {
    MetricConfig metric;
    PolicyConfig policy;
    RolloutConfig rollout;
};

namespace detail {

inline void reject_unknown(const Json& j, const std::set<std::string>& known, const char* section) {
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw Error(std::string("config: unknown key '") + section + "." + k + "'");
}

inline FlowWeight flow_weight_from_json(const Json& j) {
    if (j.is_number()) return FlowWeight::constant(j.get<double>());
    const auto kind = j.at("schedule").get<std::string>();
    const double gamma = j.at("gamma").get<double>();
    if (kind == "decay") return FlowWeight::decaying(gamma);
    if (kind == "rise") return FlowWeight::rising(gamma);
    throw Error("config: unknown schedule '" + kind + "'");
}

inline Json flow_weight_to_json(const FlowWeight& w) {
    switch (w.kind) {
        case FlowWeight::Kind::constant: return w.value;
        case FlowWeight::Kind::decay: return Json{{"schedule", "decay"}, {"gamma", w.gamma}};
        case FlowWeight::Kind::rise: return Json{{"schedule", "rise"}, {"gamma", w.gamma}};
    }
    return w.value;
}

}  // namespace detail

[[nodiscard]] inline RunConfig run_config_from_json(const Json& j) {
    RunConfig c;
    if (!j.is_object()) throw Error("config: top level must be an object");
    detail::reject_unknown(j, {"metric", "policy", "rollout"}, "");
    try {
        if (j.contains("metric")) {
            const auto& m = j.at("metric");
            detail::reject_unknown(m, {"block_weights", "alpha_rob", "alpha_env", "env_distance"}, "metric");
            if (m.contains("block_weights")) c.metric.block_weights = m.at("block_weights").get<std::map<std::string, double>>();
            c.metric.alpha_rob = m.value("alpha_rob", c.metric.alpha_rob);
            c.metric.alpha_env = m.value("alpha_env", c.metric.alpha_env);
            const auto env = m.value("env_distance", std::string("euclidean"));
            if (env == "cosine") c.metric.env_distance = EnvDistance::cosine;
            else if (env != "euclidean") throw Error("config: unknown env_distance '" + env + "'");
        }
        if (j.contains("policy")) {
            const auto& p = j.at("policy");
            detail::reject_unknown(p,
                                   {"lambda1", "lambda2", "K", "beta", "horizon", "smoothing_alpha", "suppress_window",
                                    "suppress_eps", "noise_sigma_start", "noise_sigma_end", "subsample_fraction",
                                    "frame", "mode", "seed"},
                                   "policy");
            auto& pc = c.policy;
            if (p.contains("lambda1")) pc.lambda1 = detail::flow_weight_from_json(p.at("lambda1"));
            if (p.contains("lambda2")) pc.lambda2 = detail::flow_weight_from_json(p.at("lambda2"));
            pc.K = p.value("K", pc.K);
            pc.beta = p.value("beta", pc.beta);
            pc.horizon = p.value("horizon", pc.horizon);
            pc.smoothing_alpha = p.value("smoothing_alpha", pc.smoothing_alpha);
            pc.suppress_window = p.value("suppress_window", pc.suppress_window);
            pc.suppress_eps = p.value("suppress_eps", pc.suppress_eps);
            pc.noise_sigma_start = p.value("noise_sigma_start", pc.noise_sigma_start);
            pc.noise_sigma_end = p.value("noise_sigma_end", pc.noise_sigma_end);
            pc.subsample_fraction = p.value("subsample_fraction", pc.subsample_fraction);
            pc.seed = p.value("seed", pc.seed);
            const auto frame = p.value("frame", std::string("absolute"));
            if (frame == "relative") pc.frame = Frame::relative;
            else if (frame != "absolute") throw Error("config: unknown frame '" + frame + "'");
            const auto mode = p.value("mode", std::string("vertex"));
            if (mode == "polyline") pc.mode = AttractionMode::polyline;
            else if (mode != "vertex") throw Error("config: unknown mode '" + mode + "'");
        }
        if (j.contains("rollout")) {
            const auto& r = j.at("rollout");
            detail::reject_unknown(r, {"dt", "steps", "goal_tol", "bounds_margin"}, "rollout");
            c.rollout.dt = r.value("dt", c.rollout.dt);
            c.rollout.steps = r.value("steps", c.rollout.steps);
            c.rollout.goal_tol = r.value("goal_tol", c.rollout.goal_tol);
            c.rollout.bounds_margin = r.value("bounds_margin", c.rollout.bounds_margin);
        }
    } catch (const Json::exception& e) {
        throw Error(std::string("config: ") + e.what());
    }
    c.metric.validate();
    c.policy.validate();
    if (!(c.rollout.dt > 0.0)) throw Error("config: rollout.dt must be positive");
    return c;
}

[[nodiscard]] inline Json run_config_to_json(const RunConfig& c) {
    const auto& p = c.policy;
    return Json{
        {"metric",
         {{"block_weights", c.metric.block_weights},
          {"alpha_rob", c.metric.alpha_rob},
          {"alpha_env", c.metric.alpha_env},
          {"env_distance", c.metric.env_distance == EnvDistance::cosine ? "cosine" : "euclidean"}}},
        {"policy",
         {{"lambda1", detail::flow_weight_to_json(p.lambda1)},
          {"lambda2", detail::flow_weight_to_json(p.lambda2)},
          {"K", p.K},
          {"beta", p.beta},
          {"horizon", p.horizon},
          {"smoothing_alpha", p.smoothing_alpha},
          {"suppress_window", p.suppress_window},
          {"suppress_eps", p.suppress_eps},
          {"noise_sigma_start", p.noise_sigma_start},
          {"noise_sigma_end", p.noise_sigma_end},
          {"subsample_fraction", p.subsample_fraction},
          {"frame", p.frame == Frame::relative ? "relative" : "absolute"},
          {"mode", p.mode == AttractionMode::polyline ? "polyline" : "vertex"},
          {"seed", p.seed}}},
        {"rollout",
         {{"dt", c.rollout.dt},
          {"steps", c.rollout.steps},
          {"goal_tol", c.rollout.goal_tol},
          {"bounds_margin", c.rollout.bounds_margin}}}};
}

/// Set a dotted leaf ("policy.K", "metric.block_weights.agent") in a config
/// document. Values parse as JSON when they can, else as strings.
inline void apply_override(Json& doc, const std::string& dotted, const std::string& value) {
    Json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        const auto dot = dotted.find('.', start);
        const auto key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty()) throw Error("config: bad override key '" + dotted + "'");
        if (dot == std::string::npos) {
            Json parsed = Json::parse(value, nullptr, false);
            (*node)[key] = parsed.is_discarded() ? Json(value) : parsed;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

}  // namespace gpi
