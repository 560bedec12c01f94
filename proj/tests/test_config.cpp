#include <gtest/gtest.h>

#include "gpi/gpi.hpp"

using namespace gpi;

TEST(RunConfig, DefaultsFromEmptyObject) {
    const auto c = run_config_from_json(Json::object());
    EXPECT_EQ(c.policy.K, 3u);
    EXPECT_EQ(c.policy.horizon, 1u);
    EXPECT_EQ(c.policy.mode, AttractionMode::vertex);
    EXPECT_EQ(c.metric.alpha_rob, 1.0);
    EXPECT_EQ(c.rollout.dt, 0.01);
}

TEST(RunConfig, ParsesSections) {
    const auto j = Json::parse(R"({
        "metric": {"block_weights": {"agent": 2.0}, "alpha_env": 0.5, "env_distance": "cosine"},
        "policy": {"K": 5, "beta": 3.0, "lambda1": 0.5, "lambda2": {"schedule": "rise", "gamma": 4.0},
                   "mode": "polyline", "frame": "relative", "horizon": 4, "seed": 17},
        "rollout": {"dt": 0.02, "steps": 300}
    })");
    const auto c = run_config_from_json(j);
    EXPECT_EQ(c.metric.block_weights.at("agent"), 2.0);
    EXPECT_EQ(c.metric.alpha_env, 0.5);
    EXPECT_EQ(c.metric.env_distance, EnvDistance::cosine);
    EXPECT_EQ(c.policy.K, 5u);
    EXPECT_EQ(c.policy.beta, 3.0);
    EXPECT_EQ(c.policy.lambda1(7.0), 0.5);
    EXPECT_EQ(c.policy.lambda2.kind, FlowWeight::Kind::rise);
    EXPECT_NEAR(c.policy.lambda2(0.25), 1.0 - std::exp(-1.0), 1e-15);
    EXPECT_EQ(c.policy.mode, AttractionMode::polyline);
    EXPECT_EQ(c.policy.frame, Frame::relative);
    EXPECT_EQ(c.policy.horizon, 4u);
    EXPECT_EQ(c.policy.seed, 17u);
    EXPECT_EQ(c.rollout.dt, 0.02);
    EXPECT_EQ(c.rollout.steps, 300u);
}

TEST(RunConfig, RejectsUnknownAndInvalid) {
    for (const char* bad : {R"({"polcy": {}})", R"({"policy": {"k": 3}})", R"({"metric": {"alpha": 1}})",
                            R"({"rollout": {"dt": 0}})", R"({"policy": {"K": 0}})", R"({"policy": {"mode": "curve"}})",
                            R"({"policy": {"lambda1": {"schedule": "grow", "gamma": 1}}})",
                            R"({"policy": {"K": "three"}})", R"({"metric": {"env_distance": "l1"}})", R"([1, 2])"})
        EXPECT_THROW((void)run_config_from_json(Json::parse(bad)), Error) << bad;
}

TEST(RunConfig, RoundTrip) {
    RunConfig c;
    c.metric.block_weights = {{"agent", 1.5}, {"object", 0.25}};
    c.metric.alpha_env = 0.3;
    c.policy.K = 7;
    c.policy.lambda1 = FlowWeight::decaying(2.0);
    c.policy.noise_sigma_start = 0.1;
    c.policy.noise_sigma_end = 0.01;
    c.policy.mode = AttractionMode::polyline;
    c.rollout.steps = 123;
    const auto j = run_config_to_json(c);
    const auto back = run_config_from_json(j);
    EXPECT_EQ(run_config_to_json(back), j);
    EXPECT_EQ(back.policy.lambda1.kind, FlowWeight::Kind::decay);
    EXPECT_EQ(back.policy.lambda1.gamma, 2.0);
}

TEST(Override, DottedKeys) {
    Json doc = Json::object();
    apply_override(doc, "policy.K", "5");
    apply_override(doc, "policy.mode", "polyline");
    apply_override(doc, "metric.block_weights.agent", "0.5");
    apply_override(doc, "policy.lambda2", R"({"schedule": "decay", "gamma": 3})");
    EXPECT_EQ(doc["policy"]["K"], 5);
    EXPECT_EQ(doc["policy"]["mode"], "polyline");
    const auto c = run_config_from_json(doc);
    EXPECT_EQ(c.policy.K, 5u);
    EXPECT_EQ(c.policy.mode, AttractionMode::polyline);
    EXPECT_EQ(c.metric.block_weights.at("agent"), 0.5);
    EXPECT_EQ(c.policy.lambda2.kind, FlowWeight::Kind::decay);
    apply_override(doc, "policy.K", "2");
    EXPECT_EQ(run_config_from_json(doc).policy.K, 2u);
    EXPECT_THROW(apply_override(doc, "policy..K", "1"), Error);
    EXPECT_THROW(apply_override(doc, "", "1"), Error);
}
