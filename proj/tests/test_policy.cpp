#include <gtest/gtest.h>

#include <random>
#include <set>

#include "gpi/gpi.hpp"
#include "oracles.hpp"

using namespace gpi;

namespace {

Dataset single_demo(std::initializer_list<Vec> pts, double dt = 0.1) {
    Dataset ds;
    ds.layout = euclidean_layout(2);
    ds.dt = dt;
    Demonstration d;
    for (const auto& p : pts) d.states.append_row(p);
    finalize_demonstration(d, ds.layout, dt);
    ds.demos.push_back(d);
    return ds;
}

StateLayout pusht_layout() {
    return StateLayout({{"agent", 0, 2, MetricKind::euclidean},
                        {"object", 2, 4, MetricKind::euclidean},
                        {"angle", 4, 5, MetricKind::angular_axial}},
                       {"agent"});
}

Dataset random_dataset(const StateLayout& l, std::size_t demos, std::size_t rows, std::mt19937_64& rng) {
    Dataset ds;
    ds.layout = l;
    ds.dt = 0.1;
    for (std::size_t i = 0; i < demos; ++i) ds.demos.push_back(oracle::random_demo(l, rows, static_cast<int>(i), rng));
    return ds;
}

PolicyConfig deterministic(std::size_t K = 3) {
    PolicyConfig p;
    p.K = K;
    return p;
}

}  // namespace

// ── nearest_index ───────────────────────────────────────────────────────────

TEST(NearestIndex, ExactStateMatch) {
    const auto ds = generate_y_shape();
    const auto n = nearest_index(ds.demos[0].states.row(5), ds.demos[0], ds.layout, {});
    EXPECT_EQ(n.kappa, 5u);
    EXPECT_EQ(n.distance.total, 0.0);
}

TEST(NearestIndex, TieGoesToLowerIndex) {
    const auto ds = single_demo({{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}, {3.0, 0.0}, {4.0, 0.0}});
    const auto n = nearest_index(Vec{2.5, 1.0}, ds.demos[0], ds.layout, {});
    EXPECT_EQ(n.kappa, 2u);
}

TEST(NearestIndex, MatchesExhaustiveScan) {
    std::mt19937_64 rng(1);
    const auto l = oracle::mixed_layout();
    const auto demo = oracle::random_demo(l, 1000, 0, rng);
    for (int i = 0; i < 50; ++i) {
        const auto cfg = oracle::random_metric(rng);
        const auto q = oracle::random_state(l, rng);
        const auto n = nearest_index(q, demo, l, cfg);
        const auto o = oracle::nearest(q, demo, l, cfg);
        EXPECT_EQ(n.kappa, o.kappa);
        EXPECT_NEAR(n.distance.total, o.d, 1e-10);
    }
}

// ── attraction ──────────────────────────────────────────────────────────────

TEST(Attraction, ZeroAtDistanceZero) {
    const auto a = attraction(Vec{0.3, 0.4}, Vec{0.3, 0.4});
    EXPECT_EQ(a, (Vec{0.0, 0.0}));
    const auto b = attraction(Vec{0.3, 0.4}, Vec{0.3, 0.4 + 1e-10});
    EXPECT_EQ(b, (Vec{0.0, 0.0}));
}

TEST(Attraction, UnitTowardClosest) {
    const auto a = attraction(Vec{0.0, 1.0}, Vec{0.0, 0.0});
    EXPECT_DOUBLE_EQ(a[0], 0.0);
    EXPECT_DOUBLE_EQ(a[1], -1.0);
}

TEST(Attraction, MatchesFiniteDifferenceOfRobDistance) {
    // translational agent plus an actuated heading and a quaternion
    const StateLayout l({{"agent", 0, 2, MetricKind::euclidean},
                         {"heading", 2, 3, MetricKind::angular_axial},
                         {"object", 3, 5, MetricKind::euclidean}},
                        {"agent", "heading"});
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    MetricConfig cfg;
    cfg.block_weights = {{"agent", 1.7}, {"heading", 0.6}};
    const CompositeMetric metric(l, cfg);
    for (int i = 0; i < 300; ++i) {
        Vec q(5), x(5);
        for (int j = 0; j < 5; ++j) {
            q[j] = u(rng);
            x[j] = u(rng);
        }
        const auto g = metric.rob_gradient(q, x, 0, 3);
        const double h = 1e-6;
        for (std::size_t j = 0; j < 3; ++j) {
            auto qp = q, qm = q;
            qp[j] += h;
            qm[j] -= h;
            const double fd = (metric(qp, x).rob - metric(qm, x).rob) / (2 * h);
            EXPECT_NEAR(g[j], fd, 1e-5);
        }
    }
}

TEST(Attraction, QuaternionGradientMatchesFiniteDifference) {
    const StateLayout l({{"rot", 0, 4, MetricKind::quaternion}}, {"rot"});
    const CompositeMetric metric(l, {});
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        Vec q(4), x(4);
        double nq = 0, nx = 0;
        for (int j = 0; j < 4; ++j) {
            q[j] = g(rng);
            x[j] = g(rng);
            nq += q[j] * q[j];
            nx += x[j] * x[j];
        }
        for (int j = 0; j < 4; ++j) {
            q[j] /= std::sqrt(nq);
            x[j] /= std::sqrt(nx);
        }
        if (metric(q, x).rob < 1e-3 || metric(q, x).rob > kPi - 1e-3) continue;
        const auto grad = metric.rob_gradient(q, x, 0, 4);
        // distance as a function of the raw 4-vector inner product
        auto f = [&](const Vec& v) {
            double c = 0.0;
            for (int j = 0; j < 4; ++j) c += v[j] * x[j];
            return 2.0 * std::acos(std::abs(c));
        };
        for (std::size_t j = 0; j < 4; ++j) {
            auto qp = q, qm = q;
            qp[j] += 1e-7;
            qm[j] -= 1e-7;
            EXPECT_NEAR(grad[j], (f(qp) - f(qm)) / 2e-7, 1e-5);
        }
    }
}

TEST(Attraction, VertexModeUsesRobDistanceOnly) {
    const auto l = pusht_layout();
    Dataset ds;
    ds.layout = l;
    ds.dt = 0.1;
    Demonstration d;
    d.states.append_row(Vec{0.0, 0.0, 0.5, 0.5, 0.0});
    d.states.append_row(Vec{1.0, 0.0, 0.5, 0.5, 0.0});
    finalize_demonstration(d, l, ds.dt);
    ds.demos.push_back(d);
    PolicyConfig p;
    p.lambda1 = FlowWeight::constant(0.0);
    const Policy pol(ds, {}, p);
    // environment part far away does not tilt the attraction
    const Vec q{0.0, 1.0, 3.0, -2.0, 1.0};
    const auto a = pol.attraction_term(q, ds.demos[0], 0);
    EXPECT_NEAR(a[0], 0.0, 1e-15);
    EXPECT_NEAR(a[1], -1.0, 1e-15);
}

TEST(Attraction, PolylineModeIsOrthogonalToTangent) {
    const auto ds = generate_y_shape();
    PolicyConfig p;
    p.mode = AttractionMode::polyline;
    const Policy pol(ds, {}, p);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 500; ++i) {
        const Vec q{u(rng), u(rng)};
        const auto proj = project_to_polyline(q, ds.demos[1], ds.layout);
        if (proj.s <= 0.0 || proj.s >= 1.0) continue;
        const auto a = pol.attraction_term(q, ds.demos[1], proj.time_index());
        const auto t = segment_direction(ds.demos[1], ds.layout, proj.segment);
        EXPECT_LT(std::abs(a[0] * t[0] + a[1] * t[1]), 1e-9);
        EXPECT_NEAR(norm(a), proj.distance < kAttractionEps ? 0.0 : 1.0, 1e-12);
    }
}

// ── local policy ────────────────────────────────────────────────────────────

TEST(LocalPolicy, OnCurveEqualsDemonstratedAction) {
    const auto ds = generate_y_shape();
    const auto& d = ds.demos[1];
    for (std::size_t t : {0u, 10u, 50u}) {
        const auto u = local_policy(d.states.row(t), d, ds, {}, {});
        EXPECT_DOUBLE_EQ(u[0], d.actions(t, 0));
        EXPECT_DOUBLE_EQ(u[1], d.actions(t, 1));
    }
}

TEST(LocalPolicy, PureAttraction) {
    const auto ds = single_demo({{0.0, 0.0}, {1.0, 0.0}});
    PolicyConfig p;
    p.lambda1 = FlowWeight::constant(0.0);
    const auto u = local_policy(Vec{0.0, 2.0}, ds.demos[0], ds, {}, p);
    EXPECT_DOUBLE_EQ(u[0], 0.0);
    EXPECT_DOUBLE_EQ(u[1], -1.0);
}

TEST(LocalPolicy, TerminalStateHasNoProgression) {
    const auto ds = single_demo({{0.0, 0.0}, {1.0, 0.0}});
    const auto u = local_policy(Vec{1.0, 0.0}, ds.demos[0], ds, {}, {});
    EXPECT_EQ(u, (Vec{0.0, 0.0}));
}

TEST(LocalPolicy, DistanceSchedules) {
    const auto ds = single_demo({{0.0, 0.0}, {1.0, 0.0}}, 1.0);
    PolicyConfig p;
    p.lambda1 = FlowWeight::decaying(2.0);
    p.lambda2 = FlowWeight::rising(2.0);
    const auto u = local_policy(Vec{0.0, 0.5}, ds.demos[0], ds, {}, p);
    EXPECT_NEAR(u[0], std::exp(-1.0) * 1.0, 1e-15);
    EXPECT_NEAR(u[1], -(1.0 - std::exp(-1.0)), 1e-15);
}

// ── softmax ─────────────────────────────────────────────────────────────────

TEST(Softmax, Examples) {
    for (double w : softmax_weights(Vec{0.3, 0.3, 0.3, 0.3}, 10.0)) EXPECT_DOUBLE_EQ(w, 0.25);
    for (double w : softmax_weights(Vec{0.1, 5.0, 2.0}, 0.0)) EXPECT_DOUBLE_EQ(w, 1.0 / 3.0);
    const double beta = 7.0;
    const auto w = softmax_weights(Vec{0.0, std::log(2.0) / beta}, beta);
    EXPECT_NEAR(w[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(w[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeDistancesStayFinite) {
    const auto w = softmax_weights(Vec{1e4, 1e4 + 0.1}, 100.0);
    EXPECT_TRUE(std::isfinite(w[0]) && std::isfinite(w[1]));
    EXPECT_NEAR(w[0] + w[1], 1.0, 1e-12);
}

TEST(Softmax, PropertiesAndOracle) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int i = 0; i < 500; ++i) {
        Vec d(1 + i % 10);
        for (auto& v : d) v = u(rng);
        const double beta = u(rng) * 5.0;
        const auto w = softmax_weights(d, beta);
        const auto o = oracle::softmax(d, beta);
        double s = 0.0;
        for (std::size_t k = 0; k < d.size(); ++k) {
            EXPECT_GE(w[k], 0.0);
            EXPECT_NEAR(w[k], o[k], 1e-12);
            s += w[k];
            for (std::size_t j = 0; j < d.size(); ++j)
                if (beta > 0 && d[k] < d[j]) {
                    EXPECT_GE(w[k], w[j]);
                }
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
        Vec shifted = d;
        for (auto& v : shifted) v += 1.7;
        const auto ws = softmax_weights(shifted, beta);
        for (std::size_t k = 0; k < d.size(); ++k) EXPECT_NEAR(ws[k], w[k], 1e-12);
    }
}

// ── gpi_step ────────────────────────────────────────────────────────────────

TEST(GpiStep, SingleDemoOnCurve) {
    const auto ds = generate_y_shape();
    Dataset one;
    one.layout = ds.layout;
    one.dt = ds.dt;
    one.demos = {ds.demos[0]};
    ExecState exec(deterministic());
    const auto dec = gpi_step(one.demos[0].states.row(20), one, {}, deterministic(), exec);
    EXPECT_TRUE(dec.k_clamped);
    ASSERT_EQ(dec.weights.size(), 1u);
    EXPECT_EQ(dec.weights[0], 1.0);
    EXPECT_DOUBLE_EQ(dec.action[0], one.demos[0].actions(20, 0));
    EXPECT_DOUBLE_EQ(dec.action[1], one.demos[0].actions(20, 1));
}

TEST(GpiStep, IdenticalDemosSplitWeight) {
    const auto base = generate_y_shape();
    Dataset twin;
    twin.layout = base.layout;
    twin.dt = base.dt;
    twin.demos = {base.demos[1], base.demos[1]};
    twin.demos[1].id = 7;
    Dataset one = twin;
    one.demos.resize(1);
    const Vec q{0.55, 0.62};
    ExecState e1(deterministic()), e2(deterministic());
    const auto a = gpi_step(q, twin, {}, deterministic(), e1);
    const auto b = gpi_step(q, one, {}, deterministic(), e2);
    EXPECT_DOUBLE_EQ(a.weights[0], 0.5);
    EXPECT_DOUBLE_EQ(a.weights[1], 0.5);
    EXPECT_EQ(a.selected, (std::vector<int>{1, 7}));
    EXPECT_NEAR(a.action[0], b.action[0], 1e-15);
    EXPECT_NEAR(a.action[1], b.action[1], 1e-15);
}

TEST(GpiStep, StemQueryInsideBranchConeAndMatchesOracle) {
    const auto ds = generate_y_shape();
    const auto& fork = ds.demos[0].states.row(40);
    const Vec q{fork[0], fork[1]};
    PolicyConfig p = deterministic();
    ExecState exec(p);
    const auto dec = gpi_step(q, ds, {}, p, exec);
    const auto o = oracle::gpi_step(q, ds, {}, 1.0, 1.0, p.K, p.beta);
    EXPECT_NEAR(dec.action[0], o[0], 1e-10);
    EXPECT_NEAR(dec.action[1], o[1], 1e-10);
    // within the cone spanned by the two branch tangents
    const auto t0 = segment_direction(ds.demos[0], ds.layout, 40);
    const auto t1 = segment_direction(ds.demos[1], ds.layout, 40);
    const double c0 = t0[0] * dec.action[1] - t0[1] * dec.action[0];
    const double c1 = t1[0] * dec.action[1] - t1[1] * dec.action[0];
    EXPECT_LE(c0 * c1, 1e-12);
    EXPECT_GT(dec.action[1], 0.0);

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.45, 0.55), v(0.1, 0.5);
    for (int i = 0; i < 100; ++i) {
        const Vec s{u(rng), v(rng)};
        ExecState e(p);
        const auto d = gpi_step(s, ds, {}, p, e);
        const auto os = oracle::gpi_step(s, ds, {}, 1.0, 1.0, p.K, p.beta);
        EXPECT_NEAR(d.action[0], os[0], 1e-10);
        EXPECT_NEAR(d.action[1], os[1], 1e-10);
    }
}

TEST(GpiStep, MatchesOracleOnRandomWeightedDatasets) {
    std::mt19937_64 rng(7);
    const auto l = pusht_layout();
    for (int i = 0; i < 30; ++i) {
        const auto ds = random_dataset(l, 12, 30, rng);
        MetricConfig m;
        m.block_weights = {{"agent", 1.3}, {"object", 0.7}, {"angle", 0.2}};
        m.alpha_env = 0.5;
        PolicyConfig p;
        p.K = 1 + static_cast<std::size_t>(i % 6);
        p.beta = 3.0;
        p.lambda1 = FlowWeight::constant(0.4);
        p.lambda2 = FlowWeight::constant(1.5);
        const auto q = oracle::random_state(l, rng);
        ExecState e(p);
        const auto d = gpi_step(q, ds, m, p, e);
        const auto o = oracle::gpi_step(q, ds, m, 0.4, 1.5, p.K, p.beta);
        EXPECT_NEAR(d.action[0], o[0], 1e-10);
        EXPECT_NEAR(d.action[1], o[1], 1e-10);
    }
}

TEST(GpiStep, DecisionInvariants) {
    std::mt19937_64 rng(8);
    const auto l = oracle::mixed_layout();
    const auto ds = random_dataset(l, 15, 20, rng);
    for (int i = 0; i < 100; ++i) {
        const auto m = oracle::random_metric(rng);
        PolicyConfig p;
        p.K = 1 + static_cast<std::size_t>(i % 8);
        const auto q = oracle::random_state(l, rng);
        ExecState e(p);
        const auto d = gpi_step(q, ds, m, p, e);
        double s = 0.0;
        for (double w : d.weights) {
            EXPECT_GE(w, 0.0);
            s += w;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
        // selected are the K smallest
        std::vector<std::pair<double, int>> all;
        for (const auto& pd : d.per_demo) all.emplace_back(pd.d_total, pd.id);
        std::sort(all.begin(), all.end());
        for (std::size_t k = 0; k < p.K; ++k) EXPECT_EQ(d.selected[k], all[k].second);
        // bounded output; attraction magnitude is the actuated block weight
        double bound = 0.0;
        for (std::size_t k = 0; k < p.K; ++k) {
            EXPECT_LE(norm(d.attraction_terms.row(k)), m.weight("agent") + 1e-12);
            bound = std::max(bound, norm(d.progression_terms.row(k)) + norm(d.attraction_terms.row(k)));
        }
        EXPECT_LE(norm(d.action), bound + 1e-12);
    }
}

TEST(GpiStep, KOneEqualsLocalPolicyOfArgmin) {
    std::mt19937_64 rng(9);
    const auto l = pusht_layout();
    const auto ds = random_dataset(l, 10, 25, rng);
    for (int i = 0; i < 100; ++i) {
        const auto q = oracle::random_state(l, rng);
        PolicyConfig p = deterministic(1);
        ExecState e(p);
        const auto d = gpi_step(q, ds, {}, p, e);
        const auto lp = local_policy(q, *ds.find(d.selected[0]), ds, {}, p);
        EXPECT_EQ(d.action, lp);
        for (const auto& pd : d.per_demo) EXPECT_GE(pd.d_total, d.per_demo[static_cast<std::size_t>(d.selected[0])].d_total);
    }
}

TEST(GpiStep, PermutationInvariant) {
    std::mt19937_64 rng(10);
    const auto l = pusht_layout();
    const auto ds = random_dataset(l, 9, 20, rng);
    for (int i = 0; i < 30; ++i) {
        auto perm = ds;
        std::shuffle(perm.demos.begin(), perm.demos.end(), rng);
        const auto q = oracle::random_state(l, rng);
        PolicyConfig p = deterministic(4);
        ExecState e1(p), e2(p);
        const auto a = gpi_step(q, ds, {}, p, e1);
        const auto b = gpi_step(q, perm, {}, p, e2);
        EXPECT_EQ(a.selected, b.selected);
        EXPECT_NEAR(a.action[0], b.action[0], 1e-15);
        EXPECT_NEAR(a.action[1], b.action[1], 1e-15);
    }
}

TEST(GpiStep, TiesOrderedById) {
    const auto base = generate_y_shape();
    Dataset ds;
    ds.layout = base.layout;
    ds.dt = base.dt;
    ds.demos = {base.demos[0], base.demos[1]};
    ds.demos[0].id = 9;
    ds.demos[1].id = 4;
    // stem query: both demos at distance 0
    PolicyConfig p = deterministic(1);
    ExecState e(p);
    const auto d = gpi_step(Vec{0.5, 0.2}, ds, {}, p, e);
    EXPECT_EQ(d.selected, (std::vector<int>{4}));
}

TEST(GpiStep, DeterministicSequences) {
    const auto ds = generate_y_shape();
    PolicyConfig p;
    p.noise_sigma_start = 0.05;
    p.noise_sigma_end = 0.001;
    p.subsample_fraction = 0.5;
    p.suppress_window = 3;
    p.suppress_eps = 0.01;
    p.smoothing_alpha = 0.7;
    p.seed = 42;
    auto run = [&] {
        ExecState e(p, 3, 20);
        std::vector<FlowDecision> out;
        Vec q{0.52, 0.3};
        for (int t = 0; t < 20; ++t) {
            out.push_back(gpi_step(q, ds, {}, p, e));
            q[0] += 0.01 * out.back().action[0];
            q[1] += 0.01 * out.back().action[1];
        }
        return out;
    };
    const auto a = run(), b = run();
    for (std::size_t t = 0; t < a.size(); ++t) {
        EXPECT_EQ(a[t].action, b[t].action);
        EXPECT_EQ(a[t].query, b[t].query);
        EXPECT_EQ(a[t].selected, b[t].selected);
        EXPECT_EQ(a[t].weights, b[t].weights);
    }
}

TEST(GpiStep, ThreadedScanMatchesSerial) {
    std::mt19937_64 rng(11);
    const auto l = oracle::mixed_layout();
    const auto ds = random_dataset(l, 40, 30, rng);
    ThreadPool pool(4);
    for (int i = 0; i < 20; ++i) {
        const auto q = oracle::random_state(l, rng);
        PolicyConfig p = deterministic(5);
        ExecState e1(p), e2(p);
        const auto a = gpi_step(q, ds, {}, p, e1);
        const auto b = gpi_step(q, ds, {}, p, e2, &pool);
        EXPECT_EQ(a.action, b.action);
        EXPECT_EQ(a.selected, b.selected);
    }
}

TEST(GpiStep, Errors) {
    Dataset empty;
    empty.layout = euclidean_layout(2);
    PolicyConfig p;
    ExecState e(p);
    EXPECT_THROW((void)gpi_step(Vec{0.0, 0.0}, empty, {}, p, e), Error);
    const auto ds = generate_y_shape();
    EXPECT_THROW((void)gpi_step(Vec{0.0}, ds, {}, p, e), Error);
    EXPECT_THROW((void)gpi_step(Vec{0.0, std::nan("")}, ds, {}, p, e), Error);
    p.K = 0;
    EXPECT_THROW((void)gpi_step(Vec{0.0, 0.0}, ds, {}, p, e), Error);
}

TEST(GpiStep, SubsamplingClampsK) {
    std::mt19937_64 rng(12);
    const auto ds = random_dataset(pusht_layout(), 10, 10, rng);
    PolicyConfig p;
    p.K = 5;
    p.subsample_fraction = 0.25;
    ExecState e(p);
    const auto d = gpi_step(oracle::random_state(ds.layout, rng), ds, {}, p, e);
    EXPECT_EQ(d.per_demo.size(), 3u);
    EXPECT_TRUE(d.k_clamped);
    EXPECT_EQ(d.selected.size(), 3u);
}

TEST(GpiStep, SubsampleDrawsWithoutReplacement) {
    std::mt19937_64 rng(13);
    const auto ds = random_dataset(pusht_layout(), 20, 5, rng);
    PolicyConfig p;
    p.subsample_fraction = 0.5;
    ExecState e(p);
    for (int t = 0; t < 20; ++t) {
        const auto d = gpi_step(oracle::random_state(ds.layout, rng), ds, {}, p, e);
        std::set<int> ids;
        for (const auto& pd : d.per_demo) ids.insert(pd.id);
        EXPECT_EQ(ids.size(), 10u);
    }
}

// ── relative frame ──────────────────────────────────────────────────────────

TEST(RelativeFrame, IdentityAtOrigin) {
    const auto l = pusht_layout();
    const Vec x{0.3, -0.7, 0.0, 0.0, 0.0};
    EXPECT_EQ(to_relative(x, l), x);
}

TEST(RelativeFrame, QuarterTurn) {
    const auto l = pusht_layout();
    const auto r = to_relative(Vec{1.0, 0.0, 0.0, 0.0, kPi / 2}, l);
    EXPECT_NEAR(r[0], 0.0, 1e-15);
    EXPECT_NEAR(r[1], -1.0, 1e-15);
}

TEST(RelativeFrame, RoundTrip) {
    const auto l = pusht_layout();
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int i = 0; i < 200; ++i) {
        const Vec x{u(rng), u(rng), u(rng), u(rng), u(rng)};
        const auto r = to_relative(x, l);
        const auto back = from_relative(Vec{r[0], r[1]}, Vec{x[2], x[3], x[4]});
        EXPECT_NEAR(back[0], x[0], 1e-12);
        EXPECT_NEAR(back[1], x[1], 1e-12);
        const Vec v{u(rng), u(rng)};
        const auto g = rotate_to_global(rotate(v, -x[4]), x[4]);
        EXPECT_NEAR(g[0], v[0], 1e-12);
        EXPECT_NEAR(g[1], v[1], 1e-12);
    }
}

TEST(RelativeFrame, LayoutMismatch) {
    EXPECT_THROW((void)to_relative(Vec{0.0, 0.0}, euclidean_layout(2)), Error);
}

TEST(RelativeFrame, PolicyIsCovariantUnderRigidMotion) {
    std::mt19937_64 rng(15);
    const auto l = pusht_layout();
    const auto ds = make_relative(random_dataset(l, 6, 20, rng));
    PolicyConfig p = deterministic(3);
    p.frame = Frame::relative;
    MetricConfig m;
    m.block_weights = {{"object", 0.0}, {"angle", 0.0}};
    const Policy pol(ds, m, p);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 50; ++i) {
        const Vec x{u(rng), u(rng), u(rng), u(rng), 3.0 * u(rng)};
        // rotate and translate the whole scene
        const double phi = 2.0 * u(rng);
        const Vec shift{u(rng), u(rng)};
        const auto a = rotate(Vec{x[0], x[1]}, phi), b = rotate(Vec{x[2], x[3]}, phi);
        const Vec y{a[0] + shift[0], a[1] + shift[1], b[0] + shift[0], b[1] + shift[1], x[4] + phi};
        ExecState e1(p), e2(p);
        const auto ux = pol.step(x, e1).action, uy = pol.step(y, e2).action;
        const auto rx = rotate(ux, phi);
        EXPECT_NEAR(rx[0], uy[0], 1e-9);
        EXPECT_NEAR(rx[1], uy[1], 1e-9);
    }
}

TEST(RelativeFrame, RequiresConvertedUnnormalizedDataset) {
    std::mt19937_64 rng(16);
    const auto ds = random_dataset(pusht_layout(), 3, 5, rng);
    PolicyConfig p;
    p.frame = Frame::relative;
    EXPECT_THROW(Policy(ds, {}, p), Error);
    EXPECT_THROW(Policy(normalize(make_relative(ds)), {}, p), Error);
    EXPECT_THROW((void)make_relative(make_relative(ds)), Error);
}

// ── execution variants ──────────────────────────────────────────────────────

TEST(Smoothing, Examples) {
    PolicyConfig p;
    ExecState s(p);
    EXPECT_EQ(smooth_action(Vec{1.0, 2.0}, s, 1.0), (Vec{1.0, 2.0}));
    EXPECT_EQ(smooth_action(Vec{3.0, 4.0}, s, 1.0), (Vec{3.0, 4.0}));

    ExecState c(p);
    EXPECT_EQ(smooth_action(Vec{1.0, 2.0}, c, 0.0), (Vec{1.0, 2.0}));
    EXPECT_EQ(smooth_action(Vec{9.0, 9.0}, c, 0.0), (Vec{1.0, 2.0}));

    ExecState h(p);
    (void)smooth_action(Vec{0.0, 0.0}, h, 0.5);
    EXPECT_EQ(smooth_action(Vec{2.0, 2.0}, h, 0.5), (Vec{1.0, 1.0}));
}

TEST(Suppression, Examples) {
    PolicyConfig p;
    const std::vector<Vec> ranked{{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}};
    ExecState empty(p);
    auto r = suppress_recent(ranked, empty, 2, 0.1);
    EXPECT_EQ(r.index, 0u);
    EXPECT_FALSE(r.fallback);

    ExecState one(p);
    one.window.push_back({1.05, 0.0});
    r = suppress_recent(ranked, one, 2, 0.1);
    EXPECT_EQ(r.index, 1u);
    EXPECT_EQ(r.action, ranked[1]);

    ExecState all(p);
    all.window = {{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}};
    r = suppress_recent(ranked, all, 3, 0.1);
    EXPECT_EQ(r.index, 0u);
    EXPECT_TRUE(r.fallback);
    EXPECT_EQ(all.window.size(), 3u);
    EXPECT_EQ(all.window.back(), ranked[0]);
}

TEST(Suppression, WindowDisabled) {
    PolicyConfig p;
    ExecState s(p);
    s.window.push_back({1.0, 0.0});
    const auto r = suppress_recent({{1.0, 0.0}}, s, 0, 0.5);
    EXPECT_EQ(r.index, 0u);
    EXPECT_FALSE(r.fallback);
}

TEST(Suppression, StationaryQueryFallsBack) {
    const auto ds = generate_y_shape();
    PolicyConfig p;
    p.K = 2;
    p.suppress_window = 1;
    p.suppress_eps = 0.5;
    ExecState e(p);
    const Vec q{0.5, 0.2};
    const auto first = gpi_step(q, ds, {}, p, e);
    EXPECT_EQ(first.chosen_candidate, 0u);
    const auto second = gpi_step(q, ds, {}, p, e);
    // composed and both locals coincide in the stem, so everything is suppressed
    EXPECT_TRUE(second.suppression_fallback);
    EXPECT_EQ(second.action, first.action);
}

TEST(Perturbation, ScheduleEndpoints) {
    EXPECT_EQ(scheduled_sigma(0, 100, 0.1, 0.001), 0.1);
    EXPECT_NEAR(scheduled_sigma(99, 100, 0.1, 0.001), 0.001, 1e-15);
    EXPECT_NEAR(scheduled_sigma(33, 67, 0.1, 0.001), 0.01, 1e-15);
    EXPECT_NEAR(scheduled_sigma(50, 101, 0.2, 0.0), 0.1, 1e-15);
    EXPECT_EQ(scheduled_sigma(5, 1, 0.3, 0.1), 0.3);
}

TEST(Perturbation, ZeroSigmaIsIdentity) {
    const auto l = pusht_layout();
    Rng rng(1);
    const Vec x{0.1, 0.2, 0.3, 0.4, 0.5};
    EXPECT_EQ(perturb_query(x, l, 0, 10, 0.0, 0.0, rng), x);
}

TEST(Perturbation, EmpiricalStdMatchesSchedule) {
    const auto l = pusht_layout();
    Rng rng(2);
    const Vec x{0.1, 0.2, 0.3, 0.4, 0.5};
    const std::size_t step = 40, total = 100;
    const double sigma = scheduled_sigma(step, total, 0.1, 0.001);
    double s0 = 0, ss = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const auto y = perturb_query(x, l, step, total, 0.1, 0.001, rng);
        EXPECT_EQ(y[2], x[2]);
        EXPECT_EQ(y[4], x[4]);
        const double d = y[0] - x[0];
        s0 += d;
        ss += d * d;
    }
    const double mean = s0 / n;
    const double sd = std::sqrt(ss / n - mean * mean);
    EXPECT_NEAR(sd / sigma, 1.0, 0.02);
}

TEST(PolicyConfig, Validation) {
    PolicyConfig p;
    p.horizon = 0;
    EXPECT_THROW(p.validate(), Error);
    p = {};
    p.smoothing_alpha = 1.5;
    EXPECT_THROW(p.validate(), Error);
    p = {};
    p.subsample_fraction = 0.0;
    EXPECT_THROW(p.validate(), Error);
    p = {};
    p.lambda2 = FlowWeight::rising(0.0);
    EXPECT_THROW(p.validate(), Error);
    p = {};
    p.lambda1 = FlowWeight::constant(-1.0);
    EXPECT_THROW(p.validate(), Error);
}
