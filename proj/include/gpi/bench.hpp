#pragma once

// Step latency and storage accounting.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gpi/parallel.hpp"
#include "gpi/policy.hpp"
#include "gpi/store_io.hpp"

namespace gpi {

struct BenchReport {
    std::size_t dataset_rows = 0;
    std::size_t dims = 0;
    std::size_t K = 0;
    double latency_median_us = 0.0;
    double latency_p99_us = 0.0;
    std::size_t serialized_bytes_f32 = 0;
    std::size_t threads = 1;
    std::size_t iterations = 0;
    std::vector<Vec> actions;  ///< one per query, from the first timed pass

    [[nodiscard]] std::string to_text() const {
        std::ostringstream os;
        os << "dataset_rows=" << dataset_rows << "\n"
           << "dims=" << dims << "\n"
           << "K=" << K << "\n"
           << "latency_median_us=" << latency_median_us << "\n"
           << "latency_p99_us=" << latency_p99_us << "\n"
           << "serialized_bytes_f32=" << serialized_bytes_f32 << "\n"
           << "threads=" << threads << "\n"
           << "iterations=" << iterations << "\n";
        return os.str();
    }

    [[nodiscard]] Json to_json() const {
        return Json{{"dataset_rows", dataset_rows},
                    {"dims", dims},
                    {"K", K},
                    {"latency_median_us", latency_median_us},
                    {"latency_p99_us", latency_p99_us},
                    {"serialized_bytes_f32", serialized_bytes_f32},
                    {"threads", threads},
                    {"iterations", iterations}};
    }
};

/// Bytes needed to store every state entry as float32.
[[nodiscard]] inline std::size_t serialized_bytes_f32(const Dataset& ds) noexcept {
    return ds.total_rows() * ds.layout.dims() * sizeof(float);
}

/// Planar pushing-style layout padded to `dims` with extra euclidean dims:
/// agent (2, actuated), object (2), angle (1), aux (dims - 5).
[[nodiscard]] inline StateLayout pushing_layout(std::size_t dims = 5) {
    if (dims < 5) throw Error("pushing layout needs at least 5 dims");
    std::vector<Block> blocks{{"agent", 0, 2, MetricKind::euclidean},
                              {"object", 2, 4, MetricKind::euclidean},
                              {"angle", 4, 5, MetricKind::angular_axial}};
    if (dims > 5) blocks.push_back({"aux", 5, dims, MetricKind::euclidean});
    return StateLayout(std::move(blocks), {"agent"});
}

/// Smooth random demonstrations totalling `rows` states in [0,1]^dims.
[[nodiscard]] inline Dataset make_synthetic_dataset(std::size_t rows = 25000, std::size_t dims = 7,
                                                    std::size_t demos = 200, std::uint64_t seed = 0,
                                                    double dt = 0.1) {
    if (demos == 0 || rows < 2 * demos) throw Error("synthetic dataset: need at least 2 rows per demo");
    Dataset ds;
    ds.layout = pushing_layout(dims);
    ds.dt = dt;
    Rng rng(derive_seed(seed, "synthetic"));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> step(0.0, 0.01);
    for (std::size_t i = 0; i < demos; ++i) {
        const std::size_t len = rows / demos + (i < rows % demos ? 1 : 0);
        Demonstration d;
        d.id = static_cast<int>(i);
        d.states = Matrix(len, dims);
        Vec x(dims);
        for (auto& v : x) v = uni(rng);
        x[4] *= 2.0 * kPi;
        for (std::size_t t = 0; t < len; ++t) {
            for (std::size_t j = 0; j < dims; ++j) {
                if (t > 0) x[j] += step(rng);
                if (j != 4) x[j] = std::clamp(x[j], 0.0, 1.0);
                d.states(t, j) = x[j];
            }
        }
        finalize_demonstration(d, ds.layout, dt);
        ds.demos.push_back(std::move(d));
    }
    return ds;
}

/// Stored states with Gaussian jitter, drawn from a fixed seed.
[[nodiscard]] inline std::vector<Vec> make_bench_queries(const Dataset& ds, std::size_t count, std::uint64_t seed,
                                                         double jitter = 0.02) {
    Rng rng(derive_seed(seed, "bench-queries"));
    std::uniform_int_distribution<std::size_t> demo_pick(0, ds.demos.size() - 1);
    std::normal_distribution<double> noise(0.0, jitter);
    std::vector<Vec> out;
    for (std::size_t i = 0; i < count; ++i) {
        const auto& d = ds.demos[demo_pick(rng)];
        const auto t = std::uniform_int_distribution<std::size_t>(0, d.states.rows() - 1)(rng);
        auto row = d.states.row(t);
        Vec q(row.begin(), row.end());
        for (auto& v : q) v += noise(rng);
        out.push_back(std::move(q));
    }
    return out;
}

inline constexpr std::size_t kBenchWarmup = 100;
inline constexpr std::size_t kBenchMinIterations = 1000;

/// Median and p99 of single-step latency over warm iterations cycling through `queries`.
[[nodiscard]] inline BenchReport bench_step(const Dataset& ds, const MetricConfig& mcfg, const PolicyConfig& pcfg,
                                            const std::vector<Vec>& queries, std::size_t threads,
                                            std::size_t iterations = kBenchMinIterations) {
    if (queries.size() < 100) throw Error("bench_step: need at least 100 queries");
    iterations = std::max(iterations, kBenchMinIterations);
    const Policy policy(ds, mcfg, pcfg);
    ThreadPool pool(threads);
    ThreadPool* p = threads > 1 ? &pool : nullptr;

    BenchReport r;
    r.dataset_rows = ds.total_rows();
    r.dims = ds.layout.dims();
    r.K = pcfg.K;
    r.threads = pool.size();
    r.iterations = iterations;
    r.serialized_bytes_f32 = serialized_bytes_f32(ds);

    for (std::size_t i = 0; i < kBenchWarmup; ++i) {
        ExecState exec(pcfg, i);
        (void)policy.step(queries[i % queries.size()], exec, p);
    }
    std::vector<double> us;
    us.reserve(iterations);
    for (std::size_t i = 0; i < iterations; ++i) {
        ExecState exec(pcfg, i % queries.size());
        const auto t0 = std::chrono::steady_clock::now();
        auto dec = policy.step(queries[i % queries.size()], exec, p);
        const auto t1 = std::chrono::steady_clock::now();
        us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
        if (i < queries.size()) r.actions.push_back(std::move(dec.action));
    }
    std::sort(us.begin(), us.end());
    r.latency_median_us = us[us.size() / 2];
    r.latency_p99_us = us[std::min(us.size() - 1, static_cast<std::size_t>(0.99 * static_cast<double>(us.size())))];
    return r;
}

}  // namespace gpi
