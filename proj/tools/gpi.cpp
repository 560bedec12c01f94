// gpi: dataset generation, rollouts, field grids, maze suites and benchmarks.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gpi/gpi.hpp"

namespace fs = std::filesystem;
using namespace gpi;

namespace {

struct Overrides {
    std::vector<std::pair<std::string, std::string>> items;
};

// Pull --metric.*, --policy.*, --rollout.* out of argv so CLI11 never sees them.
Overrides extract_overrides(std::vector<std::string>& args) {
    Overrides o;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        const auto& a = args[i];
        const bool dotted = a.rfind("--metric.", 0) == 0 || a.rfind("--policy.", 0) == 0 || a.rfind("--rollout.", 0) == 0;
        if (!dotted) {
            rest.push_back(a);
            continue;
        }
        const auto eq = a.find('=');
        if (eq != std::string::npos) {
            o.items.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
        } else {
            if (i + 1 >= args.size()) throw Error("missing value for " + a);
            o.items.emplace_back(a.substr(2), args[++i]);
        }
    }
    args = std::move(rest);
    return o;
}

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::string out;
};

RunConfig resolve_config(const Globals& g, const Overrides& o) {
    Json doc = g.config.empty() ? Json::object() : read_json_file(g.config);
    for (const auto& [k, v] : o.items) apply_override(doc, k, v);
    auto cfg = run_config_from_json(doc);
    if (g.seed) cfg.policy.seed = *g.seed;
    return cfg;
}

std::size_t resolve_threads(const Globals& g) {
    if (g.threads) return std::max<std::size_t>(1, *g.threads);
    if (const char* env = std::getenv("GPI_THREADS")) {
        try {
            return std::max<std::size_t>(1, std::stoul(env));
        } catch (const std::exception&) {
            throw Error(std::string("GPI_THREADS: not a number '") + env + "'");
        }
    }
    return 1;
}

Vec parse_vector(const std::string& s) {
    Vec out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw Error("bad number '" + item + "' in '" + s + "'");
        }
    }
    return out;
}

void write_json(const std::string& path, const Json& j) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << "\n";
        return;
    }
    write_text_file(path, j.dump(2) + "\n");
}

// ── gen ─────────────────────────────────────────────────────────────────────

struct GenArgs {
    std::string scenario;
    double branch_angle = kPi / 6.0;
    std::size_t points = 81;
    std::size_t cells = 4;
    std::size_t demos = 8;
    std::string env_out;
};

int cmd_gen(const Globals& g, const GenArgs& a) {
    const std::string out = g.out.empty() ? "dataset.json" : g.out;
    const std::uint64_t seed = g.seed.value_or(0);
    if (a.scenario == "y_shape") {
        save_dataset(generate_y_shape(a.branch_angle, 0.4, 0.4, a.points), out);
        std::cout << "wrote " << out << "\n";
        return 0;
    }
    const auto maze = generate_maze(a.cells, seed);
    const auto ds = generate_maze_demos(maze, a.demos, seed);
    const auto env = maze.environment();
    // replay every demo through the collision checker
    for (const auto& d : ds.demos)
        for (std::size_t t = 0; t + 1 < d.states.rows(); ++t)
            if (env.first_contact(d.states.row(t), d.states.row(t + 1)))
                throw Error("gen: maze demo " + std::to_string(d.id) + " crosses a wall");
    std::string env_out = a.env_out;
    if (env_out.empty()) env_out = (fs::path(out).parent_path() / (fs::path(out).stem().string() + ".env.json")).string();
    save_dataset(ds, out);
    write_text_file(env_out, environment_to_json(env).dump(2) + "\n");
    std::cout << "wrote " << out << " and " << env_out << "\n";
    return 0;
}

// ── rollout ─────────────────────────────────────────────────────────────────

struct RolloutArgs {
    std::string dataset;
    std::string env;
    std::string x0;
    std::optional<std::size_t> random;
    bool check = false;
};

int cmd_rollout(const Globals& g, const Overrides& o, const RolloutArgs& a) {
    const auto cfg = resolve_config(g, o);
    const auto ds = load_dataset(a.dataset);
    const auto env = a.env.empty() ? point_mass_for(ds, cfg.rollout.bounds_margin, cfg.rollout.goal_tol)
                                   : environment_from_json(read_json_file(a.env));
    const std::size_t dims = ds.layout.dims(), lo = ds.layout.actuated_lo();

    Matrix starts;
    if (!a.x0.empty()) {
        const auto x0 = parse_vector(a.x0);
        if (x0.size() != dims) throw Error("--x0 must have " + std::to_string(dims) + " entries");
        starts.append_row(x0);
    } else if (a.random) {
        if (*a.random == 0) throw Error("no episodes");
        if (ds.layout.actuated_dims() != dims) throw Error("--random needs an all-actuated layout; use --x0");
        Rng rng(derive_seed(cfg.policy.seed, "starts"));
        for (std::size_t i = 0; i < *a.random; ++i) {
            Vec x(dims);
            do {
                for (std::size_t j = 0; j < dims; ++j)
                    x[j] = std::uniform_real_distribution<double>(env.bounds[j - lo].first, env.bounds[j - lo].second)(rng);
            } while (env.on_wall(x));
            starts.append_row(x);
        }
    } else {
        throw Error("no episodes");
    }

    const auto traces = run_batch(env, ds, cfg.metric, cfg.policy, starts, cfg.rollout.steps, cfg.rollout.dt,
                                  resolve_threads(g));
    const fs::path dir = g.out.empty() ? fs::path("rollout") : fs::path(g.out);
    fs::create_directories(dir);
    const double band = convergence_band(cfg.policy, cfg.rollout.dt);
    std::size_t successes = 0, violations = 0;
    double steps_sum = 0.0;
    Json episodes = Json::array();
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto& tr = traces[i];
        std::ostringstream name;
        name << "episode_" << std::setw(3) << std::setfill('0') << i << ".csv";
        std::ofstream f(dir / name.str());
        if (!f) throw Error("cannot write " + (dir / name.str()).string());
        write_trace_csv(f, tr);
        const auto ly = lyapunov_check(tr, 1e-12, band);
        if (tr.success) {
            ++successes;
            steps_sum += static_cast<double>(*tr.steps_to_success);
        }
        if (!ly.monotone) ++violations;
        episodes.push_back(Json{{"file", name.str()},
                                {"success", tr.success},
                                {"steps_to_success", tr.steps_to_success ? Json(*tr.steps_to_success) : Json()},
                                {"final_d_min", tr.d_min.back()},
                                {"lyapunov_monotone", ly.monotone}});
    }
    const double rate = static_cast<double>(successes) / static_cast<double>(traces.size());
    Json summary{{"episodes", traces.size()},
                 {"success_rate", rate},
                 {"mean_steps", successes ? Json(steps_sum / static_cast<double>(successes)) : Json()},
                 {"diversity", diversity(traces)},
                 {"lyapunov_violations", violations},
                 {"convergence_band", band},
                 {"seed", cfg.policy.seed},
                 {"per_episode", episodes}};
    write_json((dir / "summary.json").string(), summary);
    std::cout << "episodes=" << traces.size() << " success_rate=" << rate << " lyapunov_violations=" << violations
              << "\n";
    if (a.check && successes != traces.size()) return 2;
    return 0;
}

// ── field ───────────────────────────────────────────────────────────────────

struct FieldArgs {
    std::string dataset;
    std::size_t grid = 50;
    std::string lo = "0,0";
    std::string hi = "1,1";
    std::string fixed;
};

int cmd_field(const Globals& g, const Overrides& o, const FieldArgs& a) {
    const auto cfg = resolve_config(g, o);
    const auto ds = load_dataset(a.dataset);
    GridSpec grid;
    grid.resolution = a.grid;
    const auto lo = parse_vector(a.lo), hi = parse_vector(a.hi);
    if (lo.size() != 2 || hi.size() != 2) throw Error("--lo/--hi must have 2 entries");
    grid.lo = {lo[0], lo[1]};
    grid.hi = {hi[0], hi[1]};
    const auto fixed = a.fixed.empty() ? Vec{} : parse_vector(a.fixed);
    const auto samples = field_grid(ds, cfg.metric, cfg.policy, grid, fixed);
    const std::string out = g.out.empty() ? "field.csv" : g.out;
    std::ofstream f(out);
    if (!f) throw Error("cannot write '" + out + "'");
    write_field_csv(f, samples);
    std::cout << "wrote " << samples.size() << " rows to " << out << "\n";
    return 0;
}

// ── maze ────────────────────────────────────────────────────────────────────

struct MazeArgs {
    std::string env;
    std::string dataset;
    std::size_t trials = 20;
};

int cmd_maze(const Globals& g, const MazeArgs& a) {
    if (a.trials == 0) throw Error("no trials");
    const auto env = environment_from_json(read_json_file(a.env));
    const auto ds = load_dataset(a.dataset);
    if (env.goals.empty()) throw Error("maze environment has no goal");
    const auto starts = sample_maze_starts(ds, a.trials, g.seed.value_or(0));
    std::size_t successes = 0, collisions = 0;
    double select_sum = 0.0;
    for (std::size_t i = 0; i < starts.rows(); ++i) {
        const auto r = run_maze_trial(env, ds, starts.row(i), env.goals.front());
        successes += r.success;
        collisions += r.collided;
        select_sum += r.selection_seconds;
    }
    const double rate = static_cast<double>(successes) / static_cast<double>(a.trials);
    const double mean_ms = 1e3 * select_sum / static_cast<double>(a.trials);
    Json summary{{"trials", a.trials},
                 {"success_rate", rate},
                 {"collisions", collisions},
                 {"mean_selection_ms", mean_ms}};
    if (!g.out.empty()) write_json(g.out, summary);
    std::cout << "trials=" << a.trials << " success_rate=" << rate << " mean_selection_ms=" << mean_ms << "\n";
    return successes == a.trials ? 0 : 2;
}

// ── bench ───────────────────────────────────────────────────────────────────

struct BenchArgs {
    std::string dataset;
    std::size_t rows = 25000;
    std::size_t dims = 7;
    std::size_t demos = 200;
    std::size_t queries = 100;
    std::size_t iterations = kBenchMinIterations;
};

int cmd_bench(const Globals& g, const Overrides& o, const BenchArgs& a) {
    const auto cfg = resolve_config(g, o);
    const auto ds = a.dataset.empty() ? make_synthetic_dataset(a.rows, a.dims, a.demos, cfg.policy.seed)
                                      : load_dataset(a.dataset);
    const auto queries = make_bench_queries(ds, a.queries, cfg.policy.seed);
    const auto report = bench_step(ds, cfg.metric, cfg.policy, queries, resolve_threads(g), a.iterations);
    std::cout << report.to_text();
    if (!g.out.empty()) write_json(g.out, report.to_json());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    Overrides overrides;
    try {
        overrides = extract_overrides(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    CLI::App app{"Geometry-aware policy imitation: datasets, rollouts, fields, mazes and benchmarks"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    app.add_option("--config", g.config, "Run-config JSON with metric/policy/rollout sections")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "Root seed (overrides policy.seed from the config)");
    auto* threads_opt = app.add_option("--threads", threads, "Worker threads (default: $GPI_THREADS, else 1)");
    app.add_option("--out", g.out, "Output file or directory");
    app.footer("Config leaves can be set with dotted flags, e.g. --policy.K 5 or --metric.block_weights.agent=2.\n"
               "Precedence: flag > config file > built-in default.");

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a dataset (and a maze environment file)");
    gen_cmd->add_option("scenario", gen.scenario, "y_shape or maze")->required()->check(CLI::IsMember({"y_shape", "maze"}));
    gen_cmd->add_option("--branch-angle", gen.branch_angle, "Y-shape branch angle from vertical (rad)");
    gen_cmd->add_option("--points", gen.points, "Y-shape points per demo");
    gen_cmd->add_option("--cells", gen.cells, "Maze cells per side");
    gen_cmd->add_option("--demos", gen.demos, "Maze demonstrations");
    gen_cmd->add_option("--env-out", gen.env_out, "Maze environment path (default <out>.env.json)");

    RolloutArgs ro;
    std::size_t random_n = 0;
    auto* ro_cmd = app.add_subcommand("rollout", "Closed-loop episodes; writes per-episode CSVs and summary.json");
    ro_cmd->add_option("--dataset", ro.dataset)->required()->check(CLI::ExistingFile);
    ro_cmd->add_option("--env", ro.env, "Environment JSON (default: point mass around the data)");
    ro_cmd->add_option("--x0", ro.x0, "Comma-separated start state");
    auto* random_opt = ro_cmd->add_option("--random", random_n, "Number of uniformly random starts");
    ro_cmd->add_flag("--check", ro.check, "Exit 2 unless every episode reaches a goal");

    FieldArgs fa;
    auto* field_cmd = app.add_subcommand("field", "Distance and flow field on an R x R grid (CSV)");
    field_cmd->add_option("--dataset", fa.dataset)->required()->check(CLI::ExistingFile);
    field_cmd->add_option("--grid", fa.grid, "Grid resolution R")->check(CLI::PositiveNumber);
    field_cmd->add_option("--lo", fa.lo, "Grid lower corner x,y");
    field_cmd->add_option("--hi", fa.hi, "Grid upper corner x,y");
    field_cmd->add_option("--fixed", fa.fixed, "Full state supplying the non-actuated coordinates");

    MazeArgs ma;
    auto* maze_cmd = app.add_subcommand("maze", "Suffix selection and execution trials");
    maze_cmd->add_option("--env", ma.env)->required()->check(CLI::ExistingFile);
    maze_cmd->add_option("--dataset", ma.dataset)->required()->check(CLI::ExistingFile);
    maze_cmd->add_option("--trials", ma.trials);

    BenchArgs ba;
    auto* bench_cmd = app.add_subcommand("bench", "Step latency and storage accounting");
    bench_cmd->add_option("--dataset", ba.dataset, "Dataset (default: synthetic pushing data)");
    bench_cmd->add_option("--rows", ba.rows, "Synthetic rows");
    bench_cmd->add_option("--dims", ba.dims, "Synthetic state dims");
    bench_cmd->add_option("--demos", ba.demos, "Synthetic demonstrations");
    bench_cmd->add_option("--queries", ba.queries);
    bench_cmd->add_option("--iterations", ba.iterations);

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    if (*seed_opt) g.seed = seed;
    if (*threads_opt) g.threads = threads;
    if (*random_opt) ro.random = random_n;

    try {
        if (*gen_cmd) return cmd_gen(g, gen);
        if (*ro_cmd) return cmd_rollout(g, overrides, ro);
        if (*field_cmd) return cmd_field(g, overrides, fa);
        if (*maze_cmd) return cmd_maze(g, ma);
        if (*bench_cmd) return cmd_bench(g, overrides, ba);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
