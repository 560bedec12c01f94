#pragma once

// CSV emitters for traces and field grids, plus environment files.

#include <ostream>
#include <string>
#include <vector>

#include "gpi/rollout.hpp"
#include "gpi/store_io.hpp"

namespace gpi {

/// step,t,x0..x{dims-1},u0..u{m-1},d_min,V; the final row leaves u empty.
inline void write_trace_csv(std::ostream& os, const RolloutTrace& tr) {
    const std::size_t dims = tr.states.cols(), m = tr.act_hi - tr.act_lo;
    os << "step,t";
    for (std::size_t j = 0; j < dims; ++j) os << ",x" << j;
    for (std::size_t j = 0; j < m; ++j) os << ",u" << j;
    os << ",d_min,V\n";
    os.precision(17);
    for (std::size_t n = 0; n < tr.states.rows(); ++n) {
        os << n << ',' << static_cast<double>(n) * tr.dt;
        for (double v : tr.states.row(n)) os << ',' << v;
        for (std::size_t j = 0; j < m; ++j) {
            os << ',';
            if (n < tr.actions.rows()) os << tr.actions(n, j);
        }
        os << ',' << tr.d_min[n] << ',' << tr.V[n] << '\n';
    }
}

/// gx,gy,d,flow_x,flow_y
inline void write_field_csv(std::ostream& os, const std::vector<FieldSample>& samples) {
    os << "gx,gy,d,flow_x,flow_y\n";
    os.precision(17);
    for (const auto& s : samples) os << s.gx << ',' << s.gy << ',' << s.d_min << ',' << s.flow_x << ',' << s.flow_y << '\n';
}

[[nodiscard]] inline Json environment_to_json(const Environment& env) {
    Json walls = Json::array();
    for (const auto& w : env.walls) walls.push_back({w.x1, w.y1, w.x2, w.y2});
    Json bounds = Json::array();
    for (const auto& [lo, hi] : env.bounds) bounds.push_back({lo, hi});
    return Json{{"kind", env.kind == EnvKind::maze ? "maze" : "point_mass"},
                {"bounds", bounds},
                {"walls", walls},
                {"goals", env.goals},
                {"goal_tol", env.goal_tol}};
}

[[nodiscard]] inline Environment environment_from_json(const Json& j) {
    Environment env;
    try {
        const auto kind = j.value("kind", std::string("point_mass"));
        if (kind == "maze") env.kind = EnvKind::maze;
        else if (kind != "point_mass") throw Error("environment: unknown kind '" + kind + "'");
        for (const auto& b : j.at("bounds")) env.bounds.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
        if (j.contains("walls"))
            for (const auto& w : j.at("walls"))
                env.walls.push_back({w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>(),
                                     w.at(3).get<double>()});
        if (j.contains("goals")) env.goals = j.at("goals").get<std::vector<Vec>>();
        if (j.contains("goal")) env.goals.push_back(j.at("goal").get<Vec>());
        env.goal_tol = j.value("goal_tol", env.goal_tol);
    } catch (const Json::exception& e) {
        throw Error(std::string("malformed environment: ") + e.what());
    }
    env.validate();
    return env;
}

}  // namespace gpi
