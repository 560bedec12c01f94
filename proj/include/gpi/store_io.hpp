#pragma once

// JSON dataset files:
//   {"dt": number,
//    "layout": {"dims": n, "block_spec": [{"name", "range": [lo, hi], "metric"}],
//               "actuated": [block names]},
//    "demos": [{"id"?, "states": [[...]], "actions"?: [[...]]}],
//    "normalization"?: {"min": [...], "max": [...], "scaled": [...]},
//    "frame"?: "absolute" | "relative"}

#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "gpi/store.hpp"
#include "json.hpp"

namespace gpi {

using Json = nlohmann::json;

namespace detail {

inline double finite_number(const Json& v, const char* what) {
    if (!v.is_number()) throw Error(std::string("malformed dataset: expected number in ") + what);
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw Error(std::string("non-finite value in ") + what);
    return x;
}

inline Matrix matrix_from_json(const Json& rows, const char* what) {
    if (!rows.is_array()) throw Error(std::string("malformed dataset: '") + what + "' must be an array");
    Matrix m;
    Vec buf;
    for (const auto& r : rows) {
        if (!r.is_array()) throw Error(std::string("malformed dataset: rows of '") + what + "' must be arrays");
        buf.clear();
        for (const auto& v : r) buf.push_back(finite_number(v, what));
        if (!m.empty() && buf.size() != m.cols())
            throw Error(std::string("dimension mismatch: ragged rows in '") + what + "'");
        m.append_row(buf);
    }
    return m;
}

inline Json matrix_to_json(const Matrix& m) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto row = m.row(r);
        rows.push_back(Json(std::vector<double>(row.begin(), row.end())));
    }
    return rows;
}

}  // namespace detail

[[nodiscard]] inline StateLayout layout_from_json(const Json& j) {
    if (!j.is_object() || !j.contains("block_spec") || !j.contains("actuated"))
        throw Error("malformed layout: needs 'block_spec' and 'actuated'");
    std::vector<Block> blocks;
    for (const auto& b : j.at("block_spec")) {
        Block blk;
        blk.name = b.at("name").get<std::string>();
        const auto& range = b.at("range");
        if (!range.is_array() || range.size() != 2) throw Error("malformed layout: range must be [lo, hi)");
        blk.lo = range[0].get<std::size_t>();
        blk.hi = range[1].get<std::size_t>();
        blk.metric = metric_kind_from_string(b.at("metric").get<std::string>());
        if (b.contains("period")) blk.period = b.at("period").get<double>();
        if (b.value("axial", false)) blk.period = kPi;
        blocks.push_back(std::move(blk));
    }
    StateLayout layout(std::move(blocks), j.at("actuated").get<std::vector<std::string>>());
    if (j.contains("dims") && j.at("dims").get<std::size_t>() != layout.dims())
        throw Error("malformed layout: 'dims' disagrees with block ranges");
    return layout;
}

[[nodiscard]] inline Json layout_to_json(const StateLayout& layout) {
    Json blocks = Json::array();
    for (const auto& b : layout.blocks()) {
        Json e{{"name", b.name}, {"range", {b.lo, b.hi}}, {"metric", std::string(to_string(b.metric))}};
        if (b.metric == MetricKind::angular_axial && b.period != 2.0 * kPi) e["period"] = b.period;
        blocks.push_back(std::move(e));
    }
    return Json{{"dims", layout.dims()}, {"block_spec", blocks}, {"actuated", layout.actuated_names()}};
}

/// Parse a dataset document. An explicit layout must match the file's layout
/// when the file declares one; an explicit dt overrides the file's.
[[nodiscard]] inline Dataset dataset_from_json(const Json& j, const std::optional<StateLayout>& layout = {},
                                               std::optional<double> dt = {}) {
    if (!j.is_object()) throw Error("malformed dataset: top level must be an object");
    Dataset ds;
    if (j.contains("layout")) {
        ds.layout = layout_from_json(j.at("layout"));
        if (layout && !(*layout == ds.layout)) throw Error("dimension mismatch: file layout differs from expected layout");
    } else if (layout) {
        ds.layout = *layout;
    } else {
        throw Error("malformed dataset: no layout");
    }
    if (dt) {
        ds.dt = *dt;
    } else if (j.contains("dt")) {
        ds.dt = detail::finite_number(j.at("dt"), "dt");
    } else {
        throw Error("malformed dataset: no dt");
    }
    if (!(ds.dt > 0.0)) throw Error("dt must be positive");
    if (!j.contains("demos") || !j.at("demos").is_array()) throw Error("malformed dataset: 'demos' must be an array");

    int next_id = 0;
    for (const auto& dj : j.at("demos")) {
        Demonstration d;
        d.id = dj.contains("id") ? dj.at("id").get<int>() : next_id;
        next_id = d.id + 1;
        d.states = detail::matrix_from_json(dj.at("states"), "states");
        if (dj.contains("actions")) d.actions = detail::matrix_from_json(dj.at("actions"), "actions");
        finalize_demonstration(d, ds.layout, ds.dt);
        if (ds.find(d.id)) throw Error("malformed dataset: duplicate demo id " + std::to_string(d.id));
        ds.demos.push_back(std::move(d));
    }

    if (j.contains("normalization")) {
        const auto& n = j.at("normalization");
        auto mins = n.at("min").get<std::vector<double>>();
        auto maxs = n.at("max").get<std::vector<double>>();
        auto scaled = n.at("scaled").get<std::vector<bool>>();
        if (mins.size() != ds.layout.dims() || maxs.size() != mins.size() || scaled.size() != mins.size())
            throw Error("dimension mismatch: normalization parameters");
        for (std::size_t i = 0; i < mins.size(); ++i) ds.norm_params.push_back({mins[i], maxs[i], scaled[i]});
        ds.normalized = true;
    }
    if (j.contains("frame")) {
        const auto f = j.at("frame").get<std::string>();
        if (f == "relative") ds.frame = Frame::relative;
        else if (f != "absolute") throw Error("malformed dataset: unknown frame '" + f + "'");
    }
    return ds;
}

[[nodiscard]] inline Json dataset_to_json(const Dataset& ds) {
    Json demos = Json::array();
    for (const auto& d : ds.demos)
        demos.push_back(Json{{"id", d.id}, {"states", detail::matrix_to_json(d.states)},
                             {"actions", detail::matrix_to_json(d.actions)}});
    Json j{{"dt", ds.dt}, {"layout", layout_to_json(ds.layout)}, {"demos", std::move(demos)}};
    if (ds.normalized) {
        Json mins = Json::array(), maxs = Json::array(), scaled = Json::array();
        for (const auto& p : ds.norm_params) {
            mins.push_back(p.min);
            maxs.push_back(p.max);
            scaled.push_back(p.scaled);
        }
        j["normalization"] = Json{{"min", mins}, {"max", maxs}, {"scaled", scaled}};
    }
    if (ds.frame == Frame::relative) j["frame"] = "relative";
    return j;
}

[[nodiscard]] inline Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw Error("malformed file '" + path + "': " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
}

[[nodiscard]] inline Dataset load_dataset(const std::string& path, const std::optional<StateLayout>& layout = {},
                                          std::optional<double> dt = {}) {
    try {
        return dataset_from_json(read_json_file(path), layout, dt);
    } catch (const Json::exception& e) {
        throw Error("malformed dataset '" + path + "': " + e.what());
    }
}

[[nodiscard]] inline std::string serialize_dataset(const Dataset& ds) { return dataset_to_json(ds).dump() + "\n"; }

inline void save_dataset(const Dataset& ds, const std::string& path) { write_text_file(path, serialize_dataset(ds)); }

}  // namespace gpi
