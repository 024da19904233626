#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpn/continual.hpp"

namespace bpn {

/// 17 significant digits: enough to round-trip any 64-bit real through
/// decimal text.
inline std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Probability-of-class-0 grid over a 2-D input box. Cell (r, c) is
/// evaluated at the cell center: x = xmin + (c + 0.5) dx, y = ymin +
/// (r + 0.5) dy. For memory methods pass the task whose banks should bias
/// the pass; activation state is restored afterward and no parameter moves.
struct HeatmapBounds {
    double xmin = -2.5, xmax = 6.5;
    double ymin = -2.5, ymax = 6.5;
};

inline Matrix heatmap_grid(Network& net, std::optional<TaskId> task, HeatmapBounds bounds,
                           std::size_t resolution) {
    if (net.config.input_size() != 2)
        throw ConfigError("heatmap_grid: network input width is " +
                          std::to_string(net.config.input_size()) + ", need 2");
    if (resolution < 2) throw ConfigError("heatmap_grid: resolution must be >= 2");

    const std::optional<TaskId> prev = net.active_task;
    const double dx = (bounds.xmax - bounds.xmin) / static_cast<double>(resolution);
    const double dy = (bounds.ymax - bounds.ymin) / static_cast<double>(resolution);

    Matrix grid(resolution, resolution);
    Matrix points(resolution, 2);
    for (std::size_t r = 0; r < resolution; ++r) {
        const double y = bounds.ymin + (static_cast<double>(r) + 0.5) * dy;
        for (std::size_t c = 0; c < resolution; ++c) {
            points(c, 0) = bounds.xmin + (static_cast<double>(c) + 0.5) * dx;
            points(c, 1) = y;
        }
        Matrix p = softmax_rows(network_forward(net, points, task));
        for (std::size_t c = 0; c < resolution; ++c) grid(r, c) = p(c, 0);
    }

    if (net.has_memory_layers()) {
        if (prev)
            set_active_task(net, *prev, /*create_missing=*/false);
        else
            deactivate_all_tasks(net);
    }
    return grid;
}

struct Summary {
    double avg_final = 0.0;
    double avg_forgetting = 0.0;
};

/// avg_final: mean accuracy over all tasks after the last one was trained.
/// forgetting of task j: best accuracy it ever had minus its final accuracy,
/// averaged over all but the last task (0 by convention for a single task).
inline Summary summarize(const AccuracyMatrix& m) {
    if (m.acc.empty()) throw InputError("summarize: empty accuracy matrix");
    Summary s;
    const std::size_t last = m.acc.size() - 1;
    for (double a : m.acc[last]) s.avg_final += a;
    s.avg_final /= static_cast<double>(m.acc[last].size());
    if (last == 0) return s;
    for (std::size_t j = 0; j < last; ++j) {
        double best = 0.0;
        for (std::size_t i = j; i <= last; ++i) best = std::max(best, m.acc[i][j]);
        s.avg_forgetting += best - m.acc[last][j];
    }
    s.avg_forgetting /= static_cast<double>(last);
    return s;
}

/// Everything one run produces, ready for serialization.
struct RunRecord {
    std::string run_id;
    std::string method;
    std::uint64_t seed = 0;
    std::string dataset;
    std::string config_digest;
    std::string config_text; ///< canonical key=value lines, embedded verbatim
    std::vector<std::string> overrides;
    AccuracyMatrix matrix;
    std::vector<EpochStat> epochs;
    std::size_t params_base = 0;
    std::size_t params_memory_per_task = 0;
    std::size_t task_count = 0;
    std::size_t anchor_count = 0;
    std::map<TaskId, Matrix> heatmaps;
};

namespace detail {
inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary); // binary: no platform newline games
    if (!os) throw IoError("cannot open for write: " + p.string());
    return os;
}
} // namespace detail

/// Write epochs.csv, matrix.csv, heatmap_<task>.csv and run.json into
/// out_dir; returns the paths written. Output is byte-deterministic for a
/// given record.
inline std::vector<std::string> write_csv(const RunRecord& rec, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output dir " + out_dir + ": " + ec.message());
    std::vector<std::string> paths;

    {
        auto p = fs::path(out_dir) / "epochs.csv";
        auto os = detail::open_out(p);
        os << "epoch,task_trained,task_evaluated,split,loss,accuracy\n";
        for (const auto& e : rec.epochs)
            os << e.epoch << ',' << e.task_trained << ',' << e.task_evaluated << ',' << e.split
               << ',' << fmt17(e.loss) << ',' << fmt17(e.accuracy) << '\n';
        paths.push_back(p.string());
    }

    {
        auto p = fs::path(out_dir) / "matrix.csv";
        auto os = detail::open_out(p);
        os << "task_trained,task_evaluated,accuracy\n";
        for (std::size_t i = 0; i < rec.matrix.acc.size(); ++i)
            for (std::size_t j = 0; j < rec.matrix.acc[i].size(); ++j)
                os << i << ',' << j << ',' << fmt17(rec.matrix.acc[i][j]) << '\n';
        paths.push_back(p.string());
    }

    for (const auto& [task, grid] : rec.heatmaps) {
        auto p = fs::path(out_dir) / ("heatmap_" + std::to_string(task) + ".csv");
        auto os = detail::open_out(p);
        for (std::size_t r = 0; r < grid.rows(); ++r) {
            for (std::size_t c = 0; c < grid.cols(); ++c) {
                if (c) os << ',';
                os << fmt17(grid(r, c));
            }
            os << '\n';
        }
        paths.push_back(p.string());
    }

    {
        auto p = fs::path(out_dir) / "run.json";
        auto os = detail::open_out(p);
        nlohmann::ordered_json j;
        j["schema_version"] = 1;
        j["run_id"] = rec.run_id;
        j["method"] = rec.method;
        j["seed"] = rec.seed;
        j["dataset"] = rec.dataset;
        j["config_digest"] = rec.config_digest;
        j["task_count"] = rec.task_count;
        j["parameter_counts"] = {
            {"base", rec.params_base},
            {"memory_per_task", rec.params_memory_per_task},
            {"memory_total",
             rec.params_memory_per_task * (rec.method == "bd_ewc" || rec.method == "gd_ewc"
                                               ? rec.task_count
                                               : 0)},
            {"anchor_count", rec.anchor_count},
            {"anchor_doubles", rec.anchor_count * 2 * rec.params_base},
        };
        j["overrides"] = rec.overrides;
        j["config_text"] = rec.config_text;
        os << j.dump(2) << '\n';
        paths.push_back(p.string());
    }

    return paths;
}

/// Parse matrix.csv back (serialization round-trip contract).
inline AccuracyMatrix read_matrix_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open for read: " + path);
    std::string line;
    std::getline(is, line); // header
    AccuracyMatrix m;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t i = 0, j = 0;
        double a = 0.0;
        std::istringstream ss(line);
        char comma;
        ss >> i >> comma >> j >> comma >> a;
        if (m.acc.size() <= i) m.acc.resize(i + 1);
        if (m.acc[i].size() <= j) m.acc[i].resize(j + 1);
        m.acc[i][j] = a;
    }
    return m;
}

} // namespace bpn
