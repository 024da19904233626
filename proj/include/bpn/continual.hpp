#pragma once

#include <string>
#include <vector>

#include "bpn/data.hpp"
#include "bpn/ewc.hpp"
#include "bpn/loss.hpp"
#include "bpn/network.hpp"

namespace bpn {

/// Training regimes compared in the experiments.
enum class Method {
    BdEwc,    ///< memory units trained with sign steps, normal weights under EWC
    GdEwc,    ///< same structure, memory units trained with exact gradients
    EwcOnly,  ///< no memory units, EWC on the shared weights
    PlainSgd, ///< no memory units, no constraint
    Stl,      ///< one fresh network per task (no-forgetting upper bound)
};

inline bool method_uses_memory(Method m) { return m == Method::BdEwc || m == Method::GdEwc; }
inline bool method_uses_ewc(Method m) {
    return m == Method::BdEwc || m == Method::GdEwc || m == Method::EwcOnly;
}

inline const char* method_name(Method m) {
    switch (m) {
        case Method::BdEwc: return "bd_ewc";
        case Method::GdEwc: return "gd_ewc";
        case Method::EwcOnly: return "ewc";
        case Method::PlainSgd: return "sgd";
        case Method::Stl: return "stl";
    }
    return "?";
}

struct TrainConfig {
    double lr = 0.01;
    double lr_mem = 0.01;
    double epsilon = 0.5;
    double lambda = 100.0;
    std::size_t epochs = 10;
    std::size_t batch = 64;
    std::size_t fisher_samples = 1000;
    std::size_t eval_batch = 256;
    std::uint64_t seed = 1;
    bool eval_all_tasks_each_epoch = false;
};

/// One row of the per-epoch log.
struct EpochStat {
    TaskId task_trained = 0;
    std::size_t epoch = 0; ///< 1-based within the task
    TaskId task_evaluated = 0;
    std::string split; ///< "train" or "test"
    double loss = 0.0;
    double accuracy = 0.0;
};

/// acc[i][j]: accuracy on task j after finishing training task i (j <= i).
struct AccuracyMatrix {
    std::vector<std::vector<double>> acc;

    std::size_t task_count() const { return acc.size(); }
    double at(std::size_t i, std::size_t j) const { return acc.at(i).at(j); }
};

namespace detail {

inline void check_method_config(const Network& net, Method method) {
    if (method_uses_memory(method) && !net.has_memory_layers())
        throw ConfigError(std::string(method_name(method)) +
                          " requires memory layers in the network config");
    if (!method_uses_memory(method) && net.has_memory_layers())
        throw ConfigError(std::string(method_name(method)) +
                          " must not be run with memory layers configured");
}

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Batched argmax accuracy (and mean loss) over the given rows.
inline EvalResult eval_on_rows(Network& net, const Dataset& ds,
                               const std::vector<std::size_t>& rows, std::size_t eval_batch,
                               std::optional<TaskId> task) {
    EvalResult r;
    if (rows.empty()) return r;
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < rows.size(); b += eval_batch) {
        const std::size_t e = std::min(rows.size(), b + eval_batch);
        Matrix x = gather_rows(ds.features, rows, b, e);
        const auto labels = gather_labels(ds.labels, rows, b, e);
        Matrix logits = network_forward(net, x, task);
        LossResult lr = softmax_cross_entropy(logits, one_hot(labels, logits.cols()));
        loss_sum += lr.loss * static_cast<double>(e - b);
        for (std::size_t i = 0; i < logits.rows(); ++i)
            if (argmax_row(logits, i) == static_cast<std::size_t>(labels[i])) ++correct;
    }
    r.loss = loss_sum / static_cast<double>(rows.size());
    r.accuracy = static_cast<double>(correct) / static_cast<double>(rows.size());
    return r;
}

} // namespace detail

/// Test accuracy of one task under the task oracle: for memory methods the
/// task's banks are activated for the pass and the previous activation state
/// is restored afterward. Parameters are never mutated.
inline double evaluate(Network& net, const Dataset& ds, const TaskSpec& task, Method method,
                       std::size_t eval_batch = 256) {
    const std::optional<TaskId> prev = net.active_task;
    std::optional<TaskId> use;
    if (method_uses_memory(method)) {
        set_active_task(net, task.id, /*create_missing=*/false);
        use = task.id;
    }
    const double acc =
        detail::eval_on_rows(net, ds, task.test_indices, eval_batch, use).accuracy;
    if (method_uses_memory(method)) {
        if (prev)
            set_active_task(net, *prev, /*create_missing=*/false);
        else
            deactivate_all_tasks(net);
    }
    return acc;
}

/// Minibatch training of one task. The caller activates the task first for
/// memory methods (done by run_sequence); the epoch log carries a train row
/// and a test row for the task being trained, plus test rows for earlier
/// tasks when eval_all_tasks_each_epoch is set.
inline std::vector<EpochStat> train_task(Network& net, const Dataset& ds, const TaskSpec& task,
                                         Method method, const TrainConfig& cfg,
                                         const std::vector<const TaskSpec*>& epoch_eval_tasks = {}) {
    detail::check_method_config(net, method);
    const std::optional<TaskId> use =
        method_uses_memory(method) ? std::optional<TaskId>(task.id) : std::nullopt;
    if (use && net.active_task != use)
        throw StateError("train_task: task " + std::to_string(task.id) + " is not active");
    const MemoryMode mode =
        (method == Method::GdEwc) ? MemoryMode::Gradient : MemoryMode::Beneficial;
    const bool ewc = method_uses_ewc(method);

    std::vector<EpochStat> stats;
    std::vector<std::size_t> order = task.train_indices;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng = split_rng(cfg.seed, 0x73687566ULL /*"shuf"*/,
                                    static_cast<std::uint64_t>(static_cast<std::uint32_t>(task.id)),
                                    epoch);
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
            const std::size_t e = std::min(order.size(), b + cfg.batch);
            Matrix x = gather_rows(ds.features, order, b, e);
            const auto labels = gather_labels(ds.labels, order, b, e);

            ForwardTrace trace = forward_trace(net, x, use);
            LossResult lr = softmax_cross_entropy(trace.logits(), one_hot(labels, trace.logits().cols()));
            NetworkGrads grads = network_backward(net, trace, lr.grad, mode, cfg.epsilon);
            if (ewc && !net.anchors.empty()) {
                EwcPenalty pen = ewc_penalty(net, net.anchors, cfg.lambda);
                for (std::size_t l = 0; l < net.layers.size(); ++l) {
                    add_inplace(grads.layers[l].dW, pen.dW[l]);
                    add_inplace(grads.layers[l].dbias, pen.dbias[l]);
                }
            }
            apply_gradients(net, grads, cfg.lr, cfg.lr_mem);

            loss_sum += lr.loss * static_cast<double>(e - b);
            for (std::size_t i = 0; i < trace.logits().rows(); ++i)
                if (argmax_row(trace.logits(), i) == static_cast<std::size_t>(labels[i]))
                    ++correct;
        }

        EpochStat train_row;
        train_row.task_trained = task.id;
        train_row.epoch = epoch;
        train_row.task_evaluated = task.id;
        train_row.split = "train";
        train_row.loss =
            order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
        train_row.accuracy =
            order.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(order.size());
        stats.push_back(train_row);

        for (const TaskSpec* t : epoch_eval_tasks) {
            const std::optional<TaskId> prev = net.active_task;
            std::optional<TaskId> eval_use;
            if (method_uses_memory(method)) {
                set_active_task(net, t->id, /*create_missing=*/false);
                eval_use = t->id;
            }
            detail::EvalResult er =
                detail::eval_on_rows(net, ds, t->test_indices, cfg.eval_batch, eval_use);
            if (method_uses_memory(method) && prev) set_active_task(net, *prev, false);
            EpochStat row;
            row.task_trained = task.id;
            row.epoch = epoch;
            row.task_evaluated = t->id;
            row.split = "test";
            row.loss = er.loss;
            row.accuracy = er.accuracy;
            stats.push_back(row);
        }
    }
    return stats;
}

struct RunOutcome {
    AccuracyMatrix matrix;
    std::vector<EpochStat> epochs;
    /// Single shared network, or one per task for STL (index == task order).
    std::vector<Network> nets;
};

/// Train the task sequence under one method: activate banks (memory
/// methods), train, consolidate (EWC methods), then evaluate every task seen
/// so far. STL trains an independent network per task instead.
inline RunOutcome run_sequence(const Dataset& ds, const std::vector<TaskSpec>& tasks,
                               Method method, const NetworkConfig& netcfg,
                               const TrainConfig& cfg) {
    if (tasks.empty()) throw InputError("run_sequence: no tasks");
    RunOutcome out;
    out.matrix.acc.resize(tasks.size());

    if (method == Method::Stl) {
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            Network net = make_network(netcfg, detail::mix_u64(cfg.seed, 0x73746cULL + t));
            TrainConfig tc = cfg;
            tc.seed = detail::mix_u64(cfg.seed, 0x73746c32ULL + t);
            std::vector<const TaskSpec*> eval{&tasks[t]};
            auto stats = train_task(net, ds, tasks[t], method, tc, eval);
            out.epochs.insert(out.epochs.end(), stats.begin(), stats.end());
            out.nets.push_back(std::move(net));
            for (std::size_t j = 0; j <= t; ++j)
                out.matrix.acc[t].push_back(
                    evaluate(out.nets[j], ds, tasks[j], method, cfg.eval_batch));
        }
        return out;
    }

    Network net = make_network(netcfg, cfg.seed);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (method_uses_memory(method)) set_active_task(net, tasks[t].id);

        std::vector<const TaskSpec*> eval;
        if (cfg.eval_all_tasks_each_epoch)
            for (std::size_t j = 0; j <= t; ++j) eval.push_back(&tasks[j]);
        else
            eval.push_back(&tasks[t]);

        auto stats = train_task(net, ds, tasks[t], method, cfg, eval);
        out.epochs.insert(out.epochs.end(), stats.begin(), stats.end());

        if (method_uses_ewc(method)) {
            // Fisher over a deterministic shuffle of the task's training rows
            std::vector<std::size_t> rows = tasks[t].train_indices;
            Rng rng = split_rng(cfg.seed, 0x66697368ULL /*"fish"*/,
                                static_cast<std::uint64_t>(static_cast<std::uint32_t>(tasks[t].id)));
            rng.shuffle(rows);
            if (rows.size() > cfg.fisher_samples) rows.resize(cfg.fisher_samples);
            Matrix fx = gather_rows(ds.features, rows, 0, rows.size());
            auto fl = gather_labels(ds.labels, rows, 0, rows.size());
            consolidate(net, tasks[t].id, fx, fl, cfg.fisher_samples);
        }

        for (std::size_t j = 0; j <= t; ++j)
            out.matrix.acc[t].push_back(evaluate(net, ds, tasks[j], method, cfg.eval_batch));
    }
    out.nets.push_back(std::move(net));
    return out;
}

} // namespace bpn
