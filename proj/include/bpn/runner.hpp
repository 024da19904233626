#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bpn/checkpoint.hpp"
#include "bpn/config.hpp"
#include "bpn/continual.hpp"
#include "bpn/metrics.hpp"

namespace bpn {

struct LoadedData {
    Dataset ds;
    std::vector<TaskSpec> tasks;
};

namespace rundetail {

inline std::string find_existing(const std::vector<std::string>& candidates,
                                 const std::string& what) {
    for (const auto& c : candidates)
        if (std::filesystem::exists(c)) return c;
    std::string msg = "cannot find " + what + "; tried:";
    for (const auto& c : candidates) msg += " " + c;
    throw IoError(msg);
}

} // namespace rundetail

/// Load the dataset named by the config and build its task sequence.
inline LoadedData load_for_config(const ResolvedConfig& cfg) {
    LoadedData out;
    if (cfg.dataset == "toy") {
        ClusterData cd = gen_clusters(cfg.toy);
        out.ds = std::move(cd.dataset);
        out.tasks = std::move(cd.tasks);
        return out;
    }
    const std::string& root = cfg.data_root;
    if (cfg.dataset == "mnist") {
        using rundetail::find_existing;
        const auto img_train = find_existing({root + "/train-images-idx3-ubyte",
                                              root + "/train-images-idx3-ubyte.gz"},
                                             "MNIST train images");
        const auto lbl_train = find_existing({root + "/train-labels-idx1-ubyte",
                                              root + "/train-labels-idx1-ubyte.gz"},
                                             "MNIST train labels");
        const auto img_test = find_existing({root + "/t10k-images-idx3-ubyte",
                                             root + "/t10k-images-idx3-ubyte.gz"},
                                            "MNIST test images");
        const auto lbl_test = find_existing({root + "/t10k-labels-idx1-ubyte",
                                             root + "/t10k-labels-idx1-ubyte.gz"},
                                            "MNIST test labels");
        out.ds = combine_train_test(load_mnist_idx(img_train, lbl_train),
                                    load_mnist_idx(img_test, lbl_test));
    } else if (cfg.dataset == "cifar10") {
        std::vector<std::string> train;
        for (int i = 1; i <= 5; ++i)
            train.push_back(rundetail::find_existing(
                {root + "/cifar-10-batches-bin/data_batch_" + std::to_string(i) + ".bin",
                 root + "/data_batch_" + std::to_string(i) + ".bin"},
                "CIFAR-10 batch " + std::to_string(i)));
        const auto test = rundetail::find_existing(
            {root + "/cifar-10-batches-bin/test_batch.bin", root + "/test_batch.bin"},
            "CIFAR-10 test batch");
        out.ds = combine_train_test(load_cifar(CifarVariant::Cifar10, train),
                                    load_cifar(CifarVariant::Cifar10, {test}));
    } else { // cifar100
        const auto train = rundetail::find_existing(
            {root + "/cifar-100-binary/train.bin", root + "/train.bin"}, "CIFAR-100 train");
        const auto test = rundetail::find_existing(
            {root + "/cifar-100-binary/test.bin", root + "/test.bin"}, "CIFAR-100 test");
        out.ds = combine_train_test(load_cifar(CifarVariant::Cifar100, {train}),
                                    load_cifar(CifarVariant::Cifar100, {test}));
    }
    out.tasks = split_incremental(out.ds, cfg.classes_per_task, cfg.subsample_per_class,
                                  cfg.train.seed, cfg.task_count);
    return out;
}

struct RunArtifacts {
    RunRecord record;
    RunOutcome outcome;
};

/// Execute one configured run on preloaded data and assemble its record.
/// Heatmap grids are produced for 2-D inputs (the toy problem), one per
/// task, under that task's banks.
inline RunArtifacts execute_run(const ResolvedConfig& cfg, const LoadedData& data) {
    RunArtifacts art;
    art.outcome = run_sequence(data.ds, data.tasks, cfg.method, cfg.net, cfg.train);

    RunRecord& rec = art.record;
    rec.run_id = cfg.digest;
    rec.method = method_name(cfg.method);
    rec.seed = cfg.train.seed;
    rec.dataset = cfg.dataset;
    rec.config_digest = cfg.digest;
    rec.config_text = cfg.canonical_text;
    rec.overrides = cfg.overrides;
    rec.matrix = art.outcome.matrix;
    rec.epochs = art.outcome.epochs;
    rec.task_count = data.tasks.size();
    rec.params_base = base_param_count(art.outcome.nets.front());
    rec.params_memory_per_task = memory_params_per_task(cfg.net);
    rec.anchor_count = art.outcome.nets.front().anchors.size();

    if (cfg.net.input_size() == 2) {
        for (std::size_t t = 0; t < data.tasks.size(); ++t) {
            Network& net =
                art.outcome.nets[cfg.method == Method::Stl ? t : 0];
            std::optional<TaskId> task;
            if (method_uses_memory(cfg.method)) task = data.tasks[t].id;
            rec.heatmaps[data.tasks[t].id] =
                heatmap_grid(net, task, cfg.bounds, cfg.heatmap_resolution);
        }
    }
    return art;
}

inline RunArtifacts execute_run(const ResolvedConfig& cfg) {
    return execute_run(cfg, load_for_config(cfg));
}

/// Write the run's CSV/JSON files (and optional checkpoints); returns paths.
inline std::vector<std::string> write_run_outputs(const ResolvedConfig& cfg,
                                                  const RunArtifacts& art) {
    std::vector<std::string> paths = write_csv(art.record, cfg.out_dir);
    if (cfg.save_checkpoint) {
        for (std::size_t i = 0; i < art.outcome.nets.size(); ++i) {
            const std::string name = art.outcome.nets.size() == 1
                                         ? std::string("checkpoint.bpn")
                                         : "checkpoint_task" + std::to_string(i) + ".bpn";
            const auto p = std::filesystem::path(cfg.out_dir) / name;
            ckpt::save_file(art.outcome.nets[i], p.string());
            paths.push_back(p.string());
        }
    }
    return paths;
}

} // namespace bpn
