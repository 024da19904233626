// Command-line front end: `run` executes one configured experiment, `compare`
// runs several configs that differ only in method, `gradcheck` verifies every
// backward formula against finite differences.

#include <cstdio>
#include <filesystem>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bpn/bpn.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

bpn::RunConfig build_config(const std::string& config_arg,
                            const std::vector<std::string>& sets, long long seed,
                            const std::string& out_dir) {
    bpn::RunConfig cfg;
    if (std::filesystem::exists(config_arg)) {
        cfg.apply_file(config_arg);
    } else if (!bpn::lookup_preset(config_arg, cfg)) {
        throw bpn::ConfigError("--config: '" + config_arg +
                               "' is neither a file nor a known preset");
    }
    for (const auto& s : sets) cfg.apply_override(s);
    if (seed >= 0) cfg.apply_override("run.seed=" + std::to_string(seed));
    if (!out_dir.empty()) cfg.apply_override("run.out_dir=" + out_dir);
    return cfg;
}

void print_summary(const bpn::ResolvedConfig& cfg, const bpn::RunArtifacts& art) {
    const bpn::Summary s = bpn::summarize(art.record.matrix);
    std::printf("method=%s dataset=%s seed=%llu tasks=%zu avg_final=%.4f avg_forgetting=%.4f "
                "params_base=%zu params_memory_per_task=%zu anchors=%zu out=%s\n",
                art.record.method.c_str(), art.record.dataset.c_str(),
                static_cast<unsigned long long>(art.record.seed), art.record.task_count,
                s.avg_final, s.avg_forgetting, art.record.params_base,
                art.record.params_memory_per_task, art.record.anchor_count,
                cfg.out_dir.c_str());
}

int cmd_run(const std::string& config_arg, const std::vector<std::string>& sets,
            long long seed, const std::string& out_dir) {
    bpn::ResolvedConfig cfg = bpn::finalize(build_config(config_arg, sets, seed, out_dir));
    bpn::RunArtifacts art = bpn::execute_run(cfg);
    bpn::write_run_outputs(cfg, art);
    print_summary(cfg, art);
    return kExitOk;
}

int cmd_gradcheck(long long seed, std::size_t instances, bool corrupt) {
    const bpn::GradCheckReport rep =
        bpn::run_gradient_checks(seed < 0 ? 1 : static_cast<std::uint64_t>(seed), instances,
                                 corrupt);
    std::printf("checked %zu random instances (tolerance %.0e, ewc %.0e)\n", rep.instances,
                bpn::GradCheckReport::kTolBackprop, bpn::GradCheckReport::kTolEwc);
    std::printf("  dW       max rel err %.3e\n", rep.max_rel_dW);
    std::printf("  dbias    max rel err %.3e\n", rep.max_rel_dbias);
    std::printf("  dX       max rel err %.3e\n", rep.max_rel_dX);
    std::printf("  dW_task  max rel err %.3e\n", rep.max_rel_dW_task);
    std::printf("  dM       max rel err %.3e\n", rep.max_rel_dM);
    std::printf("  ewc      max rel err %.3e\n", rep.max_rel_ewc);
    std::printf("  beneficial sign mismatches: %zu\n", rep.beneficial_mismatches);
    if (!rep.ok()) {
        std::printf("FAIL: %s exceeds tolerance\n", rep.first_offender().c_str());
        return kExitRuntime;
    }
    std::printf("OK\n");
    return kExitOk;
}

int cmd_compare(const std::vector<std::string>& config_args,
                const std::vector<std::string>& sets, long long seed,
                const std::string& out_dir, bool parallel) {
    if (config_args.size() < 2)
        throw bpn::ConfigError("compare: need at least 2 configs");

    std::vector<bpn::ResolvedConfig> cfgs;
    for (const auto& arg : config_args) {
        // resolve once to learn the method, then rebuild with the per-method
        // output directory so the recorded config matches what actually ran
        const bpn::ResolvedConfig probe = bpn::finalize(build_config(arg, sets, seed, ""));
        const auto run_dir =
            (std::filesystem::path(out_dir) / bpn::method_name(probe.method)).string();
        cfgs.push_back(bpn::finalize(build_config(arg, sets, seed, run_dir)));
    }
    for (std::size_t i = 1; i < cfgs.size(); ++i) {
        if (cfgs[i].comparable_text != cfgs[0].comparable_text)
            throw bpn::ConfigError("compare: '" + config_args[i] + "' and '" + config_args[0] +
                                   "' differ beyond run.method");
        for (std::size_t j = 0; j < i; ++j)
            if (cfgs[i].method == cfgs[j].method)
                throw bpn::ConfigError("compare: duplicate method '" +
                                       std::string(bpn::method_name(cfgs[i].method)) + "'");
    }

    std::vector<bpn::RunArtifacts> arts(cfgs.size());
    if (parallel) {
        std::vector<std::future<bpn::RunArtifacts>> futs;
        for (const auto& cfg : cfgs)
            futs.push_back(std::async(std::launch::async,
                                      [&cfg]() { return bpn::execute_run(cfg); }));
        for (std::size_t i = 0; i < futs.size(); ++i) arts[i] = futs[i].get();
    } else {
        for (std::size_t i = 0; i < cfgs.size(); ++i) arts[i] = bpn::execute_run(cfgs[i]);
    }

    std::filesystem::create_directories(out_dir);
    const auto table_path = std::filesystem::path(out_dir) / "compare.csv";
    std::ofstream table(table_path, std::ios::binary);
    if (!table) throw bpn::IoError("cannot open for write: " + table_path.string());
    table << "method,avg_final,avg_forgetting,params_per_task\n";
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        bpn::write_run_outputs(cfgs[i], arts[i]);
        print_summary(cfgs[i], arts[i]);
        const bpn::Summary s = bpn::summarize(arts[i].record.matrix);
        table << arts[i].record.method << ',' << bpn::fmt17(s.avg_final) << ','
              << bpn::fmt17(s.avg_forgetting) << ',' << arts[i].record.params_memory_per_task
              << '\n';
    }
    std::printf("table=%s\n", table_path.string().c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"beneficial-perturbation continual-learning lab"};
    app.require_subcommand(1);

    std::string config_arg, out_dir;
    std::vector<std::string> sets, compare_configs;
    long long seed = -1;
    std::size_t instances = 20;
    bool corrupt = false, parallel = false;

    auto* run = app.add_subcommand("run", "execute one configured run");
    run->add_option("--config", config_arg, "config file path or preset name")->required();
    run->add_option("--set", sets, "override: key=value (repeatable)");
    run->add_option("--seed", seed, "override run.seed");
    run->add_option("--out", out_dir, "override run.out_dir");

    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
    grad->add_option("--seed", seed, "random seed");
    grad->add_option("--instances", instances, "number of random instances");
    grad->add_flag("--corrupt", corrupt,
                   "deliberately corrupt one gradient (negative control)");

    auto* cmp = app.add_subcommand("compare", "run configs differing only in method");
    cmp->add_option("configs", compare_configs, "config files or presets")->required();
    cmp->add_option("--set", sets, "override applied to every config (repeatable)");
    cmp->add_option("--seed", seed, "override run.seed for every config");
    cmp->add_option("--out", out_dir, "output directory")->required();
    cmp->add_flag("--parallel", parallel, "run configs as parallel jobs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (run->parsed()) return cmd_run(config_arg, sets, seed, out_dir);
        if (grad->parsed()) return cmd_gradcheck(seed, instances, corrupt);
        if (cmp->parsed()) return cmd_compare(compare_configs, sets, seed, out_dir, parallel);
    } catch (const bpn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
