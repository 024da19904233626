#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "bpn/anchor.hpp"

namespace bpn {

/// Fully-connected architecture description. layer_sizes lists widths from
/// input to output, so layer l maps layer_sizes[l] -> layer_sizes[l+1].
/// Hidden layers are ReLU, the output layer feeds the softmax loss directly.
struct NetworkConfig {
    std::vector<std::size_t> layer_sizes;
    std::set<std::size_t> memory_layers; ///< layer indices carrying memory units
    std::size_t memory_k = 0;
    std::size_t memory_h = 0;

    std::size_t layer_count() const { return layer_sizes.empty() ? 0 : layer_sizes.size() - 1; }
    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }

    void validate() const {
        if (layer_sizes.size() < 2)
            throw ConfigError("NetworkConfig: need at least 2 layer sizes");
        for (std::size_t s : layer_sizes)
            if (s == 0) throw ConfigError("NetworkConfig: zero layer width");
        for (std::size_t l : memory_layers)
            if (l >= layer_count())
                throw ConfigError("NetworkConfig: memory layer index " + std::to_string(l) +
                                  " out of range (layers: " + std::to_string(layer_count()) +
                                  ")");
        if (!memory_layers.empty() && (memory_k == 0 || memory_h == 0))
            throw ConfigError("NetworkConfig: memory layers need memory_k/memory_h >= 1");
    }
};

/// The model: shared dense layers plus per-layer, per-task memory banks.
/// At most one task's banks are active at a time; training and evaluation
/// select the task explicitly (the task oracle).
struct Network {
    NetworkConfig config;
    std::vector<LayerParams> layers;
    std::vector<std::map<TaskId, MemoryBank>> memory; ///< one map per layer
    std::vector<FisherAnchor> anchors;
    std::optional<TaskId> active_task;
    std::uint64_t seed = 0; ///< base seed; bank creation derives from it

    bool has_memory_layers() const { return !config.memory_layers.empty(); }
};

inline Network make_network(const NetworkConfig& config, std::uint64_t seed) {
    config.validate();
    Network net;
    net.config = config;
    net.seed = seed;
    net.memory.resize(config.layer_count());
    for (std::size_t l = 0; l < config.layer_count(); ++l) {
        Rng rng = split_rng(seed, 0x6c61796572ULL /*"layer"*/, l);
        net.layers.push_back(init_layer(config.layer_sizes[l + 1], config.layer_sizes[l], rng));
    }
    return net;
}

/// Activate exactly `task`'s banks in every memory layer and deactivate all
/// others. With create_missing (the training path) unseen tasks get fresh
/// banks; without it (the evaluation path) an unknown task is an oracle
/// violation. Idempotent.
inline void set_active_task(Network& net, TaskId task, bool create_missing = true) {
    for (std::size_t l : net.config.memory_layers) {
        auto& banks = net.memory[l];
        if (banks.find(task) == banks.end()) {
            if (!create_missing)
                throw OracleError("set_active_task: no banks for task " + std::to_string(task));
            Rng rng = split_rng(net.seed, 0x62616e6bULL /*"bank"*/, l,
                                static_cast<std::uint64_t>(static_cast<std::uint32_t>(task)));
            banks.emplace(task, init_bank(task, net.config.memory_k, net.config.memory_h,
                                          net.config.layer_sizes[l + 1], rng));
        }
        for (auto& [id, bank] : banks) bank.active = (id == task);
    }
    net.active_task = task;
}

inline void deactivate_all_tasks(Network& net) {
    for (auto& banks : net.memory)
        for (auto& [id, bank] : banks) bank.active = false;
    net.active_task.reset();
}

/// Per-layer caches from one forward pass, consumed by the backward pass.
struct ForwardTrace {
    std::vector<Matrix> inputs; ///< what each layer saw
    std::vector<Matrix> pre;    ///< pre-activations (ReLU masks come from these)
    const Matrix& logits() const { return pre.back(); }
};

namespace detail {
inline const MemoryBank* active_bank(const Network& net, std::size_t layer) {
    const auto& banks = net.memory[layer];
    if (!net.active_task) return nullptr;
    auto it = banks.find(*net.active_task);
    if (it == banks.end() || !it->second.active) return nullptr;
    return &it->second;
}

/// Ensure `task` names the banks used by this pass.
inline void select_task(Network& net, const std::optional<TaskId>& task) {
    if (!net.has_memory_layers()) return;
    if (!task)
        throw OracleError("network_forward: network has memory layers but no task was given");
    if (net.active_task != task) set_active_task(net, *task, /*create_missing=*/false);
}
} // namespace detail

/// Full forward pass under the named task's banks, keeping caches for the
/// backward pass. Logits cover the whole shared head.
inline ForwardTrace forward_trace(Network& net, const Matrix& x,
                                  std::optional<TaskId> task = std::nullopt) {
    detail::select_task(net, task);
    const std::size_t L = net.config.layer_count();
    ForwardTrace t;
    t.inputs.reserve(L);
    t.pre.reserve(L);
    Matrix cur = x;
    for (std::size_t l = 0; l < L; ++l) {
        const bool relu_on = (l + 1 < L);
        const MemoryBank* bank =
            net.config.memory_layers.count(l) ? detail::active_bank(net, l) : nullptr;
        if (net.config.memory_layers.count(l) && !bank)
            throw OracleError("forward: memory layer " + std::to_string(l) +
                              " has no active bank");
        DenseForward f = bank ? memory_forward(net.layers[l], *bank, cur, relu_on)
                              : dense_forward(net.layers[l], cur, relu_on);
        t.inputs.push_back(std::move(cur));
        cur = std::move(f.activated);
        t.pre.push_back(std::move(f.pre));
    }
    // the output layer is linear, so its pre-activation is the logits
    return t;
}

/// Logits only (still runs the cached pass; convenience wrapper).
inline Matrix network_forward(Network& net, const Matrix& x,
                              std::optional<TaskId> task = std::nullopt) {
    return forward_trace(net, x, task).logits();
}

struct NetworkGrads {
    std::vector<DenseGrads> layers;            ///< dW/dbias per layer
    std::map<std::size_t, MemoryGrads> memory; ///< per memory layer (dW_task, dM)
    Matrix dX;                                 ///< d loss / d input (when requested)
};

/// Hand-rolled backpropagation from d loss / d logits. ReLU masks are taken
/// from the cached pre-activations; memory layers additionally produce
/// dW_task and dM for the task that was active during the forward pass.
inline NetworkGrads network_backward(Network& net, const ForwardTrace& trace,
                                     const Matrix& dlogits, MemoryMode mode,
                                     double epsilon, bool want_input_grad = false,
                                     bool want_memory_grads = true) {
    const std::size_t L = net.config.layer_count();
    if (trace.pre.size() != L)
        throw StateError("network_backward: trace has " + std::to_string(trace.pre.size()) +
                         " layers, network has " + std::to_string(L));
    NetworkGrads grads;
    grads.layers.resize(L);
    Matrix g = dlogits;
    for (std::size_t l = L; l-- > 0;) {
        if (l + 1 < L) apply_relu_mask(g, trace.pre[l]);
        const bool need_dx = (l > 0) || want_input_grad;
        const MemoryBank* bank =
            net.config.memory_layers.count(l) ? detail::active_bank(net, l) : nullptr;
        if (bank && want_memory_grads) {
            MemoryGrads mg =
                memory_backward(net.layers[l], *bank, g, trace.inputs[l], epsilon, mode, need_dx);
            grads.layers[l] = std::move(mg.dense);
            mg.dense = DenseGrads{};
            grads.memory.emplace(l, std::move(mg));
        } else {
            grads.layers[l] = dense_backward(net.layers[l], g, trace.inputs[l], need_dx);
        }
        if (need_dx)
            g = std::move(grads.layers[l].dX);
        else
            break;
    }
    if (want_input_grad) grads.dX = std::move(g);
    return grads;
}

/// p <- p - lr * g
inline void sgd_step(Matrix& param, const Matrix& grad, double lr) {
    check_same_shape(param, grad, "sgd_step");
    for (std::size_t i = 0; i < param.size(); ++i) param.data()[i] -= lr * grad.data()[i];
}

/// Apply one SGD update: normal weights and memory weights move by lr, the
/// memory units by lr_mem (their gradient already carries the epsilon scale
/// in beneficial mode).
inline void apply_gradients(Network& net, const NetworkGrads& grads, double lr,
                            double lr_mem) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        sgd_step(net.layers[l].W, grads.layers[l].dW, lr);
        sgd_step(net.layers[l].bias, grads.layers[l].dbias, lr);
    }
    for (const auto& [l, mg] : grads.memory) {
        MemoryBank& bank = net.memory[l].at(*net.active_task);
        sgd_step(bank.W_task, mg.dW_task, lr);
        sgd_step(bank.M, mg.dM, lr_mem);
    }
}

/// Shared (normal) parameter count: weights + biases of every layer.
inline std::size_t base_param_count(const Network& net) {
    std::size_t n = 0;
    for (const auto& l : net.layers) n += l.param_count();
    return n;
}

/// Parameters one task adds: K*H memory units plus out x (K*H) weights per
/// memory layer.
inline std::size_t memory_params_per_task(const NetworkConfig& config) {
    std::size_t n = 0;
    for (std::size_t l : config.memory_layers)
        n += config.memory_k * config.memory_h * (1 + config.layer_sizes[l + 1]);
    return n;
}

/// Bit-level fingerprint over every parameter tensor (layers, banks,
/// anchors). Activation flags and the active-task marker are excluded -
/// they are protocol state, not parameters.
inline std::uint64_t network_checksum(const Network& net) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& l : net.layers) {
        h = checksum(l.W, h);
        h = checksum(l.bias, h);
    }
    for (const auto& banks : net.memory)
        for (const auto& [id, bank] : banks) {
            h = fnv1a_bytes(&id, sizeof(id), h);
            h = checksum(bank.M, h);
            h = checksum(bank.W_task, h);
        }
    for (const auto& a : net.anchors) {
        h = fnv1a_bytes(&a.task, sizeof(a.task), h);
        for (const auto& m : a.fisher_W) h = checksum(m, h);
        for (const auto& m : a.fisher_bias) h = checksum(m, h);
        for (const auto& m : a.anchor_W) h = checksum(m, h);
        for (const auto& m : a.anchor_bias) h = checksum(m, h);
    }
    return h;
}

} // namespace bpn
