#pragma once

#include <cstdint>

#include "bpn/layer.hpp"

namespace bpn {

using TaskId = std::int32_t;

/// How memory units are updated during training.
enum class MemoryMode {
    Beneficial, ///< sign of the gradient, scaled by epsilon
    Gradient,   ///< exact gradient (ablation baseline)
};

/// Task-private memory units and their projection weights for one layer.
/// The K x H units are flattened to a K*H vector and projected by W_task
/// into the layer's output space, so the memory term is a pure task bias,
/// independent of the input.
struct MemoryBank {
    TaskId task = 0;
    Matrix M;      ///< K x H memory units
    Matrix W_task; ///< out x (K*H) memory weights
    bool active = false;

    std::size_t k() const { return M.rows(); }
    std::size_t h() const { return M.cols(); }
    std::size_t param_count() const { return M.size() + W_task.size(); }

    /// Bias vector this bank contributes to the layer output (1 x out).
    Matrix bias_vector() const {
        return transpose(matmul(W_task, transpose(M.reshaped(1, M.size()))));
    }
};

/// New bank: memory units start at zero (a fresh task contributes nothing),
/// memory weights get the usual Gaussian init with fan-in K*H.
inline MemoryBank init_bank(TaskId task, std::size_t k, std::size_t h, std::size_t out,
                            Rng& rng) {
    MemoryBank b;
    b.task = task;
    b.M = Matrix(k, h);
    b.W_task = Matrix(out, k * h);
    b.W_task.fill_gaussian(rng, std::sqrt(2.0 / static_cast<double>(k * h)));
    return b;
}

/// Forward through a layer carrying an active memory bank:
/// Y = X W^T + bias + W_task vec(M), the last term broadcast over the batch.
inline DenseForward memory_forward(const LayerParams& layer, const MemoryBank& bank,
                                   const Matrix& x, bool relu_on) {
    if (!bank.active)
        throw OracleError("memory_forward: bank for task " + std::to_string(bank.task) +
                          " is not active");
    if (bank.W_task.rows() != layer.out_size())
        throw ShapeError("memory_forward: W_task " + bank.W_task.shape_str() +
                         " vs layer W " + layer.W.shape_str());
    DenseForward out;
    out.pre = matmul(x, transpose(layer.W));
    add_row_inplace(out.pre, layer.bias);
    add_row_inplace(out.pre, bank.bias_vector());
    out.activated = relu_on ? relu(out.pre) : out.pre;
    return out;
}

struct MemoryGrads {
    Matrix dW_task; ///< shape of W_task (exact gradient)
    Matrix dM;      ///< shape of M; sign step or exact gradient per mode
    DenseGrads dense;
};

/// Backward through a memory layer. The normal-path gradients are exactly
/// those of dense_backward; the memory term sees only the batch-summed
/// gradient g (it is broadcast in the forward pass):
///   dW_task = g^T vec(M)
///   dM      = epsilon * sign(W_task^T g)   (Beneficial)
///   dM      = W_task^T g                   (Gradient)
/// The optimizer subtracts lr * dM, so the Beneficial step walks the memory
/// units down the loss toward the task's own classes.
inline MemoryGrads memory_backward(const LayerParams& layer, const MemoryBank& bank,
                                   const Matrix& grad, const Matrix& x_cached,
                                   double epsilon, MemoryMode mode, bool need_dx = true) {
    if (!bank.active)
        throw StateError("memory_backward: bank for task " + std::to_string(bank.task) +
                         " is not active");
    if (mode == MemoryMode::Beneficial && epsilon <= 0.0)
        throw ConfigError("memory_backward: epsilon must be > 0 in beneficial mode");
    MemoryGrads g;
    g.dense = dense_backward(layer, grad, x_cached, need_dx);
    const Matrix gsum = column_sums(grad);                      // 1 x out
    const Matrix m_row = bank.M.reshaped(1, bank.M.size());     // 1 x K*H
    g.dW_task = matmul(transpose(gsum), m_row);                 // out x K*H
    Matrix dm_vec = matmul(gsum, bank.W_task);                  // 1 x K*H
    if (mode == MemoryMode::Beneficial) dm_vec = scaled(sign_of(dm_vec), epsilon);
    g.dM = dm_vec.reshaped(bank.k(), bank.h());
    return g;
}

/// Bit-level fingerprint of a bank's parameters (the active flag is state,
/// not a parameter, and is excluded).
inline std::uint64_t bank_checksum(const MemoryBank& bank) {
    std::uint64_t h = checksum(bank.M);
    return checksum(bank.W_task, h);
}

} // namespace bpn
