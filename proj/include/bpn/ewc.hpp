#pragma once

#include <algorithm>
#include <vector>

#include "bpn/loss.hpp"
#include "bpn/network.hpp"

namespace bpn {

/// Diagonal empirical Fisher over up to n_samples examples: the mean squared
/// gradient of log p(true class | x) with respect to every normal parameter.
/// The caller activates the task's banks beforehand (the gradients flow
/// through whatever forward path the task uses); memory parameters are never
/// touched. Examples are consumed in row order.
inline FisherAnchor estimate_fisher(Network& net, const Matrix& features,
                                    const std::vector<std::int32_t>& labels,
                                    std::size_t n_samples) {
    if (features.rows() == 0 || labels.empty())
        throw InputError("estimate_fisher: empty sample set");
    if (features.rows() != labels.size())
        throw InputError("estimate_fisher: " + std::to_string(features.rows()) +
                         " feature rows vs " + std::to_string(labels.size()) + " labels");
    const std::size_t n = std::min<std::size_t>(features.rows(), n_samples);

    FisherAnchor a;
    a.task = net.active_task.value_or(0);
    for (const auto& l : net.layers) {
        a.fisher_W.emplace_back(l.W.rows(), l.W.cols());
        a.fisher_bias.emplace_back(1, l.out_size());
    }

    Matrix row(1, features.cols());
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(features.row(i), features.row(i) + features.cols(), row.row(0));
        ForwardTrace trace = forward_trace(net, row, net.active_task);
        // d(-log p_y)/d logits for a single example
        Matrix g = softmax_rows(trace.logits());
        g(0, static_cast<std::size_t>(labels[i])) -= 1.0;
        NetworkGrads grads = network_backward(net, trace, g, MemoryMode::Gradient, 1.0,
                                              /*want_input_grad=*/false,
                                              /*want_memory_grads=*/false);
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            const Matrix& dW = grads.layers[l].dW;
            const Matrix& db = grads.layers[l].dbias;
            for (std::size_t k = 0; k < dW.size(); ++k)
                a.fisher_W[l].data()[k] += dW.data()[k] * dW.data()[k];
            for (std::size_t k = 0; k < db.size(); ++k)
                a.fisher_bias[l].data()[k] += db.data()[k] * db.data()[k];
        }
        (void)n_classes;
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& m : a.fisher_W)
        for (double& x : m.values()) x *= inv;
    for (auto& m : a.fisher_bias)
        for (double& x : m.values()) x *= inv;

    for (const auto& l : net.layers) {
        a.anchor_W.push_back(l.W);
        a.anchor_bias.push_back(l.bias);
    }
    return a;
}

struct EwcPenalty {
    double loss = 0.0;
    std::vector<Matrix> dW;    ///< aligned with the layers' W
    std::vector<Matrix> dbias; ///< aligned with the layers' bias
};

/// Quadratic anchor penalty summed over every completed task:
///   loss += lambda * F_i * (W_i - W*_i)^2, grad += 2 * lambda * F_i * (W_i - W*_i).
inline EwcPenalty ewc_penalty(const Network& net, const std::vector<FisherAnchor>& anchors,
                              double lambda) {
    EwcPenalty p;
    for (const auto& l : net.layers) {
        p.dW.emplace_back(l.W.rows(), l.W.cols());
        p.dbias.emplace_back(1, l.out_size());
    }
    for (const auto& a : anchors) {
        if (a.anchor_W.size() != net.layers.size())
            throw ShapeError("ewc_penalty: anchor covers " + std::to_string(a.anchor_W.size()) +
                             " layers, network has " + std::to_string(net.layers.size()));
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            check_same_shape(net.layers[l].W, a.anchor_W[l], "ewc_penalty W");
            check_same_shape(net.layers[l].bias, a.anchor_bias[l], "ewc_penalty bias");
            const auto accumulate = [lambda](const Matrix& w, const Matrix& wstar,
                                             const Matrix& f, Matrix& grad, double& loss) {
                for (std::size_t k = 0; k < w.size(); ++k) {
                    const double d = w.data()[k] - wstar.data()[k];
                    loss += lambda * f.data()[k] * d * d;
                    grad.data()[k] += 2.0 * lambda * f.data()[k] * d;
                }
            };
            accumulate(net.layers[l].W, a.anchor_W[l], a.fisher_W[l], p.dW[l], p.loss);
            accumulate(net.layers[l].bias, a.anchor_bias[l], a.fisher_bias[l], p.dbias[l],
                       p.loss);
        }
    }
    return p;
}

/// Estimate the Fisher for a just-finished task and append the anchor.
/// Consolidating the same task twice is an ordering bug, not a request.
inline void consolidate(Network& net, TaskId task, const Matrix& features,
                        const std::vector<std::int32_t>& labels, std::size_t n_samples) {
    for (const auto& a : net.anchors)
        if (a.task == task)
            throw StateError("consolidate: task " + std::to_string(task) +
                             " already consolidated");
    FisherAnchor a = estimate_fisher(net, features, labels, n_samples);
    a.task = task;
    net.anchors.push_back(std::move(a));
}

} // namespace bpn
