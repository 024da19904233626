#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "bpn/matrix.hpp"

namespace bpn {

/// Row-wise softmax, computed against the row maximum so arbitrarily large
/// logits stay finite.
inline Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* z = logits.row(i);
        double* p = out.row(i);
        double zmax = z[0];
        for (std::size_t j = 1; j < logits.cols(); ++j) zmax = std::max(zmax, z[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            p[j] = std::exp(z[j] - zmax);
            sum += p[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < logits.cols(); ++j) p[j] *= inv;
    }
    return out;
}

struct LossResult {
    double loss = 0.0; ///< mean over the batch
    Matrix grad;       ///< d loss / d logits, already divided by batch size
};

/// Mean softmax cross-entropy over the batch against one-hot targets.
/// grad = (softmax - target) / batch, so every grad row sums to zero.
inline LossResult softmax_cross_entropy(const Matrix& logits, const Matrix& targets) {
    check_same_shape(logits, targets, "softmax_cross_entropy");
    LossResult res;
    res.grad = softmax_rows(logits);
    const double invb = 1.0 / static_cast<double>(logits.rows());
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* z = logits.row(i);
        const double* t = targets.row(i);
        double* g = res.grad.row(i);
        // log-sum-exp of the row, reused for -log p of the true class
        double zmax = z[0];
        for (std::size_t j = 1; j < logits.cols(); ++j) zmax = std::max(zmax, z[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) sum += std::exp(z[j] - zmax);
        const double lse = zmax + std::log(sum);
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            loss += t[j] * (lse - z[j]);
            g[j] = (g[j] - t[j]) * invb;
        }
    }
    res.loss = loss * invb;
    return res;
}

/// One-hot rows for a batch of class labels.
inline Matrix one_hot(const std::vector<std::int32_t>& labels, std::size_t n_classes) {
    Matrix out(labels.size(), n_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes)
            throw InputError("one_hot: label " + std::to_string(labels[i]) +
                             " outside [0, " + std::to_string(n_classes) + ")");
        out(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return out;
}

/// Argmax of one row; ties break toward the lowest class index.
inline std::size_t argmax_row(const Matrix& m, std::size_t r) {
    const double* z = m.row(r);
    std::size_t best = 0;
    for (std::size_t j = 1; j < m.cols(); ++j)
        if (z[j] > z[best]) best = j;
    return best;
}

} // namespace bpn
