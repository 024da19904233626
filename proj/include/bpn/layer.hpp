#pragma once

#include <string>

#include "bpn/matrix.hpp"

namespace bpn {

/// Parameters of one dense layer: W maps in -> out, bias is one row.
struct LayerParams {
    Matrix W;    ///< out x in
    Matrix bias; ///< 1 x out

    LayerParams() = default;
    LayerParams(std::size_t out, std::size_t in) : W(out, in), bias(1, out) {}

    std::size_t in_size() const { return W.cols(); }
    std::size_t out_size() const { return W.rows(); }
    std::size_t param_count() const { return W.size() + bias.size(); }
};

/// He-style init: zero-mean Gaussian with std sqrt(2 / fan_in), bias 0.
inline LayerParams init_layer(std::size_t out, std::size_t in, Rng& rng) {
    LayerParams p(out, in);
    p.W.fill_gaussian(rng, std::sqrt(2.0 / static_cast<double>(in)));
    return p;
}

struct DenseForward {
    Matrix activated; ///< layer output fed to the next layer
    Matrix pre;       ///< pre-activation cache, needed for the ReLU mask
};

inline Matrix relu(const Matrix& pre) {
    Matrix out = pre;
    for (double& x : out.values())
        if (x < 0.0) x = 0.0;
    return out;
}

/// Zero the incoming gradient wherever the cached pre-activation was <= 0.
inline void apply_relu_mask(Matrix& grad, const Matrix& pre) {
    check_same_shape(grad, pre, "relu_mask");
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (pre.data()[i] <= 0.0) grad.data()[i] = 0.0;
}

/// Affine map Y = X W^T + bias, plus ReLU on hidden layers.
inline DenseForward dense_forward(const LayerParams& layer, const Matrix& x, bool relu_on) {
    if (x.cols() != layer.in_size())
        throw ShapeError("dense_forward: input " + x.shape_str() + " vs W " +
                         layer.W.shape_str());
    DenseForward out;
    out.pre = matmul(x, transpose(layer.W));
    add_row_inplace(out.pre, layer.bias);
    out.activated = relu_on ? relu(out.pre) : out.pre;
    return out;
}

struct DenseGrads {
    Matrix dW;    ///< shape of W
    Matrix dX;    ///< shape of the cached input (empty when not requested)
    Matrix dbias; ///< 1 x out
};

/// Backward through the affine map. `grad` is d loss / d pre-activation
/// (the caller applies the ReLU mask for hidden layers before calling).
/// dW = Grad^T X, dX = Grad W, dbias = column sums of Grad.
inline DenseGrads dense_backward(const LayerParams& layer, const Matrix& grad,
                                 const Matrix& x_cached, bool need_dx = true) {
    if (grad.cols() != layer.out_size() || x_cached.cols() != layer.in_size() ||
        grad.rows() != x_cached.rows())
        throw StateError("dense_backward: grad " + grad.shape_str() + " / cached input " +
                         x_cached.shape_str() + " do not match layer W " +
                         layer.W.shape_str());
    DenseGrads g;
    g.dW = matmul(transpose(grad), x_cached);
    g.dbias = column_sums(grad);
    if (need_dx) g.dX = matmul(grad, layer.W);
    return g;
}

} // namespace bpn
