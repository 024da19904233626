#include <catch2/catch_amalgamated.hpp>

#include "bpn/layer.hpp"
#include "bpn/loss.hpp"
#include "bpn/network.hpp"

using namespace bpn;

TEST_CASE("identity weights with nonnegative input pass through") {
    LayerParams layer(3, 3);
    for (std::size_t i = 0; i < 3; ++i) layer.W(i, i) = 1.0;
    Matrix x(2, 3, {0.0, 1.5, 2.0, 3.0, 0.25, 0.0});
    DenseForward f = dense_forward(layer, x, /*relu_on=*/true);
    REQUIRE(f.activated == x);
}

TEST_CASE("zero weights broadcast the bias") {
    LayerParams layer(2, 4);
    layer.bias = Matrix(1, 2, {0.5, -1.0});
    Matrix x(3, 4);
    x.fill(9.0);
    DenseForward f = dense_forward(layer, x, /*relu_on=*/true);
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(f.activated(i, 0) == 0.5);
        REQUIRE(f.activated(i, 1) == 0.0); // ReLU clips the negative bias
        REQUIRE(f.pre(i, 1) == -1.0);
    }
}

TEST_CASE("dense forward matches per-example loop oracle") {
    Rng rng(23);
    LayerParams layer = init_layer(6, 4, rng);
    layer.bias.fill_gaussian(rng, 0.3);
    Matrix x(5, 4);
    x.fill_gaussian(rng, 1.0);
    DenseForward f = dense_forward(layer, x, /*relu_on=*/false);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t o = 0; o < 6; ++o) {
            double s = layer.bias(0, o);
            for (std::size_t k = 0; k < 4; ++k) s += layer.W(o, k) * x(i, k);
            REQUIRE(std::fabs(f.activated(i, o) - s) < 1e-12);
        }
}

TEST_CASE("dense forward shape error") {
    LayerParams layer(3, 4);
    Matrix x(2, 5);
    REQUIRE_THROWS_AS(dense_forward(layer, x, true), ShapeError);
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    Rng rng(29);
    LayerParams layer = init_layer(3, 4, rng);
    Matrix x(2, 4);
    x.fill_gaussian(rng, 1.0);
    Matrix grad(2, 3);
    DenseGrads g = dense_backward(layer, grad, x);
    REQUIRE(max_abs(g.dW) == 0.0);
    REQUIRE(max_abs(g.dbias) == 0.0);
    REQUIRE(max_abs(g.dX) == 0.0);
}

TEST_CASE("scalar layer backward by hand") {
    LayerParams layer(1, 1);
    layer.W(0, 0) = 2.0;
    Matrix x(1, 1, {3.0});
    Matrix grad(1, 1, {0.5});
    DenseGrads g = dense_backward(layer, grad, x);
    REQUIRE(g.dW(0, 0) == 0.5 * 3.0);
    REQUIRE(g.dX(0, 0) == 0.5 * 2.0);
    REQUIRE(g.dbias(0, 0) == 0.5);
}

TEST_CASE("dense backward matches finite differences") {
    Rng rng(31);
    LayerParams layer = init_layer(4, 5, rng);
    layer.bias.fill_gaussian(rng, 0.2);
    Matrix x(3, 5);
    x.fill_gaussian(rng, 1.0);
    std::vector<std::int32_t> labels = {1, 3, 0};
    const Matrix targets = one_hot(labels, 4);

    const auto loss_of = [&]() {
        DenseForward f = dense_forward(layer, x, /*relu_on=*/false);
        return softmax_cross_entropy(f.activated, targets).loss;
    };

    DenseForward f = dense_forward(layer, x, false);
    LossResult lr = softmax_cross_entropy(f.activated, targets);
    DenseGrads g = dense_backward(layer, lr.grad, x);

    const auto check = [&](Matrix& p, const Matrix& analytic) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double orig = p.data()[i];
            const double h = 1e-5 * std::max(1.0, std::fabs(orig));
            p.data()[i] = orig + h;
            const double lp = loss_of();
            p.data()[i] = orig - h;
            const double lm = loss_of();
            p.data()[i] = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double denom = std::max({1.0, std::fabs(fd), std::fabs(analytic.data()[i])});
            REQUIRE(std::fabs(analytic.data()[i] - fd) / denom < 1e-5);
        }
    };
    check(layer.W, g.dW);
    check(layer.bias, g.dbias);
    check(x, g.dX);
}

TEST_CASE("backward without a matching cached forward is a state error") {
    LayerParams layer(3, 4);
    Matrix grad(2, 3);
    Matrix wrong_batch(5, 4);
    REQUIRE_THROWS_AS(dense_backward(layer, grad, wrong_batch), StateError);
    Matrix wrong_width(2, 9);
    REQUIRE_THROWS_AS(dense_backward(layer, grad, wrong_width), StateError);
}

TEST_CASE("sgd step basics") {
    Matrix p(1, 1, {1.0});
    Matrix g(1, 1, {1.0}); // gradient of 0.5 p^2 at p=1
    sgd_step(p, g, 0.0);
    REQUIRE(p(0, 0) == 1.0);
    sgd_step(p, g, 0.1);
    REQUIRE(p(0, 0) == 0.9);

    Matrix bad(2, 1);
    REQUIRE_THROWS_AS(sgd_step(p, bad, 0.1), ShapeError);
}

TEST_CASE("sgd on a convex quadratic converges monotonically") {
    // p_{t+1} = p_t - lr * p_t has the closed form p_t = (1 - lr)^t p_0
    Matrix p(1, 1, {1.0});
    double expected = 1.0;
    double prev = 1.0;
    for (int t = 0; t < 50; ++t) {
        Matrix g(1, 1, {p(0, 0)});
        sgd_step(p, g, 0.1);
        expected *= 0.9;
        REQUIRE(p(0, 0) == Catch::Approx(expected).margin(1e-15));
        REQUIRE(std::fabs(p(0, 0)) < prev);
        prev = std::fabs(p(0, 0));
    }
}

TEST_CASE("relu mask zeroes gradient where pre-activation was clipped") {
    Matrix pre(1, 4, {-1.0, 0.0, 2.0, -0.5});
    Matrix grad(1, 4, {1.0, 1.0, 1.0, 1.0});
    apply_relu_mask(grad, pre);
    REQUIRE(grad == Matrix(1, 4, {0.0, 0.0, 1.0, 0.0}));
}
