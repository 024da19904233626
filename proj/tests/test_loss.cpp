#include <catch2/catch_amalgamated.hpp>

#include "bpn/loss.hpp"

using namespace bpn;

TEST_CASE("uniform logits give ln C") {
    for (std::size_t c : {2, 3, 10}) {
        Matrix logits(4, c);
        logits.fill(0.37);
        std::vector<std::int32_t> labels = {0, 1, 0, static_cast<std::int32_t>(c - 1)};
        LossResult r = softmax_cross_entropy(logits, one_hot(labels, c));
        REQUIRE(r.loss == Catch::Approx(std::log(static_cast<double>(c))).epsilon(1e-12));
    }
}

TEST_CASE("dominant true-class logit drives loss to zero") {
    Matrix logits(1, 3);
    logits(0, 0) = 200.0;
    LossResult r = softmax_cross_entropy(logits, one_hot({0}, 3));
    REQUIRE(r.loss >= 0.0);
    REQUIRE(r.loss < 1e-12);
    // and it stays finite when the true class is the dominated one
    LossResult worst = softmax_cross_entropy(logits, one_hot({2}, 3));
    REQUIRE(std::isfinite(worst.loss));
    REQUIRE(worst.grad.all_finite());
}

TEST_CASE("gradient matches central finite differences") {
    Rng rng(13);
    Matrix logits(4, 3);
    logits.fill_gaussian(rng, 2.0);
    std::vector<std::int32_t> labels = {2, 0, 1, 1};
    Matrix targets = one_hot(labels, 3);
    LossResult r = softmax_cross_entropy(logits, targets);

    const double h = 1e-6;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double orig = logits.data()[i];
        logits.data()[i] = orig + h;
        const double lp = softmax_cross_entropy(logits, targets).loss;
        logits.data()[i] = orig - h;
        const double lm = softmax_cross_entropy(logits, targets).loss;
        logits.data()[i] = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double denom = std::max({1.0, std::fabs(fd), std::fabs(r.grad.data()[i])});
        REQUIRE(std::fabs(r.grad.data()[i] - fd) / denom < 1e-6);
    }
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(17);
    Matrix logits(6, 5);
    logits.fill_gaussian(rng, 30.0);
    Matrix p = softmax_rows(logits);
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) s += p(i, j);
        REQUIRE(std::fabs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("cross-entropy gradient rows sum to zero") {
    Rng rng(19);
    Matrix logits(5, 4);
    logits.fill_gaussian(rng, 3.0);
    std::vector<std::int32_t> labels = {0, 3, 2, 1, 1};
    LossResult r = softmax_cross_entropy(logits, one_hot(labels, 4));
    for (std::size_t i = 0; i < r.grad.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < r.grad.cols(); ++j) s += r.grad(i, j);
        REQUIRE(std::fabs(s) < 1e-12);
    }
}

TEST_CASE("loss shape mismatch") {
    Matrix logits(2, 3), targets(2, 4);
    REQUIRE_THROWS_AS(softmax_cross_entropy(logits, targets), ShapeError);
}

TEST_CASE("one_hot rejects out-of-range labels") {
    REQUIRE_THROWS_AS(one_hot({0, 3}, 3), InputError);
    REQUIRE_THROWS_AS(one_hot({-1}, 3), InputError);
    REQUIRE(one_hot({2}, 3)(0, 2) == 1.0);
}

TEST_CASE("argmax ties break toward the lowest class") {
    Matrix logits(1, 4, {1.0, 7.0, 7.0, 3.0});
    REQUIRE(argmax_row(logits, 0) == 1);
}
