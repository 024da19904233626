#include <catch2/catch_amalgamated.hpp>

#include "bpn/loss.hpp"
#include "bpn/memory.hpp"
#include "bpn/network.hpp"

using namespace bpn;

namespace {

struct Fixture {
    LayerParams layer;
    MemoryBank bank;
    Matrix x;

    Fixture(std::uint64_t seed, std::size_t batch = 3, std::size_t in = 4,
            std::size_t out = 5, std::size_t k = 2, std::size_t h = 3) {
        Rng rng(seed);
        layer = init_layer(out, in, rng);
        layer.bias.fill_gaussian(rng, 0.2);
        bank = init_bank(1, k, h, out, rng);
        bank.active = true;
        bank.M.fill_gaussian(rng, 0.7);
        x = Matrix(batch, in);
        x.fill_gaussian(rng, 1.0);
    }
};

} // namespace

TEST_CASE("zero memory units contribute nothing") {
    Fixture f(101);
    f.bank.M.fill(0.0);
    DenseForward with = memory_forward(f.layer, f.bank, f.x, false);
    DenseForward without = dense_forward(f.layer, f.x, false);
    REQUIRE(with.activated == without.activated);
}

TEST_CASE("zero memory weights contribute nothing") {
    Fixture f(103);
    f.bank.W_task.fill(0.0);
    DenseForward with = memory_forward(f.layer, f.bank, f.x, false);
    DenseForward without = dense_forward(f.layer, f.x, false);
    REQUIRE(with.activated == without.activated);
}

TEST_CASE("memory term is one shared bias across the batch") {
    Fixture f(107);
    // identical rows
    for (std::size_t i = 1; i < f.x.rows(); ++i)
        for (std::size_t j = 0; j < f.x.cols(); ++j) f.x(i, j) = f.x(0, j);
    DenseForward with = memory_forward(f.layer, f.bank, f.x, false);
    DenseForward without = dense_forward(f.layer, f.x, false);

    // recompute the bias term directly: W_task * vec(M)
    Matrix expected(1, f.layer.out_size());
    for (std::size_t o = 0; o < f.layer.out_size(); ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < f.bank.M.size(); ++i)
            s += f.bank.W_task(o, i) * f.bank.M.data()[i];
        expected(0, o) = s;
    }
    for (std::size_t i = 0; i < f.x.rows(); ++i)
        for (std::size_t o = 0; o < f.layer.out_size(); ++o) {
            REQUIRE(with.activated(i, o) == with.activated(0, o));
            REQUIRE(std::fabs(with.activated(i, o) - without.activated(i, o) -
                              expected(0, o)) < 1e-12);
        }
}

TEST_CASE("additivity holds for arbitrary batches") {
    Fixture f(109, 6);
    DenseForward with = memory_forward(f.layer, f.bank, f.x, false);
    DenseForward without = dense_forward(f.layer, f.x, false);
    Matrix bias = f.bank.bias_vector();
    for (std::size_t i = 0; i < f.x.rows(); ++i)
        for (std::size_t o = 0; o < f.layer.out_size(); ++o)
            REQUIRE(std::fabs(with.activated(i, o) - without.activated(i, o) - bias(0, o)) <
                    1e-12);
}

TEST_CASE("inactive bank refuses to run") {
    Fixture f(113);
    f.bank.active = false;
    REQUIRE_THROWS_AS(memory_forward(f.layer, f.bank, f.x, false), OracleError);
    Matrix grad(f.x.rows(), f.layer.out_size());
    REQUIRE_THROWS_AS(memory_backward(f.layer, f.bank, grad, f.x, 0.1, MemoryMode::Beneficial),
                      StateError);
}

TEST_CASE("beneficial mode requires positive epsilon") {
    Fixture f(127);
    Matrix grad(f.x.rows(), f.layer.out_size());
    REQUIRE_THROWS_AS(memory_backward(f.layer, f.bank, grad, f.x, 0.0, MemoryMode::Beneficial),
                      ConfigError);
    REQUIRE_NOTHROW(memory_backward(f.layer, f.bank, grad, f.x, 0.0, MemoryMode::Gradient));
}

TEST_CASE("zero gradient gives zero memory updates") {
    Fixture f(131);
    Matrix grad(f.x.rows(), f.layer.out_size());
    MemoryGrads g = memory_backward(f.layer, f.bank, grad, f.x, 0.1, MemoryMode::Beneficial);
    REQUIRE(max_abs(g.dW_task) == 0.0);
    REQUIRE(max_abs(g.dM) == 0.0); // sign(0) == 0
}

TEST_CASE("beneficial step entries have magnitude exactly epsilon") {
    Fixture f(137);
    Rng rng(7);
    Matrix grad(f.x.rows(), f.layer.out_size());
    grad.fill_gaussian(rng, 1.0);
    const double eps = 0.05;
    MemoryGrads g = memory_backward(f.layer, f.bank, grad, f.x, eps, MemoryMode::Beneficial);
    for (double v : g.dM.values()) REQUIRE((v == eps || v == -eps || v == 0.0));
}

TEST_CASE("memory gradients match finite differences") {
    Fixture f(139);
    Rng rng(11);
    std::vector<std::int32_t> labels = {2, 0, 4};
    const Matrix targets = one_hot(labels, f.layer.out_size());
    const double eps = 0.1;

    const auto loss_of = [&]() {
        DenseForward fw = memory_forward(f.layer, f.bank, f.x, false);
        return softmax_cross_entropy(fw.activated, targets).loss;
    };

    DenseForward fw = memory_forward(f.layer, f.bank, f.x, false);
    LossResult lr = softmax_cross_entropy(fw.activated, targets);
    MemoryGrads exact = memory_backward(f.layer, f.bank, lr.grad, f.x, eps, MemoryMode::Gradient);
    MemoryGrads bd = memory_backward(f.layer, f.bank, lr.grad, f.x, eps, MemoryMode::Beneficial);

    const auto fd_of = [&](Matrix& p, std::size_t i) {
        const double orig = p.data()[i];
        const double h = 1e-5 * std::max(1.0, std::fabs(orig));
        p.data()[i] = orig + h;
        const double lp = loss_of();
        p.data()[i] = orig - h;
        const double lm = loss_of();
        p.data()[i] = orig;
        return (lp - lm) / (2.0 * h);
    };

    for (std::size_t i = 0; i < f.bank.W_task.size(); ++i) {
        const double fd = fd_of(f.bank.W_task, i);
        const double an = exact.dW_task.data()[i];
        REQUIRE(std::fabs(an - fd) / std::max({1.0, std::fabs(an), std::fabs(fd)}) < 1e-5);
    }
    for (std::size_t i = 0; i < f.bank.M.size(); ++i) {
        const double fd = fd_of(f.bank.M, i);
        const double an = exact.dM.data()[i];
        REQUIRE(std::fabs(an - fd) / std::max({1.0, std::fabs(an), std::fabs(fd)}) < 1e-5);
        if (std::fabs(fd) > 1e-8)
            REQUIRE(bd.dM.data()[i] == (fd > 0.0 ? eps : -eps));
    }
    // normal-path gradients are unchanged by the memory term
    DenseGrads plain = dense_backward(f.layer, lr.grad, f.x);
    REQUIRE(exact.dense.dW == plain.dW);
    REQUIRE(exact.dense.dbias == plain.dbias);
}

TEST_CASE("one beneficial step does not increase the loss") {
    // all other parameters frozen, lr small; sign-step overshoot near zero
    // gradients is allowed a couple of violations
    const double lr_mem = 1e-3;
    const double eps = 0.1;
    std::size_t violations = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Fixture f(1000 + trial);
        Rng rng(2000 + trial);
        std::vector<std::int32_t> labels(f.x.rows());
        for (auto& l : labels)
            l = static_cast<std::int32_t>(rng.next_below(f.layer.out_size()));
        const Matrix targets = one_hot(labels, f.layer.out_size());

        const auto loss_of = [&]() {
            DenseForward fw = memory_forward(f.layer, f.bank, f.x, false);
            return softmax_cross_entropy(fw.activated, targets).loss;
        };
        const double before = loss_of();
        DenseForward fw = memory_forward(f.layer, f.bank, f.x, false);
        LossResult lr = softmax_cross_entropy(fw.activated, targets);
        MemoryGrads g =
            memory_backward(f.layer, f.bank, lr.grad, f.x, eps, MemoryMode::Beneficial);
        sgd_step(f.bank.M, g.dM, lr_mem);
        if (loss_of() > before) ++violations;
    }
    REQUIRE(violations <= 2);
}

TEST_CASE("task activation protocol") {
    NetworkConfig nc;
    nc.layer_sizes = {4, 6, 3};
    nc.memory_layers = {1};
    nc.memory_k = 2;
    nc.memory_h = 2;
    Network net = make_network(nc, 99);

    set_active_task(net, 0);
    REQUIRE(net.memory[1].at(0).active);
    set_active_task(net, 1);
    REQUIRE_FALSE(net.memory[1].at(0).active);
    REQUIRE(net.memory[1].at(1).active);
    // idempotent
    set_active_task(net, 1);
    REQUIRE(net.memory[1].at(1).active);
    REQUIRE(net.active_task == TaskId{1});

    // unknown task during evaluation is an oracle violation
    REQUIRE_THROWS_AS(set_active_task(net, 42, /*create_missing=*/false), OracleError);

    // fresh banks: zero units, nonzero weights
    REQUIRE(max_abs(net.memory[1].at(0).M) == 0.0);
    REQUIRE(max_abs(net.memory[1].at(0).W_task) > 0.0);
}

TEST_CASE("bank creation is deterministic and order-independent") {
    NetworkConfig nc;
    nc.layer_sizes = {4, 6, 3};
    nc.memory_layers = {1};
    nc.memory_k = 2;
    nc.memory_h = 2;

    Network a = make_network(nc, 7);
    set_active_task(a, 0);
    set_active_task(a, 1);
    Network b = make_network(nc, 7);
    set_active_task(b, 1);
    set_active_task(b, 0);
    REQUIRE(bank_checksum(a.memory[1].at(0)) == bank_checksum(b.memory[1].at(0)));
    REQUIRE(bank_checksum(a.memory[1].at(1)) == bank_checksum(b.memory[1].at(1)));
}

TEST_CASE("both memory modes allocate identical parameter tensors") {
    Fixture f(149);
    Rng rng(5);
    Matrix grad(f.x.rows(), f.layer.out_size());
    grad.fill_gaussian(rng, 1.0);
    MemoryGrads bd = memory_backward(f.layer, f.bank, grad, f.x, 0.1, MemoryMode::Beneficial);
    MemoryGrads gd = memory_backward(f.layer, f.bank, grad, f.x, 0.1, MemoryMode::Gradient);
    REQUIRE(bd.dM.rows() == gd.dM.rows());
    REQUIRE(bd.dM.cols() == gd.dM.cols());
    REQUIRE(bd.dW_task.rows() == gd.dW_task.rows());
    REQUIRE(bd.dW_task.cols() == gd.dW_task.cols());
    REQUIRE(f.bank.param_count() == f.bank.M.size() + f.bank.W_task.size());
}
