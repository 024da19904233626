#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bpn/ewc.hpp"
#include "bpn/loss.hpp"
#include "bpn/network.hpp"

namespace bpn {

/// Worst relative error per gradient formula over all checked instances.
/// rel(a, f) = |a - f| / max(1, |a|, |f|) against central finite differences.
struct GradCheckReport {
    double max_rel_dW = 0.0;
    double max_rel_dbias = 0.0;
    double max_rel_dX = 0.0;
    double max_rel_dW_task = 0.0;
    double max_rel_dM = 0.0; ///< gradient-mode memory units
    double max_rel_ewc = 0.0;
    std::size_t beneficial_mismatches = 0; ///< sign-step entries disagreeing with FD
    std::size_t instances = 0;

    static constexpr double kTolBackprop = 1e-5;
    static constexpr double kTolEwc = 1e-8;

    bool ok() const {
        return max_rel_dW < kTolBackprop && max_rel_dbias < kTolBackprop &&
               max_rel_dX < kTolBackprop && max_rel_dW_task < kTolBackprop &&
               max_rel_dM < kTolBackprop && max_rel_ewc < kTolEwc && beneficial_mismatches == 0;
    }

    /// Name of the first tensor whose error exceeds its tolerance, or "".
    std::string first_offender() const {
        if (max_rel_dW >= kTolBackprop) return "dW";
        if (max_rel_dbias >= kTolBackprop) return "dbias";
        if (max_rel_dX >= kTolBackprop) return "dX";
        if (max_rel_dW_task >= kTolBackprop) return "dW_task";
        if (max_rel_dM >= kTolBackprop) return "dM";
        if (max_rel_ewc >= kTolEwc) return "ewc";
        if (beneficial_mismatches > 0) return "dM(beneficial)";
        return "";
    }
};

namespace gcdetail {

inline double rel_err(double a, double f) {
    return std::fabs(a - f) / std::max({1.0, std::fabs(a), std::fabs(f)});
}

/// Central finite difference of `loss` with respect to every entry of `p`.
inline Matrix fd_gradient(Matrix& p, const std::function<double()>& loss, double h = 1e-5) {
    Matrix g(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double orig = p.data()[i];
        const double step = h * std::max(1.0, std::fabs(orig));
        p.data()[i] = orig + step;
        const double lp = loss();
        p.data()[i] = orig - step;
        const double lm = loss();
        p.data()[i] = orig;
        g.data()[i] = (lp - lm) / (2.0 * step);
    }
    return g;
}

inline void track_max(double& acc, const Matrix& analytic, const Matrix& fd) {
    for (std::size_t i = 0; i < analytic.size(); ++i)
        acc = std::max(acc, rel_err(analytic.data()[i], fd.data()[i]));
}

} // namespace gcdetail

/// Check every backward formula on random small instances: the dense-layer
/// gradients, the input gradient, the memory-weight gradient and the
/// gradient-mode memory-unit gradient against central finite differences of
/// the scalar loss; the beneficial-mode step against epsilon * sign of the
/// finite-difference gradient wherever that gradient is decisively nonzero.
/// `corrupt` deliberately breaks one dW entry (negative-control hook).
inline GradCheckReport run_gradient_checks(std::uint64_t seed, std::size_t instances = 20,
                                           bool corrupt = false) {
    GradCheckReport rep;
    rep.instances = instances;
    const double epsilon = 0.1;

    for (std::size_t inst = 0; inst < instances; ++inst) {
        Rng rng = split_rng(seed, 0x67636865636bULL /*"gcheck"*/, inst);
        const std::size_t in = 3 + rng.next_below(4);
        const std::size_t hid = 4 + rng.next_below(5);
        const std::size_t classes = 3 + rng.next_below(3);
        const std::size_t batch = 1 + rng.next_below(4);

        NetworkConfig nc;
        nc.layer_sizes = {in, hid, classes};
        nc.memory_k = 2 + rng.next_below(2);
        nc.memory_h = 2 + rng.next_below(2);
        nc.memory_layers.insert(nc.layer_sizes.size() - 2); // output layer
        if (inst % 3 == 0) nc.memory_layers.insert(0);      // sometimes a hidden layer too

        const TaskId task = 7;
        Network net = make_network(nc, rng.next_u64());
        set_active_task(net, task);
        // nonzero memory units so dW_task has structure
        for (std::size_t l : nc.memory_layers)
            net.memory[l].at(task).M.fill_gaussian(rng, 0.5);

        Matrix x(batch, in);
        x.fill_gaussian(rng, 1.0);
        std::vector<std::int32_t> labels(batch);
        for (auto& l : labels) l = static_cast<std::int32_t>(rng.next_below(classes));
        const Matrix targets = one_hot(labels, classes);

        const auto loss_fn = [&]() {
            ForwardTrace t = forward_trace(net, x, task);
            return softmax_cross_entropy(t.logits(), targets).loss;
        };

        ForwardTrace trace = forward_trace(net, x, task);
        LossResult lr = softmax_cross_entropy(trace.logits(), targets);
        NetworkGrads g_exact = network_backward(net, trace, lr.grad, MemoryMode::Gradient,
                                                epsilon, /*want_input_grad=*/true);
        NetworkGrads g_bd = network_backward(net, trace, lr.grad, MemoryMode::Beneficial,
                                             epsilon, /*want_input_grad=*/false);
        if (corrupt && inst == 0 && g_exact.layers[0].dW.size() > 0)
            g_exact.layers[0].dW.data()[0] += 1e-3;

        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            gcdetail::track_max(rep.max_rel_dW, g_exact.layers[l].dW,
                                gcdetail::fd_gradient(net.layers[l].W, loss_fn));
            gcdetail::track_max(rep.max_rel_dbias, g_exact.layers[l].dbias,
                                gcdetail::fd_gradient(net.layers[l].bias, loss_fn));
        }
        gcdetail::track_max(rep.max_rel_dX, g_exact.dX, gcdetail::fd_gradient(x, loss_fn));

        for (std::size_t l : nc.memory_layers) {
            MemoryBank& bank = net.memory[l].at(task);
            gcdetail::track_max(rep.max_rel_dW_task, g_exact.memory.at(l).dW_task,
                                gcdetail::fd_gradient(bank.W_task, loss_fn));
            const Matrix fd_m = gcdetail::fd_gradient(bank.M, loss_fn);
            gcdetail::track_max(rep.max_rel_dM, g_exact.memory.at(l).dM, fd_m);
            const Matrix& dm_bd = g_bd.memory.at(l).dM;
            for (std::size_t i = 0; i < fd_m.size(); ++i) {
                if (std::fabs(fd_m.data()[i]) <= 1e-8) continue;
                const double want = epsilon * (fd_m.data()[i] > 0.0 ? 1.0 : -1.0);
                if (dm_bd.data()[i] != want) ++rep.beneficial_mismatches;
            }
        }

        // quadratic anchor penalty: central differences are exact here, so
        // the tolerance is tight
        std::vector<FisherAnchor> anchors(1);
        FisherAnchor& a = anchors[0];
        a.task = 1;
        for (const auto& l : net.layers) {
            Matrix fw(l.W.rows(), l.W.cols());
            for (double& v : fw.values()) v = std::fabs(rng.next_gaussian());
            a.fisher_W.push_back(std::move(fw));
            Matrix fb(1, l.out_size());
            for (double& v : fb.values()) v = std::fabs(rng.next_gaussian());
            a.fisher_bias.push_back(std::move(fb));
            Matrix aw = l.W;
            for (double& v : aw.values()) v += 0.1 * rng.next_gaussian();
            a.anchor_W.push_back(std::move(aw));
            Matrix ab = l.bias;
            for (double& v : ab.values()) v += 0.1 * rng.next_gaussian();
            a.anchor_bias.push_back(std::move(ab));
        }
        const double lambda = 0.7;
        const auto pen_fn = [&]() { return ewc_penalty(net, anchors, lambda).loss; };
        EwcPenalty pen = ewc_penalty(net, anchors, lambda);
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            gcdetail::track_max(rep.max_rel_ewc, pen.dW[l],
                                gcdetail::fd_gradient(net.layers[l].W, pen_fn, 1e-3));
            gcdetail::track_max(rep.max_rel_ewc, pen.dbias[l],
                                gcdetail::fd_gradient(net.layers[l].bias, pen_fn, 1e-3));
        }
    }
    return rep;
}

} // namespace bpn
