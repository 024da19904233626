#pragma once

#include <vector>

#include "bpn/memory.hpp"

namespace bpn {

/// Snapshot taken when a task finishes: per-parameter diagonal Fisher values
/// plus the weights they anchor. Shapes mirror the layer parameters exactly;
/// memory banks never appear here (they are task-private).
struct FisherAnchor {
    TaskId task = 0;
    std::vector<Matrix> fisher_W;    ///< per layer, shape of W, entries >= 0
    std::vector<Matrix> fisher_bias; ///< per layer, shape of bias
    std::vector<Matrix> anchor_W;    ///< weights at task completion
    std::vector<Matrix> anchor_bias;
};

} // namespace bpn
