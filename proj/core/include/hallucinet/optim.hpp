#pragma once

#include <unordered_map>
#include <vector>

#include "hallucinet/autodiff.hpp"

namespace hallucinet {

enum class OptimizerKind { adam, sgd };

/// Parameter updates from accumulated gradients.
///
/// Adam uses beta1 = 0.9, beta2 = 0.999, eps = 1e-8 with bias correction;
/// sgd is the plain rule value -= lr * grad. Frozen parameters are left
/// untouched. step() zeroes every passed gradient afterwards.
class Optimizer {
public:
    explicit Optimizer(OptimizerKind kind = OptimizerKind::adam) : kind_(kind) {}

    OptimizerKind kind() const { return kind_; }

    void step(const std::vector<Parameter*>& params, float lr);

private:
    struct AdamSlot {
        Tensor m, v;
        long t = 0;
    };

    OptimizerKind kind_;
    std::unordered_map<Parameter*, AdamSlot> slots_;
};

}  // namespace hallucinet
