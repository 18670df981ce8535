#pragma once

#include <array>
#include <functional>
#include <vector>

#include "hallucinet/tensor.hpp"

namespace hallucinet {

/// Trainable tensor with gradient accumulator.
///
/// `grad` always has the same shape as `value`. While `frozen` is set the
/// value is bit-identical before and after any training step and backward
/// passes leave the gradient at zero.
struct Parameter {
    Tensor value;
    Tensor grad;
    bool frozen = false;

    Parameter() = default;
    explicit Parameter(Tensor v) : value(std::move(v)), grad(Tensor::zeros(value.shape)) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0f); }
};

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
};

/// Reverse-mode computation trace.
///
/// Ops append nodes, so parents always precede children and backward() is a
/// single reverse sweep. One tape records one forward pass; clear() (or a
/// fresh tape) starts the next. Values on the tape are immutable once
/// recorded.
class Tape {
public:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until touched by backward
        std::array<int, 2> parents{-1, -1};
        std::function<void(Tape&, Node&)> backprop;  // pulls node.grad into parent grads
        Parameter* param = nullptr;
    };

    /// Record a parameter leaf; backward() accumulates into p.grad unless frozen.
    Var leaf(Parameter& p);

    /// Record a value with no gradient sink (inputs, labels, detached values).
    Var constant(Tensor t);

    const Tensor& value(Var v) const;

    /// Fill Parameter::grad for every unfrozen parameter reachable from loss.
    /// loss must be a scalar recorded on this tape.
    void backward(Var loss);

    void clear();
    size_t size() const { return nodes_.size(); }

    // Used by op implementations.
    int append(Node node);
    Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
    void accumulate(int id, const std::vector<float>& contribution);
    Tensor& grad_buffer(int id);

private:
    std::vector<Node> nodes_;
};

// ---- Differentiable operations -------------------------------------------
//
// All take handles on the same tape and append one node. Elementwise ops
// require identical shapes.

/// Standard matrix product of rank-2 tensors [m x k] * [k x n] -> [m x n].
Var matmul(Var a, Var b);

/// Rank-2 transpose.
Var transpose(Var a);

/// 2-D cross-correlation with zero padding.
/// input: [c_in x h x w] or batched [n x c_in x h x w];
/// kernels: [c_out x c_in x kh x kw]. Output spatial dims follow
/// h' = floor((h + 2*padding - kh)/stride) + 1.
Var conv2d(Var input, Var kernels, int stride, int padding);

/// Elementwise max(0, x); subgradient at 0 is 0.
Var relu(Var x);

/// Rowwise softmax of logits scaled by 1/temperature, computed with
/// max-subtraction. Accepts [C] or [batch x C]. temperature must be > 0.
Var tempered_softmax(Var z, float temperature);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float c);

/// Add a length-k row vector to every row of an [n x k] matrix.
Var add_rowvec(Var m, Var v);

/// Add a per-channel bias [c] to a [c x h x w] or [n x c x h x w] tensor.
Var add_channel_bias(Var x, Var bias);

/// Same data, new shape (numel must match). Gradient reshapes back.
Var reshape(Var x, const std::vector<int>& shape);

/// Concatenate [n x p] and [n x q] along columns -> [n x (p+q)].
Var concat_cols(Var a, Var b);

/// Sum of all entries -> scalar.
Var sum(Var x);

/// log(max(x, eps)); gradient is 1/x where x > eps and 0 below the clamp.
Var log_clamped(Var x, float eps = 1e-12f);

/// Copy of the value with no gradient flow into its producers.
Var detach(Var x);

}  // namespace hallucinet
