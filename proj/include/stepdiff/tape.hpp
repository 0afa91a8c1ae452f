#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "stepdiff/tensor.hpp"

namespace stepdiff {

/// Handle to a value recorded on a Tape.
struct Var {
    std::uint32_t id = 0;
};

/// Reverse-mode tape. Operations record their inputs and a vector-Jacobian
/// closure; backward() replays the closures in exact reverse order of the
/// forward pass. A tape is single-use: build one per training step.
class Tape {
public:
    Var leaf(Tensor value, bool requires_grad = false);

    const Tensor& val(Var v) const { return nodes_[v.id].value; }
    /// Gradient of the last backward() loss w.r.t. v. Zero-shaped for
    /// nodes that do not require gradients.
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    // Elementwise and structural ops. All inputs/outputs are rank-1/2 tensors.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var scale(Var a, double s);
    Var add_rowvec(Var x, Var b);
    Var broadcast_row(Var row, std::size_t n);
    Var reshape(Var a, std::vector<std::size_t> shape);
    Var slice_rows(Var x, std::size_t r0, std::size_t r1);
    Var concat_cols(Var a, Var b);
    Var concat_rows(Var a, Var b);
    Var gather_rows(Var x, std::vector<std::size_t> idx);
    Var sum_all(Var a);

    Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
    /// y = x W + b with shape checking that names the offending axes.
    Var dense(Var x, Var w, Var b);

    Var tanh_op(Var a);
    Var sigmoid(Var a);
    Var silu(Var a);
    Var softmax_rows(Var a);
    Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

    /// Fused multi-head scaled-dot-product attention. q, k, v are
    /// [n_seq*seq_len, d] with sequence-major rows; d must divide by heads.
    /// key_valid, when given, marks rows that may be attended to (length
    /// n_seq*seq_len); invalid rows receive zero attention weight.
    Var attention(Var q, Var k, Var v, int heads, std::size_t n_seq = 1,
                  const std::vector<std::uint8_t>* key_valid = nullptr);

    /// Backpropagate from a scalar loss. Consumes the tape.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void()> back;
        std::vector<double> aux;  // op-specific saved state (softmax weights etc.)
    };

    Var push(Tensor value, bool requires_grad);
    Tensor& grad_mut(Var v) { return nodes_[v.id].grad; }
    void check2d(Var v, const char* op) const;

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

/// Plain multi-head attention over a single sequence of n positions,
/// rows of each softmax summing to 1. Value-level convenience wrapper.
Tensor attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, int heads);

/// y = x W + b without recording; shapes checked with named axes.
Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b);

}  // namespace stepdiff
