#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "core/tensor.hpp"

namespace casr::nn {

// Reverse-mode autodiff over float tensors (NCHW activations). Ops record
// backward closures only while grad mode is on and some input needs
// gradients; inference under NoGradGuard keeps no tape and frees
// intermediates eagerly.
struct Node {
    TensorF value;
    TensorF grad;  // allocated lazily on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backprop;  // reads this->grad, accumulates into parents

    explicit Node(TensorF v) : value(std::move(v)) {}
};

using Var = std::shared_ptr<Node>;

bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();

private:
    bool prev_;
};

Var leaf(TensorF value, bool requires_grad = true);
Var constant(TensorF value);
TensorF& ensure_grad(Node& n);
void zero_grad(const Var& v);

// Runs backward from a scalar root, accumulating into every reachable
// gradient-requiring node.
void backward(const Var& root);

// ops ------------------------------------------------------------------

// x [N,C,H,W], w [F,C,kh,kw], b [F]; stride 1, symmetric zero padding
Var conv2d(const Var& x, const Var& w, const Var& b, int pad);
// x [N,Fin], w [Fout,Fin], b [Fout]
Var linear(const Var& x, const Var& w, const Var& b);
// gamma/beta [C]; statistics per (sample, group)
Var group_norm(const Var& x, int groups, const Var& gamma, const Var& beta, float eps = 1e-5f);
Var silu(const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& x, float c);
// h*(1+gamma)+beta, all [N,C,H,W]
Var film(const Var& h, const Var& gamma, const Var& beta);
// x [N,C,H,W] + v [N,C] broadcast over space
Var add_rowvec(const Var& x, const Var& v);
Var concat_ch(const std::vector<Var>& xs);
Var slice_ch(const Var& x, int c0, int c1);
// 2x average pooling, ceil semantics on odd sizes
Var avgpool2(const Var& x);
// nearest-neighbor resize to an explicit size (exact inverse shape of avgpool2)
Var upsample_to(const Var& x, int out_h, int out_w);
// canonical bicubic resampler as a differentiable (linear) op
Var resize_bicubic_op(const Var& x, int out_h, int out_w);
// mean absolute value -> scalar [1]
Var mean_abs(const Var& x);

}  // namespace casr::nn
