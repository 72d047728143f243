#pragma once

// Tape-free reverse-mode autodiff over Tensor values.
//
// Every backward rule is written in terms of the same differentiable ops, so the
// gradient graph produced with create_graph = true can be differentiated again.
// That is what the gradient penalty of the critic loss needs.

#include "mp3net/tensor.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mp3net::ad {

class Var;

struct Node {
    Tensor value;
    bool requires_grad = false;
    std::vector<Var> inputs;
    // Maps the output adjoint to one adjoint per input (empty Var where no gradient flows).
    std::function<std::vector<Var>(const Var&)> backward;
    const char* op = "leaf";
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Tensor& value() const { return node_->value; }
    // Parameters are updated in place between graph builds.
    Tensor& mutable_value() { return node_->value; }
    const Shape4& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const Node* node() const noexcept { return node_.get(); }

    static Var make(Tensor value, std::vector<Var> inputs, std::function<std::vector<Var>(const Var&)> backward,
                    const char* op);

private:
    std::shared_ptr<Node> node_;
};

// Disables graph recording in its scope; ops return constant leaves.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled() noexcept;

Var constant(Tensor value);
Var scalar(double v);

// Gradients of a single-element output with respect to `wrt`. With create_graph the
// returned Vars are themselves differentiable.
std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, bool create_graph = false);

// ─── Elementwise ────────────────────────────────────────────────────────────
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var square(const Var& a);
// sqrt with derivative defined as 0 at 0.
Var sqrt(const Var& a);
// 1/a, and 0 where a == 0.
Var reciprocal_safe(const Var& a);
Var leaky_relu(const Var& x, double slope);

// ─── Shape ──────────────────────────────────────────────────────────────────
// Sums over the axes flagged true, keeping them as size-1 dims.
Var reduce_sum(const Var& x, std::array<bool, 4> axes);
Var sum_all(const Var& x);
Var mean_all(const Var& x);
// Repeats size-1 dims up to `shape`.
Var broadcast_to(const Var& x, const Shape4& shape);
Var reshape(const Var& x, const Shape4& shape);
Var slice(const Var& x, int axis, std::size_t begin, std::size_t end);
Var pad(const Var& x, int axis, std::size_t before, std::size_t after);
Var concat(const Var& a, const Var& b, int axis);

inline Var slice_bands(const Var& x, std::size_t begin, std::size_t end) { return slice(x, 2, begin, end); }
inline Var concat_bands(const Var& a, const Var& b) { return concat(a, b, 2); }

// ─── Convolution ────────────────────────────────────────────────────────────
// All three conv ops are partial derivatives of one trilinear form
//   T(x, w, y) = sum x[b, mo*sm + i - pm, no*sn + j - pn, ci] w[i, j, ci, co] y[b, mo, no, co]
// with x zero outside its bounds. Weights have shape (km, kn, ci, co).
struct ConvGeometry {
    std::size_t kernel_m = 1;
    std::size_t kernel_n = 1;
    std::size_t stride_m = 1;
    std::size_t stride_n = 1;
    std::size_t pad_m = 0;
    std::size_t pad_n = 0;

    std::size_t out_m(std::size_t in_m) const;
    std::size_t out_n(std::size_t in_n) const;
};

// y = dT/dy: strided correlation.
Var conv2d(const Var& x, const Var& w, const ConvGeometry& g);
// x = dT/dx: transposed convolution producing an (out_m, out_n) grid.
Var conv2d_transpose(const Var& y, const Var& w, const ConvGeometry& g, std::size_t out_m, std::size_t out_n);
// w = dT/dw: weight correlation of x with y.
Var conv2d_weight(const Var& x, const Var& y, const ConvGeometry& g);

// y = x w + b on the flattened (m, n, c) features; output B x 1 x 1 x O. w is 1 x 1 x F x O.
Var dense(const Var& x, const Var& w, const Var& bias);
// Adds a 1 x 1 x 1 x C bias to every position.
Var add_bias(const Var& x, const Var& bias);

}  // namespace mp3net::ad
