#include "mp3net/autodiff.hpp"

#include "mp3net/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace mp3net::ad {

namespace {

thread_local bool g_grad_enabled = true;
// Nodes that lie on a path to one of the variables grad() was asked for. Backward rules skip
// the other inputs.
thread_local const std::unordered_set<const Node*>* g_needed = nullptr;

bool wants(const Var& v) { return v.requires_grad() && (g_needed == nullptr || g_needed->contains(v.node())); }

using Grads = std::vector<Var>;

void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().to_string() + " vs " + b.shape().to_string());
    }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

// Visits every index of `shape` in row-major order.
template <typename F>
void for_each_index(const Shape4& s, F f) {
    for (std::size_t b = 0; b < s.b; ++b)
        for (std::size_t m = 0; m < s.m; ++m)
            for (std::size_t n = 0; n < s.n; ++n)
                for (std::size_t c = 0; c < s.c; ++c) f(b, m, n, c);
}

}  // namespace

// ─── Core ───────────────────────────────────────────────────────────────────

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Var Var::make(Tensor value, std::vector<Var> inputs, std::function<std::vector<Var>(const Var&)> backward,
              const char* op) {
    Var out(std::move(value));
    const bool track =
        g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
    if (track) {
        out.node_->requires_grad = true;
        out.node_->inputs = std::move(inputs);
        out.node_->backward = std::move(backward);
        out.node_->op = op;
    }
    return out;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() noexcept { return g_grad_enabled; }

Var constant(Tensor value) { return Var(std::move(value), false); }

Var scalar(double v) { return constant(Tensor(Shape4{1, 1, 1, 1}, v)); }

std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, bool create_graph) {
    if (output.value().size() != 1) throw ShapeError("grad() needs a single-element output");

    // Post-order DFS over nodes that carry gradient.
    std::vector<Var> order;
    std::unordered_set<const Node*> visited;
    struct Frame {
        Var var;
        std::size_t next_input;
    };
    std::vector<Frame> stack;
    if (output.requires_grad()) {
        stack.push_back({output, 0});
        visited.insert(output.node());
    }
    while (!stack.empty()) {
        Frame& top = stack.back();
        const auto& inputs = top.var.node()->inputs;
        if (top.next_input < inputs.size()) {
            const Var& in = inputs[top.next_input++];
            if (in.requires_grad() && visited.insert(in.node()).second) stack.push_back({in, 0});
        } else {
            order.push_back(top.var);
            stack.pop_back();
        }
    }

    std::unordered_set<const Node*> needed;
    for (const Var& w : wrt) {
        if (w.defined()) needed.insert(w.node());
    }
    for (const Var& v : order) {
        for (const Var& in : v.node()->inputs) {
            if (needed.contains(in.node())) {
                needed.insert(v.node());
                break;
            }
        }
    }
    struct NeededScope {
        const std::unordered_set<const Node*>* previous;
        explicit NeededScope(const std::unordered_set<const Node*>* set) : previous(g_needed) { g_needed = set; }
        ~NeededScope() { g_needed = previous; }
    } scope(&needed);

    std::unique_ptr<NoGradGuard> guard;
    if (!create_graph) guard = std::make_unique<NoGradGuard>();

    std::unordered_map<const Node*, Var> adjoint;
    adjoint[output.node()] = constant(Tensor(output.shape(), 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Node* node = it->node();
        auto found = adjoint.find(node);
        if (found == adjoint.end() || !node->backward || !needed.contains(node)) continue;
        const Grads input_grads = node->backward(found->second);
        for (std::size_t i = 0; i < node->inputs.size(); ++i) {
            const Var& in = node->inputs[i];
            if (!wants(in) || i >= input_grads.size() || !input_grads[i].defined()) continue;
            auto [slot, inserted] = adjoint.try_emplace(in.node(), input_grads[i]);
            if (!inserted) slot->second = add(slot->second, input_grads[i]);
        }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const Var& w : wrt) {
        auto found = adjoint.find(w.node());
        out.push_back(found != adjoint.end() ? found->second : constant(Tensor(w.shape(), 0.0)));
    }
    return out;
}

// ─── Elementwise ────────────────────────────────────────────────────────────

Var add(const Var& a, const Var& b) {
    require_same_shape(a, b, "add");
    return Var::make(zip(a.value(), b.value(), [](double x, double y) { return x + y; }), {a, b},
                     [](const Var& g) { return Grads{g, g}; }, "add");
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a, b, "sub");
    return Var::make(zip(a.value(), b.value(), [](double x, double y) { return x - y; }), {a, b},
                     [](const Var& g) { return Grads{g, scale(g, -1.0)}; }, "sub");
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a, b, "mul");
    return Var::make(zip(a.value(), b.value(), [](double x, double y) { return x * y; }), {a, b},
                     [a, b](const Var& g) {
                         return Grads{wants(a) ? mul(g, b) : Var{}, wants(b) ? mul(g, a) : Var{}};
                     },
                     "mul");
}

Var scale(const Var& a, double s) {
    return Var::make(map(a.value(), [s](double x) { return s * x; }), {a},
                     [s](const Var& g) { return Grads{scale(g, s)}; }, "scale");
}

Var add_scalar(const Var& a, double s) {
    return Var::make(map(a.value(), [s](double x) { return x + s; }), {a}, [](const Var& g) { return Grads{g}; },
                     "add_scalar");
}

Var square(const Var& a) { return mul(a, a); }

Var sqrt(const Var& a) {
    return Var::make(map(a.value(), [](double x) { return std::sqrt(x); }), {a},
                     [a](const Var& g) { return Grads{mul(g, scale(reciprocal_safe(sqrt(a)), 0.5))}; }, "sqrt");
}

Var reciprocal_safe(const Var& a) {
    return Var::make(map(a.value(), [](double x) { return x == 0.0 ? 0.0 : 1.0 / x; }), {a},
                     [a](const Var& g) { return Grads{mul(g, scale(square(reciprocal_safe(a)), -1.0))}; },
                     "reciprocal");
}

Var leaky_relu(const Var& x, double slope) {
    Tensor slopes = map(x.value(), [slope](double v) { return v > 0.0 ? 1.0 : slope; });
    Tensor y = zip(x.value(), slopes, [](double v, double s) { return v * s; });
    return Var::make(std::move(y), {x},
                     [mask = constant(std::move(slopes))](const Var& g) { return Grads{mul(g, mask)}; },
                     "leaky_relu");
}

// ─── Shape ──────────────────────────────────────────────────────────────────

Var reduce_sum(const Var& x, std::array<bool, 4> axes) {
    const Shape4& in = x.shape();
    Shape4 out_shape = in;
    for (int a = 0; a < 4; ++a) {
        if (axes[static_cast<std::size_t>(a)]) out_shape[a] = 1;
    }
    Tensor out(out_shape);
    const Tensor& v = x.value();
    for_each_index(in, [&](std::size_t b, std::size_t m, std::size_t n, std::size_t c) {
        out.at(axes[0] ? 0 : b, axes[1] ? 0 : m, axes[2] ? 0 : n, axes[3] ? 0 : c) += v.at(b, m, n, c);
    });
    return Var::make(std::move(out), {x}, [in](const Var& g) { return Grads{broadcast_to(g, in)}; }, "reduce_sum");
}

Var sum_all(const Var& x) { return reduce_sum(x, {true, true, true, true}); }

Var mean_all(const Var& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size())); }

Var broadcast_to(const Var& x, const Shape4& shape) {
    const Shape4& in = x.shape();
    std::array<bool, 4> axes{};
    for (int a = 0; a < 4; ++a) {
        if (in[a] == shape[a]) continue;
        if (in[a] != 1) throw ShapeError("broadcast_to: cannot expand " + in.to_string() + " to " + shape.to_string());
        axes[static_cast<std::size_t>(a)] = true;
    }
    if (in == shape) return x;
    Tensor out(shape);
    const Tensor& v = x.value();
    for_each_index(shape, [&](std::size_t b, std::size_t m, std::size_t n, std::size_t c) {
        out.at(b, m, n, c) = v.at(axes[0] ? 0 : b, axes[1] ? 0 : m, axes[2] ? 0 : n, axes[3] ? 0 : c);
    });
    return Var::make(std::move(out), {x}, [axes](const Var& g) { return Grads{reduce_sum(g, axes)}; }, "broadcast");
}

Var reshape(const Var& x, const Shape4& shape) {
    if (shape.size() != x.value().size()) {
        throw ShapeError("reshape: " + x.shape().to_string() + " to " + shape.to_string());
    }
    const Shape4 in = x.shape();
    return Var::make(Tensor(shape, x.value().data()), {x}, [in](const Var& g) { return Grads{reshape(g, in)}; },
                     "reshape");
}

Var slice(const Var& x, int axis, std::size_t begin, std::size_t end) {
    const Shape4 in = x.shape();
    if (begin >= end || end > in[axis]) {
        throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for axis " +
                         std::to_string(axis) + " of " + in.to_string());
    }
    Shape4 out_shape = in;
    out_shape[axis] = end - begin;
    Tensor out(out_shape);
    const Tensor& v = x.value();
    for_each_index(out_shape, [&](std::size_t b, std::size_t m, std::size_t n, std::size_t c) {
        std::array<std::size_t, 4> idx{b, m, n, c};
        idx[static_cast<std::size_t>(axis)] += begin;
        out.at(b, m, n, c) = v.at(idx[0], idx[1], idx[2], idx[3]);
    });
    const std::size_t after = in[axis] - end;
    return Var::make(std::move(out), {x},
                     [axis, begin, after](const Var& g) { return Grads{pad(g, axis, begin, after)}; }, "slice");
}

Var pad(const Var& x, int axis, std::size_t before, std::size_t after) {
    const Shape4 in = x.shape();
    Shape4 out_shape = in;
    out_shape[axis] = in[axis] + before + after;
    Tensor out(out_shape);
    const Tensor& v = x.value();
    for_each_index(in, [&](std::size_t b, std::size_t m, std::size_t n, std::size_t c) {
        std::array<std::size_t, 4> idx{b, m, n, c};
        idx[static_cast<std::size_t>(axis)] += before;
        out.at(idx[0], idx[1], idx[2], idx[3]) = v.at(b, m, n, c);
    });
    const std::size_t len = in[axis];
    return Var::make(std::move(out), {x},
                     [axis, before, len](const Var& g) { return Grads{slice(g, axis, before, before + len)}; }, "pad");
}

Var concat(const Var& a, const Var& b, int axis) {
    for (int ax = 0; ax < 4; ++ax) {
        if (ax != axis && a.shape()[ax] != b.shape()[ax]) {
            throw ShapeError("concat: " + a.shape().to_string() + " and " + b.shape().to_string());
        }
    }
    return add(pad(a, axis, 0, b.shape()[axis]), pad(b, axis, a.shape()[axis], 0));
}

// ─── Convolution ────────────────────────────────────────────────────────────

std::size_t ConvGeometry::out_m(std::size_t in_m) const {
    if (in_m + 2 * pad_m < kernel_m) throw ShapeError("conv: input smaller than kernel along blocks");
    return (in_m + 2 * pad_m - kernel_m) / stride_m + 1;
}

std::size_t ConvGeometry::out_n(std::size_t in_n) const {
    if (in_n + 2 * pad_n < kernel_n) throw ShapeError("conv: input smaller than kernel along bands");
    return (in_n + 2 * pad_n - kernel_n) / stride_n + 1;
}

namespace {

void check_weight(const Shape4& w, const ConvGeometry& g, std::size_t ci, std::size_t co, const char* op) {
    if (w.b != g.kernel_m || w.m != g.kernel_n || (ci != 0 && w.n != ci) || (co != 0 && w.c != co)) {
        throw ShapeError(std::string(op) + ": weight shape " + w.to_string() + " does not match geometry");
    }
}

// Calls f(mi, ni, i, j) for each kernel tap of output position (mo, no) that lands inside the x grid.
template <typename F>
void for_each_tap(const ConvGeometry& g, std::size_t mo, std::size_t no, std::size_t in_m, std::size_t in_n, F f) {
    for (std::size_t i = 0; i < g.kernel_m; ++i) {
        const std::ptrdiff_t mi = static_cast<std::ptrdiff_t>(mo * g.stride_m + i) - static_cast<std::ptrdiff_t>(g.pad_m);
        if (mi < 0 || mi >= static_cast<std::ptrdiff_t>(in_m)) continue;
        for (std::size_t j = 0; j < g.kernel_n; ++j) {
            const std::ptrdiff_t ni =
                static_cast<std::ptrdiff_t>(no * g.stride_n + j) - static_cast<std::ptrdiff_t>(g.pad_n);
            if (ni < 0 || ni >= static_cast<std::ptrdiff_t>(in_n)) continue;
            f(static_cast<std::size_t>(mi), static_cast<std::size_t>(ni), i, j);
        }
    }
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

// Rows are output pixels (b, mo, no); columns are (i, j, ci) taps of the receptive field.
RowMatrix im2col(const Tensor& x, const ConvGeometry& g, std::size_t out_m, std::size_t out_n) {
    const Shape4& xs = x.shape();
    const std::size_t ci_n = xs.c;
    RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(xs.b * out_m * out_n),
                                     static_cast<Eigen::Index>(g.kernel_m * g.kernel_n * ci_n));
    std::size_t row = 0;
    for (std::size_t b = 0; b < xs.b; ++b)
        for (std::size_t mo = 0; mo < out_m; ++mo)
            for (std::size_t no = 0; no < out_n; ++no, ++row) {
                double* dst = cols.data() + row * static_cast<std::size_t>(cols.cols());
                for_each_tap(g, mo, no, xs.m, xs.n, [&](std::size_t mi, std::size_t ni, std::size_t i, std::size_t j) {
                    std::copy_n(x.data().data() + x.offset(b, mi, ni, 0), ci_n, dst + (i * g.kernel_n + j) * ci_n);
                });
            }
    return cols;
}

// Scatter-adds columns back onto a B x in_m x in_n x ci tensor.
Tensor col2im(const RowMatrix& cols, const ConvGeometry& g, std::size_t batch, std::size_t out_m, std::size_t out_n,
              std::size_t in_m, std::size_t in_n, std::size_t ci_n) {
    Tensor x(Shape4{batch, in_m, in_n, ci_n});
    std::size_t row = 0;
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t mo = 0; mo < out_m; ++mo)
            for (std::size_t no = 0; no < out_n; ++no, ++row) {
                const double* src = cols.data() + row * static_cast<std::size_t>(cols.cols());
                for_each_tap(g, mo, no, in_m, in_n, [&](std::size_t mi, std::size_t ni, std::size_t i, std::size_t j) {
                    double* dst = x.data().data() + x.offset(b, mi, ni, 0);
                    const double* s = src + (i * g.kernel_n + j) * ci_n;
                    for (std::size_t ci = 0; ci < ci_n; ++ci) dst[ci] += s[ci];
                });
            }
    return x;
}

// The weight tensor (km, kn, ci, co) viewed as a (km kn ci) x co matrix.
ConstMatrixView weight_matrix(const Tensor& w) {
    const Shape4& s = w.shape();
    return ConstMatrixView(w.data().data(), static_cast<Eigen::Index>(s.b * s.m * s.n), static_cast<Eigen::Index>(s.c));
}

Tensor conv_y_kernel(const Tensor& x, const Tensor& w, const ConvGeometry& g) {
    const Shape4& xs = x.shape();
    Tensor y(Shape4{xs.b, g.out_m(xs.m), g.out_n(xs.n), w.shape().c});
    const Shape4& ys = y.shape();
    MatrixView(y.data().data(), static_cast<Eigen::Index>(ys.b * ys.m * ys.n), static_cast<Eigen::Index>(ys.c))
        .noalias() = im2col(x, g, ys.m, ys.n) * weight_matrix(w);
    return y;
}

Tensor conv_x_kernel(const Tensor& y, const Tensor& w, const ConvGeometry& g, std::size_t out_m, std::size_t out_n) {
    const Shape4& ys = y.shape();
    const ConstMatrixView ym(y.data().data(), static_cast<Eigen::Index>(ys.b * ys.m * ys.n),
                             static_cast<Eigen::Index>(ys.c));
    const RowMatrix cols = ym * weight_matrix(w).transpose();
    return col2im(cols, g, ys.b, ys.m, ys.n, out_m, out_n, w.shape().n);
}

Tensor conv_w_kernel(const Tensor& x, const Tensor& y, const ConvGeometry& g) {
    const Shape4& ys = y.shape();
    Tensor w(Shape4{g.kernel_m, g.kernel_n, x.shape().c, ys.c});
    const ConstMatrixView ym(y.data().data(), static_cast<Eigen::Index>(ys.b * ys.m * ys.n),
                             static_cast<Eigen::Index>(ys.c));
    MatrixView(w.data().data(), static_cast<Eigen::Index>(g.kernel_m * g.kernel_n * x.shape().c),
               static_cast<Eigen::Index>(ys.c))
        .noalias() = im2col(x, g, ys.m, ys.n).transpose() * ym;
    return w;
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const ConvGeometry& g) {
    check_weight(w.shape(), g, x.shape().c, 0, "conv2d");
    const std::size_t in_m = x.shape().m;
    const std::size_t in_n = x.shape().n;
    return Var::make(conv_y_kernel(x.value(), w.value(), g), {x, w},
                     [x, w, g, in_m, in_n](const Var& gy) {
                         return Grads{wants(x) ? conv2d_transpose(gy, w, g, in_m, in_n) : Var{},
                                      wants(w) ? conv2d_weight(x, gy, g) : Var{}};
                     },
                     "conv2d");
}

Var conv2d_transpose(const Var& y, const Var& w, const ConvGeometry& g, std::size_t out_m, std::size_t out_n) {
    check_weight(w.shape(), g, 0, y.shape().c, "conv2d_transpose");
    if (g.out_m(out_m) != y.shape().m || g.out_n(out_n) != y.shape().n) {
        throw ShapeError("conv2d_transpose: " + y.shape().to_string() + " cannot expand to " + std::to_string(out_m) +
                         "x" + std::to_string(out_n));
    }
    return Var::make(conv_x_kernel(y.value(), w.value(), g, out_m, out_n), {y, w},
                     [y, w, g](const Var& gx) {
                         return Grads{wants(y) ? conv2d(gx, w, g) : Var{},
                                      wants(w) ? conv2d_weight(gx, y, g) : Var{}};
                     },
                     "conv2d_transpose");
}

Var conv2d_weight(const Var& x, const Var& y, const ConvGeometry& g) {
    if (x.shape().b != y.shape().b || g.out_m(x.shape().m) != y.shape().m || g.out_n(x.shape().n) != y.shape().n) {
        throw ShapeError("conv2d_weight: " + x.shape().to_string() + " and " + y.shape().to_string() +
                         " are not related by the geometry");
    }
    const std::size_t in_m = x.shape().m;
    const std::size_t in_n = x.shape().n;
    return Var::make(conv_w_kernel(x.value(), y.value(), g), {x, y},
                     [x, y, g, in_m, in_n](const Var& gw) {
                         return Grads{wants(x) ? conv2d_transpose(y, gw, g, in_m, in_n) : Var{},
                                      wants(y) ? conv2d(x, gw, g) : Var{}};
                     },
                     "conv2d_weight");
}

Var add_bias(const Var& x, const Var& bias) {
    if (bias.shape() != Shape4{1, 1, 1, x.shape().c}) {
        throw ShapeError("add_bias: bias " + bias.shape().to_string() + " for input " + x.shape().to_string());
    }
    return add(x, broadcast_to(bias, x.shape()));
}

Var dense(const Var& x, const Var& w, const Var& bias) {
    const Shape4& s = x.shape();
    const Var flat = reshape(x, Shape4{s.b, 1, 1, s.m * s.n * s.c});
    return add_bias(conv2d(flat, w, ConvGeometry{}), bias);
}

}  // namespace mp3net::ad
