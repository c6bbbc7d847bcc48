#include "tdae/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tdae::nd {

namespace {

// Flat source index for every element of `out` when broadcasting `src` to it.
std::vector<std::size_t> broadcast_map(const Shape& src, const Shape& out) {
    if (src.size() > out.size()) {
        throw ShapeError("broadcast: cannot broadcast " + to_string(src) + " to " + to_string(out));
    }
    const std::size_t offset = out.size() - src.size();
    std::vector<std::size_t> src_stride(out.size(), 0);
    std::size_t stride = 1;
    for (std::size_t d = src.size(); d-- > 0;) {
        const std::size_t od = d + offset;
        if (src[d] == out[od]) {
            src_stride[od] = stride;
        } else if (src[d] != 1) {
            throw ShapeError("broadcast: cannot broadcast " + to_string(src) + " to " + to_string(out));
        }
        stride *= src[d];
    }
    const std::size_t n = element_count(out);
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> idx(out.size(), 0);
    std::size_t flat = 0;
    for (std::size_t i = 0; i < n; ++i) {
        map[i] = flat;
        for (std::size_t d = out.size(); d-- > 0;) {
            ++idx[d];
            flat += src_stride[d];
            if (idx[d] < out[d]) break;
            flat -= src_stride[d] * idx[d];
            idx[d] = 0;
        }
    }
    return map;
}

double softplus_value(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct ConvDims {
    std::size_t h, w, cin, kh, kw, cout, oh, ow, pad;
};

ConvDims conv_dims(const Shape& in, const Shape& k, std::size_t pad) {
    if (in.size() != 3 || k.size() != 4) {
        throw ShapeError("conv2d: expected [H,W,C] input and [KH,KW,Cin,Cout] kernel, got " + to_string(in) +
                         " and " + to_string(k));
    }
    if (in[2] != k[2]) throw ShapeError("conv2d: channel mismatch " + to_string(in) + " vs " + to_string(k));
    if (in[0] + 2 * pad < k[0] || in[1] + 2 * pad < k[1]) {
        throw ShapeError("conv2d: kernel larger than padded input");
    }
    return {in[0], in[1], in[2], k[0], k[1], k[3], in[0] + 2 * pad - k[0] + 1, in[1] + 2 * pad - k[1] + 1, pad};
}

// Calls fn(out_pixel, in_pixel, kernel_tap) for every in-bounds (output, tap) pair.
template <typename Fn>
void for_each_tap(const ConvDims& d, Fn&& fn) {
    for (std::size_t oy = 0; oy < d.oh; ++oy) {
        for (std::size_t ox = 0; ox < d.ow; ++ox) {
            const std::size_t o = oy * d.ow + ox;
            for (std::size_t ky = 0; ky < d.kh; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(d.pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(d.h)) continue;
                for (std::size_t kx = 0; kx < d.kw; ++kx) {
                    const std::ptrdiff_t ix =
                        static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(d.pad);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(d.w)) continue;
                    fn(o, static_cast<std::size_t>(iy) * d.w + static_cast<std::size_t>(ix), ky * d.kw + kx);
                }
            }
        }
    }
}

}  // namespace

const Tensor& Var::value() const {
    if (graph_ == nullptr) throw std::logic_error("Var is not bound to a graph");
    return graph_->value(*this);
}

const Tensor& Gradients::at(const Var& leaf) const {
    if (&leaf.graph() != graph_) throw std::out_of_range("gradient requested for a leaf of another graph");
    auto it = grads_.find(leaf.id());
    if (it == grads_.end()) throw std::out_of_range("node " + std::to_string(leaf.id()) + " is not a leaf");
    return it->second;
}

Var Graph::input(Tensor value) {
    require_finite(value, "input");
    nodes_.push_back({Op::Leaf, std::move(value), {}, true, 0.0, 0});
    return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
    require_finite(value, "constant");
    nodes_.push_back({Op::Constant, std::move(value), {}, false, 0.0, 0});
    return Var(this, nodes_.size() - 1);
}

void Graph::check_owner(const Var& v) const {
    if (&v.graph() != this || v.id() >= nodes_.size()) throw std::logic_error("Var does not belong to this graph");
}

const Tensor& Graph::value(const Var& v) const {
    check_owner(v);
    return nodes_[v.id()].value;
}

bool Graph::requires_grad(const Var& v) const {
    check_owner(v);
    return nodes_[v.id()].requires_grad;
}

Var Graph::record(Op op, Tensor value, std::vector<std::size_t> inputs, double scalar, std::size_t pad) {
    require_finite(value, "forward");
    bool rg = false;
    for (auto i : inputs) rg = rg || nodes_[i].requires_grad;
    nodes_.push_back({rg ? op : Op::Constant, std::move(value), rg ? std::move(inputs) : std::vector<std::size_t>{},
                      rg, scalar, pad});
    return Var(this, nodes_.size() - 1);
}

Gradients Graph::backward(const Var& output) const {
    check_owner(output);
    const Node& out = nodes_[output.id()];
    if (out.value.size() != 1 || out.value.rank() > 1) {
        throw ShapeError("backward: output must be scalar, got " + to_string(out.value.shape()));
    }
    std::vector<Tensor> grads(output.id() + 1);
    std::vector<bool> has_grad(output.id() + 1, false);
    grads[output.id()] = Tensor(out.value.shape(), 1.0);
    has_grad[output.id()] = true;

    for (std::size_t i = output.id() + 1; i-- > 0;) {
        const Node& node = nodes_[i];
        if (!has_grad[i] || !node.requires_grad || node.op == Op::Leaf) continue;
        propagate(node, grads[i], grads, has_grad);
        grads[i] = Tensor();
    }

    Gradients result;
    result.graph_ = this;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].op != Op::Leaf) continue;
        if (i <= output.id() && has_grad[i]) {
            result.grads_.emplace(i, std::move(grads[i]));
        } else {
            result.grads_.emplace(i, Tensor(nodes_[i].value.shape(), 0.0));
        }
    }
    return result;
}

void Graph::propagate(const Node& node, const Tensor& g, std::vector<Tensor>& grads,
                      std::vector<bool>& has_grad) const {
    auto accumulate = [&](std::size_t id, const Tensor& contrib) {
        if (!nodes_[id].requires_grad) return;
        if (!has_grad[id]) {
            grads[id] = contrib;
            has_grad[id] = true;
        } else {
            auto dst = grads[id].data();
            auto src = contrib.data();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
    };
    auto wants = [&](std::size_t id) { return nodes_[id].requires_grad; };

    switch (node.op) {
        case Op::Leaf:
        case Op::Constant:
            return;
        case Op::Add:
            accumulate(node.inputs[0], g);
            accumulate(node.inputs[1], g);
            return;
        case Op::Sub:
            accumulate(node.inputs[0], g);
            if (wants(node.inputs[1])) accumulate(node.inputs[1], -1.0 * g);
            return;
        case Op::Mul: {
            const Tensor& a = nodes_[node.inputs[0]].value;
            const Tensor& b = nodes_[node.inputs[1]].value;
            if (wants(node.inputs[0])) {
                Tensor ga(g.shape());
                for (std::size_t k = 0; k < g.size(); ++k) ga[k] = g[k] * b[k];
                accumulate(node.inputs[0], ga);
            }
            if (wants(node.inputs[1])) {
                Tensor gb(g.shape());
                for (std::size_t k = 0; k < g.size(); ++k) gb[k] = g[k] * a[k];
                accumulate(node.inputs[1], gb);
            }
            return;
        }
        case Op::Scale:
            accumulate(node.inputs[0], node.scalar * g);
            return;
        case Op::MatMul: {
            const Tensor& a = nodes_[node.inputs[0]].value;
            const Tensor& b = nodes_[node.inputs[1]].value;
            const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
            if (wants(node.inputs[0])) {
                Tensor ga(a.shape());
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b[p * n + j];
                        ga[i * k + p] = acc;
                    }
                accumulate(node.inputs[0], ga);
            }
            if (wants(node.inputs[1])) {
                Tensor gb(b.shape());
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = a[i * k + p];
                        for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
                    }
                accumulate(node.inputs[1], gb);
            }
            return;
        }
        case Op::Conv2d: {
            const Tensor& in = nodes_[node.inputs[0]].value;
            const Tensor& k = nodes_[node.inputs[1]].value;
            const ConvDims d = conv_dims(in.shape(), k.shape(), node.pad);
            const double* kp = k.data().data();
            const double* gp = g.data().data();
            if (wants(node.inputs[0])) {
                Tensor gin(in.shape());
                double* gi = gin.data().data();
                for_each_tap(d, [&](std::size_t o, std::size_t i, std::size_t tap) {
                    const double* go = gp + o * d.cout;
                    const double* kt = kp + tap * d.cin * d.cout;
                    double* dst = gi + i * d.cin;
                    for (std::size_t ci = 0; ci < d.cin; ++ci) {
                        const double* kr = kt + ci * d.cout;
                        double acc = 0.0;
                        for (std::size_t co = 0; co < d.cout; ++co) acc += go[co] * kr[co];
                        dst[ci] += acc;
                    }
                });
                accumulate(node.inputs[0], gin);
            }
            if (wants(node.inputs[1])) {
                Tensor gk(k.shape());
                double* gkp = gk.data().data();
                const double* ip = in.data().data();
                for_each_tap(d, [&](std::size_t o, std::size_t i, std::size_t tap) {
                    const double* go = gp + o * d.cout;
                    const double* src = ip + i * d.cin;
                    double* kt = gkp + tap * d.cin * d.cout;
                    for (std::size_t ci = 0; ci < d.cin; ++ci)
                        for (std::size_t co = 0; co < d.cout; ++co) kt[ci * d.cout + co] += src[ci] * go[co];
                });
                accumulate(node.inputs[1], gk);
            }
            return;
        }
        case Op::Tanh: {
            Tensor ga(g.shape());
            for (std::size_t k = 0; k < g.size(); ++k) {
                const double t = node.value[k];
                ga[k] = g[k] * (1.0 - t * t);
            }
            accumulate(node.inputs[0], ga);
            return;
        }
        case Op::Softplus: {
            const Tensor& a = nodes_[node.inputs[0]].value;
            Tensor ga(g.shape());
            for (std::size_t k = 0; k < g.size(); ++k) ga[k] = g[k] * sigmoid(a[k]);
            accumulate(node.inputs[0], ga);
            return;
        }
        case Op::Sum:
        case Op::Mean: {
            const Tensor& a = nodes_[node.inputs[0]].value;
            const double v = node.op == Op::Sum ? g.item() : g.item() / static_cast<double>(a.size());
            accumulate(node.inputs[0], Tensor(a.shape(), v));
            return;
        }
        case Op::Broadcast: {
            const Tensor& a = nodes_[node.inputs[0]].value;
            const auto map = broadcast_map(a.shape(), node.value.shape());
            Tensor ga(a.shape());
            for (std::size_t k = 0; k < map.size(); ++k) ga[map[k]] += g[k];
            accumulate(node.inputs[0], ga);
            return;
        }
        case Op::Reshape:
            accumulate(node.inputs[0], g.reshaped(nodes_[node.inputs[0]].value.shape()));
            return;
    }
}

Var add(const Var& a, const Var& b) {
    return a.graph().record(Op::Add, a.value() + b.value(), {a.id(), b.id()});
}

Var sub(const Var& a, const Var& b) {
    return a.graph().record(Op::Sub, a.value() - b.value(), {a.id(), b.id()});
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] *= bv[k];
    return a.graph().record(Op::Mul, std::move(out), {a.id(), b.id()});
}

Var scale(const Var& a, double s) {
    if (!std::isfinite(s)) throw NumericError("scale: non-finite factor");
    return a.graph().record(Op::Scale, s * a.value(), {a.id()}, s);
}

Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
        throw ShapeError("matmul: incompatible shapes " + to_string(av.shape()) + " x " + to_string(bv.shape()));
    }
    const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
    Tensor out(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double x = av[i * k + p];
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * bv[p * n + j];
        }
    return a.graph().record(Op::MatMul, std::move(out), {a.id(), b.id()});
}

Var conv2d(const Var& input, const Var& kernel, std::size_t pad) {
    const Tensor& in = input.value();
    const Tensor& k = kernel.value();
    const ConvDims d = conv_dims(in.shape(), k.shape(), pad);
    Tensor out(Shape{d.oh, d.ow, d.cout});
    double* op = out.data().data();
    const double* ip = in.data().data();
    const double* kp = k.data().data();
    for_each_tap(d, [&](std::size_t o, std::size_t i, std::size_t tap) {
        double* dst = op + o * d.cout;
        const double* src = ip + i * d.cin;
        const double* kt = kp + tap * d.cin * d.cout;
        for (std::size_t ci = 0; ci < d.cin; ++ci) {
            const double v = src[ci];
            const double* kr = kt + ci * d.cout;
            for (std::size_t co = 0; co < d.cout; ++co) dst[co] += v * kr[co];
        }
    });
    return input.graph().record(Op::Conv2d, std::move(out), {input.id(), kernel.id()}, 0.0, pad);
}

Var tanh(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.data()) v = std::tanh(v);
    return a.graph().record(Op::Tanh, std::move(out), {a.id()});
}

Var softplus(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.data()) v = softplus_value(v);
    return a.graph().record(Op::Softplus, std::move(out), {a.id()});
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return a.graph().record(Op::Sum, Tensor::scalar(s), {a.id()});
}

Var mean(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return a.graph().record(Op::Mean, Tensor::scalar(s / static_cast<double>(a.value().size())), {a.id()});
}

Var broadcast(const Var& a, const Shape& shape) {
    const auto map = broadcast_map(a.shape(), shape);
    Tensor out(shape);
    const Tensor& av = a.value();
    for (std::size_t k = 0; k < map.size(); ++k) out[k] = av[map[k]];
    return a.graph().record(Op::Broadcast, std::move(out), {a.id()});
}

Var reshape(const Var& a, const Shape& shape) {
    return a.graph().record(Op::Reshape, a.value().reshaped(shape), {a.id()});
}

Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }
Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace tdae::nd
