#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "persona/errors.hpp"
#include "persona/matrix.hpp"

namespace persona {

/// Named trainable tensor: value plus accumulated gradient of identical shape.
struct ParamTensor {
    Matrix value;
    Matrix grad;
    std::string name;

    ParamTensor() = default;
    ParamTensor(Matrix v, std::string n)
        : value(std::move(v)), grad(value.rows(), value.cols(), 0.0), name(std::move(n)) {}

    void zero_grad() { grad.fill(0.0); }
};

inline void zero_grads(std::vector<ParamTensor*>& params) {
    for (auto* p : params) p->zero_grad();
}

namespace ag {

/// One tape node. Creation order doubles as a topological order because
/// parents always exist before their children.
struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;
    ParamTensor* param = nullptr;
    std::uint64_t order = 0;

    void ensure_grad() {
        if (grad.empty()) grad = Matrix(value.rows(), value.cols(), 0.0);
    }
};

/// Handle to a tape node. Cheap to copy; the graph lives as long as any
/// handle into it does.
class Value {
public:
    Value() = default;
    explicit Value(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    const Matrix& mat() const { return node_->value; }
    double scalar() const {
        if (node_->value.size() != 1) throw shape_error("scalar(): node is not 1x1");
        return node_->value.at(0);
    }
    std::size_t rows() const { return node_->value.rows(); }
    std::size_t cols() const { return node_->value.cols(); }
    std::shared_ptr<Node> node() const { return node_; }
    bool valid() const { return node_ != nullptr; }

    /// Reverse pass from this (scalar) node; accumulates into ParamTensor grads.
    void backward() const {
        if (node_->value.size() != 1) throw shape_error("backward(): root must be scalar");
        std::vector<Node*> topo;
        std::unordered_set<Node*> seen;
        std::vector<Node*> stack{node_.get()};
        while (!stack.empty()) {
            Node* n = stack.back();
            stack.pop_back();
            if (!seen.insert(n).second) continue;
            topo.push_back(n);
            for (auto& p : n->parents) stack.push_back(p.get());
        }
        std::sort(topo.begin(), topo.end(),
                  [](const Node* a, const Node* b) { return a->order > b->order; });
        node_->ensure_grad();
        node_->grad.at(0) = 1.0;
        for (Node* n : topo) {
            if (n->grad.empty()) continue;
            if (n->backprop) n->backprop(*n);
            if (n->param) {
                for (std::size_t i = 0; i < n->grad.size(); ++i)
                    n->param->grad.at(i) += n->grad.at(i);
            }
        }
    }

private:
    std::shared_ptr<Node> node_;
};

inline std::uint64_t& node_counter() {
    static thread_local std::uint64_t c = 0;
    return c;
}

inline std::shared_ptr<Node> make_node(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->order = ++node_counter();
    if (!n->value.all_finite()) throw numeric_error("autograd: non-finite value produced");
    return n;
}

inline Value constant(Matrix m) { return Value(make_node(std::move(m))); }

inline Value leaf(ParamTensor& p) {
    auto n = make_node(p.value);
    n->param = &p;
    return Value(n);
}

namespace detail {
inline void accumulate(Node& parent, const Matrix& g) {
    parent.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) parent.grad.at(i) += g.at(i);
}
}  // namespace detail

inline Value matmul(const Value& a, const Value& b) {
    auto n = make_node(persona::matmul(a.mat(), b.mat()));
    n->parents = {a.node(), b.node()};
    n->backprop = [](Node& self) {
        Node& A = *self.parents[0];
        Node& B = *self.parents[1];
        detail::accumulate(A, persona::matmul(self.grad, transpose(B.value)));
        detail::accumulate(B, persona::matmul(transpose(A.value), self.grad));
    };
    return Value(n);
}

inline Value add(const Value& a, const Value& b) {
    auto n = make_node(persona::add(a.mat(), b.mat()));
    n->parents = {a.node(), b.node()};
    n->backprop = [](Node& self) {
        detail::accumulate(*self.parents[0], self.grad);
        detail::accumulate(*self.parents[1], self.grad);
    };
    return Value(n);
}

inline Value sub(const Value& a, const Value& b) {
    auto n = make_node(persona::sub(a.mat(), b.mat()));
    n->parents = {a.node(), b.node()};
    n->backprop = [](Node& self) {
        detail::accumulate(*self.parents[0], self.grad);
        detail::accumulate(*self.parents[1], persona::scale(self.grad, -1.0));
    };
    return Value(n);
}

inline Value hadamard(const Value& a, const Value& b) {
    auto n = make_node(persona::hadamard(a.mat(), b.mat()));
    n->parents = {a.node(), b.node()};
    n->backprop = [](Node& self) {
        detail::accumulate(*self.parents[0], persona::hadamard(self.grad, self.parents[1]->value));
        detail::accumulate(*self.parents[1], persona::hadamard(self.grad, self.parents[0]->value));
    };
    return Value(n);
}

/// Elementwise a*x + b with scalar constants.
inline Value affine(const Value& x, double a, double b) {
    Matrix v = x.mat();
    for (std::size_t i = 0; i < v.size(); ++i) v.at(i) = a * v.at(i) + b;
    auto n = make_node(std::move(v));
    n->parents = {x.node()};
    n->backprop = [a](Node& self) {
        detail::accumulate(*self.parents[0], persona::scale(self.grad, a));
    };
    return Value(n);
}

inline Value relu(const Value& x) {
    Matrix v = x.mat();
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v.at(i) < 0.0) v.at(i) = 0.0;
    auto n = make_node(std::move(v));
    n->parents = {x.node()};
    n->backprop = [](Node& self) {
        Matrix g = self.grad;
        const Matrix& in = self.parents[0]->value;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (in.at(i) <= 0.0) g.at(i) = 0.0;
        detail::accumulate(*self.parents[0], g);
    };
    return Value(n);
}

inline Value sigmoid(const Value& x) {
    Matrix v = x.mat();
    for (std::size_t i = 0; i < v.size(); ++i) v.at(i) = 1.0 / (1.0 + std::exp(-v.at(i)));
    auto n = make_node(std::move(v));
    n->parents = {x.node()};
    n->backprop = [](Node& self) {
        Matrix g = self.grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = self.value.at(i);
            g.at(i) *= s * (1.0 - s);
        }
        detail::accumulate(*self.parents[0], g);
    };
    return Value(n);
}

inline Value tanh_act(const Value& x) {
    Matrix v = x.mat();
    for (std::size_t i = 0; i < v.size(); ++i) v.at(i) = std::tanh(v.at(i));
    auto n = make_node(std::move(v));
    n->parents = {x.node()};
    n->backprop = [](Node& self) {
        Matrix g = self.grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double t = self.value.at(i);
            g.at(i) *= 1.0 - t * t;
        }
        detail::accumulate(*self.parents[0], g);
    };
    return Value(n);
}

/// Hard clamp into [-bound, bound] with straight-through interior gradient:
/// 1 where |x| < bound, 0 where |x| >= bound.
inline Value clamp_st(const Value& x, double bound) {
    auto n = make_node(clamp_entries(x.mat(), bound));
    n->parents = {x.node()};
    n->backprop = [bound](Node& self) {
        Matrix g = self.grad;
        const Matrix& in = self.parents[0]->value;
        for (std::size_t i = 0; i < g.size(); ++i)
            if (std::abs(in.at(i)) >= bound) g.at(i) = 0.0;
        detail::accumulate(*self.parents[0], g);
    };
    return Value(n);
}

inline Value reshape(const Value& x, std::size_t r, std::size_t c) {
    auto n = make_node(x.mat().reshaped(r, c));
    n->parents = {x.node()};
    n->backprop = [](Node& self) {
        const Matrix& p = self.parents[0]->value;
        detail::accumulate(*self.parents[0], self.grad.reshaped(p.rows(), p.cols()));
    };
    return Value(n);
}

/// Row i of a parameter matrix (embedding lookup), as a 1xC row vector.
inline Value row(const Value& table, std::size_t r) {
    const Matrix& t = table.mat();
    if (r >= t.rows()) throw invalid_input_error("row: index out of range");
    Matrix v(1, t.cols());
    for (std::size_t j = 0; j < t.cols(); ++j) v(0, j) = t(r, j);
    auto n = make_node(std::move(v));
    n->parents = {table.node()};
    n->backprop = [r](Node& self) {
        Node& parent = *self.parents[0];
        parent.ensure_grad();
        for (std::size_t j = 0; j < self.grad.cols(); ++j)
            parent.grad(r, j) += self.grad(0, j);
    };
    return Value(n);
}

/// Mean of the selected rows of an embedding table, as a 1xC vector.
inline Value rows_mean(const Value& table, const std::vector<std::uint32_t>& ids) {
    if (ids.empty()) throw invalid_input_error("rows_mean: empty id list");
    const Matrix& t = table.mat();
    Matrix v(1, t.cols());
    for (std::uint32_t id : ids) {
        if (id >= t.rows()) throw data_error("rows_mean: id out of vocabulary");
        for (std::size_t j = 0; j < t.cols(); ++j) v(0, j) += t(id, j);
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (std::size_t j = 0; j < t.cols(); ++j) v(0, j) *= inv;
    auto n = make_node(std::move(v));
    n->parents = {table.node()};
    n->backprop = [ids, inv](Node& self) {
        Node& parent = *self.parents[0];
        parent.ensure_grad();
        for (std::uint32_t id : ids)
            for (std::size_t j = 0; j < self.grad.cols(); ++j)
                parent.grad(id, j) += self.grad(0, j) * inv;
    };
    return Value(n);
}

/// Pack scalar (1x1) nodes into a single 1xN row vector.
inline Value concat_scalars(const std::vector<Value>& xs) {
    if (xs.empty()) throw invalid_input_error("concat_scalars: empty input");
    auto n = make_node(Matrix(1, xs.size()));
    n->parents.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].mat().size() != 1) throw shape_error("concat_scalars: non-scalar element");
        n->value(0, i) = xs[i].mat().at(0);
        n->parents.push_back(xs[i].node());
    }
    n->backprop = [](Node& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            Matrix g(1, 1, self.grad(0, i));
            detail::accumulate(*self.parents[i], g);
        }
    };
    return Value(n);
}

inline Value dot(const Value& a, const Value& b) {
    const Matrix& x = a.mat();
    const Matrix& y = b.mat();
    if (!x.same_shape(y)) throw shape_error("dot: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x.at(i) * y.at(i);
    auto n = make_node(Matrix(1, 1, s));
    n->parents = {a.node(), b.node()};
    n->backprop = [](Node& self) {
        const double g = self.grad.at(0);
        detail::accumulate(*self.parents[0], persona::scale(self.parents[1]->value, g));
        detail::accumulate(*self.parents[1], persona::scale(self.parents[0]->value, g));
    };
    return Value(n);
}

inline Value sum_all(const Value& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.mat().size(); ++i) s += x.mat().at(i);
    auto n = make_node(Matrix(1, 1, s));
    n->parents = {x.node()};
    n->backprop = [](Node& self) {
        const Matrix& p = self.parents[0]->value;
        detail::accumulate(*self.parents[0], Matrix(p.rows(), p.cols(), self.grad.at(0)));
    };
    return Value(n);
}

/// Softmax cross-entropy of a 1xC logits vector against a target index.
inline Value cross_entropy(const Value& logits, std::size_t target) {
    const Matrix& z = logits.mat();
    if (z.rows() != 1 || z.cols() < 2) throw invalid_input_error("cross_entropy: need 1xC logits, C >= 2");
    if (target >= z.cols()) throw invalid_input_error("cross_entropy: target out of range");
    double mx = z.at(0);
    for (std::size_t i = 1; i < z.cols(); ++i) mx = std::max(mx, z.at(i));
    double lse = 0.0;
    for (std::size_t i = 0; i < z.cols(); ++i) lse += std::exp(z.at(i) - mx);
    lse = mx + std::log(lse);
    auto n = make_node(Matrix(1, 1, lse - z.at(target)));
    n->parents = {logits.node()};
    n->backprop = [target](Node& self) {
        const Matrix& z = self.parents[0]->value;
        double mx = z.at(0);
        for (std::size_t i = 1; i < z.cols(); ++i) mx = std::max(mx, z.at(i));
        double denom = 0.0;
        for (std::size_t i = 0; i < z.cols(); ++i) denom += std::exp(z.at(i) - mx);
        Matrix g(1, z.cols());
        const double go = self.grad.at(0);
        for (std::size_t i = 0; i < z.cols(); ++i) {
            double p = std::exp(z.at(i) - mx) / denom;
            g(0, i) = go * (p - (i == target ? 1.0 : 0.0));
        }
        detail::accumulate(*self.parents[0], g);
    };
    return Value(n);
}

}  // namespace ag
}  // namespace persona
