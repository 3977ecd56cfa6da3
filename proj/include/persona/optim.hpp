#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "persona/autograd.hpp"
#include "persona/errors.hpp"
#include "persona/matrix.hpp"

namespace persona {

enum class OptimizerKind { sgd, adam };

/// SGD / Adam over a ParamTensor list. Moment buffers are keyed by position
/// in the list, so pass the same ordering on every step.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double learning_rate)
        : kind_(kind), lr_(learning_rate) {
        if (!(learning_rate > 0.0)) throw invalid_input_error("Optimizer: learning_rate must be > 0");
    }

    OptimizerKind kind() const { return kind_; }
    double learning_rate() const { return lr_; }
    std::uint64_t step_count() const { return step_count_; }

    void step(std::vector<ParamTensor*>& params) {
        if (kind_ == OptimizerKind::adam && m_.empty()) {
            for (auto* p : params) {
                m_.emplace_back(p->value.rows(), p->value.cols(), 0.0);
                v_.emplace_back(p->value.rows(), p->value.cols(), 0.0);
            }
        }
        if (kind_ == OptimizerKind::adam && m_.size() != params.size())
            throw invalid_input_error("Optimizer: parameter list changed between steps");
        ++step_count_;
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            ParamTensor& p = *params[pi];
            if (!p.value.same_shape(p.grad))
                throw shape_error("optimizer_step: value/grad shape mismatch for " + p.name);
            if (kind_ == OptimizerKind::sgd) {
                for (std::size_t i = 0; i < p.value.size(); ++i)
                    p.value.at(i) -= lr_ * p.grad.at(i);
            } else {
                Matrix& m = m_[pi];
                Matrix& v = v_[pi];
                const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
                const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
                for (std::size_t i = 0; i < p.value.size(); ++i) {
                    const double g = p.grad.at(i);
                    m.at(i) = b1 * m.at(i) + (1.0 - b1) * g;
                    v.at(i) = b2 * v.at(i) + (1.0 - b2) * g * g;
                    const double mhat = m.at(i) / bc1;
                    const double vhat = v.at(i) / bc2;
                    p.value.at(i) -= lr_ * mhat / (std::sqrt(vhat) + eps);
                }
            }
        }
    }

private:
    OptimizerKind kind_;
    double lr_;
    std::uint64_t step_count_ = 0;
    std::vector<Matrix> m_, v_;
};

/// Central-difference gradient check. `fn` must populate grads via backward()
/// when called; it returns the scalar loss. Returns the max relative error
/// |analytic - numeric| / max(1, |analytic|) over all parameter entries.
inline double grad_check(const std::function<double()>& fn,
                         std::vector<ParamTensor*> params, double epsilon) {
    if (!(epsilon >= 1e-7 && epsilon <= 1e-3))
        throw invalid_input_error("grad_check: epsilon out of [1e-7, 1e-3]");
    for (auto* p : params) p->zero_grad();
    const double base = fn();
    if (!std::isfinite(base)) throw numeric_error("grad_check: non-finite loss");
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (auto* p : params) analytic.push_back(p->grad);

    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        ParamTensor& p = *params[pi];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value.at(i);
            p.value.at(i) = saved + epsilon;
            for (auto* q : params) q->zero_grad();
            const double lp = fn();
            p.value.at(i) = saved - epsilon;
            for (auto* q : params) q->zero_grad();
            const double lm = fn();
            p.value.at(i) = saved;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw numeric_error("grad_check: non-finite loss during probing");
            const double numeric = (lp - lm) / (2.0 * epsilon);
            const double a = analytic[pi].at(i);
            const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
            max_rel = std::max(max_rel, rel);
        }
    }
    // restore analytic grads so callers can inspect them
    for (std::size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
    return max_rel;
}

}  // namespace persona
