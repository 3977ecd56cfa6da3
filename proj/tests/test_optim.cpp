#include <gtest/gtest.h>

#include <cmath>

#include "persona/autograd.hpp"
#include "persona/optim.hpp"

using namespace persona;

TEST(Optimizer, SgdStepHandOracle) {
    ParamTensor p(Matrix(1, 2, {1.0, 2.0}), "p");
    p.grad = Matrix(1, 2, {0.5, -1.0});
    std::vector<ParamTensor*> params{&p};
    Optimizer opt(OptimizerKind::sgd, 0.1);
    opt.step(params);
    EXPECT_DOUBLE_EQ(p.value.at(0), 0.95);
    EXPECT_DOUBLE_EQ(p.value.at(1), 2.1);
}

TEST(Optimizer, AdamFirstStepHandOracle) {
    // After one step with grad g: m=(1-b1)g, v=(1-b2)g^2, mhat=g, vhat=g^2,
    // so the update is -lr * g / (|g| + eps), i.e. roughly -lr * sign(g).
    ParamTensor p(Matrix(1, 2, {1.0, -3.0}), "p");
    p.grad = Matrix(1, 2, {0.5, -2.0});
    std::vector<ParamTensor*> params{&p};
    Optimizer opt(OptimizerKind::adam, 0.01);
    opt.step(params);
    const double eps = 1e-8;
    EXPECT_NEAR(p.value.at(0), 1.0 - 0.01 * 0.5 / (0.5 + eps), 1e-12);
    EXPECT_NEAR(p.value.at(1), -3.0 - 0.01 * (-2.0) / (2.0 + eps), 1e-12);
}

TEST(Optimizer, AdamSecondStepHandOracle) {
    ParamTensor p(Matrix(1, 1, 0.0), "p");
    std::vector<ParamTensor*> params{&p};
    Optimizer opt(OptimizerKind::adam, 0.1);
    const double g1 = 1.0, g2 = 2.0, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    p.grad = Matrix(1, 1, g1);
    opt.step(params);
    double expect = -0.1 * g1 / (std::abs(g1) + eps);
    EXPECT_NEAR(p.value.at(0), expect, 1e-12);
    p.grad = Matrix(1, 1, g2);
    opt.step(params);
    const double m = b1 * (1 - b1) * g1 + (1 - b1) * g2;
    const double v = b2 * (1 - b2) * g1 * g1 + (1 - b2) * g2 * g2;
    const double mhat = m / (1 - b1 * b1);
    const double vhat = v / (1 - b2 * b2);
    expect -= 0.1 * mhat / (std::sqrt(vhat) + eps);
    EXPECT_NEAR(p.value.at(0), expect, 1e-12);
}

TEST(Optimizer, AdamRejectsChangedParamList) {
    ParamTensor a(Matrix(1, 1, 0.0), "a"), b(Matrix(1, 1, 0.0), "b");
    std::vector<ParamTensor*> one{&a}, two{&a, &b};
    Optimizer opt(OptimizerKind::adam, 0.1);
    opt.step(one);
    EXPECT_THROW(opt.step(two), invalid_input_error);
}

TEST(Optimizer, ShapeMismatchThrows) {
    ParamTensor p(Matrix(2, 2, 0.0), "p");
    p.grad = Matrix(1, 4, 0.0);
    std::vector<ParamTensor*> params{&p};
    Optimizer opt(OptimizerKind::sgd, 0.1);
    EXPECT_THROW(opt.step(params), shape_error);
}

TEST(Optimizer, BadLearningRateThrows) {
    EXPECT_THROW(Optimizer(OptimizerKind::sgd, 0.0), invalid_input_error);
    EXPECT_THROW(Optimizer(OptimizerKind::adam, -1.0), invalid_input_error);
}

TEST(GradCheck, QuadraticExact) {
    // f = sum(x^2): analytic 2x matches central difference to machine precision
    ParamTensor x(Matrix(2, 2, {0.3, -1.2, 0.7, 2.0}), "x");
    std::vector<ParamTensor*> params{&x};
    auto fn = [&]() {
        ag::Value lx = ag::leaf(x);
        ag::Value loss = ag::sum_all(ag::hadamard(lx, lx));
        loss.backward();
        return loss.scalar();
    };
    EXPECT_LT(grad_check(fn, params, 1e-5), 1e-9);
}

TEST(GradCheck, DetectsWrongGradient) {
    // Loss claims zero gradient but value depends on x through a constant copy.
    ParamTensor x(Matrix(1, 1, 1.0), "x");
    std::vector<ParamTensor*> params{&x};
    auto fn = [&]() {
        ag::Value loss = ag::sum_all(ag::hadamard(ag::constant(x.value), ag::constant(x.value)));
        loss.backward();  // no leaf: analytic grad stays 0, numeric is 2x
        return loss.scalar();
    };
    EXPECT_GT(grad_check(fn, params, 1e-5), 1.0);
}

TEST(GradCheck, RestoresAnalyticGradsAndValues) {
    ParamTensor x(Matrix(1, 2, {1.0, -2.0}), "x");
    const Matrix before = x.value;
    std::vector<ParamTensor*> params{&x};
    auto fn = [&]() {
        ag::Value loss = ag::sum_all(ag::leaf(x));
        loss.backward();
        return loss.scalar();
    };
    grad_check(fn, params, 1e-5);
    EXPECT_EQ(x.value, before);
    EXPECT_DOUBLE_EQ(x.grad.at(0), 1.0);
    EXPECT_DOUBLE_EQ(x.grad.at(1), 1.0);
}

TEST(GradCheck, EpsilonRangeEnforced) {
    ParamTensor x(Matrix(1, 1, 1.0), "x");
    std::vector<ParamTensor*> params{&x};
    auto fn = [&]() { return 0.0; };
    EXPECT_THROW(grad_check(fn, params, 1e-8), invalid_input_error);
    EXPECT_THROW(grad_check(fn, params, 1e-2), invalid_input_error);
}
