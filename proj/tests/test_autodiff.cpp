// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "grad_suite.hpp"
#include "mekd/autodiff.hpp"
#include "mekd/optim.hpp"
#include "oracles.hpp"

using namespace mekd;

namespace {

constexpr int kShapesPerOp = 20;
constexpr double kRelTol = 1e-4;

TEST(Autodiff, EveryOpMatchesCentralDifferences) {
    std::mt19937_64 rng(2024);
    for (const auto& c : oracle::gradient_cases()) {
        for (int trial = 0; trial < kShapesPerOp; ++trial) {
            const double err = oracle::fd_max_rel_error(c.fn, c.inputs(rng));
            ASSERT_LT(err, kRelTol) << c.name << " trial " << trial;
        }
    }
}

TEST(Autodiff, SquareAtThreeHasGradientSix) {
    ad::Graph g;
    auto x = g.variable(Tensor::scalar(3.0));
    g.backward(ad::square(x));
    EXPECT_DOUBLE_EQ(x.grad().item(), 6.0);
}

TEST(Autodiff, IdentityAndLinearIdentityForward) {
    ad::Graph g;
    auto x = g.constant(Tensor::row({3.0, 4.0}));
    auto w = g.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    auto b = g.constant(Tensor::row({0.0, 0.0}));
    const auto y = ad::linear(x, w, b).value();
    EXPECT_EQ(y.values()[0], 3.0);
    EXPECT_EQ(y.values()[1], 4.0);
}

TEST(Autodiff, SoftmaxOfZeroLinearIsUniform) {
    ad::Graph g;
    auto x = g.constant(Tensor::matrix(1, 2, {0.7, -2.0}));
    auto y = ad::softmax(ad::linear(x, g.constant(Tensor(Shape{2, 2}, 0.0)), g.constant(Tensor(Shape{2}, 0.0))));
    EXPECT_DOUBLE_EQ(y.value().values()[0], 0.5);
    EXPECT_DOUBLE_EQ(y.value().values()[1], 0.5);
}

TEST(Autodiff, KldGradientVanishesAtMatchingLogits) {
    ad::Graph g;
    const Tensor s = Tensor::matrix(1, 3, {0.2, -1.0, 0.5});
    auto logits = g.variable(s);
    const Tensor p = ad::softmax(g.constant(s)).value();
    auto pc = g.constant(p);
    // sum p log p - sum p log softmax(s)
    auto loss = ad::neg(ad::sum(ad::mul(pc, ad::log_softmax(logits))));
    g.backward(loss);
    for (double v : logits.grad().values()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Autodiff, BackwardBeforeForwardIsRejected) {
    ad::Graph g;
    ad::Var nothing;
    EXPECT_THROW(g.backward(nothing), ContractError);
    ad::Graph other;
    auto x = other.variable(Tensor::scalar(1.0));
    EXPECT_THROW(g.backward(x), ContractError);
}

TEST(Autodiff, NonScalarLossIsRejected) {
    ad::Graph g;
    auto x = g.variable(Tensor::row({1.0, 2.0}));
    EXPECT_THROW(g.backward(ad::square(x)), ShapeError);
}

TEST(Autodiff, StaleVarAfterClearIsRejected) {
    ad::Graph g;
    auto x = g.variable(Tensor::scalar(2.0));
    auto y = ad::square(x);
    g.clear();
    EXPECT_THROW(g.backward(y), ContractError);
}

TEST(Autodiff, NonFiniteForwardNamesTheNode) {
    ad::Graph g;
    auto x = g.variable(Tensor::row({-1.0, 2.0}));
    try {
        ad::log(x);
        FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& e) {
        EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
    }
    EXPECT_THROW(g.constant(Tensor::row({NAN})), NonFiniteError);
}

TEST(Autodiff, ShapeMismatchIsRejected) {
    ad::Graph g;
    auto a = g.variable(Tensor(Shape{2, 3}, 1.0));
    auto b = g.variable(Tensor(Shape{3, 2}, 1.0));
    EXPECT_THROW(ad::add(a, b), ShapeError);
    EXPECT_THROW(ad::matmul(a, a), ShapeError);
}

TEST(Autodiff, ChainCompositionMatchesMergedGraph) {
    // backward of f(g(x)) in one graph vs vector-Jacobian products chained
    // across two graphs.
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor x0 = oracle::random_tensor(Shape{3, 4}, rng);
        const Tensor w = oracle::random_tensor(Shape{4, 5}, rng);

        ad::Graph merged;
        auto xm = merged.variable(x0);
        merged.backward(ad::sum(ad::square(ad::tanh(ad::matmul(xm, merged.constant(w))))));

        ad::Graph inner;
        auto xi = inner.variable(x0);
        auto hi = ad::tanh(ad::matmul(xi, inner.constant(w)));
        ad::Graph outer;
        auto ho = outer.variable(hi.value());
        outer.backward(ad::sum(ad::square(ho)));
        inner.backward_from(hi, ho.grad());

        for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(xm.grad()[i], xi.grad()[i], 1e-14);
    }
}

TEST(Autodiff, GradientsAccumulateAcrossUses) {
    ad::Graph g;
    auto x = g.variable(Tensor::scalar(2.0));
    g.backward(ad::add(ad::square(x), ad::scale(x, 3.0)));
    EXPECT_DOUBLE_EQ(x.grad().item(), 7.0);
}

TEST(Autodiff, ParameterLeavesReceiveGradients) {
    ad::Parameter p{"w", Tensor::row({1.0, -2.0}), {}};
    ad::Graph g;
    g.backward(ad::sum(ad::square(g.param(p))));
    ASSERT_TRUE(p.has_grad());
    EXPECT_DOUBLE_EQ(p.grad[0], 2.0);
    EXPECT_DOUBLE_EQ(p.grad[1], -4.0);
}

// ---------------------------------------------------------------------------
// Optimizer

TEST(Sgd, PlainStep) {
    ad::Parameter p{"p", Tensor::scalar(1.0), Tensor::scalar(0.5)};
    optim::Sgd opt({&p}, 0.1, 0.0);
    opt.step();
    EXPECT_DOUBLE_EQ(p.value.item(), 0.95);
}

TEST(Sgd, ZeroGradientLeavesParametersUnchanged) {
    ad::Parameter p{"p", Tensor::row({1.0, -3.0}), Tensor(Shape{2}, 0.0)};
    optim::Sgd opt({&p}, 0.1, 0.9);
    opt.step();
    opt.step();
    EXPECT_EQ(p.value, Tensor::row({1.0, -3.0}));
}

TEST(Sgd, MomentumRecurrence) {
    ad::Parameter p{"p", Tensor::scalar(1.0), Tensor::scalar(1.0)};
    optim::Sgd opt({&p}, 0.1, 0.9);
    opt.step();
    opt.step();
    EXPECT_NEAR(p.value.item(), 0.71, 1e-15);
    EXPECT_EQ(opt.velocities()[0].shape(), p.value.shape());
}

TEST(Sgd, MissingGradientIsRejected) {
    ad::Parameter p{"p", Tensor::scalar(1.0), {}};
    optim::Sgd opt({&p}, 0.1);
    EXPECT_THROW(opt.step(), ContractError);
}

TEST(MultistepLr, Schedule) {
    const std::vector<std::size_t> ms{150, 180, 210};
    EXPECT_DOUBLE_EQ(optim::multistep_lr(0, 0.1, ms, 0.1), 0.1);
    EXPECT_NEAR(optim::multistep_lr(160, 0.1, ms, 0.1), 0.01, 1e-15);
    EXPECT_NEAR(optim::multistep_lr(220, 0.1, ms, 0.1), 0.0001, 1e-15);
    EXPECT_NEAR(optim::multistep_lr(150, 0.1, ms, 0.1), 0.01, 1e-15);
}

TEST(ClipGradNorm, ScalesToMaximum) {
    ad::Parameter a{"a", Tensor::row({0, 0}), Tensor::row({3.0, 0.0})};
    ad::Parameter b{"b", Tensor::scalar(0), Tensor::scalar(4.0)};
    std::vector<ad::Parameter*> ps{&a, &b};
    const double norm = optim::clip_grad_norm(ps, 1.0);
    EXPECT_DOUBLE_EQ(norm, 5.0);
    EXPECT_NEAR(a.grad[0], 0.6, 1e-15);
    EXPECT_NEAR(b.grad[0], 0.8, 1e-15);
}

}  // namespace
