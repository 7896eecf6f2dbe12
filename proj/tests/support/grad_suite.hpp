// SPDX-License-Identifier: Apache-2.0
// Finite-difference cases for every differentiable op, shared by the unit
// tests and the acceptance runner.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"

namespace oracle {

struct OpCase {
    std::string name;
    std::function<std::vector<Tensor>(std::mt19937_64&)> inputs;
    ScalarFn fn;
};

/// Reduces any output to a scalar through a fixed random projection.
inline mekd::ad::Var project(mekd::ad::Graph& g, mekd::ad::Var out) {
    std::mt19937_64 rng(0x5eed);
    return mekd::ad::sum(mekd::ad::mul(out, g.constant(random_tensor(out.shape(), rng))));
}

inline std::vector<OpCase> gradient_cases() {
    namespace ad = mekd::ad;
    using V = std::vector<ad::Var>;
    using T = std::vector<Tensor>;
    auto mat = [](std::mt19937_64& r) { return Shape{draw(r, 1, 5), draw(r, 1, 6)}; };
    auto unary_case = [&](std::string name, std::function<ad::Var(ad::Var)> op, double lo, double hi,
                          std::initializer_list<double> kinks = {}) {
        std::vector<double> k(kinks);
        return OpCase{name,
                      [=](std::mt19937_64& r) {
                          Tensor t = random_tensor(mat(r), r, lo, hi);
                          for (double kink : k) avoid_kinks(t, {kink});
                          return T{t};
                      },
                      [op](ad::Graph& g, const V& v) { return project(g, op(v[0])); }};
    };

    std::vector<OpCase> cases;
    cases.push_back({"add",
                     [=](std::mt19937_64& r) {
                         const auto s = mat(r);
                         return T{random_tensor(s, r), random_tensor(s, r)};
                     },
                     [](ad::Graph& g, const V& v) { return project(g, ad::add(v[0], v[1])); }});
    cases.push_back({"add-row-broadcast",
                     [=](std::mt19937_64& r) {
                         const auto s = mat(r);
                         return T{random_tensor(s, r), random_tensor(Shape{s[1]}, r)};
                     },
                     [](ad::Graph& g, const V& v) { return project(g, ad::add(v[0], v[1])); }});
    cases.push_back({"sub",
                     [=](std::mt19937_64& r) {
                         const auto s = mat(r);
                         return T{random_tensor(s, r), random_tensor(s, r)};
                     },
                     [](ad::Graph& g, const V& v) { return project(g, ad::sub(v[0], v[1])); }});
    cases.push_back({"mul",
                     [=](std::mt19937_64& r) {
                         const auto s = mat(r);
                         return T{random_tensor(s, r), random_tensor(s, r)};
                     },
                     [](ad::Graph& g, const V& v) { return project(g, ad::mul(v[0], v[1])); }});
    cases.push_back(unary_case("scale", [](ad::Var a) { return ad::scale(a, -1.7); }, -1, 1));
    cases.push_back(unary_case("add-scalar", [](ad::Var a) { return ad::add_scalar(a, 0.3); }, -1, 1));
    cases.push_back(unary_case("affine", [](ad::Var a) { return ad::affine(a, 0.5, 0.5); }, -1, 1));
    cases.push_back(unary_case("neg", [](ad::Var a) { return ad::neg(a); }, -1, 1));
    cases.push_back({"matmul",
                     [=](std::mt19937_64& r) {
                         const std::size_t m = draw(r, 1, 5), k = draw(r, 1, 5), n = draw(r, 1, 5);
                         return T{random_tensor(Shape{m, k}, r), random_tensor(Shape{k, n}, r)};
                     },
                     [](ad::Graph& g, const V& v) { return project(g, ad::matmul(v[0], v[1])); }});
    cases.push_back(unary_case("transpose", [](ad::Var a) { return ad::transpose(a); }, -1, 1));
    cases.push_back({"linear",
                     [=](std::mt19937_64& r) {
                         const std::size_t m = draw(r, 1, 5), k = draw(r, 1, 5), n = draw(r, 1, 5);
                         return T{random_tensor(Shape{m, k}, r), random_tensor(Shape{k, n}, r),
                                  random_tensor(Shape{n}, r)};
                     },
                     [](ad::Graph& g, const V& v) { return project(g, ad::linear(v[0], v[1], v[2])); }});
    cases.push_back(unary_case("relu", [](ad::Var a) { return ad::relu(a); }, -1, 1, {0.0}));
    cases.push_back(unary_case("leaky-relu", [](ad::Var a) { return ad::leaky_relu(a, 0.2); }, -1, 1, {0.0}));
    cases.push_back(unary_case("tanh", [](ad::Var a) { return ad::tanh(a); }, -2, 2));
    cases.push_back(unary_case("sigmoid", [](ad::Var a) { return ad::sigmoid(a); }, -3, 3));
    cases.push_back(unary_case("log", [](ad::Var a) { return ad::log(a); }, 0.2, 3));
    cases.push_back(unary_case("exp", [](ad::Var a) { return ad::exp(a); }, -2, 2));
    cases.push_back(unary_case("abs", [](ad::Var a) { return ad::abs(a); }, -1, 1, {0.0}));
    cases.push_back(unary_case("square", [](ad::Var a) { return ad::square(a); }, -2, 2));
    cases.push_back(
        unary_case("clamp", [](ad::Var a) { return ad::clamp(a, -0.5, 0.5); }, -1, 1, {-0.5, 0.5}));
    cases.push_back(unary_case("softmax", [](ad::Var a) { return ad::softmax(a); }, -3, 3));
    cases.push_back(unary_case("log-softmax", [](ad::Var a) { return ad::log_softmax(a); }, -3, 3));
    cases.push_back(unary_case("sum", [](ad::Var a) { return ad::sum(a); }, -1, 1));
    cases.push_back(unary_case("mean", [](ad::Var a) { return ad::mean(a); }, -1, 1));
    cases.push_back(unary_case("row-sum", [](ad::Var a) { return ad::row_sum(a); }, -1, 1));
    cases.push_back(unary_case("row-l2-norm", [](ad::Var a) { return ad::row_l2_norm(a); }, 0.1, 1));
    cases.push_back({"concat-rows",
                     [=](std::mt19937_64& r) {
                         const std::size_t c = draw(r, 1, 5);
                         return T{random_tensor(Shape{draw(r, 1, 4), c}, r), random_tensor(Shape{draw(r, 1, 4), c}, r)};
                     },
                     [](ad::Graph& g, const V& v) { return project(g, ad::concat(v[0], v[1], 0)); }});
    cases.push_back({"concat-cols",
                     [=](std::mt19937_64& r) {
                         const std::size_t m = draw(r, 1, 5);
                         return T{random_tensor(Shape{m, draw(r, 1, 4)}, r), random_tensor(Shape{m, draw(r, 1, 4)}, r)};
                     },
                     [](ad::Graph& g, const V& v) { return project(g, ad::concat(v[0], v[1], 1)); }});
    return cases;
}

}  // namespace oracle
