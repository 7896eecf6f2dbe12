// SPDX-License-Identifier: Apache-2.0
#include "mekd/optim.hpp"

#include <algorithm>
#include <cmath>

namespace mekd::optim {

namespace {
void require_grad(const ad::Parameter& p) {
    if (!p.has_grad()) throw ContractError("missing gradient for parameter '" + p.name + "'");
    if (p.grad.shape() != p.value.shape()) throw ShapeError("gradient shape mismatch for parameter '" + p.name + "'");
}
}  // namespace

Sgd::Sgd(std::vector<ad::Parameter*> params, double learning_rate, double momentum)
    : params_(std::move(params)), lr_(learning_rate), momentum_(momentum) {
    if (!(learning_rate > 0.0)) throw ContractError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must lie in [0,1)");
    velocity_.reserve(params_.size());
    for (const ad::Parameter* p : params_) velocity_.emplace_back(p->value.shape(), 0.0);
}

void Sgd::set_learning_rate(double lr) {
    if (!(lr > 0.0)) throw ContractError("learning rate must be positive");
    lr_ = lr;
}

void Sgd::step() {
    for (const ad::Parameter* p : params_) require_grad(*p);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        ad::Parameter& p = *params_[k];
        Tensor& v = velocity_[k];
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = momentum_ * v[i] + p.grad[i];
            p.value[i] -= lr_ * v[i];
        }
    }
}

void Sgd::zero_grad() {
    for (ad::Parameter* p : params_) p->zero_grad();
}

Adam::Adam(std::vector<ad::Parameter*> params, double learning_rate, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(learning_rate > 0.0)) throw ContractError("learning rate must be positive");
    for (const ad::Parameter* p : params_) {
        m_.emplace_back(p->value.shape(), 0.0);
        v_.emplace_back(p->value.shape(), 0.0);
    }
}

void Adam::step() {
    for (const ad::Parameter* p : params_) require_grad(*p);
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, double(t_));
    const double c2 = 1.0 - std::pow(beta2_, double(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        ad::Parameter& p = *params_[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g;
            v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g * g;
            p.value[i] -= lr_ * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (ad::Parameter* p : params_) p->zero_grad();
}

double multistep_lr(std::size_t epoch, double base_lr, std::span<const std::size_t> milestones, double gamma) {
    const auto passed = std::ranges::count_if(milestones, [epoch](std::size_t m) { return m <= epoch; });
    return base_lr * std::pow(gamma, double(passed));
}

double clip_grad_norm(std::span<ad::Parameter* const> params, double max_norm) {
    double sq = 0.0;
    for (const ad::Parameter* p : params)
        for (double g : p->grad.values()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double k = max_norm / norm;
        for (ad::Parameter* p : params)
            for (double& g : p->grad.values()) g *= k;
    }
    return norm;
}

}  // namespace mekd::optim
