// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mekd/autodiff.hpp"

namespace mekd::optim {

/// SGD with classical momentum:
///   v <- momentum * v + g
///   p <- p - lr * v
class Sgd {
public:
    Sgd(std::vector<ad::Parameter*> params, double learning_rate, double momentum = 0.0);

    /// Applies one update. Throws ContractError if any parameter lacks a gradient.
    void step();
    void zero_grad();

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr);
    double momentum() const { return momentum_; }
    const std::vector<Tensor>& velocities() const { return velocity_; }

private:
    std::vector<ad::Parameter*> params_;
    std::vector<Tensor> velocity_;
    double lr_;
    double momentum_;
};

/// Adam, offered as an alternative for adversarial training.
class Adam {
public:
    Adam(std::vector<ad::Parameter*> params, double learning_rate, double beta1 = 0.5, double beta2 = 0.999,
         double eps = 1e-8);

    void step();
    void zero_grad();
    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

private:
    std::vector<ad::Parameter*> params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

/// base_lr * gamma^(number of milestones <= epoch).
double multistep_lr(std::size_t epoch, double base_lr, std::span<const std::size_t> milestones, double gamma);

/// Rescales gradients so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(std::span<ad::Parameter* const> params, double max_norm);

}  // namespace mekd::optim
