// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mekd/autodiff.hpp"
#include "mekd/data.hpp"
#include "mekd/nets.hpp"

namespace mekd::metrics {

/// Fraction of rows of `probs` whose argmax equals the label.
double accuracy_of(const Tensor& probs, std::span<const std::size_t> labels);
/// Top-1 accuracy of a classifier; the one sanctioned use of dataset labels.
double accuracy(const nets::Network& net, const data::Dataset& ds);

/// Gaussian fit of a sample set: mean and unbiased (N-1) covariance.
struct FrechetStats {
    std::vector<double> mean;
    Tensor covariance;  // [d, d]
};

FrechetStats frechet_stats(const Tensor& samples);

/// Principal square root of a symmetric PSD matrix by eigendecomposition.
/// Eigenvalues below zero (round-off) are clamped to zero. Throws
/// ContractError when |M - M^T| exceeds `symmetry_tol` * max|M|.
Tensor matrix_sqrt_psd(const Tensor& m, double symmetry_tol = 1e-9);

/// |mu_A - mu_B|^2 + Tr(C_A + C_B - 2 (C_A C_B)^{1/2}); clamped at zero.
double frechet_distance(const FrechetStats& a, const FrechetStats& b);
double frechet_distance(const Tensor& set_a, const Tensor& set_b);

// ---------------------------------------------------------------------------
// Logit-gradient profiles

/// Builds a scalar loss from a single sample's student logits ([1, C]).
/// `x` is the input sample and `true_class` its label.
struct LossEvaluator {
    std::string name;
    std::function<ad::Var(ad::Graph&, ad::Var logits, std::span<const double> x, std::size_t true_class)> loss;
};

/// Cross-entropy against the true label.
LossEvaluator supervised_ce_evaluator();

/// d loss / d logits, reordered so the true class comes first and the rest
/// keep their original relative order.
struct GradientProfile {
    std::string experiment;
    std::size_t sample_id = 0;
    std::size_t true_class = 0;
    std::vector<double> gradients;
};

GradientProfile record_logit_gradients(nets::Network& student, const LossEvaluator& evaluator,
                                       std::span<const double> sample, std::size_t true_class,
                                       std::size_t sample_id = 0);

/// Rows `experiment,sample,g0,...,g{C-1}` with a header line.
std::string profiles_to_csv(std::span<const GradientProfile> profiles);

}  // namespace mekd::metrics
