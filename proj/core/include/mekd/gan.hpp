// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mekd/autodiff.hpp"
#include "mekd/checkpoint.hpp"
#include "mekd/data.hpp"
#include "mekd/nets.hpp"

/// Adversarial training of a generator whose latent dimension equals the
/// class count, so that it emulates the inverse of the teacher's
/// input-to-probability mapping.
namespace mekd::gan {

/// Clamp applied to discriminator probabilities before taking logs.
inline constexpr double kProbEps = 1e-7;

enum class PriorKind { gaussian, uniform, simplex_dirichlet };
enum class Variant { vanilla, wgan_gp };
enum class GeneratorLossMode { minimize_log1m, non_saturating };
enum class OptimizerKind { sgd, adam };

std::string to_string(PriorKind k);
std::string to_string(Variant v);
std::string to_string(GeneratorLossMode m);
std::string to_string(OptimizerKind k);
PriorKind parse_prior(const std::string& s);
Variant parse_variant(const std::string& s);
GeneratorLossMode parse_generator_loss(const std::string& s);
OptimizerKind parse_optimizer(const std::string& s);

/// Latent distribution over R^C: standard normal, uniform on [-1,1]^C, or
/// flat Dirichlet on the probability simplex.
struct NoisePrior {
    PriorKind kind = PriorKind::gaussian;
    std::size_t dim = 0;
};

struct GanConfig {
    std::size_t batch_size = 64;  // m
    std::size_t d_steps = 5;      // k discriminator steps per generator step
    double lr_g = 1e-4;
    double lr_d = 1e-4;
    std::size_t epochs = 200;
    Variant variant = Variant::wgan_gp;
    double gp_lambda = 10.0;
    GeneratorLossMode generator_loss = GeneratorLossMode::non_saturating;
    OptimizerKind optimizer = OptimizerKind::adam;
    double momentum = 0.5;  // SGD momentum, or Adam beta1
    double clip_norm = 0.0;  // 0 disables global-norm clipping
    std::vector<std::size_t> snapshot_epochs;

    void validate() const;
};

/// [m, C] matrix of independent draws.
Tensor sample_noise(const NoisePrior& prior, std::size_t m, std::mt19937_64& rng);

// Loss terms on already-computed discriminator outputs. `d_real` / `d_fake`
// hold D's probabilities (vanilla) or critic scores (WGAN-GP).

/// -(1/m) sum [log D(x) + log(1 - D(G(z)))]
ad::Var discriminator_loss(ad::Var d_real, ad::Var d_fake);
/// minimize_log1m: (1/m) sum log(1 - D(G(z)));  non_saturating: -(1/m) sum log D(G(z))
ad::Var generator_loss(ad::Var d_fake, GeneratorLossMode mode);
/// mean(critic(fake)) - mean(critic(real))
ad::Var critic_loss(ad::Var score_real, ad::Var score_fake);
/// -mean(critic(fake))
ad::Var critic_generator_loss(ad::Var score_fake);

/// Network-level losses recorded on `g`.
ad::Var discriminator_loss(ad::Graph& g, nets::Network& d, nets::Network& gen, const Tensor& x, const Tensor& z);
ad::Var generator_loss(ad::Graph& g, nets::Network& d, nets::Network& gen, const Tensor& z, GeneratorLossMode mode);

/// (1/m) sum (||grad_x critic(x_hat)||_2 - 1)^2 with x_hat = t x_real + (1-t) x_fake,
/// t ~ U(0,1) per sample. Differentiable with respect to the critic parameters.
ad::Var gradient_penalty(ad::Graph& g, nets::Network& d, const Tensor& x_real, const Tensor& x_fake,
                         std::mt19937_64& rng);

struct LogEntry {
    std::size_t epoch = 0;
    std::size_t step = 0;
    double loss_d = 0.0;
    double loss_g = 0.0;
    double gp = 0.0;
};

/// One optimizer step as seen just before the update is applied.
struct StepTrace {
    enum class Kind { discriminator, generator } kind;
    std::size_t epoch;
    std::size_t step;
    double loss;
    const Tensor* real;  // null for generator steps
    const Tensor* noise;
    std::vector<ckpt::NamedTensor> d_state;
    std::vector<ckpt::NamedTensor> g_state;
};

struct TrainHooks {
    /// Called after `epoch` epochs for every epoch listed in snapshot_epochs
    /// (0 means before any training).
    std::function<void(std::size_t epoch, const nets::Network& generator)> on_snapshot;
    std::function<void(const StepTrace&)> on_step;
};

struct GanResult {
    std::vector<LogEntry> log;  // one entry per generator step
};

/// Alternates `d_steps` discriminator updates with one generator update over
/// shuffled real mini-batches. On return the generator is frozen.
GanResult train_gan(nets::Network& generator, nets::Network& discriminator, const data::Dataset& real,
                    const GanConfig& cfg, const NoisePrior& prior, std::uint64_t seed, const TrainHooks& hooks = {});

std::string log_to_csv(const std::vector<LogEntry>& log, bool with_gp);

}  // namespace mekd::gan
