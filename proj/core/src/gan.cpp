// SPDX-License-Identifier: Apache-2.0
#include "mekd/gan.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <variant>

#include "mekd/optim.hpp"

namespace mekd::gan {

std::string to_string(PriorKind k) {
    switch (k) {
        case PriorKind::gaussian: return "gaussian";
        case PriorKind::uniform: return "uniform";
        case PriorKind::simplex_dirichlet: return "simplex-dirichlet";
    }
    return "?";
}
std::string to_string(Variant v) { return v == Variant::vanilla ? "vanilla" : "wgan-gp"; }
std::string to_string(GeneratorLossMode m) {
    return m == GeneratorLossMode::minimize_log1m ? "minimize-log1m" : "non-saturating";
}
std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

PriorKind parse_prior(const std::string& s) {
    if (s == "gaussian") return PriorKind::gaussian;
    if (s == "uniform") return PriorKind::uniform;
    if (s == "simplex-dirichlet") return PriorKind::simplex_dirichlet;
    throw ContractError("unknown noise prior '" + s + "'");
}
Variant parse_variant(const std::string& s) {
    if (s == "vanilla") return Variant::vanilla;
    if (s == "wgan-gp") return Variant::wgan_gp;
    throw ContractError("unknown GAN variant '" + s + "'");
}
GeneratorLossMode parse_generator_loss(const std::string& s) {
    if (s == "minimize-log1m") return GeneratorLossMode::minimize_log1m;
    if (s == "non-saturating") return GeneratorLossMode::non_saturating;
    throw ContractError("unknown generator loss mode '" + s + "'");
}
OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    throw ContractError("unknown optimizer '" + s + "'");
}

void GanConfig::validate() const {
    if (batch_size < 1) throw ContractError("GAN batch size must be at least 1");
    if (d_steps < 1) throw ContractError("discriminator steps k must be at least 1");
    if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw ContractError("GAN learning rates must be positive");
    if (gp_lambda < 0.0) throw ContractError("gp_lambda must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("GAN momentum must lie in [0,1)");
    if (clip_norm < 0.0) throw ContractError("clip_norm must be non-negative");
}

Tensor sample_noise(const NoisePrior& prior, std::size_t m, std::mt19937_64& rng) {
    if (prior.dim == 0) throw ContractError("noise prior dimension must be positive");
    Tensor z(Shape{m, prior.dim});
    switch (prior.kind) {
        case PriorKind::gaussian: {
            std::normal_distribution<double> d(0.0, 1.0);
            for (double& v : z.values()) v = d(rng);
            break;
        }
        case PriorKind::uniform: {
            std::uniform_real_distribution<double> d(-1.0, 1.0);
            for (double& v : z.values()) v = d(rng);
            break;
        }
        case PriorKind::simplex_dirichlet: {
            std::gamma_distribution<double> d(1.0, 1.0);
            for (std::size_t r = 0; r < m; ++r) {
                auto row = z.row_span(r);
                double total = 0.0;
                for (double& v : row) total += (v = d(rng));
                for (double& v : row) v /= total;
            }
            break;
        }
    }
    return z;
}

// ---------------------------------------------------------------------------

ad::Var discriminator_loss(ad::Var d_real, ad::Var d_fake) {
    if (d_real.value().size() != d_fake.value().size())
        throw ShapeError("discriminator_loss: real and fake batches differ in size");
    ad::Var real_term = ad::log(ad::clamp(d_real, kProbEps, 1.0 - kProbEps));
    ad::Var fake_term = ad::log(ad::affine(ad::clamp(d_fake, kProbEps, 1.0 - kProbEps), -1.0, 1.0));
    return ad::neg(ad::mean(ad::add(real_term, fake_term)));
}

ad::Var generator_loss(ad::Var d_fake, GeneratorLossMode mode) {
    ad::Var p = ad::clamp(d_fake, kProbEps, 1.0 - kProbEps);
    if (mode == GeneratorLossMode::minimize_log1m) return ad::mean(ad::log(ad::affine(p, -1.0, 1.0)));
    return ad::neg(ad::mean(ad::log(p)));
}

ad::Var critic_loss(ad::Var score_real, ad::Var score_fake) {
    return ad::sub(ad::mean(score_fake), ad::mean(score_real));
}

ad::Var critic_generator_loss(ad::Var score_fake) { return ad::neg(ad::mean(score_fake)); }

ad::Var discriminator_loss(ad::Graph& g, nets::Network& d, nets::Network& gen, const Tensor& x, const Tensor& z) {
    if (x.rows() != z.rows()) throw ShapeError("discriminator_loss: |x_batch| != |z_batch|");
    ad::Var fake = g.constant(gen.predict(z), "fake");
    return discriminator_loss(d.output(g, g.constant(x, "real")), d.output(g, fake));
}

ad::Var generator_loss(ad::Graph& g, nets::Network& d, nets::Network& gen, const Tensor& z, GeneratorLossMode mode) {
    return generator_loss(d.output(g, gen.forward(g, g.constant(z, "z"))), mode);
}

ad::Var gradient_penalty(ad::Graph& g, nets::Network& d, const Tensor& x_real, const Tensor& x_fake,
                         std::mt19937_64& rng) {
    if (x_real.rows() != x_fake.rows() || x_real.cols() != x_fake.cols())
        throw ShapeError("gradient_penalty: real and fake batches differ in shape");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor mix(Shape{x_real.rows(), x_real.cols()});
    for (std::size_t r = 0; r < x_real.rows(); ++r) {
        const double t = u(rng);
        for (std::size_t c = 0; c < x_real.cols(); ++c) mix.at(r, c) = t * x_real.at(r, c) + (1.0 - t) * x_fake.at(r, c);
    }
    ad::Var grad = d.score_input_gradient(g, g.constant(std::move(mix), "x_hat"));
    return ad::mean(ad::square(ad::add_scalar(ad::row_l2_norm(grad), -1.0)));
}

// ---------------------------------------------------------------------------

namespace {

class Optimizer {
public:
    Optimizer(const GanConfig& cfg, std::vector<ad::Parameter*> params, double lr) : params_(params) {
        if (cfg.optimizer == OptimizerKind::adam)
            impl_ = std::make_unique<optim::Adam>(std::move(params), lr, cfg.momentum);
        else
            impl_ = std::make_unique<optim::Sgd>(std::move(params), lr, cfg.momentum);
        clip_ = cfg.clip_norm;
    }

    void zero_grad() {
        for (ad::Parameter* p : params_) p->zero_grad();
    }

    void step() {
        if (clip_ > 0.0) optim::clip_grad_norm(params_, clip_);
        std::visit([](auto& o) { o->step(); }, impl_);
    }

private:
    std::vector<ad::Parameter*> params_;
    std::variant<std::unique_ptr<optim::Adam>, std::unique_ptr<optim::Sgd>> impl_;
    double clip_ = 0.0;
};

[[noreturn]] void abort_non_finite(std::size_t epoch, std::size_t step, double ld, double lg, const std::string& why) {
    std::ostringstream os;
    os.precision(10);
    os << "GAN training diverged at epoch " << epoch << " step " << step << " (L_D=" << ld << ", L_G=" << lg
       << "): " << why;
    throw NonFiniteError(os.str());
}

}  // namespace

GanResult train_gan(nets::Network& generator, nets::Network& discriminator, const data::Dataset& real,
                    const GanConfig& cfg, const NoisePrior& prior, std::uint64_t seed, const TrainHooks& hooks) {
    cfg.validate();
    const std::size_t classes = real.classes();
    if (generator.spec().role != nets::Role::generator) throw ContractError("train_gan: generator has wrong role");
    if (discriminator.spec().role != nets::Role::discriminator)
        throw ContractError("train_gan: discriminator has wrong role");
    if (generator.spec().input_dim != classes)
        throw ContractError("generator latent dimension " + std::to_string(generator.spec().input_dim) +
                            " must equal the class count " + std::to_string(classes));
    if (prior.dim != classes) throw ContractError("noise prior dimension must equal the class count");
    if (generator.spec().output_dim != real.dim() || discriminator.spec().input_dim != real.dim())
        throw ShapeError("GAN networks do not match the data dimension");
    const bool unit_data = real.normalization() == data::Normalization::unit;
    if (unit_data != (generator.spec().output_range == nets::OutputRange::unit))
        throw ContractError("generator output range does not match dataset normalization");

    generator.unfreeze();
    discriminator.unfreeze();
    auto g_params = generator.parameters();
    auto d_params = discriminator.parameters();
    Optimizer opt_g(cfg, g_params, cfg.lr_g);
    Optimizer opt_d(cfg, d_params, cfg.lr_d);

    std::mt19937_64 rng(seed);
    const bool wgan = cfg.variant == Variant::wgan_gp;
    auto snapshot = [&](std::size_t epoch) {
        if (!hooks.on_snapshot) return;
        if (std::ranges::find(cfg.snapshot_epochs, epoch) != cfg.snapshot_epochs.end()) hooks.on_snapshot(epoch, generator);
    };
    auto trace = [&](StepTrace::Kind kind, std::size_t epoch, std::size_t step, double loss, const Tensor* x,
                     const Tensor& z) {
        if (!hooks.on_step) return;
        hooks.on_step(StepTrace{kind, epoch, step, loss, x, &z, discriminator.state(), generator.state()});
    };

    GanResult result;
    snapshot(0);
    std::size_t step = 0;
    ad::Graph g;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = data::batches(real.size(), std::min(cfg.batch_size, real.size()), rng(), true);
        for (std::size_t s = 0; s < order.size(); s += cfg.d_steps, ++step) {
            double loss_d = 0.0, gp_value = 0.0;
            try {
                for (std::size_t j = 0; j < cfg.d_steps; ++j) {
                    const Tensor x = real.gather(order[(s + j) % order.size()]);
                    const Tensor z = sample_noise(prior, x.rows(), rng);
                    g.clear();
                    opt_d.zero_grad();
                    ad::Var loss;
                    if (wgan) {
                        const Tensor fake = generator.predict(z);
                        ad::Var base = critic_loss(discriminator.forward(g, g.constant(x)),
                                                   discriminator.forward(g, g.constant(fake)));
                        ad::Var gp = gradient_penalty(g, discriminator, x, fake, rng);
                        gp_value = gp.value().item();
                        loss = ad::add(base, ad::scale(gp, cfg.gp_lambda));
                    } else {
                        loss = discriminator_loss(g, discriminator, generator, x, z);
                    }
                    loss_d = loss.value().item();
                    g.backward(loss);
                    trace(StepTrace::Kind::discriminator, epoch, step, loss_d, &x, z);
                    opt_d.step();
                }
            } catch (const NonFiniteError& e) {
                abort_non_finite(epoch, step, loss_d, 0.0, e.what());
            }

            double loss_g = 0.0;
            try {
                const Tensor z = sample_noise(prior, cfg.batch_size, rng);
                g.clear();
                opt_g.zero_grad();
                discriminator.freeze();
                ad::Var loss;
                if (wgan)
                    loss = critic_generator_loss(discriminator.forward(g, generator.forward(g, g.constant(z))));
                else
                    loss = generator_loss(g, discriminator, generator, z, cfg.generator_loss);
                discriminator.unfreeze();
                loss_g = loss.value().item();
                g.backward(loss);
                trace(StepTrace::Kind::generator, epoch, step, loss_g, nullptr, z);
                opt_g.step();
            } catch (const NonFiniteError& e) {
                discriminator.unfreeze();
                abort_non_finite(epoch, step, loss_d, loss_g, e.what());
            }
            if (!std::isfinite(loss_d) || !std::isfinite(loss_g)) abort_non_finite(epoch, step, loss_d, loss_g, "loss");
            result.log.push_back({epoch, step, loss_d, loss_g, gp_value});
        }
        snapshot(epoch + 1);
    }
    generator.freeze();
    return result;
}

std::string log_to_csv(const std::vector<LogEntry>& log, bool with_gp) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,step,L_D,L_G";
    if (with_gp) os << ",gp";
    os << '\n';
    for (const auto& e : log) {
        os << e.epoch << ',' << e.step << ',' << e.loss_d << ',' << e.loss_g;
        if (with_gp) os << ',' << e.gp;
        os << '\n';
    }
    return os.str();
}

}  // namespace mekd::gan
