// SPDX-License-Identifier: Apache-2.0
#include "mekd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mekd/optim.hpp"

namespace mekd::distill {

namespace {
constexpr double kStudentProbFloor = 1e-12;

Tensor row_of(std::span<const double> x) { return Tensor(Shape{1, x.size()}, std::vector<double>(x.begin(), x.end())); }
}  // namespace

// ---------------------------------------------------------------------------

BlindTeacher::BlindTeacher(QueryFn query, std::size_t input_dim, std::size_t classes)
    : query_(std::move(query)), input_dim_(input_dim), classes_(classes) {
    if (!query_) throw ContractError("blind teacher needs a query function");
    if (classes_ < 2) throw ContractError("blind teacher needs at least two classes");
}

BlindTeacher BlindTeacher::from_network(const nets::Network& net) {
    if (net.spec().role != nets::Role::classifier) throw ContractError("teacher must be a classifier");
    return BlindTeacher([&net](const Tensor& x) { return net.predict(x); }, net.spec().input_dim,
                        net.spec().class_count);
}

Tensor BlindTeacher::classify_batch(const Tensor& x) const {
    if (x.cols() != input_dim_)
        throw ShapeError("teacher query of width " + std::to_string(x.cols()) + ", expected " +
                         std::to_string(input_dim_));
    Tensor p = query_(x);
    if (p.rows() != x.rows() || p.cols() != classes_) throw ShapeError("teacher answered with the wrong shape");
    queries_ += x.rows();
    return p;
}

nets::ProbVector BlindTeacher::classify(std::span<const double> x) const {
    Tensor p = classify_batch(row_of(x));
    return nets::ProbVector(std::vector<double>(p.values().begin(), p.values().end()));
}

// ---------------------------------------------------------------------------

void DistillConfig::validate(std::size_t classes) const {
    if (classes < 2) throw ContractError("distillation needs at least two classes");
    if (p_norm != 1 && p_norm != 2) throw ContractError("p_norm must be 1 or 2");
    if (alpha < 0.0 || beta < 0.0) throw ContractError("loss weights must be non-negative");
    if (!(alpha + beta > 0.0)) throw ContractError("alpha + beta must be positive");
    if (!(temperature > 0.0) || !(generator_temperature > 0.0)) throw ContractError("temperatures must be positive");
    if (batch_size < 1) throw ContractError("batch size must be at least 1");
    if (!(lr > 0.0)) throw ContractError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must lie in [0,1)");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("gamma must lie in (0,1]");
    if (!(clip_norm >= 0.0)) throw ContractError("clip_norm must be non-negative");
    if (!std::ranges::is_sorted(milestones) || std::ranges::adjacent_find(milestones) != milestones.end())
        throw ContractError("milestones must be strictly increasing");
}

Tensor soften(const Tensor& probs, double tau) {
    if (!(tau > 0.0)) throw ContractError("temperature must be positive");
    if (tau == 1.0) return probs;
    Tensor out = probs;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row_span(r);
        // Work in log space relative to the row maximum to avoid underflow.
        double mx = -INFINITY;
        for (double v : row)
            if (v > 0.0) mx = std::max(mx, std::log(v));
        double z = 0.0;
        for (double& v : row) z += (v = v > 0.0 ? std::exp((std::log(v) - mx) / tau) : 0.0);
        for (double& v : row) v /= z;
    }
    return out;
}

double kld_loss(const Tensor& p_teacher, const Tensor& p_student, double tau) {
    if (p_teacher.rows() != p_student.rows() || p_teacher.cols() != p_student.cols())
        throw ShapeError("kld_loss: teacher and student probabilities differ in shape");
    const Tensor pt = soften(p_teacher, tau);
    const Tensor ps = soften(p_student, tau);
    double total = 0.0;
    for (std::size_t i = 0; i < pt.size(); ++i) {
        if (pt[i] <= 0.0) continue;
        total += pt[i] * (std::log(pt[i]) - std::log(std::max(ps[i], kStudentProbFloor)));
    }
    return total / double(pt.rows());
}

ad::Var kld_loss(ad::Graph& g, const Tensor& p_teacher, ad::Var student_logits, double tau) {
    if (p_teacher.rows() != student_logits.rows() || p_teacher.cols() != student_logits.cols())
        throw ShapeError("kld_loss: teacher probabilities do not match student logits");
    const Tensor pt = soften(p_teacher, tau);
    Tensor log_pt(pt.shape());
    for (std::size_t i = 0; i < pt.size(); ++i) log_pt[i] = pt[i] > 0.0 ? std::log(pt[i]) : 0.0;
    ad::Var ps = ad::softmax(tau == 1.0 ? student_logits : ad::scale(student_logits, 1.0 / tau));
    ad::Var log_ps = ad::log(ad::clamp(ps, kStudentProbFloor, 1.0));
    ad::Var diff = ad::sub(g.constant(std::move(log_pt)), log_ps);
    return ad::scale(ad::sum(ad::mul(g.constant(pt), diff)), 1.0 / double(pt.rows()));
}

// ---------------------------------------------------------------------------

GeneratorFn frozen_generator(nets::Network& generator) {
    if (generator.spec().role != nets::Role::generator) throw ContractError("expected a generator network");
    if (!generator.frozen()) throw ContractError("generator must be frozen before grafting");
    return [&generator](ad::Graph& g, ad::Var y) { return generator.forward(g, y); };
}

ad::Var generation_distance(ad::Graph& g, const GeneratorFn& generator, ad::Var y_student, const Tensor& y_teacher,
                            int p_norm) {
    if (p_norm != 1 && p_norm != 2) throw ContractError("p_norm must be 1 or 2");
    if (y_student.rows() != y_teacher.rows() || y_student.cols() != y_teacher.cols())
        throw ShapeError("generation_distance: student and teacher vectors differ in shape");
    ad::Var img_s = generator(g, y_student);
    ad::Var img_t = generator(g, g.constant(y_teacher, "y_teacher"));
    ad::Var diff = ad::sub(img_s, img_t);
    ad::Var per_image = p_norm == 1 ? ad::row_sum(ad::abs(diff)) : ad::row_l2_norm(diff);
    return ad::mean(per_image);
}

double generation_distance(nets::Network& generator, const Tensor& y_student, const Tensor& y_teacher, int p_norm) {
    ad::Graph g;
    return generation_distance(g, frozen_generator(generator), g.constant(y_student), y_teacher, p_norm).value().item();
}

namespace {

// Generator input derived from classifier outputs, per the config.
Tensor teacher_code(const Tensor& probs, const DistillConfig& cfg) {
    Tensor y = soften(probs, cfg.generator_temperature);
    if (cfg.feed_logits)
        for (double& v : y.values()) v = std::log(std::max(v, kStudentProbFloor));
    return y;
}

ad::Var student_code(ad::Var logits, const DistillConfig& cfg) {
    ad::Var scaled = cfg.generator_temperature == 1.0 ? logits : ad::scale(logits, 1.0 / cfg.generator_temperature);
    return cfg.feed_logits ? ad::log_softmax(scaled) : ad::softmax(scaled);
}

}  // namespace

LossTerms student_loss(ad::Graph& g, nets::Network& student, const Tensor& teacher_probs, const GeneratorFn* generator,
                       const Tensor& x_batch, const DistillConfig& cfg) {
    cfg.validate(student.spec().class_count);
    ad::Var logits = student.forward(g, g.constant(x_batch, "x"));
    LossTerms terms;
    ad::Var total;
    if (cfg.alpha > 0.0) {
        if (!generator) throw ContractError("alpha > 0 requires a frozen generator");
        ad::Var dist = generation_distance(g, *generator, student_code(logits, cfg), teacher_code(teacher_probs, cfg),
                                           cfg.p_norm);
        terms.distance = dist.value().item();
        total = ad::scale(dist, cfg.alpha);
    }
    if (cfg.beta > 0.0) {
        ad::Var kl = kld_loss(g, teacher_probs, logits, cfg.temperature);
        terms.kld = kl.value().item();
        ad::Var weighted = ad::scale(kl, cfg.beta);
        total = total.valid() ? ad::add(total, weighted) : weighted;
    }
    terms.total = total;
    return terms;
}

LossTerms student_loss(ad::Graph& g, nets::Network& student, const BlindTeacher& teacher, nets::Network* generator,
                       const Tensor& x_batch, const DistillConfig& cfg) {
    const Tensor probs = teacher.classify_batch(x_batch);
    if (cfg.alpha > 0.0) {
        if (!generator) throw ContractError("alpha > 0 requires a frozen generator");
        const GeneratorFn fn = frozen_generator(*generator);
        return student_loss(g, student, probs, &fn, x_batch, cfg);
    }
    return student_loss(g, student, probs, nullptr, x_batch, cfg);
}

// ---------------------------------------------------------------------------

DistillResult distill(nets::Network& student, const BlindTeacher& teacher, nets::Network* generator,
                      const data::Dataset& train, const DistillConfig& cfg, std::uint64_t seed, const EvalSets& eval) {
    const std::size_t classes = teacher.classes();
    cfg.validate(classes);
    if (student.spec().role != nets::Role::classifier || student.spec().class_count != classes)
        throw ContractError("student must be a classifier over the teacher's classes");
    if (student.spec().input_dim != train.dim() || teacher.input_dim() != train.dim())
        throw ShapeError("student/teacher input dimension does not match the data");
    std::optional<GeneratorFn> gen_fn;
    if (cfg.alpha > 0.0) {
        if (!generator) throw ContractError("alpha > 0 requires a frozen generator");
        if (generator->spec().input_dim != classes)
            throw ContractError("generator latent dimension must equal the class count");
        gen_fn = frozen_generator(*generator);
    }

    student.unfreeze();
    const auto params = student.parameters();
    optim::Sgd opt(params, cfg.lr, cfg.momentum);
    std::mt19937_64 rng(seed);
    const std::size_t n = train.size();
    const bool use_cache = cfg.cache_teacher && !cfg.augment.any();
    Tensor cache(Shape{n, classes}, 0.0);
    std::vector<bool> cached(n, false);

    DistillResult result;
    ad::Graph g;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = optim::multistep_lr(epoch, cfg.lr, cfg.milestones, cfg.gamma);
        opt.set_learning_rate(lr);
        EpochLog row{epoch, 0.0, 0.0, 0.0, 0.0, 0.0, lr};
        const auto order = data::batches(n, std::min(cfg.batch_size, n), rng(), true);
        for (std::size_t b = 0; b < order.size(); ++b) {
            const auto& idx = order[b];
            Tensor x = train.gather(idx);
            if (cfg.augment.any())
                for (std::size_t r = 0; r < x.rows(); ++r) {
                    const auto aug = data::augment(x.row_span(r), train.image_shape(), cfg.augment, rng);
                    std::ranges::copy(aug, x.row_span(r).begin());
                }

            Tensor probs(Shape{idx.size(), classes});
            if (use_cache) {
                std::vector<std::size_t> miss;
                for (std::size_t i : idx)
                    if (!cached[i]) miss.push_back(i);
                if (!miss.empty()) {
                    const Tensor answers = teacher.classify_batch(train.gather(miss));
                    for (std::size_t k = 0; k < miss.size(); ++k) {
                        std::ranges::copy(answers.row_span(k), cache.row_span(miss[k]).begin());
                        cached[miss[k]] = true;
                    }
                }
                for (std::size_t k = 0; k < idx.size(); ++k)
                    std::ranges::copy(cache.row_span(idx[k]), probs.row_span(k).begin());
            } else {
                probs = teacher.classify_batch(x);
            }

            LossTerms terms;
            try {
                g.clear();
                student.zero_grad();
                terms = student_loss(g, student, probs, gen_fn ? &*gen_fn : nullptr, x, cfg);
                const double total = terms.total.value().item();
                if (!std::isfinite(total)) throw NonFiniteError("loss");
                g.backward(terms.total);
                if (cfg.clip_norm > 0.0) optim::clip_grad_norm(params, cfg.clip_norm);
                opt.step();
                const double w = double(idx.size()) / double(n);
                row.loss_total += w * total;
                row.loss_distance += w * terms.distance;
                row.loss_kld += w * terms.kld;
            } catch (const NonFiniteError& e) {
                std::ostringstream os;
                os << "distillation diverged at epoch " << epoch << " batch " << b << " (L_distance=" << terms.distance
                   << ", L_kld=" << terms.kld << "): " << e.what();
                throw NonFiniteError(os.str());
            }
        }
        if (eval.train) row.train_acc = metrics::accuracy(student, *eval.train);
        if (eval.test) row.test_acc = metrics::accuracy(student, *eval.test);
        result.log.push_back(row);
    }
    return result;
}

DistillResult baseline_kd(nets::Network& student, const BlindTeacher& teacher, const data::Dataset& train,
                          const DistillConfig& cfg, std::uint64_t seed, const EvalSets& eval) {
    DistillConfig kd = cfg;
    kd.alpha = 0.0;
    return distill(student, teacher, nullptr, train, kd, seed, eval);
}

std::string log_to_csv(const std::vector<EpochLog>& log) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,L_total,L_distance,L_kld,train_acc,test_acc,lr\n";
    for (const auto& e : log)
        os << e.epoch << ',' << e.loss_total << ',' << e.loss_distance << ',' << e.loss_kld << ',' << e.train_acc
           << ',' << e.test_acc << ',' << e.lr << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------

metrics::LossEvaluator kd_evaluator(const BlindTeacher& teacher, double tau) {
    return {"kd", [&teacher, tau](ad::Graph& g, ad::Var logits, std::span<const double> x, std::size_t) {
                return kld_loss(g, teacher.classify_batch(row_of(x)), logits, tau);
            }};
}

metrics::LossEvaluator mekd_evaluator(const BlindTeacher& teacher, nets::Network& generator, const DistillConfig& cfg) {
    const std::string name = cfg.p_norm == 1 ? "mekd-l1" : "mekd-l2";
    return {name, [&teacher, &generator, cfg](ad::Graph& g, ad::Var logits, std::span<const double> x, std::size_t) {
                const Tensor probs = teacher.classify_batch(row_of(x));
                ad::Var total;
                if (cfg.alpha > 0.0) {
                    ad::Var d = generation_distance(g, frozen_generator(generator), student_code(logits, cfg),
                                                    teacher_code(probs, cfg), cfg.p_norm);
                    total = ad::scale(d, cfg.alpha);
                }
                if (cfg.beta > 0.0) {
                    ad::Var kl = ad::scale(kld_loss(g, probs, logits, cfg.temperature), cfg.beta);
                    total = total.valid() ? ad::add(total, kl) : kl;
                }
                return total;
            }};
}

}  // namespace mekd::distill
