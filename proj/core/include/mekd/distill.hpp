// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mekd/autodiff.hpp"
#include "mekd/data.hpp"
#include "mekd/metrics.hpp"
#include "mekd/nets.hpp"

/// Student training against a query-only teacher, supervised through a
/// frozen generator grafted onto both models' outputs.
namespace mekd::distill {

/// Query-only view of a teacher: inputs in, class probabilities out.
///
/// Nothing else about the underlying model is reachable through this type.
/// Every answered sample increments the query counter by one.
class BlindTeacher {
public:
    /// Maps an [m, n] batch to [m, C] probabilities.
    using QueryFn = std::function<Tensor(const Tensor&)>;

    BlindTeacher(QueryFn query, std::size_t input_dim, std::size_t classes);

    /// Wraps a local classifier. `net` must outlive the BlindTeacher; only its
    /// value-level predict path is used.
    static BlindTeacher from_network(const nets::Network& net);

    nets::ProbVector classify(std::span<const double> x) const;
    Tensor classify_batch(const Tensor& x) const;

    std::size_t query_count() const { return queries_; }
    void reset_query_count() const { queries_ = 0; }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t classes() const { return classes_; }

private:
    QueryFn query_;
    std::size_t input_dim_;
    std::size_t classes_;
    mutable std::size_t queries_ = 0;
};

struct DistillConfig {
    int p_norm = 1;            // 1 or 2
    double alpha = 1.0;        // weight of the generation distance
    double beta = 1.0;         // weight of the KL term
    double temperature = 1.0;  // softening of the KL term
    double generator_temperature = 1.0;
    bool feed_logits = false;  // feed log-probabilities instead of probabilities to G
    std::size_t batch_size = 64;
    std::size_t epochs = 30;
    double lr = 0.05;
    double momentum = 0.9;
    std::vector<std::size_t> milestones{20, 25};
    double gamma = 0.1;
    double clip_norm = 0.0;  // 0 disables global-norm clipping
    bool cache_teacher = true;
    data::AugmentFlags augment;

    void validate(std::size_t classes) const;
};

/// Re-softens probability rows at temperature tau: p^(1/tau) / sum.
Tensor soften(const Tensor& probs, double tau);

/// Batch mean of sum_c p_T(c) log(p_T(c) / p_S(c)), both sides softened at
/// `tau`; p_S is clamped below at 1e-12.
double kld_loss(const Tensor& p_teacher, const Tensor& p_student, double tau);
/// Differentiable form on student logits ([m, C]); teacher probabilities are
/// taken at temperature 1 and re-softened.
ad::Var kld_loss(ad::Graph& g, const Tensor& p_teacher, ad::Var student_logits, double tau);

/// A frozen map from latent/probability vectors to images, recorded on a graph.
using GeneratorFn = std::function<ad::Var(ad::Graph&, ad::Var)>;
/// Wraps a frozen generator network. Throws ContractError if it is trainable.
GeneratorFn frozen_generator(nets::Network& generator);

/// Batch mean of ||G(y_S) - G(y_T)||_p. Only y_S carries gradient.
ad::Var generation_distance(ad::Graph& g, const GeneratorFn& generator, ad::Var y_student, const Tensor& y_teacher,
                            int p_norm);
double generation_distance(nets::Network& generator, const Tensor& y_student, const Tensor& y_teacher, int p_norm);

struct LossTerms {
    ad::Var total;
    double distance = 0.0;  // unweighted
    double kld = 0.0;       // unweighted
};

/// alpha * generation_distance + beta * kld_loss for one batch. `generator`
/// may be null when alpha == 0.
LossTerms student_loss(ad::Graph& g, nets::Network& student, const Tensor& teacher_probs, const GeneratorFn* generator,
                       const Tensor& x_batch, const DistillConfig& cfg);
/// Same, querying the teacher for `x_batch`.
LossTerms student_loss(ad::Graph& g, nets::Network& student, const BlindTeacher& teacher, nets::Network* generator,
                       const Tensor& x_batch, const DistillConfig& cfg);

struct EpochLog {
    std::size_t epoch = 0;
    double loss_total = 0.0;
    double loss_distance = 0.0;
    double loss_kld = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double lr = 0.0;
};

/// Datasets used only for the per-epoch accuracy columns.
struct EvalSets {
    const data::Dataset* train = nullptr;
    const data::Dataset* test = nullptr;
};

struct DistillResult {
    std::vector<EpochLog> log;
};

/// SGD on student_loss over shuffled mini-batches of `train`. Reads no labels
/// outside evaluation. `generator` must be frozen when alpha > 0 and is
/// ignored when alpha == 0.
DistillResult distill(nets::Network& student, const BlindTeacher& teacher, nets::Network* generator,
                      const data::Dataset& train, const DistillConfig& cfg, std::uint64_t seed,
                      const EvalSets& eval = {});

/// Logit-matching baseline: distill with alpha forced to 0.
DistillResult baseline_kd(nets::Network& student, const BlindTeacher& teacher, const data::Dataset& train,
                          const DistillConfig& cfg, std::uint64_t seed, const EvalSets& eval = {});

std::string log_to_csv(const std::vector<EpochLog>& log);

/// Loss evaluators for gradient profiles.
metrics::LossEvaluator kd_evaluator(const BlindTeacher& teacher, double tau);
metrics::LossEvaluator mekd_evaluator(const BlindTeacher& teacher, nets::Network& generator, const DistillConfig& cfg);

}  // namespace mekd::distill
