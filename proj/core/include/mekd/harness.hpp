// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mekd/config.hpp"
#include "mekd/data.hpp"
#include "mekd/distill.hpp"
#include "mekd/metrics.hpp"
#include "mekd/nets.hpp"

/// Pipeline stages driven from a RunConfig: teacher, GAN, distillation,
/// evaluation. Every stage writes its artifacts under `RunConfig::out_dir`.
namespace mekd::harness {

/// Progress messages; `debug` is true for per-epoch chatter.
using Logger = std::function<void(bool debug, std::string_view message)>;

/// Independent stream for a named stage of a run.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage);

struct Splits {
    data::Dataset train;
    data::Dataset test;
    /// Samples the GAN trains on; the student distils on `distill`.
    data::Dataset gan;
    data::Dataset distill;
};

Splits load_data(const config::RunConfig& cfg);

/// Mean cross-entropy per epoch.
std::vector<double> train_supervised(nets::Network& net, const data::Dataset& train,
                                     const config::TeacherTrainConfig& cfg, std::uint64_t seed,
                                     const Logger& log = {});

nets::Network load_network(const nets::NetworkSpec& spec, const std::filesystem::path& checkpoint);

struct ResultsRow {
    std::string method;
    std::uint64_t seed = 0;
    double teacher_acc = 0.0;
    double student_acc = 0.0;
    std::optional<double> gen_fid;  // empty for kd
    double alpha = 0.0;
    double beta = 0.0;
    int p_norm = 0;
    double tau = 0.0;
    std::string config_hash;

    bool operator==(const ResultsRow&) const = default;
};

struct ResultsTable {
    std::vector<ResultsRow> rows;

    static std::string header();
    static std::string format(const ResultsRow& row);
    std::string to_csv() const;
    /// Appends rows, writing the header first if the file is new.
    void append_to(const std::filesystem::path& path) const;
};

struct TeacherReport {
    std::filesystem::path checkpoint;
    double train_acc = 0.0;
    double test_acc = 0.0;
    std::vector<double> epoch_loss;
};

/// Trains the teacher and writes teacher.ckpt and teacher_log.csv.
TeacherReport run_train_teacher(const config::RunConfig& cfg, const Logger& log = {});

struct GanReport {
    std::filesystem::path checkpoint;
    std::vector<std::filesystem::path> snapshots;
    double fid_untrained = 0.0;
    double fid_trained = 0.0;
    /// Fréchet distance of G(teacher outputs on the GAN split); empty when no
    /// teacher checkpoint is present.
    std::optional<double> fid_teacher_outputs;
};

/// Fréchet distance between the GAN split and as many generator samples drawn
/// from the configured prior.
double generator_fid(const config::RunConfig& cfg, const nets::Network& generator, const data::Dataset& real);

/// Trains G and D on the GAN split; writes generator.ckpt, discriminator.ckpt,
/// generator_e{N}.ckpt snapshots and gan_log.csv.
GanReport run_train_gan(const config::RunConfig& cfg, const Logger& log = {});

enum class Method { mekd, kd };
std::string to_string(Method m);
Method parse_method(const std::string& s);

struct DistillInputs {
    std::optional<std::filesystem::path> teacher;    // default out_dir/teacher.ckpt
    std::optional<std::filesystem::path> generator;  // default out_dir/generator.ckpt
    std::string label;                               // overrides the method column
    bool write_outputs = true;
};

/// Counters collected around the distillation loop.
struct Audit {
    std::size_t label_reads = 0;           // outside evaluation scopes
    std::size_t teacher_introspections = 0;
    std::size_t teacher_queries = 0;
};

struct DistillReport {
    ResultsRow row;
    Audit audit;
    std::vector<distill::EpochLog> log;
    std::filesystem::path checkpoint;
};

/// Distils a fresh student. kd runs with alpha = 0 and the kd temperature and
/// never opens a generator checkpoint.
DistillReport run_distill(const config::RunConfig& cfg, Method method, const DistillInputs& inputs = {},
                          const Logger& log = {});

/// One mekd distillation per generator checkpoint, rows sorted by ascending
/// generator FID. Throws ContractError for fewer than two checkpoints.
ResultsTable run_ablation_fid(const config::RunConfig& cfg, const std::vector<std::filesystem::path>& generators,
                              const Logger& log = {});

struct EvalReport {
    double train_acc = 0.0;
    double test_acc = 0.0;
};

/// Accuracy of a classifier checkpoint with the student layout when
/// `student` is true, else the teacher layout.
EvalReport run_eval(const config::RunConfig& cfg, const std::filesystem::path& checkpoint, bool student);

struct GradcheckCase {
    std::string name;
    double max_rel_error = 0.0;
    bool ok = false;
};

/// Finite-difference check of parameter gradients for each network role and
/// loss used by the pipeline.
std::vector<GradcheckCase> run_gradcheck(const config::RunConfig& cfg, double tolerance = 1e-4);

/// Logit-gradient profiles of the stored mekd student on the first `samples`
/// test points under CE, KD, MEKD-L1 and MEKD-L2; writes grad_profile.csv.
std::vector<metrics::GradientProfile> run_grad_profile(const config::RunConfig& cfg, std::size_t samples,
                                                       const Logger& log = {});

}  // namespace mekd::harness
