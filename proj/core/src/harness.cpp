// SPDX-License-Identifier: Apache-2.0
#include "mekd/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "mekd/checkpoint.hpp"
#include "mekd/gan.hpp"
#include "mekd/optim.hpp"

namespace mekd::harness {

namespace fs = std::filesystem;
using config::RunConfig;

namespace {

void say(const Logger& log, bool debug, const std::string& msg) {
    if (log) log(debug, msg);
}

std::string num(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc() ? std::string(buf, end) : std::string("nan");
}

fs::path out_path(const RunConfig& cfg, const std::string& name) { return fs::path(cfg.out_dir) / name; }

void ensure_out_dir(const RunConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw Error("cannot create output directory " + cfg.out_dir + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) { ckpt::write_file_atomic(path, text); }

gan::NoisePrior prior_of(const RunConfig& cfg) { return {cfg.prior, cfg.data.classes}; }

std::vector<std::size_t> iota_range(std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    return idx;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
    // splitmix64 finalizer over the seed mixed with the stage name
    std::uint64_t z = seed ^ config::fnv1a64(stage);
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

Splits load_data(const RunConfig& cfg) {
    const auto& d = cfg.data;
    std::optional<data::Dataset> train, test;
    if (d.kind == config::DatasetKind::blobs) {
        const auto all = data::synth_blobs(d.classes, d.dim, d.train_per_class + d.test_per_class, d.spread,
                                           derive_seed(cfg.seed, "data"));
        auto [tr, te] = data::split_head(all, d.train_per_class * d.classes);
        train.emplace(std::move(tr));
        test.emplace(std::move(te));
    } else {
        const fs::path dir(d.mnist_dir);
        auto full_train =
            data::load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", d.classes);
        auto full_test = data::load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", d.classes);
        const auto tr_idx = iota_range(0, std::min(d.mnist_train, full_train.size()));
        const auto te_idx = iota_range(0, std::min(d.mnist_test, full_test.size()));
        train.emplace(full_train.subset(tr_idx));
        test.emplace(full_test.subset(te_idx));
    }
    if (d.normalization != data::Normalization::unit) {
        train.emplace(train->with_normalization(d.normalization));
        test.emplace(test->with_normalization(d.normalization));
    }
    if (!d.gan_disjoint) return Splits{*train, *test, *train, *train};
    const std::size_t half = train->size() / 2;
    if (half == 0) throw ContractError("disjoint GAN split needs at least two training samples");
    return Splits{*train, *test, train->subset(iota_range(0, half)), train->subset(iota_range(half, train->size()))};
}

std::vector<double> train_supervised(nets::Network& net, const data::Dataset& train,
                                     const config::TeacherTrainConfig& cfg, std::uint64_t seed, const Logger& log) {
    const std::size_t classes = net.spec().class_count;
    if (net.spec().role != nets::Role::classifier || classes != train.classes())
        throw ContractError("supervised training needs a classifier over the dataset's classes");
    net.unfreeze();
    optim::Sgd opt(net.parameters(), cfg.lr, cfg.momentum);
    std::mt19937_64 rng(seed);
    std::vector<double> losses;
    ad::Graph g;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        opt.set_learning_rate(optim::multistep_lr(epoch, cfg.lr, cfg.milestones, cfg.gamma));
        const auto order = data::batches(train.size(), std::min(cfg.batch_size, train.size()), rng(), true);
        double epoch_loss = 0.0;
        for (const auto& idx : order) {
            Tensor x = train.gather(idx);
            if (cfg.augment.any())
                for (std::size_t r = 0; r < x.rows(); ++r) {
                    const auto aug = data::augment(x.row_span(r), train.image_shape(), cfg.augment, rng);
                    std::ranges::copy(aug, x.row_span(r).begin());
                }
            Tensor onehot(Shape{idx.size(), classes}, 0.0);
            const auto labels = train.gather_labels(idx);
            for (std::size_t k = 0; k < idx.size(); ++k) onehot.at(k, labels[k]) = 1.0;

            g.clear();
            net.zero_grad();
            const auto logp = ad::log_softmax(net.forward(g, g.constant(std::move(x))));
            const auto loss = ad::scale(ad::sum(ad::mul(logp, g.constant(std::move(onehot)))), -1.0 / double(idx.size()));
            g.backward(loss);
            opt.step();
            epoch_loss += loss.value().item() * double(idx.size()) / double(train.size());
        }
        if (!std::isfinite(epoch_loss)) throw NonFiniteError("teacher loss is non-finite at epoch " + std::to_string(epoch));
        losses.push_back(epoch_loss);
        say(log, true, "teacher epoch " + std::to_string(epoch) + " loss " + num(epoch_loss));
    }
    return losses;
}

nets::Network load_network(const nets::NetworkSpec& spec, const fs::path& checkpoint) {
    nets::Network net(spec, 0);
    try {
        net.load_state(ckpt::load(checkpoint));
    } catch (const ShapeError& e) {
        throw ShapeError("checkpoint " + checkpoint.string() + " does not match the configured " +
                         nets::to_string(spec.role) + ": " + e.what());
    }
    return net;
}

// ---------------------------------------------------------------------------

std::string ResultsTable::header() { return "method,seed,teacher_acc,student_acc,gen_fid,alpha,beta,p_norm,tau,config_hash"; }

std::string ResultsTable::format(const ResultsRow& r) {
    return r.method + "," + std::to_string(r.seed) + "," + num(r.teacher_acc) + "," + num(r.student_acc) + "," +
           (r.gen_fid ? num(*r.gen_fid) : std::string()) + "," + num(r.alpha) + "," + num(r.beta) + "," +
           std::to_string(r.p_norm) + "," + num(r.tau) + "," + r.config_hash;
}

std::string ResultsTable::to_csv() const {
    std::string out = header() + "\n";
    for (const auto& r : rows) out += format(r) + "\n";
    return out;
}

void ResultsTable::append_to(const fs::path& path) const {
    std::string text;
    if (fs::exists(path)) {
        const auto bytes = ckpt::read_file(path);
        text.assign(bytes.begin(), bytes.end());
    } else {
        text = header() + "\n";
    }
    for (const auto& r : rows) text += format(r) + "\n";
    write_text(path, text);
}

// ---------------------------------------------------------------------------

TeacherReport run_train_teacher(const RunConfig& cfg, const Logger& log) {
    cfg.validate();
    ensure_out_dir(cfg);
    const auto splits = load_data(cfg);
    nets::Network teacher(cfg.teacher_spec(), derive_seed(cfg.seed, "teacher-init"));
    TeacherReport rep;
    rep.epoch_loss = train_supervised(teacher, splits.train, cfg.teacher_train, derive_seed(cfg.seed, "teacher-train"), log);
    rep.train_acc = metrics::accuracy(teacher, splits.train);
    rep.test_acc = metrics::accuracy(teacher, splits.test);
    rep.checkpoint = out_path(cfg, "teacher.ckpt");
    ckpt::save(rep.checkpoint, teacher.state());

    std::string csv = "epoch,loss,config_hash\n";
    for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e)
        csv += std::to_string(e) + "," + num(rep.epoch_loss[e]) + "," + cfg.hash() + "\n";
    write_text(out_path(cfg, "teacher_log.csv"), csv);
    say(log, false, "teacher train_acc " + num(rep.train_acc) + " test_acc " + num(rep.test_acc));
    return rep;
}

double generator_fid(const RunConfig& cfg, const nets::Network& generator, const data::Dataset& real) {
    std::mt19937_64 rng(derive_seed(cfg.seed, "fid-noise"));
    const Tensor z = gan::sample_noise(prior_of(cfg), real.size(), rng);
    return metrics::frechet_distance(real.samples(), nets::generate_batch(generator, z));
}

GanReport run_train_gan(const RunConfig& cfg, const Logger& log) {
    cfg.validate();
    ensure_out_dir(cfg);
    const auto splits = load_data(cfg);
    nets::Network gen(cfg.generator_spec(), derive_seed(cfg.seed, "generator-init"));
    nets::Network disc(cfg.discriminator_spec(), derive_seed(cfg.seed, "discriminator-init"));

    GanReport rep;
    rep.fid_untrained = generator_fid(cfg, gen, splits.gan);

    gan::TrainHooks hooks;
    hooks.on_snapshot = [&](std::size_t epoch, const nets::Network& g) {
        const auto path = out_path(cfg, "generator_e" + std::to_string(epoch) + ".ckpt");
        ckpt::save(path, g.state());
        rep.snapshots.push_back(path);
        say(log, true, "snapshot " + path.string());
    };
    const auto result =
        gan::train_gan(gen, disc, splits.gan, cfg.gan, prior_of(cfg), derive_seed(cfg.seed, "gan-train"), hooks);

    rep.fid_trained = generator_fid(cfg, gen, splits.gan);
    rep.checkpoint = out_path(cfg, "generator.ckpt");
    ckpt::save(rep.checkpoint, gen.state());
    ckpt::save(out_path(cfg, "discriminator.ckpt"), disc.state());

    const auto teacher_path = out_path(cfg, "teacher.ckpt");
    if (fs::exists(teacher_path)) {
        const auto teacher = load_network(cfg.teacher_spec(), teacher_path);
        const Tensor y = nets::classify_batch(teacher, splits.gan.samples());
        rep.fid_teacher_outputs = metrics::frechet_distance(splits.gan.samples(), nets::generate_batch(gen, y));
    }

    std::string csv = gan::log_to_csv(result.log, cfg.gan.variant == gan::Variant::wgan_gp);
    write_text(out_path(cfg, "gan_log.csv"), csv);
    std::string summary = "fid_untrained,fid_trained,fid_teacher_outputs,config_hash\n" + num(rep.fid_untrained) +
                          "," + num(rep.fid_trained) + "," +
                          (rep.fid_teacher_outputs ? num(*rep.fid_teacher_outputs) : std::string()) + "," +
                          cfg.hash() + "\n";
    write_text(out_path(cfg, "gan_fid.csv"), summary);
    say(log, false, "generator fid " + num(rep.fid_trained) + " (untrained " + num(rep.fid_untrained) + ")");
    return rep;
}

// ---------------------------------------------------------------------------

std::string to_string(Method m) { return m == Method::mekd ? "mekd" : "kd"; }

Method parse_method(const std::string& s) {
    if (s == "mekd") return Method::mekd;
    if (s == "kd") return Method::kd;
    throw ContractError("unknown method '" + s + "' (expected mekd or kd)");
}

DistillReport run_distill(const RunConfig& cfg, Method method, const DistillInputs& inputs, const Logger& log) {
    cfg.validate();
    if (inputs.write_outputs) ensure_out_dir(cfg);
    const auto splits = load_data(cfg);

    const auto teacher_net = load_network(cfg.teacher_spec(), inputs.teacher.value_or(out_path(cfg, "teacher.ckpt")));
    double teacher_acc = metrics::accuracy(teacher_net, splits.test);

    distill::DistillConfig dcfg = cfg.distill;
    std::optional<nets::Network> generator;
    std::optional<double> gen_fid;
    if (method == Method::kd) {
        dcfg.alpha = 0.0;
        dcfg.temperature = cfg.kd_temperature;
    } else {
        generator.emplace(load_network(cfg.generator_spec(), inputs.generator.value_or(out_path(cfg, "generator.ckpt"))));
        generator->freeze();
        gen_fid = generator_fid(cfg, *generator, splits.gan);
    }

    const auto teacher = distill::BlindTeacher::from_network(teacher_net);
    nets::Network student(cfg.student_spec(), derive_seed(cfg.seed, "student-init"));

    const std::size_t introspections_before = teacher_net.introspection_count();
    splits.distill.reset_label_reads();
    const auto result = distill::distill(student, teacher, generator ? &*generator : nullptr, splits.distill, dcfg,
                                         derive_seed(cfg.seed, "distill-train"));
    DistillReport rep;
    rep.audit.label_reads = splits.distill.label_reads();
    rep.audit.teacher_introspections = teacher_net.introspection_count() - introspections_before;
    rep.audit.teacher_queries = teacher.query_count();
    rep.log = result.log;

    const double student_acc = metrics::accuracy(student, splits.test);
    rep.row = ResultsRow{inputs.label.empty() ? to_string(method) : inputs.label,
                         cfg.seed,
                         teacher_acc,
                         student_acc,
                         gen_fid,
                         dcfg.alpha,
                         dcfg.beta,
                         dcfg.p_norm,
                         dcfg.temperature,
                         cfg.hash()};

    if (inputs.write_outputs) {
        rep.checkpoint = out_path(cfg, "student_" + rep.row.method + ".ckpt");
        ckpt::save(rep.checkpoint, student.state());
        write_text(out_path(cfg, "distill_log_" + rep.row.method + ".csv"), distill::log_to_csv(result.log));
        ResultsTable{{rep.row}}.append_to(out_path(cfg, "results.csv"));
    }
    say(log, false, rep.row.method + " student_acc " + num(student_acc) + " teacher_acc " + num(teacher_acc));
    return rep;
}

ResultsTable run_ablation_fid(const RunConfig& cfg, const std::vector<fs::path>& generators, const Logger& log) {
    if (generators.size() < 2) throw ContractError("FID ablation needs at least two generator checkpoints");
    ResultsTable table;
    for (const auto& path : generators) {
        DistillInputs in;
        in.generator = path;
        in.label = "mekd:" + path.stem().string();
        in.write_outputs = false;
        table.rows.push_back(run_distill(cfg, Method::mekd, in, log).row);
    }
    std::ranges::stable_sort(table.rows, {}, [](const ResultsRow& r) { return *r.gen_fid; });
    ensure_out_dir(cfg);
    write_text(out_path(cfg, "ablation_fid.csv"), table.to_csv());
    return table;
}

EvalReport run_eval(const RunConfig& cfg, const fs::path& checkpoint, bool student) {
    cfg.validate();
    const auto splits = load_data(cfg);
    const auto net = load_network(student ? cfg.student_spec() : cfg.teacher_spec(), checkpoint);
    return {metrics::accuracy(net, splits.train), metrics::accuracy(net, splits.test)};
}

// ---------------------------------------------------------------------------

namespace {

// Max relative error of d loss / d params against central differences.
double check_params(nets::Network& net, const std::function<ad::Var(ad::Graph&)>& loss_fn, std::size_t probes,
                    std::mt19937_64& rng) {
    constexpr double h = 1e-5;
    ad::Graph g;
    net.zero_grad();
    g.backward(loss_fn(g));
    const auto params = net.parameters();
    double worst = 0.0;
    for (auto* p : params) {
        const Tensor analytic = p->grad;
        auto vals = p->value.values();
        std::uniform_int_distribution<std::size_t> pick(0, vals.size() - 1);
        for (std::size_t k = 0; k < probes; ++k) {
            const std::size_t i = pick(rng);
            const double orig = vals[i];
            vals[i] = orig + h;
            ad::Graph gp;
            const double up = loss_fn(gp).value().item();
            vals[i] = orig - h;
            ad::Graph gm;
            const double down = loss_fn(gm).value().item();
            vals[i] = orig;
            const double numeric = (up - down) / (2 * h);
            const double a = analytic.values()[i];
            const double err = std::abs(a - numeric) / std::max({1e-6, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, err);
        }
    }
    net.zero_grad();
    return worst;
}

}  // namespace

std::vector<GradcheckCase> run_gradcheck(const RunConfig& cfg, double tolerance) {
    cfg.validate();
    const std::size_t classes = cfg.data.classes;
    const std::size_t n = cfg.input_dim();
    const std::size_t m = 4;
    std::mt19937_64 rng(derive_seed(cfg.seed, "gradcheck"));
    std::uniform_real_distribution<double> unit(0.05, 0.95);
    Tensor x(Shape{m, n});
    for (double& v : x.values()) v = unit(rng);
    Tensor onehot(Shape{m, classes}, 0.0);
    for (std::size_t r = 0; r < m; ++r) onehot.at(r, r % classes) = 1.0;

    nets::Network teacher(cfg.teacher_spec(), derive_seed(cfg.seed, "gc-teacher"));
    nets::Network student(cfg.student_spec(), derive_seed(cfg.seed, "gc-student"));
    nets::Network gen(cfg.generator_spec(), derive_seed(cfg.seed, "gc-generator"));
    nets::Network disc(cfg.discriminator_spec(), derive_seed(cfg.seed, "gc-discriminator"));
    const Tensor z = gan::sample_noise(prior_of(cfg), m, rng);
    const Tensor p_teacher = teacher.predict(x);

    std::vector<GradcheckCase> out;
    auto run = [&](std::string name, nets::Network& net, const std::function<ad::Var(ad::Graph&)>& fn) {
        const double err = check_params(net, fn, 6, rng);
        out.push_back({std::move(name), err, err < tolerance});
    };

    run("classifier/cross-entropy", teacher, [&](ad::Graph& g) {
        const auto logp = ad::log_softmax(teacher.forward(g, g.constant(x)));
        return ad::scale(ad::sum(ad::mul(logp, g.constant(onehot))), -1.0 / double(m));
    });
    run("discriminator/vanilla", disc, [&](ad::Graph& g) { return gan::discriminator_loss(g, disc, gen, x, z); });
    run("generator/non-saturating", gen, [&](ad::Graph& g) {
        disc.freeze();
        auto l = gan::generator_loss(g, disc, gen, z, gan::GeneratorLossMode::non_saturating);
        disc.unfreeze();
        return l;
    });
    run("critic/gradient-penalty", disc, [&](ad::Graph& g) {
        std::mt19937_64 mix(7);
        return gan::gradient_penalty(g, disc, x, gen.predict(z), mix);
    });
    gen.freeze();
    const auto gen_fn = distill::frozen_generator(gen);
    for (int p : {1, 2}) {
        distill::DistillConfig dc = cfg.distill;
        dc.p_norm = p;
        dc.temperature = 2.0;
        run("student/mekd-l" + std::to_string(p), student, [&](ad::Graph& g) {
            return distill::student_loss(g, student, p_teacher, &gen_fn, x, dc).total;
        });
    }
    return out;
}

std::vector<metrics::GradientProfile> run_grad_profile(const RunConfig& cfg, std::size_t samples, const Logger& log) {
    cfg.validate();
    const auto splits = load_data(cfg);
    const auto teacher_net = load_network(cfg.teacher_spec(), out_path(cfg, "teacher.ckpt"));
    auto generator = load_network(cfg.generator_spec(), out_path(cfg, "generator.ckpt"));
    generator.freeze();
    const auto student_path = out_path(cfg, "student_mekd.ckpt");
    nets::Network student = fs::exists(student_path) ? load_network(cfg.student_spec(), student_path)
                                                      : nets::Network(cfg.student_spec(), derive_seed(cfg.seed, "student-init"));
    const auto teacher = distill::BlindTeacher::from_network(teacher_net);

    std::vector<metrics::LossEvaluator> evaluators{metrics::supervised_ce_evaluator(),
                                                   distill::kd_evaluator(teacher, cfg.kd_temperature)};
    for (int p : {1, 2}) {
        distill::DistillConfig dc = cfg.distill;
        dc.p_norm = p;
        evaluators.push_back(distill::mekd_evaluator(teacher, generator, dc));
    }

    std::vector<metrics::GradientProfile> profiles;
    const std::size_t count = std::min(samples, splits.test.size());
    data::EvaluationScope scope;
    for (const auto& ev : evaluators)
        for (std::size_t i = 0; i < count; ++i)
            profiles.push_back(
                metrics::record_logit_gradients(student, ev, splits.test.sample(i), splits.test.label(i), i));
    ensure_out_dir(cfg);
    write_text(out_path(cfg, "grad_profile.csv"), metrics::profiles_to_csv(profiles));
    say(log, false, "wrote " + std::to_string(profiles.size()) + " gradient profiles");
    return profiles;
}

}  // namespace mekd::harness
