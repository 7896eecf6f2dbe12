// SPDX-License-Identifier: Apache-2.0
// mekd: command-line driver for the teacher / GAN / distillation pipeline.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mekd/config.hpp"
#include "mekd/harness.hpp"

namespace fs = std::filesystem;
using namespace mekd;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("mekd");
    logger->set_pattern("[%H:%M:%S] [%^%l%$] %v");
    logger->set_level(spdlog::level::info);
    if (const char* env = std::getenv("MEKD_LOG_LEVEL")) {
        const std::string lvl(env);
        if (lvl == "error") logger->set_level(spdlog::level::err);
        else if (lvl == "debug") logger->set_level(spdlog::level::debug);
        else if (lvl != "info") logger->warn("ignoring MEKD_LOG_LEVEL={} (expected error, info or debug)", lvl);
    }
    spdlog::set_default_logger(logger);
}

harness::Logger logger() {
    return [](bool debug, std::string_view msg) {
        if (debug) spdlog::debug("{}", msg);
        else spdlog::info("{}", msg);
    };
}

// Snapshots in out_dir ordered by epoch.
std::vector<fs::path> find_snapshots(const fs::path& dir) {
    static const std::regex pattern(R"(generator_e(\d+)\.ckpt)");
    std::vector<std::pair<unsigned long, fs::path>> found;
    if (fs::is_directory(dir))
        for (const auto& entry : fs::directory_iterator(dir)) {
            std::smatch m;
            const std::string name = entry.path().filename().string();
            if (std::regex_match(name, m, pattern)) found.emplace_back(std::stoul(m[1]), entry.path());
        }
    std::ranges::sort(found);
    std::vector<fs::path> out;
    for (auto& [epoch, path] : found) out.push_back(path);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();

    CLI::App app{"Mapping-emulation knowledge distillation driver"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string method = "mekd";
    std::vector<std::string> generators;
    std::string checkpoint;
    bool student_layout = false;
    std::size_t samples = 16;
    double tolerance = 1e-4;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Run configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "Override the configured seed");
        sub->add_option("--out", out_dir, "Override the output directory");
    };

    auto* teacher_cmd = app.add_subcommand("train-teacher", "Train the teacher classifier");
    common(teacher_cmd);
    auto* gan_cmd = app.add_subcommand("train-gan", "Train the mapping-emulation generator");
    common(gan_cmd);
    auto* distill_cmd = app.add_subcommand("distill", "Distil a student from the blind teacher");
    common(distill_cmd);
    distill_cmd->add_option("--method", method, "mekd or kd")->check(CLI::IsMember({"mekd", "kd"}));
    auto* ablate_cmd = app.add_subcommand("ablate-fid", "Distil once per generator checkpoint, sorted by FID");
    common(ablate_cmd);
    ablate_cmd->add_option("--generator", generators, "Generator checkpoints (default: all snapshots in --out)");
    auto* eval_cmd = app.add_subcommand("eval", "Accuracy of a classifier checkpoint");
    common(eval_cmd);
    eval_cmd->add_option("--checkpoint", checkpoint, "Classifier checkpoint")->required();
    eval_cmd->add_flag("--student", student_layout, "Use the student layout instead of the teacher's");
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "Finite-difference check of training gradients");
    common(gradcheck_cmd);
    gradcheck_cmd->add_option("--tolerance", tolerance, "Maximum relative error");
    auto* profile_cmd = app.add_subcommand("grad-profile", "Logit-gradient profiles of the mekd student");
    common(profile_cmd);
    profile_cmd->add_option("--samples", samples, "Test samples to profile");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kValidation;
    }

    try {
        auto cfg = config::RunConfig::load(config_path);
        if (seed) cfg.seed = *seed;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        cfg.validate();
        spdlog::debug("config hash {}", cfg.hash());

        if (*teacher_cmd) {
            const auto rep = harness::run_train_teacher(cfg, logger());
            std::cout << "teacher_train_acc=" << rep.train_acc << " teacher_test_acc=" << rep.test_acc << "\n";
        } else if (*gan_cmd) {
            const auto rep = harness::run_train_gan(cfg, logger());
            std::cout << "fid_untrained=" << rep.fid_untrained << " fid_trained=" << rep.fid_trained << "\n";
        } else if (*distill_cmd) {
            const auto rep = harness::run_distill(cfg, harness::parse_method(method), {}, logger());
            std::cout << harness::ResultsTable::header() << "\n" << harness::ResultsTable::format(rep.row) << "\n";
            std::cout << "audit: label_reads=" << rep.audit.label_reads
                      << " teacher_introspections=" << rep.audit.teacher_introspections
                      << " teacher_queries=" << rep.audit.teacher_queries << "\n";
        } else if (*ablate_cmd) {
            std::vector<fs::path> paths(generators.begin(), generators.end());
            if (paths.empty()) paths = find_snapshots(cfg.out_dir);
            std::cout << harness::run_ablation_fid(cfg, paths, logger()).to_csv();
        } else if (*eval_cmd) {
            const auto rep = harness::run_eval(cfg, checkpoint, student_layout);
            std::cout << "train_acc=" << rep.train_acc << " test_acc=" << rep.test_acc << "\n";
        } else if (*gradcheck_cmd) {
            bool ok = true;
            for (const auto& c : harness::run_gradcheck(cfg, tolerance)) {
                std::cout << (c.ok ? "ok   " : "FAIL ") << c.name << " max_rel_error=" << c.max_rel_error << "\n";
                ok = ok && c.ok;
            }
            return ok ? kOk : kRuntime;
        } else if (*profile_cmd) {
            const auto profiles = harness::run_grad_profile(cfg, samples, logger());
            std::cout << "profiles=" << profiles.size() << "\n";
        }
        return kOk;
    } catch (const config::ConfigError& e) {
        spdlog::error("{}", e.what());
        return kValidation;
    } catch (const ContractError& e) {
        spdlog::error("{}", e.what());
        return kValidation;
    } catch (const ShapeError& e) {
        spdlog::error("{}", e.what());
        return kValidation;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kRuntime;
    }
}
