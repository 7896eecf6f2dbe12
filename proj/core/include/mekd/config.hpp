// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mekd/data.hpp"
#include "mekd/distill.hpp"
#include "mekd/gan.hpp"
#include "mekd/nets.hpp"

namespace mekd::config {

/// Invalid or unparseable configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Flat `key = value` lines grouped under `[section]` headers. `#` and `;`
/// start comments. Order of sections and keys is preserved.
class Ini {
public:
    static Ini parse(const std::string& text);
    std::string serialize() const;

    void set(const std::string& section, const std::string& key, std::string value);
    const std::string* find(const std::string& section, const std::string& key) const;
    std::vector<std::string> sections() const;
    std::vector<std::pair<std::string, std::string>> entries(const std::string& section) const;

private:
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> sections_;
};

enum class DatasetKind { blobs, mnist };

struct DataConfig {
    DatasetKind kind = DatasetKind::blobs;
    std::size_t classes = 4;
    std::size_t dim = 64;
    std::size_t train_per_class = 500;
    std::size_t test_per_class = 250;
    double spread = 0.05;
    data::Normalization normalization = data::Normalization::unit;
    std::string mnist_dir;
    std::size_t mnist_train = 5000;
    std::size_t mnist_test = 1000;
    /// GAN trains on the same split as distillation, or on a disjoint half.
    bool gan_disjoint = false;

    bool operator==(const DataConfig&) const = default;
};

struct NetLayout {
    std::vector<std::size_t> hidden;
    nets::Activation activation = nets::Activation::relu;

    bool operator==(const NetLayout&) const = default;
};

/// Supervised teacher training.
struct TeacherTrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double lr = 0.05;
    double momentum = 0.9;
    std::vector<std::size_t> milestones{30, 40};
    double gamma = 0.1;
    data::AugmentFlags augment;

    bool operator==(const TeacherTrainConfig& o) const {
        return epochs == o.epochs && batch_size == o.batch_size && lr == o.lr && momentum == o.momentum &&
               milestones == o.milestones && gamma == o.gamma && augment.hflip == o.augment.hflip &&
               augment.crop_pad == o.augment.crop_pad;
    }
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string out_dir = "runs/default";
    DataConfig data;
    NetLayout teacher{{128, 64}, nets::Activation::relu};
    NetLayout student{{32}, nets::Activation::relu};
    NetLayout generator{{64, 128}, nets::Activation::leaky_relu};
    NetLayout discriminator{{128, 64}, nets::Activation::leaky_relu};
    TeacherTrainConfig teacher_train;
    gan::GanConfig gan;
    gan::PriorKind prior = gan::PriorKind::gaussian;
    distill::DistillConfig distill;
    double kd_temperature = 4.0;

    static RunConfig defaults();
    static RunConfig from_ini(const Ini& ini);
    static RunConfig from_text(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
    Ini to_ini() const;
    std::string serialize() const { return to_ini().serialize(); }
    /// 16 hex digits of FNV-1a-64 over the serialized text with out_dir blanked.
    std::string hash() const;

    nets::NetworkSpec teacher_spec() const;
    nets::NetworkSpec student_spec() const;
    nets::NetworkSpec generator_spec() const;
    nets::NetworkSpec discriminator_spec() const;
    /// Input dimension implied by the dataset selection.
    std::size_t input_dim() const;

    void validate() const;
};

std::uint64_t fnv1a64(std::string_view text);

}  // namespace mekd::config
