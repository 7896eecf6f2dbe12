// SPDX-License-Identifier: Apache-2.0
#include "mekd/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>

#include "mekd/checkpoint.hpp"

namespace mekd::config {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw ConfigError("cannot format number");
    return std::string(buf, end);
}

std::string fmt_list(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

// Typed reader over one Ini that tracks which keys were consumed.
class Reader {
public:
    explicit Reader(const Ini& ini) : ini_(ini) {}

    const std::string* raw(const std::string& sec, const std::string& key) {
        used_.insert(sec + "." + key);
        return ini_.find(sec, key);
    }

    void str(const std::string& sec, const std::string& key, std::string& out) {
        if (auto* v = raw(sec, key)) out = *v;
    }

    template <class Int>
    void integer(const std::string& sec, const std::string& key, Int& out) {
        if (auto* v = raw(sec, key)) out = Int(parse_u64(sec, key, *v));
    }

    void real(const std::string& sec, const std::string& key, double& out) {
        if (auto* v = raw(sec, key)) {
            double d = 0.0;
            auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), d);
            if (ec != std::errc() || p != v->data() + v->size()) fail(sec, key, *v, "a number");
            out = d;
        }
    }

    void boolean(const std::string& sec, const std::string& key, bool& out) {
        if (auto* v = raw(sec, key)) {
            if (*v == "true" || *v == "1") out = true;
            else if (*v == "false" || *v == "0") out = false;
            else fail(sec, key, *v, "true/false");
        }
    }

    void list(const std::string& sec, const std::string& key, std::vector<std::size_t>& out) {
        if (auto* v = raw(sec, key)) {
            out.clear();
            std::stringstream ss(*v);
            std::string item;
            while (std::getline(ss, item, ',')) {
                item = trim(item);
                if (!item.empty()) out.push_back(std::size_t(parse_u64(sec, key, item)));
            }
        }
    }

    template <class E, class Parse>
    void enumeration(const std::string& sec, const std::string& key, E& out, Parse parse) {
        if (auto* v = raw(sec, key)) {
            try {
                out = parse(*v);
            } catch (const ContractError& e) {
                throw ConfigError("[" + sec + "] " + key + ": " + e.what());
            }
        }
    }

    void reject_unknown() const {
        for (const auto& sec : ini_.sections())
            for (const auto& [k, v] : ini_.entries(sec))
                if (!used_.contains(sec + "." + k)) throw ConfigError("unknown config key [" + sec + "] " + k);
    }

private:
    static std::uint64_t parse_u64(const std::string& sec, const std::string& key, const std::string& v) {
        std::uint64_t x = 0;
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (ec != std::errc() || p != v.data() + v.size()) fail(sec, key, v, "a non-negative integer");
        return x;
    }

    [[noreturn]] static void fail(const std::string& sec, const std::string& key, const std::string& v,
                                  const char* want) {
        throw ConfigError("[" + sec + "] " + key + " = '" + v + "' is not " + want);
    }

    const Ini& ini_;
    std::set<std::string> used_;
};

data::Normalization parse_norm(const std::string& s) {
    if (s == "unit") return data::Normalization::unit;
    if (s == "symmetric") return data::Normalization::symmetric;
    throw ContractError("unknown normalization '" + s + "'");
}

DatasetKind parse_kind(const std::string& s) {
    if (s == "blobs") return DatasetKind::blobs;
    if (s == "mnist") return DatasetKind::mnist;
    throw ContractError("unknown dataset '" + s + "'");
}

}  // namespace

// ---------------------------------------------------------------------------

Ini Ini::parse(const std::string& text) {
    Ini ini;
    std::string section;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
            section = trim(std::string_view(t).substr(1, t.size() - 2));
            if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": key outside any section");
        std::string key = trim(std::string_view(t).substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (ini.find(section, key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " + key);
        ini.set(section, key, trim(std::string_view(t).substr(eq + 1)));
    }
    return ini;
}

std::string Ini::serialize() const {
    std::string out;
    for (std::size_t i = 0; i < sections_.size(); ++i) {
        if (i) out += '\n';
        out += "[" + sections_[i].first + "]\n";
        for (const auto& [k, v] : sections_[i].second) out += k + " = " + v + "\n";
    }
    return out;
}

void Ini::set(const std::string& section, const std::string& key, std::string value) {
    auto sec = std::ranges::find(sections_, section, &decltype(sections_)::value_type::first);
    if (sec == sections_.end()) {
        sections_.push_back({section, {}});
        sec = sections_.end() - 1;
    }
    auto& entries = sec->second;
    auto it = std::ranges::find(entries, key, &std::pair<std::string, std::string>::first);
    if (it != entries.end()) it->second = std::move(value);
    else entries.emplace_back(key, std::move(value));
}

const std::string* Ini::find(const std::string& section, const std::string& key) const {
    auto sec = std::ranges::find(sections_, section, &decltype(sections_)::value_type::first);
    if (sec == sections_.end()) return nullptr;
    auto it = std::ranges::find(sec->second, key, &std::pair<std::string, std::string>::first);
    return it == sec->second.end() ? nullptr : &it->second;
}

std::vector<std::string> Ini::sections() const {
    std::vector<std::string> out;
    for (const auto& s : sections_) out.push_back(s.first);
    return out;
}

std::vector<std::pair<std::string, std::string>> Ini::entries(const std::string& section) const {
    auto sec = std::ranges::find(sections_, section, &decltype(sections_)::value_type::first);
    return sec == sections_.end() ? std::vector<std::pair<std::string, std::string>>{} : sec->second;
}

// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

RunConfig RunConfig::defaults() { return RunConfig{}; }

RunConfig RunConfig::from_ini(const Ini& ini) {
    RunConfig c;
    Reader r(ini);
    r.integer("run", "seed", c.seed);
    r.str("run", "out_dir", c.out_dir);

    r.enumeration("data", "kind", c.data.kind, parse_kind);
    r.integer("data", "classes", c.data.classes);
    r.integer("data", "dim", c.data.dim);
    r.integer("data", "train_per_class", c.data.train_per_class);
    r.integer("data", "test_per_class", c.data.test_per_class);
    r.real("data", "spread", c.data.spread);
    r.enumeration("data", "normalization", c.data.normalization, parse_norm);
    r.str("data", "mnist_dir", c.data.mnist_dir);
    r.integer("data", "mnist_train", c.data.mnist_train);
    r.integer("data", "mnist_test", c.data.mnist_test);
    r.boolean("data", "gan_disjoint", c.data.gan_disjoint);

    for (auto [name, layout] : {std::pair{"teacher", &c.teacher}, std::pair{"student", &c.student},
                                std::pair{"generator", &c.generator}, std::pair{"discriminator", &c.discriminator}}) {
        r.list(name, "hidden", layout->hidden);
        r.enumeration(name, "activation", layout->activation, nets::parse_activation);
    }

    auto& t = c.teacher_train;
    r.integer("teacher", "epochs", t.epochs);
    r.integer("teacher", "batch_size", t.batch_size);
    r.real("teacher", "lr", t.lr);
    r.real("teacher", "momentum", t.momentum);
    r.list("teacher", "milestones", t.milestones);
    r.real("teacher", "gamma", t.gamma);
    r.boolean("teacher", "hflip", t.augment.hflip);
    r.integer("teacher", "crop_pad", t.augment.crop_pad);

    auto& g = c.gan;
    r.integer("gan", "batch_size", g.batch_size);
    r.integer("gan", "d_steps", g.d_steps);
    r.real("gan", "lr_g", g.lr_g);
    r.real("gan", "lr_d", g.lr_d);
    r.integer("gan", "epochs", g.epochs);
    r.enumeration("gan", "variant", g.variant, gan::parse_variant);
    r.real("gan", "gp_lambda", g.gp_lambda);
    r.enumeration("gan", "generator_loss", g.generator_loss, gan::parse_generator_loss);
    r.enumeration("gan", "optimizer", g.optimizer, gan::parse_optimizer);
    r.real("gan", "momentum", g.momentum);
    r.real("gan", "clip_norm", g.clip_norm);
    r.list("gan", "snapshot_epochs", g.snapshot_epochs);
    r.enumeration("gan", "prior", c.prior, gan::parse_prior);

    auto& d = c.distill;
    r.integer("distill", "p_norm", d.p_norm);
    r.real("distill", "alpha", d.alpha);
    r.real("distill", "beta", d.beta);
    r.real("distill", "temperature", d.temperature);
    r.real("distill", "generator_temperature", d.generator_temperature);
    r.boolean("distill", "feed_logits", d.feed_logits);
    r.integer("distill", "batch_size", d.batch_size);
    r.integer("distill", "epochs", d.epochs);
    r.real("distill", "lr", d.lr);
    r.real("distill", "momentum", d.momentum);
    r.list("distill", "milestones", d.milestones);
    r.real("distill", "gamma", d.gamma);
    r.real("distill", "clip_norm", d.clip_norm);
    r.boolean("distill", "cache_teacher", d.cache_teacher);
    r.boolean("distill", "hflip", d.augment.hflip);
    r.integer("distill", "crop_pad", d.augment.crop_pad);

    r.real("kd", "temperature", c.kd_temperature);

    r.reject_unknown();
    c.validate();
    return c;
}

RunConfig RunConfig::from_text(const std::string& text) { return from_ini(Ini::parse(text)); }

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    try {
        bytes = ckpt::read_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return from_text(std::string(bytes.begin(), bytes.end()));
}

Ini RunConfig::to_ini() const {
    Ini ini;
    ini.set("run", "seed", std::to_string(seed));
    ini.set("run", "out_dir", out_dir);

    ini.set("data", "kind", data.kind == DatasetKind::blobs ? "blobs" : "mnist");
    ini.set("data", "classes", std::to_string(data.classes));
    ini.set("data", "dim", std::to_string(data.dim));
    ini.set("data", "train_per_class", std::to_string(data.train_per_class));
    ini.set("data", "test_per_class", std::to_string(data.test_per_class));
    ini.set("data", "spread", fmt_double(data.spread));
    ini.set("data", "normalization", data.normalization == data::Normalization::unit ? "unit" : "symmetric");
    ini.set("data", "mnist_dir", data.mnist_dir);
    ini.set("data", "mnist_train", std::to_string(data.mnist_train));
    ini.set("data", "mnist_test", std::to_string(data.mnist_test));
    ini.set("data", "gan_disjoint", fmt_bool(data.gan_disjoint));

    for (auto [name, layout] : {std::pair{"teacher", &teacher}, std::pair{"student", &student},
                                std::pair{"generator", &generator}, std::pair{"discriminator", &discriminator}}) {
        ini.set(name, "hidden", fmt_list(layout->hidden));
        ini.set(name, "activation", nets::to_string(layout->activation));
    }

    ini.set("teacher", "epochs", std::to_string(teacher_train.epochs));
    ini.set("teacher", "batch_size", std::to_string(teacher_train.batch_size));
    ini.set("teacher", "lr", fmt_double(teacher_train.lr));
    ini.set("teacher", "momentum", fmt_double(teacher_train.momentum));
    ini.set("teacher", "milestones", fmt_list(teacher_train.milestones));
    ini.set("teacher", "gamma", fmt_double(teacher_train.gamma));
    ini.set("teacher", "hflip", fmt_bool(teacher_train.augment.hflip));
    ini.set("teacher", "crop_pad", std::to_string(teacher_train.augment.crop_pad));

    ini.set("gan", "batch_size", std::to_string(gan.batch_size));
    ini.set("gan", "d_steps", std::to_string(gan.d_steps));
    ini.set("gan", "lr_g", fmt_double(gan.lr_g));
    ini.set("gan", "lr_d", fmt_double(gan.lr_d));
    ini.set("gan", "epochs", std::to_string(gan.epochs));
    ini.set("gan", "variant", gan::to_string(gan.variant));
    ini.set("gan", "gp_lambda", fmt_double(gan.gp_lambda));
    ini.set("gan", "generator_loss", gan::to_string(gan.generator_loss));
    ini.set("gan", "optimizer", gan::to_string(gan.optimizer));
    ini.set("gan", "momentum", fmt_double(gan.momentum));
    ini.set("gan", "clip_norm", fmt_double(gan.clip_norm));
    ini.set("gan", "snapshot_epochs", fmt_list(gan.snapshot_epochs));
    ini.set("gan", "prior", gan::to_string(prior));

    ini.set("distill", "p_norm", std::to_string(distill.p_norm));
    ini.set("distill", "alpha", fmt_double(distill.alpha));
    ini.set("distill", "beta", fmt_double(distill.beta));
    ini.set("distill", "temperature", fmt_double(distill.temperature));
    ini.set("distill", "generator_temperature", fmt_double(distill.generator_temperature));
    ini.set("distill", "feed_logits", fmt_bool(distill.feed_logits));
    ini.set("distill", "batch_size", std::to_string(distill.batch_size));
    ini.set("distill", "epochs", std::to_string(distill.epochs));
    ini.set("distill", "lr", fmt_double(distill.lr));
    ini.set("distill", "momentum", fmt_double(distill.momentum));
    ini.set("distill", "milestones", fmt_list(distill.milestones));
    ini.set("distill", "gamma", fmt_double(distill.gamma));
    ini.set("distill", "clip_norm", fmt_double(distill.clip_norm));
    ini.set("distill", "cache_teacher", fmt_bool(distill.cache_teacher));
    ini.set("distill", "hflip", fmt_bool(distill.augment.hflip));
    ini.set("distill", "crop_pad", std::to_string(distill.augment.crop_pad));

    ini.set("kd", "temperature", fmt_double(kd_temperature));
    return ini;
}

std::string RunConfig::hash() const {
    // where a run writes is not part of what it computes
    RunConfig c = *this;
    c.out_dir.clear();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(c.serialize())));
    return buf;
}

std::size_t RunConfig::input_dim() const { return data.kind == DatasetKind::mnist ? 28 * 28 : data.dim; }

nets::NetworkSpec RunConfig::teacher_spec() const {
    auto s = nets::classifier_spec(input_dim(), data.classes, teacher.hidden);
    s.activation = teacher.activation;
    return s;
}

nets::NetworkSpec RunConfig::student_spec() const {
    auto s = nets::classifier_spec(input_dim(), data.classes, student.hidden);
    s.activation = student.activation;
    return s;
}

nets::NetworkSpec RunConfig::generator_spec() const {
    const auto range =
        data.normalization == data::Normalization::unit ? nets::OutputRange::unit : nets::OutputRange::symmetric;
    auto s = nets::generator_spec(data.classes, input_dim(), generator.hidden, range);
    s.activation = generator.activation;
    return s;
}

nets::NetworkSpec RunConfig::discriminator_spec() const {
    auto s = nets::discriminator_spec(input_dim(), data.classes, discriminator.hidden);
    s.activation = discriminator.activation;
    return s;
}

void RunConfig::validate() const {
    try {
        if (data.classes < 2) throw ConfigError("[data] classes must be at least 2");
        if (data.kind == DatasetKind::blobs && data.dim < 2) throw ConfigError("[data] dim must be at least 2");
        if (data.kind == DatasetKind::blobs && (data.train_per_class == 0 || data.test_per_class == 0))
            throw ConfigError("[data] per-class counts must be positive");
        if (data.kind == DatasetKind::mnist && data.mnist_dir.empty())
            throw ConfigError("[data] mnist_dir is required for the mnist dataset");
        if (data.spread < 0.0) throw ConfigError("[data] spread must be non-negative");
        nets::validate(teacher_spec());
        nets::validate(student_spec());
        nets::validate(generator_spec());
        nets::validate(discriminator_spec());
        if (teacher_train.batch_size == 0) throw ConfigError("[teacher] batch_size must be positive");
        if (!(teacher_train.lr > 0.0)) throw ConfigError("[teacher] lr must be positive");
        if (!(teacher_train.momentum >= 0.0 && teacher_train.momentum < 1.0))
            throw ConfigError("[teacher] momentum must lie in [0,1)");
        if (!(teacher_train.gamma > 0.0 && teacher_train.gamma <= 1.0))
            throw ConfigError("[teacher] gamma must lie in (0,1]");
        gan.validate();
        distill.validate(data.classes);
        if (!(kd_temperature > 0.0)) throw ConfigError("[kd] temperature must be positive");
    } catch (const ConfigError&) {
        throw;
    } catch (const ContractError& e) {
        throw ConfigError(e.what());
    }
}

}  // namespace mekd::config
