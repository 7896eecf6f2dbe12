// SPDX-License-Identifier: Apache-2.0
#include "mekd/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mekd/checkpoint.hpp"

namespace mekd::data {

namespace {
thread_local bool g_in_evaluation = false;
}

EvaluationScope::EvaluationScope() : previous_(g_in_evaluation) { g_in_evaluation = true; }
EvaluationScope::~EvaluationScope() { g_in_evaluation = previous_; }
bool EvaluationScope::active() { return g_in_evaluation; }

// ---------------------------------------------------------------------------

Dataset::Dataset(Tensor samples, std::vector<std::size_t> labels, std::size_t classes, Normalization norm,
                 std::optional<ImageShape> image)
    : samples_(std::move(samples)), labels_(std::move(labels)), classes_(classes), norm_(norm), image_(image) {
    if (samples_.rank() != 2) throw ShapeError("dataset samples must be an [N, n] tensor");
    if (labels_.size() != samples_.rows()) throw ShapeError("label count does not match sample count");
    if (classes_ < 1) throw ContractError("dataset needs at least one class");
    for (std::size_t l : labels_)
        if (l >= classes_) throw ContractError("label " + std::to_string(l) + " outside [0, C)");
    const double lo = norm_ == Normalization::unit ? 0.0 : -1.0;
    for (double v : samples_.values())
        if (!(v >= lo && v <= 1.0)) throw ContractError("sample value outside the declared normalization range");
    if (image_ && image_->rows * image_->cols != samples_.cols())
        throw ShapeError("image shape does not match sample dimension");
}

void Dataset::note_label_read() const {
    if (!EvaluationScope::active()) ++label_reads_;
}

std::span<const std::size_t> Dataset::labels() const {
    note_label_read();
    return labels_;
}

std::size_t Dataset::label(std::size_t i) const {
    note_label_read();
    return labels_.at(i);
}

std::vector<std::size_t> Dataset::gather_labels(std::span<const std::size_t> indices) const {
    note_label_read();
    std::vector<std::size_t> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(labels_.at(i));
    return out;
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
    const std::size_t n = dim();
    Tensor out(Shape{indices.size(), n});
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= size()) throw ContractError("sample index out of range");
        std::ranges::copy(samples_.row_span(indices[k]), out.row_span(k).begin());
    }
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    std::vector<std::size_t> lab;
    lab.reserve(indices.size());
    for (std::size_t i : indices) lab.push_back(labels_.at(i));
    return Dataset(gather(indices), std::move(lab), classes_, norm_, image_);
}

Dataset Dataset::with_normalization(Normalization norm) const {
    if (norm == norm_) return *this;
    Tensor s = samples_;
    for (double& v : s.values()) v = norm == Normalization::symmetric ? 2.0 * v - 1.0 : 0.5 * (v + 1.0);
    return Dataset(std::move(s), labels_, classes_, norm, image_);
}

// ---------------------------------------------------------------------------

namespace {
std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
    if (at + 4 > b.size()) throw FormatError("IDX header truncated");
    return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) | (std::uint32_t(b[at + 2]) << 8) |
           std::uint32_t(b[at + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(std::uint8_t(v >> s));
}

std::string hex_magic(std::uint32_t m) {
    std::ostringstream os;
    os << "0x" << std::hex;
    os.width(8);
    os.fill('0');
    os << m;
    return os.str();
}
}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                  std::optional<std::size_t> classes) {
    const std::uint32_t im = read_be32(images, 0);
    if (im != kIdxImageMagic) throw FormatError("unsupported magic " + hex_magic(im) + " in image file");
    const std::uint32_t lm = read_be32(labels, 0);
    if (lm != kIdxLabelMagic) throw FormatError("unsupported magic " + hex_magic(lm) + " in label file");

    const std::size_t n = read_be32(images, 4);
    const std::size_t rows = read_be32(images, 8);
    const std::size_t cols = read_be32(images, 12);
    const std::size_t n_labels = read_be32(labels, 4);
    if (n != n_labels)
        throw FormatError("image count " + std::to_string(n) + " does not match label count " +
                          std::to_string(n_labels));
    if (n == 0 || rows == 0 || cols == 0) throw FormatError("IDX file declares an empty dataset");
    const std::size_t dim = rows * cols;
    if (images.size() < 16 + n * dim) throw FormatError("IDX image payload truncated");
    if (labels.size() < 8 + n) throw FormatError("IDX label payload truncated");

    Tensor samples(Shape{n, dim});
    for (std::size_t i = 0; i < n * dim; ++i) samples[i] = images[16 + i] / 255.0;
    std::vector<std::size_t> lab(labels.begin() + 8, labels.begin() + 8 + std::ptrdiff_t(n));
    const std::size_t c = classes.value_or(*std::ranges::max_element(lab) + 1);
    return Dataset(std::move(samples), std::move(lab), c, Normalization::unit, ImageShape{rows, cols});
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<std::size_t> classes) {
    return parse_idx(ckpt::read_file(images), ckpt::read_file(labels), classes);
}

std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> serialize_idx(const Dataset& ds) {
    if (ds.normalization() != Normalization::unit) throw ContractError("serialize_idx expects unit-range data");
    const ImageShape shape = ds.image_shape().value_or(ImageShape{1, ds.dim()});
    std::vector<std::uint8_t> img, lab;
    write_be32(img, kIdxImageMagic);
    write_be32(img, std::uint32_t(ds.size()));
    write_be32(img, std::uint32_t(shape.rows));
    write_be32(img, std::uint32_t(shape.cols));
    for (double v : ds.samples().values()) img.push_back(std::uint8_t(std::lround(v * 255.0)));
    write_be32(lab, kIdxLabelMagic);
    write_be32(lab, std::uint32_t(ds.size()));
    for (std::size_t l : ds.labels()) lab.push_back(std::uint8_t(l));
    return {std::move(img), std::move(lab)};
}

// ---------------------------------------------------------------------------

Tensor blob_centroids(std::size_t classes, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor c(Shape{classes, dim});
    for (double& v : c.values()) v = u(rng);
    return c;
}

Dataset synth_blobs(std::size_t classes, std::size_t dim, std::size_t per_class, double spread, std::uint64_t seed) {
    if (classes < 2 || dim < 2) throw ContractError("synth_blobs needs C >= 2 and n >= 2");
    if (per_class == 0) throw ContractError("synth_blobs needs at least one sample per class");
    const Tensor centroids = blob_centroids(classes, dim, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t n = classes * per_class;
    Tensor samples(Shape{n, dim});
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % classes;
        labels[i] = c;
        for (std::size_t j = 0; j < dim; ++j) {
            const double v = centroids.at(c, j) + spread * gauss(rng);
            samples.at(i, j) = std::clamp(v, 0.0, 1.0);
        }
    }
    std::optional<ImageShape> image;
    const auto side = std::size_t(std::lround(std::sqrt(double(dim))));
    if (side * side == dim) image = ImageShape{side, side};
    return Dataset(std::move(samples), std::move(labels), classes, Normalization::unit, image);
}

std::pair<Dataset, Dataset> split_head(const Dataset& ds, std::size_t train_count) {
    if (train_count == 0 || train_count >= ds.size()) throw ContractError("split must leave both parts non-empty");
    std::vector<std::size_t> head(train_count), tail(ds.size() - train_count);
    std::iota(head.begin(), head.end(), std::size_t{0});
    std::iota(tail.begin(), tail.end(), train_count);
    return {ds.subset(head), ds.subset(tail)};
}

// ---------------------------------------------------------------------------

std::vector<double> hflip(std::span<const double> x, ImageShape shape) {
    if (shape.rows * shape.cols != x.size()) throw ShapeError("hflip: image shape does not match input length");
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < shape.rows; ++r)
        for (std::size_t c = 0; c < shape.cols; ++c)
            out[r * shape.cols + c] = x[r * shape.cols + (shape.cols - 1 - c)];
    return out;
}

std::vector<double> crop(std::span<const double> x, ImageShape shape, std::size_t pad, std::size_t dy,
                         std::size_t dx) {
    if (shape.rows * shape.cols != x.size()) throw ShapeError("crop: image shape does not match input length");
    if (dy > 2 * pad || dx > 2 * pad) throw ContractError("crop offset outside the padded image");
    std::vector<double> out(x.size(), 0.0);
    for (std::size_t r = 0; r < shape.rows; ++r) {
        const std::ptrdiff_t sr = std::ptrdiff_t(r + dy) - std::ptrdiff_t(pad);
        if (sr < 0 || sr >= std::ptrdiff_t(shape.rows)) continue;
        for (std::size_t c = 0; c < shape.cols; ++c) {
            const std::ptrdiff_t sc = std::ptrdiff_t(c + dx) - std::ptrdiff_t(pad);
            if (sc < 0 || sc >= std::ptrdiff_t(shape.cols)) continue;
            out[r * shape.cols + c] = x[std::size_t(sr) * shape.cols + std::size_t(sc)];
        }
    }
    return out;
}

std::vector<double> augment(std::span<const double> x, std::optional<ImageShape> shape, const AugmentFlags& flags,
                            std::mt19937_64& rng) {
    std::vector<double> out(x.begin(), x.end());
    if (!flags.any()) return out;
    if (!shape) throw ContractError("spatial augmentation requested on non-spatial data");
    if (flags.crop_pad > 0) {
        std::uniform_int_distribution<std::size_t> off(0, 2 * flags.crop_pad);
        const std::size_t dy = off(rng), dx = off(rng);
        out = crop(out, *shape, flags.crop_pad, dy, dx);
    }
    if (flags.hflip && std::bernoulli_distribution(0.5)(rng)) out = hflip(out, *shape);
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t m, std::uint64_t seed, bool shuffle) {
    if (m < 1) throw ContractError("batch size must be at least 1");
    if (m > n) throw ContractError("batch size " + std::to_string(m) + " exceeds dataset size " + std::to_string(n));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += m)
        out.emplace_back(order.begin() + std::ptrdiff_t(start), order.begin() + std::ptrdiff_t(std::min(n, start + m)));
    return out;
}

std::vector<std::vector<std::size_t>> batches(const Dataset& ds, std::size_t m, std::uint64_t seed, bool shuffle) {
    return batches(ds.size(), m, seed, shuffle);
}

std::string to_csv(const Dataset& ds) {
    EvaluationScope inspection;
    std::ostringstream os;
    os.precision(17);
    os << "index,label";
    for (std::size_t j = 0; j < ds.dim(); ++j) os << ",v" << j;
    os << '\n';
    const auto labels = ds.labels();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        os << i << ',' << labels[i];
        for (double v : ds.sample(i)) os << ',' << v;
        os << '\n';
    }
    return os.str();
}

}  // namespace mekd::data
