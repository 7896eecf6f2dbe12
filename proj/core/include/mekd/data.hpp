// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "mekd/tensor.hpp"

namespace mekd::data {

/// Value range of dataset samples.
enum class Normalization { unit, symmetric };

/// Marks the current thread as performing evaluation. Label reads inside an
/// evaluation scope are not counted as training-path reads.
class EvaluationScope {
public:
    EvaluationScope();
    ~EvaluationScope();
    EvaluationScope(const EvaluationScope&) = delete;
    EvaluationScope& operator=(const EvaluationScope&) = delete;

    static bool active();

private:
    bool previous_;
};

struct ImageShape {
    std::size_t rows = 0;
    std::size_t cols = 0;
};

/// N samples in R^n stored as an [N, n] tensor, with class labels that are
/// meant for evaluation only. Every label read outside an EvaluationScope is
/// counted so training code paths can be audited for label use.
class Dataset {
public:
    Dataset(Tensor samples, std::vector<std::size_t> labels, std::size_t classes,
            Normalization norm = Normalization::unit, std::optional<ImageShape> image = std::nullopt);

    std::size_t size() const { return samples_.rows(); }
    std::size_t dim() const { return samples_.cols(); }
    std::size_t classes() const { return classes_; }
    Normalization normalization() const { return norm_; }
    const std::optional<ImageShape>& image_shape() const { return image_; }

    const Tensor& samples() const { return samples_; }
    std::span<const double> sample(std::size_t i) const { return samples_.row_span(i); }
    /// Rows `indices` stacked into a [k, n] tensor.
    Tensor gather(std::span<const std::size_t> indices) const;

    std::span<const std::size_t> labels() const;
    std::size_t label(std::size_t i) const;
    std::vector<std::size_t> gather_labels(std::span<const std::size_t> indices) const;

    /// Label reads outside any EvaluationScope since construction or the
    /// last reset.
    std::size_t label_reads() const { return label_reads_; }
    void reset_label_reads() const { label_reads_ = 0; }

    Dataset subset(std::span<const std::size_t> indices) const;
    Dataset with_normalization(Normalization norm) const;

private:
    void note_label_read() const;

    Tensor samples_;
    std::vector<std::size_t> labels_;
    std::size_t classes_;
    Normalization norm_;
    std::optional<ImageShape> image_;
    mutable std::size_t label_reads_ = 0;
};

// ---------------------------------------------------------------------------
// IDX (MNIST) files

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parses an IDX image file (u8 pixels, [N, rows, cols]) and its label file.
/// Pixels are scaled to byte / 255. The class count is max(label) + 1 unless
/// `classes` is given.
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                  std::optional<std::size_t> classes = std::nullopt);
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<std::size_t> classes = std::nullopt);
/// Inverse of parse_idx for unit-normalized image datasets; pixels are
/// rounded to the nearest byte.
std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> serialize_idx(const Dataset& ds);

// ---------------------------------------------------------------------------
// Synthetic data

/// C isotropic Gaussian clusters in [0,1]^n. Centroids are drawn uniformly
/// from [0,1]^n, samples are centroid + spread * N(0, I) clipped to [0,1].
/// Samples are interleaved by class (sample i has label i % C).
Dataset synth_blobs(std::size_t classes, std::size_t dim, std::size_t per_class, double spread, std::uint64_t seed);

/// Centroids used by synth_blobs for the same (classes, dim, seed).
Tensor blob_centroids(std::size_t classes, std::size_t dim, std::uint64_t seed);

/// Splits off the first `train_count` samples as the training set; the rest
/// form the test set.
std::pair<Dataset, Dataset> split_head(const Dataset& ds, std::size_t train_count);

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentFlags {
    bool hflip = false;
    std::size_t crop_pad = 0;  // 0 disables random crop

    bool any() const { return hflip || crop_pad > 0; }
};

std::vector<double> hflip(std::span<const double> x, ImageShape shape);
/// Zero-pads by `pad` on every side and takes the rows x cols window whose
/// top-left corner is (dy, dx) in padded coordinates, 0 <= dy, dx <= 2 pad.
std::vector<double> crop(std::span<const double> x, ImageShape shape, std::size_t pad, std::size_t dy,
                         std::size_t dx);
/// Random horizontal flip (p = 0.5) and/or random padded crop.
std::vector<double> augment(std::span<const double> x, std::optional<ImageShape> shape, const AugmentFlags& flags,
                            std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Batching

/// Partition of [0, N) into consecutive batches of `m` (last may be short),
/// optionally after a seeded shuffle.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t m, std::uint64_t seed, bool shuffle);
std::vector<std::vector<std::size_t>> batches(const Dataset& ds, std::size_t m, std::uint64_t seed, bool shuffle);

/// CSV with header `index,label,v0,...,v{n-1}`.
std::string to_csv(const Dataset& ds);

}  // namespace mekd::data
