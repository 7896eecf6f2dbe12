// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <random>

#include "mekd/data.hpp"
#include "oracles.hpp"

using namespace mekd;
using namespace mekd::data;

namespace {

std::vector<std::uint8_t> be32(std::uint32_t v) {
    return {std::uint8_t(v >> 24), std::uint8_t(v >> 16), std::uint8_t(v >> 8), std::uint8_t(v)};
}

std::vector<std::uint8_t> cat(std::initializer_list<std::vector<std::uint8_t>> parts) {
    std::vector<std::uint8_t> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

TEST(Idx, ParsesAndNormalises) {
    const auto images = cat({{0, 0, 8, 3}, be32(1), be32(2), be32(2), {0, 255, 0, 255}});
    const auto labels = cat({{0, 0, 8, 1}, be32(1), {1}});
    const Dataset ds = parse_idx(images, labels);
    ASSERT_EQ(ds.size(), 1u);
    ASSERT_EQ(ds.dim(), 4u);
    const std::vector<double> expected{0, 1, 0, 1};
    EXPECT_TRUE(std::ranges::equal(ds.sample(0), expected));
    ASSERT_TRUE(ds.image_shape());
    EXPECT_EQ(ds.image_shape()->rows, 2u);
}

TEST(Idx, RejectsUnsupportedMagic) {
    const auto images = cat({{0, 0, 8, 2}, be32(1), be32(2), be32(2), {0, 255, 0, 255}});
    const auto labels = cat({{0, 0, 8, 1}, be32(1), {1}});
    try {
        parse_idx(images, labels);
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("unsupported magic"), std::string::npos);
    }
}

TEST(Idx, RejectsTruncationAndCountMismatch) {
    const auto images = cat({{0, 0, 8, 3}, be32(2), be32(2), be32(2), {0, 255, 0, 255, 1, 2, 3}});
    const auto labels = cat({{0, 0, 8, 1}, be32(2), {1, 0}});
    EXPECT_THROW(parse_idx(images, labels), FormatError);
    const auto images1 = cat({{0, 0, 8, 3}, be32(1), be32(2), be32(2), {0, 255, 0, 255}});
    EXPECT_THROW(parse_idx(images1, labels), FormatError);
}

TEST(Idx, SerializeRoundTrip) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t n = oracle::draw(rng, 1, 6), rows = oracle::draw(rng, 1, 4), cols = oracle::draw(rng, 1, 4);
        Tensor samples(Shape{n, rows * cols});
        std::vector<std::size_t> labels(n);
        for (double& v : samples.values()) v = double(oracle::draw(rng, 0, 255)) / 255.0;
        for (auto& l : labels) l = oracle::draw(rng, 0, 9);
        const Dataset ds(samples, labels, 10, Normalization::unit, ImageShape{rows, cols});
        const auto [img, lab] = serialize_idx(ds);
        const Dataset back = parse_idx(img, lab, 10);
        EXPECT_EQ(back.samples(), ds.samples());
        EvaluationScope scope;
        EXPECT_TRUE(std::ranges::equal(back.labels(), ds.labels()));
    }
}

TEST(Blobs, ZeroSpreadSamplesEqualCentroids) {
    const Dataset ds = synth_blobs(3, 5, 4, 0.0, 11);
    const Tensor c = blob_centroids(3, 5, 11);
    EvaluationScope scope;
    for (std::size_t i = 0; i < ds.size(); ++i)
        EXPECT_TRUE(std::ranges::equal(ds.sample(i), c.row_span(ds.label(i))));
}

TEST(Blobs, DeterministicPerSeed) {
    const Dataset a = synth_blobs(4, 8, 10, 0.1, 3), b = synth_blobs(4, 8, 10, 0.1, 3), c = synth_blobs(4, 8, 10, 0.1, 4);
    EXPECT_EQ(a.samples(), b.samples());
    EXPECT_NE(a.samples(), c.samples());
}

TEST(Blobs, ValuesStayInUnitRange) {
    const Dataset ds = synth_blobs(3, 6, 100, 0.5, 2);
    for (double v : ds.samples().values()) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
}

TEST(Blobs, RejectsDegenerateSizes) {
    EXPECT_THROW(synth_blobs(1, 8, 10, 0.1, 1), ContractError);
    EXPECT_THROW(synth_blobs(3, 1, 10, 0.1, 1), ContractError);
}

// Class means estimated from the samples, then nearest-mean assignment.
TEST(Blobs, NearestCentroidOracleSeparatesClasses) {
    const Dataset ds = synth_blobs(4, 16, 500, 0.05, 7);
    EvaluationScope scope;
    std::vector<std::vector<double>> mean(4, std::vector<double>(16, 0.0));
    std::vector<double> count(4, 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        count[ds.label(i)] += 1;
        for (std::size_t j = 0; j < 16; ++j) mean[ds.label(i)][j] += ds.sample(i)[j];
    }
    for (std::size_t c = 0; c < 4; ++c)
        for (double& v : mean[c]) v /= count[c];
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t c = 0; c < 4; ++c) {
            double d = 0.0;
            for (std::size_t j = 0; j < 16; ++j) d += std::pow(ds.sample(i)[j] - mean[c][j], 2);
            if (d < best_d) best_d = d, best = c;
        }
        correct += best == ds.label(i);
    }
    EXPECT_GE(double(correct) / double(ds.size()), 0.99);
}

TEST(Labels, ReadsOutsideEvaluationAreCounted) {
    const Dataset ds = synth_blobs(2, 4, 3, 0.1, 1);
    ds.reset_label_reads();
    {
        EvaluationScope scope;
        (void)ds.labels();
        (void)ds.label(0);
    }
    EXPECT_EQ(ds.label_reads(), 0u);
    (void)ds.label(1);
    const std::vector<std::size_t> idx{0, 1};
    (void)ds.gather_labels(idx);
    EXPECT_EQ(ds.label_reads(), 2u);
    EXPECT_FALSE(EvaluationScope::active());
}

TEST(Labels, RejectsOutOfRange) {
    EXPECT_THROW(Dataset(Tensor(Shape{2, 2}, 0.5), {0, 3}, 3), ContractError);
    EXPECT_THROW(Dataset(Tensor(Shape{2, 2}, 1.5), {0, 1}, 2), ContractError);
}

TEST(Augment, FlagsOffIsIdentity) {
    std::mt19937_64 rng(1);
    const std::vector<double> x{1, 2, 3, 4};
    EXPECT_EQ(augment(x, ImageShape{2, 2}, {}, rng), x);
    EXPECT_EQ(augment(x, std::nullopt, {}, rng), x);
}

TEST(Augment, HflipDefinitionAndInvolution) {
    const std::vector<double> x{1, 2, 3, 4};
    EXPECT_EQ(hflip(x, {2, 2}), (std::vector<double>{2, 1, 4, 3}));
    std::mt19937_64 rng(2);
    for (int i = 0; i < 10; ++i) {
        const auto img = oracle::random_tensor(Shape{12}, rng);
        const std::vector<double> v(img.values().begin(), img.values().end());
        EXPECT_EQ(hflip(hflip(v, {3, 4}), {3, 4}), v);
    }
}

TEST(Augment, CropShiftsWithZeroPadding) {
    const std::vector<double> x{1, 2, 3, 4};
    EXPECT_EQ(crop(x, {2, 2}, 1, 1, 1), x);
    EXPECT_EQ(crop(x, {2, 2}, 1, 0, 0), (std::vector<double>{0, 0, 0, 1}));
    EXPECT_EQ(crop(x, {2, 2}, 1, 2, 2), (std::vector<double>{4, 0, 0, 0}));
}

TEST(Augment, SpatialFlagsNeedAShape) {
    std::mt19937_64 rng(1);
    const std::vector<double> x{1, 2, 3};
    EXPECT_THROW(augment(x, std::nullopt, {true, 0}, rng), ContractError);
}

TEST(Batches, PartitionArithmetic) {
    const auto b = batches(10, 3, 1, false);
    ASSERT_EQ(b.size(), 4u);
    EXPECT_EQ(b[0], (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(b[3], (std::vector<std::size_t>{9}));
}

TEST(Batches, ShuffledPartitionIsSeededPermutation) {
    const auto a = batches(50, 7, 9, true), b = batches(50, 7, 9, true), c = batches(50, 7, 10, true);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    std::vector<std::size_t> all;
    for (const auto& x : a) all.insert(all.end(), x.begin(), x.end());
    std::ranges::sort(all);
    for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(all[i], i);
}

TEST(Batches, Errors) {
    EXPECT_THROW(batches(5, 0, 1, false), ContractError);
    EXPECT_THROW(batches(5, 6, 1, false), ContractError);
}

TEST(Csv, HeaderAndRows) {
    const Dataset ds(Tensor::matrix(2, 2, {0.0, 0.5, 1.0, 0.25}), {1, 0}, 2);
    const std::string csv = to_csv(ds);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "index,label,v0,v1");
    EXPECT_NE(csv.find("0,1,0,0.5"), std::string::npos);
    EXPECT_EQ(ds.label_reads(), 0u);
}

TEST(Normalization, SymmetricRangeMapping) {
    const Dataset ds(Tensor::matrix(1, 2, {0.0, 1.0}), {0}, 2);
    const Dataset sym = ds.with_normalization(Normalization::symmetric);
    EXPECT_EQ(sym.samples(), Tensor::matrix(1, 2, {-1.0, 1.0}));
}

}  // namespace
