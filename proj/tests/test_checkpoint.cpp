// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <bit>
#include <cstring>
#include <filesystem>
#include <random>

#include "mekd/checkpoint.hpp"
#include "oracles.hpp"

using namespace mekd;
namespace fs = std::filesystem;

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(std::uint8_t(bits >> (8 * i)));
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "mekd_ckpt_test";
    fs::create_directories(dir);
    return dir / name;
}

TEST(Checkpoint, EncodesTheDocumentedLayout) {
    const std::vector<ckpt::NamedTensor> params{{"w", Tensor::matrix(1, 2, {1.5, -2.0})}, {"s", Tensor::scalar(0.25)}};
    std::vector<std::uint8_t> expected{'M', 'E', 'K', 'D'};
    put_u32(expected, 1);
    put_u32(expected, 2);
    expected.insert(expected.end(), {1, 0, 'w', 2});
    put_u32(expected, 1);
    put_u32(expected, 2);
    put_f64(expected, 1.5);
    put_f64(expected, -2.0);
    expected.insert(expected.end(), {1, 0, 's', 0});
    put_f64(expected, 0.25);
    EXPECT_EQ(ckpt::encode(params), expected);
}

TEST(Checkpoint, RoundTripsRandomTensors) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<ckpt::NamedTensor> params;
        for (int k = 0; k < 4; ++k)
            params.push_back({"p" + std::to_string(k),
                              oracle::random_tensor(Shape{oracle::draw(rng, 1, 4), oracle::draw(rng, 1, 5)}, rng, -1e3, 1e3)});
        EXPECT_EQ(ckpt::decode(ckpt::encode(params)), params);
    }
}

TEST(Checkpoint, RejectsCorruptInput) {
    const auto bytes = ckpt::encode({{"w", Tensor::row({1.0, 2.0})}});
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(ckpt::decode(bad_magic), FormatError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    EXPECT_THROW(ckpt::decode(bad_version), FormatError);
    for (std::size_t cut : {std::size_t(3), std::size_t(10), bytes.size() - 1})
        EXPECT_THROW(ckpt::decode(std::span(bytes).first(cut)), FormatError) << cut;
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(ckpt::decode(trailing), FormatError);
}

TEST(Checkpoint, SaveLoadAndAtomicReplace) {
    const auto path = scratch("a.ckpt");
    const std::vector<ckpt::NamedTensor> first{{"w", Tensor::row({1.0})}};
    const std::vector<ckpt::NamedTensor> second{{"w", Tensor::row({2.0})}};
    ckpt::save(path, first);
    EXPECT_EQ(ckpt::load(path), first);
    ckpt::save(path, second);
    EXPECT_EQ(ckpt::load(path), second);
    EXPECT_FALSE(fs::exists(path.string() + ".tmp"));
}

TEST(Checkpoint, FailedWriteLeavesPriorFileIntact) {
    const auto path = scratch("keep.ckpt");
    const std::vector<ckpt::NamedTensor> good{{"w", Tensor::row({4.0})}};
    ckpt::save(path, good);
    // The temp path is occupied by a directory, so the write cannot start.
    fs::create_directories(path.string() + ".tmp");
    EXPECT_THROW(ckpt::save(path, {{"w", Tensor::row({5.0})}}), Error);
    fs::remove_all(path.string() + ".tmp");
    EXPECT_EQ(ckpt::load(path), good);
}

TEST(Checkpoint, MissingFileIsAnError) { EXPECT_THROW(ckpt::load(scratch("absent.ckpt")), Error); }

}  // namespace
