// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mekd/tensor.hpp"

namespace mekd::ckpt {

inline constexpr std::uint32_t kFormatVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor value;

    bool operator==(const NamedTensor&) const = default;
};

/// Binary layout, all integers little-endian:
///   "MEKD" | u32 version | u32 count |
///   count x ( u16 name_len | name bytes | u8 rank | rank x u32 extent | f64 values )
std::vector<std::uint8_t> encode(const std::vector<NamedTensor>& params);
std::vector<NamedTensor> decode(std::span<const std::uint8_t> bytes);

void save(const std::filesystem::path& path, const std::vector<NamedTensor>& params);
std::vector<NamedTensor> load(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so an
/// interrupted write never clobbers an existing file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace mekd::ckpt
