#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pifnet/tensor.hpp"

namespace pifnet {

/// PIFT binary layout: "PIFT", u32 rank, rank x u32 dims, then
/// product(dims) IEEE-754 doubles. All integers and floats little-endian.
std::vector<std::uint8_t> encode_pift(const Tensor& t);

/// Throws FormatError (with byte offset) on bad magic, rank, dims,
/// truncation or trailing bytes.
Tensor decode_pift(std::span<const std::uint8_t> bytes);

void write_pift(const std::filesystem::path& path, const Tensor& t);
Tensor read_pift(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace pifnet
