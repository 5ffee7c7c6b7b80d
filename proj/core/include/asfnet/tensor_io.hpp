#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "asfnet/tensor.hpp"

namespace asfnet {

// "ASFT" binary tensor format, version 1: magic 'ASFT', u32 LE version,
// u8 rank (always 4), four u32 LE dims, then N*C*H*W float32 LE row-major.
// Readers reject wrong magic/version and report truncation with the byte
// offset at which data ran out.

void save_asft(std::ostream& out, const Tensor& t);
void save_asft(const std::filesystem::path& path, const Tensor& t);

Tensor load_asft(std::istream& in);
Tensor load_asft(const std::filesystem::path& path);

// Serialized size of a tensor with the given element count, in bytes.
std::size_t asft_byte_size(std::size_t elements);

}  // namespace asfnet
