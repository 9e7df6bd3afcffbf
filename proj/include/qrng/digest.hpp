#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qrng {

std::vector<std::uint8_t> sha256(std::span<const std::uint8_t> data);
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view text);

// Deterministic byte stream: SHA-256(label || seed || counter) blocks.
std::vector<std::uint8_t> expand_seed(std::uint64_t seed, std::string_view label, std::size_t nbytes);

std::string to_hex(std::span<const std::uint8_t> bytes);

}  // namespace qrng

namespace qrng {

// 64-bit value from SHA-256(label || seed); used to split one config seed into independent streams.
std::uint64_t derive_u64(std::uint64_t seed, std::string_view label);

}  // namespace qrng
