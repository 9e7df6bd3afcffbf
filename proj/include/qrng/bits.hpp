#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qrng {

/// Packed bit array, LSB-first within 64-bit words. Bit i lives in
/// word i / 64 at position i % 64; bits past size() are kept zero.
class BitVector {
 public:
  BitVector() = default;
  explicit BitVector(std::size_t nbits) : words_((nbits + 63) / 64, 0), size_(nbits) {}

  static BitVector from_string(const std::string& bits);  // "0101..." order = index order
  static BitVector from_bytes(std::span<const std::uint8_t> bytes, std::size_t nbits);

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  bool get(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1U; }
  void set(std::size_t i, bool v) {
    const std::uint64_t mask = std::uint64_t{1} << (i & 63);
    if (v) {
      words_[i >> 6] |= mask;
    } else {
      words_[i >> 6] &= ~mask;
    }
  }
  void flip(std::size_t i) { words_[i >> 6] ^= std::uint64_t{1} << (i & 63); }

  void resize(std::size_t nbits);
  void append(const BitVector& other);
  // Appends the low `count` bits of `value`, LSB first.
  void append_bits(std::uint64_t value, unsigned count);

  BitVector slice(std::size_t first, std::size_t count) const;
  std::size_t popcount() const;

  std::span<const std::uint64_t> words() const { return words_; }
  std::span<std::uint64_t> words() { return words_; }

  // Little-endian byte image: byte k holds bits 8k..8k+7, LSB first.
  std::vector<std::uint8_t> to_bytes() const;
  std::string to_string() const;

  BitVector& operator^=(const BitVector& other);
  friend BitVector operator^(BitVector a, const BitVector& b) { return a ^= b; }
  friend bool operator==(const BitVector& a, const BitVector& b) {
    return a.size_ == b.size_ && a.words_ == b.words_;
  }

 private:
  void clear_tail();

  std::vector<std::uint64_t> words_;
  std::size_t size_ = 0;
};

}  // namespace qrng
