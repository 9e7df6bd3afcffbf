#include "qrng/bits.hpp"

#include <bit>
#include <stdexcept>

namespace qrng {

BitVector BitVector::from_string(const std::string& bits) {
  BitVector out;
  out.words_.reserve((bits.size() + 63) / 64);
  for (char c : bits) {
    if (c == '0' || c == '1') {
      out.append_bits(c == '1' ? 1 : 0, 1);
    } else if (c != ' ' && c != '\n' && c != '\r' && c != '\t') {
      throw std::invalid_argument("BitVector::from_string: unexpected character");
    }
  }
  return out;
}

BitVector BitVector::from_bytes(std::span<const std::uint8_t> bytes, std::size_t nbits) {
  if (nbits > bytes.size() * 8) {
    throw std::invalid_argument("BitVector::from_bytes: not enough bytes");
  }
  BitVector out(nbits);
  for (std::size_t k = 0; k < (nbits + 7) / 8; ++k) {
    out.words_[k / 8] |= std::uint64_t{bytes[k]} << (8 * (k % 8));
  }
  out.clear_tail();
  return out;
}

void BitVector::resize(std::size_t nbits) {
  words_.resize((nbits + 63) / 64, 0);
  size_ = nbits;
  clear_tail();
}

void BitVector::append(const BitVector& other) {
  if (other.empty()) return;
  if ((size_ & 63) == 0) {
    words_.insert(words_.end(), other.words_.begin(), other.words_.end());
    size_ += other.size_;
    return;
  }
  std::size_t remaining = other.size_;
  for (std::uint64_t w : other.words_) {
    const unsigned take = remaining >= 64 ? 64U : static_cast<unsigned>(remaining);
    append_bits(w, take);
    remaining -= take;
  }
}

void BitVector::append_bits(std::uint64_t value, unsigned count) {
  if (count == 0) return;
  if (count < 64) value &= (std::uint64_t{1} << count) - 1;
  const unsigned shift = size_ & 63;
  if (shift == 0) {
    words_.push_back(value);
  } else {
    words_.back() |= value << shift;
    if (shift + count > 64) words_.push_back(value >> (64 - shift));
  }
  size_ += count;
}

BitVector BitVector::slice(std::size_t first, std::size_t count) const {
  if (first + count > size_) throw std::out_of_range("BitVector::slice");
  BitVector out(count);
  const unsigned shift = first & 63;
  const std::size_t base = first >> 6;
  for (std::size_t w = 0; w < out.words_.size(); ++w) {
    std::uint64_t v = words_[base + w] >> shift;
    if (shift != 0 && base + w + 1 < words_.size()) v |= words_[base + w + 1] << (64 - shift);
    out.words_[w] = v;
  }
  out.clear_tail();
  return out;
}

std::size_t BitVector::popcount() const {
  std::size_t n = 0;
  for (std::uint64_t w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::vector<std::uint8_t> BitVector::to_bytes() const {
  std::vector<std::uint8_t> out((size_ + 7) / 8);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = static_cast<std::uint8_t>(words_[k / 8] >> (8 * (k % 8)));
  }
  return out;
}

std::string BitVector::to_string() const {
  std::string s(size_, '0');
  for (std::size_t i = 0; i < size_; ++i) {
    if (get(i)) s[i] = '1';
  }
  return s;
}

BitVector& BitVector::operator^=(const BitVector& other) {
  if (other.size_ != size_) throw std::invalid_argument("BitVector xor: size mismatch");
  for (std::size_t w = 0; w < words_.size(); ++w) words_[w] ^= other.words_[w];
  return *this;
}

void BitVector::clear_tail() {
  if ((size_ & 63) != 0 && !words_.empty()) {
    words_.back() &= (std::uint64_t{1} << (size_ & 63)) - 1;
  }
}

}  // namespace qrng
