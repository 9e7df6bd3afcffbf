#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrng/bits.hpp"
#include "qrng/dsp.hpp"

namespace qrng::extractor {

// Toeplitz matrix convention: T[j][i] = seed[i - j + n - 1] for the n x m matrix.
// Row 0 is seed[n-1 .. n+m-1); column 0 read bottom-up is seed[0 .. n).
struct ExtractorParams {
  std::size_t input_bits = 17600;   // m
  std::size_t output_bits = 11008;  // n
  double epsilon = 1e-17;
  double h_min_per_pair = 0.0;
  int bits_per_pair = 16;
  bool overridden = false;  // (m, n) forced instead of sized
  BitVector seed;           // m + n - 1 bits

  // floor((m / bits_per_pair) * h - 2 log2(1/eps)).
  std::int64_t lhl_limit() const;
  // output_bits - lhl_limit(); positive means the hash output exceeds the LHL bound.
  std::int64_t lhl_excess() const { return static_cast<std::int64_t>(output_bits) - lhl_limit(); }
  std::size_t seed_bits() const { return input_bits + output_bits - 1; }
  // Output bit rate at a raw rate of pairs/s: (n / m) * bits_per_pair * R_rw.
  double extracted_rate(double raw_rate_pairs_per_s) const;

  void validate() const;  // dimensions and seed length
  std::string params_hash() const;  // SHA-256 over the canonical parameters and seed
};

ExtractorParams size_extractor(double h_min_per_pair, int bits_per_pair, double epsilon,
                               std::size_t target_input_bits);
// Keeps h, epsilon and bits_per_pair, forces (m, n); LHL excess is reported, not enforced.
ExtractorParams override_dimensions(ExtractorParams params, std::size_t input_bits, std::size_t output_bits);

BitVector derive_seed(std::uint64_t seed, std::size_t nbits);
BitVector os_entropy_seed(std::size_t nbits);
BitVector seed_from_file(const std::filesystem::path& path, std::size_t nbits);
std::string seed_digest(const BitVector& seed);

/// Dense reference: explicit matrix rows, bit by bit.
BitVector extract_naive(const BitVector& input, const BitVector& seed, std::size_t output_bits);

enum class Kernel { kAuto, kClmul, kPortable };

/// Word-level Toeplitz multiply: the product is the middle band of the
/// GF(2)[z] product of the reversed seed and the input.
class Toeplitz {
 public:
  explicit Toeplitz(const ExtractorParams& params, Kernel kernel = Kernel::kAuto);

  BitVector extract(const BitVector& input) const;
  // Hashes consecutive m-bit blocks of `input` (size = blocks * m) in parallel.
  BitVector extract_blocks(const BitVector& input, std::size_t blocks) const;
  void extract_words(std::span<const std::uint64_t> input_words, std::span<std::uint64_t> output_words) const;

  std::size_t input_bits() const { return m_; }
  std::size_t output_bits() const { return n_; }
  bool uses_clmul() const { return clmul_; }

 private:
  std::size_t m_;
  std::size_t n_;
  bool clmul_;
  std::vector<std::uint64_t> rseed_;  // reversed seed, packed
};

BitVector extract(const BitVector& input, const ExtractorParams& params);

bool cpu_has_clmul();

struct RandomBitstream {
  BitVector bits;
  std::uint64_t blocks_consumed = 0;
  std::string params_hash;
};

/// Requantizes conditioned samples on the effective-resolution grid, packs
/// each pair as q then p (two's complement, LSB first) and hashes full m-bit blocks.
class StreamExtractor {
 public:
  StreamExtractor(ExtractorParams params, int adc_bits, Kernel kernel = Kernel::kAuto);

  // Appends hashed output for every full input block completed by `block`.
  void feed(const dsp::ConditionedBlock& block, RandomBitstream& out);
  void feed_pairs(std::span<const double> q, std::span<const double> p, double resolution_v, RandomBitstream& out);

  const ExtractorParams& params() const { return params_; }
  std::size_t pending_bits() const { return pending_.size(); }

 private:
  ExtractorParams params_;
  int adc_bits_;
  Toeplitz toeplitz_;
  std::string hash_;
  BitVector pending_;
};

void pack_pairs(std::span<const double> q, std::span<const double> p, double resolution_v, int adc_bits,
                BitVector& out);

RandomBitstream extract_stream(std::span<const dsp::ConditionedBlock> blocks, const ExtractorParams& params);

// Sidecar metadata: dimensions, LHL accounting, seed digest and block counts.
std::string sidecar_json(const ExtractorParams& params, std::uint64_t blocks, std::uint64_t bits,
                         const std::string& extra_json_object = "{}");

void write_bits(const std::filesystem::path& path, const BitVector& bits, std::optional<std::size_t> bytes = std::nullopt);

}  // namespace qrng::extractor
