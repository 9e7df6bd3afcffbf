#include "qrng/extractor.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qrng/digest.hpp"
#include "qrng/error.hpp"

namespace qrng::extractor {
namespace {

constexpr double kH = 1e-12;  // slack for h values like 16 - 1e-16

std::int64_t round_down_64(std::int64_t v) { return v < 0 ? v : (v / 64) * 64; }

inline void clmul_portable(std::uint64_t a, std::uint64_t b, std::uint64_t& lo, std::uint64_t& hi) {
  std::uint64_t l = 0;
  std::uint64_t h = 0;
  for (unsigned i = 0; i < 64; ++i) {
    const std::uint64_t mask = 0 - ((a >> i) & 1U);
    l ^= (b << i) & mask;
    if (i != 0) h ^= (b >> (64 - i)) & mask;
  }
  lo = l;
  hi = h;
}

// acc[d - d0] = XOR over a + b = d of x[a] * s[b], for d in [d0, d1].
__attribute__((target("pclmul,sse4.1"))) void band_product_clmul(const std::uint64_t* x, std::size_t xw,
                                                                  const std::uint64_t* s, std::size_t sw,
                                                                  std::int64_t d0, std::int64_t d1,
                                                                  std::uint64_t* lo, std::uint64_t* hi) {
  for (std::int64_t d = d0; d <= d1; ++d) {
    const std::int64_t a0 = std::max<std::int64_t>(0, d - static_cast<std::int64_t>(sw) + 1);
    const std::int64_t a1 = std::min<std::int64_t>(static_cast<std::int64_t>(xw) - 1, d);
    __m128i acc0 = _mm_setzero_si128();
    __m128i acc1 = _mm_setzero_si128();
    std::int64_t a = a0;
    for (; a + 1 <= a1; a += 2) {
      // x[a], x[a+1] against s[d-a], s[d-a-1].
      const __m128i xv = _mm_loadu_si128(reinterpret_cast<const __m128i*>(x + a));
      const __m128i sv = _mm_loadu_si128(reinterpret_cast<const __m128i*>(s + (d - a - 1)));
      acc0 = _mm_xor_si128(acc0, _mm_clmulepi64_si128(xv, sv, 0x10));
      acc1 = _mm_xor_si128(acc1, _mm_clmulepi64_si128(xv, sv, 0x01));
    }
    if (a <= a1) {
      const __m128i xv = _mm_cvtsi64_si128(static_cast<long long>(x[a]));
      const __m128i sv = _mm_cvtsi64_si128(static_cast<long long>(s[d - a]));
      acc0 = _mm_xor_si128(acc0, _mm_clmulepi64_si128(xv, sv, 0x00));
    }
    acc0 = _mm_xor_si128(acc0, acc1);
    lo[d - d0] = static_cast<std::uint64_t>(_mm_cvtsi128_si64(acc0));
    hi[d - d0] = static_cast<std::uint64_t>(_mm_extract_epi64(acc0, 1));
  }
}

void band_product_portable(const std::uint64_t* x, std::size_t xw, const std::uint64_t* s, std::size_t sw,
                           std::int64_t d0, std::int64_t d1, std::uint64_t* lo, std::uint64_t* hi) {
  for (std::int64_t d = d0; d <= d1; ++d) {
    const std::int64_t a0 = std::max<std::int64_t>(0, d - static_cast<std::int64_t>(sw) + 1);
    const std::int64_t a1 = std::min<std::int64_t>(static_cast<std::int64_t>(xw) - 1, d);
    std::uint64_t l = 0;
    std::uint64_t h = 0;
    for (std::int64_t a = a0; a <= a1; ++a) {
      std::uint64_t pl;
      std::uint64_t ph;
      clmul_portable(x[a], s[d - a], pl, ph);
      l ^= pl;
      h ^= ph;
    }
    lo[d - d0] = l;
    hi[d - d0] = h;
  }
}

}  // namespace

bool cpu_has_clmul() {
  __builtin_cpu_init();
  return __builtin_cpu_supports("pclmul") && __builtin_cpu_supports("sse4.1");
}

std::int64_t ExtractorParams::lhl_limit() const {
  const double k = static_cast<double>(input_bits) / bits_per_pair * h_min_per_pair;
  return static_cast<std::int64_t>(std::floor(k - 2.0 * std::log2(1.0 / epsilon) + kH));
}

void ExtractorParams::validate() const {
  if (input_bits == 0 || output_bits == 0) throw ValidationError("extractor dimensions must be > 0");
  if (output_bits > input_bits) throw ValidationError("extractor output longer than input");
  if (bits_per_pair <= 0 || bits_per_pair > 32) throw ValidationError("bits_per_pair out of range");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must be in (0, 1]");
  if (seed.size() != seed_bits()) throw ValidationError("seed length must equal m + n - 1");
}

std::string ExtractorParams::params_hash() const {
  std::ostringstream os;
  os.precision(17);
  os << "toeplitz-v1;m=" << input_bits << ";n=" << output_bits << ";eps=" << epsilon << ";h=" << h_min_per_pair
     << ";bpp=" << bits_per_pair << ";override=" << overridden << ";seed=";
  const auto bytes = seed.to_bytes();
  os << to_hex(bytes);
  return sha256_hex(os.str());
}

double ExtractorParams::extracted_rate(double raw_rate_pairs_per_s) const {
  if (input_bits == 0) throw ValidationError("input_bits must be > 0");
  return static_cast<double>(output_bits) / static_cast<double>(input_bits) * bits_per_pair * raw_rate_pairs_per_s;
}

ExtractorParams size_extractor(double h_min_per_pair, int bits_per_pair, double epsilon,
                               std::size_t target_input_bits) {
  if (bits_per_pair <= 0) throw ValidationError("bits_per_pair must be > 0");
  if (!(h_min_per_pair > 0.0) || h_min_per_pair > bits_per_pair + kH) {
    throw ValidationError("h_min must be in (0, bits_per_pair]");
  }
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw ValidationError("epsilon must be in (0, 1)");
  if (target_input_bits == 0) throw ValidationError("input size must be > 0");
  ExtractorParams p;
  p.input_bits = target_input_bits;
  p.epsilon = epsilon;
  p.h_min_per_pair = std::min(h_min_per_pair, static_cast<double>(bits_per_pair));
  p.bits_per_pair = bits_per_pair;
  const std::int64_t limit = std::min<std::int64_t>(p.lhl_limit(), static_cast<std::int64_t>(target_input_bits));
  const std::int64_t out = round_down_64(limit);
  if (out <= 0) throw SecurityError("min-entropy too low: leftover-hash output would be empty");
  p.output_bits = static_cast<std::size_t>(out);
  return p;
}

ExtractorParams override_dimensions(ExtractorParams params, std::size_t input_bits, std::size_t output_bits) {
  if (input_bits == 0 || output_bits == 0 || output_bits > input_bits) {
    throw ValidationError("override needs 0 < output_bits <= input_bits");
  }
  params.input_bits = input_bits;
  params.output_bits = output_bits;
  params.overridden = true;
  params.seed = BitVector();
  return params;
}

BitVector derive_seed(std::uint64_t seed, std::size_t nbits) {
  const auto bytes = expand_seed(seed, "toeplitz-seed", (nbits + 7) / 8);
  return BitVector::from_bytes(bytes, nbits);
}

BitVector os_entropy_seed(std::size_t nbits) {
  std::random_device rd;
  std::vector<std::uint8_t> bytes((nbits + 7) / 8);
  for (std::size_t i = 0; i < bytes.size(); i += 4) {
    const std::uint32_t v = rd();
    for (std::size_t k = 0; k < 4 && i + k < bytes.size(); ++k) bytes[i + k] = static_cast<std::uint8_t>(v >> (8 * k));
  }
  return BitVector::from_bytes(bytes, nbits);
}

BitVector seed_from_file(const std::filesystem::path& path, std::size_t nbits) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read seed file " + path.string());
  std::vector<std::uint8_t> bytes((nbits + 7) / 8);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) {
    throw ValidationError("seed file shorter than the required " + std::to_string(nbits) + " bits");
  }
  return BitVector::from_bytes(bytes, nbits);
}

std::string seed_digest(const BitVector& seed) { return sha256_hex(seed.to_bytes()); }

BitVector extract_naive(const BitVector& input, const BitVector& seed, std::size_t n) {
  const std::size_t m = input.size();
  if (seed.size() != m + n - 1) throw ValidationError("seed length must equal m + n - 1");
  BitVector out(n);
  for (std::size_t j = 0; j < n; ++j) {
    bool acc = false;
    for (std::size_t i = 0; i < m; ++i) acc ^= seed.get(i + n - 1 - j) && input.get(i);
    out.set(j, acc);
  }
  return out;
}

Toeplitz::Toeplitz(const ExtractorParams& params, Kernel kernel)
    : m_(params.input_bits), n_(params.output_bits) {
  params.validate();
  clmul_ = kernel == Kernel::kClmul || (kernel == Kernel::kAuto && cpu_has_clmul());
  if (kernel == Kernel::kClmul && !cpu_has_clmul()) throw ValidationError("CPU lacks carry-less multiply");
  const std::size_t len = m_ + n_ - 1;
  BitVector r(len);
  for (std::size_t t = 0; t < len; ++t) {
    if (params.seed.get(len - 1 - t)) r.set(t, true);
  }
  rseed_.assign(r.words().begin(), r.words().end());
  rseed_.push_back(0);  // lets the paired loads read one word past the end
}

void Toeplitz::extract_words(std::span<const std::uint64_t> x, std::span<std::uint64_t> y) const {
  const std::size_t xw = (m_ + 63) / 64;
  const std::size_t ow = (n_ + 63) / 64;
  if (x.size() < xw || y.size() < ow) throw ValidationError("extract_words: buffer too small");
  // Output bit j is product coefficient m - 1 + j.
  const std::size_t c0 = m_ - 1;
  const auto r0 = static_cast<std::int64_t>(c0 / 64);
  const unsigned sh = static_cast<unsigned>(c0 % 64);
  const std::size_t sw = rseed_.size() - 1;
  const std::int64_t dmax = static_cast<std::int64_t>(xw + sw) - 2;
  const std::int64_t d0 = std::max<std::int64_t>(0, r0 - 1);
  const std::int64_t d1 = std::min<std::int64_t>(dmax, r0 + static_cast<std::int64_t>(ow));
  const std::size_t span = static_cast<std::size_t>(r0 + static_cast<std::int64_t>(ow) - d0 + 2);
  std::vector<std::uint64_t> lo(span, 0);
  std::vector<std::uint64_t> hi(span, 0);
  if (d1 >= d0) {
    if (clmul_) {
      band_product_clmul(x.data(), xw, rseed_.data(), sw, d0, d1, lo.data(), hi.data());
    } else {
      band_product_portable(x.data(), xw, rseed_.data(), sw, d0, d1, lo.data(), hi.data());
    }
  }
  // Product word r = lo[r] ^ hi[r - 1].
  auto word = [&](std::int64_t r) -> std::uint64_t {
    std::uint64_t v = 0;
    if (r >= d0 && r <= d1) v ^= lo[static_cast<std::size_t>(r - d0)];
    if (r - 1 >= d0 && r - 1 <= d1) v ^= hi[static_cast<std::size_t>(r - 1 - d0)];
    return v;
  };
  for (std::size_t w = 0; w < ow; ++w) {
    const std::int64_t r = r0 + static_cast<std::int64_t>(w);
    std::uint64_t v = word(r) >> sh;
    if (sh != 0) v |= word(r + 1) << (64 - sh);
    y[w] = v;
  }
  if (n_ % 64 != 0) y[ow - 1] &= (std::uint64_t{1} << (n_ % 64)) - 1;
}

BitVector Toeplitz::extract(const BitVector& input) const {
  if (input.size() != m_) throw ValidationError("input block length must equal input_bits");
  BitVector out(n_);
  extract_words(input.words(), out.words());
  return out;
}

BitVector Toeplitz::extract_blocks(const BitVector& input, std::size_t blocks) const {
  if (input.size() != blocks * m_) throw ValidationError("input is not a whole number of blocks");
  const std::size_t ow = (n_ + 63) / 64;
  std::vector<std::uint64_t> outw(blocks * ow);
  const bool aligned = m_ % 64 == 0;
  const auto nb = static_cast<std::int64_t>(blocks);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t b = 0; b < nb; ++b) {
    std::span<std::uint64_t> dst(outw.data() + b * ow, ow);
    if (aligned) {
      extract_words(input.words().subspan(static_cast<std::size_t>(b) * (m_ / 64), m_ / 64), dst);
    } else {
      const BitVector blk = input.slice(static_cast<std::size_t>(b) * m_, m_);
      extract_words(blk.words(), dst);
    }
  }
  BitVector out;
  if (n_ % 64 == 0) {
    out.resize(blocks * n_);
    std::copy(outw.begin(), outw.end(), out.words().begin());
    return out;
  }
  for (std::size_t b = 0; b < blocks; ++b) {
    std::size_t left = n_;
    for (std::size_t w = 0; w < ow; ++w) {
      const unsigned take = left >= 64 ? 64U : static_cast<unsigned>(left);
      out.append_bits(outw[b * ow + w], take);
      left -= take;
    }
  }
  return out;
}

BitVector extract(const BitVector& input, const ExtractorParams& params) { return Toeplitz(params).extract(input); }

void pack_pairs(std::span<const double> q, std::span<const double> p, double resolution_v, int adc_bits,
                BitVector& out) {
  if (q.size() != p.size()) throw ValidationError("channel lengths differ");
  if (!(resolution_v > 0.0)) throw ValidationError("resolution must be > 0");
  const double lo = -static_cast<double>(1 << (adc_bits - 1));
  const double hi = static_cast<double>((1 << (adc_bits - 1)) - 1);
  const double inv = 1.0 / resolution_v;
  const std::uint64_t mask = (std::uint64_t{1} << adc_bits) - 1;
  const auto bits = static_cast<unsigned>(adc_bits);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto cq = static_cast<std::int64_t>(std::clamp(std::nearbyint(q[i] * inv), lo, hi));
    const auto cp = static_cast<std::int64_t>(std::clamp(std::nearbyint(p[i] * inv), lo, hi));
    out.append_bits(static_cast<std::uint64_t>(cq) & mask, bits);
    out.append_bits(static_cast<std::uint64_t>(cp) & mask, bits);
  }
}

StreamExtractor::StreamExtractor(ExtractorParams params, int adc_bits, Kernel kernel)
    : params_(std::move(params)), adc_bits_(adc_bits), toeplitz_(params_, kernel), hash_(params_.params_hash()) {
  if (adc_bits < 2 || adc_bits > 16) throw ValidationError("adc_bits must be in [2, 16]");
  if (params_.bits_per_pair != 2 * adc_bits) throw ValidationError("extractor bits_per_pair does not match stream bit depth");
}

void StreamExtractor::feed(const dsp::ConditionedBlock& block, RandomBitstream& out) {
  if (block.adc_bits != adc_bits_) throw ValidationError("extractor bits_per_pair does not match stream bit depth");
  feed_pairs(block.channel_q, block.channel_p, block.effective_resolution_v, out);
}

void StreamExtractor::feed_pairs(std::span<const double> q, std::span<const double> p, double resolution_v,
                                 RandomBitstream& out) {
  if (out.params_hash.empty()) out.params_hash = hash_;
  if (out.params_hash != hash_) throw ValidationError("bitstream was produced with different extractor params");
  pack_pairs(q, p, resolution_v, adc_bits_, pending_);
  const std::size_t m = params_.input_bits;
  const std::size_t blocks = pending_.size() / m;
  if (blocks == 0) return;
  const std::size_t used = blocks * m;
  const BitVector hashed = toeplitz_.extract_blocks(used == pending_.size() ? pending_ : pending_.slice(0, used), blocks);
  out.bits.append(hashed);
  out.blocks_consumed += blocks;
  pending_ = pending_.slice(used, pending_.size() - used);
}

RandomBitstream extract_stream(std::span<const dsp::ConditionedBlock> blocks, const ExtractorParams& params) {
  RandomBitstream out;
  if (blocks.empty()) return out;
  StreamExtractor ex(params, blocks.front().adc_bits);
  for (const auto& b : blocks) ex.feed(b, out);
  return out;
}

std::string sidecar_json(const ExtractorParams& p, std::uint64_t blocks, std::uint64_t bits,
                         const std::string& extra_json_object) {
  nlohmann::json j = nlohmann::json::parse(extra_json_object);
  const double k = static_cast<double>(p.input_bits) / p.bits_per_pair * p.h_min_per_pair;
  const double penalty = 2.0 * std::log2(1.0 / p.epsilon);
  j["extractor"] = {{"input_bits", p.input_bits},
                    {"output_bits", p.output_bits},
                    {"epsilon", p.epsilon},
                    {"h_min_per_pair", p.h_min_per_pair},
                    {"bits_per_pair", p.bits_per_pair},
                    {"input_min_entropy_bits", k},
                    {"lhl_penalty_bits", penalty},
                    {"lhl_limit", p.lhl_limit()},
                    {"lhl_excess", p.lhl_excess()},
                    {"lhl_compliant", p.lhl_excess() <= 0},
                    {"overridden", p.overridden}};
  auto warnings = nlohmann::json::array();
  if (p.lhl_excess() > 0) {
    warnings.push_back("output_bits exceeds the leftover-hash bound floor(k - 2 log2(1/eps)) = " +
                       std::to_string(p.lhl_limit()) + " by " + std::to_string(p.lhl_excess()) + " bits");
  }
  j["warnings"] = warnings;
  j["seed_bits"] = p.seed.size();
  j["seed_sha256"] = seed_digest(p.seed);
  j["params_hash"] = p.params_hash();
  j["blocks"] = blocks;
  j["output_bits_total"] = bits;
  return j.dump(2);
}

void write_bits(const std::filesystem::path& path, const BitVector& bits, std::optional<std::size_t> bytes) {
  auto data = bits.to_bytes();
  if (bytes) {
    if (*bytes > data.size()) throw ValidationError("not enough extracted bits for the requested byte count");
    data.resize(*bytes);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace qrng::extractor
