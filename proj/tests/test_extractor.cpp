#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "qrng/error.hpp"
#include "qrng/extractor.hpp"

using namespace qrng;
using namespace qrng::extractor;
namespace fs = std::filesystem;

namespace {

BitVector random_bits(std::size_t n, std::mt19937_64& rng) {
  BitVector v(n);
  for (std::size_t i = 0; i < n; ++i) v.set(i, rng() & 1U);
  return v;
}

ExtractorParams params_with(std::size_t m, std::size_t n, BitVector seed) {
  ExtractorParams p;
  p.input_bits = m;
  p.output_bits = n;
  p.seed = std::move(seed);
  return p;
}

// First column and row of the n x m matrix under T[j][i] = seed[i - j + n - 1].
BitVector dense(const BitVector& seed, std::size_t m, std::size_t n, const BitVector& x) {
  std::vector<std::uint8_t> col(n), row(m);
  for (std::size_t j = 0; j < n; ++j) col[j] = seed.get(n - 1 - j);
  for (std::size_t i = 0; i < m; ++i) row[i] = seed.get(i + n - 1);
  return oracle::toeplitz_dense(col, row, x);
}

}  // namespace

TEST_CASE("fast Toeplitz paths match the dense oracle on small instances") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 64);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t m = dim(rng);
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, m)(rng);
    const auto seed = random_bits(m + n - 1, rng);
    const auto x = random_bits(m, rng);
    const auto p = params_with(m, n, seed);
    const auto expected = dense(seed, m, n, x);
    REQUIRE(extract_naive(x, seed, n) == expected);
    REQUIRE(Toeplitz(p, Kernel::kPortable).extract(x) == expected);
    if (cpu_has_clmul()) REQUIRE(Toeplitz(p, Kernel::kClmul).extract(x) == expected);
  }
}

TEST_CASE("fast Toeplitz paths match the oracle at full size") {
  std::mt19937_64 rng(7);
  for (auto [m, n] : {std::pair<std::size_t, std::size_t>{17600, 10944}, {1000, 999}, {129, 65}, {4096, 64}}) {
    const auto seed = random_bits(m + n - 1, rng);
    const auto x = random_bits(m, rng);
    const auto p = params_with(m, n, seed);
    const auto expected = m * n < 2'000'000 ? dense(seed, m, n, x) : extract_naive(x, seed, n);
    CHECK(Toeplitz(p, Kernel::kPortable).extract(x) == expected);
    if (cpu_has_clmul()) CHECK(Toeplitz(p, Kernel::kClmul).extract(x) == expected);
  }
}

TEST_CASE("extraction is linear over GF(2)") {
  std::mt19937_64 rng(5);
  const auto p = params_with(17600, 10944, random_bits(17600 + 10944 - 1, rng));
  const Toeplitz t(p);
  for (int k = 0; k < 5; ++k) {
    const auto x = random_bits(17600, rng);
    const auto y = random_bits(17600, rng);
    CHECK(t.extract(x ^ y) == (t.extract(x) ^ t.extract(y)));
  }
  CHECK(t.extract(BitVector(17600)).popcount() == 0);
}

TEST_CASE("every seed bit influences some basis input") {
  std::mt19937_64 rng(9);
  const std::size_t m = 40, n = 24;
  const auto seed = random_bits(m + n - 1, rng);
  for (std::size_t b = 0; b < seed.size(); ++b) {
    auto flipped = seed;
    flipped.flip(b);
    bool changed = false;
    for (std::size_t i = 0; i < m && !changed; ++i) {
      BitVector e(m);
      e.set(i, true);
      changed = Toeplitz(params_with(m, n, seed)).extract(e) != Toeplitz(params_with(m, n, flipped)).extract(e);
    }
    REQUIRE(changed);
  }
}

TEST_CASE("Toeplitz family is universal") {
  // Two fixed distinct inputs collide with probability 2^-n over random seeds.
  std::mt19937_64 rng(31337);
  const std::size_t m = 16, n = 8;
  const auto x = BitVector::from_string("1011001110001011");
  const auto y = BitVector::from_string("0011100010110101");
  const int trials = 1'000'000;
  int collisions = 0;
  for (int t = 0; t < trials; ++t) {
    const Toeplitz h(params_with(m, n, random_bits(m + n - 1, rng)), Kernel::kPortable);
    collisions += h.extract(x) == h.extract(y) ? 1 : 0;
  }
  CHECK(static_cast<double>(collisions) / trials <= (1.0 / 256) * 1.05);
  CHECK(static_cast<double>(collisions) / trials >= (1.0 / 256) * 0.95);
}

TEST_CASE("leftover-hash sizing") {
  const auto p = size_extractor(10.106, 16, 1e-17, 17600);
  CHECK(p.lhl_limit() == 11003);
  CHECK(p.output_bits <= 11003);
  CHECK(p.output_bits % 64 == 0);
  CHECK(p.output_bits == 10944);
  CHECK(p.lhl_excess() <= 0);

  auto paper = override_dimensions(p, 17600, 11008);
  paper.seed = derive_seed(1, paper.seed_bits());
  CHECK(paper.overridden);
  CHECK(paper.lhl_excess() == 5);
  const auto side = nlohmann::json::parse(sidecar_json(paper, 3, 3 * 11008));
  CHECK(side["extractor"]["lhl_excess"] == 5);
  CHECK(side["extractor"]["lhl_compliant"] == false);
  CHECK(side["warnings"].size() == 1);
  CHECK(side["blocks"] == 3);
  CHECK(side["seed_bits"] == 17600 + 11008 - 1);
  CHECK(paper.extracted_rate(2e9) == doctest::Approx(11008.0 / 17600.0 * 16 * 2e9).epsilon(1e-15));

  CHECK_THROWS_AS(size_extractor(0.05, 16, 1e-17, 17600), SecurityError);
  CHECK_THROWS_AS(size_extractor(0.0, 16, 1e-17, 17600), ValidationError);
  CHECK_THROWS_AS(override_dimensions(p, 100, 101), ValidationError);
  ExtractorParams bad = p;
  bad.seed = BitVector(10);
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("seed provenance") {
  CHECK(derive_seed(1, 1000) == derive_seed(1, 1000));
  CHECK(derive_seed(1, 1000) != derive_seed(2, 1000));
  CHECK(derive_seed(1, 1000).slice(0, 500) == derive_seed(1, 500));
  const auto os = os_entropy_seed(4096);
  CHECK(os.size() == 4096);
  CHECK(os.popcount() > 1800);
  CHECK(os.popcount() < 2300);

  const auto path = fs::temp_directory_path() / "qrng_tests" / "seed.bin";
  fs::create_directories(path.parent_path());
  std::vector<std::uint8_t> bytes(200);
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<std::uint8_t>(i * 37 + 1);
  std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), 200);
  const auto s = seed_from_file(path, 1500);
  CHECK(s == BitVector::from_bytes(bytes, 1500));
  CHECK_THROWS(seed_from_file(path, 1700));

  auto a = params_with(64, 32, derive_seed(1, 95));
  auto b = a;
  b.seed.flip(3);
  CHECK(a.params_hash() != b.params_hash());
  CHECK(a.params_hash() == params_with(64, 32, derive_seed(1, 95)).params_hash());
  CHECK(seed_digest(a.seed).size() == 64);
}

TEST_CASE("pairs are packed q then p, two's complement, LSB first") {
  const std::vector<double> q = {-1.0 * 0.01, 3.0 * 0.01};
  const std::vector<double> p = {1.0 * 0.01, -128.4 * 0.01};
  BitVector out;
  pack_pairs(q, p, 0.01, 8, out);
  CHECK(out.to_string() == "11111111" "10000000" "11000000" "00000001");
  BitVector clipped;
  pack_pairs(std::vector<double>{5.0}, std::vector<double>{-5.0}, 0.01, 8, clipped);
  CHECK(clipped.to_string() == "11111110" "00000001");
}

TEST_CASE("stream extraction keeps whole blocks in order") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 0.05);
  auto params = size_extractor(10.0, 16, 1e-17, 17600);
  params.seed = derive_seed(42, params.seed_bits());
  const double res = 1.0 / 256;
  // 2 full blocks (1100 pairs each) plus 500 pairs.
  dsp::ConditionedBlock a, b;
  for (int i = 0; i < 1700; ++i) {
    a.channel_q.push_back(g(rng));
    a.channel_p.push_back(g(rng));
  }
  for (int i = 0; i < 1000; ++i) {
    b.channel_q.push_back(g(rng));
    b.channel_p.push_back(g(rng));
  }
  a.effective_resolution_v = b.effective_resolution_v = res;
  const std::vector<dsp::ConditionedBlock> blocks = {a, b};
  const auto out = extract_stream(blocks, params);
  CHECK(out.bits.size() == 2 * params.output_bits);
  CHECK(out.blocks_consumed == 2);
  CHECK(out.params_hash == params.params_hash());
  CHECK(extract_stream(blocks, params).bits == out.bits);

  BitVector packed;
  pack_pairs(a.channel_q, a.channel_p, res, 8, packed);
  pack_pairs(b.channel_q, b.channel_p, res, 8, packed);
  const Toeplitz t(params);
  auto manual = t.extract(packed.slice(0, 17600));
  manual.append(t.extract(packed.slice(17600, 17600)));
  CHECK(manual == out.bits);
  CHECK(t.extract_blocks(packed.slice(0, 2 * 17600), 2) == out.bits);

  auto wrong = b;
  wrong.adc_bits = 12;
  StreamExtractor ex(params, 8);
  RandomBitstream sink;
  CHECK_THROWS_AS(ex.feed(wrong, sink), ValidationError);
  CHECK_THROWS_AS(StreamExtractor(params, 12), ValidationError);
}

TEST_CASE("bit files are packed LSB first") {
  const auto bits = BitVector::from_string("1000000001000000111");
  const auto path = fs::temp_directory_path() / "qrng_tests" / "bits.bin";
  fs::create_directories(path.parent_path());
  write_bits(path, bits, 2);
  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
  REQUIRE(bytes.size() == 2);
  CHECK(static_cast<std::uint8_t>(bytes[0]) == 0x01);
  CHECK(static_cast<std::uint8_t>(bytes[1]) == 0x02);
  CHECK_THROWS_AS(write_bits(path, bits, 4), ValidationError);
}
