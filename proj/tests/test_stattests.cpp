#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <boost/math/special_functions/gamma.hpp>
#include <nlohmann/json.hpp>

#include "qrng/error.hpp"
#include "qrng/stattests.hpp"

using namespace qrng;
using namespace qrng::stattests;

namespace {

const char* kPi100 =
    "11001001000011111101101010100010001000010110100011"
    "00001000110100110001001100011001100010100010111000";
const char* kLr128 =
    "11001100000101010110110001001100111000000000001001"
    "00110101010001000100111101011010000000110101111100"
    "1100111001101101100010110010";

BitVector bv(const char* s) { return BitVector::from_string(s); }

double only(const Outcome& o) {
  REQUIRE(o.p_values.size() == 1);
  return o.p_values[0];
}

BitVector prng_bits(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BitVector v(n);
  for (std::size_t i = 0; i < n; i += 64) {
    const std::uint64_t w = rng();
    for (std::size_t k = 0; k < 64 && i + k < n; ++k) v.set(i + k, (w >> k) & 1U);
  }
  return v;
}

constexpr double kTol = 1e-9;

}  // namespace

// Reference p-values from tests/oracles/sp800_22_reference.py.
TEST_CASE("frequency") {
  CHECK(only(frequency(bv("1011010101"))) == doctest::Approx(0.5270892568655381).epsilon(kTol));
  CHECK(only(frequency(bv(kPi100))) == doctest::Approx(0.109598583399116).epsilon(kTol));
  CHECK(frequency(bv("1011010101")).skip.has_value());
  CHECK_FALSE(frequency(bv(kPi100)).skip.has_value());
}

TEST_CASE("block frequency") {
  CHECK(only(block_frequency(bv("0110011010"), 3)) == doctest::Approx(0.8012519569012009).epsilon(kTol));
  CHECK(only(block_frequency(bv(kPi100), 10)) == doctest::Approx(0.7064384496412808).epsilon(kTol));
  CHECK_THROWS_AS(block_frequency(bv(kPi100), 0), ValidationError);
}

TEST_CASE("cumulative sums") {
  CHECK(cumulative_sums(bv("1011010111")).p_values.at(0) == doctest::Approx(0.4116586191538023).epsilon(kTol));
  const auto o = cumulative_sums(bv(kPi100));
  REQUIRE(o.p_values.size() == 2);
  CHECK(o.p_values[0] == doctest::Approx(0.21919399348562665).epsilon(kTol));
  CHECK(o.p_values[1] == doctest::Approx(0.1148662153025217).epsilon(kTol));
}

TEST_CASE("runs") {
  CHECK(only(runs(bv("1001101011"))) == doctest::Approx(0.14723225536366571).epsilon(kTol));
  CHECK(only(runs(bv(kPi100))) == doctest::Approx(0.5007979178870903).epsilon(kTol));
  BitVector alternating(10'000);
  for (std::size_t i = 0; i < alternating.size(); i += 2) alternating.set(i, true);
  CHECK(only(runs(alternating)) < 1e-6);
  CHECK(only(frequency(alternating)) == doctest::Approx(1.0));
}

TEST_CASE("longest run of ones") {
  CHECK(only(longest_run(bv(kLr128))) == doctest::Approx(0.1806093182397121).epsilon(1e-6));
  const auto short_seq = longest_run(bv(kPi100));
  CHECK(short_seq.skip.has_value());
  CHECK(short_seq.p_values.empty());
}

TEST_CASE("discrete Fourier transform") {
  CHECK(only(dft(bv("1001010011"))) == doctest::Approx(0.4681599098544281).epsilon(kTol));
  CHECK(only(dft(bv(kPi100))) == doctest::Approx(0.6463551955394902).epsilon(kTol));
}

TEST_CASE("approximate entropy") {
  CHECK(only(approximate_entropy(bv("0100110101"), 3)) == doctest::Approx(0.2619611048816657).epsilon(kTol));
  CHECK(only(approximate_entropy(bv(kPi100), 2)) == doctest::Approx(0.23530074585898328).epsilon(kTol));
}

TEST_CASE("serial") {
  const auto a = serial(bv("0011011101"), 3);
  REQUIRE(a.p_values.size() == 2);
  CHECK(a.p_values[0] == doctest::Approx(0.8087921354109989).epsilon(kTol));
  CHECK(a.p_values[1] == doctest::Approx(0.6703200460356398).epsilon(kTol));
  const auto b = serial(bv(kPi100), 2);
  CHECK(b.p_values[0] == doctest::Approx(0.25666077695355605).epsilon(kTol));
  CHECK(b.p_values[1] == doctest::Approx(0.689156516779355).epsilon(kTol));
}

TEST_CASE("igamc agrees with boost") {
  for (double a : {0.5, 1.0, 4.5, 10.0, 64.0, 500.0}) {
    for (double x : {0.0, 0.1, 1.0, 3.7, 9.0, 60.0, 480.0, 700.0}) {
      INFO(a << " " << x);
      const double want = boost::math::gamma_q(a, x);
      CHECK(igamc(a, x) == doctest::Approx(want).epsilon(1e-10).scale(1e-300));
    }
  }
  CHECK_THROWS_AS(igamc(0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(igamc(1.0, -1.0), ValidationError);
}

TEST_CASE("p-values of a good PRNG are uniform across 200 sequences") {
  const auto bits = prng_bits(200'000'000, 12345);
  const auto results = run_battery(bits);
  REQUIRE(results.size() == 8);
  for (const auto& r : results) {
    INFO(r.test_name);
    CHECK_FALSE(r.skipped);
    CHECK(r.parameters.at("sequences") == 200);
    for (const auto& [k, v] : r.parameters)
      if (k.rfind("p_value_", 0) == 0) CHECK(v >= 1e-4);
    CHECK(r.parameters.at("pass_proportion") >= r.parameters.at("proportion_lower_bound"));
  }
}

TEST_CASE("battery is deterministic and summarises") {
  const auto bits = prng_bits(2'000'000, 99);
  BatteryConfig serial_cfg;
  serial_cfg.parallel = false;
  const auto a = run_battery(bits);
  const auto b = run_battery(bits, serial_cfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].test_name == b[i].test_name);
    CHECK(a[i].p_value == b[i].p_value);
  }
  const auto s = p_value_summary(a);
  CHECK(s.passed + s.failed + s.skipped == 8);
  CHECK(s.to_table().find("Frequency") != std::string::npos);
  const auto j = nlohmann::json::parse(s.to_json());
  CHECK(j["skipped"] == s.skipped);

  const auto small = run_battery(bv(kPi100));
  const auto ss = p_value_summary(small);
  CHECK(ss.skipped >= 2);
  CHECK(small[4].skipped);
  CHECK_THROWS_AS(run_battery(BitVector{}), ValidationError);
  BatteryConfig bad;
  bad.significance = 1.5;
  CHECK_THROWS_AS(run_battery(bits, bad), ValidationError);

  BitVector zeros(1'000'000);
  const auto z = p_value_summary(run_battery(zeros));
  CHECK_FALSE(z.all_passed());
  CHECK(z.failed >= 5);
}

TEST_CASE("ASCII export") {
  const auto path = std::filesystem::temp_directory_path() / "qrng_tests" / "bits.txt";
  std::filesystem::create_directories(path.parent_path());
  export_ascii(path, bv("0110100"));
  std::ifstream in(path);
  std::string s((std::istreambuf_iterator<char>(in)), {});
  CHECK(s.rfind("0110100", 0) == 0);
}
