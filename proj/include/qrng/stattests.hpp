#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrng/bits.hpp"

namespace qrng::stattests {

// Regularized upper incomplete gamma Q(a, x).
double igamc(double a, double x);

struct TestResult {
  std::string test_name;
  double p_value = 0.0;
  bool passed = false;
  std::uint64_t bits_tested = 0;
  std::map<std::string, double> parameters;
  bool skipped = false;
  std::string skip_reason;
};

// Raw statistic of one sequence: one p-value per sub-test, or a skip reason.
struct Outcome {
  std::vector<double> p_values;
  std::map<std::string, double> parameters;
  std::optional<std::string> skip;
};

Outcome frequency(const BitVector& bits);
Outcome block_frequency(const BitVector& bits, std::size_t block_length = 128);
Outcome cumulative_sums(const BitVector& bits);  // forward, backward
Outcome runs(const BitVector& bits);
Outcome longest_run(const BitVector& bits);
Outcome dft(const BitVector& bits);
Outcome approximate_entropy(const BitVector& bits, unsigned m = 10);
Outcome serial(const BitVector& bits, unsigned m = 16);  // del psi^2, del^2 psi^2

struct BatteryConfig {
  double significance = 0.01;
  std::size_t sequence_length = 1'000'000;
  std::size_t block_frequency_length = 128;
  unsigned approximate_entropy_m = 10;
  unsigned serial_m = 16;
  bool parallel = true;
};

/// Runs the eight tests over floor(N / sequence_length) sequences (or one
/// sequence holding all bits when N is shorter). With several sequences the
/// reported p-value is the uniformity P-value of the per-sequence p-values;
/// multi-p-value tests report their smallest sub-test p-value.
std::vector<TestResult> run_battery(const BitVector& bits, const BatteryConfig& cfg = {});

struct Summary {
  std::vector<TestResult> results;
  std::size_t passed = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;

  bool all_passed() const { return failed == 0 && passed > 0; }
  std::string to_table() const;
  std::string to_json() const;
};

Summary p_value_summary(std::span<const TestResult> results);

// ASCII '0'/'1' file as read by the reference SP800-22 tool.
void export_ascii(const std::filesystem::path& path, const BitVector& bits);

}  // namespace qrng::stattests
