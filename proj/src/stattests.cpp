#include "qrng/stattests.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>

#include <fftw3.h>
#include <nlohmann/json.hpp>

#include "qrng/error.hpp"

namespace qrng::stattests {
namespace {

constexpr double kEps = 1e-15;
constexpr int kMaxIter = 1'000'000;

double igam_series(double a, double x) {
  double sum = 1.0 / a;
  double term = sum;
  for (int n = 1; n < kMaxIter; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Lentz continued fraction for Q(a, x).
double igamc_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

int log2_floor(std::size_t n) { return n == 0 ? 0 : static_cast<int>(std::bit_width(n)) - 1; }

// Overlapping pattern counts of length m with wrap-around.
std::vector<std::uint32_t> pattern_counts(const BitVector& bits, unsigned m) {
  std::vector<std::uint32_t> counts(std::size_t{1} << m, 0);
  const std::size_t n = bits.size();
  if (m == 0) {
    counts[0] = static_cast<std::uint32_t>(n);
    return counts;
  }
  const std::uint32_t mask = (std::uint32_t{1} << m) - 1;
  std::uint32_t w = 0;
  for (unsigned k = 0; k + 1 < m; ++k) w = (w << 1) | static_cast<std::uint32_t>(bits.get(k % n));
  for (std::size_t i = 0; i < n; ++i) {
    w = ((w << 1) | static_cast<std::uint32_t>(bits.get((i + m - 1) % n))) & mask;
    ++counts[w];
  }
  return counts;
}

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

double igamc(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || std::isnan(x)) throw ValidationError("igamc: invalid arguments");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return std::clamp(1.0 - igam_series(a, x), 0.0, 1.0);
  return std::clamp(igamc_fraction(a, x), 0.0, 1.0);
}

Outcome frequency(const BitVector& bits) {
  Outcome o;
  const auto n = static_cast<double>(bits.size());
  if (bits.size() < 100) o.skip = "needs >= 100 bits";
  if (bits.empty()) return o;
  const double s = 2.0 * static_cast<double>(bits.popcount()) - n;
  const double s_obs = std::abs(s) / std::sqrt(n);
  o.parameters["S_n"] = s;
  o.p_values.push_back(std::erfc(s_obs / std::numbers::sqrt2));
  return o;
}

Outcome block_frequency(const BitVector& bits, std::size_t m) {
  Outcome o;
  if (m == 0) throw ValidationError("block length must be > 0");
  const std::size_t nblocks = bits.size() / m;
  o.parameters["M"] = static_cast<double>(m);
  o.parameters["N"] = static_cast<double>(nblocks);
  if (nblocks == 0) {
    o.skip = "fewer bits than one block";
    return o;
  }
  double chi2 = 0.0;
  for (std::size_t b = 0; b < nblocks; ++b) {
    std::size_t ones = 0;
    for (std::size_t i = 0; i < m; ++i) ones += bits.get(b * m + i);
    const double pi = static_cast<double>(ones) / static_cast<double>(m) - 0.5;
    chi2 += pi * pi;
  }
  chi2 *= 4.0 * static_cast<double>(m);
  o.parameters["chi2"] = chi2;
  o.p_values.push_back(igamc(static_cast<double>(nblocks) / 2.0, chi2 / 2.0));
  return o;
}

Outcome cumulative_sums(const BitVector& bits) {
  Outcome o;
  const auto n = static_cast<std::int64_t>(bits.size());
  if (n < 100) o.skip = "needs >= 100 bits";
  if (n == 0) return o;
  std::int64_t s = 0;
  std::int64_t zf = 0;
  std::int64_t smin = 0;
  std::int64_t smax = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    s += bits.get(static_cast<std::size_t>(i)) ? 1 : -1;
    zf = std::max<std::int64_t>(zf, std::abs(s));
    smin = std::min(smin, s);
    smax = std::max(smax, s);
  }
  // Backward sums are S_n - S_k for k = n-1 .. 0 (with S_0 = 0).
  std::int64_t zb = 0;
  std::int64_t prefix = 0;
  zb = std::abs(s);
  for (std::int64_t i = 0; i + 1 < n; ++i) {
    prefix += bits.get(static_cast<std::size_t>(i)) ? 1 : -1;
    zb = std::max<std::int64_t>(zb, std::abs(s - prefix));
  }
  const double dn = static_cast<double>(n);
  auto p_of = [dn](std::int64_t zi) {
    const double z = static_cast<double>(zi);
    if (z == 0.0) return 1.0;
    const double sq = std::sqrt(dn);
    double sum1 = 0.0;
    for (int k = static_cast<int>((-dn / z + 1) / 4); k <= static_cast<int>((dn / z - 1) / 4); ++k) {
      sum1 += normal_cdf((4 * k + 1) * z / sq) - normal_cdf((4 * k - 1) * z / sq);
    }
    double sum2 = 0.0;
    for (int k = static_cast<int>((-dn / z - 3) / 4); k <= static_cast<int>((dn / z - 1) / 4); ++k) {
      sum2 += normal_cdf((4 * k + 3) * z / sq) - normal_cdf((4 * k + 1) * z / sq);
    }
    return std::clamp(1.0 - sum1 + sum2, 0.0, 1.0);
  };
  o.parameters["z_forward"] = static_cast<double>(zf);
  o.parameters["z_backward"] = static_cast<double>(zb);
  o.p_values.push_back(p_of(zf));
  o.p_values.push_back(p_of(zb));
  return o;
}

Outcome runs(const BitVector& bits) {
  Outcome o;
  const std::size_t n = bits.size();
  if (n < 100) o.skip = "needs >= 100 bits";
  if (n == 0) return o;
  const double dn = static_cast<double>(n);
  const double pi = static_cast<double>(bits.popcount()) / dn;
  o.parameters["pi"] = pi;
  if (std::abs(pi - 0.5) >= 2.0 / std::sqrt(dn)) {
    o.parameters["prerequisite_failed"] = 1.0;
    o.p_values.push_back(0.0);
    return o;
  }
  std::size_t v = 1;
  for (std::size_t i = 0; i + 1 < n; ++i) v += bits.get(i) != bits.get(i + 1);
  o.parameters["V_n"] = static_cast<double>(v);
  const double num = std::abs(static_cast<double>(v) - 2.0 * dn * pi * (1.0 - pi));
  const double den = 2.0 * std::sqrt(2.0 * dn) * pi * (1.0 - pi);
  o.p_values.push_back(std::erfc(num / den));
  return o;
}

Outcome longest_run(const BitVector& bits) {
  Outcome o;
  const std::size_t n = bits.size();
  if (n < 128) {
    o.skip = "needs >= 128 bits";
    return o;
  }
  std::size_t m;
  int vmin;
  std::vector<double> pi;
  if (n < 6272) {
    m = 8;
    vmin = 1;
    pi = {0.21484375, 0.3671875, 0.23046875, 0.1875};
  } else if (n < 750000) {
    m = 128;
    vmin = 4;
    pi = {0.1174035788, 0.242955959, 0.249363483, 0.17517706, 0.102701071, 0.112398847};
  } else {
    m = 10000;
    vmin = 10;
    pi = {0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727};
  }
  const std::size_t k = pi.size() - 1;
  const std::size_t nblocks = n / m;
  std::vector<double> nu(pi.size(), 0.0);
  for (std::size_t b = 0; b < nblocks; ++b) {
    int run = 0;
    int best = 0;
    for (std::size_t i = 0; i < m; ++i) {
      run = bits.get(b * m + i) ? run + 1 : 0;
      best = std::max(best, run);
    }
    const int cls = std::clamp(best - vmin, 0, static_cast<int>(k));
    nu[static_cast<std::size_t>(cls)] += 1.0;
  }
  double chi2 = 0.0;
  const double dn = static_cast<double>(nblocks);
  for (std::size_t i = 0; i < pi.size(); ++i) chi2 += (nu[i] - dn * pi[i]) * (nu[i] - dn * pi[i]) / (dn * pi[i]);
  o.parameters["M"] = static_cast<double>(m);
  o.parameters["N"] = dn;
  o.parameters["chi2"] = chi2;
  o.p_values.push_back(igamc(static_cast<double>(k) / 2.0, chi2 / 2.0));
  return o;
}

Outcome dft(const BitVector& bits) {
  Outcome o;
  const std::size_t n = bits.size();
  if (n < 1000) o.skip = "needs >= 1000 bits";
  if (n < 2) return o;
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = bits.get(i) ? 1.0 : -1.0;
  std::vector<fftw_complex> spec(n / 2 + 1);
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), x.data(), spec.data(), FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  const double dn = static_cast<double>(n);
  const double t = std::sqrt(std::log(1.0 / 0.05) * dn);
  std::size_t below = 0;
  for (std::size_t k = 0; k < n / 2; ++k) {
    if (std::hypot(spec[k][0], spec[k][1]) < t) ++below;
  }
  const double n0 = 0.95 * dn / 2.0;
  const double d = (static_cast<double>(below) - n0) / std::sqrt(dn * 0.95 * 0.05 / 4.0);
  o.parameters["N1"] = static_cast<double>(below);
  o.parameters["d"] = d;
  o.p_values.push_back(std::erfc(std::abs(d) / std::numbers::sqrt2));
  return o;
}

Outcome approximate_entropy(const BitVector& bits, unsigned m) {
  Outcome o;
  const std::size_t n = bits.size();
  o.parameters["m"] = m;
  if (n == 0 || static_cast<int>(m) >= log2_floor(n) - 5) o.skip = "block length m must be < floor(log2 n) - 5";
  if (m == 0 || m + 1 > n) return o;
  const double dn = static_cast<double>(n);
  auto phi = [&](unsigned len) {
    const auto c = pattern_counts(bits, len);
    double s = 0.0;
    for (auto v : c) {
      if (v > 0) {
        const double p = v / dn;
        s += p * std::log(p);
      }
    }
    return s;
  };
  const double apen = phi(m) - phi(m + 1);
  const double chi2 = 2.0 * dn * (std::numbers::ln2 - apen);
  o.parameters["ApEn"] = apen;
  o.parameters["chi2"] = chi2;
  o.p_values.push_back(igamc(std::ldexp(1.0, static_cast<int>(m) - 1), chi2 / 2.0));
  return o;
}

Outcome serial(const BitVector& bits, unsigned m) {
  Outcome o;
  const std::size_t n = bits.size();
  o.parameters["m"] = m;
  if (m < 2 || n == 0 || static_cast<int>(m) >= log2_floor(n) - 2) o.skip = "block length m must be in [2, floor(log2 n) - 2)";
  if (m < 2 || m > n) return o;
  const double dn = static_cast<double>(n);
  auto psi2 = [&](unsigned len) {
    if (len == 0) return 0.0;
    const auto c = pattern_counts(bits, len);
    double s = 0.0;
    for (auto v : c) s += static_cast<double>(v) * static_cast<double>(v);
    return std::ldexp(s, static_cast<int>(len)) / dn - dn;
  };
  const double p0 = psi2(m);
  const double p1 = psi2(m - 1);
  const double p2 = psi2(m - 2);
  const double del1 = p0 - p1;
  const double del2 = p0 - 2.0 * p1 + p2;
  o.parameters["del_psi2"] = del1;
  o.parameters["del2_psi2"] = del2;
  o.p_values.push_back(igamc(std::ldexp(1.0, static_cast<int>(m) - 2), del1 / 2.0));
  o.p_values.push_back(igamc(std::ldexp(1.0, static_cast<int>(m) - 3), del2 / 2.0));
  return o;
}

std::vector<TestResult> run_battery(const BitVector& bits, const BatteryConfig& cfg) {
  if (bits.empty()) throw ValidationError("no bits to test");
  if (!(cfg.significance > 0.0 && cfg.significance < 1.0)) throw ValidationError("significance must be in (0, 1)");
  const std::size_t seq_len = std::min(cfg.sequence_length, bits.size());
  const std::size_t nseq = bits.size() / seq_len;

  using Fn = Outcome (*)(const BitVector&, const BatteryConfig&);
  static const std::array<std::pair<const char*, Fn>, 8> tests = {{
      {"Frequency", [](const BitVector& b, const BatteryConfig&) { return frequency(b); }},
      {"BlockFrequency", [](const BitVector& b, const BatteryConfig& c) { return block_frequency(b, c.block_frequency_length); }},
      {"CumulativeSums", [](const BitVector& b, const BatteryConfig&) { return cumulative_sums(b); }},
      {"Runs", [](const BitVector& b, const BatteryConfig&) { return runs(b); }},
      {"LongestRun", [](const BitVector& b, const BatteryConfig&) { return longest_run(b); }},
      {"DFT", [](const BitVector& b, const BatteryConfig&) { return dft(b); }},
      {"ApproximateEntropy", [](const BitVector& b, const BatteryConfig& c) { return approximate_entropy(b, c.approximate_entropy_m); }},
      {"Serial", [](const BitVector& b, const BatteryConfig& c) { return serial(b, c.serial_m); }},
  }};

  std::vector<BitVector> seqs(nseq);
  for (std::size_t s = 0; s < nseq; ++s) seqs[s] = bits.slice(s * seq_len, seq_len);

  const std::size_t ntests = tests.size();
  std::vector<Outcome> outcomes(ntests * nseq);
  const auto tasks = static_cast<std::int64_t>(outcomes.size());
#pragma omp parallel for schedule(dynamic) if (cfg.parallel)
  for (std::int64_t t = 0; t < tasks; ++t) {
    const auto ti = static_cast<std::size_t>(t) / nseq;
    const auto si = static_cast<std::size_t>(t) % nseq;
    outcomes[static_cast<std::size_t>(t)] = tests[ti].second(seqs[si], cfg);
  }

  std::vector<TestResult> results;
  for (std::size_t ti = 0; ti < ntests; ++ti) {
    TestResult r;
    r.test_name = tests[ti].first;
    r.bits_tested = nseq * seq_len;
    r.parameters["sequences"] = static_cast<double>(nseq);
    r.parameters["sequence_length"] = static_cast<double>(seq_len);
    const Outcome& first = outcomes[ti * nseq];
    if (first.skip && first.p_values.empty()) {
      r.skipped = true;
      r.skip_reason = *first.skip;
      results.push_back(r);
      continue;
    }
    if (first.skip) {
      r.skipped = true;
      r.skip_reason = *first.skip;
    }
    const std::size_t subtests = first.p_values.size();
    double pmin = 1.0;
    double prop_min = 1.0;
    for (std::size_t sub = 0; sub < subtests; ++sub) {
      std::vector<double> ps;
      for (std::size_t si = 0; si < nseq; ++si) ps.push_back(outcomes[ti * nseq + si].p_values.at(sub));
      const double prop = static_cast<double>(std::count_if(ps.begin(), ps.end(),
                                                            [&](double p) { return p >= cfg.significance; })) /
                          static_cast<double>(nseq);
      prop_min = std::min(prop_min, prop);
      double p;
      if (nseq == 1) {
        p = ps.front();
      } else {
        std::array<double, 10> bins{};
        for (double v : ps) bins[std::min<std::size_t>(9, static_cast<std::size_t>(v * 10.0))] += 1.0;
        const double expect = static_cast<double>(nseq) / 10.0;
        double chi2 = 0.0;
        for (double b : bins) chi2 += (b - expect) * (b - expect) / expect;
        p = igamc(4.5, chi2 / 2.0);
      }
      r.parameters["p_value_" + std::to_string(sub)] = p;
      pmin = std::min(pmin, p);
    }
    if (nseq == 1) {
      for (const auto& [k, v] : first.parameters) r.parameters[k] = v;
    } else {
      const double a = cfg.significance;
      const double lower = (1.0 - a) - 3.0 * std::sqrt(a * (1.0 - a) / static_cast<double>(nseq));
      r.parameters["pass_proportion"] = prop_min;
      r.parameters["proportion_lower_bound"] = lower;
    }
    r.p_value = pmin;
    r.passed = !r.skipped && r.p_value >= cfg.significance;
    results.push_back(r);
  }
  return results;
}

Summary p_value_summary(std::span<const TestResult> results) {
  Summary s;
  s.results.assign(results.begin(), results.end());
  for (const auto& r : results) {
    if (r.skipped) {
      ++s.skipped;
    } else if (r.passed) {
      ++s.passed;
    } else {
      ++s.failed;
    }
  }
  return s;
}

std::string Summary::to_table() const {
  std::ostringstream os;
  os << std::left << std::setw(22) << "Test" << std::right << std::setw(12) << "p-value" << "  Result\n";
  os << std::string(42, '-') << '\n';
  for (const auto& r : results) {
    os << std::left << std::setw(22) << r.test_name << std::right << std::setw(12);
    if (r.skipped) {
      os << "-" << "  SKIPPED (" << r.skip_reason << ")\n";
    } else {
      os << std::fixed << std::setprecision(6) << r.p_value << "  " << (r.passed ? "PASSED" : "FAILED") << '\n';
    }
  }
  os << std::string(42, '-') << '\n';
  os << "passed " << passed << ", failed " << failed << ", skipped " << skipped << '\n';
  return os.str();
}

std::string Summary::to_json() const {
  nlohmann::json j;
  j["passed"] = passed;
  j["failed"] = failed;
  j["skipped"] = skipped;
  auto& arr = j["results"] = nlohmann::json::array();
  for (const auto& r : results) {
    nlohmann::json e;
    e["test"] = r.test_name;
    e["p_value"] = r.p_value;
    e["result"] = r.skipped ? "SKIPPED" : (r.passed ? "PASSED" : "FAILED");
    e["bits_tested"] = r.bits_tested;
    e["parameters"] = r.parameters;
    if (r.skipped) e["skip_reason"] = r.skip_reason;
    arr.push_back(e);
  }
  return j.dump(2);
}

void export_ascii(const std::filesystem::path& path, const BitVector& bits) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  std::string line;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    line.push_back(bits.get(i) ? '1' : '0');
    if (line.size() == 1 << 16) {
      out << line;
      line.clear();
    }
  }
  out << line << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace qrng::stattests
