#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include "oracles.hpp"
#include "qrng/capture.hpp"
#include "qrng/dsp.hpp"
#include "qrng/error.hpp"
#include "qrng/moments.hpp"
#include "qrng/signal_model.hpp"

using namespace qrng;
namespace fs = std::filesystem;

namespace {

signal::SourceParams quiet(double lo_power_w) {
  signal::SourceParams p;
  p.lo_power_w = lo_power_w;
  p.lowfreq_tones.clear();
  return p;
}

double sample_variance(const std::vector<double>& v) {
  RunningMoments m;
  m.add(v);
  return m.variance();
}

double excess_kurtosis(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double m2 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d = (x - mean) * (x - mean);
    m2 += d;
    m4 += d * d;
  }
  m2 /= n;
  m4 /= n;
  return m4 / (m2 * m2) - 3.0;
}

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "qrng_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("no noise sources give all-zero codes") {
  auto p = quiet(0.0);
  p.electronic_noise_variance = 0.0;
  const auto b = signal::generate_block(p, 4096);
  for (int c = 0; c < 2; ++c) {
    for (auto v : b.channel(c)) REQUIRE(v == 0);
  }
}

TEST_CASE("pre-quantization variance matches the closed form") {
  auto p = quiet(1e-3);
  p.lowfreq_tones = {{12e6, 0.02}};
  const double tone_power = 0.5 * 0.02 * 0.02;
  for (int c = 0; c < 2; ++c) {
    const auto v = signal::analog_voltages(p, c, 10'000'000);
    const double expected = p.channel_variance(c) + tone_power;
    CHECK(sample_variance(v) == doctest::Approx(expected).epsilon(0.01));
  }
}

TEST_CASE("pre-quantization noise is Gaussian") {
  const auto v = signal::analog_voltages(quiet(20e-3), 0, 10'000'000);
  CHECK(std::abs(excess_kurtosis(v)) < 0.05);
}

TEST_CASE("variance is linear in LO power") {
  const double powers[] = {2e-3, 9e-3, 17e-3};
  double var[3];
  for (int i = 0; i < 3; ++i) var[i] = sample_variance(signal::analog_voltages(quiet(powers[i]), 1, 10'000'000));
  const double mx = (powers[0] + powers[1] + powers[2]) / 3.0;
  const double my = (var[0] + var[1] + var[2]) / 3.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < 3; ++i) {
    sxy += (powers[i] - mx) * (var[i] - my);
    sxx += (powers[i] - mx) * (powers[i] - mx);
    syy += (var[i] - my) * (var[i] - my);
  }
  CHECK(sxy * sxy / (sxx * syy) > 0.999);
}

TEST_CASE("low-frequency tones appear at their configured amplitudes") {
  auto p = quiet(0.0);
  p.electronic_noise_variance = 0.0;
  p.lowfreq_tones = {{12e6, 0.02}, {31e6, 0.01}};
  // 12 MHz and 31 MHz both complete whole cycles in 25000 samples.
  const auto v = signal::analog_voltages(p, 0, 25'000, 777);
  CHECK(std::abs(oracle::dft_amplitude(v, 12e6, p.adc_rate_hz)) == doctest::Approx(0.02).epsilon(1e-9));
  CHECK(std::abs(oracle::dft_amplitude(v, 31e6, p.adc_rate_hz)) == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(std::abs(oracle::dft_amplitude(v, 20e6, p.adc_rate_hz)) < 1e-9);
}

TEST_CASE("spectrum follows the single-pole response") {
  auto p = quiet(20e-3);
  const auto v = signal::analog_voltages(p, 0, 1 << 22);
  const auto psd = dsp::estimate_psd(v, p.adc_rate_hz, 4096, 2048);
  // Discrete pole exp(-2 pi fc / fs): |H(f)|^2 proportional to 1 / |1 - a e^{-iw}|^2.
  const double a = std::exp(-2.0 * std::numbers::pi * p.analog_bandwidth_hz / p.adc_rate_hz);
  auto shape = [&](double f) {
    return 1.0 / std::norm(1.0 - a * std::polar(1.0, -2.0 * std::numbers::pi * f / p.adc_rate_hz));
  };
  auto band = [&](double f0, double f1) {
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < psd.psd.size(); ++i) {
      if (psd.frequencies_hz[i] >= f0 && psd.frequencies_hz[i] <= f1) {
        s += psd.psd[i];
        ++n;
      }
    }
    return s / n;
  };
  const double measured = band(2.4e9, 2.6e9) / band(0.2e9, 0.4e9);
  const double expected = shape(2.5e9) / shape(0.3e9);
  CHECK(measured == doctest::Approx(expected).epsilon(0.03));
  CHECK(measured < 0.6);
}

TEST_CASE("default source has about 9 dB of clearance at 20 mW") {
  // Shot over electronic noise is 10^0.9 at the default maximum power.
  const signal::SourceParams p;
  CHECK(p.shot_slope_q * p.lo_power_w / p.electronic_noise_variance == doctest::Approx(std::pow(10.0, 0.9)).epsilon(0.01));
  auto on = p;
  on.lowfreq_tones.clear();
  auto off = on;
  off.lo_power_w = 0.0;
  const auto psd_on = dsp::estimate_psd(signal::generate_block(on, 1 << 21), 0, 4096, 2048);
  const auto psd_off = dsp::estimate_psd(signal::generate_block(off, 1 << 21), 0, 4096, 2048);
  const auto report = dsp::SpectrumReport::from(psd_on, psd_off);
  const double mean = report.mean_clearance_db(400e6, 1400e6);
  CHECK(mean > 8.5);
  CHECK(mean < 10.0);
  CHECK(report.min_clearance_db(400e6, 1400e6) > 8.0);
}

TEST_CASE("generation is deterministic and independent of block splits") {
  signal::SourceParams p;
  p.seed = 99;
  const auto whole = signal::generate_block(p, 300'000);
  CHECK(whole.channel_q == signal::generate_block(p, 300'000).channel_q);

  signal::SampleSource src(p);
  std::vector<std::int16_t> q;
  for (std::size_t len : {1u, 70'000u, 65'536u, 164'463u}) {
    const auto b = src.next(len);
    q.insert(q.end(), b.channel_q.begin(), b.channel_q.end());
  }
  CHECK(q == whole.channel_q);

  const auto tail = signal::generate_block(p, 1000, 123'456);
  CHECK(std::equal(tail.channel_p.begin(), tail.channel_p.end(), whole.channel_p.begin() + 123'456));

  p.seed = 100;
  CHECK(signal::generate_block(p, 1000).channel_q != signal::generate_block(signal::SourceParams{}, 1000).channel_q);
}

TEST_CASE("quantizer saturates instead of wrapping") {
  auto p = quiet(0.0);
  p.electronic_noise_variance = 0.0;
  p.lowfreq_tones = {{0.0, 10.0 * p.adc_full_scale_v}};
  auto b = signal::generate_block(p, 1000);
  for (auto v : b.channel_q) REQUIRE(v == b.max_code());
  CHECK(b.saturated_fraction() == 1.0);
  p.lowfreq_tones = {{0.0, -10.0 * p.adc_full_scale_v}};
  b = signal::generate_block(p, 1000);
  for (auto v : b.channel_p) REQUIRE(v == b.min_code());
}

TEST_CASE("source parameters are validated") {
  signal::SourceParams p;
  p.adc_bits = 17;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p = {};
  p.adc_full_scale_v = 0.0;
  CHECK_THROWS_AS(signal::generate_block(p, 10), ValidationError);
  CHECK_THROWS_AS(signal::generate_block(signal::SourceParams{}, 0), ValidationError);
  p = {};
  p.lo_power_w = -1.0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("QRAW round trip reproduces the stream") {
  signal::SourceParams p;
  p.adc_bits = 8;
  signal::SampleSource src(p);
  std::vector<signal::SampleBlock> blocks = {src.next(1024), src.next(1024)};
  const auto path = temp_path("roundtrip.qraw");
  const auto bytes = capture::write_capture(path, blocks);
  CHECK(bytes == capture::kHeaderBytes + 2 * 2 * 1024);

  const auto back = capture::read_capture(path, 1024);
  REQUIRE(back.size() == 2);
  CHECK(back[0].stream_offset == 0);
  CHECK(back[1].stream_offset == 1024);
  for (int i = 0; i < 2; ++i) {
    CHECK(back[i].channel_q == blocks[i].channel_q);
    CHECK(back[i].channel_p == blocks[i].channel_p);
    CHECK(back[i].sample_rate_hz == 25e9);
    CHECK(back[i].lo_power_w == p.lo_power_w);
  }
}

TEST_CASE("QRAW sizes") {
  capture::CaptureHeader h;
  h.sample_rate_hz = 25e9;
  CHECK(capture::write_capture(temp_path("empty.qraw"), {}, h) == capture::kHeaderBytes);
  CHECK(capture::read_capture(temp_path("empty.qraw")).empty());

  const auto one = signal::generate_block(signal::SourceParams{}, 1);
  CHECK(capture::write_capture(temp_path("one.qraw"), std::span(&one, 1)) == capture::kHeaderBytes + 2);

  const auto big = signal::generate_block(signal::SourceParams{}, 1'000'000);
  const auto path = temp_path("big.qraw");
  capture::write_capture(path, std::span(&big, 1));
  CHECK(fs::file_size(path) - capture::kHeaderBytes == 2'000'000);

  auto wide = signal::SourceParams{};
  wide.adc_bits = 12;
  const auto w = signal::generate_block(wide, 500);
  const auto wpath = temp_path("wide.qraw");
  CHECK(capture::write_capture(wpath, std::span(&w, 1)) == capture::kHeaderBytes + 4 * 500);
  const auto wb = capture::read_capture(wpath);
  REQUIRE(wb.size() == 1);
  CHECK(wb[0].channel_q == w.channel_q);
  CHECK(wb[0].adc_bits == 12);
}

TEST_CASE("QRAW rejects malformed files and inconsistent streams") {
  const auto good = signal::generate_block(signal::SourceParams{}, 100);
  const auto path = temp_path("bad.qraw");
  capture::write_capture(path, std::span(&good, 1));
  std::vector<char> raw(fs::file_size(path));
  std::ifstream(path, std::ios::binary).read(raw.data(), static_cast<std::streamsize>(raw.size()));

  auto write_raw = [&](const std::vector<char>& bytes) {
    std::ofstream(path, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };
  auto magic = raw;
  magic[0] = 'X';
  write_raw(magic);
  CHECK_THROWS_AS(capture::read_capture(path), FormatError);

  auto truncated = raw;
  truncated.pop_back();
  write_raw(truncated);
  CHECK_THROWS_AS(capture::read_capture(path), FormatError);

  auto depth = raw;
  depth[6] = 40;
  write_raw(depth);
  CHECK_THROWS_AS(capture::read_capture(path), FormatError);

  write_raw(std::vector<char>(raw.begin(), raw.begin() + 10));
  CHECK_THROWS_AS(capture::read_capture(path), FormatError);

  auto other = signal::SourceParams{};
  other.lo_power_w = 5e-3;
  const auto b2 = signal::generate_block(other, 100, 100);
  const signal::SampleBlock mixed[] = {good, b2};
  CHECK_THROWS_AS(capture::write_capture(temp_path("mixed.qraw"), mixed), ValidationError);

  CHECK_THROWS_AS(capture::write_capture(temp_path("none.qraw"), {}), ValidationError);
}
