#include "qrng/fir.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

namespace qrng::dsp {

double kaiser_beta(double a) {
  if (a > 50.0) return 0.1102 * (a - 8.7);
  if (a >= 21.0) return 0.5842 * std::pow(a - 21.0, 0.4) + 0.07886 * (a - 21.0);
  return 0.0;
}

std::size_t kaiser_length(double attenuation_db, double transition_width) {
  if (!(transition_width > 0.0)) throw std::invalid_argument("kaiser_length: transition width must be > 0");
  const double n = (attenuation_db - 7.95) / (2.285 * 2.0 * std::numbers::pi * transition_width);
  auto len = static_cast<std::size_t>(std::ceil(n)) + 1;
  if (len % 2 == 0) ++len;
  return len < 3 ? 3 : len;
}

std::vector<double> kaiser_window(std::size_t length, double beta) {
  std::vector<double> w(length);
  if (length == 1) {
    w[0] = 1.0;
    return w;
  }
  const double denom = std::cyl_bessel_i(0.0, beta);
  const double half = static_cast<double>(length - 1) / 2.0;
  for (std::size_t n = 0; n < length; ++n) {
    const double r = (static_cast<double>(n) - half) / half;
    w[n] = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom;
  }
  return w;
}

std::vector<double> design_lowpass(double cutoff, std::size_t length, double beta) {
  if (!(cutoff > 0.0 && cutoff < 0.5)) throw std::invalid_argument("design_lowpass: cutoff outside (0, 0.5)");
  const auto w = kaiser_window(length, beta);
  const double half = static_cast<double>(length - 1) / 2.0;
  std::vector<double> h(length);
  double sum = 0.0;
  for (std::size_t n = 0; n < length; ++n) {
    const double t = static_cast<double>(n) - half;
    const double sinc = t == 0.0 ? 2.0 * cutoff : std::sin(2.0 * std::numbers::pi * cutoff * t) / (std::numbers::pi * t);
    h[n] = sinc * w[n];
    sum += h[n];
  }
  for (auto& v : h) v /= sum;
  return h;
}

std::vector<double> design_highpass(double cutoff, std::size_t length, double beta) {
  if (length % 2 == 0) throw std::invalid_argument("design_highpass: length must be odd");
  auto h = design_lowpass(cutoff, length, beta);
  for (auto& v : h) v = -v;
  h[(length - 1) / 2] += 1.0;
  return h;
}

std::vector<double> design_highpass_to_spec(double stop_edge, double pass_edge, double attenuation_db) {
  if (!(stop_edge >= 0.0 && stop_edge < pass_edge && pass_edge < 0.5)) {
    throw std::invalid_argument("design_highpass_to_spec: need 0 <= stop_edge < pass_edge < 0.5");
  }
  const double beta = kaiser_beta(attenuation_db);
  const double cutoff = 0.5 * (stop_edge + pass_edge);
  const double limit = std::pow(10.0, -attenuation_db / 20.0);
  constexpr int kGrid = 128;
  // The length estimate is optimistic when the cutoff sits close to DC.
  for (std::size_t len = kaiser_length(attenuation_db, pass_edge - stop_edge);; len += 2) {
    auto h = design_highpass(cutoff, len, beta);
    double worst = 0.0;
    for (int i = 0; i <= kGrid; ++i) {
      worst = std::max(worst, std::abs(frequency_response(h, stop_edge * i / kGrid)));
    }
    if (worst <= limit || len > 64 * kaiser_length(attenuation_db, pass_edge - stop_edge)) return h;
  }
}

std::vector<double> design_hilbert(std::size_t length, double beta) {
  if (length % 2 == 0) throw std::invalid_argument("design_hilbert: length must be odd");
  const auto w = kaiser_window(length, beta);
  const auto half = static_cast<std::int64_t>(length - 1) / 2;
  std::vector<double> h(length, 0.0);
  for (std::int64_t n = 0; n < static_cast<std::int64_t>(length); ++n) {
    const std::int64_t t = n - half;
    if (t % 2 != 0) h[static_cast<std::size_t>(n)] = 2.0 / (std::numbers::pi * static_cast<double>(t)) * w[static_cast<std::size_t>(n)];
  }
  return h;
}

std::vector<double> convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

std::complex<double> frequency_response(std::span<const double> taps, double frequency) {
  std::complex<double> acc = 0.0;
  const double w = -2.0 * std::numbers::pi * frequency;
  for (std::size_t n = 0; n < taps.size(); ++n) {
    acc += taps[n] * std::polar(1.0, w * static_cast<double>(n));
  }
  return acc;
}

}  // namespace qrng::dsp
