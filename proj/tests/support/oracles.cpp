#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

namespace oracle {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap(double nu) { return nu - std::floor(nu + 0.5); }

struct Chain {
  const dsp::ChainDesign& d;
  std::vector<double> analog;
  double nu0;  // mixer frequency, cycles per input sample

  Chain(const dsp::ChainDesign& design, const signal::SourceParams& src)
      : d(design), analog(signal::analog_response(src)) {
    nu0 = static_cast<double>(d.mix_num) / static_cast<double>(d.mix_den);
  }

  // |G|^2 with G = F_I - i F_Q, the filter in front of the complex mixer.
  double composite(double nu) const {
    const auto g = dtft(d.front_i, nu) - std::complex<double>(0.0, 1.0) * dtft(d.front_q, nu);
    return std::norm(g);
  }

  double continuous_input(const InputSpectrum& in, double nu) const {
    double s = in.flat_variance;
    if (in.white_scale > 0.0) s += in.white_scale * std::norm(dtft(analog, nu));
    return s;
  }

  // Stationary density of the mixer output at input-rate frequency nu.
  double mixer_density(const InputSpectrum& in, double nu) const {
    const double a = wrap(nu - nu0);
    const double b = wrap(-nu - nu0);
    return 0.25 * (composite(a) * continuous_input(in, a) + composite(b) * continuous_input(in, b));
  }

  // Output-rate spectrum samples: weight of each grid point of nu'' in [-1/2, 1/2)
  // at the upsampled rate (continuous part) plus line components.
  struct Spectrum {
    std::vector<double> nu;      // upsampled-rate frequency
    std::vector<double> weight;  // integrated power per point
  };

  Spectrum spectrum(const InputSpectrum& in, std::size_t grid) const {
    const double L = static_cast<double>(d.interp);
    Spectrum s;
    s.nu.reserve(grid + 4 * in.tones.size());
    s.weight.reserve(grid + 4 * in.tones.size());
    const double dnu = 1.0 / static_cast<double>(grid);
    for (std::size_t i = 0; i < grid; ++i) {
      const double nu = -0.5 + (static_cast<double>(i) + 0.5) * dnu;
      const double r = std::norm(dtft(d.prototype, nu));
      if (r < 1e-14) continue;
      s.nu.push_back(nu);
      s.weight.push_back(L * r * mixer_density(in, L * nu) * dnu);
    }
    // A tone of amplitude A is two lines of power A^2/4 at +-f; the mixer
    // moves each line of z to nu - nu0 and its mirror, each with a quarter of the power.
    for (const auto& t : in.tones) {
      const double f = t.frequency_hz / d.input_rate_hz;
      for (double line : {f, -f}) {
        const double p = 0.25 * t.amplitude_v * t.amplitude_v * composite(line);
        for (double m : {line + nu0, -line - nu0}) {
          // Line at input-rate m maps to the L upsampled images m/L + k/L.
          for (std::uint64_t k = 0; k < d.interp; ++k) {
            const double nu = wrap((wrap(m) + static_cast<double>(k)) / L);
            s.nu.push_back(nu);
            s.weight.push_back(0.25 * p * std::norm(dtft(d.prototype, nu)));
          }
        }
      }
    }
    return s;
  }
};

}  // namespace

std::complex<double> dft_amplitude(std::span<const double> x, double freq_hz, double rate_hz) {
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double w = kTwoPi * std::fmod(freq_hz / rate_hz * static_cast<double>(n), 1.0);
    acc += x[n] * std::complex<double>(std::cos(w), -std::sin(w));
  }
  return 2.0 * acc / static_cast<double>(x.size());
}

std::complex<double> dtft(std::span<const double> taps, double nu) {
  // Horner in z = exp(-i 2 pi nu).
  const std::complex<double> z = std::polar(1.0, -kTwoPi * nu);
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t k = taps.size(); k-- > 0;) acc = acc * z + taps[k];
  return acc;
}

double chain_output_variance(const dsp::ChainDesign& d, const signal::SourceParams& src, const InputSpectrum& in,
                             std::size_t grid) {
  return chain_output_autocorrelation(d, src, in, 0, grid)[0];
}

std::vector<double> chain_output_autocorrelation(const dsp::ChainDesign& d, const signal::SourceParams& src,
                                                 const InputSpectrum& in, std::size_t max_lag, std::size_t grid) {
  const Chain chain(d, src);
  const auto s = chain.spectrum(in, grid);
  const double M = static_cast<double>(d.decim);
  std::vector<double> r(max_lag + 1, 0.0);
  for (std::size_t tau = 0; tau <= max_lag; ++tau) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.nu.size(); ++i) {
      acc += s.weight[i] * std::cos(kTwoPi * std::fmod(s.nu[i] * M * static_cast<double>(tau), 1.0));
    }
    r[tau] = acc;
  }
  return r;
}

ChannelTruth conditioned_truth(const dsp::ChainDesign& d, const signal::SourceParams& src, int channel) {
  const double slope = channel == 0 ? src.shot_slope_q : src.shot_slope_p;
  InputSpectrum shot;
  shot.white_scale = 1.0;
  InputSpectrum floor;
  floor.white_scale = src.electronic_noise_variance;
  floor.flat_variance = src.lsb_volts() * src.lsb_volts() / 12.0;
  floor.tones = src.lowfreq_tones;
  return {slope * chain_output_variance(d, src, shot), chain_output_variance(d, src, floor)};
}

qrng::BitVector toeplitz_dense(const std::vector<std::uint8_t>& first_column, const std::vector<std::uint8_t>& first_row,
                               const qrng::BitVector& x) {
  const std::size_t n = first_column.size();
  const std::size_t m = first_row.size();
  std::vector<std::vector<std::uint8_t>> t(n, std::vector<std::uint8_t>(m));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) t[j][i] = i >= j ? first_row[i - j] : first_column[j - i];
  }
  qrng::BitVector y(n);
  for (std::size_t j = 0; j < n; ++j) {
    unsigned acc = 0;
    for (std::size_t i = 0; i < m; ++i) acc ^= t[j][i] & static_cast<unsigned>(x.get(i));
    y.set(j, acc != 0);
  }
  return y;
}

double gaussian_grid_min_entropy(double sq, double sp, double dq, double dp) {
  auto bin = [](double s, double pitch, int k) {
    const double lo = (k - 0.5) * pitch / (s * std::numbers::sqrt2);
    const double hi = (k + 0.5) * pitch / (s * std::numbers::sqrt2);
    return 0.5 * (std::erf(hi) - std::erf(lo));
  };
  double best = 0.0;
  for (int a = -20; a <= 20; ++a) {
    for (int b = -20; b <= 20; ++b) best = std::max(best, bin(sq, dq, a) * bin(sp, dp, b));
  }
  return -std::log2(best);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double uniformity_p_value(std::span<const double> values, int bins) {
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (double v : values) {
    const int k = std::clamp(static_cast<int>(v * bins), 0, bins - 1);
    counts[static_cast<std::size_t>(k)] += 1.0;
  }
  const double expected = static_cast<double>(values.size()) / bins;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  return boost::math::gamma_q(0.5 * (bins - 1), 0.5 * chi2);
}

}  // namespace oracle
