#include "qrng/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <type_traits>

#include <fftw3.h>
#include <nlohmann/json.hpp>

#include "qrng/error.hpp"
#include "qrng/fir.hpp"

namespace qrng::dsp {
namespace {

constexpr std::int64_t kMaxFusedPhases = 4096;
constexpr std::int64_t kVec = 8;
constexpr int kRows = 8;

using Vec = double __attribute__((vector_size(kVec * sizeof(double))));

Vec load(const double* p) {
  Vec v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

double hsum(const Vec& v) {
  double s = 0.0;
  for (std::int64_t i = 0; i < kVec; ++i) s += v[i];
  return s;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

std::uint64_t integral_rate(double hz, const char* what) {
  const double r = std::round(hz);
  if (!(hz > 0.0) || std::abs(hz - r) > 1e-6 * std::max(1.0, hz) || r > 9.0e18) {
    throw ValidationError(std::string(what) + " must be a positive integral number of Hz");
  }
  return static_cast<std::uint64_t>(r);
}

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void DspConfig::validate(double input_rate_hz) const {
  const double nyquist = input_rate_hz / 2.0;
  if (!(highpass_cutoff_hz > 0.0 && highpass_cutoff_hz < band_low_hz && band_low_hz < band_high_hz &&
        band_high_hz < nyquist)) {
    throw ValidationError("dsp config requires 0 < highpass_cutoff < band_low < band_high < input Nyquist");
  }
  if (!(output_rate_hz >= 2.0 * lowpass_cutoff_hz)) {
    throw ValidationError("output_rate must be >= 2 * lowpass_cutoff");
  }
  if (!(lowpass_cutoff_hz > 0.0) || !(mix_frequency_hz >= 0.0) || mix_frequency_hz >= nyquist) {
    throw ValidationError("invalid lowpass_cutoff or mix_frequency");
  }
  if (!(lowpass_transition_hz > 0.0) || lowpass_transition_hz >= lowpass_cutoff_hz) {
    throw ValidationError("invalid lowpass_transition");
  }
  if (!(stopband_attenuation_db >= 20.0)) throw ValidationError("stopband attenuation must be >= 20 dB");
}

double ChainDesign::mix_phase(std::int64_t n) const {
  const auto den = static_cast<__int128>(mix_den);
  __int128 r = (static_cast<__int128>(mix_num) * n) % den;
  if (r < 0) r += den;
  return 2.0 * std::numbers::pi * static_cast<double>(r) / static_cast<double>(mix_den);
}

double ChainDesign::mix_cos(std::int64_t n) const { return std::cos(mix_phase(n)); }
double ChainDesign::mix_sin(std::int64_t n) const { return std::sin(mix_phase(n)); }

double ChainDesign::tone_gain(double frequency_hz) const {
  const double f0 = input_rate_hz * static_cast<double>(mix_num) / static_cast<double>(mix_den);
  const double hp = std::abs(frequency_response(highpass, frequency_hz / input_rate_hz));
  const double virtual_rate = input_rate_hz * static_cast<double>(interp);
  const double lp = std::abs(frequency_response(prototype, std::abs(frequency_hz - f0) / virtual_rate));
  const double hb = std::abs(frequency_response(hilbert, frequency_hz / input_rate_hz));
  return hp * lp * 0.5 * (1.0 + hb);
}

double ChainDesign::passband_gain(double band_low_hz, double band_high_hz) const {
  return tone_gain(0.5 * (band_low_hz + band_high_hz));
}

std::int64_t ChainDesign::first_output_at_or_after(std::int64_t n) const {
  return ceil_div(n * static_cast<std::int64_t>(interp), static_cast<std::int64_t>(decim));
}

std::int64_t ChainDesign::newest_input(std::int64_t k) const {
  return floor_div(k * static_cast<std::int64_t>(decim), static_cast<std::int64_t>(interp));
}

ChainDesign design_chain(const DspConfig& cfg, double input_rate_hz) {
  cfg.validate(input_rate_hz);
  ChainDesign d;
  d.input_rate_hz = input_rate_hz;
  d.output_rate_hz = cfg.output_rate_hz;

  const std::uint64_t fin = integral_rate(input_rate_hz, "input rate");
  const std::uint64_t fout = integral_rate(cfg.output_rate_hz, "output rate");
  const std::uint64_t g = std::gcd(fin, fout);
  d.interp = fout / g;
  d.decim = fin / g;
  if (d.interp > 64) throw ValidationError("resampling ratio needs interpolation factor <= 64");

  const std::uint64_t f0 = cfg.mix_frequency_hz == 0.0 ? 0 : integral_rate(cfg.mix_frequency_hz, "mix frequency");
  const std::uint64_t gm = std::gcd(f0, fin);
  d.mix_num = f0 / gm;
  d.mix_den = fin / gm;

  const double a = cfg.stopband_attenuation_db;
  const double beta = kaiser_beta(a);
  const std::size_t forced = cfg.filter_taps == 0 ? 0 : (cfg.filter_taps | 1U);

  // High-pass: stopband edge at highpass_cutoff, passband edge at band_low.
  const double hp_stop = cfg.highpass_cutoff_hz / input_rate_hz;
  const double hp_pass = cfg.band_low_hz / input_rate_hz;
  d.highpass = forced ? design_highpass(0.5 * (hp_stop + hp_pass), forced, beta)
                      : design_highpass_to_spec(hp_stop, hp_pass, a);

  // Hilbert branch, accurate from band_low / 2 upward.
  d.hilbert = design_hilbert(forced ? forced : kaiser_length(a, cfg.band_low_hz / input_rate_hz), beta);
  std::vector<double> delay((d.hilbert.size() - 1) / 2 + 1, 0.0);
  delay.back() = 1.0;
  d.front_i = convolve(d.highpass, delay);
  d.front_i.resize(d.highpass.size() + d.hilbert.size() - 1, 0.0);
  d.front_q = convolve(d.highpass, d.hilbert);

  // One prototype acts as the 1 GHz low-pass and the resampler's anti-alias filter.
  const double virtual_rate = input_rate_hz * static_cast<double>(d.interp);
  const double lp_width = cfg.lowpass_transition_hz / virtual_rate;
  d.prototype = design_lowpass(cfg.lowpass_cutoff_hz / virtual_rate, forced ? forced : kaiser_length(a, lp_width), beta);
  return d;
}

std::vector<double> codes_to_volts(std::span<const std::int16_t> codes, double lsb_v) {
  std::vector<double> v(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) v[i] = codes[i] * lsb_v;
  return v;
}

// ---------------------------------------------------------------------------
// Staged reference

namespace {

class StagedChannel {
 public:
  explicit StagedChannel(const ChainDesign& d) : d_(d) {}

  void push(double x, std::int64_t n, std::vector<double>& out, std::int64_t& next_k) {
    xs_.push_front(x);
    if (xs_.size() > d_.front_i.size()) xs_.pop_back();
    double i_branch = 0.0;
    double q_branch = 0.0;
    for (std::size_t l = 0; l < xs_.size(); ++l) {
      i_branch += d_.front_i[l] * xs_[l];
      q_branch += d_.front_q[l] * xs_[l];
    }
    ms_.push_front(i_branch * d_.mix_cos(n) + q_branch * d_.mix_sin(n));
    const std::size_t depth = d_.prototype.size() / d_.interp + 2;
    if (ms_.size() > depth) ms_.pop_back();

    const auto L = static_cast<std::int64_t>(d_.interp);
    const auto M = static_cast<std::int64_t>(d_.decim);
    while (d_.newest_input(next_k) == n) {
      double y = 0.0;
      for (std::size_t j = 0; j < d_.prototype.size(); ++j) {
        const std::int64_t v = next_k * M - static_cast<std::int64_t>(j);
        if (((v % L) + L) % L != 0) continue;
        const std::int64_t age = n - floor_div(v, L);
        if (age >= 0 && age < static_cast<std::int64_t>(ms_.size())) y += d_.prototype[j] * ms_[static_cast<std::size_t>(age)];
      }
      out.push_back(static_cast<double>(L) * y);
      ++next_k;
    }
  }

 private:
  const ChainDesign& d_;
  std::deque<double> xs_;
  std::deque<double> ms_;
};

}  // namespace

struct ReferenceConditioner::Impl {
  ChainDesign design;
  DspConfig cfg;
  std::optional<StagedChannel> ch[2];
  std::optional<std::int64_t> next_input;
  std::int64_t next_k = 0;

  Impl(const DspConfig& c, double rate) : design(design_chain(c, rate)), cfg(c) {
    ch[0].emplace(design);
    ch[1].emplace(design);
  }

  ConditionedBlock run(std::span<const double> q, std::span<const double> p, std::uint64_t offset, double lsb,
                       double lo_power, int bits) {
    if (q.size() != p.size()) throw ValidationError("channel lengths differ");
    const auto start = static_cast<std::int64_t>(offset);
    if (!next_input) {
      next_input = start;
      next_k = design.first_output_at_or_after(start);
    } else if (*next_input != start) {
      throw ValidationError("non-contiguous input stream");
    }
    ConditionedBlock out;
    out.sample_rate_hz = design.output_rate_hz;
    out.effective_resolution_v = lsb * design.passband_gain(cfg.band_low_hz, cfg.band_high_hz);
    out.lo_power_w = lo_power;
    out.adc_bits = bits;
    out.stream_offset = static_cast<std::uint64_t>(next_k);
    const std::int64_t k0 = next_k;
    std::int64_t kq = k0;
    std::int64_t kp = k0;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const std::int64_t n = start + static_cast<std::int64_t>(i);
      ch[0]->push(q[i], n, out.channel_q, kq);
      ch[1]->push(p[i], n, out.channel_p, kp);
    }
    next_k = kq;
    *next_input = start + static_cast<std::int64_t>(q.size());
    return out;
  }
};

ReferenceConditioner::ReferenceConditioner(const DspConfig& cfg, double input_rate_hz)
    : impl_(std::make_unique<Impl>(cfg, input_rate_hz)) {}
ReferenceConditioner::~ReferenceConditioner() = default;
ReferenceConditioner::ReferenceConditioner(ReferenceConditioner&&) noexcept = default;
ReferenceConditioner& ReferenceConditioner::operator=(ReferenceConditioner&&) noexcept = default;

const ChainDesign& ReferenceConditioner::design() const { return impl_->design; }

ConditionedBlock ReferenceConditioner::process(const signal::SampleBlock& block) {
  if (block.sample_rate_hz != impl_->design.input_rate_hz) throw ValidationError("stream rate mismatch");
  const double lsb = block.lsb_volts();
  const auto q = codes_to_volts(block.channel_q, lsb);
  const auto p = codes_to_volts(block.channel_p, lsb);
  return impl_->run(q, p, block.stream_offset, lsb, block.lo_power_w, block.adc_bits);
}

ConditionedBlock ReferenceConditioner::process_volts(std::span<const double> q, std::span<const double> p,
                                                     std::uint64_t stream_offset, double lsb_v, double lo_power_w,
                                                     int adc_bits) {
  return impl_->run(q, p, stream_offset, lsb_v, lo_power_w, adc_bits);
}

// ---------------------------------------------------------------------------
// Fused polyphase kernels

struct Conditioner::Impl {
  ChainDesign design;
  DspConfig cfg;
  std::int64_t period = 0;  // output phases; 0 when using the staged fallback
  std::int64_t kernel_len = 0;
  std::int64_t kstride = 0;     // kernel_len rounded up to the vector width
  std::vector<double> kernels;  // period x kstride, reversed and zero padded
  std::vector<double> history[2];
  std::vector<double> work;  // reused input window, avoids page faults on every block
  std::optional<std::int64_t> next_input;
  std::optional<std::int64_t> stream_start;
  std::optional<ReferenceConditioner> fallback;

  Impl(const DspConfig& c, double rate) : design(design_chain(c, rate)), cfg(c) {
    const auto L = static_cast<std::int64_t>(design.interp);
    const auto M = static_cast<std::int64_t>(design.decim);
    const auto den = static_cast<std::int64_t>(design.mix_den);
    for (std::int64_t p = 1; p <= kMaxFusedPhases; ++p) {
      if ((p * M) % L == 0 && ((p * M / L) % den) == 0) {
        period = p;
        break;
      }
    }
    if (period == 0) {
      fallback.emplace(c, rate);
      return;
    }
    const auto hp_len = static_cast<std::int64_t>(design.front_i.size());
    const auto r_len = static_cast<std::int64_t>(design.prototype.size());
    kernel_len = hp_len + (r_len + L - 1) / L + 1;
    kstride = (kernel_len + kVec - 1) / kVec * kVec;
    kernels.assign(static_cast<std::size_t>(period * kstride), 0.0);
    for (std::int64_t phase = 0; phase < period; ++phase) {
      const std::int64_t k = phase;
      const std::int64_t b = design.newest_input(k);
      std::vector<double> ker(static_cast<std::size_t>(kernel_len), 0.0);
      for (std::int64_t j = 0; j < r_len; ++j) {
        const std::int64_t v = k * M - j;
        if (((v % L) + L) % L != 0) continue;
        const std::int64_t t = floor_div(v, L);
        const double c0 = static_cast<double>(L) * design.prototype[static_cast<std::size_t>(j)];
        const double ci = c0 * design.mix_cos(t);
        const double cq = c0 * design.mix_sin(t);
        for (std::int64_t l = 0; l < hp_len; ++l) {
          const auto u = static_cast<std::size_t>(l);
          ker[static_cast<std::size_t>(b - t + l)] += ci * design.front_i[u] + cq * design.front_q[u];
        }
      }
      std::reverse_copy(ker.begin(), ker.end(), kernels.begin() + phase * kstride);
    }
  }

  template <class T>
  void run_channel(std::span<const T> x, double scale, std::int64_t start, std::vector<double>& hist,
                   std::int64_t k0, std::int64_t k1, std::vector<double>& out) {
    // work[0] is absolute input index start - (kernel_len - 1); the zero tail
    // covers reads of the padded kernel.
    const std::size_t used = hist.size() + x.size();
    if (work.size() < used + kVec) work.resize(used + kVec);
    std::copy(hist.begin(), hist.end(), work.begin());
    double* dst = work.data() + hist.size();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = static_cast<double>(x[i]) * scale;
    std::fill(work.begin() + static_cast<std::ptrdiff_t>(used), work.begin() + static_cast<std::ptrdiff_t>(used + kVec), 0.0);
    out.resize(static_cast<std::size_t>(k1 - k0));
    const double* data = work.data();
    const std::int64_t len = kstride;
    const std::int64_t per = period;
    const std::int64_t stride = design.newest_input(per) - design.newest_input(0);  // input advance per period
    // Outputs sharing a phase share a kernel; kRows of them are accumulated per
    // kernel pass in vector registers. Tiles keep the input window cache resident.
    const std::int64_t tile = 32 * per;
    const std::int64_t ntiles = (k1 - k0 + tile - 1) / tile;
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < ntiles; ++t) {
      const std::int64_t t0 = k0 + t * tile;
      const std::int64_t t1 = std::min(k1, t0 + tile);
      for (std::int64_t phase = 0; phase < per; ++phase) {
        const double* w = kernels.data() + phase * len;
        std::int64_t k = t0 + (((phase - t0) % per) + per) % per;
        for (; k + (kRows - 1) * per < t1; k += kRows * per) {
          const double* s0 = data + (design.newest_input(k) - start);
          Vec acc[kRows] = {};
          for (std::int64_t e = 0; e < len; e += kVec) {
            const Vec wv = load(w + e);
            for (int r = 0; r < kRows; ++r) acc[r] += wv * load(s0 + r * stride + e);
          }
          for (int r = 0; r < kRows; ++r) out[static_cast<std::size_t>(k + r * per - k0)] = hsum(acc[r]);
        }
        for (; k < t1; k += per) {
          const double* s0 = data + (design.newest_input(k) - start);
          Vec acc = {};
          for (std::int64_t e = 0; e < len; e += kVec) acc += load(w + e) * load(s0 + e);
          out[static_cast<std::size_t>(k - k0)] = hsum(acc);
        }
      }
    }
    const auto tail = work.begin() + static_cast<std::ptrdiff_t>(used);
    std::copy(tail - static_cast<std::ptrdiff_t>(hist.size()), tail, hist.begin());
  }

  template <class T>
  ConditionedBlock run(std::span<const T> q, std::span<const T> p, double scale, std::uint64_t offset, double lsb,
                       double lo_power, int bits) {
    if (fallback) {
      if constexpr (std::is_same_v<T, double>) {
        return fallback->process_volts(q, p, offset, lsb, lo_power, bits);
      } else {
        const auto vq = codes_to_volts(q, scale);
        const auto vp = codes_to_volts(p, scale);
        return fallback->process_volts(vq, vp, offset, lsb, lo_power, bits);
      }
    }
    if (q.size() != p.size()) throw ValidationError("channel lengths differ");
    const auto start = static_cast<std::int64_t>(offset);
    if (!next_input) {
      next_input = start;
      stream_start = start;
      for (auto& h : history) h.assign(static_cast<std::size_t>(kernel_len - 1), 0.0);
    } else if (*next_input != start) {
      throw ValidationError("non-contiguous input stream");
    }
    const auto end = start + static_cast<std::int64_t>(q.size());
    const std::int64_t k0 = design.first_output_at_or_after(start);
    const std::int64_t k1 = design.first_output_at_or_after(end);

    ConditionedBlock out;
    out.sample_rate_hz = design.output_rate_hz;
    out.effective_resolution_v = lsb * design.passband_gain(cfg.band_low_hz, cfg.band_high_hz);
    out.lo_power_w = lo_power;
    out.adc_bits = bits;
    out.stream_offset = static_cast<std::uint64_t>(k0);
    run_channel(q, scale, start, history[0], k0, k1, out.channel_q);
    run_channel(p, scale, start, history[1], k0, k1, out.channel_p);
    next_input = end;
    return out;
  }
};

Conditioner::Conditioner(const DspConfig& cfg, double input_rate_hz) : impl_(std::make_unique<Impl>(cfg, input_rate_hz)) {}
Conditioner::~Conditioner() = default;
Conditioner::Conditioner(Conditioner&&) noexcept = default;
Conditioner& Conditioner::operator=(Conditioner&&) noexcept = default;

const ChainDesign& Conditioner::design() const { return impl_->design; }
bool Conditioner::fused() const { return !impl_->fallback.has_value(); }
std::size_t Conditioner::kernel_length() const { return static_cast<std::size_t>(impl_->kernel_len); }

std::size_t Conditioner::transient_outputs() const {
  const auto& d = impl_->design;
  const auto span = static_cast<std::int64_t>(d.front_i.size() + d.prototype.size() / d.interp + 2);
  const std::int64_t o = impl_->stream_start.value_or(0);
  return static_cast<std::size_t>(d.first_output_at_or_after(o + span) - d.first_output_at_or_after(o));
}

ConditionedBlock Conditioner::process(const signal::SampleBlock& block) {
  if (block.sample_rate_hz != impl_->design.input_rate_hz) throw ValidationError("stream rate mismatch");
  if (block.channel_q.size() != block.channel_p.size()) throw ValidationError("channel lengths differ");
  const double lsb = block.lsb_volts();
  return impl_->run(std::span<const std::int16_t>(block.channel_q), std::span<const std::int16_t>(block.channel_p), lsb,
                    block.stream_offset, lsb, block.lo_power_w, block.adc_bits);
}

ConditionedBlock Conditioner::process_volts(std::span<const double> q, std::span<const double> p,
                                            std::uint64_t stream_offset, double lsb_v, double lo_power_w,
                                            int adc_bits) {
  return impl_->run(q, p, 1.0, stream_offset, lsb_v, lo_power_w, adc_bits);
}

// ---------------------------------------------------------------------------
// Welch PSD

namespace {

struct FftPlan {
  fftw_plan plan = nullptr;
  explicit FftPlan(std::size_t n) {
    std::lock_guard lock(fftw_planner_mutex());
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
  }
  ~FftPlan() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
};

PsdEstimate welch(std::span<const double> x, double fs, std::size_t nseg_len, std::size_t overlap, bool parallel) {
  if (nseg_len < 2) throw ValidationError("segment length must be >= 2");
  if (nseg_len > x.size()) throw ValidationError("segment longer than data");
  if (overlap >= nseg_len) throw ValidationError("overlap must be smaller than the segment");
  const std::size_t step = nseg_len - overlap;
  const std::size_t nseg = 1 + (x.size() - nseg_len) / step;
  const std::size_t nbins = nseg_len / 2 + 1;

  std::vector<double> window(nseg_len);
  double wpow = 0.0;
  for (std::size_t n = 0; n < nseg_len; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(nseg_len));
    wpow += window[n] * window[n];
  }

  FftPlan plan(nseg_len);
  std::vector<double> total(nbins, 0.0);
  const auto segs = static_cast<std::int64_t>(nseg);
#pragma omp parallel if (parallel)
  {
    std::vector<double> acc(nbins, 0.0);
    std::vector<double> buf(nseg_len);
    std::vector<fftw_complex> spec(nbins);
#pragma omp for schedule(static)
    for (std::int64_t s = 0; s < segs; ++s) {
      const double* seg = x.data() + static_cast<std::size_t>(s) * step;
      double mean = 0.0;
      for (std::size_t n = 0; n < nseg_len; ++n) mean += seg[n];
      mean /= static_cast<double>(nseg_len);
      for (std::size_t n = 0; n < nseg_len; ++n) buf[n] = (seg[n] - mean) * window[n];
      fftw_execute_dft_r2c(plan.plan, buf.data(), spec.data());
      for (std::size_t k = 0; k < nbins; ++k) acc[k] += spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
    }
#pragma omp critical
    for (std::size_t k = 0; k < nbins; ++k) total[k] += acc[k];
  }

  PsdEstimate est;
  est.frequencies_hz.resize(nbins);
  est.psd.resize(nbins);
  const double scale = 1.0 / (static_cast<double>(nseg) * fs * wpow);
  for (std::size_t k = 0; k < nbins; ++k) {
    est.frequencies_hz[k] = static_cast<double>(k) * fs / static_cast<double>(nseg_len);
    const bool edge = k == 0 || (nseg_len % 2 == 0 && k == nbins - 1);
    est.psd[k] = total[k] * scale * (edge ? 1.0 : 2.0);
  }
  return est;
}

}  // namespace

PsdEstimate estimate_psd(std::span<const double> samples, double sample_rate_hz, std::size_t segment_length,
                         std::size_t overlap) {
  return welch(samples, sample_rate_hz, segment_length, overlap, true);
}

PsdEstimate estimate_psd_reference(std::span<const double> samples, double sample_rate_hz,
                                   std::size_t segment_length, std::size_t overlap) {
  return welch(samples, sample_rate_hz, segment_length, overlap, false);
}

PsdEstimate estimate_psd(const signal::SampleBlock& block, int channel, std::size_t segment_length,
                         std::size_t overlap) {
  const auto v = codes_to_volts(block.channel(channel), block.lsb_volts());
  return estimate_psd(v, block.sample_rate_hz, segment_length, overlap);
}

std::vector<double> clearance(std::span<const double> psd_on, std::span<const double> psd_off) {
  if (psd_on.size() != psd_off.size()) throw ValidationError("clearance: PSD arrays differ in length");
  std::vector<double> out(psd_on.size());
  for (std::size_t i = 0; i < psd_on.size(); ++i) {
    if (!(psd_on[i] > 0.0) || !(psd_off[i] > 0.0)) throw ValidationError("clearance: zero or negative PSD bin");
    out[i] = 10.0 * std::log10(psd_on[i] / psd_off[i]);
  }
  return out;
}

SpectrumReport SpectrumReport::from(const PsdEstimate& on, const PsdEstimate& off) {
  if (on.frequencies_hz != off.frequencies_hz) throw ValidationError("PSD frequency grids differ");
  SpectrumReport r;
  r.frequencies_hz = on.frequencies_hz;
  r.psd_on = on.psd;
  r.psd_off = off.psd;
  r.clearance_db = clearance(on.psd, off.psd);
  return r;
}

double SpectrumReport::mean_clearance_db(double f_lo, double f_hi) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < frequencies_hz.size(); ++i) {
    if (frequencies_hz[i] >= f_lo && frequencies_hz[i] <= f_hi) {
      sum += clearance_db[i];
      ++n;
    }
  }
  if (n == 0) throw ValidationError("no PSD bins in the requested range");
  return sum / static_cast<double>(n);
}

double SpectrumReport::min_clearance_db(double f_lo, double f_hi) const {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < frequencies_hz.size(); ++i) {
    if (frequencies_hz[i] >= f_lo && frequencies_hz[i] <= f_hi) m = std::min(m, clearance_db[i]);
  }
  if (!std::isfinite(m)) throw ValidationError("no PSD bins in the requested range");
  return m;
}

std::string SpectrumReport::to_json() const {
  nlohmann::json j;
  j["frequencies_hz"] = frequencies_hz;
  j["psd_on"] = psd_on;
  j["psd_off"] = psd_off;
  j["clearance_db"] = clearance_db;
  return j.dump(1);
}

std::string SpectrumReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "frequency_hz,psd_on,psd_off,clearance_db\n";
  for (std::size_t i = 0; i < frequencies_hz.size(); ++i) {
    os << frequencies_hz[i] << ',' << psd_on[i] << ',' << psd_off[i] << ',' << clearance_db[i] << '\n';
  }
  return os.str();
}

}  // namespace qrng::dsp
