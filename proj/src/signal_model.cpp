#include "qrng/signal_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <boost/random/normal_distribution.hpp>

#include "qrng/error.hpp"

namespace qrng::signal {
namespace {

constexpr std::int64_t kChunk = 1 << 16;  // white-noise samples per RNG stream
constexpr std::int64_t kToneGroup = 1024;  // tone phase re-anchoring period
constexpr std::int64_t kFirTile = 256;
constexpr double kPoleTailTolerance = 1e-10;
constexpr int kFlickerTones = 24;
constexpr double kFlickerLow = 0.5e6;
constexpr double kFlickerHigh = 100e6;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

void fill_chunk(std::uint64_t seed, int channel, std::int64_t chunk, std::vector<double>& out) {
  const std::uint64_t key = splitmix64(seed) ^ splitmix64(0x51ed270b0a3f1d7cULL + channel) ^
                            splitmix64(static_cast<std::uint64_t>(chunk) * 0x2545f4914f6cdd1dULL);
  std::mt19937_64 engine(splitmix64(key));
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  out.resize(kChunk);
  for (auto& v : out) v = normal(engine);
}

struct ChannelTone {
  double cycles_per_sample;
  double amplitude;
  double phase;
  std::vector<double> cos_table;  // cos(k * omega), k in [0, kToneGroup)
  std::vector<double> sin_table;
};

}  // namespace

void SourceParams::validate() const {
  if (!(lo_power_w >= 0.0)) throw ValidationError("lo_power must be >= 0");
  if (!(shot_slope_q > 0.0) || !(shot_slope_p > 0.0)) throw ValidationError("shot slopes must be > 0");
  if (!(electronic_noise_variance >= 0.0)) throw ValidationError("electronic_noise_variance must be >= 0");
  if (adc_bits < 2 || adc_bits > 16) throw ValidationError("adc_bits must be in [2, 16]");
  if (!(adc_rate_hz > 0.0)) throw ValidationError("adc_rate must be > 0");
  if (!(adc_full_scale_v > 0.0)) throw ValidationError("adc_full_scale must be > 0");
  if (!(flicker_rms_v >= 0.0)) throw ValidationError("flicker_rms must be >= 0");
  for (const auto& t : lowfreq_tones) {
    if (!(t.frequency_hz >= 0.0) || t.frequency_hz >= adc_rate_hz / 2) {
      throw ValidationError("tone frequency outside [0, Nyquist)");
    }
  }
}

double SourceParams::channel_variance(int channel) const {
  const double slope = channel == 0 ? shot_slope_q : shot_slope_p;
  return slope * lo_power_w + electronic_noise_variance;
}

void SampleBlock::validate() const {
  if (channel_q.size() != channel_p.size()) throw ValidationError("channel lengths differ");
  if (adc_bits < 2 || adc_bits > 16) throw ValidationError("adc_bits must be in [2, 16]");
  const int lo = min_code();
  const int hi = max_code();
  for (int c = 0; c < 2; ++c) {
    for (std::int16_t v : channel(c)) {
      if (v < lo || v > hi) throw ValidationError("ADC code outside the bit-depth range");
    }
  }
}

double SampleBlock::saturated_fraction() const {
  if (size() == 0) return 0.0;
  const int lo = min_code();
  const int hi = max_code();
  std::size_t n = 0;
  for (int c = 0; c < 2; ++c) {
    for (std::int16_t v : channel(c)) n += (v == lo || v == hi) ? 1 : 0;
  }
  return static_cast<double>(n) / static_cast<double>(2 * size());
}

bool SampleBlock::same_stream_metadata(const SampleBlock& other) const {
  return sample_rate_hz == other.sample_rate_hz && adc_bits == other.adc_bits &&
         adc_full_scale_v == other.adc_full_scale_v && lo_power_w == other.lo_power_w;
}

std::vector<double> analog_response(const SourceParams& params) {
  const double fc = params.analog_bandwidth_hz;
  if (!(fc > 0.0) || fc >= params.adc_rate_hz / 2) return {1.0};
  const double a = std::exp(-2.0 * std::numbers::pi * fc / params.adc_rate_hz);
  const auto len = static_cast<std::size_t>(std::ceil(std::log(kPoleTailTolerance) / std::log(a))) + 1;
  std::vector<double> h(len);
  double energy = 0.0;
  double v = 1.0;
  for (auto& tap : h) {
    tap = v;
    energy += v * v;
    v *= a;
  }
  const double norm = 1.0 / std::sqrt(energy);
  for (auto& tap : h) tap *= norm;
  return h;
}

struct SampleSource::Impl {
  SourceParams params;
  std::vector<double> pole_reversed;
  std::vector<ChannelTone> tones[2];
  std::map<std::int64_t, std::vector<double>> chunks[2];
  std::vector<std::vector<double>> spare;  // evicted chunk storage, reused
  std::vector<double> wbuf;
  std::vector<double> vbuf;

  explicit Impl(const SourceParams& p) : params(p) {
    auto h = analog_response(p);
    pole_reversed.assign(h.rbegin(), h.rend());
    for (int c = 0; c < 2; ++c) {
      for (const auto& t : p.lowfreq_tones) add_tone(c, t.frequency_hz, t.amplitude_v, 0.0);
      if (p.flicker_rms_v > 0.0) {
        // Equal power per log-spaced bin gives a 1/f line spectrum.
        std::mt19937_64 rng(splitmix64(p.seed ^ (0xf11c4e5ULL + c)));
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        const double amp = p.flicker_rms_v * std::sqrt(2.0 / kFlickerTones);
        const double ratio = std::log(kFlickerHigh / kFlickerLow);
        for (int k = 0; k < kFlickerTones; ++k) {
          const double f = kFlickerLow * std::exp(ratio * (k + 0.5) / kFlickerTones);
          add_tone(c, f, amp, phase(rng));
        }
      }
    }
  }

  void add_tone(int channel, double freq, double amp, double phase) {
    ChannelTone t;
    t.cycles_per_sample = freq / params.adc_rate_hz;
    t.amplitude = amp;
    t.phase = phase;
    t.cos_table.resize(kToneGroup);
    t.sin_table.resize(kToneGroup);
    for (std::int64_t k = 0; k < kToneGroup; ++k) {
      const double w = 2.0 * std::numbers::pi * std::fmod(t.cycles_per_sample * static_cast<double>(k), 1.0);
      t.cos_table[k] = std::cos(w);
      t.sin_table[k] = std::sin(w);
    }
    tones[channel].push_back(std::move(t));
  }

  // White noise for indices [first, first + count) of one channel.
  void white(int channel, std::int64_t first, std::int64_t count, std::vector<double>& out) {
    auto& cache = chunks[channel];
    const std::int64_t c0 = floor_div(first, kChunk);
    const std::int64_t c1 = floor_div(first + count - 1, kChunk);
    std::vector<std::int64_t> missing;
    for (std::int64_t c = c0; c <= c1; ++c) {
      if (!cache.contains(c)) missing.push_back(c);
    }
    std::vector<std::vector<double>> fresh(missing.size());
    for (std::size_t i = 0; i < missing.size() && !spare.empty(); ++i) {
      fresh[i] = std::move(spare.back());
      spare.pop_back();
    }
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < missing.size(); ++i) {
      fill_chunk(params.seed, channel, missing[i], fresh[i]);
    }
    for (std::size_t i = 0; i < missing.size(); ++i) cache.emplace(missing[i], std::move(fresh[i]));

    out.resize(static_cast<std::size_t>(count));
    std::int64_t pos = first;
    while (pos < first + count) {
      const std::int64_t c = floor_div(pos, kChunk);
      const auto& chunk = cache.at(c);
      const std::int64_t begin = pos - c * kChunk;
      const std::int64_t take = std::min(kChunk - begin, first + count - pos);
      std::copy_n(chunk.begin() + begin, take, out.begin() + (pos - first));
      pos += take;
    }
  }

  void evict_before(std::int64_t index) {
    const std::int64_t keep = floor_div(index, kChunk);
    for (auto& cache : chunks) {
      while (!cache.empty() && cache.begin()->first < keep) {
        spare.push_back(std::move(cache.begin()->second));
        cache.erase(cache.begin());
      }
    }
  }

  void voltages(int channel, std::int64_t offset, std::size_t length, std::vector<double>& out) {
    const auto taps = static_cast<std::int64_t>(pole_reversed.size());
    const auto n = static_cast<std::int64_t>(length);
    out.assign(length, 0.0);
    const double sigma = std::sqrt(params.channel_variance(channel));
    if (sigma > 0.0) {
      auto& w = wbuf;
      white(channel, offset - taps + 1, n + taps - 1, w);
      const double* h = pole_reversed.data();
      const std::int64_t tiles = (n + kFirTile - 1) / kFirTile;
      // Tap-outer loop inside each tile keeps the inner loop vectorized across outputs.
#pragma omp parallel for schedule(static)
      for (std::int64_t t = 0; t < tiles; ++t) {
        const std::int64_t i0 = t * kFirTile;
        const std::int64_t len = std::min(kFirTile, n - i0);
        double acc[kFirTile] = {};
        for (std::int64_t k = 0; k < taps; ++k) {
          const double hk = h[k];
          const double* x = w.data() + i0 + k;
#pragma omp simd
          for (std::int64_t i = 0; i < len; ++i) acc[i] += hk * x[i];
        }
        for (std::int64_t i = 0; i < len; ++i) out[i0 + i] = sigma * acc[i];
      }
    }
    for (const auto& t : tones[channel]) add_tone_samples(t, offset, out);
  }

  static void add_tone_samples(const ChannelTone& t, std::int64_t offset, std::vector<double>& out) {
    const auto n = static_cast<std::int64_t>(out.size());
    std::int64_t i = 0;
    while (i < n) {
      const std::int64_t index = offset + i;
      const std::int64_t group = floor_div(index, kToneGroup);
      const std::int64_t anchor = group * kToneGroup;
      const double cycles = std::fmod(t.cycles_per_sample * static_cast<double>(anchor), 1.0);
      const double theta = 2.0 * std::numbers::pi * cycles + t.phase;
      const double ca = t.amplitude * std::cos(theta);
      const double sa = t.amplitude * std::sin(theta);
      const std::int64_t k0 = index - anchor;
      const std::int64_t count = std::min(kToneGroup - k0, n - i);
      for (std::int64_t k = 0; k < count; ++k) {
        out[i + k] += ca * t.cos_table[k0 + k] - sa * t.sin_table[k0 + k];
      }
      i += count;
    }
  }
};

SampleSource::SampleSource(SourceParams params, std::uint64_t start_offset)
    : params_(std::move(params)), offset_(start_offset) {
  params_.validate();
  impl_ = std::make_unique<Impl>(params_);
}

SampleSource::~SampleSource() = default;
SampleSource::SampleSource(SampleSource&&) noexcept = default;
SampleSource& SampleSource::operator=(SampleSource&&) noexcept = default;

SampleBlock SampleSource::next(std::size_t length) {
  if (length == 0) throw ValidationError("block length must be > 0");
  SampleBlock block;
  block.sample_rate_hz = params_.adc_rate_hz;
  block.adc_bits = params_.adc_bits;
  block.adc_full_scale_v = params_.adc_full_scale_v;
  block.lo_power_w = params_.lo_power_w;
  block.stream_offset = offset_;

  const double inv_lsb = 1.0 / params_.lsb_volts();
  const double lo = -(1 << (params_.adc_bits - 1));
  const double hi = (1 << (params_.adc_bits - 1)) - 1;
  for (int c = 0; c < 2; ++c) {
    auto& v = impl_->vbuf;
    impl_->voltages(c, static_cast<std::int64_t>(offset_), length, v);
    auto& codes = c == 0 ? block.channel_q : block.channel_p;
    codes.resize(length);
    const auto n = static_cast<std::int64_t>(length);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      // Mid-tread quantizer; saturates at the extreme codes instead of wrapping.
      codes[i] = static_cast<std::int16_t>(std::clamp(std::nearbyint(v[i] * inv_lsb), lo, hi));
    }
  }
  offset_ += length;
  impl_->evict_before(static_cast<std::int64_t>(offset_) - static_cast<std::int64_t>(impl_->pole_reversed.size()));
  return block;
}

SampleBlock generate_block(const SourceParams& params, std::size_t length, std::uint64_t offset) {
  SampleSource source(params, offset);
  return source.next(length);
}

std::vector<double> analog_voltages(const SourceParams& params, int channel, std::size_t length,
                                    std::uint64_t offset) {
  if (length == 0) throw ValidationError("block length must be > 0");
  params.validate();
  SampleSource::Impl impl(params);
  std::vector<double> out;
  impl.voltages(channel, static_cast<std::int64_t>(offset), length, out);
  return out;
}

}  // namespace qrng::signal
