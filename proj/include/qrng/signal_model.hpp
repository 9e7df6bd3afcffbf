#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

namespace qrng::signal {

struct Tone {
  double frequency_hz = 0.0;
  double amplitude_v = 0.0;
};

/// Parameters of the synthetic heterodyne receiver.
///
/// Each channel carries zero-mean Gaussian noise of variance
/// `shot_slope * lo_power + electronic_noise_variance`, shaped by a
/// single-pole low-pass at `analog_bandwidth_hz`, plus deterministic
/// low-frequency LO tones and optional 1/f-shaped noise, and is then
/// digitized by a mid-tread `adc_bits` quantizer spanning `adc_full_scale_v`
/// peak to peak.
struct SourceParams {
  double lo_power_w = 20e-3;
  double shot_slope_q = 0.4988;  // V^2/W
  double shot_slope_p = 0.4910;  // V^2/W
  double electronic_noise_variance = 1.2561e-3;  // V^2, white component
  std::vector<Tone> lowfreq_tones = {{12e6, 0.02}, {31e6, 0.01}};
  double flicker_rms_v = 0.0;  // 1/f-shaped noise below 100 MHz
  double analog_bandwidth_hz = 2.5e9;  // <= 0 disables the pole
  double adc_rate_hz = 25e9;
  int adc_bits = 8;
  double adc_full_scale_v = 1.0;
  std::uint64_t seed = 1;

  void validate() const;  // throws ValidationError
  double lsb_volts() const { return adc_full_scale_v / static_cast<double>(1u << adc_bits); }
  double channel_variance(int channel) const;
};

/// Two-channel block of raw ADC codes. Channel 0 is q, channel 1 is p.
struct SampleBlock {
  std::vector<std::int16_t> channel_q;
  std::vector<std::int16_t> channel_p;
  double sample_rate_hz = 0.0;
  int adc_bits = 8;
  double adc_full_scale_v = 1.0;
  double lo_power_w = 0.0;
  std::uint64_t stream_offset = 0;

  std::size_t size() const { return channel_q.size(); }
  double lsb_volts() const { return adc_full_scale_v / static_cast<double>(1u << adc_bits); }
  int min_code() const { return -(1 << (adc_bits - 1)); }
  int max_code() const { return (1 << (adc_bits - 1)) - 1; }
  std::span<const std::int16_t> channel(int c) const { return c == 0 ? channel_q : channel_p; }

  // Throws ValidationError on mismatched lengths or out-of-range codes.
  void validate() const;
  // Fraction of codes (both channels) sitting on either extreme code.
  double saturated_fraction() const;
  bool same_stream_metadata(const SampleBlock& other) const;
};

/// Sequential generator for one synthetic stream. Output depends only on
/// (params, absolute sample index), so any split of the stream into blocks
/// yields the same codes, and independent sources may start at any offset.
class SampleSource {
 public:
  explicit SampleSource(SourceParams params, std::uint64_t start_offset = 0);
  ~SampleSource();
  SampleSource(SampleSource&&) noexcept;
  SampleSource& operator=(SampleSource&&) noexcept;

  SampleBlock next(std::size_t length);

  const SourceParams& params() const { return params_; }
  std::uint64_t offset() const { return offset_; }

 private:
  struct Impl;
  friend std::vector<double> analog_voltages(const SourceParams&, int, std::size_t, std::uint64_t);
  SourceParams params_;
  std::uint64_t offset_;
  std::unique_ptr<Impl> impl_;
};

SampleBlock generate_block(const SourceParams& params, std::size_t length, std::uint64_t offset = 0);

// Pre-quantization voltages, exposed for statistical checks of the model.
std::vector<double> analog_voltages(const SourceParams& params, int channel, std::size_t length,
                                    std::uint64_t offset = 0);

// Taps of the truncated single-pole analog response (unit energy).
std::vector<double> analog_response(const SourceParams& params);

}  // namespace qrng::signal
