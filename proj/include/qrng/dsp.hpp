#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qrng/signal_model.hpp"

namespace qrng::dsp {

/// Band selection chain: high-pass -> sine mixing -> low-pass/resample.
/// The mixer is image-reject: x cos(w0 n) + H{x} sin(w0 n), with H a Hilbert
/// transformer, so each input frequency f lands once, at |f - f0|.
struct DspConfig {
  double highpass_cutoff_hz = 48e6;
  double band_low_hz = 400e6;
  double band_high_hz = 1400e6;
  double mix_frequency_hz = 400e6;
  double lowpass_cutoff_hz = 1000e6;
  double output_rate_hz = 2e9;
  std::size_t filter_taps = 0;  // 0: size every FIR from the Kaiser formula
  double stopband_attenuation_db = 45.0;
  double lowpass_transition_hz = 100e6;

  void validate(double input_rate_hz) const;  // throws ValidationError
};

/// Filters and rate factors realizing a DspConfig at a given input rate.
struct ChainDesign {
  double input_rate_hz = 0.0;
  double output_rate_hz = 0.0;
  std::vector<double> highpass;   // at the input rate
  std::vector<double> hilbert;    // at the input rate
  std::vector<double> front_i;    // highpass delayed by the Hilbert group delay
  std::vector<double> front_q;    // highpass * hilbert
  std::vector<double> prototype;  // low-pass at interp * input rate, unity DC gain
  std::uint64_t interp = 1;       // L
  std::uint64_t decim = 1;        // M
  std::uint64_t mix_num = 0;      // mix_frequency / input_rate = mix_num / mix_den
  std::uint64_t mix_den = 1;

  // Mixer phase 2 pi f0 n / fs reduced exactly, so the oscillator is periodic in n.
  double mix_phase(std::int64_t n) const;
  double mix_cos(std::int64_t n) const;
  double mix_sin(std::int64_t n) const;
  // Amplitude gain for an input tone at `frequency_hz` landing at |f - f0|.
  double tone_gain(double frequency_hz) const;
  double passband_gain(double band_low_hz, double band_high_hz) const;
  // Output k is the first one whose newest input sample is index >= n.
  std::int64_t first_output_at_or_after(std::int64_t n) const;
  std::int64_t newest_input(std::int64_t k) const;
};

ChainDesign design_chain(const DspConfig& cfg, double input_rate_hz);

/// Conditioned record for both channels, in volts.
struct ConditionedBlock {
  std::vector<double> channel_q;
  std::vector<double> channel_p;
  double sample_rate_hz = 0.0;
  double effective_resolution_v = 0.0;
  double lo_power_w = 0.0;
  int adc_bits = 8;
  std::uint64_t stream_offset = 0;  // index of the first output sample

  std::size_t size() const { return channel_q.size(); }
  std::span<const double> channel(int c) const { return c == 0 ? channel_q : channel_p; }
};

/// Fast conditioner: the linear, periodically time-varying chain is folded
/// into one kernel per output phase and evaluated only at output instants.
/// Falls back to the staged path when the phase period is impractically long.
class Conditioner {
 public:
  Conditioner(const DspConfig& cfg, double input_rate_hz);
  ~Conditioner();
  Conditioner(Conditioner&&) noexcept;
  Conditioner& operator=(Conditioner&&) noexcept;

  ConditionedBlock process(const signal::SampleBlock& block);
  // Same, with pre-quantization voltages instead of ADC codes.
  ConditionedBlock process_volts(std::span<const double> q, std::span<const double> p, std::uint64_t stream_offset,
                                 double lsb_v, double lo_power_w = 0.0, int adc_bits = 8);

  const ChainDesign& design() const;
  // Outputs at the start of a stream that still see the zero initial state.
  std::size_t transient_outputs() const;
  bool fused() const;
  std::size_t kernel_length() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Staged serial reference: high-pass and Hilbert branches, mix, then direct-form polyphase
/// interpolate/filter/decimate, one input sample at a time.
class ReferenceConditioner {
 public:
  ReferenceConditioner(const DspConfig& cfg, double input_rate_hz);
  ~ReferenceConditioner();
  ReferenceConditioner(ReferenceConditioner&&) noexcept;
  ReferenceConditioner& operator=(ReferenceConditioner&&) noexcept;

  ConditionedBlock process(const signal::SampleBlock& block);
  ConditionedBlock process_volts(std::span<const double> q, std::span<const double> p, std::uint64_t stream_offset,
                                 double lsb_v, double lo_power_w = 0.0, int adc_bits = 8);
  const ChainDesign& design() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct PsdEstimate {
  std::vector<double> frequencies_hz;
  std::vector<double> psd;  // one-sided, V^2/Hz
};

/// Welch estimate with a Hann window and per-segment mean removal,
/// normalized so that sum(psd) * df equals the signal variance.
PsdEstimate estimate_psd(std::span<const double> samples, double sample_rate_hz, std::size_t segment_length,
                         std::size_t overlap);
PsdEstimate estimate_psd(const signal::SampleBlock& block, int channel, std::size_t segment_length,
                         std::size_t overlap);
PsdEstimate estimate_psd_reference(std::span<const double> samples, double sample_rate_hz,
                                   std::size_t segment_length, std::size_t overlap);

std::vector<double> clearance(std::span<const double> psd_on, std::span<const double> psd_off);

struct SpectrumReport {
  std::vector<double> frequencies_hz;
  std::vector<double> psd_on;
  std::vector<double> psd_off;
  std::vector<double> clearance_db;

  static SpectrumReport from(const PsdEstimate& on, const PsdEstimate& off);
  // Mean clearance over bins inside [f_lo, f_hi].
  double mean_clearance_db(double f_lo, double f_hi) const;
  double min_clearance_db(double f_lo, double f_hi) const;

  std::string to_json() const;
  std::string to_csv() const;
};

std::vector<double> codes_to_volts(std::span<const std::int16_t> codes, double lsb_v);

}  // namespace qrng::dsp
