#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qrng/dsp.hpp"
#include "qrng/signal_model.hpp"

namespace qrng::calibration {

inline constexpr double kSaturationLimit = 1e-3;
inline constexpr double kMinRSquared = 0.99;

struct SweepPoint {
  double lo_power_w = 0.0;
  double lo_power_se_w = 0.0;
  double variance_q = 0.0;  // conditioned volts^2
  double variance_p = 0.0;
  double se_q = 0.0;
  double se_p = 0.0;
  double mean_q = 0.0;
  double mean_p = 0.0;
  std::uint64_t sample_count = 0;  // conditioned samples per channel
  double saturated_fraction = 0.0;
  double effective_resolution_v = 0.0;

  void validate() const;
};

struct ChannelFit {
  double slope = 0.0;  // V^2/W
  double slope_se = 0.0;
  double intercept = 0.0;  // V^2
  double intercept_se = 0.0;
  double r_squared = 0.0;
};

struct CalibrationResult {
  ChannelFit q;
  ChannelFit p;
  double effective_resolution_v = 0.0;
  double reference_lo_power_w = 0.0;
  std::vector<SweepPoint> points;
  std::string config_hash;
  std::int64_t timestamp = 0;  // unix seconds

  const ChannelFit& channel(int c) const { return c == 0 ? q : p; }
  // Volts to vacuum units at LO power P: x / sqrt(2 * slope * P).
  double vu_scale(int channel, double lo_power_w) const;
  double delta(int channel, double lo_power_w) const;
  double delta_q(double lo_power_w) const { return delta(0, lo_power_w); }
  double delta_p(double lo_power_w) const { return delta(1, lo_power_w); }

  std::string to_json() const;
  static CalibrationResult from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static CalibrationResult load(const std::filesystem::path& path);
};

/// A controllable LO power source feeding raw two-channel blocks.
class SweepSource {
 public:
  virtual ~SweepSource() = default;
  // Starts a fresh stream at the given power.
  virtual void set_power(double lo_power_w) = 0;
  virtual std::optional<signal::SampleBlock> next(std::size_t max_samples) = 0;
  virtual double power_uncertainty(double /*lo_power_w*/) const { return 0.0; }
};

/// Simulator-backed source; point i of a sweep uses an independent noise seed.
class SyntheticSweepSource : public SweepSource {
 public:
  explicit SyntheticSweepSource(signal::SourceParams params, double relative_power_uncertainty = 0.0);
  void set_power(double lo_power_w) override;
  std::optional<signal::SampleBlock> next(std::size_t max_samples) override;
  double power_uncertainty(double lo_power_w) const override { return relative_uncertainty_ * lo_power_w; }
  const signal::SourceParams& params() const { return params_; }

 private:
  signal::SourceParams params_;
  double relative_uncertainty_;
  std::uint64_t streams_ = 0;
  std::unique_ptr<signal::SampleSource> source_;
};

/// Recorded QRAW captures, one file per power.
class CaptureSweepSource : public SweepSource {
 public:
  explicit CaptureSweepSource(std::map<double, std::filesystem::path> files);
  ~CaptureSweepSource() override;
  void set_power(double lo_power_w) override;
  std::optional<signal::SampleBlock> next(std::size_t max_samples) override;

 private:
  struct Reader;
  std::map<double, std::filesystem::path> files_;
  std::unique_ptr<Reader> reader_;
};

struct SweepOptions {
  std::size_t block_size = 1 << 20;
  std::optional<std::filesystem::path> archive_dir;  // QRAW copy of each point
};

/// One point per power; samples_per_point counts raw ADC samples per channel.
std::vector<SweepPoint> run_sweep(SweepSource& source, std::span<const double> powers_w,
                                  std::uint64_t samples_per_point, const dsp::DspConfig& cfg,
                                  const SweepOptions& options = {});

// Variance of a conditioned stream after dropping the filter start-up.
SweepPoint measure_point(SweepSource& source, double lo_power_w, std::uint64_t samples_per_point,
                         const dsp::DspConfig& cfg, const SweepOptions& options = {});

// Weighted least squares of variance against power for both channels.
CalibrationResult fit(std::span<const SweepPoint> points, std::optional<double> reference_lo_power_w = std::nullopt);

ChannelFit fit_channel(std::span<const double> power, std::span<const double> variance,
                       std::span<const double> se);

double effective_resolution(const dsp::DspConfig& cfg, double adc_rate_hz, int adc_bits, double adc_full_scale_v);
double effective_resolution(const dsp::DspConfig& cfg, const signal::SourceParams& adc);

}  // namespace qrng::calibration
