#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qrng/calibration.hpp"
#include "qrng/dsp.hpp"
#include "qrng/entropy.hpp"
#include "qrng/extractor.hpp"
#include "qrng/signal_model.hpp"
#include "qrng/stattests.hpp"

namespace qrng::pipeline {

struct SweepConfig {
  std::vector<double> powers_w = {0.0, 5e-3, 10e-3, 15e-3, 20e-3};
  std::uint64_t samples_per_point = 10'000'000;  // raw ADC samples per channel
  std::size_t block_size = 1 << 20;
  bool archive = false;
  std::map<double, std::filesystem::path> capture_files;  // power -> QRAW, replaces the simulator
};

struct ExtractorConfig {
  std::size_t input_bits = 17600;
  std::size_t output_bits = 0;  // 0: size from the leftover hash lemma
  double epsilon = 1e-17;
  std::string seed_source = "derived";  // derived | os | file
  std::filesystem::path seed_file;
};

struct SpectrumConfig {
  std::size_t segment_length = 4096;
  std::size_t overlap = 2048;
  std::size_t samples = 1 << 22;
};

struct GenerateConfig {
  std::optional<double> power_w;  // default: the calibration reference power
  std::uint64_t bytes = 1 << 20;
  double max_calibration_age_s = 86400.0;
  std::optional<std::filesystem::path> capture;  // raw input instead of the simulator
};

struct ReportConfig {
  std::uint64_t analysis_pairs = 1'200'000;  // conditioned pairs per power
  std::vector<double> powers_w;              // default: nonzero sweep powers
};

/// Whole-pipeline configuration; INI-style sections with flag overrides applied on top.
struct PipelineConfig {
  signal::SourceParams source;
  dsp::DspConfig dsp;
  SweepConfig sweep;
  ExtractorConfig extractor;
  SpectrumConfig spectrum;
  GenerateConfig generate;
  ReportConfig report;
  stattests::BatteryConfig battery;
  std::filesystem::path out_dir = "out";

  static PipelineConfig defaults() { return {}; }
  static PipelineConfig from_string(const std::string& text);
  static PipelineConfig load(const std::filesystem::path& path);

  void validate() const;
  std::string canonical() const;  // fully resolved, fixed-order INI text
  std::string hash() const;       // SHA-256 of canonical() without [output]
  double operating_power(const calibration::CalibrationResult& cal) const;
};

struct CalibrationOutputs {
  calibration::CalibrationResult result;
  dsp::SpectrumReport spectrum;
  double clearance_mean_db = 0.0;  // over [band_low, band_high]
  double clearance_min_db = 0.0;
};

CalibrationOutputs calibrate(const PipelineConfig& cfg);
dsp::SpectrumReport measure_spectrum(const PipelineConfig& cfg);

struct GenerateOutputs {
  BitVector bits;  // exactly 8 * requested bytes
  extractor::ExtractorParams params;
  entropy::CertifiedEntropy certified;
  double secure_rate = 0.0;  // R_rw * certified h
  double raw_rate = 0.0;
  std::uint64_t blocks = 0;
  std::string sidecar_json;
};

// Throws SecurityError for a stale calibration or no certifiable entropy.
GenerateOutputs generate(const PipelineConfig& cfg, const calibration::CalibrationResult& cal,
                         std::optional<std::int64_t> now_unix_s = std::nullopt);

extractor::ExtractorParams extractor_params(const PipelineConfig& cfg, double h_min_per_pair, int adc_bits);

stattests::Summary analyze(const BitVector& bits, const PipelineConfig& cfg);
BitVector read_bits(const std::filesystem::path& path);

struct ReportOutputs {
  std::vector<entropy::EntropyReport> points;
  std::string variance_csv;
  std::string entropy_csv;
  std::string purity_csv;
  std::string json;
};

ReportOutputs report(const PipelineConfig& cfg, const calibration::CalibrationResult& cal);

// Conditioned record of `pairs` pairs at `lo_power_w`, start-up transient removed.
dsp::ConditionedBlock simulate_conditioned(const PipelineConfig& cfg, double lo_power_w, std::uint64_t pairs,
                                           std::uint64_t stream_seed);

}  // namespace qrng::pipeline
