#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

#include "qrng/signal_model.hpp"

namespace qrng::capture {

using signal::SampleBlock;

// QRAW layout (little-endian):
//   "QRAW" | u16 version=1 | u16 adc_bits | f64 sample_rate | f64 full_scale
//   | f64 lo_power | 32 reserved bytes | interleaved q,p codes
// Codes are one signed byte for adc_bits <= 8, two bytes otherwise.
inline constexpr std::size_t kHeaderBytes = 64;
inline constexpr std::uint16_t kVersion = 1;

struct CaptureHeader {
  int adc_bits = 8;
  double sample_rate_hz = 0.0;
  double adc_full_scale_v = 1.0;
  double lo_power_w = 0.0;

  int bytes_per_code() const { return adc_bits <= 8 ? 1 : 2; }
};

std::vector<std::uint8_t> encode_header(const CaptureHeader& header);
CaptureHeader decode_header(std::span<const std::uint8_t> bytes);  // throws FormatError

/// Streaming QRAW writer. Metadata is fixed by the first block; later blocks
/// must match it and continue the stream contiguously.
class CaptureWriter {
 public:
  explicit CaptureWriter(const std::filesystem::path& path);
  CaptureWriter(const std::filesystem::path& path, const CaptureHeader& header);

  void write(const SampleBlock& block);
  // Flushes and closes; returns total bytes written (header included).
  std::uint64_t close();
  std::uint64_t bytes_written() const { return bytes_; }

 private:
  void ensure_header(const CaptureHeader& header);

  std::filesystem::path path_;
  std::ofstream out_;
  std::optional<CaptureHeader> header_;
  std::optional<std::uint64_t> next_offset_;
  std::uint64_t bytes_ = 0;
};

class CaptureReader {
 public:
  CaptureReader(const std::filesystem::path& path, std::size_t block_size = 1 << 20);

  const CaptureHeader& header() const { return header_; }
  std::uint64_t total_samples() const { return total_samples_; }

  // Next block of up to block_size samples, or nullopt at end of file.
  std::optional<SampleBlock> next();

 private:
  std::ifstream in_;
  CaptureHeader header_;
  std::size_t block_size_;
  std::uint64_t total_samples_ = 0;
  std::uint64_t offset_ = 0;
};

std::vector<SampleBlock> read_capture(const std::filesystem::path& path, std::size_t block_size = 1 << 20);

// Writes a header-only file when `blocks` is empty and `header_if_empty` is set.
std::uint64_t write_capture(const std::filesystem::path& path, std::span<const SampleBlock> blocks,
                            const std::optional<CaptureHeader>& header_if_empty = std::nullopt);

}  // namespace qrng::capture
