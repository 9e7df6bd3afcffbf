#include "qrng/capture.hpp"

#include <bit>
#include <cstring>
#include <string>

#include "qrng/error.hpp"

namespace qrng::capture {
namespace {

constexpr char kMagic[4] = {'Q', 'R', 'A', 'W'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t pos) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(in[pos + i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

CaptureHeader header_of(const SampleBlock& block) {
  return {block.adc_bits, block.sample_rate_hz, block.adc_full_scale_v, block.lo_power_w};
}

bool same_header(const CaptureHeader& a, const CaptureHeader& b) {
  return a.adc_bits == b.adc_bits && a.sample_rate_hz == b.sample_rate_hz &&
         a.adc_full_scale_v == b.adc_full_scale_v && a.lo_power_w == b.lo_power_w;
}

}  // namespace

std::vector<std::uint8_t> encode_header(const CaptureHeader& header) {
  if (header.adc_bits < 2 || header.adc_bits > 16) throw FormatError("unsupported bit depth");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint16_t>(out, kVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(header.adc_bits));
  put_le<double>(out, header.sample_rate_hz);
  put_le<double>(out, header.adc_full_scale_v);
  put_le<double>(out, header.lo_power_w);
  out.resize(kHeaderBytes, 0);
  return out;
}

CaptureHeader decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) throw FormatError("truncated QRAW header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad QRAW magic");
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kVersion) throw FormatError("unsupported QRAW version " + std::to_string(version));
  CaptureHeader h;
  h.adc_bits = get_le<std::uint16_t>(bytes, 6);
  if (h.adc_bits < 2 || h.adc_bits > 16) throw FormatError("unsupported bit depth " + std::to_string(h.adc_bits));
  h.sample_rate_hz = get_le<double>(bytes, 8);
  h.adc_full_scale_v = get_le<double>(bytes, 16);
  h.lo_power_w = get_le<double>(bytes, 24);
  if (!(h.sample_rate_hz > 0.0) || !(h.adc_full_scale_v > 0.0)) throw FormatError("invalid QRAW header values");
  return h;
}

CaptureWriter::CaptureWriter(const std::filesystem::path& path) : path_(path) {
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open " + path.string() + " for writing");
}

CaptureWriter::CaptureWriter(const std::filesystem::path& path, const CaptureHeader& header) : CaptureWriter(path) {
  ensure_header(header);
}

void CaptureWriter::ensure_header(const CaptureHeader& header) {
  if (header_) {
    if (!same_header(*header_, header)) throw ValidationError("inconsistent metadata between blocks");
    return;
  }
  const auto bytes = encode_header(header);
  out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  bytes_ += bytes.size();
  header_ = header;
}

void CaptureWriter::write(const SampleBlock& block) {
  block.validate();
  ensure_header(header_of(block));
  if (next_offset_ && block.stream_offset != *next_offset_) {
    throw ValidationError("non-contiguous stream offsets");
  }
  next_offset_ = block.stream_offset + block.size();

  const int width = header_->bytes_per_code();
  std::vector<std::uint8_t> payload(block.size() * 2 * static_cast<std::size_t>(width));
  std::size_t pos = 0;
  for (std::size_t i = 0; i < block.size(); ++i) {
    for (std::int16_t code : {block.channel_q[i], block.channel_p[i]}) {
      const auto u = static_cast<std::uint16_t>(code);
      payload[pos++] = static_cast<std::uint8_t>(u);
      if (width == 2) payload[pos++] = static_cast<std::uint8_t>(u >> 8);
    }
  }
  out_.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out_) throw IoError("write failed: " + path_.string());
  bytes_ += payload.size();
}

std::uint64_t CaptureWriter::close() {
  if (out_.is_open()) {
    out_.close();
    if (out_.fail()) throw IoError("close failed: " + path_.string());
  }
  return bytes_;
}

CaptureReader::CaptureReader(const std::filesystem::path& path, std::size_t block_size) : block_size_(block_size) {
  if (block_size == 0) throw ValidationError("block size must be > 0");
  in_.open(path, std::ios::binary);
  if (!in_) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> head(kHeaderBytes);
  in_.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(kHeaderBytes));
  if (in_.gcount() != static_cast<std::streamsize>(kHeaderBytes)) throw FormatError("truncated QRAW header");
  header_ = decode_header(head);

  in_.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in_.tellg());
  in_.seekg(static_cast<std::streamoff>(kHeaderBytes));
  const std::uint64_t payload = file_size - kHeaderBytes;
  const std::uint64_t pair_bytes = 2ULL * static_cast<std::uint64_t>(header_.bytes_per_code());
  if (payload % pair_bytes != 0) throw FormatError("truncated QRAW payload");
  total_samples_ = payload / pair_bytes;
}

std::optional<SampleBlock> CaptureReader::next() {
  if (offset_ >= total_samples_) return std::nullopt;
  const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(block_size_, total_samples_ - offset_));
  const int width = header_.bytes_per_code();
  std::vector<std::uint8_t> raw(n * 2 * static_cast<std::size_t>(width));
  in_.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in_.gcount() != static_cast<std::streamsize>(raw.size())) throw FormatError("truncated QRAW block");

  SampleBlock block;
  block.sample_rate_hz = header_.sample_rate_hz;
  block.adc_bits = header_.adc_bits;
  block.adc_full_scale_v = header_.adc_full_scale_v;
  block.lo_power_w = header_.lo_power_w;
  block.stream_offset = offset_;
  block.channel_q.resize(n);
  block.channel_p.resize(n);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto* dst : {&block.channel_q[i], &block.channel_p[i]}) {
      if (width == 1) {
        *dst = static_cast<std::int8_t>(raw[pos++]);
      } else {
        *dst = static_cast<std::int16_t>(static_cast<std::uint16_t>(raw[pos]) |
                                         static_cast<std::uint16_t>(raw[pos + 1]) << 8);
        pos += 2;
      }
    }
  }
  try {
    block.validate();
  } catch (const ValidationError& e) {
    throw FormatError(std::string("corrupt QRAW block: ") + e.what());
  }
  offset_ += n;
  return block;
}

std::vector<SampleBlock> read_capture(const std::filesystem::path& path, std::size_t block_size) {
  CaptureReader reader(path, block_size);
  std::vector<SampleBlock> blocks;
  while (auto b = reader.next()) blocks.push_back(std::move(*b));
  return blocks;
}

std::uint64_t write_capture(const std::filesystem::path& path, std::span<const SampleBlock> blocks,
                            const std::optional<CaptureHeader>& header_if_empty) {
  if (blocks.empty()) {
    if (!header_if_empty) throw ValidationError("empty stream needs explicit header metadata");
    CaptureWriter writer(path, *header_if_empty);
    return writer.close();
  }
  CaptureWriter writer(path);
  for (const auto& b : blocks) writer.write(b);
  return writer.close();
}

}  // namespace qrng::capture
