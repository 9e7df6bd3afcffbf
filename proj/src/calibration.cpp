#include "qrng/calibration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qrng/capture.hpp"
#include "qrng/error.hpp"
#include "qrng/moments.hpp"

namespace qrng::calibration {
namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

nlohmann::json channel_json(const ChannelFit& f) {
  return {{"slope", f.slope},
          {"slope_se", f.slope_se},
          {"intercept", f.intercept},
          {"intercept_se", f.intercept_se},
          {"r_squared", f.r_squared}};
}

ChannelFit channel_from(const nlohmann::json& j) {
  ChannelFit f;
  f.slope = j.at("slope").get<double>();
  f.slope_se = j.at("slope_se").get<double>();
  f.intercept = j.at("intercept").get<double>();
  f.intercept_se = j.at("intercept_se").get<double>();
  f.r_squared = j.at("r_squared").get<double>();
  return f;
}

}  // namespace

void SweepPoint::validate() const {
  if (!(lo_power_w >= 0.0)) throw ValidationError("sweep point power must be >= 0");
  if (!(variance_q >= 0.0) || !(variance_p >= 0.0)) throw ValidationError("sweep point variance must be >= 0");
  if (sample_count == 0) throw ValidationError("sweep point has no samples");
}

double CalibrationResult::vu_scale(int c, double lo_power_w) const {
  const double m = channel(c).slope;
  if (!(m > 0.0)) throw ValidationError("uncalibrated channel");
  if (!(lo_power_w > 0.0)) throw ValidationError("vacuum units need LO power > 0");
  return 1.0 / std::sqrt(2.0 * m * lo_power_w);
}

double CalibrationResult::delta(int c, double lo_power_w) const {
  return effective_resolution_v * vu_scale(c, lo_power_w);
}

std::string CalibrationResult::to_json() const {
  nlohmann::json j;
  j["slope_q"] = q.slope;
  j["slope_p"] = p.slope;
  j["channel_q"] = channel_json(q);
  j["channel_p"] = channel_json(p);
  j["effective_resolution_v"] = effective_resolution_v;
  j["reference_lo_power_w"] = reference_lo_power_w;
  if (reference_lo_power_w > 0.0 && q.slope > 0.0 && p.slope > 0.0) {
    j["delta_q"] = delta_q(reference_lo_power_w);
    j["delta_p"] = delta_p(reference_lo_power_w);
  }
  j["config_hash"] = config_hash;
  j["timestamp"] = timestamp;
  auto& pts = j["points"] = nlohmann::json::array();
  for (const auto& pt : points) {
    pts.push_back({{"lo_power_w", pt.lo_power_w},
                   {"lo_power_se_w", pt.lo_power_se_w},
                   {"variance_q", pt.variance_q},
                   {"variance_p", pt.variance_p},
                   {"se_q", pt.se_q},
                   {"se_p", pt.se_p},
                   {"mean_q", pt.mean_q},
                   {"mean_p", pt.mean_p},
                   {"sample_count", pt.sample_count},
                   {"saturated_fraction", pt.saturated_fraction},
                   {"effective_resolution_v", pt.effective_resolution_v}});
  }
  return j.dump(2);
}

CalibrationResult CalibrationResult::from_json(const std::string& text) {
  CalibrationResult r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.q = channel_from(j.at("channel_q"));
    r.p = channel_from(j.at("channel_p"));
    r.effective_resolution_v = j.at("effective_resolution_v").get<double>();
    r.reference_lo_power_w = j.at("reference_lo_power_w").get<double>();
    r.config_hash = j.value("config_hash", "");
    r.timestamp = j.value("timestamp", std::int64_t{0});
    for (const auto& pj : j.value("points", nlohmann::json::array())) {
      SweepPoint pt;
      pt.lo_power_w = pj.at("lo_power_w").get<double>();
      pt.lo_power_se_w = pj.value("lo_power_se_w", 0.0);
      pt.variance_q = pj.at("variance_q").get<double>();
      pt.variance_p = pj.at("variance_p").get<double>();
      pt.se_q = pj.at("se_q").get<double>();
      pt.se_p = pj.at("se_p").get<double>();
      pt.mean_q = pj.value("mean_q", 0.0);
      pt.mean_p = pj.value("mean_p", 0.0);
      pt.sample_count = pj.at("sample_count").get<std::uint64_t>();
      pt.saturated_fraction = pj.value("saturated_fraction", 0.0);
      pt.effective_resolution_v = pj.value("effective_resolution_v", r.effective_resolution_v);
      r.points.push_back(pt);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("calibration JSON: ") + e.what());
  }
  return r;
}

void CalibrationResult::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

CalibrationResult CalibrationResult::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

// ---------------------------------------------------------------------------

SyntheticSweepSource::SyntheticSweepSource(signal::SourceParams params, double relative_power_uncertainty)
    : params_(std::move(params)), relative_uncertainty_(relative_power_uncertainty) {
  params_.validate();
}

void SyntheticSweepSource::set_power(double lo_power_w) {
  signal::SourceParams p = params_;
  p.lo_power_w = lo_power_w;
  p.seed = mix64(params_.seed ^ mix64(0x5eed0000ULL + streams_++));
  source_ = std::make_unique<signal::SampleSource>(p);
}

std::optional<signal::SampleBlock> SyntheticSweepSource::next(std::size_t max_samples) {
  if (!source_) throw ValidationError("set_power must be called before next");
  return source_->next(max_samples);
}

struct CaptureSweepSource::Reader {
  capture::CaptureReader reader;
  std::vector<signal::SampleBlock> pending;
};

CaptureSweepSource::CaptureSweepSource(std::map<double, std::filesystem::path> files) : files_(std::move(files)) {}
CaptureSweepSource::~CaptureSweepSource() = default;

void CaptureSweepSource::set_power(double lo_power_w) {
  const auto it = files_.find(lo_power_w);
  if (it == files_.end()) throw ValidationError("no capture for the requested LO power");
  reader_ = std::make_unique<Reader>(Reader{capture::CaptureReader(it->second), {}});
}

std::optional<signal::SampleBlock> CaptureSweepSource::next(std::size_t max_samples) {
  if (!reader_) throw ValidationError("set_power must be called before next");
  if (max_samples == 0) throw ValidationError("max_samples must be > 0");
  auto& pending = reader_->pending;
  if (pending.empty()) {
    auto block = reader_->reader.next();
    if (!block) return std::nullopt;
    pending.push_back(std::move(*block));
  }
  auto block = std::move(pending.back());
  pending.pop_back();
  if (block.size() > max_samples) {
    // Hand out the head, keep the tail for the next call.
    signal::SampleBlock tail = block;
    tail.channel_q.assign(block.channel_q.begin() + static_cast<std::ptrdiff_t>(max_samples), block.channel_q.end());
    tail.channel_p.assign(block.channel_p.begin() + static_cast<std::ptrdiff_t>(max_samples), block.channel_p.end());
    tail.stream_offset += max_samples;
    block.channel_q.resize(max_samples);
    block.channel_p.resize(max_samples);
    pending.push_back(std::move(tail));
  }
  return block;
}

// ---------------------------------------------------------------------------

SweepPoint measure_point(SweepSource& source, double lo_power_w, std::uint64_t samples_per_point,
                         const dsp::DspConfig& cfg, const SweepOptions& options) {
  if (samples_per_point == 0) throw ValidationError("samples_per_point must be > 0");
  source.set_power(lo_power_w);
  std::optional<dsp::Conditioner> conditioner;
  std::optional<capture::CaptureWriter> archive;
  RunningMoments mq;
  RunningMoments mp;
  std::uint64_t raw = 0;
  std::uint64_t saturated = 0;
  std::uint64_t skip = 0;
  SweepPoint pt;
  pt.lo_power_w = lo_power_w;
  pt.lo_power_se_w = source.power_uncertainty(lo_power_w);

  while (raw < samples_per_point) {
    const auto want = static_cast<std::size_t>(std::min<std::uint64_t>(options.block_size, samples_per_point - raw));
    auto block = source.next(want);
    if (!block || block->size() == 0) break;
    if (!conditioner) {
      conditioner.emplace(cfg, block->sample_rate_hz);
      skip = conditioner->transient_outputs();
      if (options.archive_dir) {
        std::ostringstream name;
        name << "sweep_" << std::llround(lo_power_w * 1e9) << "nW.qraw";
        archive.emplace(*options.archive_dir / name.str());
      }
    }
    if (archive) archive->write(*block);
    saturated += static_cast<std::uint64_t>(std::llround(block->saturated_fraction() * 2.0 * block->size()));
    raw += block->size();
    auto out = conditioner->process(*block);
    pt.effective_resolution_v = out.effective_resolution_v;
    const std::size_t drop = static_cast<std::size_t>(std::min<std::uint64_t>(skip, out.size()));
    skip -= drop;
    mq.add(std::span<const double>(out.channel_q).subspan(drop));
    mp.add(std::span<const double>(out.channel_p).subspan(drop));
  }
  if (archive) archive->close();
  if (raw == 0 || mq.count < 2) throw ValidationError("sweep point produced too few conditioned samples");

  pt.saturated_fraction = static_cast<double>(saturated) / static_cast<double>(2 * raw);
  if (pt.saturated_fraction >= kSaturationLimit) {
    std::ostringstream msg;
    msg << "ADC saturation at " << lo_power_w * 1e3 << " mW: " << pt.saturated_fraction * 100.0
        << "% of samples at extreme codes";
    throw CalibrationError(msg.str());
  }
  pt.variance_q = mq.variance();
  pt.variance_p = mp.variance();
  pt.se_q = mq.variance_se();
  pt.se_p = mp.variance_se();
  pt.mean_q = mq.mean;
  pt.mean_p = mp.mean;
  pt.sample_count = mq.count;
  return pt;
}

std::vector<SweepPoint> run_sweep(SweepSource& source, std::span<const double> powers_w,
                                  std::uint64_t samples_per_point, const dsp::DspConfig& cfg,
                                  const SweepOptions& options) {
  std::set<double> distinct(powers_w.begin(), powers_w.end());
  if (distinct.size() < 3 || !distinct.contains(0.0)) {
    throw ValidationError("insufficient distinct powers: need >= 3 including 0");
  }
  for (double pw : powers_w) {
    if (!(pw >= 0.0)) throw ValidationError("LO power must be >= 0");
  }
  std::vector<SweepPoint> points;
  points.reserve(powers_w.size());
  for (double pw : powers_w) points.push_back(measure_point(source, pw, samples_per_point, cfg, options));
  return points;
}

ChannelFit fit_channel(std::span<const double> x, std::span<const double> y, std::span<const double> se) {
  const std::size_t n = x.size();
  bool unit = se.size() != n;
  for (std::size_t i = 0; !unit && i < n; ++i) unit = !(se[i] > 0.0);
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = unit ? 1.0 : 1.0 / (se[i] * se[i]);
    sw += w;
    sx += w * x[i];
    sy += w * y[i];
    sxx += w * x[i] * x[i];
    sxy += w * x[i] * y[i];
  }
  const double det = sw * sxx - sx * sx;
  if (!(std::abs(det) > 0.0)) throw ValidationError("insufficient distinct powers");
  ChannelFit f;
  f.slope = (sw * sxy - sx * sy) / det;
  f.intercept = (sxx * sy - sx * sxy) / det;

  const double ybar = sy / sw;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = unit ? 1.0 : 1.0 / (se[i] * se[i]);
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += w * r * r;
    ss_tot += w * (y[i] - ybar) * (y[i] - ybar);
  }
  f.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  // Known SEs give an absolute covariance; unit weights fall back to the residual scale.
  const double scale = unit ? (n > 2 ? ss_res / static_cast<double>(n - 2) : 0.0) : 1.0;
  f.slope_se = std::sqrt(scale * sw / det);
  f.intercept_se = std::sqrt(scale * sxx / det);
  return f;
}

CalibrationResult fit(std::span<const SweepPoint> points, std::optional<double> reference_lo_power_w) {
  std::set<double> nonzero;
  for (const auto& pt : points) {
    pt.validate();
    if (pt.lo_power_w > 0.0) nonzero.insert(pt.lo_power_w);
  }
  if (points.size() < 3 || nonzero.size() < 2) throw ValidationError("insufficient distinct powers");

  std::vector<double> x, yq, yp, sq, sp;
  for (const auto& pt : points) {
    x.push_back(pt.lo_power_w);
    yq.push_back(pt.variance_q);
    yp.push_back(pt.variance_p);
    sq.push_back(pt.se_q);
    sp.push_back(pt.se_p);
  }
  CalibrationResult r;
  r.q = fit_channel(x, yq, sq);
  r.p = fit_channel(x, yp, sp);
  r.points.assign(points.begin(), points.end());
  r.reference_lo_power_w = reference_lo_power_w.value_or(*nonzero.rbegin());
  r.effective_resolution_v = points.front().effective_resolution_v;
  r.timestamp = std::chrono::duration_cast<std::chrono::seconds>(
                    std::chrono::system_clock::now().time_since_epoch())
                    .count();

  for (int c = 0; c < 2; ++c) {
    const ChannelFit& f = r.channel(c);
    const char* name = c == 0 ? "q" : "p";
    if (!(f.slope > 0.0)) throw CalibrationError(std::string("non-positive slope on channel ") + name);
    if (f.r_squared < kMinRSquared) {
      std::ostringstream msg;
      msg << "poor linearity on channel " << name << ": R^2 = " << f.r_squared;
      throw CalibrationError(msg.str());
    }
  }
  return r;
}

double effective_resolution(const dsp::DspConfig& cfg, double adc_rate_hz, int adc_bits, double adc_full_scale_v) {
  const auto design = dsp::design_chain(cfg, adc_rate_hz);
  const double lsb = adc_full_scale_v / static_cast<double>(1u << adc_bits);
  return lsb * design.passband_gain(cfg.band_low_hz, cfg.band_high_hz);
}

double effective_resolution(const dsp::DspConfig& cfg, const signal::SourceParams& adc) {
  return effective_resolution(cfg, adc.adc_rate_hz, adc.adc_bits, adc.adc_full_scale_v);
}

}  // namespace qrng::calibration
