#include "qrng/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "qrng/capture.hpp"
#include "qrng/digest.hpp"
#include "qrng/error.hpp"

namespace qrng::pipeline {
namespace {

namespace pt = boost::property_tree;

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (trim(v.substr(pos)).empty()) return d;
  } catch (const std::exception&) {
  }
  throw ValidationError("config key " + key + ": not a number: '" + v + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  const auto t = trim(v);
  // Exact parse for large integers such as seeds.
  if (!t.empty() && t.find_first_not_of("0123456789") == std::string::npos) {
    try {
      return std::stoull(t);
    } catch (const std::out_of_range&) {
      throw ValidationError("config key " + key + ": out of range");
    }
  }
  const double d = to_double(key, v);
  if (d < 0 || d != std::floor(d) || d >= 1.8e19) throw ValidationError("config key " + key + ": not a non-negative integer");
  return static_cast<std::uint64_t>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  const auto t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ValidationError("config key " + key + ": not a boolean");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::int64_t unix_now() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"source",
       {"shot_slope_q", "shot_slope_p", "electronic_noise_variance", "tones", "flicker_rms_v", "analog_bandwidth_hz",
        "adc_rate_hz", "adc_bits", "adc_full_scale_v", "seed"}},
      {"dsp",
       {"highpass_cutoff_hz", "band_low_hz", "band_high_hz", "mix_frequency_hz", "lowpass_cutoff_hz",
        "output_rate_hz", "filter_taps", "stopband_attenuation_db", "lowpass_transition_hz"}},
      {"sweep", {"powers_mw", "samples_per_point", "block_size", "archive", "capture_files"}},
      {"extractor", {"input_bits", "output_bits", "epsilon", "seed_source", "seed_file"}},
      {"spectrum", {"segment_length", "overlap", "samples"}},
      {"generate", {"power_mw", "bytes", "max_calibration_age_s", "capture"}},
      {"report", {"analysis_pairs", "powers_mw"}},
      {"analysis", {"significance", "sequence_length", "block_frequency_length", "approximate_entropy_m", "serial_m"}},
      {"output", {"dir"}},
  };
  return keys;
}

std::vector<double> powers_from_mw(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& item : split(v, ',')) out.push_back(to_double(key, item) * 1e-3);
  return out;
}

std::string powers_to_mw(const std::vector<double>& p) {
  std::string s;
  for (std::size_t i = 0; i < p.size(); ++i) s += (i ? ", " : "") + fmt(p[i] * 1e3);
  return s;
}

// Runs a simulator or capture stream through the conditioner, transient removed.
class ConditionedStream {
 public:
  ConditionedStream(const PipelineConfig& cfg, double lo_power_w, std::uint64_t seed,
                    const std::optional<std::filesystem::path>& capture)
      : block_size_(cfg.sweep.block_size) {
    if (capture) {
      reader_.emplace(*capture, block_size_);
      conditioner_.emplace(cfg.dsp, reader_->header().sample_rate_hz);
      adc_bits_ = reader_->header().adc_bits;
    } else {
      signal::SourceParams p = cfg.source;
      p.lo_power_w = lo_power_w;
      p.seed = seed;
      source_.emplace(p);
      conditioner_.emplace(cfg.dsp, p.adc_rate_hz);
      adc_bits_ = p.adc_bits;
    }
    skip_ = conditioner_->transient_outputs();
  }

  std::optional<dsp::ConditionedBlock> next() {
    for (;;) {
      std::optional<signal::SampleBlock> raw;
      if (reader_) {
        raw = reader_->next();
      } else {
        raw = source_->next(block_size_);
      }
      if (!raw) return std::nullopt;
      auto out = conditioner_->process(*raw);
      const std::size_t drop = std::min<std::size_t>(skip_, out.size());
      skip_ -= drop;
      if (drop > 0) {
        out.channel_q.erase(out.channel_q.begin(), out.channel_q.begin() + static_cast<std::ptrdiff_t>(drop));
        out.channel_p.erase(out.channel_p.begin(), out.channel_p.begin() + static_cast<std::ptrdiff_t>(drop));
        out.stream_offset += drop;
      }
      if (out.size() > 0) return out;
    }
  }

  int adc_bits() const { return adc_bits_; }
  const dsp::ChainDesign& design() const { return conditioner_->design(); }

 private:
  std::size_t block_size_;
  std::optional<capture::CaptureReader> reader_;
  std::optional<signal::SampleSource> source_;
  std::optional<dsp::Conditioner> conditioner_;
  std::size_t skip_ = 0;
  int adc_bits_ = 8;
};

}  // namespace

PipelineConfig PipelineConfig::from_string(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(std::string("config parse error: ") + e.what());
  }
  PipelineConfig c;
  const auto& known = known_keys();
  for (const auto& [section, body] : tree) {
    const auto it = known.find(section);
    if (it == known.end()) throw ValidationError("unknown config section [" + section + "]");
    if (body.empty() && !body.data().empty()) throw ValidationError("config key outside a section: " + section);
    for (const auto& [key, node] : body) {
      if (!it->second.contains(key)) throw ValidationError("unknown config key " + section + "." + key);
      const std::string v = trim(node.data());
      const std::string name = section + "." + key;
      if (section == "source") {
        auto& s = c.source;
        if (key == "shot_slope_q") s.shot_slope_q = to_double(name, v);
        if (key == "shot_slope_p") s.shot_slope_p = to_double(name, v);
        if (key == "electronic_noise_variance") s.electronic_noise_variance = to_double(name, v);
        if (key == "flicker_rms_v") s.flicker_rms_v = to_double(name, v);
        if (key == "analog_bandwidth_hz") s.analog_bandwidth_hz = to_double(name, v);
        if (key == "adc_rate_hz") s.adc_rate_hz = to_double(name, v);
        if (key == "adc_bits") s.adc_bits = static_cast<int>(to_u64(name, v));
        if (key == "adc_full_scale_v") s.adc_full_scale_v = to_double(name, v);
        if (key == "seed") s.seed = to_u64(name, v);
        if (key == "tones") {
          s.lowfreq_tones.clear();
          for (const auto& item : split(v, ',')) {
            const auto parts = split(item, ':');
            if (parts.size() != 2) throw ValidationError("source.tones entries are frequency_hz:amplitude_v");
            s.lowfreq_tones.push_back({to_double(name, parts[0]), to_double(name, parts[1])});
          }
        }
      } else if (section == "dsp") {
        auto& d = c.dsp;
        if (key == "highpass_cutoff_hz") d.highpass_cutoff_hz = to_double(name, v);
        if (key == "band_low_hz") d.band_low_hz = to_double(name, v);
        if (key == "band_high_hz") d.band_high_hz = to_double(name, v);
        if (key == "mix_frequency_hz") d.mix_frequency_hz = to_double(name, v);
        if (key == "lowpass_cutoff_hz") d.lowpass_cutoff_hz = to_double(name, v);
        if (key == "output_rate_hz") d.output_rate_hz = to_double(name, v);
        if (key == "filter_taps") d.filter_taps = to_u64(name, v);
        if (key == "stopband_attenuation_db") d.stopband_attenuation_db = to_double(name, v);
        if (key == "lowpass_transition_hz") d.lowpass_transition_hz = to_double(name, v);
      } else if (section == "sweep") {
        if (key == "powers_mw") c.sweep.powers_w = powers_from_mw(name, v);
        if (key == "samples_per_point") c.sweep.samples_per_point = to_u64(name, v);
        if (key == "block_size") c.sweep.block_size = to_u64(name, v);
        if (key == "archive") c.sweep.archive = to_bool(name, v);
        if (key == "capture_files") {
          for (const auto& item : split(v, ',')) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) throw ValidationError("sweep.capture_files entries are power_mw:path");
            c.sweep.capture_files[to_double(name, item.substr(0, colon)) * 1e-3] = trim(item.substr(colon + 1));
          }
        }
      } else if (section == "extractor") {
        if (key == "input_bits") c.extractor.input_bits = to_u64(name, v);
        if (key == "output_bits") c.extractor.output_bits = to_u64(name, v);
        if (key == "epsilon") c.extractor.epsilon = to_double(name, v);
        if (key == "seed_source") c.extractor.seed_source = v;
        if (key == "seed_file") c.extractor.seed_file = v;
      } else if (section == "spectrum") {
        if (key == "segment_length") c.spectrum.segment_length = to_u64(name, v);
        if (key == "overlap") c.spectrum.overlap = to_u64(name, v);
        if (key == "samples") c.spectrum.samples = to_u64(name, v);
      } else if (section == "generate") {
        if (key == "power_mw" && !v.empty()) c.generate.power_w = to_double(name, v) * 1e-3;
        if (key == "bytes") c.generate.bytes = to_u64(name, v);
        if (key == "max_calibration_age_s") c.generate.max_calibration_age_s = to_double(name, v);
        if (key == "capture" && !v.empty()) c.generate.capture = v;
      } else if (section == "report") {
        if (key == "analysis_pairs") c.report.analysis_pairs = to_u64(name, v);
        if (key == "powers_mw") c.report.powers_w = powers_from_mw(name, v);
      } else if (section == "analysis") {
        if (key == "significance") c.battery.significance = to_double(name, v);
        if (key == "sequence_length") c.battery.sequence_length = to_u64(name, v);
        if (key == "block_frequency_length") c.battery.block_frequency_length = to_u64(name, v);
        if (key == "approximate_entropy_m") c.battery.approximate_entropy_m = static_cast<unsigned>(to_u64(name, v));
        if (key == "serial_m") c.battery.serial_m = static_cast<unsigned>(to_u64(name, v));
      } else if (section == "output") {
        if (key == "dir") c.out_dir = v;
      }
    }
  }
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

void PipelineConfig::validate() const {
  source.validate();
  dsp.validate(source.adc_rate_hz);
  if (sweep.samples_per_point == 0 || sweep.block_size == 0) throw ValidationError("sweep sizes must be > 0");
  for (double p : sweep.powers_w) {
    if (!(p >= 0.0)) throw ValidationError("sweep powers must be >= 0");
  }
  for (const auto& [p, file] : sweep.capture_files) {
    if (!std::filesystem::exists(file)) throw IoError("capture file not found: " + file.string());
  }
  if (generate.capture && !std::filesystem::exists(*generate.capture)) {
    throw IoError("capture file not found: " + generate.capture->string());
  }
  if (extractor.seed_source != "derived" && extractor.seed_source != "os" && extractor.seed_source != "file") {
    throw ValidationError("extractor.seed_source must be derived, os or file");
  }
  if (extractor.seed_source == "file" && !std::filesystem::exists(extractor.seed_file)) {
    throw IoError("seed file not found: " + extractor.seed_file.string());
  }
  if (!(extractor.epsilon > 0.0 && extractor.epsilon <= 1.0)) throw ValidationError("extractor.epsilon must be in (0, 1]");
  if (spectrum.segment_length < 2 || spectrum.overlap >= spectrum.segment_length) {
    throw ValidationError("spectrum segment/overlap invalid");
  }
  if (!(battery.significance > 0.0 && battery.significance < 1.0)) throw ValidationError("significance must be in (0, 1)");
}

std::string PipelineConfig::canonical() const {
  std::ostringstream os;
  os << "[source]\n"
     << "shot_slope_q = " << fmt(source.shot_slope_q) << "\n"
     << "shot_slope_p = " << fmt(source.shot_slope_p) << "\n"
     << "electronic_noise_variance = " << fmt(source.electronic_noise_variance) << "\n"
     << "tones = ";
  for (std::size_t i = 0; i < source.lowfreq_tones.size(); ++i) {
    os << (i ? ", " : "") << fmt(source.lowfreq_tones[i].frequency_hz) << ":" << fmt(source.lowfreq_tones[i].amplitude_v);
  }
  os << "\n"
     << "flicker_rms_v = " << fmt(source.flicker_rms_v) << "\n"
     << "analog_bandwidth_hz = " << fmt(source.analog_bandwidth_hz) << "\n"
     << "adc_rate_hz = " << fmt(source.adc_rate_hz) << "\n"
     << "adc_bits = " << source.adc_bits << "\n"
     << "adc_full_scale_v = " << fmt(source.adc_full_scale_v) << "\n"
     << "seed = " << source.seed << "\n\n"
     << "[dsp]\n"
     << "highpass_cutoff_hz = " << fmt(dsp.highpass_cutoff_hz) << "\n"
     << "band_low_hz = " << fmt(dsp.band_low_hz) << "\n"
     << "band_high_hz = " << fmt(dsp.band_high_hz) << "\n"
     << "mix_frequency_hz = " << fmt(dsp.mix_frequency_hz) << "\n"
     << "lowpass_cutoff_hz = " << fmt(dsp.lowpass_cutoff_hz) << "\n"
     << "output_rate_hz = " << fmt(dsp.output_rate_hz) << "\n"
     << "filter_taps = " << dsp.filter_taps << "\n"
     << "stopband_attenuation_db = " << fmt(dsp.stopband_attenuation_db) << "\n"
     << "lowpass_transition_hz = " << fmt(dsp.lowpass_transition_hz) << "\n\n"
     << "[sweep]\n"
     << "powers_mw = " << powers_to_mw(sweep.powers_w) << "\n"
     << "samples_per_point = " << sweep.samples_per_point << "\n"
     << "block_size = " << sweep.block_size << "\n"
     << "archive = " << (sweep.archive ? "true" : "false") << "\n"
     << "capture_files = ";
  bool first = true;
  for (const auto& [p, f] : sweep.capture_files) {
    os << (first ? "" : ", ") << fmt(p * 1e3) << ":" << f.string();
    first = false;
  }
  os << "\n\n"
     << "[extractor]\n"
     << "input_bits = " << extractor.input_bits << "\n"
     << "output_bits = " << extractor.output_bits << "\n"
     << "epsilon = " << fmt(extractor.epsilon) << "\n"
     << "seed_source = " << extractor.seed_source << "\n"
     << "seed_file = " << extractor.seed_file.string() << "\n\n"
     << "[spectrum]\n"
     << "segment_length = " << spectrum.segment_length << "\n"
     << "overlap = " << spectrum.overlap << "\n"
     << "samples = " << spectrum.samples << "\n\n"
     << "[generate]\n"
     << "power_mw = " << (generate.power_w ? fmt(*generate.power_w * 1e3) : std::string()) << "\n"
     << "bytes = " << generate.bytes << "\n"
     << "max_calibration_age_s = " << fmt(generate.max_calibration_age_s) << "\n"
     << "capture = " << (generate.capture ? generate.capture->string() : std::string()) << "\n\n"
     << "[report]\n"
     << "analysis_pairs = " << report.analysis_pairs << "\n"
     << "powers_mw = " << powers_to_mw(report.powers_w) << "\n\n"
     << "[analysis]\n"
     << "significance = " << fmt(battery.significance) << "\n"
     << "sequence_length = " << battery.sequence_length << "\n"
     << "block_frequency_length = " << battery.block_frequency_length << "\n"
     << "approximate_entropy_m = " << battery.approximate_entropy_m << "\n"
     << "serial_m = " << battery.serial_m << "\n\n"
     << "[output]\n"
     << "dir = " << out_dir.string() << "\n";
  return os.str();
}

std::string PipelineConfig::hash() const {
  // Where artifacts are written does not change their content.
  const std::string text = canonical();
  return sha256_hex(text.substr(0, text.find("[output]")));
}

double PipelineConfig::operating_power(const calibration::CalibrationResult& cal) const {
  return generate.power_w.value_or(cal.reference_lo_power_w);
}

// ---------------------------------------------------------------------------

dsp::SpectrumReport measure_spectrum(const PipelineConfig& cfg) {
  std::vector<double> on;
  std::vector<double> off;
  double rate = cfg.source.adc_rate_hz;
  const auto n = cfg.spectrum.samples;
  if (!cfg.sweep.capture_files.empty()) {
    const auto& files = cfg.sweep.capture_files;
    if (!files.contains(0.0)) throw ValidationError("spectrum needs a 0 mW capture");
    auto load = [&](const std::filesystem::path& path) {
      capture::CaptureReader r(path, n);
      rate = r.header().sample_rate_hz;
      auto b = r.next();
      if (!b) throw ValidationError("empty capture " + path.string());
      return dsp::codes_to_volts(b->channel_q, b->lsb_volts());
    };
    on = load(files.rbegin()->second);
    off = load(files.at(0.0));
  } else {
    const double pmax = *std::max_element(cfg.sweep.powers_w.begin(), cfg.sweep.powers_w.end());
    signal::SourceParams p = cfg.source;
    p.lo_power_w = pmax;
    p.seed = derive_u64(cfg.source.seed, "spectrum-on");
    auto b = signal::generate_block(p, n);
    on = dsp::codes_to_volts(b.channel_q, b.lsb_volts());
    p.lo_power_w = 0.0;
    p.seed = derive_u64(cfg.source.seed, "spectrum-off");
    b = signal::generate_block(p, n);
    off = dsp::codes_to_volts(b.channel_q, b.lsb_volts());
  }
  const auto psd_on = dsp::estimate_psd(on, rate, cfg.spectrum.segment_length, cfg.spectrum.overlap);
  const auto psd_off = dsp::estimate_psd(off, rate, cfg.spectrum.segment_length, cfg.spectrum.overlap);
  return dsp::SpectrumReport::from(psd_on, psd_off);
}

CalibrationOutputs calibrate(const PipelineConfig& cfg) {
  cfg.validate();
  calibration::SweepOptions opts;
  opts.block_size = cfg.sweep.block_size;
  if (cfg.sweep.archive) {
    std::filesystem::create_directories(cfg.out_dir / "sweep");
    opts.archive_dir = cfg.out_dir / "sweep";
  }
  std::vector<calibration::SweepPoint> points;
  if (!cfg.sweep.capture_files.empty()) {
    calibration::CaptureSweepSource src(cfg.sweep.capture_files);
    std::vector<double> powers;
    for (const auto& [p, f] : cfg.sweep.capture_files) powers.push_back(p);
    points = calibration::run_sweep(src, powers, cfg.sweep.samples_per_point, cfg.dsp, opts);
  } else {
    calibration::SyntheticSweepSource src(cfg.source);
    points = calibration::run_sweep(src, cfg.sweep.powers_w, cfg.sweep.samples_per_point, cfg.dsp, opts);
  }
  CalibrationOutputs out;
  out.result = calibration::fit(points, cfg.generate.power_w);
  out.result.config_hash = cfg.hash();
  out.spectrum = measure_spectrum(cfg);
  out.clearance_mean_db = out.spectrum.mean_clearance_db(cfg.dsp.band_low_hz, cfg.dsp.band_high_hz);
  out.clearance_min_db = out.spectrum.min_clearance_db(cfg.dsp.band_low_hz, cfg.dsp.band_high_hz);
  return out;
}

extractor::ExtractorParams extractor_params(const PipelineConfig& cfg, double h_min_per_pair, int adc_bits) {
  const int bpp = 2 * adc_bits;
  auto params = extractor::size_extractor(h_min_per_pair, bpp, cfg.extractor.epsilon, cfg.extractor.input_bits);
  if (cfg.extractor.output_bits != 0) {
    params = extractor::override_dimensions(params, cfg.extractor.input_bits, cfg.extractor.output_bits);
  }
  const std::size_t nbits = params.seed_bits();
  if (cfg.extractor.seed_source == "os") {
    params.seed = extractor::os_entropy_seed(nbits);
  } else if (cfg.extractor.seed_source == "file") {
    params.seed = extractor::seed_from_file(cfg.extractor.seed_file, nbits);
  } else {
    params.seed = extractor::derive_seed(derive_u64(cfg.source.seed, "extractor-seed"), nbits);
  }
  params.validate();
  return params;
}

GenerateOutputs generate(const PipelineConfig& cfg, const calibration::CalibrationResult& cal,
                         std::optional<std::int64_t> now_unix_s) {
  cfg.validate();
  const std::int64_t now = now_unix_s.value_or(unix_now());
  const double age = static_cast<double>(now - cal.timestamp);
  if (age > cfg.generate.max_calibration_age_s) {
    throw SecurityError("stale calibration: " + std::to_string(static_cast<long long>(age)) + " s old, limit " +
                        fmt(cfg.generate.max_calibration_age_s) + " s");
  }
  if (cfg.generate.bytes == 0) throw ValidationError("byte budget must be > 0");
  const double power = cfg.operating_power(cal);

  GenerateOutputs out;
  out.certified = entropy::certify(cal, power);
  if (!(out.certified.certified > 0.0)) throw SecurityError("no certifiable min-entropy at this LO power");

  ConditionedStream stream(cfg, power, derive_u64(cfg.source.seed, "generate"), cfg.generate.capture);
  out.params = extractor_params(cfg, out.certified.certified, stream.adc_bits());
  out.raw_rate = stream.design().output_rate_hz;
  out.secure_rate = entropy::secure_rate(out.certified.certified, out.raw_rate);

  extractor::StreamExtractor ex(out.params, stream.adc_bits());
  extractor::RandomBitstream bits;
  const std::uint64_t target = cfg.generate.bytes * 8;
  while (bits.bits.size() < target) {
    auto block = stream.next();
    if (!block) throw ValidationError("input stream exhausted before the byte budget was met");
    if (std::abs(block->effective_resolution_v - cal.effective_resolution_v) >
        1e-9 * cal.effective_resolution_v) {
      throw ValidationError("stream resolution differs from the calibration");
    }
    ex.feed(*block, bits);
  }
  out.blocks = bits.blocks_consumed;
  out.bits = bits.bits.slice(0, target);

  nlohmann::json extra;
  extra["config_hash"] = cfg.hash();
  extra["calibration_config_hash"] = cal.config_hash;
  extra["lo_power_w"] = power;
  extra["h_min_point"] = out.certified.h_min;
  extra["h_min_sigma"] = out.certified.sigma;
  extra["h_min_certified"] = out.certified.certified;
  extra["delta_q"] = out.certified.delta_q;
  extra["delta_p"] = out.certified.delta_p;
  extra["raw_rate_pairs_per_s"] = out.raw_rate;
  extra["secure_rate_bps"] = out.secure_rate;
  extra["bytes"] = cfg.generate.bytes;
  extra["seed_source"] = cfg.extractor.seed_source;
  extra["source"] = cfg.generate.capture ? cfg.generate.capture->string() : std::string("synthetic");
  out.sidecar_json = extractor::sidecar_json(out.params, out.blocks, target, extra.dump());
  return out;
}

stattests::Summary analyze(const BitVector& bits, const PipelineConfig& cfg) {
  if (bits.size() < 1'000'000) throw ValidationError("bit file too short: need >= 1e6 bits");
  const auto results = stattests::run_battery(bits, cfg.battery);
  return stattests::p_value_summary(results);
}

BitVector read_bits(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return BitVector::from_bytes(bytes, bytes.size() * 8);
}

dsp::ConditionedBlock simulate_conditioned(const PipelineConfig& cfg, double lo_power_w, std::uint64_t pairs,
                                           std::uint64_t stream_seed) {
  ConditionedStream stream(cfg, lo_power_w, stream_seed, std::nullopt);
  dsp::ConditionedBlock all;
  while (all.size() < pairs) {
    auto b = stream.next();
    if (all.channel_q.empty()) {
      all.sample_rate_hz = b->sample_rate_hz;
      all.effective_resolution_v = b->effective_resolution_v;
      all.lo_power_w = b->lo_power_w;
      all.adc_bits = b->adc_bits;
      all.stream_offset = b->stream_offset;
    }
    const std::size_t take = std::min<std::size_t>(b->size(), pairs - all.size());
    all.channel_q.insert(all.channel_q.end(), b->channel_q.begin(), b->channel_q.begin() + static_cast<std::ptrdiff_t>(take));
    all.channel_p.insert(all.channel_p.end(), b->channel_p.begin(), b->channel_p.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return all;
}

ReportOutputs report(const PipelineConfig& cfg, const calibration::CalibrationResult& cal) {
  cfg.validate();
  if (cal.points.empty()) throw ValidationError("calibration has no sweep points");
  std::vector<double> powers = cfg.report.powers_w;
  if (powers.empty()) {
    for (const auto& p : cal.points) {
      if (p.lo_power_w > 0.0) powers.push_back(p.lo_power_w);
    }
  }
  std::sort(powers.begin(), powers.end());
  powers.erase(std::unique(powers.begin(), powers.end()), powers.end());

  ReportOutputs out;
  for (std::size_t i = 0; i < powers.size(); ++i) {
    const auto rec = simulate_conditioned(cfg, powers[i], cfg.report.analysis_pairs,
                                          derive_u64(cfg.source.seed, "report-" + std::to_string(i)));
    out.points.push_back(entropy::evaluate(rec.channel_q, rec.channel_p, cal, powers[i], rec.sample_rate_hz));
  }

  std::ostringstream v;
  v.precision(10);
  v << "lo_power_w,variance_q_v2,se_q_v2,variance_p_v2,se_p_v2,fit_q_v2,fit_p_v2\n";
  for (const auto& p : cal.points) {
    v << p.lo_power_w << ',' << p.variance_q << ',' << p.se_q << ',' << p.variance_p << ',' << p.se_p << ','
      << cal.q.intercept + cal.q.slope * p.lo_power_w << ',' << cal.p.intercept + cal.p.slope * p.lo_power_w << '\n';
  }
  std::ostringstream e;
  e.precision(10);
  e << "lo_power_w,h_min_conditional,h_min_conditional_sigma,h_min_classical,entropy_loss,secure_rate_bps\n";
  std::ostringstream pu;
  pu.precision(10);
  pu << "lo_power_w,variance_q_vu,variance_p_vu,purity\n";
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : out.points) {
    e << r.lo_power_w << ',' << r.h_min_conditional << ',' << r.h_min_conditional_sigma << ',' << r.h_min_classical
      << ',' << r.entropy_loss << ',' << r.secure_rate << '\n';
    pu << r.lo_power_w << ',' << r.variance_q_vu << ',' << r.variance_p_vu << ',' << r.purity << '\n';
    j.push_back(nlohmann::json::parse(r.to_json()));
  }
  out.variance_csv = v.str();
  out.entropy_csv = e.str();
  out.purity_csv = pu.str();
  nlohmann::json doc;
  doc["config_hash"] = cfg.hash();
  doc["calibration_config_hash"] = cal.config_hash;
  doc["points"] = j;
  out.json = doc.dump(2);
  return out;
}

}  // namespace qrng::pipeline
