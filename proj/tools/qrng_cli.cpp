// qrng: heterodyne QRNG post-processing pipeline.
//
//   qrng simulate  --power 20 --blocks 8 --out out
//   qrng calibrate --config qrng.ini
//   qrng generate  --bytes 1048576
//   qrng analyze   out/random.bin
//   qrng report

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qrng/calibration.hpp"
#include "qrng/capture.hpp"
#include "qrng/digest.hpp"
#include "qrng/error.hpp"
#include "qrng/extractor.hpp"
#include "qrng/pipeline.hpp"
#include "qrng/signal_model.hpp"

namespace fs = std::filesystem;
using namespace qrng;

namespace {

enum Exit { kOk = 0, kValidation = 1, kIo = 2, kSecurity = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<double> power_mw;
  std::optional<std::uint64_t> blocks;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI configuration file");
  cmd->add_option("--seed", c.seed, "override [source] seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--power", c.power_mw, "LO power in mW");
  cmd->add_option("--blocks", c.blocks, "number of blocks to produce");
}

pipeline::PipelineConfig load_config(const Common& c) {
  auto cfg = c.config.empty() ? pipeline::PipelineConfig::defaults() : pipeline::PipelineConfig::load(c.config);
  if (c.seed) cfg.source.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string gbps(double bps) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << bps / 1e9 << " Gbps";
  return os.str();
}

int cmd_simulate(const Common& c, const std::string& file) {
  auto cfg = load_config(c);
  cfg.validate();
  signal::SourceParams p = cfg.source;
  if (c.power_mw) p.lo_power_w = *c.power_mw * 1e-3;
  const std::uint64_t blocks = c.blocks.value_or(1);
  const fs::path path = file.empty() ? cfg.out_dir / "capture.qraw" : fs::path(file);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());

  signal::SampleSource src(p);
  capture::CaptureWriter writer(path);
  double sat = 0.0;
  for (std::uint64_t b = 0; b < blocks; ++b) {
    const auto block = src.next(cfg.sweep.block_size);
    sat += block.saturated_fraction();
    writer.write(block);
  }
  const auto bytes = writer.close();
  std::cout << "wrote " << path.string() << ": " << blocks << " x " << cfg.sweep.block_size << " samples, " << bytes
            << " bytes, P_LO " << p.lo_power_w * 1e3 << " mW, saturated " << sat / static_cast<double>(blocks)
            << "\n";
  return kOk;
}

int cmd_calibrate(const Common& c) {
  auto cfg = load_config(c);
  if (c.power_mw) cfg.generate.power_w = *c.power_mw * 1e-3;
  const auto out = pipeline::calibrate(cfg);
  const auto& r = out.result;
  fs::create_directories(cfg.out_dir);
  r.save(cfg.out_dir / "calibration.json");
  write_text(cfg.out_dir / "spectrum.json", out.spectrum.to_json());
  write_text(cfg.out_dir / "spectrum.csv", out.spectrum.to_csv());

  std::cout << std::setprecision(6);
  std::cout << "channel  slope [V^2/W]        intercept [V^2]      R^2\n";
  for (int ch = 0; ch < 2; ++ch) {
    const auto& f = r.channel(ch);
    std::cout << (ch == 0 ? "q        " : "p        ") << f.slope << " +- " << f.slope_se << "   " << f.intercept
              << " +- " << f.intercept_se << "   " << std::setprecision(8) << f.r_squared << std::setprecision(6)
              << "\n";
  }
  const double pref = r.reference_lo_power_w;
  std::cout << "reference P_LO " << pref * 1e3 << " mW: dq " << r.delta_q(pref) << " VU, dp " << r.delta_p(pref)
            << " VU\n";
  std::cout << "clearance at max power: mean " << std::setprecision(3) << std::fixed << out.clearance_mean_db
            << " dB, min " << out.clearance_min_db << " dB over the band\n";
  std::cout << "wrote " << (cfg.out_dir / "calibration.json").string() << ", spectrum.json, spectrum.csv\n";
  return kOk;
}

int cmd_generate(const Common& c, std::optional<std::uint64_t> bytes, const std::string& cal_path,
                 const std::string& capture) {
  auto cfg = load_config(c);
  if (c.power_mw) cfg.generate.power_w = *c.power_mw * 1e-3;
  if (!capture.empty()) cfg.generate.capture = capture;
  const auto cal = calibration::CalibrationResult::load(cal_path.empty() ? cfg.out_dir / "calibration.json"
                                                                          : fs::path(cal_path));
  if (bytes) cfg.generate.bytes = *bytes;
  if (c.blocks) {
    // Whole extractor blocks at the certified sizing.
    const double h = entropy::certify(cal, cfg.operating_power(cal)).certified;
    if (!(h > 0.0)) throw SecurityError("no certifiable min-entropy at this LO power");
    const auto params = pipeline::extractor_params(cfg, h, cfg.source.adc_bits);
    cfg.generate.bytes = *c.blocks * params.output_bits / 8;
  }
  const auto out = pipeline::generate(cfg, cal);
  const fs::path bin = cfg.out_dir / "random.bin";
  fs::create_directories(cfg.out_dir);
  extractor::write_bits(bin, out.bits, cfg.generate.bytes);
  write_text(cfg.out_dir / "random.json", out.sidecar_json + "\n");

  std::cout << std::setprecision(6);
  std::cout << "P_LO " << cfg.operating_power(cal) * 1e3 << " mW: H_min(X|E) " << out.certified.h_min << " +- "
            << out.certified.sigma << " bit, certified " << out.certified.certified << " bit/pair\n";
  std::cout << "extractor m = " << out.params.input_bits << ", n = " << out.params.output_bits
            << ", eps = " << out.params.epsilon << ", blocks " << out.blocks << "\n";
  if (out.params.lhl_excess() > 0) {
    std::cout << "warning: n exceeds the leftover-hash bound " << out.params.lhl_limit() << " by "
              << out.params.lhl_excess() << " bits\n";
  }
  std::cout << "secure rate R_sc = " << gbps(out.secure_rate) << " (R_rw " << out.raw_rate / 1e9 << " GSps)\n";
  std::cout << "wrote " << bin.string() << " (" << cfg.generate.bytes << " bytes), random.json\n";
  return kOk;
}

int cmd_analyze(const Common& c, const std::string& file, const std::string& ascii) {
  auto cfg = load_config(c);
  const auto bits = pipeline::read_bits(file);
  if (!ascii.empty()) stattests::export_ascii(ascii, bits);
  const auto summary = pipeline::analyze(bits, cfg);
  std::cout << file << ": " << bits.size() << " bits\n" << summary.to_table();
  if (!c.out.empty()) write_text(cfg.out_dir / "analysis.json", summary.to_json() + "\n");
  return summary.failed == 0 ? kOk : kValidation;
}

int cmd_report(const Common& c, const std::string& cal_path) {
  auto cfg = load_config(c);
  if (c.power_mw) cfg.report.powers_w = {*c.power_mw * 1e-3};
  const auto cal = calibration::CalibrationResult::load(cal_path.empty() ? cfg.out_dir / "calibration.json"
                                                                          : fs::path(cal_path));
  const auto r = pipeline::report(cfg, cal);
  write_text(cfg.out_dir / "variance_vs_power.csv", r.variance_csv);
  write_text(cfg.out_dir / "entropy_vs_power.csv", r.entropy_csv);
  write_text(cfg.out_dir / "purity_vs_power.csv", r.purity_csv);
  write_text(cfg.out_dir / "report.json", r.json + "\n");

  std::printf("%9s %12s %10s %8s %8s %12s\n", "P_LO[mW]", "H(X|E)[bit]", "H(X)[bit]", "loss", "purity", "R_sc[Gbps]");
  for (const auto& p : r.points) {
    std::printf("%9.3f %12.4f %10.4f %8.4f %8.4f %12.3f\n", p.lo_power_w * 1e3, p.h_min_conditional,
                p.h_min_classical, p.entropy_loss, p.purity, p.secure_rate / 1e9);
  }
  std::cout << "wrote variance_vs_power.csv, entropy_vs_power.csv, purity_vs_power.csv, report.json to "
            << cfg.out_dir.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterodyne QRNG post-processing: simulate, calibrate, generate, analyze, report"};
  app.require_subcommand(1);

  Common sim_c, cal_c, gen_c, ana_c, rep_c;
  std::string sim_file;
  auto* sim = app.add_subcommand("simulate", "write a synthetic QRAW capture");
  add_common(sim, sim_c);
  sim->add_option("--file", sim_file, "capture path (default <out>/capture.qraw)");

  auto* cal = app.add_subcommand("calibrate", "LO power sweep, linear fit and spectrum");
  add_common(cal, cal_c);

  std::optional<std::uint64_t> bytes;
  std::string gen_cal, gen_capture;
  auto* gen = app.add_subcommand("generate", "extract certified random bits");
  add_common(gen, gen_c);
  gen->add_option("--bytes", bytes, "output size in bytes");
  gen->add_option("--calibration", gen_cal, "calibration JSON (default <out>/calibration.json)");
  gen->add_option("--capture", gen_capture, "QRAW input instead of the simulator");

  std::string ana_file, ana_ascii;
  auto* ana = app.add_subcommand("analyze", "run the statistical battery on a bit file");
  add_common(ana, ana_c);
  ana->add_option("file", ana_file, "packed bit file")->required();
  ana->add_option("--export-ascii", ana_ascii, "also write the bits as ASCII 0/1");

  std::string rep_cal;
  auto* rep = app.add_subcommand("report", "entropy, purity and rate versus LO power");
  add_common(rep, rep_c);
  rep->add_option("--calibration", rep_cal, "calibration JSON (default <out>/calibration.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (*sim) return cmd_simulate(sim_c, sim_file);
    if (*cal) return cmd_calibrate(cal_c);
    if (*gen) return cmd_generate(gen_c, bytes, gen_cal, gen_capture);
    if (*ana) return cmd_analyze(ana_c, ana_file, ana_ascii);
    if (*rep) return cmd_report(rep_c, rep_cal);
  } catch (const SecurityError& e) {
    std::cerr << "security gate: " << e.what() << "\n";
    return kSecurity;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kValidation;
}
