#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "qrng/entropy.hpp"
#include "qrng/error.hpp"
#include "qrng/moments.hpp"
#include "qrng/pipeline.hpp"

using namespace qrng;
using namespace qrng::entropy;

namespace {

calibration::CalibrationResult make_cal(double mq, double mp, double resolution, double se_rel = 1e-3) {
  calibration::CalibrationResult c;
  c.q.slope = mq;
  c.p.slope = mp;
  c.q.slope_se = se_rel * mq;
  c.p.slope_se = 2.0 * se_rel * mp;
  c.effective_resolution_v = resolution;
  c.reference_lo_power_w = 20e-3;
  return c;
}

std::pair<std::vector<double>, std::vector<double>> gaussian_pairs(std::size_t n, double sq, double sp, std::uint64_t seed,
                                                                   double mq = 0.0, double mp = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> q(n), p(n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i] = mq + sq * d(rng);
    p[i] = mp + sp * d(rng);
  }
  return {q, p};
}

}  // namespace

TEST_CASE("conditional min-entropy closed form") {
  CHECK(h_min_conditional(1.0, std::numbers::pi) == doctest::Approx(0.0));
  CHECK(h_min_conditional(0.5, std::numbers::pi) == doctest::Approx(1.0));
  CHECK(h_min_conditional(std::sqrt(2.85e-3), std::sqrt(2.85e-3)) == doctest::Approx(10.106).epsilon(1e-4));
  CHECK(h_min_conditional(10.0, 10.0) == 0.0);
  CHECK_THROWS_AS(h_min_conditional(0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(h_min_conditional(1.0, -1.0), ValidationError);
}

TEST_CASE("secure rate is the product of entropy and raw rate") {
  CHECK(secure_rate(10.106, 2e9) == doctest::Approx(20.212e9).epsilon(1e-12));
  CHECK(secure_rate(0.0, 2e9) == 0.0);
  CHECK(secure_rate(2.0, 2e9) >= 4e9);
  CHECK_THROWS_AS(secure_rate(-1.0, 2e9), ValidationError);
}

TEST_CASE("certified entropy propagates the slope uncertainty") {
  const auto cal = make_cal(0.1315, 0.1297, 1.0 / 256, 2e-3);
  const double pw = 20e-3;
  const auto c = certify(cal, pw);
  CHECK(c.h_min == doctest::Approx(h_min_conditional(cal.delta_q(pw), cal.delta_p(pw))));

  // Central differences of h with respect to each slope.
  auto h_at = [&](double mq, double mp) {
    auto k = cal;
    k.q.slope = mq;
    k.p.slope = mp;
    return h_min_conditional(k.delta_q(pw), k.delta_p(pw));
  };
  const double eq = 1e-6 * cal.q.slope;
  const double ep = 1e-6 * cal.p.slope;
  const double dq = (h_at(cal.q.slope + eq, cal.p.slope) - h_at(cal.q.slope - eq, cal.p.slope)) / (2 * eq);
  const double dp = (h_at(cal.q.slope, cal.p.slope + ep) - h_at(cal.q.slope, cal.p.slope - ep)) / (2 * ep);
  const double sigma = std::hypot(dq * cal.q.slope_se, dp * cal.p.slope_se);
  CHECK(c.sigma == doctest::Approx(sigma).epsilon(1e-5));
  CHECK(c.certified == doctest::Approx(c.h_min - 3 * sigma));
}

TEST_CASE("Gaussian grid min-entropy matches brute-force bin masses") {
  for (auto [sq, sp, dq, dp] : {std::array{1.0, 1.0, 0.05, 0.05}, std::array{0.7, 0.73, 0.026, 0.027},
                                std::array{2.0, 0.5, 1.0, 0.3}}) {
    CHECK(h_min_classical_gaussian(0.0, sq * sq, 0.0, sp * sp, dq, dp) ==
          doctest::Approx(oracle::gaussian_grid_min_entropy(sq, sp, dq, dp)).epsilon(1e-9));
  }
  // Small pitch: -log2(dq dp / (2 pi sq sp)).
  CHECK(h_min_classical_gaussian(0.0, 1.0, 0.0, 1.0, 0.01, 0.01) ==
        doctest::Approx(-std::log2(1e-4 / (2 * std::numbers::pi))).epsilon(1e-4));
}

TEST_CASE("histogram estimate agrees with the Gaussian fit on vacuum-like streams") {
  // Conditioned scale at 20 mW: sigma about 14 grid steps.
  const double pitch = 1.0 / 256;
  const double sq = 0.0544, sp = 0.0540;
  const auto [q, p] = gaussian_pairs(10'000'000, sq, sp, 7, 0.3 * pitch, -0.1 * pitch);
  const auto h = h_min_classical(q, p, pitch, pitch);
  CHECK_FALSE(h.gaussian_fallback);
  CHECK(h.pairs == 10'000'000);
  CHECK(h.modal_count > 5000);
  const double g = oracle::gaussian_grid_min_entropy(sq, sp, pitch, pitch);
  CHECK(std::abs(h.bits - g) < 0.02);

  const auto ref = h_min_classical_reference(std::span(q).first(1'000'000), std::span(p).first(1'000'000), pitch, pitch);
  const auto fast = h_min_classical(std::span(q).first(1'000'000), std::span(p).first(1'000'000), pitch, pitch);
  CHECK(ref.bits == doctest::Approx(fast.bits).epsilon(1e-12));
  CHECK(ref.modal_count == fast.modal_count);
}

TEST_CASE("histogram estimate agrees with the Gaussian fit on the conditioned stream") {
  const auto cfg = pipeline::PipelineConfig::defaults();
  const double pitch = calibration::effective_resolution(cfg.dsp, cfg.source);
  for (double pw : {0.0, 5e-3, 20e-3}) {
    const auto cond = pipeline::simulate_conditioned(cfg, pw, 2'000'000, 31);
    RunningMoments mq, mp;
    mq.add(cond.channel_q);
    mp.add(cond.channel_p);
    const double g = h_min_classical_gaussian(mq.mean, mq.variance(), mp.mean, mp.variance(), pitch, pitch);
    const auto h = h_min_classical(cond.channel_q, cond.channel_p, pitch, pitch);
    INFO("P = " << pw);
    CHECK(std::abs(h.bits - g) < 0.02);
  }
}

TEST_CASE("uniform joint codes give 16 bits") {
  std::vector<double> q, p;
  for (int rep = 0; rep < 128; ++rep) {
    for (int a = -128; a < 128; ++a) {
      for (int b = -128; b < 128; ++b) {
        q.push_back(a);
        p.push_back(b);
      }
    }
  }
  const auto h = h_min_classical(q, p, 1.0, 1.0);
  CHECK(h.modal_count == 128);
  CHECK(h.bits == doctest::Approx(16.0).epsilon(1e-9));
}

TEST_CASE("sparse histograms fall back to the Gaussian fit") {
  const auto [q, p] = gaussian_pairs(1'000'000, 1.0, 1.0, 3);
  const auto h = h_min_classical(q, p, 0.002, 0.002);
  CHECK(h.gaussian_fallback);
  CHECK(h.modal_count < kModalCountFloor);
  CHECK(h.bits == doctest::Approx(oracle::gaussian_grid_min_entropy(1.0, 1.0, 0.002, 0.002)).epsilon(2e-3));
  CHECK_THROWS_AS(h_min_classical(std::span(q).first(999'999), std::span(p).first(999'999), 0.1, 0.1), ValidationError);
  CHECK_THROWS_AS(h_min_classical(q, p, 0.0, 0.1), ValidationError);
}

TEST_CASE("purity closed form") {
  CHECK(purity(0.5, 0.5) == 1.0);
  CHECK(purity(0.6, 0.6) == doctest::Approx(1.0 / 1.2));
  CHECK(purity(0.5317, 0.5347) == doctest::Approx(0.938).epsilon(1e-3));
  CHECK(purity(0.499, 0.5, 0.001, 0.001) == 1.0);
  CHECK_THROWS_AS(purity(0.45, 0.5, 0.001, 0.001), CalibrationError);
  CHECK_THROWS_AS(purity(0.0, 0.5), ValidationError);
}

TEST_CASE("purity of synthetic Gaussian states matches the closed form within 3 SE") {
  const double m = 0.13, pw = 10e-3;
  const auto cal = make_cal(m, m, 1.0 / 256);
  const double volts_per_vu = std::sqrt(2.0 * m * pw);
  for (auto [vq, vp] : {std::pair{0.5, 0.5}, std::pair{0.55, 0.62}, std::pair{0.8, 0.7}}) {
    const auto [q, p] = gaussian_pairs(2'000'000, std::sqrt(vq) * volts_per_vu, std::sqrt(vp) * volts_per_vu, 11);
    const auto mom = quadrature_moments(q, p, cal, pw);
    CHECK(std::abs(mom.variance_q_vu - vq) < 3 * mom.se_q_vu);
    const double mu = purity(mom.variance_q_vu, mom.variance_p_vu, mom.se_q_vu, mom.se_p_vu);
    const double expected = 1.0 / (2.0 * std::sqrt(vq * vp));
    const double se = 0.5 * mu * std::hypot(mom.se_q_vu / mom.variance_q_vu, mom.se_p_vu / mom.variance_p_vu);
    // Clamping at 1 folds the upper half of the spread for pure vacuum.
    CHECK(std::abs(mu - expected) < 3 * se + (expected == 1.0 ? 3 * se : 0.0));
  }
}

TEST_CASE("quadrature variances on the simulated source") {
  const auto cfg = pipeline::PipelineConfig::defaults();
  calibration::SyntheticSweepSource src(cfg.source);
  const auto cal = calibration::fit(calibration::run_sweep(src, cfg.sweep.powers_w, 4'000'000, cfg.dsp));

  // Clearance 10^0.9 at 20 mW: 0.5 (1 + 10^-0.9) before the chain reshapes the floor.
  const auto hot = pipeline::simulate_conditioned(cfg, 20e-3, 1'200'000, 5);
  const auto m = quadrature_moments(hot.channel_q, hot.channel_p, cal, 20e-3);
  CHECK(m.variance_q_vu == doctest::Approx(0.563).epsilon(0.01));
  CHECK(m.variance_p_vu == doctest::Approx(0.563).epsilon(0.01));

  // Electronic floor only: what remains is the vacuum share 1/2 at an imagined power.
  auto shot_only = cfg;
  shot_only.source.electronic_noise_variance = 0.0;
  shot_only.source.lowfreq_tones.clear();
  shot_only.source.adc_bits = 16;
  const auto d = dsp::design_chain(cfg.dsp, cfg.source.adc_rate_hz);
  const auto truth_q = oracle::conditioned_truth(d, shot_only.source, 0);
  const auto truth_p = oracle::conditioned_truth(d, shot_only.source, 1);
  auto exact = make_cal(truth_q.slope, truth_p.slope, 1.0 / 256);
  const auto vac = pipeline::simulate_conditioned(shot_only, 20e-3, 1'200'000, 6);
  const auto mv = quadrature_moments(vac.channel_q, vac.channel_p, exact, 20e-3);
  // The iid SE understates the spread of a coloured stream by a few percent.
  CHECK(std::abs(mv.variance_q_vu - 0.5) < 3 * mv.se_q_vu * 1.2);
  CHECK(std::abs(mv.variance_p_vu - 0.5) < 3 * mv.se_p_vu * 1.2);

  const auto rep = evaluate(hot.channel_q, hot.channel_p, cal, 20e-3, 2e9);
  CHECK(rep.h_min_conditional <= rep.h_min_classical);
  CHECK(rep.h_min_conditional_point < rep.h_min_classical);
  CHECK(rep.h_min_classical <= 16.0);
  CHECK(rep.entropy_loss > 0.1);
  CHECK(rep.entropy_loss < 0.25);
  CHECK(rep.secure_rate == doctest::Approx(2e9 * rep.h_min_conditional));
  CHECK(rep.purity > 0.0);
  CHECK(rep.purity <= 1.0);
  const auto j = nlohmann::json::parse(rep.to_json());
  CHECK(j.at("entropy_loss").get<double>() == rep.entropy_loss);

  // The 475 uW point still clears 4 Gbps.
  const auto low = certify(cal, 475e-6);
  CHECK(low.certified > 2.0);
  CHECK(secure_rate(low.certified, 2e9) > 4e9);
}
