#include "qrng/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qrng/error.hpp"
#include "qrng/moments.hpp"

namespace qrng::entropy {
namespace {

constexpr std::int64_t kDenseHistogramLimit = std::int64_t{1} << 24;
constexpr int kPeakWindowRadius = 5;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double max_bin_mass(double mean, double var, double pitch) {
  const double sigma = std::sqrt(var);
  if (!(sigma > 0.0)) return 1.0;
  const double k0 = std::round(mean / pitch);
  double best = 0.0;
  for (double k = k0 - 1; k <= k0 + 1; k += 1.0) {
    const double hi = (k * pitch + 0.5 * pitch - mean) / sigma;
    const double lo = (k * pitch - 0.5 * pitch - mean) / sigma;
    best = std::max(best, normal_cdf(hi) - normal_cdf(lo));
  }
  return best;
}

void check_pairs(std::span<const double> q, std::span<const double> p, double pitch_q, double pitch_p) {
  if (q.size() != p.size()) throw ValidationError("channel lengths differ");
  if (q.size() < kMinClassicalPairs) throw ValidationError("insufficient samples: need >= 1e6 pairs");
  if (!(pitch_q > 0.0) || !(pitch_p > 0.0)) throw ValidationError("grid pitch must be > 0");
}

// Log-quadratic weighted fit of the counts in a window around the modal bin,
// evaluated at the best bin of the window. Averages out the upward bias of a
// raw maximum over many near-equal bins.
template <class Count>
double smoothed_peak(Count&& count, std::int64_t a0, std::int64_t b0, int rq, int rp) {
  const bool use_q = rq > 0;
  const bool use_p = rp > 0;
  const int dim = 1 + (use_q ? 2 : 0) + (use_p ? 2 : 0) + (use_q && use_p ? 1 : 0);
  auto basis = [&](int x, int y, double* f) {
    int k = 0;
    f[k++] = 1.0;
    if (use_q) {
      f[k++] = x;
      f[k++] = static_cast<double>(x) * x;
    }
    if (use_p) {
      f[k++] = y;
      f[k++] = static_cast<double>(y) * y;
    }
    if (use_q && use_p) f[k++] = static_cast<double>(x) * y;
  };
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(dim);
  double f[6];
  int used = 0;
  for (int x = -rq; x <= rq; ++x) {
    for (int y = -rp; y <= rp; ++y) {
      const double c = static_cast<double>(count(a0 + x, b0 + y));
      if (c <= 0.0) continue;
      basis(x, y, f);
      const Eigen::Map<const Eigen::VectorXd> v(f, dim);
      // Var(log c) ~ 1/c for Poisson counts.
      ata.noalias() += c * v * v.transpose();
      atb.noalias() += c * std::log(c) * v;
      ++used;
    }
  }
  if (used < 2 * dim) return static_cast<double>(count(a0, b0));
  const Eigen::VectorXd coef = ata.ldlt().solve(atb);
  double best = -std::numeric_limits<double>::infinity();
  for (int x = -rq; x <= rq; ++x) {
    for (int y = -rp; y <= rp; ++y) {
      basis(x, y, f);
      best = std::max(best, Eigen::Map<const Eigen::VectorXd>(f, dim).dot(coef));
    }
  }
  return std::exp(best);
}

int window_radius(double sd_bins) {
  return static_cast<int>(std::clamp(std::floor(0.5 * sd_bins), 0.0, static_cast<double>(kPeakWindowRadius)));
}

template <class Count>
ClassicalEstimate finish(Count&& count, std::int64_t a0, std::int64_t b0, std::uint64_t modal,
                         std::span<const double> q, std::span<const double> p, double pitch_q, double pitch_p) {
  ClassicalEstimate e;
  e.pairs = q.size();
  e.modal_count = modal;
  RunningMoments mq;
  RunningMoments mp;
  mq.add(q);
  mp.add(p);
  if (modal >= kModalCountFloor) {
    const int rq = window_radius(std::sqrt(mq.variance()) / pitch_q);
    const int rp = window_radius(std::sqrt(mp.variance()) / pitch_p);
    const double peak = smoothed_peak(count, a0, b0, rq, rp);
    e.bits = -std::log2(peak / static_cast<double>(q.size()));
    return e;
  }
  e.gaussian_fallback = true;
  e.bits = h_min_classical_gaussian(mq.mean, mq.variance(), mp.mean, mp.variance(), pitch_q, pitch_p);
  return e;
}

}  // namespace

double h_min_conditional(double delta_q, double delta_p) {
  if (!(delta_q > 0.0) || !(delta_p > 0.0)) throw ValidationError("resolutions must be > 0");
  return std::max(0.0, -std::log2(delta_q * delta_p / std::numbers::pi));
}

CertifiedEntropy certify(const calibration::CalibrationResult& cal, double lo_power_w) {
  CertifiedEntropy c;
  c.delta_q = cal.delta_q(lo_power_w);
  c.delta_p = cal.delta_p(lo_power_w);
  c.h_min = h_min_conditional(c.delta_q, c.delta_p);
  // h depends on the slopes as (1/2) log2(m_q m_p) + const.
  const double rq = cal.q.slope_se / cal.q.slope;
  const double rp = cal.p.slope_se / cal.p.slope;
  c.sigma = c.h_min > 0.0 ? std::sqrt(rq * rq + rp * rp) / (2.0 * std::numbers::ln2) : 0.0;
  c.certified = std::max(0.0, c.h_min - 3.0 * c.sigma);
  return c;
}

double h_min_classical_gaussian(double mean_q, double var_q, double mean_p, double var_p, double pitch_q,
                                double pitch_p) {
  if (!(pitch_q > 0.0) || !(pitch_p > 0.0)) throw ValidationError("grid pitch must be > 0");
  return -std::log2(max_bin_mass(mean_q, var_q, pitch_q) * max_bin_mass(mean_p, var_p, pitch_p));
}

ClassicalEstimate h_min_classical(std::span<const double> q, std::span<const double> p, double pitch_q,
                                  double pitch_p) {
  check_pairs(q, p, pitch_q, pitch_p);
  const auto n = static_cast<std::int64_t>(q.size());
  const double iq = 1.0 / pitch_q;
  const double ip = 1.0 / pitch_p;
  double lo_q = std::numeric_limits<double>::infinity(), hi_q = -lo_q, lo_p = lo_q, hi_p = -lo_q;
#pragma omp parallel for reduction(min : lo_q, lo_p) reduction(max : hi_q, hi_p) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const double a = std::nearbyint(q[i] * iq);
    const double b = std::nearbyint(p[i] * ip);
    lo_q = std::min(lo_q, a);
    hi_q = std::max(hi_q, a);
    lo_p = std::min(lo_p, b);
    hi_p = std::max(hi_p, b);
  }
  const double wq = hi_q - lo_q + 1.0;
  const double wp = hi_p - lo_p + 1.0;
  if (wq * wp > static_cast<double>(kDenseHistogramLimit)) return h_min_classical_reference(q, p, pitch_q, pitch_p);

  const auto cols = static_cast<std::int64_t>(wp);
  const auto cells = static_cast<std::size_t>(wq * wp);
  std::vector<std::uint32_t> total(cells, 0);
#pragma omp parallel
  {
    std::vector<std::uint32_t> local(cells, 0);
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      const auto a = static_cast<std::int64_t>(std::nearbyint(q[i] * iq) - lo_q);
      const auto b = static_cast<std::int64_t>(std::nearbyint(p[i] * ip) - lo_p);
      ++local[static_cast<std::size_t>(a * cols + b)];
    }
#pragma omp critical
    for (std::size_t c = 0; c < cells; ++c) total[c] += local[c];
  }
  const auto it = std::max_element(total.begin(), total.end());
  const auto idx = static_cast<std::int64_t>(it - total.begin());
  const auto rows = static_cast<std::int64_t>(wq);
  auto count = [&](std::int64_t a, std::int64_t b) -> std::uint64_t {
    if (a < 0 || a >= rows || b < 0 || b >= cols) return 0;
    return total[static_cast<std::size_t>(a * cols + b)];
  };
  return finish(count, idx / cols, idx % cols, *it, q, p, pitch_q, pitch_p);
}

ClassicalEstimate h_min_classical_reference(std::span<const double> q, std::span<const double> p, double pitch_q,
                                            double pitch_p) {
  check_pairs(q, p, pitch_q, pitch_p);
  std::unordered_map<std::uint64_t, std::uint64_t> counts;
  auto key = [](std::int64_t a, std::int64_t b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
  };
  std::uint64_t modal = 0;
  std::uint64_t modal_key = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto a = static_cast<std::int32_t>(std::nearbyint(q[i] / pitch_q));
    const auto b = static_cast<std::int32_t>(std::nearbyint(p[i] / pitch_p));
    const std::uint64_t k = key(a, b);
    const std::uint64_t c = ++counts[k];
    // Ties resolve to the first cell in row-major order, as in the dense path.
    if (c > modal || (c == modal && std::pair(a, b) < std::pair(static_cast<std::int32_t>(modal_key >> 32),
                                                                 static_cast<std::int32_t>(modal_key)))) {
      modal = c;
      modal_key = k;
    }
  }
  auto count = [&](std::int64_t a, std::int64_t b) -> std::uint64_t {
    const auto it = counts.find(key(a, b));
    return it == counts.end() ? 0 : it->second;
  };
  return finish(count, static_cast<std::int32_t>(modal_key >> 32), static_cast<std::int32_t>(modal_key), modal, q,
                p, pitch_q, pitch_p);
}

QuadratureMoments quadrature_moments(std::span<const double> q, std::span<const double> p,
                                     const calibration::CalibrationResult& cal, double lo_power_w) {
  if (q.size() != p.size()) throw ValidationError("channel lengths differ");
  if (q.size() < kMinClassicalPairs) throw ValidationError("insufficient samples: need >= 1e6 pairs");
  const double sq = cal.vu_scale(0, lo_power_w);
  const double sp = cal.vu_scale(1, lo_power_w);
  RunningMoments mq;
  RunningMoments mp;
  mq.add(q);
  mp.add(p);
  QuadratureMoments m;
  m.pairs = mq.count;
  m.variance_q_vu = mq.variance() * sq * sq;
  m.variance_p_vu = mp.variance() * sp * sp;
  m.se_q_vu = mq.variance_se() * sq * sq;
  m.se_p_vu = mp.variance_se() * sp * sp;
  m.mean_q_vu = mq.mean * sq;
  m.mean_p_vu = mp.mean * sp;
  return m;
}

double purity(double vq, double vp, double se_q, double se_p) {
  if (!(vq > 0.0) || !(vp > 0.0)) throw ValidationError("variances must be > 0");
  if (vq < 0.5 - 3.0 * se_q || vp < 0.5 - 3.0 * se_p) {
    throw CalibrationError("quadrature variance below vacuum level: calibration error");
  }
  return std::min(1.0, 1.0 / (2.0 * std::sqrt(vq * vp)));
}

double secure_rate(double h_min_bits, double raw_rate_pairs_per_s) {
  if (!(h_min_bits >= 0.0)) throw ValidationError("h_min must be >= 0");
  if (!(raw_rate_pairs_per_s >= 0.0)) throw ValidationError("raw rate must be >= 0");
  return raw_rate_pairs_per_s * h_min_bits;
}

std::string EntropyReport::to_json() const {
  nlohmann::json j;
  j["lo_power_w"] = lo_power_w;
  j["h_min_conditional"] = h_min_conditional;
  j["h_min_conditional_point"] = h_min_conditional_point;
  j["h_min_conditional_sigma"] = h_min_conditional_sigma;
  j["h_min_classical"] = h_min_classical;
  j["entropy_loss"] = entropy_loss;
  j["variance_q_vu"] = variance_q_vu;
  j["variance_p_vu"] = variance_p_vu;
  j["purity"] = purity;
  j["secure_rate"] = secure_rate;
  j["raw_rate"] = raw_rate;
  j["delta_q"] = delta_q;
  j["delta_p"] = delta_p;
  j["classical_gaussian_fallback"] = classical_gaussian_fallback;
  return j.dump(2);
}

EntropyReport evaluate(std::span<const double> q, std::span<const double> p,
                       const calibration::CalibrationResult& cal, double lo_power_w, double raw_rate_pairs_per_s) {
  EntropyReport r;
  r.lo_power_w = lo_power_w;
  r.raw_rate = raw_rate_pairs_per_s;
  const auto cert = certify(cal, lo_power_w);
  r.h_min_conditional = cert.certified;
  r.h_min_conditional_point = cert.h_min;
  r.h_min_conditional_sigma = cert.sigma;
  r.delta_q = cert.delta_q;
  r.delta_p = cert.delta_p;

  const auto m = quadrature_moments(q, p, cal, lo_power_w);
  r.variance_q_vu = m.variance_q_vu;
  r.variance_p_vu = m.variance_p_vu;
  r.purity = purity(m.variance_q_vu, m.variance_p_vu, m.se_q_vu, m.se_p_vu);

  const double pitch = cal.effective_resolution_v;
  const auto classical = h_min_classical(q, p, pitch, pitch);
  r.h_min_classical = classical.bits;
  r.classical_gaussian_fallback = classical.gaussian_fallback;
  r.entropy_loss = r.h_min_classical - r.h_min_conditional_point;
  r.secure_rate = secure_rate(r.h_min_conditional, raw_rate_pairs_per_s);
  return r;
}

}  // namespace qrng::entropy
