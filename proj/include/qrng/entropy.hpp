#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "qrng/calibration.hpp"

namespace qrng::entropy {

// -log2(dq * dp / pi), clamped at 0. Resolutions in vacuum units.
double h_min_conditional(double delta_q, double delta_p);

struct CertifiedEntropy {
  double h_min = 0.0;      // point value at the fitted slopes
  double sigma = 0.0;      // first-order propagation of the slope SEs
  double certified = 0.0;  // max(0, h_min - 3 sigma)
  double delta_q = 0.0;
  double delta_p = 0.0;
};

CertifiedEntropy certify(const calibration::CalibrationResult& cal, double lo_power_w);

inline constexpr std::size_t kMinClassicalPairs = 1'000'000;
inline constexpr std::uint64_t kModalCountFloor = 100;

struct ClassicalEstimate {
  double bits = 0.0;
  std::uint64_t modal_count = 0;
  std::uint64_t pairs = 0;
  bool gaussian_fallback = false;
};

/// Min-entropy of the joint (q, p) outcome on a grid of pitch (pitch_q, pitch_p),
/// bins centered on multiples of the pitch. Inputs are in the same units as the pitch.
/// The modal mass comes from a weighted log-quadratic fit of the histogram around
/// its peak (window up to 11 x 11 bins, shrunk to half a standard deviation);
/// below kModalCountFloor counts a Gaussian fit of the moments is used instead.
ClassicalEstimate h_min_classical(std::span<const double> q, std::span<const double> p, double pitch_q,
                                  double pitch_p);
ClassicalEstimate h_min_classical_reference(std::span<const double> q, std::span<const double> p, double pitch_q,
                                            double pitch_p);
// Largest bin mass of an independent bivariate Gaussian on the same grid.
double h_min_classical_gaussian(double mean_q, double var_q, double mean_p, double var_p, double pitch_q,
                                double pitch_p);

struct QuadratureMoments {
  double variance_q_vu = 0.0;
  double variance_p_vu = 0.0;
  double se_q_vu = 0.0;
  double se_p_vu = 0.0;
  double mean_q_vu = 0.0;
  double mean_p_vu = 0.0;
  std::uint64_t pairs = 0;
};

QuadratureMoments quadrature_moments(std::span<const double> q, std::span<const double> p,
                                     const calibration::CalibrationResult& cal, double lo_power_w);

// Gaussian-state purity 1 / (2 sqrt(vq vp)) with vacuum variance 1/2, clamped to (0, 1].
double purity(double variance_q_vu, double variance_p_vu, double se_q = 0.0, double se_p = 0.0);

double secure_rate(double h_min_bits, double raw_rate_pairs_per_s);

struct EntropyReport {
  double lo_power_w = 0.0;
  double h_min_conditional = 0.0;  // certified (lower bound)
  double h_min_conditional_point = 0.0;
  double h_min_conditional_sigma = 0.0;
  double h_min_classical = 0.0;
  double entropy_loss = 0.0;  // classical - conditional point value
  double variance_q_vu = 0.0;
  double variance_p_vu = 0.0;
  double purity = 0.0;
  double secure_rate = 0.0;
  double raw_rate = 0.0;
  double delta_q = 0.0;
  double delta_p = 0.0;
  bool classical_gaussian_fallback = false;

  std::string to_json() const;
};

// Full evaluation of one power point from a conditioned record (volts).
EntropyReport evaluate(std::span<const double> q, std::span<const double> p,
                       const calibration::CalibrationResult& cal, double lo_power_w, double raw_rate_pairs_per_s);

}  // namespace qrng::entropy
