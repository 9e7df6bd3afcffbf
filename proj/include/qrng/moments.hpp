#pragma once

#include <cmath>
#include <cstdint>
#include <span>

namespace qrng {

/// Mean and second central moment, mergeable across blocks (Chan et al. update).
struct RunningMoments {
  std::uint64_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(std::span<const double> x);
  void merge(const RunningMoments& other);

  double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
  // Standard error of the sample variance for Gaussian data.
  double variance_se() const {
    return count > 1 ? variance() * std::sqrt(2.0 / static_cast<double>(count - 1)) : 0.0;
  }
};

}  // namespace qrng
