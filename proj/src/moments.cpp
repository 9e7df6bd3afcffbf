#include "qrng/moments.hpp"

namespace qrng {

void RunningMoments::add(std::span<const double> x) {
  if (x.empty()) return;
  const auto n = static_cast<std::int64_t>(x.size());
  double sum = 0.0;
#pragma omp parallel for reduction(+ : sum) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) sum += x[i];
  const double mu = sum / static_cast<double>(n);
  double ss = 0.0;
#pragma omp parallel for reduction(+ : ss) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = x[i] - mu;
    ss += d * d;
  }
  merge(RunningMoments{static_cast<std::uint64_t>(n), mu, ss});
}

void RunningMoments::merge(const RunningMoments& o) {
  if (o.count == 0) return;
  if (count == 0) {
    *this = o;
    return;
  }
  const double na = static_cast<double>(count);
  const double nb = static_cast<double>(o.count);
  const double delta = o.mean - mean;
  const double n = na + nb;
  mean += delta * nb / n;
  m2 += o.m2 + delta * delta * na * nb / n;
  count += o.count;
}

}  // namespace qrng
