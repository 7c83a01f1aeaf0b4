#include "ttd/rng.hpp"

#include <cmath>
#include <numbers>

namespace ttd {

double Rng::normal() {
  // u1 in (0, 1] so the log is finite.
  const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Tensor Rng::normal_tensor(std::vector<std::int64_t> shape, double stddev) {
  auto n = shape_product(shape);
  std::vector<double> d(static_cast<std::size_t>(n));
  for (auto& v : d) v = stddev * normal();
  return Tensor(std::move(shape), std::move(d));
}

Tensor Rng::uniform_tensor(std::vector<std::int64_t> shape, double lo, double hi) {
  auto n = shape_product(shape);
  std::vector<double> d(static_cast<std::size_t>(n));
  for (auto& v : d) v = uniform(lo, hi);
  return Tensor(std::move(shape), std::move(d));
}

}  // namespace ttd
