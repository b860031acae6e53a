// Measures the median of |c| over hashed coefficient draws; the result backs
// kL1MedianCalibration in sketch.hpp.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include "emdstream/sketch.hpp"

int main(int argc, char** argv) {
  const std::size_t draws = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1000000;
  const auto key = emdstream::derive_key(20240601);
  std::vector<double> mags;
  mags.reserve(draws);
  const double scale = std::ldexp(1.0, emdstream::kL1FractionBits);
  for (std::size_t i = 0; i < draws; ++i) {
    const auto row = static_cast<std::uint32_t>(i % 1024);
    mags.push_back(std::abs(static_cast<double>(emdstream::l1_coefficient(key, row, i / 1024))) / scale);
  }
  auto mid = mags.begin() + static_cast<std::ptrdiff_t>(draws / 2);
  std::nth_element(mags.begin(), mid, mags.end());
  // Standard error of a sample median of |Cauchy|: 1 / (2 f(1) sqrt(n)), f(1) = 1/pi.
  const double se = std::acos(-1.0) / (2.0 * std::sqrt(static_cast<double>(draws)));
  std::printf("draws=%zu median=%.6f stderr=%.6f\n", draws, *mid, se);
  return 0;
}
