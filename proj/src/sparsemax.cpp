// SPDX-License-Identifier: Apache-2.0
#include "treereg/sparsemax.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace treereg {

std::vector<double> sparsemax(std::span<const double> z) {
  if (z.empty()) throw std::invalid_argument("sparsemax: empty input");
  std::vector<double> sorted(z.begin(), z.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());

  std::size_t k = 1;
  double cumsum = 0.0;
  double support_sum = sorted[0];
  for (std::size_t r = 1; r <= sorted.size(); ++r) {
    cumsum += sorted[r - 1];
    if (1.0 + static_cast<double>(r) * sorted[r - 1] > cumsum) {
      k = r;
      support_sum = cumsum;
    }
  }
  const double tau = (support_sum - 1.0) / static_cast<double>(k);

  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::max(z[i] - tau, 0.0);
  return p;
}

}  // namespace treereg
