// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace treereg {

/// Sort-based projection onto the probability simplex:
///   sort descending, k = max{r : 1 + r*z[r] > sum_{i<=r} z[i]},
///   tau = (sum_{i<=k} z[i] - 1) / k, p = max(z - tau, 0).
/// Returns p in the original (unsorted) order.
std::vector<double> sparsemax(std::span<const double> z);

}  // namespace treereg
