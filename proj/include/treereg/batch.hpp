// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "treereg/matrix.hpp"

namespace treereg {

/// A minibatch laid out time-major. Tabular data is a single timestep.
/// mask(t)(b, q) is 1 where sequence b has a label at step t and 0 on padding.
struct Batch {
  std::vector<Matrix> x;     // T entries of B x P
  std::vector<Matrix> y;     // T entries of B x Q
  std::vector<Matrix> mask;  // T entries of B x Q

  std::size_t steps() const { return x.size(); }
  std::size_t batch_size() const { return x.empty() ? 0 : x.front().rows(); }
  /// Number of (example, timestep) rows that carry labels.
  std::size_t valid_rows() const;
};

inline std::size_t Batch::valid_rows() const {
  std::size_t n = 0;
  for (const auto& m : mask)
    for (std::size_t b = 0; b < m.rows(); ++b)
      if (m.cols() > 0 && m(b, 0) != 0.0) ++n;
  return n;
}

}  // namespace treereg
