#pragma once

#include <stdexcept>
#include <vector>

#include "dopr/policy.hpp"

namespace dopr::kernels::detail {

/// Adds a rollout's gradient rows into the dense tensor, positions 0..len-1.
inline void add_rows(PolicyParams& grad, std::int64_t id, const std::vector<double>& rows) {
  const auto symbols = static_cast<std::size_t>(grad.dims().symbols);
  const auto len = rows.size() / symbols;
  for (std::size_t t = 0; t < len; ++t) {
    auto dst = grad.row(id, static_cast<std::int32_t>(t));
    for (std::size_t v = 0; v < symbols; ++v) dst[v] += rows[t * symbols + v];
  }
}

inline void check_shapes(const PolicyParams& grad, const PolicyParams& a, const PolicyParams& b,
                         const PolicyParams& c) {
  if (!(grad.dims() == a.dims() && a.dims() == b.dims() && b.dims() == c.dims()))
    throw std::invalid_argument("parameter shape mismatch");
}

}  // namespace dopr::kernels::detail
