#pragma once

#include <cstdint>
#include <vector>

#include "randinf/assignment.hpp"

namespace randinf::testing {

// Integer lattice in [lo, hi], drawn from a counter-based stream.
inline std::vector<double> lattice(CounterStream& rng, std::size_t n, int lo, int hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  return v;
}

inline Assignment first_m_treated(std::size_t n, std::size_t m) {
  Assignment z(n, 0);
  for (std::size_t i = 0; i < m; ++i) z[i] = 1;
  return z;
}

}  // namespace randinf::testing
