#pragma once

#include "stmrecon/types.hpp"

#include <cstdint>

namespace stmrecon {

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter), so parallel loops reproduce serial output.
class CounterRng {
public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream)
  {
  }

  std::uint64_t bits(std::uint64_t counter) const;
  // Uniform on (0, 1).
  double uniform(std::uint64_t counter) const;
  // Standard normal from counters 2c and 2c+1.
  double normal(std::uint64_t counter) const;
  // Complex normal with E|z|^2 = 1.
  cx cnormal(std::uint64_t counter) const;

private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

std::uint64_t splitmix64(std::uint64_t x);

} // namespace stmrecon
