#include "stmrecon/rng.hpp"

#include <cmath>
#include <numbers>

namespace stmrecon {

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t CounterRng::bits(std::uint64_t counter) const
{
  std::uint64_t h = splitmix64(seed_ ^ 0x5bd1e9955bd1e995ULL);
  h = splitmix64(h ^ stream_);
  return splitmix64(h ^ counter);
}

double CounterRng::uniform(std::uint64_t counter) const
{
  return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal(std::uint64_t counter) const
{
  double u1 = uniform(2 * counter), u2 = uniform(2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

cx CounterRng::cnormal(std::uint64_t counter) const
{
  double u1 = uniform(2 * counter), u2 = uniform(2 * counter + 1);
  double r = std::sqrt(-std::log(u1));
  double a = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(a), r * std::sin(a)};
}

} // namespace stmrecon
