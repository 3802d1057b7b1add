#include "fiberlab/random.hpp"

#include <cmath>

namespace fiberlab::rng {

std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t master, std::initializer_list<std::uint64_t> path)
{
  std::uint64_t h = splitmix64(master);
  for (auto p : path)
    h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

double Stream::uniform()
{
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Stream::gaussian()
{
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * phys::pi * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

cplx Stream::complex_gaussian(double variance)
{
  const double s = std::sqrt(0.5 * variance);
  const double re = gaussian();
  const double im = gaussian();
  return {s * re, s * im};
}

std::vector<std::uint8_t> random_bits(std::size_t n, std::uint64_t seed)
{
  Stream s(seed);
  std::vector<std::uint8_t> out(n);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 64 == 0)
      word = s.bits();
    out[i] = static_cast<std::uint8_t>((word >> (i % 64)) & 1U);
  }
  return out;
}

} // namespace fiberlab::rng
