#pragma once

#include "fiberlab/types.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fiberlab::rng {

/// Roles used to derive independent streams from one master seed.
enum class Role : std::uint64_t
{
  tx_data = 1,
  tx_signs,
  interferer,
  ase,
  phase_noise_tx,
  phase_noise_rx,
  awgn,
  scramble_mask,
  training,
  metric_training,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Counter-based derivation: the same (master, path) always yields the same seed.
std::uint64_t derive(std::uint64_t master, std::initializer_list<std::uint64_t> path);

inline std::uint64_t derive(std::uint64_t master, Role role, std::uint64_t index = 0)
{
  return derive(master, {static_cast<std::uint64_t>(role), index});
}

/// Portable random stream: mt19937_64 plus hand-rolled uniform/Gaussian
/// transforms so realizations do not depend on the standard library vendor.
class Stream
{
public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }
  double uniform();              // [0, 1)
  double gaussian();             // N(0, 1)
  cplx complex_gaussian(double variance);  // circular, E|z|^2 = variance
  std::uint8_t bit() { return static_cast<std::uint8_t>(engine_() >> 63); }

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::vector<std::uint8_t> random_bits(std::size_t n, std::uint64_t seed);

} // namespace fiberlab::rng
