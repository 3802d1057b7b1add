#pragma once

#include "fiberlab/types.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fiberlab {

using BigUint = boost::multiprecision::cpp_int;
using Bits = std::vector<std::uint8_t>;

/// MSB-first conversion between bit strings and integers.
BigUint bits_to_index(const Bits& bits);
Bits index_to_bits(const BigUint& index, std::size_t n_bits);

/// floor(log2(x)) for x >= 1.
int floor_log2(const BigUint& x);

struct AmplitudeAlphabet
{
  std::vector<int> amplitudes{1, 3, 5, 7};

  void validate() const;
  std::size_t size() const { return amplitudes.size(); }
  long energy(std::size_t i) const { return static_cast<long>(amplitudes[i]) * amplitudes[i]; }
  std::size_t index_of(int amplitude) const;
};

enum class DmKind { ccdm, ess, mb_iid };

struct DmConfig
{
  DmKind kind = DmKind::ess;
  int block_len = 256;
  int k_bits = 332;
  long e_max = 0;                 // ess; 0 selects the smallest admissible bound
  std::vector<int> composition;   // ccdm: count per alphabet entry
  double nu = 0.0;                // mb_iid
  AmplitudeAlphabet alphabet{};

  void validate() const;
};

/// Enumerative sphere shaping. Sequences of block_len amplitudes with
/// sum a^2 <= e_max are indexed in lexicographic order (smaller amplitudes
/// first) through a bounded-energy trellis of exact sequence counts.
class EssCodec
{
public:
  EssCodec(AmplitudeAlphabet alphabet, int block_len, long e_max);

  const AmplitudeAlphabet& alphabet() const { return alphabet_; }
  int block_len() const { return n_; }
  long e_max() const { return e_max_; }

  /// Number of admissible sequences.
  const BigUint& admissible() const { return count(n_, budget_); }
  int max_bits() const { return floor_log2(admissible()); }

  std::vector<int> encode_index(const BigUint& index) const;
  BigUint decode_index(const std::vector<int>& amplitudes) const;

  std::vector<int> encode(const Bits& bits) const;
  Bits decode(const std::vector<int>& amplitudes, std::size_t k_bits) const;

  /// Exact amplitude marginal over the first n_used sequences (all positions pooled).
  std::vector<double> amplitude_distribution(const BigUint& n_used) const;

  /// Persistence with an integrity hash; load returns nullopt on any mismatch.
  void save(const std::string& path) const;
  static std::optional<EssCodec> load(const std::string& path, const AmplitudeAlphabet& alphabet, int block_len,
                                      long e_max);

private:
  EssCodec() = default;
  const BigUint& count(int m, long b) const;  // sequences of length m with reduced energy <= b
  std::string serialize_body() const;

  AmplitudeAlphabet alphabet_;
  int n_ = 0;
  long e_max_ = 0;
  long budget_ = 0;               // reduced-energy budget
  long unit_ = 1;                 // energy quantum g
  std::vector<long> reduced_;     // (a^2 - a_min^2) / g
  std::vector<BigUint> table_;    // (n + 1) x (budget + 1)
  BigUint zero_{0};
};

/// Smallest e_max for which at least 2^k_bits sequences are admissible.
long ess_min_emax(const AmplitudeAlphabet& alphabet, int block_len, int k_bits);

/// Process-wide ESS codec cache, optionally persisted under cache_dir.
std::shared_ptr<const EssCodec> ess_codec(const AmplitudeAlphabet& alphabet, int block_len, long e_max,
                                          const std::string& cache_dir = {});

/// Constant-composition distribution matcher: lexicographic ranking of the
/// permutations of a fixed amplitude multiset (exact arithmetic coding).
class CcdmCodec
{
public:
  CcdmCodec(AmplitudeAlphabet alphabet, std::vector<int> composition);

  const BigUint& count() const { return count_; }
  int max_bits() const { return floor_log2(count_); }
  int block_len() const { return n_; }

  std::vector<int> encode_index(const BigUint& index) const;
  BigUint decode_index(const std::vector<int>& amplitudes) const;
  std::vector<int> encode(const Bits& bits) const;
  Bits decode(const std::vector<int>& amplitudes, std::size_t k_bits) const;

private:
  AmplitudeAlphabet alphabet_;
  std::vector<int> composition_;
  int n_ = 0;
  BigUint count_;
};

BigUint multinomial(const std::vector<int>& composition);

/// Maxwell-Boltzmann law P(a) ~ exp(-nu a^2); nu = +inf puts all mass on the smallest amplitude.
std::vector<double> mb_distribution(double nu, const AmplitudeAlphabet& alphabet = {});
double entropy_bits(const std::vector<double>& p);
/// nu such that H(P_nu) = target (bits) within 1e-9.
double mb_fit_nu(double target_entropy_bits, const AmplitudeAlphabet& alphabet = {});
std::vector<int> mb_sample(double nu, std::size_t n, std::uint64_t rng_seed, const AmplitudeAlphabet& alphabet = {});

/// PAS mapping. Amplitudes and sign bits are assigned round-robin to the four
/// real dimensions (XI, XQ, YI, YQ); sign bit 1 means negative. e_norm is the
/// mean 2D energy of the unnormalized constellation.
Symbols4D pas_map(const std::vector<int>& amplitudes, const Bits& sign_bits, double e_norm);

struct HardDemap
{
  std::vector<int> amplitudes;
  Bits sign_bits;
};
HardDemap pas_demap_hard(const Symbols4D& symbols, double e_norm, const AmplitudeAlphabet& alphabet = {});

/// Mean 2D energy of the unnormalized constellation for an amplitude law.
double pas_energy_norm(const std::vector<double>& amplitude_priors, const AmplitudeAlphabet& alphabet = {});

struct ShapingFrame
{
  Bits info_bits;
  std::vector<int> amplitudes;  // concatenated DM blocks
  Bits sign_bits;
  Symbols4D symbols;
  double net_rate_bits_per_4d = 0.0;
};

/// PAS frame of n 4D symbols built from ESS blocks:
/// bits = [block_0 .. block_{B-1} amplitude bits | 4n sign bits].
class PasFramer
{
public:
  PasFramer(std::shared_ptr<const EssCodec> codec, int k_bits, int n_symbols_4d, double e_norm);

  std::size_t amplitude_bits() const { return static_cast<std::size_t>(blocks_) * static_cast<std::size_t>(k_); }
  std::size_t sign_bits() const { return 4 * static_cast<std::size_t>(n_); }
  std::size_t frame_bits() const { return amplitude_bits() + sign_bits(); }
  int n_symbols() const { return n_; }
  double e_norm() const { return e_norm_; }
  double rate_bits_per_4d() const;

  ShapingFrame encode(const Bits& bits) const;
  Bits decode(const Symbols4D& symbols) const;

private:
  std::shared_ptr<const EssCodec> codec_;
  int k_;
  int n_;
  int blocks_;
  double e_norm_;
};

} // namespace fiberlab
