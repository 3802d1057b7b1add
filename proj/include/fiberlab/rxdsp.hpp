#pragma once

#include "fiberlab/signal.hpp"
#include "fiberlab/types.hpp"

#include <vector>

namespace fiberlab {

/// Data-aided removal of the mean phase: rx * exp(-j arg(sum rx conj(tx))).
CVec mean_phase_remove(const CVec& rx, const CVec& tx);
/// Per-polarization mean phase removal.
Symbols4D mean_phase_remove(const Symbols4D& rx, const Symbols4D& tx);

/// Nearest-point decisions. Square grids are sliced per axis in O(1).
class Slicer
{
public:
  explicit Slicer(const Constellation& c);
  std::size_t nearest(cplx y) const;
  const cplx& point(std::size_t i) const { return points_[i]; }
  std::size_t size() const { return points_.size(); }

private:
  std::vector<cplx> points_;
  bool grid_ = false;
  double lo_ = 0.0, step_ = 1.0;
  std::size_t side_ = 0;
  std::vector<std::size_t> grid_index_;  // (ix * side + iq) -> point index
};

struct CprConfig
{
  int window_symbols = 481;
  int test_phases = 64;
  int symmetry = 4;

  void validate() const;
};

struct BpsResult
{
  CVec corrected;
  std::vector<double> phase;  // unwrapped estimate of the channel phase per symbol
};

struct BpsResult4D
{
  Symbols4D corrected;
  std::vector<double> phase;
};

/// Blind phase search with a centered sliding window and unwrapping across
/// the constellation's rotational ambiguity.
BpsResult bps_cpr(const CVec& rx, const Constellation& constellation, const CprConfig& cfg);
/// Joint estimate for two polarizations sharing one laser phase.
BpsResult4D bps_cpr(const Symbols4D& rx, const Constellation& constellation, const CprConfig& cfg);

/// Resolves the global rotational ambiguity left by blind CPR using the known
/// transmitted data (rotation by the multiple of 2 pi / symmetry closest to the mean phase).
Symbols4D resolve_ambiguity(const Symbols4D& rx, const Symbols4D& tx, int symmetry);

/// Rate bookkeeping for converting a symbol-wise AIR to a net rate.
struct RateAccounting
{
  double transmission_rate_4d = 12.0;  // information bits actually carried per 4D symbol
  double source_entropy_4d = 12.0;     // entropy of the transmitted 4D marginal
};

struct AirReport
{
  double air_bits_per_2d = 0.0;   // mean over polarizations
  double air_bits_per_4d = 0.0;   // sum over polarizations
  double effective_snr_db = 0.0;
  double net_rate_bits_per_4d = 0.0;
  double net_air_bits_per_4d = 0.0;
  double se_bits_s_hz = 0.0;
  double noise_var_x = 0.0;
  double noise_var_y = 0.0;
};

/// Symbol-wise mismatched-decoding AIR (bits/2D) with a circular Gaussian
/// auxiliary channel. noise_var <= 0 fits the variance by maximizing the AIR.
double air_2d(const CVec& rx, const CVec& tx, const Constellation& constellation, double noise_var = 0.0,
              double* fitted_var = nullptr);

AirReport air_estimate(const Symbols4D& rx, const Symbols4D& tx, const Constellation& constellation,
                       const RateAccounting& rates, double symbol_rate, double channel_spacing,
                       double noise_var = 0.0);

inline constexpr double effective_snr_cap_db = 100.0;

/// 10 log10(E|x|^2 / E|y - x|^2) after mean phase removal, capped at effective_snr_cap_db.
double effective_snr_db(const CVec& rx, const CVec& tx);
double effective_snr_db(const Symbols4D& rx, const Symbols4D& tx);

} // namespace fiberlab
