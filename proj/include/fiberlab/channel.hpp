#pragma once

#include "fiberlab/types.hpp"

#include <cstdint>
#include <map>
#include <tuple>
#include <vector>

namespace fiberlab {

struct LinkConfig
{
  int n_spans = 30;
  double span_km = 100.0;
  double alpha_db_km = 0.2;
  double disp_ps_nm_km = 17.0;
  double gamma_w_km = 1.3;
  double nf_db = 5.0;
  double wavelength_nm = 1550.0;
  bool ase = true;  // false: noiseless amplifiers

  void validate() const;

  double beta2() const;       // s^2/m, from D and lambda
  double alpha() const;       // 1/m (power attenuation)
  double gamma() const;       // 1/(W m)
  double span_m() const { return span_km * 1e3; }
  double length_m() const { return span_m() * n_spans; }
  double span_loss_db() const { return alpha_db_km * span_km; }
  double carrier_hz() const { return phys::c / (wavelength_nm * 1e-9); }

  /// Integral of the normalized power profile exp(-alpha z) over [z0, z1] of
  /// the link (z measured from the link input, profile restarting each span).
  double power_integral(double z0, double z1) const;
};

/// Manakov nonlinear coefficient scaling for dual polarization.
inline constexpr double manakov_factor = 8.0 / 9.0;

enum class StepSpacing { uniform, logarithmic };

struct StepPlan
{
  int steps_per_span = 100;
  StepSpacing spacing = StepSpacing::logarithmic;
  double split_ratio = 0.5;  // fraction of each step's dispersion applied before the nonlinear operator

  void validate() const;
};

/// Step boundaries within one span (steps_per_span + 1 positions from 0 to span length).
/// Logarithmic spacing gives every step the same integrated power.
std::vector<double> span_step_boundaries(const LinkConfig& link, const StepPlan& plan);

/// A sequence of split steps in link coordinates. Step i covers a fiber
/// length lengths[i]; its nonlinear phase is the circular FIR
///   phi_k = sum_{|j| <= Nc} taps[i][|j|] * (|x_{k+j}|^2 + |y_{k+j}|^2).
/// SSFM steps have a single tap equal to gamma * 8/9 * integral of the power profile.
struct StepSchedule
{
  std::vector<double> lengths;
  std::vector<std::vector<double>> taps;
  double split_ratio = 0.5;
};

enum class Direction { forward = 1, backward = -1 };

/// Runs a step schedule on a signal (in place). Forward applies, per step,
/// D(s h) N D((1 - s) h); backward applies the exact inverse sequence with
/// negated dispersion and nonlinear phase. Adjacent linear operators are merged.
/// Filters for repeated step lengths are cached up to a memory budget.
class SplitStepEngine
{
public:
  explicit SplitStepEngine(double beta2, std::size_t cache_bytes = std::size_t{96} << 20)
      : beta2_(beta2), cache_budget_(cache_bytes)
  {
  }

  void run(Signal& sig, const StepSchedule& schedule, Direction dir);

  /// Frequency-domain dispersion over `length` (negative length inverts).
  void disperse(CVec& spectrum, double sample_rate, double length);

private:
  const CVec& filter(std::size_t n, double sample_rate, double length, CVec& scratch);

  double beta2_;
  std::size_t cache_budget_;
  std::size_t cache_bytes_ = 0;
  std::map<std::tuple<std::size_t, double, double>, CVec> cache_;
};

/// Applies the nonlinear operator of one step to time-domain samples.
void apply_nonlinear_phase(CVec& x, CVec& y, const std::vector<double>& taps, double sign);

/// Propagates through one fiber span (no amplifier); output includes span loss.
Signal propagate_span(const Signal& sig, const LinkConfig& link, const StepPlan& plan);

/// Full link: spans with split-step propagation, each followed by an EDFA
/// whose gain equals the span loss. ASE streams are derived from rng_seed per span.
Signal ssfm_forward(const Signal& sig, const LinkConfig& link, const StepPlan& plan, std::uint64_t rng_seed);

/// Lumped amplifier: field gain sqrt(G) plus circular white ASE per polarization
/// with PSD n_sp h nu (G - 1), n_sp = 10^(NF/10) / 2.
Signal edfa_amplify(const Signal& sig, double gain_db, double nf_db, std::uint64_t rng_seed,
                    double carrier_hz = phys::c / 1550e-9, bool add_noise = true);

/// ASE PSD per polarization (W/Hz).
double ase_psd(double gain_db, double nf_db, double carrier_hz);

/// Wiener phase noise path with per-sample increment variance 2 pi linewidth / sample_rate.
std::vector<double> phase_noise_trajectory(std::size_t n, double linewidth_hz, double sample_rate,
                                           std::uint64_t rng_seed);

/// Common laser phase on both polarizations. The trajectory is a Wiener walk pinned to
/// the same phase at both ends, so the periodic waveform has no phase jump at the wrap.
Signal apply_phase_noise(const Signal& sig, double linewidth_hz, std::uint64_t rng_seed);

/// Adds circular Gaussian noise for a per-2D SNR referred to the symbol rate.
/// snr_db = +inf leaves the signal untouched.
Signal awgn(const Signal& sig, double snr_db, std::uint64_t rng_seed, double symbol_rate);
Symbols4D awgn(const Symbols4D& sym, double snr_db, std::uint64_t rng_seed);

} // namespace fiberlab
