#pragma once

#include "fiberlab/channel.hpp"
#include "fiberlab/optimize.hpp"
#include "fiberlab/signal.hpp"
#include "fiberlab/types.hpp"

#include <string>
#include <vector>

namespace fiberlab {

enum class DbpEngine { cdc, ssfm, essfm, cb_essfm };

std::string to_string(DbpEngine e);
DbpEngine dbp_engine_from_string(const std::string& s);

struct DbpConfig
{
  DbpEngine engine = DbpEngine::cdc;
  int n_steps = 0;                 // total over the link; 0 means CDC only
  int n_coeffs = 0;                // Nc, half-length of the power filter
  std::vector<double> coeffs;      // c_0..c_Nc in rad/W (empty: SSFM-equivalent c_0)
  double split_ratio = 0.5;
  double samples_per_symbol = 1.125;
  int fft_block = 0;               // 0: whole-sequence FFT; otherwise overlap-save block size
  int overlap = 0;                 // 0: derived from the step dispersion memory

  void validate() const;
};

/// Dispersion memory (in samples, not rounded) of a filter over `length` for a
/// band equal to the sample rate: 2 pi |beta2| length fs^2.
double dispersion_memory(const LinkConfig& link, double length, double sample_rate);

/// dispersion_memory rounded up to an even integer.
int required_overlap(const LinkConfig& link, double length, double sample_rate);

/// Uniform steps over the whole link with per-step SSFM taps gamma*8/9*integral(p dz).
StepSchedule dbp_schedule(const LinkConfig& link, int n_steps, double split_ratio);

/// Mean SSFM nonlinear weight per step, the natural scale of the ESSFM c_0.
double ssfm_step_weight(const LinkConfig& link, int n_steps);

Signal cdc(const Signal& sig, const LinkConfig& link);
Signal dbp_ssfm(const Signal& sig, const LinkConfig& link, const DbpConfig& cfg);
Signal essfm_backprop(const Signal& sig, const LinkConfig& link, const DbpConfig& cfg);
/// Same engine run in the propagation direction (low-complexity channel model).
Signal essfm_forward(const Signal& sig, const LinkConfig& link, const DbpConfig& cfg);

/// Dispatches on cfg.engine.
Signal backpropagate(const Signal& sig, const LinkConfig& link, const DbpConfig& cfg);

/// Circular overlap-save filtering of a periodic sequence. The response is
/// applied as given on the block grid (all-pass filters stay all-pass); the
/// impulse response is assumed to lie within +-overlap/2 samples of zero.
class OverlapSaveFilter
{
public:
  OverlapSaveFilter(const CVec& response_on_block_grid, int overlap);
  CVec apply(const CVec& in) const;
  int block() const { return static_cast<int>(response_.size()); }
  int overlap() const { return overlap_; }

private:
  CVec response_;
  int overlap_;
};

struct TrainingResult
{
  std::vector<double> coeffs;
  double split_ratio = 0.5;
  double mse = 0.0;            // normalized, after mean phase removal
  double initial_mse = 0.0;    // SSFM-equivalent starting point
  int evaluations = 0;
  bool converged = false;      // false: budget exhausted, best-so-far returned
};

struct TrainOptions
{
  std::size_t min_symbols = 16384;
  bool train_split = false;    // true for cb_essfm
  OptimizeOptions optimizer{};
};

/// Fits the shared ESSFM coefficients (and for cb_essfm the split ratio) by
/// minimizing the mean-phase-removed MSE between the equalized, matched-filtered
/// output and tx_symbols. tx_symbols must be expressed in the units of the
/// received field after matched filtering.
TrainingResult train_essfm(const Symbols4D& tx_symbols, const Signal& rx_signal, const LinkConfig& link,
                           const DbpConfig& cfg, const PulseConfig& pulse, TrainOptions opts = {});

struct ComplexityReport
{
  double rm_per_2d = 0.0;
  // Breakdown (RM/2D).
  double fft = 0.0;
  double pointwise = 0.0;
  double power_filter = 0.0;
  double power = 0.0;
  double rotation = 0.0;
  int fft_block = 0;
  int overlap = 0;
  double memory = 0.0;  // samples discarded per block in the count; unrounded so the total is monotone in steps
  // Declared cost model.
  static constexpr int rm_per_complex_multiply = 4;
  static constexpr const char* fft_law = "radix-2: (N/2) log2 N complex multiplies";
};

/// Real multiplications per 2D symbol under the declared cost model. A zero
/// fft_block is tuned to the cheapest power of two.
ComplexityReport complexity_rm2d(const DbpConfig& cfg, const LinkConfig& link, double symbol_rate);

} // namespace fiberlab
