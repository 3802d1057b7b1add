#pragma once

#include "fiberlab/types.hpp"

#include <cstdint>
#include <vector>

namespace fiberlab {

struct PulseConfig
{
  double symbol_rate = 46.5e9;     // Bd
  double rolloff = 0.05;
  double samples_per_symbol = 2.0; // may be fractional, e.g. 1.125

  void validate() const;
  double sample_rate() const { return symbol_rate * samples_per_symbol; }
  double occupied_bandwidth() const { return symbol_rate * (1.0 + rolloff); }

  /// Number of samples spanning n_symbols; throws unless the product is integral.
  std::size_t samples_for(std::size_t n_symbols) const;
};

/// Root-raised-cosine amplitude response, normalized so that |H|^2 folded
/// over multiples of the symbol rate is exactly 1 (H = 1 in the flat band).
double rrc_response(double f, double symbol_rate, double rolloff);

/// Point set of one 2D (per-polarization) constellation with its priors.
struct Constellation
{
  std::vector<cplx> points;
  std::vector<std::uint32_t> labels;
  std::vector<double> priors;

  /// Square QAM built from per-axis amplitude levels and their probabilities
  /// (sign equiprobable). Normalized to unit mean energy under the priors.
  static Constellation from_amplitudes(const std::vector<int>& amplitudes,
                                       const std::vector<double>& amplitude_priors);
  /// Uniform square M-QAM, unit mean energy.
  static Constellation square_qam(std::size_t order);

  double mean_energy() const;
  double entropy_bits() const;
  void validate() const;
};

/// Pulse-shape 4D symbols with RRC pulses. Periodic (circular) convolution.
/// Mean waveform power equals the mean symbol energy exactly.
Signal rrc_shape(const Symbols4D& symbols, const PulseConfig& cfg);

/// RRC matched filter and symbol-instant sampling. A declared delay (s) of the
/// input relative to the transmitter timing is compensated before sampling.
Symbols4D matched_filter_sample(const Signal& sig, const PulseConfig& cfg, double delay_s = 0.0);

/// FFT-based resampling (spectral zero-pad or truncation).
Signal resample(const Signal& sig, double new_rate);

/// Circular frequency shift by an integer number of FFT bins (offset rounded to grid).
Signal frequency_shift(const Signal& sig, double offset_hz);

struct WdmChannel
{
  Signal signal;
  double offset_hz = 0.0;
};

Signal wdm_mux(const std::vector<WdmChannel>& channels);

/// Shift the channel at offset_hz to baseband, brick-wall it to its occupied
/// bandwidth and resample to processing.samples_per_symbol.
Signal wdm_demux(const Signal& sig, double offset_hz, const PulseConfig& processing);

/// Mean total power (X + Y) in W.
double mean_power(const Signal& sig);

/// Factor that set_power would apply to reach p_dbm.
double power_scale(const Signal& sig, double p_dbm);

Signal set_power(const Signal& sig, double p_dbm);

Signal scale(const Signal& sig, double factor);

/// Smallest power-of-two oversampling covering the WDM band with a 20% guard.
double simulation_samples_per_symbol(int n_channels, double spacing_hz, const PulseConfig& pulse);

/// Total energy (sum |x|^2 + |y|^2 over samples).
double energy(const Signal& sig);
double energy(const Symbols4D& sym);

/// Normalized mean-square error ||a - b||^2 / ||b||^2 over both polarizations.
double nmse(const Symbols4D& a, const Symbols4D& b);
double nmse(const Signal& a, const Signal& b);

} // namespace fiberlab
