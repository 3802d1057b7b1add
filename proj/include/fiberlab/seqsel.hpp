#pragma once

#include "fiberlab/channel.hpp"
#include "fiberlab/shaping.hpp"
#include "fiberlab/signal.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fiberlab {

enum class SelectionMetric { nli_cbessfm, nli_ideal, energy_var };

std::string to_string(SelectionMetric m);
SelectionMetric selection_metric_from_string(const std::string& s);

/// Low-complexity forward channel model used by the NLI metric: single-band
/// ESSFM run in the propagation direction over the whole link.
struct ForwardModelConfig
{
  int n_steps = 30;
  int n_coeffs = 8;
  double samples_per_symbol = 1.125;
  std::vector<double> coeffs;   // c_0..c_Nc; empty: trained, or SSFM-equivalent if train is false
  bool train = true;

  void validate() const;
};

struct SelectionConfig
{
  int n_candidates = 256;
  int seq_len_4d = 512;
  SelectionMetric metric = SelectionMetric::nli_cbessfm;
  ForwardModelConfig model{};
  int context_len_4d = 512;
  int ideal_steps_per_span = 4;  // fine SSFM used by nli_ideal
  int energy_window = 4;         // metric_energy_var window (4D symbols)

  void validate() const;
  int index_bits() const;
};

/// log2(Nt) / n bits per 4D symbol.
double rate_loss(const SelectionConfig& cfg);

/// Scrambling mask for candidate `index`; index 0 is all zeros.
Bits scramble_mask(std::size_t n_bits, std::uint64_t master_seed, int index);

/// Information bits carried by one selection frame.
std::size_t selection_info_bits(const PasFramer& framer, const SelectionConfig& cfg);

struct CandidateSet
{
  std::vector<ShapingFrame> candidates;
  std::vector<double> metrics;
  int scramble_index = -1;
};

/// Candidate i is the PAS frame of (info XOR mask_i) with the binary index i
/// written at the start of the sign-bit region.
CandidateSet generate_candidates(const Bits& info_bits, const PasFramer& framer, const SelectionConfig& cfg,
                                 std::uint64_t master_seed);

/// Candidate `index` alone (same construction as generate_candidates).
ShapingFrame build_candidate(const Bits& info_bits, const PasFramer& framer, const SelectionConfig& cfg,
                             std::uint64_t master_seed, int index);

/// Inverse of candidate generation: strips the index and undoes the scrambling.
Bits recover_info_bits(const Bits& frame_bits, const PasFramer& framer, const SelectionConfig& cfg,
                       std::uint64_t master_seed);

struct Selection
{
  int index = 0;
  const ShapingFrame* frame = nullptr;
};

/// argmin of the metrics, ties to the lowest index.
Selection select(CandidateSet& set);

/// NLI metric: propagates [context | seq] through the forward model at the
/// launch power (noiseless), applies CDC, matched filtering and per-polarization
/// mean phase removal, and sums |y - s|^2 over the seq portion. Symbols are
/// unit-mean-energy per 2D; the launch scale is fixed, not renormalized per block.
double metric_nli(const Symbols4D& seq, const Symbols4D& context, const LinkConfig& link, double power_dbm,
                  const ForwardModelConfig& model, const PulseConfig& pulse);

/// Same computation with a fine logarithmic-step SSFM at 2 samples/symbol.
double metric_nli_ideal(const Symbols4D& seq, const Symbols4D& context, const LinkConfig& link, double power_dbm,
                        int steps_per_span, const PulseConfig& pulse);

/// Variance of the sliding-window sums of 4D symbol energy.
double metric_energy_var(const Symbols4D& seq, int window_len);

/// Fits the forward-model coefficients against a fine noiseless SSFM reference
/// on a random shaped training sequence at the given launch power.
std::vector<double> train_forward_model(const LinkConfig& link, const PulseConfig& pulse, double power_dbm,
                                        const ForwardModelConfig& model, std::uint64_t seed,
                                        std::size_t n_symbols = 4096);

using MetricFn = std::function<double(const Symbols4D& seq, const Symbols4D& context)>;

/// Metric bound to a link and launch power (trains the forward model if requested).
MetricFn make_metric(const SelectionConfig& cfg, const LinkConfig& link, const PulseConfig& pulse,
                     double power_dbm, std::uint64_t seed);

struct FrameSelection
{
  int index = 0;
  double metric_selected = 0.0;
  double metric_first = 0.0;  // candidate 0, i.e. plain PAS
  double metric_mean = 0.0;
};

struct SelectionRun
{
  Symbols4D symbols;
  std::vector<int> amplitudes;
  Bits sign_bits;
  std::vector<FrameSelection> frames;
};

/// Frame-by-frame selection; the context of each frame is the tail of the
/// previously selected frames (zeros before the first).
SelectionRun select_frames(const std::vector<Bits>& frame_info, const PasFramer& framer, const SelectionConfig& cfg,
                           const MetricFn& metric, std::uint64_t master_seed);

} // namespace fiberlab
