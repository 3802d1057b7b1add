#pragma once

#include "fiberlab/channel.hpp"
#include "fiberlab/dbp.hpp"
#include "fiberlab/rxdsp.hpp"
#include "fiberlab/seqsel.hpp"
#include "fiberlab/shaping.hpp"
#include "fiberlab/signal.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace fiberlab {

enum class Modulation { u64qam, pas_mb, pas_ess, pas_ess_sel_bs, pas_ess_sel_ideal };
enum class CprMethod { mean_phase, bps };

std::string to_string(Modulation m);
Modulation modulation_from_string(const std::string& s);
std::string to_string(CprMethod m);
CprMethod cpr_method_from_string(const std::string& s);
bool uses_selection(Modulation m);

struct WdmConfig
{
  int channels = 1;
  double spacing_hz = 50e9;
};

struct CprSettings
{
  CprMethod method = CprMethod::mean_phase;
  CprConfig bps{};
};

struct ExperimentConfig
{
  LinkConfig link{};
  StepPlan plan{};                 // forward channel step plan
  PulseConfig pulse{};             // samples_per_symbol is ignored; rates are derived
  WdmConfig wdm{};
  Modulation modulation = Modulation::u64qam;
  DmConfig shaping{DmKind::ess, 256, 332, 0, {}, 0.0, {}};
  SelectionConfig selection{};
  DbpConfig dbp{};
  bool train_dbp = true;           // train ESSFM coefficients when none are given
  std::size_t training_symbols = 16384;
  CprSettings cpr{};
  double linewidth_hz = 0.0;       // per laser (TX and RX)
  std::vector<double> power_sweep_dbm{-4, -3, -2, -1, 0, 1, 2, 3, 4, 5, 6};
  std::size_t n_symbols = 65536;
  std::uint64_t master_seed = 1;

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing keys take defaults; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// Byte-deterministic serialization of everything that affects a single point
/// (the power grid is excluded; the power is part of each record).
std::string canonical_config(const ExperimentConfig& cfg);
/// 16 hex digits of FNV-1a over canonical_config.
std::string config_hash(const ExperimentConfig& cfg);

struct ResultRecord
{
  std::string config_hash;
  std::string modulation;
  double power_dbm = 0.0;
  std::uint64_t seed = 0;
  double se_bits_s_hz = 0.0;
  double air_4d = 0.0;
  double effective_snr_db = 0.0;
  double rm_per_2d = 0.0;
  double wall_time_s = 0.0;
  // Extensions.
  std::string dbp_engine;
  int dbp_steps = 0;
  int channels = 1;
  std::string cpr;
  double linewidth_hz = 0.0;
  double net_rate_4d = 0.0;        // after DM and selection rate losses
  double selection_loss_4d = 0.0;
  double se_gross_bits_s_hz = 0.0; // without the selection rate loss
  int sel_frames = 0;
  int sel_strict_frames = 0;       // frames whose selected metric is below candidate 0
  double sel_metric_ratio = 0.0;   // mean selected / mean candidate-0 metric
  std::string status = "ok";
  std::string message;
  bool cached = false;
  std::vector<FrameSelection> frames;
};

/// Transmit data of the channel under test.
struct TxData
{
  Symbols4D symbols;                  // unit mean energy per 2D under amplitude_priors
  std::vector<int> amplitudes;
  std::vector<double> amplitude_priors;
  RateAccounting rates;
  double selection_loss_4d = 0.0;
  std::vector<FrameSelection> frames;
};

struct RunContext
{
  std::string cache_dir;              // empty: no on-disk caching
};

/// Cache directory from FIBERLAB_CACHE_DIR (empty if unset).
std::string default_cache_dir();

TxData make_tx(const ExperimentConfig& cfg, double power_dbm, std::uint64_t seed, const RunContext& ctx = {});

struct LinkRun
{
  TxData tx;
  Signal rx;              // channel under test after demux, at the DBP sample rate
  double launch_scale = 1.0;
};

/// Transmitter + WDM channel + demux; memoized per (config, power, seed).
std::shared_ptr<const LinkRun> simulate_link(const ExperimentConfig& cfg, double power_dbm, std::uint64_t seed,
                                             const RunContext& ctx = {});

/// Drops the in-process link, selection and training memos.
void clear_simulation_cache();

struct ReceiverOutput
{
  Symbols4D rx;           // after equalization and phase recovery, in tx units
  AirReport air;
  DbpConfig dbp;          // configuration actually applied (trained coefficients)
  ComplexityReport complexity;
};

ReceiverOutput receive(const ExperimentConfig& cfg, const LinkRun& link_run, double power_dbm, std::uint64_t seed,
                       const RunContext& ctx = {});

/// ESSFM coefficients trained on a dedicated training run; memoized and cached.
TrainingResult dbp_training(const ExperimentConfig& cfg, double power_dbm, const RunContext& ctx = {});

/// Full point; served from the on-disk cache when available.
ResultRecord run_point(const ExperimentConfig& cfg, double power_dbm, std::uint64_t seed, const RunContext& ctx = {});

struct SweepOptions
{
  std::vector<std::uint64_t> seeds{1};
  std::vector<int> dbp_steps;         // optional DBP step grid
  int jobs = 1;
  RunContext context{};
};

struct SweepResult
{
  std::vector<ResultRecord> records;
  std::map<std::string, std::string> snapshots;  // config hash -> canonical config
};

/// Points that throw are recorded with status "error"; the sweep continues.
SweepResult run_sweep(const ExperimentConfig& cfg, const SweepOptions& opts);

struct PeakEstimate
{
  double power_dbm = 0.0;
  double se_bits_s_hz = 0.0;
  bool interior = false;
};

/// Maximum over the grid refined by a parabola through the top point and its neighbours.
PeakEstimate peak_se(const std::vector<double>& powers, const std::vector<double>& se);

inline constexpr int results_schema_version = 1;
std::vector<std::string> results_columns();
std::string format_results_csv(const std::vector<ResultRecord>& records);
std::vector<ResultRecord> parse_results_csv(const std::string& text);

/// Writes results.csv, selection.csv, per-modulation series files, peak.csv
/// and config snapshots into out_dir.
void emit_report(const std::vector<ResultRecord>& records, const std::string& out_dir,
                 const std::map<std::string, std::string>& snapshots = {});

} // namespace fiberlab
