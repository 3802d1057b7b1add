#include "fiberlab/seqsel.hpp"

#include "fiberlab/dbp.hpp"
#include "fiberlab/optimize.hpp"
#include "fiberlab/random.hpp"
#include "fiberlab/rxdsp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace fiberlab {

std::string to_string(SelectionMetric m)
{
  switch (m) {
  case SelectionMetric::nli_cbessfm: return "nli_cbessfm";
  case SelectionMetric::nli_ideal: return "nli_ideal";
  case SelectionMetric::energy_var: return "energy_var";
  }
  return "unknown";
}

SelectionMetric selection_metric_from_string(const std::string& s)
{
  if (s == "nli_cbessfm") return SelectionMetric::nli_cbessfm;
  if (s == "nli_ideal") return SelectionMetric::nli_ideal;
  if (s == "energy_var") return SelectionMetric::energy_var;
  throw std::invalid_argument("unknown selection metric: " + s);
}

void ForwardModelConfig::validate() const
{
  if (n_steps < 1) throw std::invalid_argument("forward model: n_steps must be >= 1");
  if (n_coeffs < 0) throw std::invalid_argument("forward model: n_coeffs must be >= 0");
  if (!coeffs.empty() && coeffs.size() != static_cast<std::size_t>(n_coeffs) + 1)
    throw std::invalid_argument("forward model: coefficient vector must have n_coeffs + 1 entries");
  if (!(samples_per_symbol >= 1.0)) throw std::invalid_argument("forward model: samples_per_symbol must be >= 1");
}

void SelectionConfig::validate() const
{
  if (n_candidates < 1 || (n_candidates & (n_candidates - 1)) != 0)
    throw std::invalid_argument("selection: n_candidates must be a power of two");
  if (seq_len_4d < 1) throw std::invalid_argument("selection: seq_len_4d must be positive");
  if (context_len_4d < 0) throw std::invalid_argument("selection: context_len_4d must be non-negative");
  if (ideal_steps_per_span < 1) throw std::invalid_argument("selection: ideal_steps_per_span must be positive");
  if (energy_window < 1) throw std::invalid_argument("selection: energy_window must be positive");
  model.validate();
}

int SelectionConfig::index_bits() const
{
  int b = 0;
  while ((1 << b) < n_candidates) ++b;
  return b;
}

double rate_loss(const SelectionConfig& cfg)
{
  cfg.validate();
  return static_cast<double>(cfg.index_bits()) / cfg.seq_len_4d;
}

Bits scramble_mask(std::size_t n_bits, std::uint64_t master_seed, int index)
{
  Bits mask(n_bits, 0);
  if (index == 0) return mask;
  for (std::size_t w = 0; w * 64 < n_bits; ++w) {
    const std::uint64_t word = rng::splitmix64(rng::derive(
        master_seed, {static_cast<std::uint64_t>(rng::Role::scramble_mask), static_cast<std::uint64_t>(index), w}));
    for (std::size_t b = 0; b < 64 && w * 64 + b < n_bits; ++b) mask[w * 64 + b] = (word >> b) & 1U;
  }
  return mask;
}

std::size_t selection_info_bits(const PasFramer& framer, const SelectionConfig& cfg)
{
  return framer.frame_bits() - static_cast<std::size_t>(cfg.index_bits());
}

namespace {

void check_framer(const PasFramer& framer, const SelectionConfig& cfg)
{
  cfg.validate();
  if (framer.n_symbols() != cfg.seq_len_4d)
    throw std::invalid_argument("selection: framer length differs from seq_len_4d");
}

} // namespace

ShapingFrame build_candidate(const Bits& info_bits, const PasFramer& framer, const SelectionConfig& cfg,
                             std::uint64_t master_seed, int index)
{
  check_framer(framer, cfg);
  const std::size_t n_info = selection_info_bits(framer, cfg);
  if (info_bits.size() != n_info)
    throw std::invalid_argument("generate_candidates: expected " + std::to_string(n_info) + " information bits");
  if (index < 0 || index >= cfg.n_candidates) throw std::out_of_range("build_candidate: index out of range");
  const std::size_t amp_bits = framer.amplitude_bits();
  const int ib = cfg.index_bits();
  const Bits mask = scramble_mask(n_info, master_seed, index);
  Bits frame(framer.frame_bits());
  std::size_t src = 0, dst = 0;
  for (; src < amp_bits; ++src) frame[dst++] = info_bits[src] ^ mask[src];
  for (int b = ib - 1; b >= 0; --b) frame[dst++] = static_cast<std::uint8_t>((index >> b) & 1);
  for (; src < n_info; ++src) frame[dst++] = info_bits[src] ^ mask[src];
  return framer.encode(frame);
}

CandidateSet generate_candidates(const Bits& info_bits, const PasFramer& framer, const SelectionConfig& cfg,
                                 std::uint64_t master_seed)
{
  CandidateSet set;
  set.candidates.reserve(static_cast<std::size_t>(cfg.n_candidates));
  for (int i = 0; i < cfg.n_candidates; ++i) set.candidates.push_back(build_candidate(info_bits, framer, cfg, master_seed, i));
  return set;
}

Bits recover_info_bits(const Bits& frame_bits, const PasFramer& framer, const SelectionConfig& cfg,
                       std::uint64_t master_seed)
{
  check_framer(framer, cfg);
  if (frame_bits.size() != framer.frame_bits()) throw std::invalid_argument("recover_info_bits: wrong frame size");
  const std::size_t amp_bits = framer.amplitude_bits();
  const int ib = cfg.index_bits();
  int index = 0;
  for (int b = 0; b < ib; ++b) index = (index << 1) | frame_bits[amp_bits + static_cast<std::size_t>(b)];
  const std::size_t n_info = selection_info_bits(framer, cfg);
  const Bits mask = scramble_mask(n_info, master_seed, index);
  Bits info(n_info);
  for (std::size_t i = 0, j = 0; i < frame_bits.size(); ++i) {
    if (i >= amp_bits && i < amp_bits + static_cast<std::size_t>(ib)) continue;
    info[j] = frame_bits[i] ^ mask[j];
    ++j;
  }
  return info;
}

Selection select(CandidateSet& set)
{
  if (set.candidates.empty() || set.metrics.size() != set.candidates.size())
    throw std::invalid_argument("select: empty candidate set or missing metrics");
  std::size_t best = 0;
  for (std::size_t i = 1; i < set.metrics.size(); ++i)
    if (set.metrics[i] < set.metrics[best]) best = i;
  set.scramble_index = static_cast<int>(best);
  return {static_cast<int>(best), &set.candidates[best]};
}

namespace {

Symbols4D concat(const Symbols4D& a, const Symbols4D& b)
{
  Symbols4D out = a;
  out.x.insert(out.x.end(), b.x.begin(), b.x.end());
  out.y.insert(out.y.end(), b.y.begin(), b.y.end());
  return out;
}

// Launch scale for unit-energy-per-2D symbols: total power 2 -> P.
double launch_scale(double power_dbm) { return std::sqrt(dbm_to_watt(power_dbm) / 2.0); }

double seq_error(const Symbols4D& rx_all, const Symbols4D& seq, std::size_t offset)
{
  Symbols4D rx;
  rx.x.assign(rx_all.x.begin() + static_cast<std::ptrdiff_t>(offset), rx_all.x.end());
  rx.y.assign(rx_all.y.begin() + static_cast<std::ptrdiff_t>(offset), rx_all.y.end());
  const Symbols4D r = mean_phase_remove(rx, seq);
  double err = 0.0;
  for (std::size_t k = 0; k < seq.size(); ++k) err += std::norm(r.x[k] - seq.x[k]) + std::norm(r.y[k] - seq.y[k]);
  return err;
}

Symbols4D model_output(const Symbols4D& symbols, const LinkConfig& link, double power_dbm,
                       const ForwardModelConfig& model, const std::vector<double>& coeffs, const PulseConfig& pulse)
{
  PulseConfig mp = pulse;
  mp.samples_per_symbol = model.samples_per_symbol;
  const double a = launch_scale(power_dbm);
  const Signal tx = scale(rrc_shape(symbols, mp), a);
  DbpConfig d;
  d.engine = DbpEngine::essfm;
  d.n_steps = model.n_steps;
  d.n_coeffs = model.n_coeffs;
  d.coeffs = coeffs;
  d.samples_per_symbol = model.samples_per_symbol;
  const Signal rx = cdc(essfm_forward(tx, link, d), link);
  Symbols4D y = matched_filter_sample(rx, mp);
  for (auto& v : y.x) v /= a;
  for (auto& v : y.y) v /= a;
  return y;
}

std::vector<double> ssfm_equivalent(const LinkConfig& link, const ForwardModelConfig& model)
{
  std::vector<double> c(static_cast<std::size_t>(model.n_coeffs) + 1, 0.0);
  c[0] = ssfm_step_weight(link, model.n_steps);
  return c;
}

Symbols4D fine_reference(const Symbols4D& symbols, const LinkConfig& link, double power_dbm, int steps_per_span,
                         const PulseConfig& pulse)
{
  PulseConfig fp = pulse;
  fp.samples_per_symbol = 2.0;
  const double a = launch_scale(power_dbm);
  LinkConfig quiet = link;
  quiet.ase = false;
  StepPlan plan;
  plan.steps_per_span = steps_per_span;
  plan.spacing = StepSpacing::logarithmic;
  const Signal rx = cdc(ssfm_forward(scale(rrc_shape(symbols, fp), a), quiet, plan, 0), quiet);
  Symbols4D y = matched_filter_sample(rx, fp);
  for (auto& v : y.x) v /= a;
  for (auto& v : y.y) v /= a;
  return y;
}

} // namespace

double metric_nli(const Symbols4D& seq, const Symbols4D& context, const LinkConfig& link, double power_dbm,
                  const ForwardModelConfig& model, const PulseConfig& pulse)
{
  model.validate();
  if (seq.empty()) throw std::invalid_argument("metric_nli: empty sequence");
  const auto coeffs = model.coeffs.empty() ? ssfm_equivalent(link, model) : model.coeffs;
  const Symbols4D rx = model_output(concat(context, seq), link, power_dbm, model, coeffs, pulse);
  return seq_error(rx, seq, context.size());
}

double metric_nli_ideal(const Symbols4D& seq, const Symbols4D& context, const LinkConfig& link, double power_dbm,
                        int steps_per_span, const PulseConfig& pulse)
{
  if (seq.empty()) throw std::invalid_argument("metric_nli_ideal: empty sequence");
  const Symbols4D rx = fine_reference(concat(context, seq), link, power_dbm, steps_per_span, pulse);
  return seq_error(rx, seq, context.size());
}

double metric_energy_var(const Symbols4D& seq, int window_len)
{
  if (window_len < 1) throw std::invalid_argument("metric_energy_var: window_len must be >= 1");
  const std::size_t n = seq.size();
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(window_len), n);
  if (n == 0) return 0.0;
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + std::norm(seq.x[k]) + std::norm(seq.y[k]);
  const std::size_t m = n - w + 1;
  double mean = 0.0;
  for (std::size_t j = 0; j < m; ++j) mean += prefix[j + w] - prefix[j];
  mean /= static_cast<double>(m);
  double var = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double d = prefix[j + w] - prefix[j] - mean;
    var += d * d;
  }
  return var / static_cast<double>(m);
}

std::vector<double> train_forward_model(const LinkConfig& link, const PulseConfig& pulse, double power_dbm,
                                        const ForwardModelConfig& model, std::uint64_t seed, std::size_t n_symbols)
{
  model.validate();
  // Shaped training sequence (MB amplitudes at 1.3 bit, uniform signs).
  const AmplitudeAlphabet alphabet;
  const double nu = mb_fit_nu(1.3, alphabet);
  const auto amps = mb_sample(nu, 4 * n_symbols, rng::derive(seed, rng::Role::training, 0), alphabet);
  const Bits signs = rng::random_bits(4 * n_symbols, rng::derive(seed, rng::Role::training, 1));
  const Symbols4D sym = pas_map(amps, signs, pas_energy_norm(mb_distribution(nu, alphabet), alphabet));
  const Symbols4D ref = fine_reference(sym, link, power_dbm, 20, pulse);
  const double ref_energy = energy(ref);

  const double w = ssfm_step_weight(link, model.n_steps);
  const std::size_t nc = static_cast<std::size_t>(model.n_coeffs);
  auto objective = [&](const std::vector<double>& theta) {
    std::vector<double> c(nc + 1);
    for (std::size_t i = 0; i <= nc; ++i) c[i] = theta[i] * w;
    const Symbols4D out = mean_phase_remove(model_output(sym, link, power_dbm, model, c, pulse), ref);
    double err = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) err += std::norm(out.x[k] - ref.x[k]) + std::norm(out.y[k] - ref.y[k]);
    return err / ref_energy;
  };
  std::vector<double> theta0(nc + 1, 0.0);
  theta0[0] = 1.0;
  const OptimizeResult r = minimize_bfgs(objective, theta0);
  std::vector<double> c(nc + 1);
  for (std::size_t i = 0; i <= nc; ++i) c[i] = r.x[i] * w;
  return c;
}

MetricFn make_metric(const SelectionConfig& cfg, const LinkConfig& link, const PulseConfig& pulse, double power_dbm,
                     std::uint64_t seed)
{
  cfg.validate();
  switch (cfg.metric) {
  case SelectionMetric::energy_var: {
    const int w = cfg.energy_window;
    return [w](const Symbols4D& seq, const Symbols4D&) { return metric_energy_var(seq, w); };
  }
  case SelectionMetric::nli_ideal: {
    const int steps = cfg.ideal_steps_per_span;
    return [=](const Symbols4D& seq, const Symbols4D& ctx) {
      return metric_nli_ideal(seq, ctx, link, power_dbm, steps, pulse);
    };
  }
  case SelectionMetric::nli_cbessfm: {
    ForwardModelConfig model = cfg.model;
    if (model.coeffs.empty())
      model.coeffs = model.train
                         ? train_forward_model(link, pulse, power_dbm, model, rng::derive(seed, rng::Role::metric_training))
                         : ssfm_equivalent(link, model);
    return [=](const Symbols4D& seq, const Symbols4D& ctx) {
      return metric_nli(seq, ctx, link, power_dbm, model, pulse);
    };
  }
  }
  throw std::invalid_argument("make_metric: unknown metric");
}

SelectionRun select_frames(const std::vector<Bits>& frame_info, const PasFramer& framer, const SelectionConfig& cfg,
                           const MetricFn& metric, std::uint64_t master_seed)
{
  check_framer(framer, cfg);
  SelectionRun run;
  const std::size_t ctx_len = static_cast<std::size_t>(cfg.context_len_4d);
  for (const Bits& info : frame_info) {
    CandidateSet set = generate_candidates(info, framer, cfg, master_seed);
    Symbols4D ctx;
    ctx.x.assign(ctx_len, cplx{});
    ctx.y.assign(ctx_len, cplx{});
    const std::size_t have = std::min(ctx_len, run.symbols.size());
    for (std::size_t k = 0; k < have; ++k) {
      ctx.x[ctx_len - have + k] = run.symbols.x[run.symbols.size() - have + k];
      ctx.y[ctx_len - have + k] = run.symbols.y[run.symbols.size() - have + k];
    }
    set.metrics.reserve(set.candidates.size());
    for (const auto& c : set.candidates) set.metrics.push_back(metric(c.symbols, ctx));
    const Selection s = select(set);
    FrameSelection fs;
    fs.index = s.index;
    fs.metric_selected = set.metrics[static_cast<std::size_t>(s.index)];
    fs.metric_first = set.metrics.front();
    fs.metric_mean = std::accumulate(set.metrics.begin(), set.metrics.end(), 0.0) / static_cast<double>(set.metrics.size());
    run.frames.push_back(fs);
    const ShapingFrame& f = *s.frame;
    run.symbols.x.insert(run.symbols.x.end(), f.symbols.x.begin(), f.symbols.x.end());
    run.symbols.y.insert(run.symbols.y.end(), f.symbols.y.begin(), f.symbols.y.end());
    run.amplitudes.insert(run.amplitudes.end(), f.amplitudes.begin(), f.amplitudes.end());
    run.sign_bits.insert(run.sign_bits.end(), f.sign_bits.begin(), f.sign_bits.end());
  }
  return run;
}

} // namespace fiberlab
