#include "fiberlab/dbp.hpp"

#include "fiberlab/fft.hpp"
#include "fiberlab/rxdsp.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace fiberlab {

std::string to_string(DbpEngine e)
{
  switch (e) {
  case DbpEngine::cdc: return "cdc";
  case DbpEngine::ssfm: return "ssfm";
  case DbpEngine::essfm: return "essfm";
  case DbpEngine::cb_essfm: return "cb_essfm";
  }
  return "unknown";
}

DbpEngine dbp_engine_from_string(const std::string& s)
{
  if (s == "cdc") return DbpEngine::cdc;
  if (s == "ssfm") return DbpEngine::ssfm;
  if (s == "essfm") return DbpEngine::essfm;
  if (s == "cb_essfm") return DbpEngine::cb_essfm;
  throw std::invalid_argument("unknown DBP engine: " + s);
}

void DbpConfig::validate() const
{
  if (n_steps < 0)
    throw std::invalid_argument("DbpConfig: n_steps must be >= 0");
  if (engine != DbpEngine::cdc && n_steps < 1)
    throw std::invalid_argument("DbpConfig: backpropagation needs n_steps >= 1");
  if (n_coeffs < 0)
    throw std::invalid_argument("DbpConfig: n_coeffs must be >= 0");
  if (!coeffs.empty() && coeffs.size() != static_cast<std::size_t>(n_coeffs) + 1)
    throw std::invalid_argument("DbpConfig: coefficient vector must have n_coeffs + 1 entries");
  if (!(split_ratio >= 0.0 && split_ratio <= 1.0))
    throw std::invalid_argument("DbpConfig: split_ratio outside [0, 1]");
  if (!(samples_per_symbol >= 1.0))
    throw std::invalid_argument("DbpConfig: samples_per_symbol must be >= 1");
  if (fft_block < 0 || overlap < 0)
    throw std::invalid_argument("DbpConfig: negative block/overlap");
  if (fft_block > 0 && overlap >= fft_block)
    throw std::invalid_argument("DbpConfig: overlap must be smaller than the FFT block");
}

double dispersion_memory(const LinkConfig& link, double length, double sample_rate)
{
  return 2.0 * phys::pi * std::abs(link.beta2()) * std::abs(length) * sample_rate * sample_rate;
}

int required_overlap(const LinkConfig& link, double length, double sample_rate)
{
  int o = static_cast<int>(std::ceil(dispersion_memory(link, length, sample_rate) - 1e-9));
  if (o % 2)
    ++o;
  return o;
}

StepSchedule dbp_schedule(const LinkConfig& link, int n_steps, double split_ratio)
{
  if (n_steps < 1)
    throw std::invalid_argument("dbp_schedule: n_steps must be >= 1");
  StepSchedule sched;
  sched.split_ratio = split_ratio;
  const double total = link.length_m();
  const double h = total / n_steps;
  const double g = link.gamma() * manakov_factor;
  for (int i = 0; i < n_steps; ++i) {
    const double z0 = h * i;
    const double z1 = i + 1 == n_steps ? total : h * (i + 1);
    sched.lengths.push_back(z1 - z0);
    sched.taps.push_back({g * link.power_integral(z0, z1)});
  }
  return sched;
}

double ssfm_step_weight(const LinkConfig& link, int n_steps)
{
  return link.gamma() * manakov_factor * link.power_integral(0.0, link.length_m()) / n_steps;
}

OverlapSaveFilter::OverlapSaveFilter(const CVec& response_on_block_grid, int overlap)
    : response_(response_on_block_grid), overlap_(overlap)
{
  const int n = static_cast<int>(response_.size());
  if (overlap < 0 || overlap % 2 || overlap >= n)
    throw std::invalid_argument("OverlapSaveFilter: overlap must be even and smaller than the block");
}

CVec OverlapSaveFilter::apply(const CVec& in) const
{
  const std::size_t m = in.size();
  const std::size_t n = response_.size();
  const std::size_t half = static_cast<std::size_t>(overlap_) / 2;
  const std::size_t useful = n - static_cast<std::size_t>(overlap_);
  CVec out(m);
  CVec seg(n);
  for (std::size_t start = 0; start < m; start += useful) {
    for (std::size_t j = 0; j < n; ++j)
      seg[j] = in[(start + m * (n / m + 2) + j - half) % m];
    fft::forward(seg);
    for (std::size_t j = 0; j < n; ++j)
      seg[j] *= response_[j];
    fft::inverse(seg);
    for (std::size_t j = 0; j < useful && start + j < m; ++j)
      out[start + j] = seg[half + j];
  }
  return out;
}

namespace {

CVec dispersion_response(std::size_t n, double sample_rate, double beta2, double length)
{
  CVec h(n);
  const double df = sample_rate / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double w = 2.0 * phys::pi * static_cast<double>(fft::signed_bin(k, n)) * df;
    h[k] = std::polar(1.0, 0.5 * beta2 * length * w * w);
  }
  return h;
}

// Time-domain split-step run with overlap-save linear steps.
void run_overlap_save(Signal& sig, const StepSchedule& sched, Direction dir, const LinkConfig& link,
                      const DbpConfig& cfg)
{
  const double sign = dir == Direction::forward ? 1.0 : -1.0;
  const double s = sched.split_ratio;
  const std::size_t k_steps = sched.lengths.size();
  std::map<double, OverlapSaveFilter> filters;
  auto filter_for = [&](double length) -> const OverlapSaveFilter& {
    auto it = filters.find(length);
    if (it != filters.end())
      return it->second;
    const int needed = required_overlap(link, length, sig.sample_rate);
    const int overlap = cfg.overlap > 0 ? cfg.overlap : needed;
    if (overlap < needed || overlap >= cfg.fft_block)
      throw std::invalid_argument("backpropagation: step filter longer than the FFT block overlap");
    return filters
        .emplace(length, OverlapSaveFilter(dispersion_response(static_cast<std::size_t>(cfg.fft_block),
                                                               sig.sample_rate, link.beta2(), length),
                                           overlap))
        .first->second;
  };
  auto linear = [&](double length) {
    if (length == 0.0)
      return;
    const auto& f = filter_for(sign * length);
    sig.x = f.apply(sig.x);
    sig.y = f.apply(sig.y);
  };

  double pending = 0.0;
  for (std::size_t idx = 0; idx < k_steps; ++idx) {
    const std::size_t i = dir == Direction::forward ? idx : k_steps - 1 - idx;
    const double h = sched.lengths[i];
    const double pre = dir == Direction::forward ? s * h : (1.0 - s) * h;
    pending += pre;
    linear(pending);
    apply_nonlinear_phase(sig.x, sig.y, sched.taps[i], sign);
    pending = h - pre;
  }
  linear(pending);
}

Signal run_schedule(const Signal& sig, const StepSchedule& sched, Direction dir, const LinkConfig& link,
                    const DbpConfig& cfg)
{
  Signal out = sig;
  if (cfg.fft_block > 0) {
    run_overlap_save(out, sched, dir, link, cfg);
  } else {
    SplitStepEngine engine(link.beta2());
    engine.run(out, sched, dir);
  }
  return out;
}

StepSchedule essfm_schedule(const LinkConfig& link, const DbpConfig& cfg)
{
  if (cfg.engine != DbpEngine::essfm && cfg.engine != DbpEngine::cb_essfm)
    throw std::invalid_argument("essfm: engine must be essfm or cb_essfm");
  if (cfg.coeffs.size() != static_cast<std::size_t>(cfg.n_coeffs) + 1)
    throw std::invalid_argument("essfm: missing or wrong-length coefficient vector");
  StepSchedule sched = dbp_schedule(link, cfg.n_steps, cfg.split_ratio);
  for (auto& t : sched.taps)
    t = cfg.coeffs;
  return sched;
}

} // namespace

Signal cdc(const Signal& sig, const LinkConfig& link)
{
  sig.validate();
  Signal out = sig;
  SplitStepEngine engine(link.beta2(), 0);
  fft::forward(out.x);
  fft::forward(out.y);
  engine.disperse(out.x, out.sample_rate, -link.length_m());
  engine.disperse(out.y, out.sample_rate, -link.length_m());
  fft::inverse(out.x);
  fft::inverse(out.y);
  return out;
}

Signal dbp_ssfm(const Signal& sig, const LinkConfig& link, const DbpConfig& cfg)
{
  sig.validate();
  link.validate();
  cfg.validate();
  if (cfg.n_steps < 1)
    throw std::invalid_argument("dbp_ssfm: n_steps must be >= 1");
  return run_schedule(sig, dbp_schedule(link, cfg.n_steps, cfg.split_ratio), Direction::backward, link, cfg);
}

Signal essfm_backprop(const Signal& sig, const LinkConfig& link, const DbpConfig& cfg)
{
  sig.validate();
  link.validate();
  cfg.validate();
  return run_schedule(sig, essfm_schedule(link, cfg), Direction::backward, link, cfg);
}

Signal essfm_forward(const Signal& sig, const LinkConfig& link, const DbpConfig& cfg)
{
  sig.validate();
  link.validate();
  cfg.validate();
  return run_schedule(sig, essfm_schedule(link, cfg), Direction::forward, link, cfg);
}

Signal backpropagate(const Signal& sig, const LinkConfig& link, const DbpConfig& cfg)
{
  switch (cfg.engine) {
  case DbpEngine::cdc: return cdc(sig, link);
  case DbpEngine::ssfm: return dbp_ssfm(sig, link, cfg);
  case DbpEngine::essfm:
  case DbpEngine::cb_essfm: {
    if (cfg.coeffs.empty()) {
      DbpConfig c = cfg;
      c.coeffs.assign(static_cast<std::size_t>(c.n_coeffs) + 1, 0.0);
      c.coeffs[0] = ssfm_step_weight(link, c.n_steps);
      return essfm_backprop(sig, link, c);
    }
    return essfm_backprop(sig, link, cfg);
  }
  }
  throw std::invalid_argument("backpropagate: unknown engine");
}

TrainingResult train_essfm(const Symbols4D& tx_symbols, const Signal& rx_signal, const LinkConfig& link,
                           const DbpConfig& cfg, const PulseConfig& pulse, TrainOptions opts)
{
  cfg.validate();
  if (cfg.engine != DbpEngine::essfm && cfg.engine != DbpEngine::cb_essfm)
    throw std::invalid_argument("train_essfm: engine must be essfm or cb_essfm");
  if (tx_symbols.size() < opts.min_symbols)
    throw std::invalid_argument("train_essfm: training sequence too short");
  const bool train_split = opts.train_split || cfg.engine == DbpEngine::cb_essfm;
  const std::size_t nc = static_cast<std::size_t>(cfg.n_coeffs);
  const double w = ssfm_step_weight(link, cfg.n_steps);
  const double tx_energy = energy(tx_symbols);

  DbpConfig work = cfg;
  auto unpack = [&](const std::vector<double>& theta) {
    work.coeffs.assign(nc + 1, 0.0);
    for (std::size_t i = 0; i <= nc; ++i)
      work.coeffs[i] = theta[i] * w;
    work.split_ratio = train_split ? std::clamp(theta[nc + 1], 0.0, 1.0) : cfg.split_ratio;
  };
  auto objective = [&](const std::vector<double>& theta) {
    unpack(theta);
    const Signal eq = essfm_backprop(rx_signal, link, work);
    const Symbols4D rx = mean_phase_remove(matched_filter_sample(eq, pulse), tx_symbols);
    double err = 0.0;
    for (std::size_t k = 0; k < rx.size(); ++k)
      err += std::norm(rx.x[k] - tx_symbols.x[k]) + std::norm(rx.y[k] - tx_symbols.y[k]);
    return err / tx_energy;
  };

  std::vector<double> theta0(nc + 1, 0.0);
  theta0[0] = 1.0;
  if (train_split)
    theta0.push_back(cfg.split_ratio);
  const OptimizeResult opt = minimize_bfgs(objective, theta0, opts.optimizer);

  TrainingResult r;
  unpack(opt.x);
  r.coeffs = work.coeffs;
  r.split_ratio = work.split_ratio;
  r.mse = opt.value;
  r.initial_mse = opt.initial_value;
  r.evaluations = opt.evaluations;
  r.converged = opt.converged;
  return r;
}

ComplexityReport complexity_rm2d(const DbpConfig& cfg, const LinkConfig& link, double symbol_rate)
{
  cfg.validate();
  ComplexityReport rep;
  const double sps = cfg.samples_per_symbol;
  const double fs = sps * symbol_rate;
  const bool nonlinear = cfg.engine != DbpEngine::cdc && cfg.n_steps > 0;
  const int filters = nonlinear ? cfg.n_steps : 1;
  const double filter_length = link.length_m() / filters;
  const int overlap = cfg.overlap > 0 ? cfg.overlap : required_overlap(link, filter_length, fs);
  // The even-integer overlap drops in steps of 2 samples as the step count grows, which would
  // make the total cost dip; counting the unrounded memory keeps it monotone.
  const double memory = cfg.overlap > 0 ? cfg.overlap : dispersion_memory(link, filter_length, fs);
  constexpr double cm = ComplexityReport::rm_per_complex_multiply;

  // Per useful sample and polarization: FFT + IFFT and N pointwise products per block.
  auto fft_cost = [&](int n) { return cm * 2.0 * (n / 2.0) * std::log2(static_cast<double>(n)) / (n - memory); };
  auto pointwise_cost = [&](int n) { return cm * n / static_cast<double>(n - memory); };

  int block = cfg.fft_block;
  if (block == 0) {
    double best = 0.0;
    for (int n = 2; n <= (1 << 22); n *= 2) {
      if (n <= overlap)
        continue;
      const double c = fft_cost(n) + pointwise_cost(n);
      if (block == 0 || c < best) {
        best = c;
        block = n;
      }
    }
  } else if (block <= overlap) {
    throw std::invalid_argument("complexity_rm2d: FFT block must exceed the overlap");
  }
  rep.fft_block = block;
  rep.overlap = overlap;
  rep.memory = memory;

  // Per sample (both polarizations), then per symbol, then per 2D symbol.
  const double to_2d = sps / 2.0;
  rep.fft = filters * 2.0 * fft_cost(block) * to_2d;
  rep.pointwise = filters * 2.0 * pointwise_cost(block) * to_2d;
  if (nonlinear) {
    const int nc = cfg.engine == DbpEngine::ssfm ? 0 : cfg.n_coeffs;
    rep.power_filter = cfg.n_steps * (2.0 * nc + 1.0) * to_2d;
    rep.power = cfg.n_steps * 2.0 * 2.0 * to_2d;
    rep.rotation = cfg.n_steps * 2.0 * cm * to_2d;
  }
  rep.rm_per_2d = rep.fft + rep.pointwise + rep.power_filter + rep.power + rep.rotation;
  return rep;
}

} // namespace fiberlab
