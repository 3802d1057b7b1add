#include "fiberlab/channel.hpp"

#include "fiberlab/fft.hpp"
#include "fiberlab/random.hpp"
#include "fiberlab/signal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fiberlab {

void LinkConfig::validate() const
{
  if (n_spans < 1)
    throw std::invalid_argument("LinkConfig: n_spans must be >= 1");
  if (!(span_km > 0.0) || !(wavelength_nm > 0.0))
    throw std::invalid_argument("LinkConfig: span length and wavelength must be positive");
  if (alpha_db_km < 0.0 || gamma_w_km < 0.0 || nf_db < 0.0 || !std::isfinite(disp_ps_nm_km))
    throw std::invalid_argument("LinkConfig: invalid physical parameter");
}

double LinkConfig::beta2() const
{
  const double d = disp_ps_nm_km * 1e-6;  // s/m^2
  const double lambda = wavelength_nm * 1e-9;
  return -d * lambda * lambda / (2.0 * phys::pi * phys::c);
}

double LinkConfig::alpha() const { return alpha_db_km / (10.0 * std::log10(std::exp(1.0))) * 1e-3; }

double LinkConfig::gamma() const { return gamma_w_km * 1e-3; }

double LinkConfig::power_integral(double z0, double z1) const
{
  const double a = alpha();
  const double ls = span_m();
  double total = 0.0;
  double z = z0;
  while (z < z1 - 1e-9) {
    const double span_start = std::floor(z / ls + 1e-12) * ls;
    const double end = std::min(z1, span_start + ls);
    const double u0 = z - span_start;
    const double u1 = end - span_start;
    if (a == 0.0)
      total += u1 - u0;
    else
      total += (std::exp(-a * u0) - std::exp(-a * u1)) / a;
    z = end;
  }
  return total;
}

void StepPlan::validate() const
{
  if (steps_per_span < 1)
    throw std::invalid_argument("StepPlan: steps_per_span must be >= 1");
  if (!(split_ratio >= 0.0 && split_ratio <= 1.0))
    throw std::invalid_argument("StepPlan: split_ratio outside [0, 1]");
}

std::vector<double> span_step_boundaries(const LinkConfig& link, const StepPlan& plan)
{
  plan.validate();
  const int k = plan.steps_per_span;
  const double ls = link.span_m();
  const double a = link.alpha();
  std::vector<double> z(static_cast<std::size_t>(k) + 1);
  for (int i = 0; i <= k; ++i) {
    if (plan.spacing == StepSpacing::uniform || a == 0.0) {
      z[static_cast<std::size_t>(i)] = ls * i / k;
    } else {
      const double delta = (1.0 - std::exp(-a * ls)) / k;
      z[static_cast<std::size_t>(i)] = i == k ? ls : -std::log(1.0 - i * delta) / a;
    }
  }
  return z;
}

const CVec& SplitStepEngine::filter(std::size_t n, double sample_rate, double length, CVec& scratch)
{
  const auto key = std::make_tuple(n, sample_rate, length);
  auto it = cache_.find(key);
  if (it != cache_.end())
    return it->second;
  CVec h(n);
  const double df = sample_rate / static_cast<double>(n);
  const double c = 0.5 * beta2_ * length;
  for (std::size_t k = 0; k < n; ++k) {
    const double w = 2.0 * phys::pi * static_cast<double>(fft::signed_bin(k, n)) * df;
    h[k] = std::polar(1.0, c * w * w);
  }
  const std::size_t bytes = n * sizeof(cplx);
  if (cache_bytes_ + bytes <= cache_budget_) {
    cache_bytes_ += bytes;
    return cache_.emplace(key, std::move(h)).first->second;
  }
  scratch = std::move(h);
  return scratch;
}

void SplitStepEngine::disperse(CVec& spectrum, double sample_rate, double length)
{
  if (length == 0.0 || beta2_ == 0.0)
    return;
  CVec scratch;
  const CVec& h = filter(spectrum.size(), sample_rate, length, scratch);
  for (std::size_t k = 0; k < spectrum.size(); ++k)
    spectrum[k] *= h[k];
}

void apply_nonlinear_phase(CVec& x, CVec& y, const std::vector<double>& taps, double sign)
{
  const std::size_t n = x.size();
  if (taps.empty())
    return;
  std::vector<double> p(n);
  for (std::size_t k = 0; k < n; ++k)
    p[k] = std::norm(x[k]) + std::norm(y[k]);

  const std::size_t nc = taps.size() - 1;
  std::vector<double> phi(n);
  if (nc == 0) {
    for (std::size_t k = 0; k < n; ++k)
      phi[k] = taps[0] * p[k];
  } else {
    if (2 * nc + 1 > n)
      throw std::invalid_argument("apply_nonlinear_phase: filter longer than the signal");
    for (std::size_t k = 0; k < n; ++k) {
      double acc = taps[0] * p[k];
      for (std::size_t i = 1; i <= nc; ++i) {
        const std::size_t kp = k + i < n ? k + i : k + i - n;
        const std::size_t km = k >= i ? k - i : k + n - i;
        acc += taps[i] * (p[kp] + p[km]);
      }
      phi[k] = acc;
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    const cplx r = std::polar(1.0, sign * phi[k]);
    x[k] *= r;
    y[k] *= r;
  }
}

void SplitStepEngine::run(Signal& sig, const StepSchedule& schedule, Direction dir)
{
  sig.validate();
  if (schedule.lengths.size() != schedule.taps.size())
    throw std::invalid_argument("SplitStepEngine: schedule size mismatch");
  const double s = schedule.split_ratio;
  if (!(s >= 0.0 && s <= 1.0))
    throw std::invalid_argument("SplitStepEngine: split_ratio outside [0, 1]");
  const double sign = dir == Direction::forward ? 1.0 : -1.0;
  const std::size_t k_steps = schedule.lengths.size();

  fft::forward(sig.x);
  fft::forward(sig.y);
  double pending = 0.0;
  for (std::size_t idx = 0; idx < k_steps; ++idx) {
    const std::size_t i = dir == Direction::forward ? idx : k_steps - 1 - idx;
    const double h = schedule.lengths[i];
    const double pre = dir == Direction::forward ? s * h : (1.0 - s) * h;
    const double post = h - pre;
    pending += pre;
    disperse(sig.x, sig.sample_rate, sign * pending);
    disperse(sig.y, sig.sample_rate, sign * pending);
    fft::inverse(sig.x);
    fft::inverse(sig.y);
    apply_nonlinear_phase(sig.x, sig.y, schedule.taps[i], sign);
    fft::forward(sig.x);
    fft::forward(sig.y);
    pending = post;
  }
  disperse(sig.x, sig.sample_rate, sign * pending);
  disperse(sig.y, sig.sample_rate, sign * pending);
  fft::inverse(sig.x);
  fft::inverse(sig.y);
}

namespace {

StepSchedule span_schedule(const LinkConfig& link, const StepPlan& plan)
{
  const auto z = span_step_boundaries(link, plan);
  StepSchedule sched;
  sched.split_ratio = plan.split_ratio;
  const double g = link.gamma() * manakov_factor;
  for (std::size_t i = 0; i + 1 < z.size(); ++i) {
    sched.lengths.push_back(z[i + 1] - z[i]);
    sched.taps.push_back({g * link.power_integral(z[i], z[i + 1])});
  }
  return sched;
}

// Rejects signals with more than -40 dB of their power in the outer 10% of the grid. Laser
// phase noise puts Lorentzian tails there (~1e-6 of the power at 100 kHz), which is harmless.
void check_band(const Signal& sig)
{
  CVec fx = sig.x, fy = sig.y;
  fft::forward(fx);
  fft::forward(fy);
  const std::size_t n = sig.size();
  double total = 0.0, edge = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double p = std::norm(fx[k]) + std::norm(fy[k]);
    total += p;
    if (std::abs(static_cast<double>(fft::signed_bin(k, n))) > 0.45 * static_cast<double>(n))
      edge += p;
  }
  if (total > 0.0 && edge > 1e-4 * total)
    throw std::invalid_argument("ssfm_forward: signal band too wide for the sample rate (aliasing risk)");
}

Signal propagate_span_with(SplitStepEngine& engine, const Signal& sig, const LinkConfig& link,
                           const StepSchedule& sched)
{
  Signal out = sig;
  engine.run(out, sched, Direction::forward);
  const double loss = std::exp(-0.5 * link.alpha() * link.span_m());
  for (auto& v : out.x)
    v *= loss;
  for (auto& v : out.y)
    v *= loss;
  return out;
}

} // namespace

Signal propagate_span(const Signal& sig, const LinkConfig& link, const StepPlan& plan)
{
  link.validate();
  SplitStepEngine engine(link.beta2());
  return propagate_span_with(engine, sig, link, span_schedule(link, plan));
}

Signal ssfm_forward(const Signal& sig, const LinkConfig& link, const StepPlan& plan, std::uint64_t rng_seed)
{
  link.validate();
  sig.validate();
  check_band(sig);
  SplitStepEngine engine(link.beta2());
  const StepSchedule sched = span_schedule(link, plan);
  Signal cur = sig;
  for (int span = 0; span < link.n_spans; ++span) {
    cur = propagate_span_with(engine, cur, link, sched);
    cur = edfa_amplify(cur, link.span_loss_db(), link.nf_db,
                       rng::derive(rng_seed, rng::Role::ase, static_cast<std::uint64_t>(span)),
                       link.carrier_hz(), link.ase);
  }
  return cur;
}

double ase_psd(double gain_db, double nf_db, double carrier_hz)
{
  const double g = db_to_lin(gain_db);
  const double nsp = db_to_lin(nf_db) / 2.0;
  return nsp * phys::h * carrier_hz * (g - 1.0);
}

Signal edfa_amplify(const Signal& sig, double gain_db, double nf_db, std::uint64_t rng_seed, double carrier_hz,
                    bool add_noise)
{
  sig.validate();
  if (!(gain_db >= 0.0))
    throw std::invalid_argument("edfa_amplify: gain must be >= 0 dB");
  Signal out = scale(sig, std::sqrt(db_to_lin(gain_db)));
  if (!add_noise)
    return out;
  const double var = ase_psd(gain_db, nf_db, carrier_hz) * sig.sample_rate;
  if (var <= 0.0)
    return out;
  rng::Stream stream(rng_seed);
  for (auto& v : out.x)
    v += stream.complex_gaussian(var);
  for (auto& v : out.y)
    v += stream.complex_gaussian(var);
  return out;
}

std::vector<double> phase_noise_trajectory(std::size_t n, double linewidth_hz, double sample_rate,
                                           std::uint64_t rng_seed)
{
  if (linewidth_hz < 0.0)
    throw std::invalid_argument("phase noise: linewidth must be >= 0");
  std::vector<double> theta(n, 0.0);
  if (linewidth_hz == 0.0)
    return theta;
  const double sigma = std::sqrt(2.0 * phys::pi * linewidth_hz / sample_rate);
  rng::Stream stream(rng_seed);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    acc += sigma * stream.gaussian();
    theta[k] = acc;
  }
  return theta;
}

Signal apply_phase_noise(const Signal& sig, double linewidth_hz, std::uint64_t rng_seed)
{
  sig.validate();
  if (linewidth_hz == 0.0)
    return sig;
  // The waveform is periodic, so the walk is tied back to its start (Brownian bridge). A free
  // walk would leave a phase jump at the wrap that dispersion smears over ~1000 symbols.
  const std::size_t n = sig.size();
  const auto walk = phase_noise_trajectory(n + 1, linewidth_hz, sig.sample_rate, rng_seed);
  const double drift = (walk[n] - walk[0]) / static_cast<double>(n);
  Signal out = sig;
  for (std::size_t k = 0; k < n; ++k) {
    const cplx r = std::polar(1.0, walk[k] - drift * static_cast<double>(k));
    out.x[k] *= r;
    out.y[k] *= r;
  }
  return out;
}

Signal awgn(const Signal& sig, double snr_db, std::uint64_t rng_seed, double symbol_rate)
{
  sig.validate();
  if (std::isinf(snr_db) && snr_db > 0.0)
    return sig;
  const double p2d = mean_power(sig) / 2.0;
  if (!(p2d > 0.0))
    throw std::invalid_argument("awgn: zero-power signal");
  const double sps = sig.sample_rate / symbol_rate;
  const double var = p2d * sps / db_to_lin(snr_db);
  rng::Stream stream(rng_seed);
  Signal out = sig;
  for (auto& v : out.x)
    v += stream.complex_gaussian(var);
  for (auto& v : out.y)
    v += stream.complex_gaussian(var);
  return out;
}

Symbols4D awgn(const Symbols4D& sym, double snr_db, std::uint64_t rng_seed)
{
  Signal s;
  s.x = sym.x;
  s.y = sym.y;
  s.sample_rate = 1.0;
  Signal noisy = awgn(s, snr_db, rng_seed, 1.0);
  return {std::move(noisy.x), std::move(noisy.y)};
}

} // namespace fiberlab
