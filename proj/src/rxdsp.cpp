#include "fiberlab/rxdsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace fiberlab {

CVec mean_phase_remove(const CVec& rx, const CVec& tx)
{
  if (rx.size() != tx.size())
    throw std::invalid_argument("mean_phase_remove: length mismatch");
  cplx corr{};
  for (std::size_t k = 0; k < rx.size(); ++k)
    corr += rx[k] * std::conj(tx[k]);
  if (std::abs(corr) == 0.0)
    throw std::invalid_argument("mean_phase_remove: zero cross-correlation");
  const cplx rot = std::conj(corr) / std::abs(corr);
  CVec out(rx.size());
  for (std::size_t k = 0; k < rx.size(); ++k)
    out[k] = rx[k] * rot;
  return out;
}

Symbols4D mean_phase_remove(const Symbols4D& rx, const Symbols4D& tx)
{
  return {mean_phase_remove(rx.x, tx.x), mean_phase_remove(rx.y, tx.y)};
}

Slicer::Slicer(const Constellation& c) : points_(c.points)
{
  if (points_.empty())
    throw std::invalid_argument("Slicer: empty constellation");
  std::set<double> re, im;
  for (const auto& p : points_) {
    re.insert(p.real());
    im.insert(p.imag());
  }
  const std::size_t side = re.size();
  if (side < 2 || side * side != points_.size() || im.size() != side)
    return;
  std::vector<double> levels(re.begin(), re.end());
  const double step = levels[1] - levels[0];
  for (std::size_t i = 1; i < side; ++i)
    if (std::abs(levels[i] - levels[i - 1] - step) > 1e-9 * step)
      return;
  std::vector<double> levels_q(im.begin(), im.end());
  for (std::size_t i = 0; i < side; ++i)
    if (std::abs(levels_q[i] - levels[i]) > 1e-9 * step)
      return;
  grid_index_.assign(side * side, 0);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto ix = static_cast<std::size_t>(std::lround((points_[i].real() - levels[0]) / step));
    const auto iq = static_cast<std::size_t>(std::lround((points_[i].imag() - levels[0]) / step));
    grid_index_[ix * side + iq] = i;
  }
  grid_ = true;
  lo_ = levels[0];
  step_ = step;
  side_ = side;
}

std::size_t Slicer::nearest(cplx y) const
{
  if (grid_) {
    const double maxi = static_cast<double>(side_ - 1);
    const double fx = std::clamp(std::round((y.real() - lo_) / step_), 0.0, maxi);
    const double fq = std::clamp(std::round((y.imag() - lo_) / step_), 0.0, maxi);
    return grid_index_[static_cast<std::size_t>(fx) * side_ + static_cast<std::size_t>(fq)];
  }
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const double d = std::norm(y - points_[i]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

void CprConfig::validate() const
{
  if (window_symbols < 1 || window_symbols % 2 == 0)
    throw std::invalid_argument("CprConfig: window must be odd and positive");
  if (test_phases < 2)
    throw std::invalid_argument("CprConfig: need at least 2 test phases");
  if (symmetry < 1)
    throw std::invalid_argument("CprConfig: invalid symmetry order");
}

namespace {

// Core BPS over one or more tributaries sharing a phase.
std::vector<double> bps_track(const std::vector<const CVec*>& tributaries, const Constellation& constellation,
                              const CprConfig& cfg)
{
  cfg.validate();
  const std::size_t n = tributaries.front()->size();
  if (static_cast<std::size_t>(cfg.window_symbols) > n)
    throw std::invalid_argument("bps_cpr: window longer than the sequence");
  const Slicer slicer(constellation);
  const std::size_t b_count = static_cast<std::size_t>(cfg.test_phases);
  const double period = 2.0 * phys::pi / cfg.symmetry;

  std::vector<cplx> rot(b_count);
  for (std::size_t b = 0; b < b_count; ++b)
    rot[b] = std::polar(1.0, -period * static_cast<double>(b) / static_cast<double>(b_count));

  // Prefix sums of the per-symbol decision distance, one row per test phase.
  std::vector<double> prefix((n + 1) * b_count, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t b = 0; b < b_count; ++b) {
      double d = 0.0;
      for (const CVec* t : tributaries) {
        const cplx z = (*t)[k] * rot[b];
        d += std::norm(z - slicer.point(slicer.nearest(z)));
      }
      prefix[(k + 1) * b_count + b] = prefix[k * b_count + b] + d;
    }
  }

  const std::size_t half = static_cast<std::size_t>(cfg.window_symbols) / 2;
  std::vector<double> phase(n);
  double prev = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t lo = k >= half ? k - half : 0;
    const std::size_t hi = std::min(n, k + half + 1);
    std::size_t best = 0;
    double best_s = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < b_count; ++b) {
      const double s = prefix[hi * b_count + b] - prefix[lo * b_count + b];
      if (s < best_s) {
        best_s = s;
        best = b;
      }
    }
    const double raw = period * static_cast<double>(best) / static_cast<double>(b_count);
    // The first estimate takes the representative closest to zero.
    const double ref = k == 0 ? 0.0 : prev;
    const double unwrapped = raw + period * std::round((ref - raw) / period);
    phase[k] = unwrapped;
    prev = unwrapped;
  }
  return phase;
}

CVec derotate(const CVec& rx, const std::vector<double>& phase)
{
  CVec out(rx.size());
  for (std::size_t k = 0; k < rx.size(); ++k)
    out[k] = rx[k] * std::polar(1.0, -phase[k]);
  return out;
}

} // namespace

BpsResult bps_cpr(const CVec& rx, const Constellation& constellation, const CprConfig& cfg)
{
  BpsResult r;
  r.phase = bps_track({&rx}, constellation, cfg);
  r.corrected = derotate(rx, r.phase);
  return r;
}

BpsResult4D bps_cpr(const Symbols4D& rx, const Constellation& constellation, const CprConfig& cfg)
{
  if (rx.x.size() != rx.y.size())
    throw std::invalid_argument("bps_cpr: polarization length mismatch");
  BpsResult4D r;
  r.phase = bps_track({&rx.x, &rx.y}, constellation, cfg);
  r.corrected = {derotate(rx.x, r.phase), derotate(rx.y, r.phase)};
  return r;
}

Symbols4D resolve_ambiguity(const Symbols4D& rx, const Symbols4D& tx, int symmetry)
{
  cplx corr{};
  for (std::size_t k = 0; k < rx.size(); ++k)
    corr += rx.x[k] * std::conj(tx.x[k]) + rx.y[k] * std::conj(tx.y[k]);
  const double period = 2.0 * phys::pi / symmetry;
  const double turn = period * std::round(std::arg(corr) / period);
  const cplx r = std::polar(1.0, -turn);
  Symbols4D out = rx;
  for (auto& v : out.x)
    v *= r;
  for (auto& v : out.y)
    v *= r;
  return out;
}

namespace {

struct AirWorkspace
{
  std::vector<std::size_t> tx_index;
  std::vector<double> log_prior;
};

double air_functional(const CVec& rx, const AirWorkspace& ws, const Constellation& c, double var)
{
  const std::size_t m = c.points.size();
  const double inv = 1.0 / var;
  double acc = 0.0;
  std::vector<double> expo(m);
  for (std::size_t k = 0; k < rx.size(); ++k) {
    double emax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      expo[i] = ws.log_prior[i] - std::norm(rx[k] - c.points[i]) * inv;
      emax = std::max(emax, expo[i]);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      s += std::exp(expo[i] - emax);
    const double num = -std::norm(rx[k] - c.points[ws.tx_index[k]]) * inv;
    acc += num - (emax + std::log(s));
  }
  return acc / (static_cast<double>(rx.size()) * std::log(2.0));
}

} // namespace

double air_2d(const CVec& rx, const CVec& tx, const Constellation& constellation, double noise_var,
              double* fitted_var)
{
  constellation.validate();
  if (rx.size() != tx.size() || rx.empty())
    throw std::invalid_argument("air_2d: rx/tx length mismatch");
  AirWorkspace ws;
  for (double p : constellation.priors)
    ws.log_prior.push_back(p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity());
  const Slicer slicer(constellation);
  ws.tx_index.resize(tx.size());
  double err = 0.0;
  for (std::size_t k = 0; k < tx.size(); ++k) {
    ws.tx_index[k] = slicer.nearest(tx[k]);
    if (constellation.priors[ws.tx_index[k]] <= 0.0)
      throw std::invalid_argument("air_2d: transmitted symbol has zero prior");
    err += std::norm(rx[k] - tx[k]);
  }
  if (noise_var > 0.0) {
    if (fitted_var)
      *fitted_var = noise_var;
    return air_functional(rx, ws, constellation, noise_var);
  }

  // Fit: coarse log grid around the empirical error variance, then golden section in log domain.
  const double v0 = std::max(err / static_cast<double>(rx.size()), 1e-12);
  auto f = [&](double lv) { return air_functional(rx, ws, constellation, std::exp(lv)); };
  const double l0 = std::log(v0);
  const double grid_step = std::log(2.0) / 2.0;
  double best_l = l0, best_f = -std::numeric_limits<double>::infinity();
  for (int i = -6; i <= 6; ++i) {
    const double l = l0 + i * grid_step;
    const double v = f(l);
    if (v > best_f) {
      best_f = v;
      best_l = l;
    }
  }
  double a = best_l - grid_step, b = best_l + grid_step;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c1 = b - g * (b - a), c2 = a + g * (b - a);
  double f1 = f(c1), f2 = f(c2);
  for (int it = 0; it < 40 && (b - a) > 1e-5; ++it) {
    if (f1 > f2) {
      b = c2;
      c2 = c1;
      f2 = f1;
      c1 = b - g * (b - a);
      f1 = f(c1);
    } else {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + g * (b - a);
      f2 = f(c2);
    }
  }
  double lv = 0.5 * (a + b);
  double fv = f(lv);
  if (best_f > fv) {
    lv = best_l;
    fv = best_f;
  }
  if (fitted_var)
    *fitted_var = std::exp(lv);
  return fv;
}

AirReport air_estimate(const Symbols4D& rx, const Symbols4D& tx, const Constellation& constellation,
                       const RateAccounting& rates, double symbol_rate, double channel_spacing, double noise_var)
{
  if (!(channel_spacing > 0.0) || !(symbol_rate > 0.0))
    throw std::invalid_argument("air_estimate: invalid rates");
  AirReport r;
  const double ax = air_2d(rx.x, tx.x, constellation, noise_var, &r.noise_var_x);
  const double ay = air_2d(rx.y, tx.y, constellation, noise_var, &r.noise_var_y);
  r.air_bits_per_4d = ax + ay;
  r.air_bits_per_2d = 0.5 * r.air_bits_per_4d;
  r.effective_snr_db = effective_snr_db(rx, tx);
  r.net_rate_bits_per_4d = rates.transmission_rate_4d;
  r.net_air_bits_per_4d = r.air_bits_per_4d - (rates.source_entropy_4d - rates.transmission_rate_4d);
  r.se_bits_s_hz = r.net_air_bits_per_4d * symbol_rate / channel_spacing;
  return r;
}

double effective_snr_db(const CVec& rx, const CVec& tx)
{
  return effective_snr_db(Symbols4D(rx, CVec(rx.size())), Symbols4D(tx, CVec(tx.size())));
}

double effective_snr_db(const Symbols4D& rx, const Symbols4D& tx)
{
  if (rx.size() != tx.size() || rx.empty())
    throw std::invalid_argument("effective_snr_db: length mismatch");
  double sig = 0.0, err = 0.0;
  auto accumulate = [&](const CVec& r, const CVec& t) {
    cplx corr{};
    for (std::size_t k = 0; k < r.size(); ++k)
      corr += r[k] * std::conj(t[k]);
    const cplx rot = std::abs(corr) > 0.0 ? std::conj(corr) / std::abs(corr) : cplx{1.0, 0.0};
    for (std::size_t k = 0; k < r.size(); ++k) {
      sig += std::norm(t[k]);
      err += std::norm(r[k] * rot - t[k]);
    }
  };
  accumulate(rx.x, tx.x);
  accumulate(rx.y, tx.y);
  if (!(sig > 0.0))
    throw std::invalid_argument("effective_snr_db: zero signal");
  if (err <= 0.0)
    return effective_snr_cap_db;
  return std::min(effective_snr_cap_db, 10.0 * std::log10(sig / err));
}

} // namespace fiberlab
