#include "fiberlab/signal.hpp"

#include "fiberlab/fft.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fiberlab {
namespace {

long positive_mod(long a, long n)
{
  const long r = a % n;
  return r < 0 ? r + n : r;
}

std::size_t integral_count(double value, const char* what)
{
  const double r = std::round(value);
  if (r < 1.0 || std::abs(value - r) > 1e-6 * std::max(1.0, r))
    throw std::invalid_argument(std::string(what) + ": length is not an integral number of samples/symbols");
  return static_cast<std::size_t>(r);
}

CVec shape_one(const CVec& symbols, std::size_t m, const PulseConfig& cfg)
{
  const std::size_t n = symbols.size();
  CVec spec = symbols;
  fft::forward(spec);
  CVec out(m, cplx{});
  const double df = cfg.symbol_rate / static_cast<double>(n);
  const double gain = static_cast<double>(m) / static_cast<double>(n);
  for (std::size_t k = 0; k < m; ++k) {
    const long kb = fft::signed_bin(k, m);
    const double h = rrc_response(static_cast<double>(kb) * df, cfg.symbol_rate, cfg.rolloff);
    if (h == 0.0)
      continue;
    out[k] = gain * h * spec[static_cast<std::size_t>(positive_mod(kb, static_cast<long>(n)))];
  }
  fft::inverse(out);
  return out;
}

CVec matched_one(const CVec& samples, std::size_t n, double sample_rate, const PulseConfig& cfg,
                 double delay_s)
{
  const std::size_t m = samples.size();
  CVec spec = samples;
  fft::forward(spec);
  CVec out(n, cplx{});
  const double df = sample_rate / static_cast<double>(m);
  const double gain = static_cast<double>(n) / static_cast<double>(m);
  for (std::size_t k = 0; k < m; ++k) {
    const long kb = fft::signed_bin(k, m);
    const double f = static_cast<double>(kb) * df;
    const double h = rrc_response(f, cfg.symbol_rate, cfg.rolloff);
    if (h == 0.0)
      continue;
    cplx v = spec[k] * (gain * h);
    if (delay_s != 0.0)
      v *= std::polar(1.0, 2.0 * phys::pi * f * delay_s);
    out[static_cast<std::size_t>(positive_mod(kb, static_cast<long>(n)))] += v;
  }
  fft::inverse(out);
  return out;
}

CVec resample_one(const CVec& in, std::size_t m_out)
{
  const std::size_t m_in = in.size();
  CVec spec = in;
  fft::forward(spec);
  CVec out(m_out, cplx{});
  const double gain = static_cast<double>(m_out) / static_cast<double>(m_in);
  const long half = static_cast<long>(std::min(m_in, m_out)) / 2;
  for (std::size_t k = 0; k < m_in; ++k) {
    const long kb = fft::signed_bin(k, m_in);
    // The shared Nyquist bin of an even-length grid is dropped.
    if (kb >= half || kb < -half || (kb == -half && std::min(m_in, m_out) % 2 == 0))
      continue;
    out[static_cast<std::size_t>(positive_mod(kb, static_cast<long>(m_out)))] = gain * spec[k];
  }
  fft::inverse(out);
  return out;
}

CVec roll_spectrum(const CVec& in, long shift)
{
  const long m = static_cast<long>(in.size());
  CVec spec = in;
  fft::forward(spec);
  CVec out(in.size());
  for (long k = 0; k < m; ++k)
    out[static_cast<std::size_t>(positive_mod(k + shift, m))] = spec[static_cast<std::size_t>(k)];
  fft::inverse(out);
  return out;
}

} // namespace

void PulseConfig::validate() const
{
  if (!(symbol_rate > 0.0))
    throw std::invalid_argument("PulseConfig: symbol_rate must be positive");
  if (!(rolloff >= 0.0 && rolloff <= 1.0))
    throw std::invalid_argument("PulseConfig: rolloff outside [0, 1]");
  if (!(samples_per_symbol >= 1.0))
    throw std::invalid_argument("PulseConfig: samples_per_symbol must be >= 1");
}

std::size_t PulseConfig::samples_for(std::size_t n_symbols) const
{
  return integral_count(static_cast<double>(n_symbols) * samples_per_symbol, "PulseConfig");
}

double rrc_response(double f, double symbol_rate, double rolloff)
{
  const double x = std::abs(f) / symbol_rate;
  const double lo = 0.5 * (1.0 - rolloff);
  const double hi = 0.5 * (1.0 + rolloff);
  if (x <= lo)
    return 1.0;
  if (x >= hi)
    return 0.0;
  return std::cos(phys::pi / (2.0 * rolloff) * (x - lo));
}

Constellation Constellation::from_amplitudes(const std::vector<int>& amplitudes,
                                             const std::vector<double>& amplitude_priors)
{
  if (amplitudes.empty() || amplitudes.size() != amplitude_priors.size())
    throw std::invalid_argument("Constellation: amplitude/prior size mismatch");
  Constellation c;
  const std::size_t na = amplitudes.size();
  // Point ordering: index = ((si * na + ai) * 2 + sq) * na + aq  with si, sq sign bits.
  for (int si = 0; si < 2; ++si)
    for (std::size_t ai = 0; ai < na; ++ai)
      for (int sq = 0; sq < 2; ++sq)
        for (std::size_t aq = 0; aq < na; ++aq) {
          const double re = (si ? -1.0 : 1.0) * amplitudes[ai];
          const double im = (sq ? -1.0 : 1.0) * amplitudes[aq];
          c.points.emplace_back(re, im);
          c.priors.push_back(0.25 * amplitude_priors[ai] * amplitude_priors[aq]);
          c.labels.push_back(static_cast<std::uint32_t>(c.labels.size()));
        }
  const double total = std::accumulate(c.priors.begin(), c.priors.end(), 0.0);
  for (auto& p : c.priors)
    p /= total;
  const double e = c.mean_energy();
  for (auto& p : c.points)
    p /= std::sqrt(e);
  return c;
}

Constellation Constellation::square_qam(std::size_t order)
{
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(order))));
  if (side * side != order || side % 2 != 0)
    throw std::invalid_argument("Constellation: order must be an even square");
  std::vector<int> amps;
  for (std::size_t i = 0; i < side / 2; ++i)
    amps.push_back(static_cast<int>(2 * i + 1));
  return from_amplitudes(amps, std::vector<double>(amps.size(), 1.0 / static_cast<double>(amps.size())));
}

double Constellation::mean_energy() const
{
  double e = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    e += priors[i] * std::norm(points[i]);
  return e;
}

double Constellation::entropy_bits() const
{
  double h = 0.0;
  for (double p : priors)
    if (p > 0.0)
      h -= p * std::log2(p);
  return h;
}

void Constellation::validate() const
{
  if (points.empty() || points.size() != priors.size() || points.size() != labels.size())
    throw std::invalid_argument("Constellation: inconsistent sizes");
  const double total = std::accumulate(priors.begin(), priors.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("Constellation: priors do not sum to 1");
  for (double p : priors)
    if (p < 0.0)
      throw std::invalid_argument("Constellation: negative prior");
}

Signal rrc_shape(const Symbols4D& symbols, const PulseConfig& cfg)
{
  cfg.validate();
  if (symbols.empty() || symbols.x.size() != symbols.y.size())
    throw std::invalid_argument("rrc_shape: empty or mismatched symbol sequence");
  if (cfg.sample_rate() < cfg.occupied_bandwidth())
    throw std::invalid_argument("rrc_shape: sample rate below occupied bandwidth");
  const std::size_t m = cfg.samples_for(symbols.size());
  Signal out;
  out.x = shape_one(symbols.x, m, cfg);
  out.y = shape_one(symbols.y, m, cfg);
  out.sample_rate = cfg.sample_rate();
  return out;
}

Symbols4D matched_filter_sample(const Signal& sig, const PulseConfig& cfg, double delay_s)
{
  sig.validate();
  if (sig.sample_rate < cfg.occupied_bandwidth() * (1.0 - 1e-12))
    throw std::invalid_argument("matched_filter_sample: sample rate below the shaped signal bandwidth");
  const std::size_t n = integral_count(static_cast<double>(sig.size()) * cfg.symbol_rate / sig.sample_rate,
                                       "matched_filter_sample");
  return {matched_one(sig.x, n, sig.sample_rate, cfg, delay_s),
          matched_one(sig.y, n, sig.sample_rate, cfg, delay_s)};
}

Signal resample(const Signal& sig, double new_rate)
{
  sig.validate();
  const std::size_t m_out = integral_count(static_cast<double>(sig.size()) * new_rate / sig.sample_rate, "resample");
  Signal out;
  out.x = resample_one(sig.x, m_out);
  out.y = resample_one(sig.y, m_out);
  out.sample_rate = new_rate;
  out.center_offset = sig.center_offset;
  return out;
}

Signal frequency_shift(const Signal& sig, double offset_hz)
{
  sig.validate();
  const double df = sig.sample_rate / static_cast<double>(sig.size());
  const long shift = std::lround(offset_hz / df);
  Signal out;
  out.x = roll_spectrum(sig.x, shift);
  out.y = roll_spectrum(sig.y, shift);
  out.sample_rate = sig.sample_rate;
  out.center_offset = sig.center_offset + static_cast<double>(shift) * df;
  return out;
}

Signal wdm_mux(const std::vector<WdmChannel>& channels)
{
  if (channels.empty())
    throw std::invalid_argument("wdm_mux: no channels");
  const Signal& ref = channels.front().signal;
  ref.validate();
  const std::size_t m = ref.size();
  const double df = ref.sample_rate / static_cast<double>(m);

  CVec sx(m, cplx{}), sy(m, cplx{});
  for (const auto& ch : channels) {
    ch.signal.validate();
    if (ch.signal.size() != m || ch.signal.sample_rate != ref.sample_rate)
      throw std::invalid_argument("wdm_mux: channels must share length and sample rate");
    const long shift = std::lround(ch.offset_hz / df);
    CVec fx = ch.signal.x, fy = ch.signal.y;
    fft::forward(fx);
    fft::forward(fy);
    double peak = 0.0;
    for (std::size_t k = 0; k < m; ++k)
      peak = std::max(peak, std::norm(fx[k]) + std::norm(fy[k]));
    const long lo = -static_cast<long>(m) / 2;
    const long hi = lo + static_cast<long>(m);
    for (std::size_t k = 0; k < m; ++k) {
      const double p = std::norm(fx[k]) + std::norm(fy[k]);
      const long target = fft::signed_bin(k, m) + shift;
      if (p > 1e-20 * peak && (target < lo || target >= hi))
        throw std::invalid_argument("wdm_mux: channel spectrum aliases beyond the sample rate");
      const auto dst = static_cast<std::size_t>(positive_mod(target, static_cast<long>(m)));
      sx[dst] += fx[k];
      sy[dst] += fy[k];
    }
  }
  fft::inverse(sx);
  fft::inverse(sy);
  Signal out;
  out.x = std::move(sx);
  out.y = std::move(sy);
  out.sample_rate = ref.sample_rate;
  return out;
}

Signal wdm_demux(const Signal& sig, double offset_hz, const PulseConfig& processing)
{
  sig.validate();
  processing.validate();
  const double half_band = 0.5 * processing.occupied_bandwidth();
  if (std::abs(offset_hz) + half_band > 0.5 * sig.sample_rate)
    throw std::invalid_argument("wdm_demux: requested channel outside the simulated band");
  const std::size_t m = sig.size();
  const double df = sig.sample_rate / static_cast<double>(m);
  const long shift = std::lround(offset_hz / df);
  const std::size_t n_sym = integral_count(static_cast<double>(m) * processing.symbol_rate / sig.sample_rate,
                                           "wdm_demux");
  const std::size_t m_out = processing.samples_for(n_sym);
  const double gain = static_cast<double>(m_out) / static_cast<double>(m);

  auto one = [&](const CVec& in) {
    CVec spec = in;
    fft::forward(spec);
    CVec out(m_out, cplx{});
    for (std::size_t k = 0; k < m_out; ++k) {
      const long kb = fft::signed_bin(k, m_out);
      if (std::abs(static_cast<double>(kb) * df) > half_band)
        continue;
      out[k] = gain * spec[static_cast<std::size_t>(positive_mod(kb + shift, static_cast<long>(m)))];
    }
    fft::inverse(out);
    return out;
  };

  Signal out;
  out.x = one(sig.x);
  out.y = one(sig.y);
  out.sample_rate = processing.sample_rate();
  out.center_offset = static_cast<double>(shift) * df;
  return out;
}

double mean_power(const Signal& sig)
{
  sig.validate();
  return energy(sig) / static_cast<double>(sig.size());
}

double power_scale(const Signal& sig, double p_dbm)
{
  const double p = mean_power(sig);
  if (!(p > 0.0))
    throw std::invalid_argument("set_power: zero-energy input");
  return std::sqrt(dbm_to_watt(p_dbm) / p);
}

Signal scale(const Signal& sig, double factor)
{
  Signal out = sig;
  for (auto& v : out.x)
    v *= factor;
  for (auto& v : out.y)
    v *= factor;
  return out;
}

Signal set_power(const Signal& sig, double p_dbm) { return scale(sig, power_scale(sig, p_dbm)); }

double simulation_samples_per_symbol(int n_channels, double spacing_hz, const PulseConfig& pulse)
{
  if (n_channels < 1)
    throw std::invalid_argument("simulation_samples_per_symbol: need at least one channel");
  const double band = (n_channels - 1) * spacing_hz + pulse.occupied_bandwidth();
  const double need = 1.2 * band / pulse.symbol_rate;
  double sps = 1.0;
  while (sps < need)
    sps *= 2.0;
  return sps;
}

double energy(const Signal& sig)
{
  double e = 0.0;
  for (const auto& v : sig.x)
    e += std::norm(v);
  for (const auto& v : sig.y)
    e += std::norm(v);
  return e;
}

double energy(const Symbols4D& sym)
{
  double e = 0.0;
  for (const auto& v : sym.x)
    e += std::norm(v);
  for (const auto& v : sym.y)
    e += std::norm(v);
  return e;
}

double nmse(const Symbols4D& a, const Symbols4D& b)
{
  if (a.size() != b.size())
    throw std::invalid_argument("nmse: length mismatch");
  double err = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    err += std::norm(a.x[k] - b.x[k]) + std::norm(a.y[k] - b.y[k]);
  return err / energy(b);
}

double nmse(const Signal& a, const Signal& b)
{
  return nmse(Symbols4D(a.x, a.y), Symbols4D(b.x, b.y));
}

} // namespace fiberlab
