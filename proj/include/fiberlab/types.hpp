#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace fiberlab {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

/// Sequence of dual-polarization (4D) symbols: x[k] and y[k] form one 4D symbol.
struct Symbols4D
{
  CVec x;
  CVec y;

  Symbols4D() = default;
  explicit Symbols4D(std::size_t n) : x(n), y(n) {}
  Symbols4D(CVec xs, CVec ys) : x(std::move(xs)), y(std::move(ys)) {}

  std::size_t size() const { return x.size(); }
  bool empty() const { return x.empty(); }
};

/// Dual-polarization complex baseband waveform. Field amplitudes are in W^1/2.
struct Signal
{
  CVec x;
  CVec y;
  double sample_rate = 0.0;   // Hz
  double center_offset = 0.0; // Hz, relative to the simulation center

  std::size_t size() const { return x.size(); }

  void validate() const
  {
    if (x.size() != y.size() || x.empty())
      throw std::invalid_argument("Signal: polarizations must have equal non-zero length");
    if (!(sample_rate > 0.0))
      throw std::invalid_argument("Signal: sample_rate must be positive");
  }
};

namespace phys {
inline constexpr double c = 299792458.0;      // m/s
inline constexpr double h = 6.62607015e-34;   // J s
inline constexpr double pi = 3.14159265358979323846;
} // namespace phys

inline double dbm_to_watt(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }

} // namespace fiberlab
