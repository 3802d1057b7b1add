#include "fiberlab/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace fiberlab::fft {
namespace {

using PlanKey = std::tuple<std::size_t, int, int>;

std::mutex& planner_mutex()
{
  static std::mutex m;
  return m;
}

std::map<PlanKey, fftw_plan>& plan_cache()
{
  static std::map<PlanKey, fftw_plan> cache;
  return cache;
}

void execute(CVec& v, int sign)
{
  if (v.empty())
    return;
  auto* data = reinterpret_cast<fftw_complex*>(v.data());
  const PlanKey key{v.size(), sign, fftw_alignment_of(reinterpret_cast<double*>(data))};
  fftw_plan plan = nullptr;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    auto& cache = plan_cache();
    auto it = cache.find(key);
    if (it == cache.end()) {
      // FFTW_ESTIMATE does not touch the arrays during planning.
      plan = fftw_plan_dft_1d(static_cast<int>(v.size()), data, data, sign, FFTW_ESTIMATE);
      if (!plan)
        throw std::runtime_error("fft: plan creation failed");
      cache.emplace(key, plan);
    } else {
      plan = it->second;
    }
  }
  fftw_execute_dft(plan, data, data);
}

} // namespace

void forward(CVec& v) { execute(v, FFTW_FORWARD); }

void inverse(CVec& v)
{
  execute(v, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(v.size());
  for (auto& s : v)
    s *= scale;
}

std::vector<double> frequencies(std::size_t n, double sample_rate)
{
  std::vector<double> f(n);
  const double df = sample_rate / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k)
    f[k] = static_cast<double>(signed_bin(k, n)) * df;
  return f;
}

} // namespace fiberlab::fft
