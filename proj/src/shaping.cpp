#include "fiberlab/shaping.hpp"

#include "fiberlab/hash.hpp"
#include "fiberlab/random.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace fiberlab {

BigUint bits_to_index(const Bits& bits)
{
  BigUint v = 0;
  for (auto b : bits) {
    v <<= 1;
    if (b) v |= 1;
  }
  return v;
}

Bits index_to_bits(const BigUint& index, std::size_t n_bits)
{
  if (index != 0 && static_cast<std::size_t>(msb(index)) >= n_bits)
    throw std::invalid_argument("index_to_bits: index does not fit");
  Bits out(n_bits, 0);
  for (std::size_t i = 0; i < n_bits; ++i)
    out[n_bits - 1 - i] = bit_test(index, static_cast<unsigned>(i)) ? 1 : 0;
  return out;
}

int floor_log2(const BigUint& x)
{
  if (x <= 0) throw std::invalid_argument("floor_log2: x must be >= 1");
  return static_cast<int>(msb(x));
}

void AmplitudeAlphabet::validate() const
{
  if (amplitudes.empty()) throw std::invalid_argument("alphabet: empty");
  for (std::size_t i = 0; i < amplitudes.size(); ++i) {
    if (amplitudes[i] <= 0) throw std::invalid_argument("alphabet: amplitudes must be positive");
    if (i > 0 && amplitudes[i] <= amplitudes[i - 1])
      throw std::invalid_argument("alphabet: amplitudes must be strictly increasing");
  }
}

std::size_t AmplitudeAlphabet::index_of(int amplitude) const
{
  auto it = std::find(amplitudes.begin(), amplitudes.end(), amplitude);
  if (it == amplitudes.end()) throw std::invalid_argument("alphabet: amplitude not in alphabet");
  return static_cast<std::size_t>(it - amplitudes.begin());
}

void DmConfig::validate() const
{
  alphabet.validate();
  if (block_len <= 0) throw std::invalid_argument("dm: block_len must be positive");
  if (k_bits < 0) throw std::invalid_argument("dm: k_bits must be non-negative");
  switch (kind) {
  case DmKind::ess:
    if (e_max < 0) throw std::invalid_argument("dm: e_max must be non-negative");
    break;
  case DmKind::ccdm: {
    if (composition.size() != alphabet.size()) throw std::invalid_argument("dm: composition size mismatch");
    long total = 0;
    for (int c : composition) {
      if (c < 0) throw std::invalid_argument("dm: negative composition entry");
      total += c;
    }
    if (total != block_len) throw std::invalid_argument("dm: composition must sum to block_len");
    break;
  }
  case DmKind::mb_iid:
    if (!(nu >= 0.0)) throw std::invalid_argument("dm: nu must be non-negative");
    break;
  }
}

// ---------------------------------------------------------------- ESS

namespace {

struct ReducedEnergies
{
  long unit = 1;
  long base = 0;  // a_min^2
  std::vector<long> r;
};

ReducedEnergies reduce(const AmplitudeAlphabet& alphabet)
{
  ReducedEnergies out;
  out.base = alphabet.energy(0);
  long g = 0;
  for (std::size_t i = 1; i < alphabet.size(); ++i) g = std::gcd(g, alphabet.energy(i) - out.base);
  out.unit = g > 0 ? g : 1;
  for (std::size_t i = 0; i < alphabet.size(); ++i) out.r.push_back((alphabet.energy(i) - out.base) / out.unit);
  return out;
}

} // namespace

EssCodec::EssCodec(AmplitudeAlphabet alphabet, int block_len, long e_max)
    : alphabet_(std::move(alphabet)), n_(block_len), e_max_(e_max)
{
  alphabet_.validate();
  if (n_ <= 0) throw std::invalid_argument("ess: block_len must be positive");
  const auto red = reduce(alphabet_);
  unit_ = red.unit;
  reduced_ = red.r;
  const long floor_energy = static_cast<long>(n_) * red.base;
  if (e_max_ < floor_energy) throw std::invalid_argument("ess: e_max below the minimum sequence energy");
  budget_ = (e_max_ - floor_energy) / unit_;
  const long cols = budget_ + 1;
  table_.assign(static_cast<std::size_t>(n_ + 1) * static_cast<std::size_t>(cols), BigUint(0));
  for (long b = 0; b < cols; ++b) table_[static_cast<std::size_t>(b)] = 1;
  for (int m = 1; m <= n_; ++m) {
    BigUint* row = &table_[static_cast<std::size_t>(m) * cols];
    const BigUint* prev = &table_[static_cast<std::size_t>(m - 1) * cols];
    for (long b = 0; b < cols; ++b) {
      BigUint acc = 0;
      for (long r : reduced_)
        if (b - r >= 0) acc += prev[b - r];
      row[b] = std::move(acc);
    }
  }
}

const BigUint& EssCodec::count(int m, long b) const
{
  if (b < 0) return zero_;
  return table_[static_cast<std::size_t>(m) * static_cast<std::size_t>(budget_ + 1) + static_cast<std::size_t>(b)];
}

std::vector<int> EssCodec::encode_index(const BigUint& index) const
{
  if (index < 0 || index >= admissible()) throw std::out_of_range("ess: index out of range");
  BigUint rem = index;
  long b = budget_;
  std::vector<int> out(static_cast<std::size_t>(n_));
  for (int i = 0; i < n_; ++i) {
    const int m = n_ - i - 1;
    bool placed = false;
    for (std::size_t a = 0; a < reduced_.size(); ++a) {
      const BigUint& c = count(m, b - reduced_[a]);
      if (rem < c) {
        out[static_cast<std::size_t>(i)] = alphabet_.amplitudes[a];
        b -= reduced_[a];
        placed = true;
        break;
      }
      rem -= c;
    }
    if (!placed) throw std::logic_error("ess: trellis walk failed");
  }
  return out;
}

BigUint EssCodec::decode_index(const std::vector<int>& amplitudes) const
{
  if (amplitudes.size() != static_cast<std::size_t>(n_)) throw std::invalid_argument("ess: wrong block length");
  BigUint index = 0;
  long b = budget_;
  for (int i = 0; i < n_; ++i) {
    const int m = n_ - i - 1;
    const std::size_t ai = alphabet_.index_of(amplitudes[static_cast<std::size_t>(i)]);
    for (std::size_t a = 0; a < ai; ++a) index += count(m, b - reduced_[a]);
    b -= reduced_[ai];
    if (b < 0) throw std::invalid_argument("ess: sequence exceeds the energy bound");
  }
  return index;
}

std::vector<int> EssCodec::encode(const Bits& bits) const
{
  if (static_cast<int>(bits.size()) > max_bits()) throw std::invalid_argument("ess: too many input bits");
  return encode_index(bits_to_index(bits));
}

Bits EssCodec::decode(const std::vector<int>& amplitudes, std::size_t k_bits) const
{
  return index_to_bits(decode_index(amplitudes), k_bits);
}

std::vector<double> EssCodec::amplitude_distribution(const BigUint& n_used) const
{
  if (n_used <= 0 || n_used > admissible()) throw std::out_of_range("ess: n_used out of range");
  const std::size_t na = reduced_.size();
  const long cols = budget_ + 1;
  // Double-precision count and occurrence tables; occ[(m*cols+b)*na + a] is the
  // total number of times amplitude a appears in all admissible length-m suffixes.
  std::vector<double> cnt(static_cast<std::size_t>(n_ + 1) * cols);
  std::vector<double> occ(cnt.size() * na, 0.0);
  for (std::size_t i = 0; i < cnt.size(); ++i) cnt[i] = table_[i].convert_to<double>();
  for (int m = 1; m <= n_; ++m)
    for (long b = 0; b < cols; ++b) {
      double* o = &occ[(static_cast<std::size_t>(m) * cols + b) * na];
      for (std::size_t a = 0; a < na; ++a) {
        const long bb = b - reduced_[a];
        if (bb < 0) continue;
        const std::size_t prev = static_cast<std::size_t>(m - 1) * cols + bb;
        o[a] += cnt[prev];
        for (std::size_t q = 0; q < na; ++q) o[q] += occ[prev * na + q];
      }
    }

  std::vector<double> total(na, 0.0);
  if (n_used == admissible()) {
    for (std::size_t a = 0; a < na; ++a) total[a] = occ[(static_cast<std::size_t>(n_) * cols + budget_) * na + a];
  } else {
    // Walk the path of sequence number n_used; every subtree branching off to
    // the left of it lies entirely below n_used.
    BigUint rem = n_used;
    long b = budget_;
    std::vector<double> prefix(na, 0.0);
    for (int i = 0; i < n_ && rem > 0; ++i) {
      const int m = n_ - i - 1;
      for (std::size_t a = 0; a < na; ++a) {
        const long bb = b - reduced_[a];
        const BigUint& c = count(m, bb);
        if (rem < c) {
          prefix[a] += 1.0;
          b = bb;
          break;
        }
        rem -= c;
        if (bb < 0) continue;
        const std::size_t node = static_cast<std::size_t>(m) * cols + bb;
        const double cd = cnt[node];
        for (std::size_t q = 0; q < na; ++q) total[q] += cd * prefix[q] + occ[node * na + q];
        total[a] += cd;
      }
    }
  }
  const double sum = std::accumulate(total.begin(), total.end(), 0.0);
  for (auto& t : total) t /= sum;
  return total;
}

std::string EssCodec::serialize_body() const
{
  std::ostringstream os;
  os << "fiberlab-ess-trellis 1\nalphabet";
  for (int a : alphabet_.amplitudes) os << ' ' << a;
  os << "\nblock_len " << n_ << "\ne_max " << e_max_ << "\nbudget " << budget_ << '\n';
  for (const auto& v : table_) os << std::hex << v << '\n';
  return os.str();
}

void EssCodec::save(const std::string& path) const
{
  const std::string body = serialize_body();
  std::ostringstream tail;
  tail << "hash " << std::hex << fnv1a64(body) << '\n';
  const std::string tmp = path + ".tmp" + std::to_string(std::hash<std::string>{}(path) ^ reinterpret_cast<std::uintptr_t>(this));
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("ess: cannot write " + tmp);
    f << body << tail.str();
    if (!f) throw std::runtime_error("ess: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::optional<EssCodec> EssCodec::load(const std::string& path, const AmplitudeAlphabet& alphabet, int block_len,
                                       long e_max)
{
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string all = ss.str();
  const auto pos = all.rfind("hash ");
  if (pos == std::string::npos) return std::nullopt;
  const std::string body = all.substr(0, pos);
  std::uint64_t stored = 0;
  try {
    stored = std::stoull(all.substr(pos + 5), nullptr, 16);
  } catch (...) {
    return std::nullopt;
  }
  if (stored != fnv1a64(body)) return std::nullopt;

  EssCodec c;
  c.alphabet_ = alphabet;
  c.n_ = block_len;
  c.e_max_ = e_max;
  const auto red = reduce(alphabet);
  c.unit_ = red.unit;
  c.reduced_ = red.r;
  c.budget_ = (e_max - static_cast<long>(block_len) * red.base) / red.unit;
  std::istringstream is(body);
  std::string line;
  std::getline(is, line);
  if (line != "fiberlab-ess-trellis 1") return std::nullopt;
  std::getline(is, line);
  {
    std::ostringstream want;
    want << "alphabet";
    for (int a : alphabet.amplitudes) want << ' ' << a;
    if (line != want.str()) return std::nullopt;
  }
  std::string key;
  long v1 = 0, v2 = 0, v3 = 0;
  is >> key >> v1;
  if (key != "block_len" || v1 != block_len) return std::nullopt;
  is >> key >> v2;
  if (key != "e_max" || v2 != e_max) return std::nullopt;
  is >> key >> v3;
  if (key != "budget" || v3 != c.budget_) return std::nullopt;
  const std::size_t entries = static_cast<std::size_t>(block_len + 1) * static_cast<std::size_t>(c.budget_ + 1);
  c.table_.resize(entries);
  for (std::size_t i = 0; i < entries; ++i) {
    std::string hex;
    if (!(is >> hex)) return std::nullopt;
    c.table_[i] = BigUint("0x" + hex);
  }
  return c;
}

long ess_min_emax(const AmplitudeAlphabet& alphabet, int block_len, int k_bits)
{
  alphabet.validate();
  if (block_len <= 0 || k_bits < 0) throw std::invalid_argument("ess_min_emax: bad arguments");
  const auto red = reduce(alphabet);
  const long max_budget = static_cast<long>(block_len) * red.r.back();
  const BigUint target = BigUint(1) << k_bits;
  // Rolling rows of N(m, b) for all budgets; the last row gives N(n, b).
  std::vector<BigUint> prev(static_cast<std::size_t>(max_budget + 1), BigUint(1)), cur(prev.size());
  for (int m = 1; m <= block_len; ++m) {
    for (long b = 0; b <= max_budget; ++b) {
      BigUint acc = 0;
      for (long r : red.r)
        if (b - r >= 0) acc += prev[static_cast<std::size_t>(b - r)];
      cur[static_cast<std::size_t>(b)] = std::move(acc);
    }
    std::swap(prev, cur);
  }
  for (long b = 0; b <= max_budget; ++b)
    if (prev[static_cast<std::size_t>(b)] >= target) return static_cast<long>(block_len) * red.base + b * red.unit;
  throw std::invalid_argument("ess_min_emax: k_bits exceeds block_len * log2|A|");
}

std::shared_ptr<const EssCodec> ess_codec(const AmplitudeAlphabet& alphabet, int block_len, long e_max,
                                          const std::string& cache_dir)
{
  static std::mutex mu;
  static std::map<std::tuple<std::vector<int>, int, long>, std::shared_ptr<const EssCodec>> memo;
  const auto key = std::make_tuple(alphabet.amplitudes, block_len, e_max);
  {
    std::lock_guard lock(mu);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
  }
  std::shared_ptr<const EssCodec> codec;
  std::string path;
  if (!cache_dir.empty()) {
    std::ostringstream name;
    name << "ess_";
    for (int a : alphabet.amplitudes) name << a << '_';
    name << "n" << block_len << "_e" << e_max << ".trellis";
    path = (std::filesystem::path(cache_dir) / name.str()).string();
    if (auto loaded = EssCodec::load(path, alphabet, block_len, e_max)) codec = std::make_shared<EssCodec>(std::move(*loaded));
  }
  if (!codec) {
    codec = std::make_shared<EssCodec>(alphabet, block_len, e_max);
    if (!path.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(cache_dir, ec);
      try {
        codec->save(path);
      } catch (const std::exception&) {
        // a read-only cache only costs recomputation
      }
    }
  }
  std::lock_guard lock(mu);
  return memo.emplace(key, codec).first->second;
}

// ---------------------------------------------------------------- CCDM

BigUint multinomial(const std::vector<int>& composition)
{
  BigUint result = 1;
  long remaining = 0;
  for (int c : composition) remaining += c;
  for (int c : composition) {
    BigUint binom = 1;
    for (int j = 1; j <= c; ++j) {
      binom *= (remaining - c + j);
      binom /= j;
    }
    result *= binom;
    remaining -= c;
  }
  return result;
}

CcdmCodec::CcdmCodec(AmplitudeAlphabet alphabet, std::vector<int> composition)
    : alphabet_(std::move(alphabet)), composition_(std::move(composition))
{
  alphabet_.validate();
  if (composition_.size() != alphabet_.size()) throw std::invalid_argument("ccdm: composition size mismatch");
  for (int c : composition_) {
    if (c < 0) throw std::invalid_argument("ccdm: negative count");
    n_ += c;
  }
  if (n_ == 0) throw std::invalid_argument("ccdm: empty composition");
  count_ = multinomial(composition_);
}

std::vector<int> CcdmCodec::encode_index(const BigUint& index) const
{
  if (index < 0 || index >= count_) throw std::out_of_range("ccdm: index out of range");
  std::vector<int> counts = composition_;
  BigUint total = count_;
  BigUint rem = index;
  std::vector<int> out(static_cast<std::size_t>(n_));
  for (int i = 0, left = n_; i < n_; ++i, --left) {
    for (std::size_t a = 0; a < counts.size(); ++a) {
      if (counts[a] == 0) continue;
      BigUint sub = total * counts[a] / left;
      if (rem < sub) {
        out[static_cast<std::size_t>(i)] = alphabet_.amplitudes[a];
        --counts[a];
        total = std::move(sub);
        break;
      }
      rem -= sub;
    }
  }
  return out;
}

BigUint CcdmCodec::decode_index(const std::vector<int>& amplitudes) const
{
  if (amplitudes.size() != static_cast<std::size_t>(n_)) throw std::invalid_argument("ccdm: wrong block length");
  std::vector<int> counts = composition_;
  BigUint total = count_;
  BigUint index = 0;
  for (int i = 0, left = n_; i < n_; ++i, --left) {
    const std::size_t ai = alphabet_.index_of(amplitudes[static_cast<std::size_t>(i)]);
    if (counts[ai] == 0) throw std::invalid_argument("ccdm: sequence does not match the composition");
    for (std::size_t a = 0; a < ai; ++a)
      if (counts[a] > 0) index += total * counts[a] / left;
    total = total * counts[ai] / left;
    --counts[ai];
  }
  return index;
}

std::vector<int> CcdmCodec::encode(const Bits& bits) const
{
  if (static_cast<int>(bits.size()) > max_bits()) throw std::invalid_argument("ccdm: too many input bits");
  return encode_index(bits_to_index(bits));
}

Bits CcdmCodec::decode(const std::vector<int>& amplitudes, std::size_t k_bits) const
{
  return index_to_bits(decode_index(amplitudes), k_bits);
}

// ---------------------------------------------------------------- MB

std::vector<double> mb_distribution(double nu, const AmplitudeAlphabet& alphabet)
{
  alphabet.validate();
  if (!(nu >= 0.0)) throw std::invalid_argument("mb: nu must be non-negative");
  std::vector<double> p(alphabet.size(), 0.0);
  if (std::isinf(nu)) {
    p[0] = 1.0;
    return p;
  }
  const double e0 = static_cast<double>(alphabet.energy(0));
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(-nu * (static_cast<double>(alphabet.energy(i)) - e0));
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

double entropy_bits(const std::vector<double>& p)
{
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log2(v);
  return h;
}

double mb_fit_nu(double target, const AmplitudeAlphabet& alphabet)
{
  alphabet.validate();
  const double h_max = std::log2(static_cast<double>(alphabet.size()));
  if (!(target >= 0.0) || target > h_max + 1e-12) throw std::invalid_argument("mb_fit_nu: target outside [0, log2|A|]");
  if (target >= h_max - 1e-12) return 0.0;
  if (target <= 0.0) return std::numeric_limits<double>::infinity();
  auto h = [&](double nu) { return entropy_bits(mb_distribution(nu, alphabet)); };
  double lo = 0.0, hi = 1e-3;
  while (h(hi) > target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) return std::numeric_limits<double>::infinity();
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double hm = h(mid);
    if (std::abs(hm - target) < 1e-13) return mid;
    (hm > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<int> mb_sample(double nu, std::size_t n, std::uint64_t rng_seed, const AmplitudeAlphabet& alphabet)
{
  const auto p = mb_distribution(nu, alphabet);
  std::vector<double> cdf(p.size());
  std::partial_sum(p.begin(), p.end(), cdf.begin());
  rng::Stream s(rng_seed);
  std::vector<int> out(n);
  for (auto& a : out) {
    const double u = s.uniform();
    std::size_t i = 0;
    while (i + 1 < cdf.size() && u >= cdf[i]) ++i;
    a = alphabet.amplitudes[i];
  }
  return out;
}

// ---------------------------------------------------------------- PAS

double pas_energy_norm(const std::vector<double>& priors, const AmplitudeAlphabet& alphabet)
{
  if (priors.size() != alphabet.size()) throw std::invalid_argument("pas: prior size mismatch");
  double e = 0.0;
  for (std::size_t i = 0; i < priors.size(); ++i) e += priors[i] * static_cast<double>(alphabet.energy(i));
  return 2.0 * e;
}

Symbols4D pas_map(const std::vector<int>& amplitudes, const Bits& sign_bits, double e_norm)
{
  if (amplitudes.size() % 4 != 0) throw std::invalid_argument("pas_map: amplitude count must be a multiple of 4");
  if (sign_bits.size() != amplitudes.size()) throw std::invalid_argument("pas_map: sign/amplitude count mismatch");
  if (!(e_norm > 0.0)) throw std::invalid_argument("pas_map: e_norm must be positive");
  const double s = 1.0 / std::sqrt(e_norm);
  const std::size_t n = amplitudes.size() / 4;
  Symbols4D out;
  out.x.resize(n);
  out.y.resize(n);
  auto v = [&](std::size_t i) { return (sign_bits[i] ? -1.0 : 1.0) * amplitudes[i] * s; };
  for (std::size_t k = 0; k < n; ++k) {
    out.x[k] = {v(4 * k), v(4 * k + 1)};
    out.y[k] = {v(4 * k + 2), v(4 * k + 3)};
  }
  return out;
}

HardDemap pas_demap_hard(const Symbols4D& symbols, double e_norm, const AmplitudeAlphabet& alphabet)
{
  if (symbols.x.size() != symbols.y.size()) throw std::invalid_argument("pas_demap_hard: polarization size mismatch");
  const double s = std::sqrt(e_norm);
  HardDemap out;
  out.amplitudes.resize(4 * symbols.size());
  out.sign_bits.resize(4 * symbols.size());
  auto put = [&](std::size_t i, double v) {
    const double a = std::abs(v) * s;
    std::size_t best = 0;
    for (std::size_t q = 1; q < alphabet.size(); ++q)
      if (std::abs(a - alphabet.amplitudes[q]) < std::abs(a - alphabet.amplitudes[best])) best = q;
    out.amplitudes[i] = alphabet.amplitudes[best];
    out.sign_bits[i] = v < 0.0 ? 1 : 0;
  };
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    put(4 * k, symbols.x[k].real());
    put(4 * k + 1, symbols.x[k].imag());
    put(4 * k + 2, symbols.y[k].real());
    put(4 * k + 3, symbols.y[k].imag());
  }
  return out;
}

PasFramer::PasFramer(std::shared_ptr<const EssCodec> codec, int k_bits, int n_symbols_4d, double e_norm)
    : codec_(std::move(codec)), k_(k_bits), n_(n_symbols_4d), blocks_(0), e_norm_(e_norm)
{
  if (!codec_) throw std::invalid_argument("pas framer: null codec");
  if (k_ <= 0 || k_ > codec_->max_bits()) throw std::invalid_argument("pas framer: k_bits not supported by the codec");
  if (n_ <= 0) throw std::invalid_argument("pas framer: n_symbols must be positive");
  const int amps = 4 * n_;
  if (amps % codec_->block_len() != 0)
    throw std::invalid_argument("pas framer: 4 * n_symbols must be a multiple of the DM block length");
  blocks_ = amps / codec_->block_len();
  if (!(e_norm_ > 0.0)) throw std::invalid_argument("pas framer: e_norm must be positive");
}

double PasFramer::rate_bits_per_4d() const
{
  return static_cast<double>(frame_bits()) / n_;
}

ShapingFrame PasFramer::encode(const Bits& bits) const
{
  if (bits.size() != frame_bits()) throw std::invalid_argument("pas framer: wrong frame size");
  ShapingFrame f;
  f.info_bits = bits;
  f.amplitudes.reserve(4 * static_cast<std::size_t>(n_));
  for (int b = 0; b < blocks_; ++b) {
    const auto first = bits.begin() + static_cast<std::ptrdiff_t>(b) * k_;
    const auto block = codec_->encode(Bits(first, first + k_));
    f.amplitudes.insert(f.amplitudes.end(), block.begin(), block.end());
  }
  f.sign_bits.assign(bits.begin() + static_cast<std::ptrdiff_t>(amplitude_bits()), bits.end());
  f.symbols = pas_map(f.amplitudes, f.sign_bits, e_norm_);
  f.net_rate_bits_per_4d = rate_bits_per_4d();
  return f;
}

Bits PasFramer::decode(const Symbols4D& symbols) const
{
  if (symbols.size() != static_cast<std::size_t>(n_)) throw std::invalid_argument("pas framer: wrong symbol count");
  const auto hard = pas_demap_hard(symbols, e_norm_, codec_->alphabet());
  Bits out;
  out.reserve(frame_bits());
  const std::size_t bl = static_cast<std::size_t>(codec_->block_len());
  for (int b = 0; b < blocks_; ++b) {
    const auto first = hard.amplitudes.begin() + static_cast<std::ptrdiff_t>(b * bl);
    const auto bits = codec_->decode(std::vector<int>(first, first + static_cast<std::ptrdiff_t>(bl)), static_cast<std::size_t>(k_));
    out.insert(out.end(), bits.begin(), bits.end());
  }
  out.insert(out.end(), hard.sign_bits.begin(), hard.sign_bits.end());
  return out;
}

} // namespace fiberlab
