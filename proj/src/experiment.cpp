#include "fiberlab/experiment.hpp"

#include "fiberlab/hash.hpp"
#include "fiberlab/random.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <list>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace fiberlab {

std::string to_string(Modulation m)
{
  switch (m) {
  case Modulation::u64qam: return "u64qam";
  case Modulation::pas_mb: return "pas_mb";
  case Modulation::pas_ess: return "pas_ess";
  case Modulation::pas_ess_sel_bs: return "pas_ess_sel_bs";
  case Modulation::pas_ess_sel_ideal: return "pas_ess_sel_ideal";
  }
  return "unknown";
}

Modulation modulation_from_string(const std::string& s)
{
  for (auto m : {Modulation::u64qam, Modulation::pas_mb, Modulation::pas_ess, Modulation::pas_ess_sel_bs,
                 Modulation::pas_ess_sel_ideal})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown modulation: " + s);
}

std::string to_string(CprMethod m) { return m == CprMethod::bps ? "bps" : "mean_phase"; }

CprMethod cpr_method_from_string(const std::string& s)
{
  if (s == "mean_phase") return CprMethod::mean_phase;
  if (s == "bps") return CprMethod::bps;
  throw std::invalid_argument("unknown cpr method: " + s);
}

bool uses_selection(Modulation m) { return m == Modulation::pas_ess_sel_bs || m == Modulation::pas_ess_sel_ideal; }

namespace {

std::string dm_kind_name(DmKind k)
{
  switch (k) {
  case DmKind::ccdm: return "ccdm";
  case DmKind::ess: return "ess";
  case DmKind::mb_iid: return "mb_iid";
  }
  return "unknown";
}

DmKind dm_kind_from(const std::string& s)
{
  if (s == "ccdm") return DmKind::ccdm;
  if (s == "ess") return DmKind::ess;
  if (s == "mb_iid") return DmKind::mb_iid;
  throw std::invalid_argument("unknown DM kind: " + s);
}

bool is_pas(Modulation m) { return m != Modulation::u64qam; }

} // namespace

void ExperimentConfig::validate() const
{
  link.validate();
  plan.validate();
  pulse.validate();
  if (wdm.channels < 1) throw std::invalid_argument("config: wdm.channels must be >= 1");
  if (wdm.channels > 1 && pulse.occupied_bandwidth() > wdm.spacing_hz)
    throw std::invalid_argument("config: symbol_rate * (1 + rolloff) exceeds the channel spacing");
  if (n_symbols < 1) throw std::invalid_argument("config: n_symbols must be positive");
  if (is_pas(modulation)) {
    shaping.validate();
    if (shaping.block_len % 4 != 0) throw std::invalid_argument("config: shaping.block_len must be a multiple of 4");
    if (modulation != Modulation::pas_mb && shaping.kind != DmKind::ess)
      throw std::invalid_argument("config: ESS modulations need shaping.kind = ess");
    if (shaping.k_bits > shaping.block_len * std::log2(static_cast<double>(shaping.alphabet.size())))
      throw std::invalid_argument("config: shaping.k_bits exceeds block_len * log2|A|");
    if (modulation != Modulation::pas_mb && (4 * n_symbols) % static_cast<std::size_t>(shaping.block_len) != 0)
      throw std::invalid_argument("config: 4 * n_symbols must be a multiple of shaping.block_len");
  }
  if (uses_selection(modulation)) {
    selection.validate();
    if (n_symbols % static_cast<std::size_t>(selection.seq_len_4d) != 0)
      throw std::invalid_argument("config: n_symbols must be a multiple of selection.seq_len_4d");
    if ((4 * selection.seq_len_4d) % shaping.block_len != 0)
      throw std::invalid_argument("config: 4 * seq_len_4d must be a multiple of shaping.block_len");
  }
  dbp.validate();
  PulseConfig proc = pulse;
  proc.samples_per_symbol = dbp.samples_per_symbol;
  (void)proc.samples_for(n_symbols);
  if (dbp.engine != DbpEngine::cdc && dbp.coeffs.empty() && train_dbp &&
      (dbp.engine == DbpEngine::essfm || dbp.engine == DbpEngine::cb_essfm)) {
    PulseConfig tp = proc;
    (void)tp.samples_for(training_symbols);
    if (training_symbols < 1024) throw std::invalid_argument("config: training_symbols must be >= 1024");
  }
  if (cpr.method == CprMethod::bps) {
    cpr.bps.validate();
    if (static_cast<std::size_t>(cpr.bps.window_symbols) > n_symbols)
      throw std::invalid_argument("config: CPR window longer than the sequence");
  }
  if (!(linewidth_hz >= 0.0)) throw std::invalid_argument("config: linewidth_hz must be >= 0");
  for (double p : power_sweep_dbm)
    if (!std::isfinite(p)) throw std::invalid_argument("config: non-finite launch power");
}

json to_json(const ExperimentConfig& c)
{
  json j;
  j["link"] = {{"n_spans", c.link.n_spans},
               {"span_km", c.link.span_km},
               {"alpha_db_km", c.link.alpha_db_km},
               {"dispersion_ps_nm_km", c.link.disp_ps_nm_km},
               {"gamma_w_km", c.link.gamma_w_km},
               {"nf_db", c.link.nf_db},
               {"wavelength_nm", c.link.wavelength_nm},
               {"ase", c.link.ase},
               {"steps_per_span", c.plan.steps_per_span},
               {"step_spacing", c.plan.spacing == StepSpacing::logarithmic ? "logarithmic" : "uniform"},
               {"split_ratio", c.plan.split_ratio}};
  j["pulse"] = {{"symbol_rate_hz", c.pulse.symbol_rate}, {"rolloff", c.pulse.rolloff}};
  j["wdm"] = {{"channels", c.wdm.channels}, {"spacing_hz", c.wdm.spacing_hz}};
  j["modulation"] = to_string(c.modulation);
  j["shaping"] = {{"kind", dm_kind_name(c.shaping.kind)},
                  {"block_len", c.shaping.block_len},
                  {"k_bits", c.shaping.k_bits},
                  {"e_max", c.shaping.e_max},
                  {"composition", c.shaping.composition},
                  {"nu", c.shaping.nu},
                  {"alphabet", c.shaping.alphabet.amplitudes}};
  j["selection"] = {{"n_candidates", c.selection.n_candidates},
                    {"seq_len_4d", c.selection.seq_len_4d},
                    {"metric", to_string(c.selection.metric)},
                    {"context_len_4d", c.selection.context_len_4d},
                    {"ideal_steps_per_span", c.selection.ideal_steps_per_span},
                    {"energy_window", c.selection.energy_window},
                    {"model",
                     {{"n_steps", c.selection.model.n_steps},
                      {"n_coeffs", c.selection.model.n_coeffs},
                      {"samples_per_symbol", c.selection.model.samples_per_symbol},
                      {"coeffs", c.selection.model.coeffs},
                      {"train", c.selection.model.train}}}};
  j["dbp"] = {{"engine", to_string(c.dbp.engine)},
              {"n_steps", c.dbp.n_steps},
              {"n_coeffs", c.dbp.n_coeffs},
              {"coeffs", c.dbp.coeffs},
              {"split_ratio", c.dbp.split_ratio},
              {"samples_per_symbol", c.dbp.samples_per_symbol},
              {"fft_block", c.dbp.fft_block},
              {"overlap", c.dbp.overlap},
              {"train", c.train_dbp},
              {"training_symbols", c.training_symbols}};
  j["cpr"] = {{"method", to_string(c.cpr.method)},
              {"window_symbols", c.cpr.bps.window_symbols},
              {"test_phases", c.cpr.bps.test_phases},
              {"symmetry", c.cpr.bps.symmetry}};
  j["linewidth_hz"] = c.linewidth_hz;
  j["power_sweep_dbm"] = c.power_sweep_dbm;
  j["n_symbols"] = c.n_symbols;
  j["master_seed"] = c.master_seed;
  return j;
}

namespace {

class Reader
{
public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where))
  {
    if (!j_.is_object()) throw std::invalid_argument("config: '" + where_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out)
  {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: bad value for '" + where_ + "." + key + "': " + e.what());
    }
  }

  Reader sub(const char* key)
  {
    seen_.insert(key);
    static const json empty = json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, where_.empty() ? key : where_ + "." + key);
  }

  void finish() const
  {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw std::invalid_argument("config: unknown key '" + (where_.empty() ? "" : where_ + ".") + it.key() + "'");
  }

private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

} // namespace

ExperimentConfig config_from_json(const json& j)
{
  ExperimentConfig c;
  Reader root(j, "");
  {
    Reader r = root.sub("link");
    r.get("n_spans", c.link.n_spans);
    r.get("span_km", c.link.span_km);
    r.get("alpha_db_km", c.link.alpha_db_km);
    r.get("dispersion_ps_nm_km", c.link.disp_ps_nm_km);
    r.get("gamma_w_km", c.link.gamma_w_km);
    r.get("nf_db", c.link.nf_db);
    r.get("wavelength_nm", c.link.wavelength_nm);
    r.get("ase", c.link.ase);
    r.get("steps_per_span", c.plan.steps_per_span);
    std::string spacing = "logarithmic";
    r.get("step_spacing", spacing);
    if (spacing == "logarithmic") c.plan.spacing = StepSpacing::logarithmic;
    else if (spacing == "uniform") c.plan.spacing = StepSpacing::uniform;
    else throw std::invalid_argument("config: link.step_spacing must be 'logarithmic' or 'uniform'");
    r.get("split_ratio", c.plan.split_ratio);
    r.finish();
  }
  {
    Reader r = root.sub("pulse");
    r.get("symbol_rate_hz", c.pulse.symbol_rate);
    r.get("rolloff", c.pulse.rolloff);
    r.finish();
  }
  {
    Reader r = root.sub("wdm");
    r.get("channels", c.wdm.channels);
    r.get("spacing_hz", c.wdm.spacing_hz);
    r.finish();
  }
  std::string mod = to_string(c.modulation);
  root.get("modulation", mod);
  c.modulation = modulation_from_string(mod);
  {
    Reader r = root.sub("shaping");
    std::string kind = dm_kind_name(c.shaping.kind);
    r.get("kind", kind);
    c.shaping.kind = dm_kind_from(kind);
    r.get("block_len", c.shaping.block_len);
    r.get("k_bits", c.shaping.k_bits);
    r.get("e_max", c.shaping.e_max);
    r.get("composition", c.shaping.composition);
    r.get("nu", c.shaping.nu);
    r.get("alphabet", c.shaping.alphabet.amplitudes);
    r.finish();
  }
  {
    Reader r = root.sub("selection");
    r.get("n_candidates", c.selection.n_candidates);
    r.get("seq_len_4d", c.selection.seq_len_4d);
    std::string metric = to_string(c.selection.metric);
    r.get("metric", metric);
    c.selection.metric = selection_metric_from_string(metric);
    r.get("context_len_4d", c.selection.context_len_4d);
    r.get("ideal_steps_per_span", c.selection.ideal_steps_per_span);
    r.get("energy_window", c.selection.energy_window);
    Reader m = r.sub("model");
    m.get("n_steps", c.selection.model.n_steps);
    m.get("n_coeffs", c.selection.model.n_coeffs);
    m.get("samples_per_symbol", c.selection.model.samples_per_symbol);
    m.get("coeffs", c.selection.model.coeffs);
    m.get("train", c.selection.model.train);
    m.finish();
    r.finish();
  }
  {
    Reader r = root.sub("dbp");
    std::string engine = to_string(c.dbp.engine);
    r.get("engine", engine);
    c.dbp.engine = dbp_engine_from_string(engine);
    r.get("n_steps", c.dbp.n_steps);
    r.get("n_coeffs", c.dbp.n_coeffs);
    r.get("coeffs", c.dbp.coeffs);
    r.get("split_ratio", c.dbp.split_ratio);
    r.get("samples_per_symbol", c.dbp.samples_per_symbol);
    r.get("fft_block", c.dbp.fft_block);
    r.get("overlap", c.dbp.overlap);
    r.get("train", c.train_dbp);
    r.get("training_symbols", c.training_symbols);
    r.finish();
  }
  {
    Reader r = root.sub("cpr");
    std::string method = to_string(c.cpr.method);
    r.get("method", method);
    c.cpr.method = cpr_method_from_string(method);
    r.get("window_symbols", c.cpr.bps.window_symbols);
    r.get("test_phases", c.cpr.bps.test_phases);
    r.get("symmetry", c.cpr.bps.symmetry);
    r.finish();
  }
  root.get("linewidth_hz", c.linewidth_hz);
  root.get("power_sweep_dbm", c.power_sweep_dbm);
  root.get("n_symbols", c.n_symbols);
  root.get("master_seed", c.master_seed);
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path)
{
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    j = json::parse(f, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

std::string canonical_config(const ExperimentConfig& cfg)
{
  json j = to_json(cfg);
  j.erase("power_sweep_dbm");
  return j.dump();
}

namespace {

std::string hex64(std::uint64_t v)
{
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string power_tag(double p)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", p);
  return buf;
}

std::uint64_t stream_seed(const ExperimentConfig& cfg, std::uint64_t seed, rng::Role role, std::uint64_t idx = 0)
{
  return rng::derive(cfg.master_seed, {seed, static_cast<std::uint64_t>(role), idx});
}

void atomic_write(const fs::path& path, const std::string& content)
{
  fs::create_directories(path.parent_path());
  static std::atomic<unsigned> counter{0};
  const fs::path tmp = path.string() + ".tmp" + std::to_string(counter++) + "_" +
                       std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << content;
    f.flush();
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::optional<std::string> read_file(const fs::path& path)
{
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<double> empirical_priors(const std::vector<int>& amplitudes, const AmplitudeAlphabet& alphabet)
{
  std::vector<double> p(alphabet.size(), 0.0);
  for (int a : amplitudes) p[alphabet.index_of(a)] += 1.0;
  for (auto& v : p) v /= static_cast<double>(amplitudes.size());
  return p;
}

struct EssSetup
{
  std::shared_ptr<const EssCodec> codec;
  std::vector<double> priors;
  double e_norm = 0.0;
};

EssSetup ess_setup(const ExperimentConfig& cfg, const RunContext& ctx)
{
  const auto& s = cfg.shaping;
  const long e_max = s.e_max > 0 ? s.e_max : ess_min_emax(s.alphabet, s.block_len, s.k_bits);
  EssSetup out;
  out.codec = ess_codec(s.alphabet, s.block_len, e_max, ctx.cache_dir.empty() ? "" : (fs::path(ctx.cache_dir) / "trellis").string());
  if (out.codec->max_bits() < s.k_bits) throw std::invalid_argument("config: e_max admits fewer than 2^k_bits sequences");
  out.priors = out.codec->amplitude_distribution(BigUint(1) << s.k_bits);
  out.e_norm = pas_energy_norm(out.priors, s.alphabet);
  return out;
}

double shaping_rate(const DmConfig& s) { return 4.0 + 4.0 * s.k_bits / static_cast<double>(s.block_len); }

// Selection outcome cache: chosen index and metric statistics per frame.
std::string selection_key(const ExperimentConfig& cfg, SelectionMetric metric, double power_dbm, std::uint64_t seed)
{
  json j = to_json(cfg);
  json k;
  k["link"] = j["link"];
  k["pulse"] = j["pulse"];
  k["shaping"] = j["shaping"];
  k["selection"] = j["selection"];
  k["selection"]["metric"] = to_string(metric);
  k["n_symbols"] = cfg.n_symbols;
  k["master_seed"] = cfg.master_seed;
  k["power"] = power_tag(power_dbm);
  k["seed"] = seed;
  return hex64(fnv1a64(k.dump()));
}

std::mutex g_sel_mutex;
std::map<std::string, std::vector<FrameSelection>> g_sel_memo;

json frames_to_json(const std::vector<FrameSelection>& frames)
{
  json a = json::array();
  for (const auto& f : frames) a.push_back({f.index, f.metric_selected, f.metric_first, f.metric_mean});
  return a;
}

std::vector<FrameSelection> frames_from_json(const json& a)
{
  std::vector<FrameSelection> out;
  for (const auto& e : a) out.push_back({e.at(0).get<int>(), e.at(1).get<double>(), e.at(2).get<double>(), e.at(3).get<double>()});
  return out;
}

} // namespace

std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a64(canonical_config(cfg))); }

std::string default_cache_dir()
{
  const char* v = std::getenv("FIBERLAB_CACHE_DIR");
  return v ? std::string(v) : std::string();
}

TxData make_tx(const ExperimentConfig& cfg, double power_dbm, std::uint64_t seed, const RunContext& ctx)
{
  cfg.validate();
  const std::size_t n = cfg.n_symbols;
  const AmplitudeAlphabet& alphabet = cfg.shaping.alphabet;
  TxData tx;
  Bits signs;
  switch (cfg.modulation) {
  case Modulation::u64qam: {
    // Uniform square QAM through the same amplitude/sign mapping.
    const AmplitudeAlphabet uni;
    rng::Stream s(stream_seed(cfg, seed, rng::Role::tx_data));
    tx.amplitudes.resize(4 * n);
    for (auto& a : tx.amplitudes) a = uni.amplitudes[s.bits() >> 62];
    signs = rng::random_bits(4 * n, stream_seed(cfg, seed, rng::Role::tx_signs));
    tx.amplitude_priors.assign(uni.size(), 0.25);
    tx.rates = {12.0, 12.0};
    tx.symbols = pas_map(tx.amplitudes, signs, pas_energy_norm(tx.amplitude_priors, uni));
    return tx;
  }
  case Modulation::pas_mb: {
    const double nu = cfg.shaping.kind == DmKind::mb_iid && cfg.shaping.nu > 0.0
                          ? cfg.shaping.nu
                          : mb_fit_nu(cfg.shaping.k_bits / static_cast<double>(cfg.shaping.block_len), alphabet);
    tx.amplitudes = mb_sample(nu, 4 * n, stream_seed(cfg, seed, rng::Role::tx_data), alphabet);
    signs = rng::random_bits(4 * n, stream_seed(cfg, seed, rng::Role::tx_signs));
    tx.amplitude_priors = mb_distribution(nu, alphabet);
    const double h = 4.0 + 4.0 * entropy_bits(tx.amplitude_priors);
    tx.rates = {h, h};
    break;
  }
  case Modulation::pas_ess: {
    const EssSetup es = ess_setup(cfg, ctx);
    const PasFramer framer(es.codec, cfg.shaping.k_bits, cfg.shaping.block_len / 4, es.e_norm);
    const std::size_t frames = n / static_cast<std::size_t>(framer.n_symbols());
    for (std::size_t f = 0; f < frames; ++f) {
      const auto fr = framer.encode(rng::random_bits(framer.frame_bits(), stream_seed(cfg, seed, rng::Role::tx_data, f)));
      tx.amplitudes.insert(tx.amplitudes.end(), fr.amplitudes.begin(), fr.amplitudes.end());
      signs.insert(signs.end(), fr.sign_bits.begin(), fr.sign_bits.end());
    }
    tx.amplitude_priors = es.priors;
    tx.rates = {shaping_rate(cfg.shaping), 4.0 + 4.0 * entropy_bits(es.priors)};
    break;
  }
  case Modulation::pas_ess_sel_bs:
  case Modulation::pas_ess_sel_ideal: {
    const EssSetup es = ess_setup(cfg, ctx);
    const SelectionConfig& sc = cfg.selection;
    const PasFramer framer(es.codec, cfg.shaping.k_bits, sc.seq_len_4d, es.e_norm);
    const SelectionMetric metric =
        cfg.modulation == Modulation::pas_ess_sel_ideal ? SelectionMetric::nli_ideal : sc.metric;
    const std::uint64_t mask_seed = stream_seed(cfg, seed, rng::Role::scramble_mask);
    const std::size_t frames = n / static_cast<std::size_t>(sc.seq_len_4d);
    std::vector<Bits> info(frames);
    for (std::size_t f = 0; f < frames; ++f)
      info[f] = rng::random_bits(selection_info_bits(framer, sc), stream_seed(cfg, seed, rng::Role::tx_data, f));

    const std::string key = selection_key(cfg, metric, power_dbm, seed);
    std::optional<std::vector<FrameSelection>> chosen;
    {
      std::lock_guard lock(g_sel_mutex);
      if (auto it = g_sel_memo.find(key); it != g_sel_memo.end()) chosen = it->second;
    }
    const fs::path disk = ctx.cache_dir.empty() ? fs::path() : fs::path(ctx.cache_dir) / "selection" / (key + ".json");
    if (!chosen && !disk.empty()) {
      if (auto text = read_file(disk)) {
        try {
          const json j = json::parse(*text);
          if (j.at("key").get<std::string>() == key) chosen = frames_from_json(j.at("frames"));
        } catch (const std::exception&) {
          chosen.reset();
        }
      }
    }
    if (chosen && chosen->size() == frames) {
      for (std::size_t f = 0; f < frames; ++f) {
        const auto fr = build_candidate(info[f], framer, sc, mask_seed, (*chosen)[f].index);
        tx.amplitudes.insert(tx.amplitudes.end(), fr.amplitudes.begin(), fr.amplitudes.end());
        signs.insert(signs.end(), fr.sign_bits.begin(), fr.sign_bits.end());
      }
      tx.frames = *chosen;
    } else {
      SelectionConfig run_cfg = sc;
      run_cfg.metric = metric;
      const MetricFn fn = make_metric(run_cfg, cfg.link, cfg.pulse, power_dbm, stream_seed(cfg, seed, rng::Role::metric_training));
      SelectionRun run = select_frames(info, framer, run_cfg, fn, mask_seed);
      tx.amplitudes = std::move(run.amplitudes);
      signs = std::move(run.sign_bits);
      tx.frames = std::move(run.frames);
      if (!disk.empty()) {
        try {
          atomic_write(disk, json{{"key", key}, {"frames", frames_to_json(tx.frames)}}.dump());
        } catch (const std::exception&) {
          // cache is best effort
        }
      }
    }
    {
      std::lock_guard lock(g_sel_mutex);
      g_sel_memo[key] = tx.frames;
    }
    tx.selection_loss_4d = rate_loss(sc);
    tx.amplitude_priors = empirical_priors(tx.amplitudes, alphabet);
    tx.rates = {shaping_rate(cfg.shaping) - tx.selection_loss_4d, 4.0 + 4.0 * entropy_bits(tx.amplitude_priors)};
    break;
  }
  }
  tx.symbols = pas_map(tx.amplitudes, signs, pas_energy_norm(tx.amplitude_priors, alphabet));
  return tx;
}

namespace {

std::string link_key(const ExperimentConfig& cfg, double power_dbm, std::uint64_t seed)
{
  json j = to_json(cfg);
  j.erase("power_sweep_dbm");
  j.erase("cpr");
  const double sps = cfg.dbp.samples_per_symbol;
  j["dbp"] = {{"samples_per_symbol", sps}};
  j["power"] = power_tag(power_dbm);
  j["seed"] = seed;
  return j.dump();
}

std::mutex g_link_mutex;
std::list<std::pair<std::string, std::shared_ptr<const LinkRun>>> g_link_memo;
constexpr std::size_t link_memo_size = 3;

} // namespace

std::shared_ptr<const LinkRun> simulate_link(const ExperimentConfig& cfg, double power_dbm, std::uint64_t seed,
                                             const RunContext& ctx)
{
  const std::string key = link_key(cfg, power_dbm, seed);
  {
    std::lock_guard lock(g_link_mutex);
    for (auto it = g_link_memo.begin(); it != g_link_memo.end(); ++it)
      if (it->first == key) {
        g_link_memo.splice(g_link_memo.begin(), g_link_memo, it);
        return it->second;
      }
  }
  auto run = std::make_shared<LinkRun>();
  run->tx = make_tx(cfg, power_dbm, seed, ctx);

  PulseConfig sim = cfg.pulse;
  sim.samples_per_symbol = simulation_samples_per_symbol(cfg.wdm.channels, cfg.wdm.spacing_hz, cfg.pulse);
  Signal center = rrc_shape(run->tx.symbols, sim);
  run->launch_scale = power_scale(center, power_dbm);
  center = scale(center, run->launch_scale);
  if (cfg.linewidth_hz > 0.0)
    center = apply_phase_noise(center, cfg.linewidth_hz, stream_seed(cfg, seed, rng::Role::phase_noise_tx));

  const int n_ch = cfg.wdm.channels;
  const int cut = n_ch / 2;
  std::vector<WdmChannel> channels;
  for (int ch = 0; ch < n_ch; ++ch) {
    const double offset = (ch - (n_ch - 1) / 2.0) * cfg.wdm.spacing_hz;
    if (ch == cut) {
      channels.push_back({center, offset});
      continue;
    }
    // Interferers: uniform 64-QAM with independent data.
    ExperimentConfig icfg = cfg;
    icfg.modulation = Modulation::u64qam;
    const TxData itx = make_tx(icfg, power_dbm, rng::derive(seed, {static_cast<std::uint64_t>(rng::Role::interferer),
                                                                   static_cast<std::uint64_t>(ch)}));
    channels.push_back({set_power(rrc_shape(itx.symbols, sim), power_dbm), offset});
  }
  const double cut_offset = channels[static_cast<std::size_t>(cut)].offset_hz;
  const Signal tx_field = n_ch == 1 ? channels.front().signal : wdm_mux(channels);
  channels.clear();
  const Signal rx_field = ssfm_forward(tx_field, cfg.link, cfg.plan, stream_seed(cfg, seed, rng::Role::ase));

  PulseConfig proc = cfg.pulse;
  proc.samples_per_symbol = cfg.dbp.samples_per_symbol;
  run->rx = wdm_demux(rx_field, cut_offset, proc);
  if (cfg.linewidth_hz > 0.0)
    run->rx = apply_phase_noise(run->rx, cfg.linewidth_hz, stream_seed(cfg, seed, rng::Role::phase_noise_rx));

  std::lock_guard lock(g_link_mutex);
  g_link_memo.emplace_front(key, run);
  while (g_link_memo.size() > link_memo_size)
    g_link_memo.pop_back();
  return run;
}

namespace {

std::mutex g_train_mutex;
std::map<std::string, TrainingResult> g_train_memo;

} // namespace

void clear_simulation_cache()
{
  {
    std::lock_guard lock(g_link_mutex);
    g_link_memo.clear();
  }
  {
    std::lock_guard lock(g_sel_mutex);
    g_sel_memo.clear();
  }
  std::lock_guard lock(g_train_mutex);
  g_train_memo.clear();
}

namespace {

bool trainable(const DbpConfig& d)
{
  return (d.engine == DbpEngine::essfm || d.engine == DbpEngine::cb_essfm) && d.coeffs.empty();
}

} // namespace

TrainingResult dbp_training(const ExperimentConfig& cfg, double power_dbm, const RunContext& ctx)
{
  if (cfg.dbp.engine != DbpEngine::essfm && cfg.dbp.engine != DbpEngine::cb_essfm)
    throw std::invalid_argument("dbp_training: engine must be essfm or cb_essfm");
  ExperimentConfig tcfg = cfg;
  tcfg.n_symbols = cfg.training_symbols;
  tcfg.linewidth_hz = 0.0;
  tcfg.cpr = {};
  tcfg.power_sweep_dbm.clear();
  if (uses_selection(tcfg.modulation)) tcfg.modulation = Modulation::pas_ess;
  tcfg.dbp.coeffs.clear();

  json k = to_json(tcfg);
  k.erase("selection");
  k["power"] = power_tag(power_dbm);
  const std::string key = hex64(fnv1a64(k.dump()));
  {
    std::lock_guard lock(g_train_mutex);
    if (auto it = g_train_memo.find(key); it != g_train_memo.end()) return it->second;
  }
  const fs::path disk = ctx.cache_dir.empty() ? fs::path() : fs::path(ctx.cache_dir) / "training" / (key + ".json");
  if (!disk.empty()) {
    if (auto text = read_file(disk)) {
      try {
        const json j = json::parse(*text);
        if (j.at("key").get<std::string>() == key) {
          TrainingResult r;
          r.coeffs = j.at("coeffs").get<std::vector<double>>();
          r.split_ratio = j.at("split_ratio").get<double>();
          r.mse = j.at("mse").get<double>();
          r.initial_mse = j.at("initial_mse").get<double>();
          r.evaluations = j.at("evaluations").get<int>();
          r.converged = j.at("converged").get<bool>();
          std::lock_guard lock(g_train_mutex);
          return g_train_memo.emplace(key, r).first->second;
        }
      } catch (const std::exception&) {
        // fall through and retrain
      }
    }
  }

  const std::uint64_t tseed = rng::derive(cfg.master_seed, rng::Role::training);
  const auto run = simulate_link(tcfg, power_dbm, tseed, ctx);
  Symbols4D target = run->tx.symbols;
  for (auto& v : target.x) v *= run->launch_scale;
  for (auto& v : target.y) v *= run->launch_scale;
  PulseConfig proc = cfg.pulse;
  proc.samples_per_symbol = cfg.dbp.samples_per_symbol;
  TrainOptions opts;
  opts.min_symbols = std::min<std::size_t>(opts.min_symbols, cfg.training_symbols);
  const TrainingResult r = train_essfm(target, run->rx, cfg.link, tcfg.dbp, proc, opts);
  if (!disk.empty()) {
    try {
      atomic_write(disk, json{{"key", key},
                              {"coeffs", r.coeffs},
                              {"split_ratio", r.split_ratio},
                              {"mse", r.mse},
                              {"initial_mse", r.initial_mse},
                              {"evaluations", r.evaluations},
                              {"converged", r.converged}}
                             .dump());
    } catch (const std::exception&) {
    }
  }
  std::lock_guard lock(g_train_mutex);
  return g_train_memo.emplace(key, r).first->second;
}

ReceiverOutput receive(const ExperimentConfig& cfg, const LinkRun& link_run, double power_dbm, std::uint64_t seed,
                       const RunContext& ctx)
{
  (void)seed;
  ReceiverOutput out;
  out.dbp = cfg.dbp;
  if (trainable(out.dbp)) {
    if (cfg.train_dbp) {
      const TrainingResult t = dbp_training(cfg, power_dbm, ctx);
      out.dbp.coeffs = t.coeffs;
      out.dbp.split_ratio = t.split_ratio;
    } else {
      out.dbp.coeffs.assign(static_cast<std::size_t>(out.dbp.n_coeffs) + 1, 0.0);
      out.dbp.coeffs[0] = ssfm_step_weight(cfg.link, out.dbp.n_steps);
    }
  }
  const Signal eq = backpropagate(link_run.rx, cfg.link, out.dbp);
  PulseConfig proc = cfg.pulse;
  proc.samples_per_symbol = cfg.dbp.samples_per_symbol;
  Symbols4D y = matched_filter_sample(eq, proc);
  const double inv = 1.0 / link_run.launch_scale;
  for (auto& v : y.x) v *= inv;
  for (auto& v : y.y) v *= inv;

  const TxData& tx = link_run.tx;
  const std::vector<int>& amps =
      cfg.modulation == Modulation::u64qam ? AmplitudeAlphabet{}.amplitudes : cfg.shaping.alphabet.amplitudes;
  const Constellation constellation = Constellation::from_amplitudes(amps, tx.amplitude_priors);
  if (cfg.cpr.method == CprMethod::bps) {
    const BpsResult4D r = bps_cpr(y, constellation, cfg.cpr.bps);
    out.rx = resolve_ambiguity(r.corrected, tx.symbols, cfg.cpr.bps.symmetry);
  } else {
    out.rx = mean_phase_remove(y, tx.symbols);
  }
  out.air = air_estimate(out.rx, tx.symbols, constellation, tx.rates, cfg.pulse.symbol_rate, cfg.wdm.spacing_hz);
  out.complexity = complexity_rm2d(out.dbp, cfg.link, cfg.pulse.symbol_rate);
  return out;
}

namespace {

json record_to_json(const ResultRecord& r)
{
  return json{{"config_hash", r.config_hash},
              {"modulation", r.modulation},
              {"power_dbm", r.power_dbm},
              {"seed", r.seed},
              {"se_bits_s_hz", r.se_bits_s_hz},
              {"air_4d", r.air_4d},
              {"effective_snr_db", r.effective_snr_db},
              {"rm_per_2d", r.rm_per_2d},
              {"wall_time_s", r.wall_time_s},
              {"dbp_engine", r.dbp_engine},
              {"dbp_steps", r.dbp_steps},
              {"channels", r.channels},
              {"cpr", r.cpr},
              {"linewidth_hz", r.linewidth_hz},
              {"net_rate_4d", r.net_rate_4d},
              {"selection_loss_4d", r.selection_loss_4d},
              {"se_gross_bits_s_hz", r.se_gross_bits_s_hz},
              {"sel_frames", r.sel_frames},
              {"sel_strict_frames", r.sel_strict_frames},
              {"sel_metric_ratio", r.sel_metric_ratio},
              {"status", r.status},
              {"message", r.message},
              {"frames", frames_to_json(r.frames)}};
}

ResultRecord record_from_json(const json& j)
{
  ResultRecord r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.modulation = j.at("modulation").get<std::string>();
  r.power_dbm = j.at("power_dbm").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.se_bits_s_hz = j.at("se_bits_s_hz").get<double>();
  r.air_4d = j.at("air_4d").get<double>();
  r.effective_snr_db = j.at("effective_snr_db").get<double>();
  r.rm_per_2d = j.at("rm_per_2d").get<double>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  r.dbp_engine = j.at("dbp_engine").get<std::string>();
  r.dbp_steps = j.at("dbp_steps").get<int>();
  r.channels = j.at("channels").get<int>();
  r.cpr = j.at("cpr").get<std::string>();
  r.linewidth_hz = j.at("linewidth_hz").get<double>();
  r.net_rate_4d = j.at("net_rate_4d").get<double>();
  r.selection_loss_4d = j.at("selection_loss_4d").get<double>();
  r.se_gross_bits_s_hz = j.at("se_gross_bits_s_hz").get<double>();
  r.sel_frames = j.at("sel_frames").get<int>();
  r.sel_strict_frames = j.at("sel_strict_frames").get<int>();
  r.sel_metric_ratio = j.at("sel_metric_ratio").get<double>();
  r.status = j.at("status").get<std::string>();
  r.message = j.at("message").get<std::string>();
  r.frames = frames_from_json(j.at("frames"));
  return r;
}

ResultRecord base_record(const ExperimentConfig& cfg, const std::string& hash, double power_dbm, std::uint64_t seed)
{
  ResultRecord r;
  r.config_hash = hash;
  r.modulation = to_string(cfg.modulation);
  r.power_dbm = power_dbm;
  r.seed = seed;
  r.dbp_engine = to_string(cfg.dbp.engine);
  r.dbp_steps = cfg.dbp.engine == DbpEngine::cdc ? 0 : cfg.dbp.n_steps;
  r.channels = cfg.wdm.channels;
  r.cpr = to_string(cfg.cpr.method);
  r.linewidth_hz = cfg.linewidth_hz;
  return r;
}

} // namespace

ResultRecord run_point(const ExperimentConfig& cfg, double power_dbm, std::uint64_t seed, const RunContext& ctx)
{
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  cfg.validate();
  const std::string hash = config_hash(cfg);
  const fs::path disk = ctx.cache_dir.empty()
                            ? fs::path()
                            : fs::path(ctx.cache_dir) / "results" /
                                  (hash + "_" + power_tag(power_dbm) + "_" + std::to_string(seed) + ".json");
  if (!disk.empty()) {
    if (auto text = read_file(disk)) {
      try {
        ResultRecord r = record_from_json(json::parse(*text));
        if (r.config_hash == hash && r.seed == seed && r.power_dbm == power_dbm) {
          r.cached = true;
          r.wall_time_s = elapsed();
          return r;
        }
      } catch (const std::exception&) {
        // recompute on a corrupt entry
      }
    }
  }

  const auto run = simulate_link(cfg, power_dbm, seed, ctx);
  const ReceiverOutput out = receive(cfg, *run, power_dbm, seed, ctx);

  ResultRecord r = base_record(cfg, hash, power_dbm, seed);
  r.se_bits_s_hz = out.air.se_bits_s_hz;
  r.air_4d = out.air.air_bits_per_4d;
  r.effective_snr_db = out.air.effective_snr_db;
  r.rm_per_2d = out.complexity.rm_per_2d;
  r.net_rate_4d = run->tx.rates.transmission_rate_4d;
  r.selection_loss_4d = run->tx.selection_loss_4d;
  r.se_gross_bits_s_hz = (out.air.net_air_bits_per_4d + run->tx.selection_loss_4d) * cfg.pulse.symbol_rate / cfg.wdm.spacing_hz;
  r.frames = run->tx.frames;
  r.sel_frames = static_cast<int>(r.frames.size());
  double sum_sel = 0.0, sum_first = 0.0;
  for (const auto& f : r.frames) {
    if (f.metric_selected < f.metric_first) ++r.sel_strict_frames;
    sum_sel += f.metric_selected;
    sum_first += f.metric_first;
  }
  r.sel_metric_ratio = sum_first > 0.0 ? sum_sel / sum_first : 0.0;
  if (!disk.empty()) {
    try {
      atomic_write(disk, record_to_json(r).dump());
    } catch (const std::exception&) {
    }
  }
  r.wall_time_s = elapsed();
  return r;
}

SweepResult run_sweep(const ExperimentConfig& cfg, const SweepOptions& opts)
{
  cfg.validate();
  std::vector<ExperimentConfig> configs;
  if (opts.dbp_steps.empty()) {
    configs.push_back(cfg);
  } else {
    if (cfg.dbp.engine == DbpEngine::cdc) throw std::invalid_argument("run_sweep: a DBP step grid needs a DBP engine");
    for (int s : opts.dbp_steps) {
      ExperimentConfig c = cfg;
      c.dbp.n_steps = s;
      c.validate();
      configs.push_back(std::move(c));
    }
  }
  struct Task
  {
    std::size_t cfg;
    double power;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  SweepResult result;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    result.snapshots[config_hash(configs[c])] = canonical_config(configs[c]);
    for (auto seed : opts.seeds)
      for (double p : cfg.power_sweep_dbm) tasks.push_back({c, p, seed});
  }
  result.records.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& t = tasks[i];
      try {
        result.records[i] = run_point(configs[t.cfg], t.power, t.seed, opts.context);
      } catch (const std::exception& e) {
        ResultRecord r = base_record(configs[t.cfg], config_hash(configs[t.cfg]), t.power, t.seed);
        r.status = "error";
        r.message = e.what();
        const double nan = std::numeric_limits<double>::quiet_NaN();
        r.se_bits_s_hz = r.air_4d = r.effective_snr_db = r.rm_per_2d = nan;
        result.records[i] = r;
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(tasks.size())));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return result;
}

PeakEstimate peak_se(const std::vector<double>& powers, const std::vector<double>& se)
{
  if (powers.size() != se.size() || powers.empty()) throw std::invalid_argument("peak_se: empty or mismatched input");
  std::vector<std::size_t> order(powers.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return powers[a] < powers[b]; });
  std::size_t best = 0;
  for (std::size_t i = 1; i < order.size(); ++i)
    if (se[order[i]] > se[order[best]]) best = i;
  PeakEstimate p{powers[order[best]], se[order[best]], false};
  if (best == 0 || best + 1 == order.size()) return p;
  const double x0 = powers[order[best - 1]], x1 = powers[order[best]], x2 = powers[order[best + 1]];
  const double y0 = se[order[best - 1]], y1 = se[order[best]], y2 = se[order[best + 1]];
  const double den = (x0 - x1) * (x0 - x2) * (x1 - x2);
  const double a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den;
  const double b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den;
  const double c = (x1 * x2 * (x1 - x2) * y0 + x2 * x0 * (x2 - x0) * y1 + x0 * x1 * (x0 - x1) * y2) / den;
  if (!(a < 0.0)) return p;
  const double xv = std::clamp(-b / (2.0 * a), x0, x2);
  p.power_dbm = xv;
  p.se_bits_s_hz = std::max(y1, (a * xv + b) * xv + c);
  p.interior = true;
  return p;
}

std::vector<std::string> results_columns()
{
  return {"config_hash", "modulation",  "power_dbm",   "seed",           "se_bits_s_hz",      "air_4d",
          "effective_snr_db", "rm_per_2d", "wall_time_s", "dbp_engine", "dbp_steps",   "channels",
          "cpr",         "linewidth_hz", "net_rate_4d", "selection_loss_4d", "se_gross_bits_s_hz", "sel_frames",
          "sel_strict_frames", "sel_metric_ratio", "status", "message"};
}

namespace {

std::string num(double v)
{
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string csv_field(const std::string& s)
{
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

std::vector<std::string> split_csv_line(const std::string& line)
{
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string join(const std::vector<std::string>& v)
{
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + csv_field(v[i]);
  return s + "\n";
}

std::string series_label(const ResultRecord& r)
{
  return r.dbp_engine + (r.dbp_steps > 0 ? std::to_string(r.dbp_steps) : std::string()) + "_" + r.cpr;
}

} // namespace

std::string format_results_csv(const std::vector<ResultRecord>& records)
{
  std::string out = "# fiberlab results schema " + std::to_string(results_schema_version) + "\n";
  out += join(results_columns());
  for (const auto& r : records) {
    // Messages are free text: keep them on one line.
    std::string msg = r.message;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out += join({r.config_hash, r.modulation, num(r.power_dbm), std::to_string(r.seed), num(r.se_bits_s_hz),
                 num(r.air_4d), num(r.effective_snr_db), num(r.rm_per_2d), num(r.wall_time_s), r.dbp_engine,
                 std::to_string(r.dbp_steps), std::to_string(r.channels), r.cpr, num(r.linewidth_hz),
                 num(r.net_rate_4d), num(r.selection_loss_4d), num(r.se_gross_bits_s_hz), std::to_string(r.sel_frames),
                 std::to_string(r.sel_strict_frames), num(r.sel_metric_ratio), r.status, msg});
  }
  return out;
}

std::vector<ResultRecord> parse_results_csv(const std::string& text)
{
  std::istringstream is(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<ResultRecord> out;
  int schema = -1;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string tag = "# fiberlab results schema ";
      if (line.rfind(tag, 0) == 0) schema = std::stoi(line.substr(tag.size()));
      continue;
    }
    if (header.empty()) {
      header = split_csv_line(line);
      if (schema != results_schema_version || header != results_columns())
        throw std::invalid_argument("results.csv: unsupported schema or column layout");
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw std::invalid_argument("results.csv: wrong field count in: " + line);
    auto d = [&](std::size_t i) { return std::stod(f[i]); };
    ResultRecord r;
    r.config_hash = f[0];
    r.modulation = f[1];
    r.power_dbm = d(2);
    r.seed = std::stoull(f[3]);
    r.se_bits_s_hz = d(4);
    r.air_4d = d(5);
    r.effective_snr_db = d(6);
    r.rm_per_2d = d(7);
    r.wall_time_s = d(8);
    r.dbp_engine = f[9];
    r.dbp_steps = std::stoi(f[10]);
    r.channels = std::stoi(f[11]);
    r.cpr = f[12];
    r.linewidth_hz = d(13);
    r.net_rate_4d = d(14);
    r.selection_loss_4d = d(15);
    r.se_gross_bits_s_hz = d(16);
    r.sel_frames = std::stoi(f[17]);
    r.sel_strict_frames = std::stoi(f[18]);
    r.sel_metric_ratio = d(19);
    r.status = f[20];
    r.message = f[21];
    out.push_back(std::move(r));
  }
  return out;
}

void emit_report(const std::vector<ResultRecord>& records, const std::string& out_dir,
                 const std::map<std::string, std::string>& snapshots)
{
  const fs::path out(out_dir);
  fs::create_directories(out);
  atomic_write(out / "results.csv", format_results_csv(records));

  std::string sel = join({"config_hash", "modulation", "power_dbm", "seed", "frame", "index", "metric_selected",
                          "metric_candidate0", "metric_mean"});
  for (const auto& r : records)
    for (std::size_t f = 0; f < r.frames.size(); ++f) {
      const auto& fr = r.frames[f];
      sel += join({r.config_hash, r.modulation, num(r.power_dbm), std::to_string(r.seed), std::to_string(f),
                   std::to_string(fr.index), num(fr.metric_selected), num(fr.metric_first), num(fr.metric_mean)});
    }
  atomic_write(out / "selection.csv", sel);

  // Per-modulation series averaged over seeds, one block per receiver configuration.
  struct Acc
  {
    double se = 0, air = 0, snr = 0;
    int n = 0;
  };
  struct Group
  {
    ResultRecord first;
    std::map<double, Acc> by_power;
  };
  std::map<std::string, std::map<std::string, Group>> series;  // modulation -> config hash -> group
  for (const auto& r : records) {
    if (r.status != "ok") continue;
    auto& g = series[r.modulation][r.config_hash];
    if (g.by_power.empty()) g.first = r;
    auto& a = g.by_power[r.power_dbm];
    a.se += r.se_bits_s_hz;
    a.air += r.air_4d;
    a.snr += r.effective_snr_db;
    ++a.n;
  }
  std::string peak = join({"modulation", "config_hash", "receiver", "channels", "linewidth_hz", "rm_per_2d",
                           "peak_power_dbm", "peak_se_bits_s_hz", "interior"});
  for (const auto& [mod, groups] : series) {
    std::string text = join({"config_hash", "receiver", "power_dbm", "se_bits_s_hz", "air_4d", "effective_snr_db", "n_seeds"});
    for (const auto& [hash, g] : groups) {
      std::vector<double> p, s;
      for (const auto& [power, a] : g.by_power) {
        text += join({hash, series_label(g.first), num(power), num(a.se / a.n), num(a.air / a.n), num(a.snr / a.n),
                      std::to_string(a.n)});
        p.push_back(power);
        s.push_back(a.se / a.n);
      }
      const PeakEstimate pk = peak_se(p, s);
      peak += join({mod, hash, series_label(g.first), std::to_string(g.first.channels), num(g.first.linewidth_hz),
                    num(g.first.rm_per_2d), num(pk.power_dbm), num(pk.se_bits_s_hz), pk.interior ? "1" : "0"});
    }
    atomic_write(out / ("series_" + mod + ".csv"), text);
  }
  atomic_write(out / "peak.csv", peak);
  for (const auto& [hash, canon] : snapshots)
    atomic_write(out / "configs" / (hash + ".json"), json::parse(canon).dump(2) + "\n");
}

} // namespace fiberlab
