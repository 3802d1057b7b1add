#include "fiberlab/experiment.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace fiberlab;

namespace {

// "a:step:b" (inclusive) or a comma-separated list; empty means no points.
std::vector<double> parse_powers(const std::string& text)
{
  std::vector<double> out;
  if (text.empty()) return out;
  if (text.find(':') != std::string::npos) {
    double a = 0, step = 0, b = 0;
    char c1 = 0, c2 = 0;
    std::istringstream is(text);
    if (!(is >> a >> c1 >> step >> c2 >> b) || c1 != ':' || c2 != ':' || !(step > 0.0))
      throw std::invalid_argument("--powers: expected start:step:stop with a positive step");
    const long n = static_cast<long>(std::floor((b - a) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(a + static_cast<double>(i) * step);
    return out;
  }
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("--powers: bad value '" + item + "'");
    out.push_back(v);
  }
  return out;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, const std::vector<std::uint64_t>& seeds,
            const std::string& powers, bool powers_given, const std::vector<int>& dbp_steps, int jobs)
{
  ExperimentConfig cfg = load_config(config_path);
  if (powers_given) cfg.power_sweep_dbm = parse_powers(powers);
  SweepOptions opts;
  opts.seeds = seeds.empty() ? std::vector<std::uint64_t>{1} : seeds;
  opts.dbp_steps = dbp_steps;
  opts.jobs = jobs;
  opts.context.cache_dir = default_cache_dir();
  if (cfg.power_sweep_dbm.empty()) std::cerr << "warning: empty power list, nothing to run\n";
  const SweepResult res = run_sweep(cfg, opts);
  emit_report(res.records, out_dir, res.snapshots);
  int failed = 0;
  for (const auto& r : res.records) {
    if (r.status != "ok") {
      ++failed;
      std::cerr << "point " << r.power_dbm << " dBm seed " << r.seed << " failed: " << r.message << "\n";
      continue;
    }
    std::cout << r.modulation << " " << r.dbp_engine << " P=" << r.power_dbm << " dBm seed=" << r.seed
              << " SE=" << r.se_bits_s_hz << " bit/s/Hz SNR=" << r.effective_snr_db << " dB"
              << (r.cached ? " (cached)" : "") << "\n";
  }
  std::cout << res.records.size() << " points, " << failed << " failed, results in " << out_dir << "\n";
  return 0;
}

int cmd_report(const std::string& in, const std::string& out_dir)
{
  fs::path path(in);
  if (fs::is_directory(path)) path /= "results.csv";
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const auto records = parse_results_csv(ss.str());
  std::map<std::string, std::string> snapshots;
  const fs::path cfg_dir = path.parent_path() / "configs";
  if (fs::is_directory(cfg_dir))
    for (const auto& e : fs::directory_iterator(cfg_dir))
      if (e.path().extension() == ".json") {
        std::ifstream cf(e.path());
        std::stringstream cs;
        cs << cf.rdbuf();
        snapshots[e.path().stem().string()] = nlohmann::json::parse(cs.str()).dump();
      }
  emit_report(records, out_dir, snapshots);
  std::cout << records.size() << " records written to " << out_dir << "\n";
  return 0;
}

int cmd_validate(const std::string& config_path)
{
  const ExperimentConfig cfg = load_config(config_path);
  std::cout << "ok " << config_hash(cfg) << "\n" << to_json(cfg).dump(2) << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"fiberlab: coherent fiber transmission experiments"};
  app.require_subcommand(1);

  std::string config, out, in, powers;
  std::vector<std::uint64_t> seeds;
  std::vector<int> dbp_steps;
  int jobs = 1;

  auto* run = app.add_subcommand("run", "run a power sweep and write results");
  run->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory")->required();
  run->add_option("--seed", seeds, "run seed(s)")->delimiter(',');
  auto* powers_opt = run->add_option("--powers", powers, "launch powers in dBm: start:step:stop or a,b,c");
  run->add_option("--dbp-steps", dbp_steps, "DBP step grid")->delimiter(',');
  run->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "regenerate series and peak files from results.csv");
  report->add_option("--in", in, "results directory or results.csv")->required();
  report->add_option("--out", out, "output directory")->required();

  auto* validate = app.add_subcommand("validate", "check a config and print its canonical form");
  validate->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, out, seeds, powers, powers_opt->count() > 0, dbp_steps, jobs);
    if (*report) return cmd_report(in, out);
    if (*validate) return cmd_validate(config);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
