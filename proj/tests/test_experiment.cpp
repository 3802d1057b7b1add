#include "fiberlab/experiment.hpp"

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fiberlab;
namespace fs = std::filesystem;

namespace {

ExperimentConfig miniature(Modulation m)
{
  ExperimentConfig c;
  c.link.n_spans = 1;
  c.plan.steps_per_span = 20;
  c.modulation = m;
  c.n_symbols = 4096;
  c.training_symbols = 4096;
  c.power_sweep_dbm = {0.0, 4.0};
  return c;
}

fs::path fresh_dir(const std::string& name)
{
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace

TEST_CASE("config JSON roundtrip and strictness")
{
  ExperimentConfig c = miniature(Modulation::pas_ess_sel_bs);
  c.dbp.engine = DbpEngine::cb_essfm;
  c.dbp.n_steps = 30;
  c.dbp.n_coeffs = 8;
  c.cpr.method = CprMethod::bps;
  c.linewidth_hz = 100e3;
  const auto j = to_json(c);
  const auto back = config_from_json(j);
  CHECK(to_json(back) == j);
  CHECK(config_hash(back) == config_hash(c));

  auto bad = j;
  bad["link"]["colour"] = "blue";
  CHECK_THROWS(config_from_json(bad));
  auto bad2 = j;
  bad2["modulation"] = "pam4";
  CHECK_THROWS(config_from_json(bad2));
  CHECK_NOTHROW(config_from_json(nlohmann::json::object()));
}

TEST_CASE("config hash is canonical")
{
  const auto a = nlohmann::json::parse(R"({"link": {"n_spans": 30, "span_km": 100}, "n_symbols": 4096})");
  const auto b = nlohmann::json::parse(R"({"n_symbols": 4096, "link": {"span_km": 100.0, "n_spans": 30}})");
  CHECK(config_hash(config_from_json(a)) == config_hash(config_from_json(b)));
  CHECK(config_hash(config_from_json(a)).size() == 16);
  auto c = config_from_json(a);
  c.link.span_km = 80.0;
  CHECK(config_hash(c) != config_hash(config_from_json(a)));
  // The power grid is not part of a point's identity.
  auto d = config_from_json(a);
  d.power_sweep_dbm = {1.0};
  CHECK(config_hash(d) == config_hash(config_from_json(a)));
  CHECK(canonical_config(d) == canonical_config(config_from_json(a)));
}

TEST_CASE("infeasible configurations are rejected")
{
  ExperimentConfig c = miniature(Modulation::pas_ess);
  c.n_symbols = 4100;
  CHECK_THROWS(c.validate());
  c = miniature(Modulation::u64qam);
  c.wdm.channels = 3;
  c.wdm.spacing_hz = 40e9;
  CHECK_THROWS(c.validate());
  c = miniature(Modulation::pas_ess);
  c.shaping.k_bits = 600;
  CHECK_THROWS(c.validate());
  c = miniature(Modulation::u64qam);
  c.link.n_spans = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("noiseless linear chain reaches the rate ceiling")
{
  ExperimentConfig c = miniature(Modulation::u64qam);
  c.link.gamma_w_km = 0.0;
  c.link.ase = false;
  const auto r = run_point(c, 0.0, 1);
  REQUIRE(r.status == "ok");
  CHECK(r.air_4d == doctest::Approx(12.0).epsilon(1e-3));
  CHECK(r.se_bits_s_hz == doctest::Approx(12.0 * 46.5 / 50.0).epsilon(1e-3));

  ExperimentConfig s = miniature(Modulation::pas_ess);
  s.link.gamma_w_km = 0.0;
  s.link.ase = false;
  const auto rs = run_point(s, 0.0, 1);
  CHECK(rs.net_rate_4d == doctest::Approx(9.1875));
  CHECK(rs.se_bits_s_hz == doctest::Approx(9.1875 * 46.5 / 50.0).epsilon(2e-3));
}

TEST_CASE("points are reproducible")
{
  for (Modulation m : {Modulation::u64qam, Modulation::pas_mb, Modulation::pas_ess}) {
    const ExperimentConfig c = miniature(m);
    const auto a = run_point(c, 2.0, 3);
    clear_simulation_cache();
    const auto b = run_point(c, 2.0, 3);
    CHECK(a.se_bits_s_hz == b.se_bits_s_hz);
    CHECK(a.air_4d == b.air_4d);
    CHECK(a.effective_snr_db == b.effective_snr_db);
    const auto other = run_point(c, 2.0, 4);
    CHECK(other.effective_snr_db != a.effective_snr_db);
  }
}

TEST_CASE("selection modes charge the rate loss")
{
  ExperimentConfig c = miniature(Modulation::pas_ess_sel_bs);
  c.n_symbols = 1024;
  c.selection.n_candidates = 4;
  c.selection.seq_len_4d = 256;
  c.selection.context_len_4d = 256;
  c.selection.metric = SelectionMetric::energy_var;
  const auto r = run_point(c, 2.0, 1);
  REQUIRE(r.status == "ok");
  CHECK(r.selection_loss_4d == doctest::Approx(2.0 / 256));
  CHECK(r.net_rate_4d == doctest::Approx(9.1875 - 2.0 / 256));
  CHECK(r.sel_frames == 4);
  CHECK(r.se_gross_bits_s_hz == doctest::Approx(r.se_bits_s_hz + r.selection_loss_4d * 0.93));
}

TEST_CASE("sweeps, caching and reports")
{
  const auto cache = fresh_dir("fiberlab_cache_test");
  const auto out = fresh_dir("fiberlab_report_test");
  SweepOptions opts;
  opts.context.cache_dir = cache.string();

  ExperimentConfig empty = miniature(Modulation::u64qam);
  empty.power_sweep_dbm.clear();
  CHECK(run_sweep(empty, opts).records.empty());

  std::vector<ResultRecord> all;
  std::map<std::string, std::string> snaps;
  for (Modulation m : {Modulation::u64qam, Modulation::pas_mb}) {
    auto res = run_sweep(miniature(m), opts);
    CHECK(res.records.size() == 2);
    all.insert(all.end(), res.records.begin(), res.records.end());
    snaps.insert(res.snapshots.begin(), res.snapshots.end());
  }
  for (const auto& r : all) CHECK_FALSE(r.cached);

  // A rerun is served from disk.
  clear_simulation_cache();
  const auto again = run_sweep(miniature(Modulation::u64qam), opts);
  for (std::size_t i = 0; i < again.records.size(); ++i) {
    CHECK(again.records[i].cached);
    CHECK(again.records[i].wall_time_s < 0.05);
    CHECK(again.records[i].se_bits_s_hz == all[i].se_bits_s_hz);
  }

  emit_report(all, out.string(), snaps);
  CHECK(fs::exists(out / "results.csv"));
  CHECK(fs::exists(out / "peak.csv"));
  std::string a = slurp(out / "series_u64qam.csv"), b = slurp(out / "series_pas_mb.csv");
  REQUIRE_FALSE(a.empty());
  REQUIRE_FALSE(b.empty());
  auto powers = [](const std::string& text) {
    std::vector<std::string> p;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::istringstream fields(line);
      std::string f;
      for (int i = 0; i < 3; ++i) std::getline(fields, f, ',');
      p.push_back(f);
    }
    return p;
  };
  CHECK(powers(a) == powers(b));
  for (const auto& [hash, text] : snaps) CHECK(fs::exists(out / "configs" / (hash + ".json")));

  const auto parsed = parse_results_csv(slurp(out / "results.csv"));
  REQUIRE(parsed.size() == all.size());
  CHECK(format_results_csv(parsed) == format_results_csv(all));
  fs::remove_all(cache);
  fs::remove_all(out);
}

TEST_CASE("results CSV schema")
{
  const auto cols = results_columns();
  const std::vector<std::string> head{"config_hash", "modulation", "power_dbm", "seed", "se_bits_s_hz",
                                      "air_4d", "effective_snr_db", "rm_per_2d", "wall_time_s"};
  REQUIRE(cols.size() >= head.size());
  CHECK(std::vector<std::string>(cols.begin(), cols.begin() + 9) == head);
  const std::string text = format_results_csv({});
  CHECK(text.rfind("# fiberlab results schema 1\n", 0) == 0);
  CHECK_THROWS(parse_results_csv("config_hash,power_dbm\n"));

  ResultRecord r;
  r.config_hash = "abc";
  r.modulation = "pas_ess";
  r.power_dbm = 1.5;
  r.seed = 18446744073709551615ULL;
  r.se_bits_s_hz = 7.123456789;
  r.message = "has, comma and \"quotes\"";
  r.status = "error";
  r.air_4d = NAN;
  const auto back = parse_results_csv(format_results_csv({r}));
  REQUIRE(back.size() == 1);
  CHECK(back[0].seed == r.seed);
  CHECK(back[0].message == r.message);
  CHECK(std::isnan(back[0].air_4d));
  CHECK(back[0].se_bits_s_hz == doctest::Approx(7.123456789).epsilon(1e-9));
}

TEST_CASE("peak refinement")
{
  const std::vector<double> p{-2, -1, 0, 1, 2};
  std::vector<double> se;
  for (double x : p) se.push_back(5.0 - 0.3 * (x - 0.4) * (x - 0.4));
  const auto pk = peak_se(p, se);
  CHECK(pk.interior);
  CHECK(pk.power_dbm == doctest::Approx(0.4));
  CHECK(pk.se_bits_s_hz == doctest::Approx(5.0));
  const auto edge = peak_se(p, {1, 2, 3, 4, 5});
  CHECK_FALSE(edge.interior);
  CHECK(edge.se_bits_s_hz == 5.0);
  CHECK(edge.power_dbm == 2.0);
}
