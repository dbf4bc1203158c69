#include <doctest.h>

#include <filesystem>
#include <string>

#include "vibronlab/constants.hpp"
#include "vibronlab/experiments.hpp"
#include "vibronlab/io.hpp"

using namespace vibronlab;
namespace ex = vibronlab::experiments;
using io::json;

namespace {

bool tables_equal(const io::Table& a, const io::Table& b) {
  if (a.names != b.names || a.n_rows() != b.n_rows()) return false;
  for (size_t c = 0; c < a.columns.size(); ++c)
    for (size_t i = 0; i < a.columns[c].size(); ++i)
      if (a.columns[c][i] != b.columns[c][i]) return false;
  return true;
}

std::string preset_path(const std::string& scenario) {
  for (const char* dir : {"presets", "../presets"}) {
    const auto p = std::filesystem::path(dir) / (scenario + ".json");
    if (std::filesystem::exists(p)) return p.string();
  }
  return {};
}

} // namespace

TEST_SUITE("experiments") {

TEST_CASE("the scenario registry is closed and consistent") {
  const auto& names = ex::scenario_names();
  REQUIRE(names.size() == 10);
  for (const auto& n : names) {
    CHECK(ex::is_scenario(n));
    const json p = ex::default_params(n);
    CHECK(p.is_object());
    CHECK_FALSE(p.empty());
  }
  CHECK_FALSE(ex::is_scenario("warp_drive"));
  CHECK_THROWS(ex::default_params("warp_drive"));
}

TEST_CASE("preset files mirror the built-in defaults verbatim") {
  for (const auto& name : ex::scenario_names()) {
    const std::string path = preset_path(name);
    REQUIRE_MESSAGE(!path.empty(), "missing preset file for " << name);
    const json from_file = io::load_config(path);
    CHECK_MESSAGE(from_file == ex::default_params(name), "preset drift in " << name);
  }
}

TEST_CASE("transport cell assembly reproduces the documented cooling rates") {
  const auto bc = ex::build_chain(ex::default_params("tqd"));
  REQUIRE(bc.geometry.n_sites() == 3);
  CHECK(bc.geometry.at(0).label == chain::IonRole::tau);
  CHECK(bc.geometry.at(1).label == chain::IonRole::sigma);
  CHECK(bc.geometry.at(0).mass == doctest::Approx(constants::mass_mg24));
  CHECK(bc.geometry.at(1).mass == doctest::Approx(constants::mass_mg25));
  REQUIRE(bc.reservoirs.size() == 2);
  REQUIRE(bc.reservoirs.count(0) == 1);
  REQUIRE(bc.reservoirs.count(2) == 1);

  const auto& left = bc.reservoirs.at(0);
  const auto& right = bc.reservoirs.at(2);
  CHECK(left.gamma / constants::two_pi ==
        doctest::Approx(86019.86717903285).epsilon(1e-10));
  CHECK(right.gamma / constants::two_pi ==
        doctest::Approx(105744.21257086299).epsilon(1e-10));
  CHECK(left.nbar == doctest::Approx(1.654822061191626).epsilon(1e-12));
  CHECK(right.nbar == doctest::Approx(1.6303864734299518).epsilon(1e-12));
  CHECK(left.delta < 0.0);
  CHECK(right.delta < 0.0);
}

TEST_CASE("frequency keys must be positive and finite") {
  json p = ex::default_params("tqd");
  p["chain"]["axial_freq_hz"] = -0.5e6;
  CHECK_THROWS_WITH_AS((void)ex::build_chain(p),
                       doctest::Contains("positive finite Hz"),
                       std::invalid_argument);
}

TEST_CASE("runs are bit-identical under fixed seed and threads") {
  const json p = ex::default_params("tqd");
  const auto a = ex::run_scenario("tqd", p);
  const auto b = ex::run_scenario("tqd", p);
  REQUIRE(a.datasets.size() == b.datasets.size());
  for (const auto& [name, table] : a.datasets)
    CHECK(tables_equal(table, b.datasets.at(name)));
}

TEST_CASE("monte carlo scenarios repeat bitwise and react to the seed") {
  json p = ex::default_params("tqw_disorder");
  p["disorder"]["n_samples"] = 16;
  const auto a = ex::run_scenario("tqw_disorder", p, "", 999, 1);
  const auto b = ex::run_scenario("tqw_disorder", p, "", 999, 1);
  CHECK(tables_equal(a.datasets.at("profile"), b.datasets.at("profile")));
  const auto c = ex::run_scenario("tqw_disorder", p, "", 1000, 1);
  CHECK_FALSE(tables_equal(a.datasets.at("profile"), c.datasets.at("profile")));
}

TEST_CASE("run rejects unknown scenarios and bad thread counts") {
  CHECK_THROWS((void)ex::run_scenario("warp_drive", json::object()));
  CHECK_THROWS((void)ex::run_scenario("tqd", ex::default_params("tqd"), "", 1, 0));
}

TEST_CASE("scenario outputs land on disk beside a manifest") {
  const auto dir = std::filesystem::temp_directory_path() / "vibronlab_run_test";
  std::filesystem::remove_all(dir);
  const json p = ex::default_params("tqd");
  const auto res = ex::run_scenario("tqd", p, dir.string(), 4321, 1);
  CHECK(res.manifest.tool_version == ex::tool_version);
  CHECK(res.manifest.scenario == "tqd");
  CHECK(res.manifest.seed == 4321);
  CHECK(res.manifest.inputs == p);
  for (const auto& name : {"profile", "summary"}) {
    CHECK(std::filesystem::exists(dir / (std::string(name) + ".csv")));
    CHECK(std::filesystem::exists(dir / (std::string(name) + ".json")));
  }
  const auto m = io::read_manifest((dir / "manifest.json").string());
  CHECK(m.scenario == "tqd");
  CHECK(m.inputs == p);
  std::filesystem::remove_all(dir);
}

TEST_CASE("profile tables use the standard column layout") {
  const auto res = ex::run_scenario("tqd", ex::default_params("tqd"));
  const auto& t = res.datasets.at("profile");
  const std::vector<std::string> want{"site", "z_um", "n_mean",
                                      "n_std", "I_in", "I_out"};
  CHECK(t.names == want);
  CHECK(t.n_rows() == 3);
}

TEST_CASE("lead alignment switches the step scenario between regimes") {
  json p = ex::default_params("leads_step");
  const auto literal = ex::run_scenario("leads_step", p);
  p["step"]["align_reservoirs"] = true;
  const auto aligned = ex::run_scenario("leads_step", p);
  const auto cur = [](const ex::RunResult& r, const char* col) {
    const auto& t = r.datasets.at("summary");
    for (size_t c = 0; c < t.names.size(); ++c)
      if (t.names[c] == col) return t.columns[c][0];
    return -1.0;
  };
  // misaligned leads throttle even the stair-free wire
  CHECK(cur(literal, "current_no_shift") < 1.0);
  CHECK(cur(aligned, "current_no_shift") > 10.0);
  CHECK(cur(literal, "current_shifted") < 1e-3);
}

TEST_CASE("column-wise theory comparison flags the offending column") {
  io::Table data, pred;
  data.add_column("a", {1.0, 2.0});
  data.add_column("b", {10.0, 20.0});
  pred.add_column("a", {1.0, 2.001});
  pred.add_column("b", {10.0, 25.0});
  const auto rep = ex::compare_to_theory(data, pred, 0.01);
  CHECK_FALSE(rep.all_pass);
  REQUIRE(rep.table.n_rows() == 2);
  const auto& pass = rep.table.columns.back();
  CHECK(pass[0] == 1.0);
  CHECK(pass[1] == 0.0);

  const auto loose = ex::compare_to_theory(data, pred, 0.3);
  CHECK(loose.all_pass);

  io::Table misshaped;
  misshaped.add_column("a", {1.0});
  CHECK_THROWS((void)ex::compare_to_theory(data, misshaped, 0.1));
}

TEST_CASE("quadratic dot reference reproduces the frozen fano curve") {
  using constants::two_pi;
  const double j = two_pi * 1e3, g = two_pi * 2e3;
  const auto w = ex::wick_fano_reference(j, g, g, 0.5, 0.05);
  CHECK(w.mean == doctest::Approx(1130.973355).epsilon(1e-8));
  CHECK(w.noise0 == doctest::Approx(942.2893005).epsilon(1e-8));
  CHECK(w.fano == doctest::Approx(0.4165833333).epsilon(1e-8));

  double prev = 0.0;
  for (const double nl : {0.5, 0.575, 0.65, 0.725, 0.8}) {
    const auto r = ex::wick_fano_reference(j, g, g, nl, 0.05);
    CHECK(r.fano > prev);
    CHECK(r.fano < 1.0); // sub-Poissonian throughout this bias range
    prev = r.fano;
  }
  CHECK(ex::wick_fano_reference(j, g, g, 0.8, 0.05).fano ==
        doctest::Approx(0.44875).epsilon(1e-9));
}

} // TEST_SUITE
