#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <unistd.h>

#include "vibronlab/io.hpp"

using namespace vibronlab;
using io::json;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("vibronlab_io_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

io::Table sample_table() {
  io::Table t;
  t.add_column("site", {0.0, 1.0, 2.0});
  t.add_column("n_mean", {1.6547890922234416, 1.6415074792183024, 0.125});
  t.add_column("I_out", {35.638054453677064, 1e-300, -2.5e-7});
  return t;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_SUITE("io") {

TEST_CASE("csv round-trips every double bitwise") {
  TempDir tmp;
  const auto t = sample_table();
  io::write_csv(t, tmp.file("t.csv"));
  const auto r = io::read_csv(tmp.file("t.csv"));
  REQUIRE(r.names == t.names);
  REQUIRE(r.n_rows() == t.n_rows());
  for (size_t c = 0; c < t.columns.size(); ++c)
    for (size_t i = 0; i < t.columns[c].size(); ++i)
      CHECK(r.columns[c][i] == t.columns[c][i]);
}

TEST_CASE("csv uses crlf line endings and a header row") {
  TempDir tmp;
  io::write_csv(sample_table(), tmp.file("t.csv"));
  const std::string raw = slurp(tmp.file("t.csv"));
  CHECK(raw.rfind("site,n_mean,I_out\r\n", 0) == 0);
  CHECK(raw.find("\n") != std::string::npos);
  // every newline is preceded by a carriage return
  for (size_t i = 0; i < raw.size(); ++i)
    if (raw[i] == '\n') CHECK(raw[i - 1] == '\r');
}

TEST_CASE("column names with separators are quoted per rfc 4180") {
  TempDir tmp;
  io::Table t;
  t.add_column("plain", {1.0});
  t.add_column("with,comma", {2.0});
  t.add_column("with\"quote", {3.0});
  io::write_csv(t, tmp.file("q.csv"));
  const std::string raw = slurp(tmp.file("q.csv"));
  CHECK(raw.find("\"with,comma\"") != std::string::npos);
  CHECK(raw.find("\"with\"\"quote\"") != std::string::npos);
  const auto r = io::read_csv(tmp.file("q.csv"));
  CHECK(r.names == t.names);
}

TEST_CASE("non-finite values are rejected at the boundary") {
  TempDir tmp;
  io::Table t;
  t.add_column("ok", {1.0, std::nan("")});
  CHECK_THROWS_WITH_AS(io::write_csv(t, tmp.file("bad.csv")),
                       doctest::Contains("non-finite value in column"),
                       std::runtime_error);
  io::Table inf_table;
  inf_table.add_column("ok", {std::numeric_limits<double>::infinity()});
  CHECK_THROWS(io::write_csv(inf_table, tmp.file("bad2.csv")));
  CHECK_THROWS(io::table_json(t));
}

TEST_CASE("ragged tables are rejected") {
  io::Table t;
  t.add_column("a", {1.0, 2.0});
  CHECK_THROWS(t.add_column("b", {1.0}));
}

TEST_CASE("table json mirrors columns by name") {
  const auto j = io::table_json(sample_table());
  REQUIRE(j.contains("site"));
  CHECK(j["site"].size() == 3);
  CHECK(j["I_out"][0].get<double>() == 35.638054453677064);
}

TEST_CASE("manifest round-trips and gates the schema version") {
  TempDir tmp;
  io::RunManifest m;
  m.tool_version = "1.0.0";
  m.scenario = "tqd";
  m.inputs = json{{"chain", {{"axial_freq_hz", 5e5}}}};
  m.derived = json{{"n_theory", 1.6415}};
  m.seed = 42;
  m.threads = 2;
  m.wall_time_s = 0.25;
  io::write_manifest(m, tmp.file("manifest.json"));
  const auto r = io::read_manifest(tmp.file("manifest.json"));
  CHECK(r.schema_version == m.schema_version);
  CHECK(r.tool_version == m.tool_version);
  CHECK(r.scenario == m.scenario);
  CHECK(r.inputs == m.inputs);
  CHECK(r.derived == m.derived);
  CHECK(r.seed == m.seed);
  CHECK(r.threads == m.threads);
  CHECK(r.wall_time_s == m.wall_time_s);

  json j = m.to_json();
  j["schema_version"] = 99;
  std::ofstream(tmp.file("future.json")) << j.dump(2);
  CHECK_THROWS_WITH_AS((void)io::read_manifest(tmp.file("future.json")),
                       doctest::Contains("unsupported manifest schema_version"),
                       std::runtime_error);
}

TEST_CASE("config parse errors carry the location") {
  TempDir tmp;
  std::ofstream(tmp.file("broken.json")) << "{\n  \"a\": 1,\n}";
  CHECK_THROWS(io::load_config(tmp.file("broken.json")));
  std::ofstream(tmp.file("empty.json")) << "";
  CHECK_THROWS(io::load_config(tmp.file("empty.json")));
  CHECK_THROWS(io::load_config(tmp.file("missing.json")));
}

TEST_CASE("merge rejects unknown keys with their full path") {
  const json defaults{{"chain", {{"axial_freq_hz", 5e5}, {"n_sites", 3}}},
                      {"seedless", true}};
  const json good{{"chain", {{"axial_freq_hz", 2e5}}}};
  const json merged = io::merge_config(defaults, good);
  CHECK(merged["chain"]["axial_freq_hz"].get<double>() == 2e5);
  CHECK(merged["chain"]["n_sites"].get<int>() == 3);

  const json bad{{"chain", {{"axial_frq_hz", 2e5}}}};
  CHECK_THROWS_WITH_AS((void)io::merge_config(defaults, bad),
                       doctest::Contains("unknown configuration key"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS((void)io::merge_config(defaults, bad),
                       doctest::Contains("chain.axial_frq_hz"),
                       std::runtime_error);
}

TEST_CASE("merge rejects type mismatches and bad frequencies") {
  const json defaults{{"chain", {{"axial_freq_hz", 5e5}, {"n_sites", 3}}}};
  CHECK_THROWS((void)io::merge_config(defaults, json{{"chain", true}}));
  CHECK_THROWS((void)io::merge_config(
      defaults, json{{"chain", {{"axial_freq_hz", -1.0}}}}));
  CHECK_THROWS((void)io::merge_config(
      defaults, json{{"chain", {{"axial_freq_hz", 0.0}}}}));
  CHECK_THROWS((void)io::merge_config(
      defaults, json{{"chain", {{"axial_freq_hz", "fast"}}}}));
}

TEST_CASE("dotted-path assignment builds nested overrides") {
  json tree = json::object();
  io::set_path(tree, "chain.axial_freq_hz=2.5e5");
  io::set_path(tree, "drive.zeta=0.5");
  io::set_path(tree, "step.align_reservoirs=true");
  io::set_path(tree, "label=edge run");
  CHECK(tree["chain"]["axial_freq_hz"].get<double>() == 2.5e5);
  CHECK(tree["drive"]["zeta"].get<double>() == 0.5);
  CHECK(tree["step"]["align_reservoirs"].get<bool>() == true);
  CHECK(tree["label"].get<std::string>() == "edge run");
  CHECK_THROWS(io::set_path(tree, "no_equals_sign"));
}

} // TEST_SUITE
