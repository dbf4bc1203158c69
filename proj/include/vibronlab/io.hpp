#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

// Dataset and manifest serialization plus configuration ingestion.
namespace vibronlab::io {

using json = nlohmann::ordered_json;

// Column-oriented numeric table; all columns share one length.
struct Table {
  std::vector<std::string> names;            //
  std::vector<std::vector<double>> columns;  //

  void add_column(const std::string& name, std::vector<double> values);
  long n_rows() const;
  long n_cols() const { return static_cast<long>(names.size()); }
};

// CSV with a header row, RFC-4180 quoting, '.' decimal separator, and 17
// significant digits; non-finite values are rejected.
void write_csv(const Table& table, const std::string& path);
Table read_csv(const std::string& path);

json table_json(const Table& table);
void write_json(const json& j, const std::string& path);

// format is "csv" or "json".
void emit_dataset(const Table& table, const std::string& format,
                  const std::string& path);

// One manifest per run, stored beside the datasets; reruns with the same
// manifest reproduce the outputs bit-identically.
struct RunManifest {
  int schema_version{1};     //
  std::string tool_version;  //
  std::string scenario;      //
  json inputs;               // full parameter tree
  json derived;              // derived quantities (rates, occupations, residuals)
  std::uint64_t seed{0};     //
  int threads{1};            //
  double wall_time_s{0.0};   //

  json to_json() const;
  static RunManifest from_json(const json& j);
};

void write_manifest(const RunManifest& manifest, const std::string& path);
RunManifest read_manifest(const std::string& path);

// Parses a JSON configuration file; parse failures carry line and column.
json load_config(const std::string& path);

// Overlays `overrides` onto `defaults`, rejecting keys absent from the
// defaults (reported with their full path), type mismatches, and frequency
// keys (suffix "_hz") that are not positive finite numbers.
json merge_config(const json& defaults, const json& overrides);

// Applies a dotted-path assignment such as "chain.n_sites=20"; the value is
// parsed as JSON when possible and kept as a string otherwise.
void set_path(json& tree, const std::string& assignment);

} // namespace vibronlab::io
