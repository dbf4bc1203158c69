#include "vibronlab/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vibronlab::io {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string quote_csv(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    out += c;
    if (c == '"') out += '"';
  }
  out += '"';
  return out;
}

void check_finite(const Table& table) {
  for (std::size_t c = 0; c < table.columns.size(); ++c)
    for (double v : table.columns[c])
      if (!std::isfinite(v))
        throw std::runtime_error("non-finite value in column '" +
                                 table.names[c] + "'; outputs must be finite");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

} // namespace

void Table::add_column(const std::string& name, std::vector<double> values) {
  if (!columns.empty() && values.size() != columns.front().size())
    throw std::invalid_argument("column '" + name + "' has " +
                                std::to_string(values.size()) +
                                " rows, expected " +
                                std::to_string(columns.front().size()));
  names.push_back(name);
  columns.push_back(std::move(values));
}

long Table::n_rows() const {
  return columns.empty() ? 0 : static_cast<long>(columns.front().size());
}

void write_csv(const Table& table, const std::string& path) {
  if (table.names.empty()) throw std::invalid_argument("table has no columns");
  check_finite(table);
  std::ofstream out = open_out(path);
  for (std::size_t c = 0; c < table.names.size(); ++c) {
    if (c) out << ',';
    out << quote_csv(table.names[c]);
  }
  out << "\r\n";
  const long rows = table.n_rows();
  for (long r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      if (c) out << ',';
      out << format_double(table.columns[c][r]);
    }
    out << "\r\n";
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

Table read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(field);
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
      row.push_back(field);
      field.clear();
      rows.push_back(row);
      row.clear();
    } else {
      field += c;
    }
  }
  if (!field.empty() || !row.empty()) {
    row.push_back(field);
    rows.push_back(row);
  }
  if (rows.empty()) throw std::runtime_error("empty CSV file '" + path + "'");

  Table table;
  table.names = rows.front();
  table.columns.assign(table.names.size(), {});
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != table.names.size())
      throw std::runtime_error("ragged CSV row " + std::to_string(r) + " in '" +
                               path + "'");
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      std::size_t used = 0;
      const double v = std::stod(rows[r][c], &used);
      if (used != rows[r][c].size())
        throw std::runtime_error("non-numeric CSV cell '" + rows[r][c] + "'");
      table.columns[c].push_back(v);
    }
  }
  return table;
}

json table_json(const Table& table) {
  check_finite(table);
  json j = json::object();
  for (std::size_t c = 0; c < table.names.size(); ++c)
    j[table.names[c]] = table.columns[c];
  return j;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void emit_dataset(const Table& table, const std::string& format,
                  const std::string& path) {
  if (format == "csv")
    write_csv(table, path);
  else if (format == "json")
    write_json(table_json(table), path);
  else
    throw std::invalid_argument("unknown dataset format '" + format + "'");
}

json RunManifest::to_json() const {
  json j = json::object();
  j["schema_version"] = schema_version;
  j["tool_version"] = tool_version;
  j["scenario"] = scenario;
  j["inputs"] = inputs;
  j["derived"] = derived;
  j["seed"] = seed;
  j["threads"] = threads;
  j["wall_time_s"] = wall_time_s;
  return j;
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != 1)
    throw std::runtime_error("unsupported manifest schema_version " +
                             std::to_string(m.schema_version));
  m.tool_version = j.at("tool_version").get<std::string>();
  m.scenario = j.at("scenario").get<std::string>();
  m.inputs = j.at("inputs");
  m.derived = j.at("derived");
  m.seed = j.at("seed").get<std::uint64_t>();
  m.threads = j.at("threads").get<int>();
  m.wall_time_s = j.at("wall_time_s").get<double>();
  return m;
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  write_json(manifest.to_json(), path);
}

RunManifest read_manifest(const std::string& path) {
  return RunManifest::from_json(load_config(path));
}

json load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  try {
    return json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    // The library message carries line and column.
    throw std::runtime_error("config parse error in '" + path + "': " + e.what());
  }
}

namespace {

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return true;
  return a.type() == b.type();
}

void merge_into(json& base, const json& overrides, const std::string& prefix) {
  for (const auto& [key, value] : overrides.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key))
      throw std::runtime_error("unknown configuration key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object() && value.is_object()) {
      merge_into(slot, value, path);
      continue;
    }
    if (!same_kind(slot, value))
      throw std::runtime_error("configuration key '" + path +
                               "' has the wrong type");
    if (key.size() > 3 && key.substr(key.size() - 3) == "_hz") {
      if (!value.is_number() || !(value.get<double>() > 0.0) ||
          !std::isfinite(value.get<double>()))
        throw std::runtime_error("frequency key '" + path +
                                 "' must be a positive finite number in Hz");
    }
    slot = value;
  }
}

} // namespace

json merge_config(const json& defaults, const json& overrides) {
  json merged = defaults;
  merge_into(merged, overrides, "");
  return merged;
}

void set_path(json& tree, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("expected key=value, got '" + assignment + "'");
  const std::string dotted = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }

  json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot - start);
    if (key.empty())
      throw std::invalid_argument("empty key segment in '" + dotted + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

} // namespace vibronlab::io
