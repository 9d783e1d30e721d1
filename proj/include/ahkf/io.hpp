#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ahkf/fem.hpp"

namespace ahkf {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

/// Cache directory for truth trajectories and eigenbases, overridable through
/// AHKF_CACHE_DIR.
inline std::filesystem::path cache_dir() {
  if (const char* env = std::getenv("AHKF_CACHE_DIR")) return env;
  return ".ahkf-cache";
}

/// Snapshot store: row-major 64-bit floats in <base>.f64 plus a JSON sidecar
/// <base>.json carrying the shape and whatever metadata the caller attaches.
inline void write_snapshots(const std::filesystem::path& base, const std::vector<Vec>& snaps,
                            json meta = json::object()) {
  std::filesystem::create_directories(base.parent_path().empty() ? "." : base.parent_path());
  const Eigen::Index dim = snaps.empty() ? 0 : snaps.front().size();
  std::ofstream bin(base.string() + ".f64", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("write_snapshots: cannot open " + base.string() + ".f64");
  for (const Vec& s : snaps) {
    if (s.size() != dim) throw std::invalid_argument("write_snapshots: ragged snapshot set");
    bin.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(dim) * 8);
  }
  if (!bin) throw std::runtime_error("write_snapshots: write failed");
  meta["schema_version"] = kSchemaVersion;
  meta["count"] = snaps.size();
  meta["dim"] = dim;
  std::ofstream side(base.string() + ".json", std::ios::trunc);
  side << meta.dump(2) << '\n';
  if (!side) throw std::runtime_error("write_snapshots: sidecar write failed");
}

inline std::vector<Vec> read_snapshots(const std::filesystem::path& base, json* meta_out = nullptr) {
  std::ifstream side(base.string() + ".json");
  if (!side) throw std::runtime_error("read_snapshots: missing sidecar " + base.string() + ".json");
  json meta = json::parse(side);
  const auto count = meta.at("count").get<std::size_t>();
  const auto dim = meta.at("dim").get<Eigen::Index>();

  std::ifstream bin(base.string() + ".f64", std::ios::binary);
  if (!bin) throw std::runtime_error("read_snapshots: missing " + base.string() + ".f64");
  std::vector<Vec> snaps(count, Vec(dim));
  for (Vec& s : snaps) {
    bin.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(dim) * 8);
    if (!bin) throw std::runtime_error("read_snapshots: truncated " + base.string() + ".f64");
  }
  if (meta_out) *meta_out = std::move(meta);
  return snaps;
}

/// Minimal CSV support for the result tables: numeric cells only, first line
/// is the header.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path.string());
  for (std::size_t c = 0; c < table.header.size(); ++c)
    out << (c ? "," : "") << table.header[c];
  out << '\n';
  out.precision(17);
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size())
      throw std::invalid_argument("write_csv: row width mismatch");
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_csv: write failed");
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) return table;
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) table.header.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream rs(line);
    for (std::string cell; std::getline(rs, cell, ',');) row.push_back(std::stod(cell));
    if (row.size() != table.header.size())
      throw std::runtime_error("read_csv: ragged row in " + path.string());
    table.rows.push_back(std::move(row));
  }
  return table;
}

/// Flat key=value config text; '#' starts a comment, blank lines ignored.
inline std::map<std::string, std::string> read_key_value(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_key_value: cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    auto a = s.find_first_not_of(" \t\r");
    auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("read_key_value: line " + std::to_string(lineno) +
                               " has no '=' in " + path.string());
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace ahkf
