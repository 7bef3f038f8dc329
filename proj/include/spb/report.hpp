#pragma once

// Tabular report emitters: CSV (full precision), Markdown (4 decimals) and
// JSON lines. Every file carries the config hash and input hashes.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "spb/core.hpp"
#include "spb/error.hpp"

namespace spb {

// Empty state renders as "undef".
using ReportValue = std::variant<std::monostate, std::string, std::int64_t, double>;

inline ReportValue opt_value(const std::optional<double>& d) {
  if (!d || !std::isfinite(*d)) return std::monostate{};
  return *d;
}

inline ReportValue opt_value(const std::optional<Rational>& r) {
  if (!r) return std::monostate{};
  return to_double(*r);
}

inline ReportValue count_value(std::size_t n) { return static_cast<std::int64_t>(n); }
inline ReportValue count_value(std::int64_t n) { return n; }

struct ReportTable {
  std::string name;   // file stem
  std::string title;  // Markdown heading
  std::vector<std::string> columns;
  std::vector<std::vector<ReportValue>> rows;

  void add(std::vector<ReportValue> row) {
    if (row.size() != columns.size())
      throw std::logic_error("report row for '" + name + "' has " + std::to_string(row.size()) + " cells, expected " +
                             std::to_string(columns.size()));
    rows.push_back(std::move(row));
  }
};

struct ReportContext {
  std::string command;
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> inputs;  // (label, sha256)
  std::string generated_at;                                 // empty under --deterministic
};

// Shortest representation that round-trips.
inline std::string format_full(double d) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
  if (ec != std::errc{}) return "undef";
  return std::string(buf, end);
}

inline std::string format_fixed4(double d) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", d);
  std::string s = buf;
  if (s == "-0.0000") s = "0.0000";
  return s;
}

inline std::string format_cell(const ReportValue& v, bool markdown) {
  return std::visit(
      [&](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate>)
          return "undef";
        else if constexpr (std::is_same_v<T, std::string>)
          return x;
        else if constexpr (std::is_same_v<T, std::int64_t>)
          return std::to_string(x);
        else
          return !std::isfinite(x) ? "undef" : markdown ? format_fixed4(x) : format_full(x);
      },
      v);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string provenance_lines(const ReportContext& ctx, std::string_view prefix) {
  std::string out;
  out += std::string(prefix) + "command: " + ctx.command + "\n";
  out += std::string(prefix) + "config_sha256: " + ctx.config_hash + "\n";
  for (const auto& [label, hash] : ctx.inputs) out += std::string(prefix) + "input_sha256 " + label + ": " + hash + "\n";
  if (!ctx.generated_at.empty()) out += std::string(prefix) + "generated_at: " + ctx.generated_at + "\n";
  return out;
}

// Provenance lines start with '#'; read with a comment-aware CSV reader.
inline std::string to_csv(const ReportTable& t, const ReportContext& ctx) {
  std::string out = provenance_lines(ctx, "# ");
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + csv_escape(t.columns[i]);
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_escape(format_cell(row[i], false));
    out += '\n';
  }
  return out;
}

inline std::string to_markdown(const std::string& heading, const std::vector<ReportTable>& tables,
                               const ReportContext& ctx) {
  std::string out = "# " + heading + "\n\n";
  out += "```\n" + provenance_lines(ctx, "") + "```\n";
  for (const auto& t : tables) {
    out += "\n## " + t.title + "\n\n";
    if (t.rows.empty()) {
      out += "(no rows)\n";
      continue;
    }
    out += "|";
    for (const auto& c : t.columns) out += " " + c + " |";
    out += "\n|";
    for (std::size_t i = 0; i < t.columns.size(); ++i) out += "---|";
    out += "\n";
    for (const auto& row : t.rows) {
      out += "|";
      for (const auto& v : row) {
        auto s = format_cell(v, true);
        for (auto& c : s)
          if (c == '|' || c == '\n') c = ' ';
        out += " " + s + " |";
      }
      out += "\n";
    }
  }
  return out;
}

inline nlohmann::json row_json(const ReportTable& t, const std::vector<ReportValue>& row) {
  nlohmann::json j{{"table", t.name}};
  for (std::size_t i = 0; i < row.size(); ++i)
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, std::monostate>)
            j[t.columns[i]] = nullptr;
          else if constexpr (std::is_same_v<T, double>)
            j[t.columns[i]] = std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
          else
            j[t.columns[i]] = x;
        },
        row[i]);
  return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

// Writes <dir>/<table>.csv for each table, <dir>/<kind>.md and <dir>/<kind>.jsonl.
inline void write_report(const std::filesystem::path& dir, const std::string& kind, const std::string& heading,
                         const std::vector<ReportTable>& tables, const ReportContext& ctx) {
  std::string jsonl;
  nlohmann::json prov{{"table", "provenance"}, {"command", ctx.command}, {"config_sha256", ctx.config_hash}};
  for (const auto& [label, hash] : ctx.inputs) prov["inputs"][label] = hash;
  if (!ctx.generated_at.empty()) prov["generated_at"] = ctx.generated_at;
  jsonl += prov.dump() + "\n";
  for (const auto& t : tables) {
    write_text(dir / (t.name + ".csv"), to_csv(t, ctx));
    for (const auto& row : t.rows) jsonl += row_json(t, row).dump() + "\n";
  }
  write_text(dir / (kind + ".md"), to_markdown(heading, tables, ctx));
  write_text(dir / (kind + ".jsonl"), jsonl);
}

}  // namespace spb
