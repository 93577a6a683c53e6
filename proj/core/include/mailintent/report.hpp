#pragma once

// Per-run records, their aggregation into a table keyed by
// (method, encoder, intent, clean ratio), and the report files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mailintent::report {

struct Record {
  std::string method;
  std::string encoder;
  std::string intent;
  double clean_ratio = 0.0;
  std::size_t clean_count = 0;
  std::size_t weak_count = 0;
  std::uint64_t seed = 0;
  /// Free-form setting label, e.g. the transfer variant; empty for sweeps.
  std::string variant;
  bool ok = true;
  std::string error;
  double dev_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::optional<double> alpha;
};

nlohmann::json to_json(const Record& r);
Record record_from_json(const nlohmann::json& j);

void write_records(std::ostream& out, std::span<const Record> records);
std::vector<Record> read_records(std::istream& in);

struct Row {
  std::string method;
  std::string encoder;
  std::string intent;
  std::string variant;
  double clean_ratio = 0.0;
  std::size_t weak_count = 0;
  /// (seed, test accuracy) of successful runs, by seed.
  std::vector<std::pair<std::uint64_t, double>> per_seed;
  std::size_t failed = 0;
  double mean_test = 0.0;
  double mean_dev = 0.0;

  bool complete() const { return failed == 0 && !per_seed.empty(); }
};

struct ReportTable {
  std::vector<Row> rows;

  const Row* find(std::string_view method, double clean_ratio, std::string_view variant = {}) const;
};

/// Groups records by key; rows sorted by (intent, encoder, variant,
/// weak_count, clean_ratio, method) with methods in canonical order.
ReportTable aggregate(std::span<const Record> records);

std::string format_table(const ReportTable& table);
std::string format_summary(const ReportTable& table);
/// One line per (intent, encoder, variant, weak_count, clean_ratio) with a
/// mean-accuracy column per method.
std::string format_series(const ReportTable& table);

/// Writes table.tsv, summary.txt and series.tsv into `dir`. A pure function
/// of `records`: re-emission produces identical bytes.
void emit_report(std::span<const Record> records, const std::filesystem::path& dir);

}  // namespace mailintent::report
