#include "mailintent/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "mailintent/error.hpp"

namespace mailintent::report {

nlohmann::json to_json(const Record& r) {
  nlohmann::json j{{"method", r.method},
                   {"encoder", r.encoder},
                   {"intent", r.intent},
                   {"clean_ratio", r.clean_ratio},
                   {"clean_count", r.clean_count},
                   {"weak_count", r.weak_count},
                   {"seed", r.seed},
                   {"ok", r.ok}};
  if (!r.variant.empty()) j["variant"] = r.variant;
  if (r.ok) {
    j["dev_acc"] = r.dev_accuracy;
    j["test_acc"] = r.test_accuracy;
  } else {
    j["error"] = r.error;
  }
  if (r.alpha) j["alpha"] = *r.alpha;
  return j;
}

Record record_from_json(const nlohmann::json& j) {
  Record r;
  r.method = j.at("method").get<std::string>();
  r.encoder = j.value("encoder", std::string());
  r.intent = j.value("intent", std::string());
  r.clean_ratio = j.value("clean_ratio", 0.0);
  r.clean_count = j.value("clean_count", std::size_t{0});
  r.weak_count = j.value("weak_count", std::size_t{0});
  r.seed = j.value("seed", std::uint64_t{0});
  r.variant = j.value("variant", std::string());
  r.ok = j.value("ok", true);
  r.error = j.value("error", std::string());
  r.dev_accuracy = j.value("dev_acc", 0.0);
  r.test_accuracy = j.value("test_acc", 0.0);
  if (j.contains("alpha")) r.alpha = j.at("alpha").get<double>();
  return r;
}

void write_records(std::ostream& out, std::span<const Record> records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::vector<Record> read_records(std::istream& in) {
  std::vector<Record> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

namespace {

int method_rank(const std::string& m) {
  static const std::vector<std::string> order{"clean", "weak", "clean+weak", "preweak", "iwt", "glc", "hydra"};
  auto it = std::find(order.begin(), order.end(), m);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

using Key = std::tuple<std::string, std::string, std::string, std::size_t, double, int, std::string>;

Key key_of(const Record& r) {
  return {r.intent, r.encoder, r.variant, r.weak_count, r.clean_ratio, method_rank(r.method), r.method};
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string ratio_text(double r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", r);
  return buf;
}

}  // namespace

const Row* ReportTable::find(std::string_view method, double clean_ratio, std::string_view variant) const {
  for (const auto& row : rows) {
    if (row.method == method && std::abs(row.clean_ratio - clean_ratio) < 1e-9 && row.variant == variant) return &row;
  }
  return nullptr;
}

ReportTable aggregate(std::span<const Record> records) {
  std::map<Key, std::vector<const Record*>> groups;
  for (const auto& r : records) groups[key_of(r)].push_back(&r);
  ReportTable table;
  for (auto& [key, group] : groups) {
    std::sort(group.begin(), group.end(), [](const Record* a, const Record* b) { return a->seed < b->seed; });
    Row row;
    const Record& first = *group.front();
    row.method = first.method;
    row.encoder = first.encoder;
    row.intent = first.intent;
    row.variant = first.variant;
    row.clean_ratio = first.clean_ratio;
    row.weak_count = first.weak_count;
    double dev = 0.0;
    for (const Record* r : group) {
      if (!r->ok) {
        ++row.failed;
        continue;
      }
      row.per_seed.emplace_back(r->seed, r->test_accuracy);
      row.mean_test += r->test_accuracy;
      dev += r->dev_accuracy;
    }
    if (!row.per_seed.empty()) {
      row.mean_test /= static_cast<double>(row.per_seed.size());
      row.mean_dev = dev / static_cast<double>(row.per_seed.size());
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string format_table(const ReportTable& table) {
  std::ostringstream out;
  out << "method\tencoder\tintent\tvariant\tclean_ratio\tweak_count\truns\tfailed\tmean_test_acc\tmean_dev_acc\t"
         "per_seed_test_acc\n";
  for (const auto& row : table.rows) {
    out << row.method << '\t' << row.encoder << '\t' << row.intent << '\t' << row.variant << '\t'
        << ratio_text(row.clean_ratio) << '\t' << row.weak_count << '\t' << row.per_seed.size() << '\t' << row.failed
        << '\t' << (row.per_seed.empty() ? "FAILED" : fmt(row.mean_test)) << '\t'
        << (row.per_seed.empty() ? "FAILED" : fmt(row.mean_dev)) << '\t';
    for (std::size_t i = 0; i < row.per_seed.size(); ++i) {
      if (i) out << ',';
      out << row.per_seed[i].first << ':' << fmt(row.per_seed[i].second);
    }
    out << '\n';
  }
  return out.str();
}

std::string format_summary(const ReportTable& table) {
  std::ostringstream out;
  std::size_t failed = 0, runs = 0;
  for (const auto& row : table.rows) {
    failed += row.failed;
    runs += row.per_seed.size() + row.failed;
  }
  out << "rows: " << table.rows.size() << "  runs: " << runs << "  failed runs: " << failed << '\n';
  std::string section;
  for (const auto& row : table.rows) {
    std::string head = row.intent + " / " + row.encoder;
    if (!row.variant.empty()) head += " / " + row.variant;
    head += " / clean ratio " + ratio_text(row.clean_ratio) + " / weak " + std::to_string(row.weak_count);
    if (head != section) {
      out << '\n' << head << '\n';
      section = head;
    }
    char line[160];
    if (row.per_seed.empty()) {
      std::snprintf(line, sizeof line, "  %-12s FAILED (%zu runs)\n", row.method.c_str(), row.failed);
    } else {
      std::snprintf(line, sizeof line, "  %-12s %s  (n=%zu%s)\n", row.method.c_str(), fmt(row.mean_test).c_str(),
                    row.per_seed.size(), row.failed ? ", some runs failed" : "");
    }
    out << line;
  }
  return out.str();
}

std::string format_series(const ReportTable& table) {
  std::vector<std::string> methods;
  {
    std::set<std::pair<int, std::string>> seen;
    for (const auto& row : table.rows) seen.emplace(method_rank(row.method), row.method);
    for (const auto& [rank, m] : seen) methods.push_back(m);
  }
  using PointKey = std::tuple<std::string, std::string, std::string, std::size_t, double>;
  std::map<PointKey, std::map<std::string, const Row*>> points;
  for (const auto& row : table.rows) {
    points[{row.intent, row.encoder, row.variant, row.weak_count, row.clean_ratio}][row.method] = &row;
  }
  std::ostringstream out;
  out << "intent\tencoder\tvariant\tweak_count\tclean_ratio";
  for (const auto& m : methods) out << '\t' << m;
  out << '\n';
  for (const auto& [key, by_method] : points) {
    const auto& [intent, encoder, variant, weak, ratio] = key;
    out << intent << '\t' << encoder << '\t' << variant << '\t' << weak << '\t' << ratio_text(ratio);
    for (const auto& m : methods) {
      auto it = by_method.find(m);
      out << '\t';
      if (it == by_method.end()) continue;
      out << (it->second->per_seed.empty() ? "nan" : fmt(it->second->mean_test));
    }
    out << '\n';
  }
  return out.str();
}

void emit_report(std::span<const Record> records, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto table = aggregate(records);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw InputError("cannot write " + (dir / name).string());
    out << text;
  };
  write("table.tsv", format_table(table));
  write("summary.txt", format_summary(table));
  write("series.tsv", format_series(table));
}

}  // namespace mailintent::report
