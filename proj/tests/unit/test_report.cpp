#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mailintent/error.hpp"
#include "mailintent/report.hpp"

using namespace mailintent;
using namespace mailintent::report;

namespace {

Record rec(std::string method, std::uint64_t seed, double test, bool ok = true) {
  Record r;
  r.method = std::move(method);
  r.encoder = "avgemb";
  r.intent = "SM";
  r.clean_ratio = 0.1;
  r.clean_count = 200;
  r.weak_count = 1800;
  r.seed = seed;
  r.ok = ok;
  r.test_accuracy = test;
  r.dev_accuracy = test - 0.01;
  if (!ok) r.error = "boom";
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(ReportTest, NoRecordsGivesHeaderOnly) {
  const auto table = format_table(aggregate({}));
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 1);
  EXPECT_EQ(table.rfind("method\t", 0), 0u);
}

TEST(ReportTest, FiveSeedMeanIsHandAverage) {
  const double acc[] = {0.71, 0.74, 0.69, 0.80, 0.77};
  std::vector<Record> records;
  for (std::uint64_t s = 5; s >= 1; --s) records.push_back(rec("hydra", s, acc[s - 1]));
  const auto table = aggregate(records);
  ASSERT_EQ(table.rows.size(), 1u);
  EXPECT_NEAR(table.rows[0].mean_test, (0.71 + 0.74 + 0.69 + 0.80 + 0.77) / 5.0, 1e-15);
  EXPECT_EQ(table.rows[0].per_seed.front().first, 1u);
  EXPECT_NE(table.find("hydra", 0.1), nullptr);
  EXPECT_EQ(table.find("hydra", 0.2), nullptr);
}

TEST(ReportTest, FailedRunsAreCountedNotAveraged) {
  const std::vector<Record> records{rec("glc", 1, 0.6), rec("glc", 2, 0.0, false), rec("weak", 1, 0.0, false)};
  const auto table = aggregate(records);
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(table.rows[0].method, "weak");
  EXPECT_EQ(table.rows[0].failed, 1u);
  EXPECT_DOUBLE_EQ(table.rows[1].mean_test, 0.6);
  EXPECT_NE(format_table(table).find("FAILED"), std::string::npos);
}

TEST(ReportTest, CanonicalMethodOrder) {
  const std::vector<Record> records{rec("hydra", 1, 0.8), rec("clean", 1, 0.7), rec("iwt", 1, 0.75)};
  const auto table = aggregate(records);
  EXPECT_EQ(table.rows[0].method, "clean");
  EXPECT_EQ(table.rows[1].method, "iwt");
  EXPECT_EQ(table.rows[2].method, "hydra");
}

TEST(ReportTest, RecordsRoundTripAndBadLinesReportPosition) {
  auto r = rec("hydra", 2, 0.8125);
  r.alpha = 10.0;
  r.variant = "combined";
  std::stringstream buf;
  const std::vector<Record> in{r, rec("clean", 1, 0.0, false)};
  write_records(buf, in);
  const auto out = read_records(buf);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].alpha, 10.0);
  EXPECT_EQ(out[0].variant, "combined");
  EXPECT_EQ(out[0].test_accuracy, 0.8125);
  EXPECT_FALSE(out[1].ok);
  EXPECT_EQ(out[1].error, "boom");

  std::istringstream bad("{\"method\":\"clean\"}\n\nnot json\n");
  try {
    read_records(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ReportTest, EmissionIsIdempotent) {
  const std::vector<Record> records{rec("hydra", 1, 0.8), rec("clean", 1, 0.7), rec("hydra", 2, 0.9)};
  const auto dir = std::filesystem::temp_directory_path() / "mailintent_report_test";
  std::filesystem::remove_all(dir);
  emit_report(records, dir);
  const auto first = slurp(dir / "table.tsv") + slurp(dir / "summary.txt") + slurp(dir / "series.tsv");
  emit_report(records, dir);
  const auto second = slurp(dir / "table.tsv") + slurp(dir / "summary.txt") + slurp(dir / "series.tsv");
  EXPECT_EQ(first, second);
  EXPECT_NE(slurp(dir / "series.tsv").find("0.8500"), std::string::npos);
  std::filesystem::remove_all(dir);
}
