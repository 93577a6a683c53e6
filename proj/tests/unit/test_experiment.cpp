#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mailintent/error.hpp"
#include "mailintent/experiment.hpp"

using namespace mailintent;
using namespace mailintent::experiment;

namespace {

/// A sweep small enough for unit tests: two methods, tiny splits, few
/// epochs, uncalibrated noise.
ExperimentSpec tiny_spec() {
  ExperimentSpec s;
  s.intent = Intent::ScheduleMeeting;
  s.encoder.embed_dim = 8;
  s.encoder.max_len = 24;
  s.methods = {baselines::Method::of(baselines::BaselineKind::Clean), baselines::Method::hydra()};
  s.clean_ratios = {0.1};
  s.seeds = {1};
  s.weak_size = 180;
  s.dev_size = 40;
  s.test_size = 60;
  s.calibrate = false;
  s.synthetic.noise[synthetic::slot(Intent::ScheduleMeeting)] = {0.2, 0.2};
  s.method.train.epochs = 3;
  s.method.hydra.lambda_schedule = {0.5, 1.0};
  s.method.hydra.epochs_per_stage = 2;
  s.method.hydra.warmup_epochs = 2;
  s.method.hydra.batch_half = 8;
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST(ConfigTest, ParsesCommentsAndBlankLines) {
  std::istringstream in("# header\n\nseeds = 1-3\n  weak_size=900  # inline\nintent = PA\n");
  const auto c = parse_config(in);
  EXPECT_EQ(c.at("seeds"), "1-3");
  EXPECT_EQ(c.at("weak_size"), "900");
  const auto spec = spec_from_config(c);
  EXPECT_EQ(spec.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(spec.weak_size, 900u);
  EXPECT_EQ(spec.intent, Intent::PromiseAction);
}

TEST(ConfigTest, MalformedLinesAndUnknownKeysAreRejected) {
  std::istringstream no_eq("seeds 1\n");
  EXPECT_THROW(parse_config(no_eq), ParseError);
  std::istringstream empty_key(" = 3\n");
  EXPECT_THROW(parse_config(empty_key), ParseError);
  EXPECT_THROW(spec_from_config({{"no.such.key", "1"}}), ValidationError);
  EXPECT_THROW(spec_from_config({{"weak_size", "lots"}}), ValidationError);
  EXPECT_THROW(spec_from_config({{"clean_ratios", "0"}}).validate(), ValidationError);
}

TEST(ConfigTest, LaterLayersWin) {
  const ConfigMap file{{"seeds", "1"}, {"weak_size", "100"}};
  const ConfigMap cli{{"seeds", "4,5"}};
  const auto merged = merge(file, cli);
  EXPECT_EQ(merged.at("seeds"), "4,5");
  EXPECT_EQ(merged.at("weak_size"), "100");
}

TEST(ConfigTest, EveryKeyRoundTrips) {
  for (const auto& spec : {ExperimentSpec{}, benchmark_spec(), transfer_benchmark_spec()}) {
    const auto config = to_config(spec);
    EXPECT_EQ(config.size(), config_keys().size());
    const auto back = spec_from_config(config);
    EXPECT_EQ(to_config(back), config);
    EXPECT_EQ(back.method.hydra.optimizer.epsilon, spec.method.hydra.optimizer.epsilon);
    std::istringstream text(format_config(config));
    EXPECT_EQ(parse_config(text), config);
  }
}

TEST(ConfigTest, RangesAndAllMethods) {
  const auto s = spec_from_config({{"clean_ratios", "0.01:0.05:0.02"}, {"methods", "all"}});
  ASSERT_EQ(s.clean_ratios.size(), 3u);
  EXPECT_NEAR(s.clean_ratios[2], 0.05, 1e-12);
  EXPECT_EQ(s.methods.size(), 7u);
}

TEST(WeakCountsTest, FractionsOfTheFullPool) {
  const std::vector<double> f{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  EXPECT_EQ(weak_counts(16200, f), (std::vector<std::size_t>{0, 3240, 6480, 9720, 12960, 16200}));
  const std::vector<double> bad{1.5};
  EXPECT_THROW(weak_counts(10, bad), ValidationError);
}

TEST(CellsTest, SeedsOutermostMethodsInnermost) {
  auto s = tiny_spec();
  s.seeds = {1, 2};
  s.clean_ratios = {0.05, 0.1};
  const auto cells = expand_cells(s);
  ASSERT_EQ(cells.size(), 8u);
  EXPECT_EQ(cells[0].seed, 1u);
  EXPECT_EQ(cells[1].method, baselines::Method::hydra());
  EXPECT_DOUBLE_EQ(cells[2].clean_ratio, 0.1);
  EXPECT_EQ(cells[4].seed, 2u);
}

TEST(DatasetTest, SyntheticCellSizes) {
  const auto s = tiny_spec();
  const auto ds = make_dataset(s, 0.1, 0.5, 1);
  EXPECT_EQ(ds.clean.size(), 20u);
  EXPECT_EQ(ds.weak.size(), 90u);
  EXPECT_EQ(ds.dev.size(), 40u);
  EXPECT_EQ(ds.test.size(), 60u);
}

TEST(DatasetTest, RequestedTableFourSizesAreCarved) {
  ExperimentSpec s;
  s.intent = Intent::RequestInformation;
  s.clean_ratios = {0.1};
  s.weak_size = 16200;
  s.dev_size = 334;
  s.test_size = 336;
  s.calibrate = true;
  const auto ds = make_dataset(s, 0.1, 1.0, 3);
  EXPECT_EQ(ds.clean.size(), 1800u);
  EXPECT_EQ(ds.weak.size(), 16200u);
  EXPECT_EQ(ds.dev.size(), 334u);
  EXPECT_EQ(ds.test.size(), 336u);
  EXPECT_NEAR(ds.clean_ratio(), 0.10, 1e-12);
}

TEST(SweepTest, SingleCellGridGivesOneRow) {
  auto s = tiny_spec();
  s.methods = {baselines::Method::of(baselines::BaselineKind::Clean)};
  const auto r = run_sweep(s);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_TRUE(r.ok());
  ASSERT_EQ(r.table.rows.size(), 1u);
  EXPECT_EQ(r.records[0].clean_count, 20u);
  EXPECT_EQ(r.records[0].weak_count, 180u);
  EXPECT_EQ(r.records[0].intent, "SM");
}

TEST(SweepTest, FailingCellsAreRecordedAndTheSweepContinues) {
  auto s = tiny_spec();
  s.methods = {baselines::Method::of(baselines::BaselineKind::Weak),
               baselines::Method::of(baselines::BaselineKind::Clean)};
  s.weak_fractions = {0.0};
  const auto r = run_sweep(s);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.failed, 1u);
  EXPECT_FALSE(r.records[0].ok);
  EXPECT_FALSE(r.records[0].error.empty());
  EXPECT_TRUE(r.records[1].ok);
}

TEST(SweepTest, ParallelRunsMatchSerialAndPersistTheSameReport) {
  auto s = tiny_spec();
  s.seeds = {1, 2};
  const auto base = std::filesystem::temp_directory_path() / "mailintent_sweep_test";
  std::filesystem::remove_all(base);
  const auto serial = run_sweep(s, {base / "a", {}, {}});
  s.jobs = 2;
  std::size_t seen = 0;
  const auto parallel = run_sweep(s, {base / "b", {}, [&](const report::Record&) { ++seen; }});
  EXPECT_EQ(seen, 4u);
  for (const char* f : {"records.jsonl", "table.tsv", "summary.txt", "series.tsv"}) {
    EXPECT_EQ(slurp(base / "a" / f), slurp(base / "b" / f)) << f;
  }
  EXPECT_EQ(serial.records.size(), parallel.records.size());

  const auto manifest = nlohmann::json::parse(slurp(base / "a" / "manifest.json"));
  EXPECT_EQ(manifest.at("kind"), "sweep");
  auto replay = spec_from_manifest(manifest);
  replay.jobs = 1;
  const auto again = run_sweep(replay, {base / "c", {}, {}});
  EXPECT_EQ(slurp(base / "a" / "table.tsv"), slurp(base / "c" / "table.tsv"));
  std::filesystem::remove_all(base);
}

TEST(TransferTest, SameDomainCombinedEqualsStandardRun) {
  auto s = tiny_spec();
  s.transfer_source_domain = s.synthetic.domain;
  s.transfer_clean_size = 20;
  s.transfer_tiny_clean_size = 6;
  const auto t = run_transfer(s);
  ASSERT_EQ(t.records.size(), 5u);
  EXPECT_TRUE(t.ok());
  s.methods = {baselines::Method::hydra()};
  const auto standard = run_sweep(s);
  const auto* combined = &t.records[0];
  EXPECT_EQ(combined->variant, kTransferCombined);
  EXPECT_EQ(combined->test_accuracy, standard.records[0].test_accuracy);
  EXPECT_EQ(combined->dev_accuracy, standard.records[0].dev_accuracy);
  bool zero_shot = false;
  for (const auto& r : t.records) zero_shot |= r.variant == kTransferZeroShot;
  EXPECT_TRUE(zero_shot);
}

TEST(ManifestTest, GitBlobHashes) {
  EXPECT_EQ(git_blob_sha1(std::string_view("hello\n")), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(git_blob_sha1(std::string_view("")), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(sha1_hex("abc"), "a9993e364706816aba3e25717850c26c9cd0d89d");
}

TEST(ManifestTest, RecordsConfigAndInputs) {
  const auto dir = std::filesystem::temp_directory_path() / "mailintent_manifest_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "in.txt", std::ios::binary) << "hello\n";
  }
  const auto s = benchmark_spec();
  const std::filesystem::path inputs[] = {dir / "in.txt"};
  const auto m = make_manifest(s, "train", inputs);
  EXPECT_EQ(m.at("kind"), "train");
  EXPECT_EQ(m.at("inputs").at((dir / "in.txt").string()), "ce013625030ba8dba906f756967f9e9ca394464a");
  EXPECT_EQ(m.at("config_sha1"), sha1_hex(m.at("config").get<std::string>()));
  EXPECT_EQ(to_config(spec_from_manifest(m)), to_config(s));
  std::filesystem::remove_all(dir);
}
