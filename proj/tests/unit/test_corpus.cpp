#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "mailintent/corpus.hpp"
#include "mailintent/error.hpp"
#include "mailintent/synthetic.hpp"
#include "mailintent/weaklabel.hpp"

using namespace mailintent;

namespace {

EmailMessage msg(std::string id, std::int64_t ts, std::optional<std::string> parent = std::nullopt,
                 std::string thread = "t") {
  EmailMessage m;
  m.id = std::move(id);
  m.thread_id = std::move(thread);
  m.timestamp = ts;
  m.sender = "alice";
  m.in_reply_to = std::move(parent);
  return m;
}

}  // namespace

TEST(CorpusTest, EmptyFileGivesEmptyCorpus) {
  std::istringstream in("");
  Corpus c(read_messages(in), {});
  EXPECT_TRUE(c.empty());
  EXPECT_TRUE(c.threads().empty());
}

TEST(CorpusTest, ReplyOrderedAfterParentInOneThread) {
  std::istringstream in(
      R"({"id":"b","thread_id":"t","sender":"x","recipients":["y"],"subject":"s","body":"hi","timestamp":5})"
      "\n"
      R"({"id":"a","thread_id":"t","sender":"y","recipients":["x"],"subject":"RE: s","body":"ok","timestamp":9,"in_reply_to":"b"})"
      "\n");
  Corpus c(read_messages(in), {});
  ASSERT_EQ(c.threads().size(), 1u);
  const auto& members = c.threads()[0].members;
  ASSERT_EQ(members.size(), 2u);
  EXPECT_EQ(c.messages()[members[0]].id, "b");
  EXPECT_EQ(c.messages()[members[1]].id, "a");
}

TEST(CorpusTest, ThreadsMatchUnionFind) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto c = fixtures::random_corpus({.messages = 50}, seed);
    std::set<std::set<std::string>> got;
    for (const auto& t : c.threads()) {
      std::set<std::string> ids;
      for (auto i : t.members) ids.insert(c.messages()[i].id);
      got.insert(ids);
      for (std::size_t k = 1; k < t.members.size(); ++k) {
        const auto& prev = c.messages()[t.members[k - 1]];
        const auto& cur = c.messages()[t.members[k]];
        EXPECT_TRUE(prev.timestamp < cur.timestamp || (prev.timestamp == cur.timestamp && prev.id < cur.id));
      }
    }
    EXPECT_EQ(got, fixtures::union_find_threads(c.messages())) << "seed " << seed;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const auto& members = c.threads()[c.thread_of(i)].members;
      EXPECT_NE(std::find(members.begin(), members.end(), i), members.end());
    }
  }
}

TEST(CorpusTest, RejectsBrokenReferences) {
  EXPECT_THROW(Corpus({msg("a", 1), msg("a", 2)}, {}), IntegrityError);
  EXPECT_THROW(Corpus({msg("a", 1, "ghost")}, {}), IntegrityError);
  EXPECT_THROW(Corpus({msg("b", 5), msg("a", 5, "b")}, {}), IntegrityError);
  EXPECT_THROW(Corpus({msg("b", 5, std::nullopt, "t1"), msg("a", 9, "b", "t2")}, {}), IntegrityError);
}

TEST(CorpusTest, MalformedRecordReportsLine) {
  std::istringstream in(
      R"({"id":"a","thread_id":"t","sender":"x","recipients":[],"subject":"s","body":"","timestamp":1})"
      "\n{not json\n");
  try {
    read_messages(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(CorpusTest, SaveAndLoadPreservesCorpus) {
  auto spec = synthetic::SyntheticSpec{};
  spec.num_threads = 60;
  spec.num_annotated_threads = 20;
  const auto syn = synthetic::generate_synthetic(spec);
  const auto dir = std::filesystem::temp_directory_path() / "mailintent_corpus_roundtrip";
  std::filesystem::remove_all(dir);
  const auto paths = save_corpus(syn.corpus, dir);
  const auto back = load_corpus(paths);
  EXPECT_EQ(back.messages(), syn.corpus.messages());
  EXPECT_EQ(back.calendar(), syn.corpus.calendar());
  EXPECT_EQ(back.gold(), syn.corpus.gold());
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// Splits

namespace {

/// `pos` gold positives and `neg` gold negatives in annotated threads, plus
/// `weak` weakly labeled messages alternating positive/negative.
struct Pools {
  Corpus corpus;
  WeakLabelMap weak;
};

Pools pools(std::size_t pos, std::size_t neg, std::size_t weak) {
  std::vector<EmailMessage> msgs;
  GoldMap gold;
  WeakLabelMap labels;
  std::int64_t ts = 0;
  for (std::size_t i = 0; i < pos + neg; ++i) {
    auto m = msg("g" + std::to_string(i), ++ts, std::nullopt, "tg" + std::to_string(i));
    m.body = "gold " + std::to_string(i);
    gold[{m.id, Intent::RequestInformation}] = i < pos;
    msgs.push_back(m);
  }
  for (std::size_t i = 0; i < weak; ++i) {
    auto m = msg("w" + std::to_string(i), ++ts, std::nullopt, "tw" + std::to_string(i));
    labels[m.id] = i % 2 == 0;
    msgs.push_back(m);
  }
  return {Corpus(std::move(msgs), {}, gold), labels};
}

std::size_t count_label(const std::vector<Example>& xs, int label) {
  return static_cast<std::size_t>(
      std::count_if(xs.begin(), xs.end(), [&](const Example& e) { return e.label() == label; }));
}

}  // namespace

TEST(BuildDatasetTest, BalancesToTheSmallerClass) {
  const auto p = pools(60, 200, 0);
  DatasetOptions opt;
  const auto ds = build_dataset(p.corpus, p.weak, opt);
  EXPECT_EQ(count_label(ds.clean, 1), 60u);
  EXPECT_EQ(count_label(ds.clean, 0), 60u);
  EXPECT_TRUE(ds.weak.empty());
  EXPECT_DOUBLE_EQ(ds.clean_ratio(), 1.0);
}

TEST(BuildDatasetTest, SplitsAreDisjointBalancedAndNested) {
  const auto p = pools(300, 300, 400);
  std::set<std::string> prev_clean;
  std::vector<Example> prev_test;
  for (std::size_t clean : {10, 40, 100}) {
    DatasetOptions opt;
    opt.clean_size = clean;
    opt.weak_size = 200;
    opt.dev_size = 50;
    opt.test_size = 60;
    opt.seed = 3;
    const auto ds = build_dataset(p.corpus, p.weak, opt);
    EXPECT_EQ(ds.clean.size(), clean);
    EXPECT_EQ(ds.weak.size(), 200u);
    EXPECT_EQ(count_label(ds.test, 1), 30u);
    EXPECT_EQ(count_label(ds.dev, 0), 25u);
    EXPECT_EQ(count_label(ds.weak, 1), 100u);
    std::set<std::string> ids;
    for (const auto* split : {&ds.clean, &ds.weak, &ds.dev, &ds.test}) {
      for (const auto& e : *split) EXPECT_TRUE(ids.insert(e.id).second) << e.id;
    }
    std::set<std::string> clean_ids;
    for (const auto& e : ds.clean) clean_ids.insert(e.id);
    EXPECT_TRUE(std::includes(clean_ids.begin(), clean_ids.end(), prev_clean.begin(), prev_clean.end()));
    prev_clean = clean_ids;
    if (!prev_test.empty()) {
      for (std::size_t i = 0; i < ds.test.size(); ++i) EXPECT_EQ(ds.test[i].id, prev_test[i].id);
    }
    prev_test = ds.test;
  }
}

TEST(BuildDatasetTest, RatioResolvesCounts) {
  const auto p = pools(400, 400, 1000);
  DatasetOptions opt;
  opt.clean_ratio = 0.1;
  opt.weak_size = 900;
  const auto ds = build_dataset(p.corpus, p.weak, opt);
  EXPECT_EQ(ds.clean.size(), 100u);
  EXPECT_NEAR(ds.clean_ratio(), 0.1, 1e-12);
}

TEST(BuildDatasetTest, OversizedRequestsThrowSizingError) {
  const auto p = pools(10, 10, 10);
  DatasetOptions opt;
  opt.test_size = 40;
  EXPECT_THROW(build_dataset(p.corpus, p.weak, opt), SizingError);
  DatasetOptions weak_opt;
  weak_opt.weak_size = 50;
  EXPECT_THROW(build_dataset(p.corpus, p.weak, weak_opt), SizingError);
  DatasetOptions bad_ratio;
  bad_ratio.clean_ratio = 0.0;
  EXPECT_THROW(build_dataset(p.corpus, p.weak, bad_ratio), ValidationError);
}

TEST(BuildDatasetTest, PublishedRatioOfTenPercent) {
  Dataset ds;
  ds.clean.resize(1800);
  ds.weak.resize(16200);
  EXPECT_NEAR(ds.clean_ratio(), 0.10, 1e-12);
}
