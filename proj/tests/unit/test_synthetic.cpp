#include <gtest/gtest.h>

#include <set>

#include "mailintent/error.hpp"
#include "mailintent/synthetic.hpp"
#include "mailintent/weaklabel.hpp"

using namespace mailintent;
using namespace mailintent::synthetic;

namespace {

PerIntent<AuditTarget> published() {
  return {published_audit(Intent::RequestInformation), published_audit(Intent::ScheduleMeeting),
          published_audit(Intent::PromiseAction)};
}

}  // namespace

TEST(SyntheticTest, EqualSpecsGiveIdenticalCorpora) {
  SyntheticSpec spec;
  spec.num_threads = 150;
  spec.num_annotated_threads = 40;
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  EXPECT_EQ(a.corpus.messages(), b.corpus.messages());
  EXPECT_EQ(a.corpus.calendar(), b.corpus.calendar());
  EXPECT_EQ(a.truth, b.truth);
  spec.seed = 2;
  EXPECT_NE(generate_synthetic(spec).corpus.messages(), a.corpus.messages());
}

TEST(SyntheticTest, TruthCoversEveryMessageAndGoldOnlyAnnotatedThreads) {
  SyntheticSpec spec;
  spec.num_threads = 100;
  spec.num_annotated_threads = 30;
  const auto s = generate_synthetic(spec);
  EXPECT_EQ(s.truth.size(), 3 * s.corpus.size());
  ASSERT_TRUE(s.corpus.gold().has_value());
  std::set<std::string> annotated_threads;
  for (const auto& [key, label] : *s.corpus.gold()) {
    EXPECT_EQ(s.truth.at(key), label);
    annotated_threads.insert(s.corpus.at(key.first).thread_id);
  }
  EXPECT_EQ(annotated_threads.size(), 30u);
}

TEST(SyntheticTest, PublishedAuditRates) {
  EXPECT_DOUBLE_EQ(published_audit(Intent::RequestInformation).accuracy(), 0.675);
  EXPECT_NEAR(published_audit(Intent::ScheduleMeeting).accuracy(), 0.71, 1e-12);
  EXPECT_NEAR(published_audit(Intent::PromiseAction).accuracy(), 0.63, 1e-12);
  EXPECT_DOUBLE_EQ(published_audit(Intent::PromiseAction).negative_precision, 0.95);
}

TEST(SyntheticTest, CalibrationHitsTargetsInExpectation) {
  const auto spec = calibrate(SyntheticSpec{}, published());
  const auto got = expected_audit(spec);
  for (auto intent : {Intent::RequestInformation, Intent::ScheduleMeeting, Intent::PromiseAction}) {
    const auto want = published_audit(intent);
    EXPECT_NEAR(got[slot(intent)].positive_precision, want.positive_precision, 1e-9) << intent_code(intent);
    EXPECT_NEAR(got[slot(intent)].negative_precision, want.negative_precision, 1e-9) << intent_code(intent);
  }
}

TEST(SyntheticTest, CalibratedCorpusMatchesExpectationEmpirically) {
  auto spec = calibrate(SyntheticSpec{}, published());
  spec.num_threads = 20000;
  const auto s = generate_synthetic(spec);
  for (auto intent : {Intent::RequestInformation, Intent::ScheduleMeeting, Intent::PromiseAction}) {
    const auto labels = weaklabel::label_intent(s.corpus, intent);
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (const auto& a : labels) {
      const bool truth = s.truth.at({a.message_id, intent});
      (a.positive ? (truth ? tp : fp) : (truth ? fn : tn))++;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double npv = static_cast<double>(tn) / static_cast<double>(tn + fn);
    EXPECT_NEAR(0.5 * (precision + npv), published_audit(intent).accuracy(), 0.03) << intent_code(intent);
  }
}

TEST(SyntheticTest, UnreachableTargetsAndBadRatesThrow) {
  SyntheticSpec spec;
  spec.priors[0] = 1.5;
  EXPECT_THROW(spec.validate(), ValidationError);
  auto targets = published();
  targets[0] = {0.01, 0.01};
  EXPECT_THROW(calibrate(SyntheticSpec{}, targets), ValidationError);
}

TEST(SyntheticTest, SizedForLeavesRoomForTheSplits) {
  const auto spec = sized_for(SyntheticSpec{}, Intent::ScheduleMeeting, {200, 1800, 300, 1000});
  EXPECT_GT(spec.num_annotated_threads, 0u);
  EXPECT_GT(spec.num_threads, spec.num_annotated_threads);
}
