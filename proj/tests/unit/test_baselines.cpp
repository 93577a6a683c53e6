#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "mailintent/baselines.hpp"
#include "mailintent/error.hpp"

using namespace mailintent;
using namespace mailintent::baselines;

namespace {

MethodConfig quick() {
  MethodConfig c;
  c.train.epochs = 6;
  c.train.batch_size = 16;
  c.hydra.lambda_schedule = {0.5, 1.0};
  c.hydra.epochs_per_stage = 2;
  c.hydra.warmup_epochs = 2;
  c.hydra.batch_half = 8;
  return c;
}

void expect_same_params(const Network& a, const Network& b) {
  ASSERT_EQ(a.params().size(), b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) EXPECT_EQ(a.params()[i].values, b.params()[i].values);
}

}  // namespace

TEST(MethodTest, NamesParseBack) {
  const auto all = Method::all();
  ASSERT_EQ(all.size(), 7u);
  EXPECT_TRUE(all.back().is_hydra());
  for (const auto& m : all) EXPECT_EQ(Method::parse(m.name()), m);
  EXPECT_EQ(Method::parse("GLC"), Method::of(BaselineKind::GLC));
  EXPECT_THROW(Method::parse("snorkel"), ValidationError);
}

TEST(BaselineTest, UnitWeightIwtEqualsCleanPlusWeak) {
  const auto data = fixtures::toy_data({}, 1);
  auto cfg = quick();
  cfg.iwt = {1.0, 1.0, 1.0};
  const auto iwt = train_baseline(BaselineKind::IWT, data, cfg, 4);
  const auto cw = train_baseline(BaselineKind::CleanPlusWeak, data, cfg, 4);
  expect_same_params(iwt.model, cw.model);
  EXPECT_EQ(iwt.metrics.test_accuracy, cw.metrics.test_accuracy);
}

TEST(BaselineTest, PreWeakWithoutPretrainingEqualsClean) {
  const auto data = fixtures::toy_data({}, 2);
  auto cfg = quick();
  cfg.pretrain_epochs = 0;
  const auto pre = train_baseline(BaselineKind::PreWeak, data, cfg, 5);
  const auto clean = train_baseline(BaselineKind::Clean, data, cfg, 5);
  expect_same_params(pre.model, clean.model);
}

TEST(BaselineTest, EmptySplitsAreRejected) {
  auto cfg = quick();
  const auto no_weak = fixtures::toy_data({.weak = 0}, 3);
  EXPECT_THROW(train_baseline(BaselineKind::Weak, no_weak, cfg, 1), InputError);
  EXPECT_THROW(train_baseline(BaselineKind::GLC, no_weak, cfg, 1), InputError);
  const auto no_clean = fixtures::toy_data({.clean = 0}, 3);
  EXPECT_THROW(train_baseline(BaselineKind::Clean, no_clean, cfg, 1), InputError);
  EXPECT_THROW(train_method(Method::hydra(), no_clean, cfg, 1), InputError);
  cfg.iwt.clean_weight = -1.0;
  EXPECT_THROW(train_baseline(BaselineKind::IWT, fixtures::toy_data({}, 3), cfg, 1), ValidationError);
}

TEST(BaselineTest, MetricsDescribeTheRun) {
  const auto data = fixtures::toy_data({.clean = 20, .weak = 180}, 4);
  const auto r = train_method(Method::of(BaselineKind::GLC), data, quick(), 9);
  EXPECT_EQ(r.metrics.method, "glc");
  EXPECT_EQ(r.metrics.encoder, "avgemb");
  EXPECT_DOUBLE_EQ(r.metrics.clean_ratio, 0.1);
  EXPECT_EQ(r.metrics.seed, 9u);
  ASSERT_TRUE(r.metrics.corruption.has_value());
  EXPECT_DOUBLE_EQ(r.metrics.test_accuracy, accuracy(r.model, data.test));
}

TEST(HydraMethodTest, AblationsChangeTheRun) {
  const auto data = fixtures::toy_data({.clean = 20, .weak = 200, .weak_flip = 0.3}, 5);
  auto cfg = quick();
  const auto full = train_method(Method::hydra(), data, cfg, 2);
  EXPECT_TRUE(full.metrics.corruption.has_value());
  EXPECT_FALSE(full.stages.empty());
  cfg.hydra_label_correction = false;
  const auto no_glc = train_method(Method::hydra(), data, cfg, 2);
  EXPECT_FALSE(no_glc.metrics.corruption.has_value());
  cfg.hydra_self_paced = false;
  const auto plain = train_method(Method::hydra(), data, cfg, 2);
  for (std::size_t k = 1; k < plain.stages.size(); ++k) EXPECT_EQ(plain.stages[k].selected, data.weak.size());
  EXPECT_EQ(saturated_schedule(3).size(), 3u);
}

TEST(RepeatedTest, SingleSeedMeanIsThatRun) {
  const auto data = fixtures::toy_data({}, 6);
  const std::uint64_t seeds[] = {3};
  const auto rep = run_repeated(Method::of(BaselineKind::Clean), data, quick(), seeds);
  const auto one = train_method(Method::of(BaselineKind::Clean), data, quick(), 3);
  EXPECT_EQ(rep.mean_test_accuracy, one.metrics.test_accuracy);
  EXPECT_EQ(rep.mean_dev_accuracy, one.metrics.dev_accuracy);
}

TEST(RepeatedTest, MeansAreHandAveragesAndDeterministic) {
  const auto data = fixtures::toy_data({}, 7);
  const std::uint64_t seeds[] = {1, 2, 3};
  const auto a = run_repeated(Method::of(BaselineKind::Weak), data, quick(), seeds);
  const auto b = run_repeated(Method::of(BaselineKind::Weak), data, quick(), seeds);
  double sum = 0;
  for (const auto& r : a.runs) sum += r.test_accuracy;
  EXPECT_NEAR(a.mean_test_accuracy, sum / 3.0, 1e-15);
  EXPECT_EQ(a.mean_test_accuracy, b.mean_test_accuracy);
  EXPECT_THROW(run_repeated(Method::hydra(), data, quick(), {}), ValidationError);
}
