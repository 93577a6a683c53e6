#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "mailintent/error.hpp"
#include "mailintent/hydra.hpp"

using namespace mailintent;
using namespace mailintent::hydra;

namespace {

std::vector<const PreparedExample*> ptrs(const PreparedSet& set, std::size_t n) {
  std::vector<const PreparedExample*> out;
  for (std::size_t i = 0; i < n && i < set.size(); ++i) out.push_back(&set[i]);
  return out;
}

std::vector<std::uint8_t> brute_force(const std::vector<double>& losses, double lambda, double alpha) {
  const std::size_t n = losses.size();
  std::vector<std::uint8_t> best(n, 0);
  double best_value = 0.0;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    std::vector<std::uint8_t> v(n);
    for (std::size_t j = 0; j < n; ++j) v[j] = (mask >> j) & 1u;
    const double value = selection_objective(losses, v, lambda, alpha);
    if (value < best_value) {
      best_value = value;
      best = v;
    }
  }
  return best;
}

HydraConfig quick_config() {
  HydraConfig c;
  c.lambda_schedule = {0.5, 1.0, 2.0};
  c.epochs_per_stage = 3;
  c.warmup_epochs = 3;
  c.batch_half = 8;
  c.patience = 0;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(DualLossTest, ZeroAlphaIsCleanOnly) {
  const auto data = fixtures::toy_data({.clean = 6, .weak = 6}, 1);
  Network net(network_config(data, 2), 4);
  const auto clean = ptrs(data.clean, 6), weak = ptrs(data.weak, 6);
  const auto with = dual_loss(net, clean, weak, 0.0, false);
  const auto without = dual_loss(net, clean, {}, 1.0, false);
  EXPECT_DOUBLE_EQ(with.total, without.total);
  EXPECT_DOUBLE_EQ(with.total, with.clean);
}

TEST(DualLossTest, OneCleanOneWeakHandSum) {
  const auto data = fixtures::toy_data({.clean = 1, .weak = 1}, 2);
  Network net(network_config(data, 2), 5);
  const auto& c = data.clean[0];
  const auto& w = data.weak[0];
  const double hand = net.loss(c.tokens, kCleanHead, c.target) + 2.5 * net.loss(w.tokens, kWeakHead, w.target);
  const auto l = dual_loss(net, ptrs(data.clean, 1), ptrs(data.weak, 1), 2.5, false);
  EXPECT_NEAR(l.total, hand, 1e-12);
}

TEST(DualLossTest, GradientMatchesFiniteDifferences) {
  const auto data = fixtures::toy_data({.clean = 3, .weak = 4}, 3);
  Network net(network_config(data, 2), 6);
  const auto clean = ptrs(data.clean, 3), weak = ptrs(data.weak, 4);
  auto loss = [&](diffkit::ParamStore&, bool g) { return dual_loss(net, clean, weak, 0.7, g).total; };
  EXPECT_LT(diffkit::grad_check(loss, net.params()).max_relative_error, 1e-4);
}

TEST(SelectWeakTest, PublishedExample) {
  const std::vector<double> losses{0.05, 0.2, 0.09, 0.31, 0.10};
  EXPECT_EQ(select_weak(losses, 1.0, 10.0), (std::vector<std::uint8_t>{1, 0, 1, 0, 0}));
  EXPECT_EQ(brute_force(losses, 1.0, 10.0), (std::vector<std::uint8_t>{1, 0, 1, 0, 0}));
}

TEST(SelectWeakTest, HugeLambdaSelectsAll) {
  const std::vector<double> losses{0.5, 3.0, 40.0};
  EXPECT_EQ(select_weak(losses, 1e9, 1.0), (std::vector<std::uint8_t>{1, 1, 1}));
}

TEST(SelectWeakTest, MatchesExhaustiveSearchOnFiveElements) {
  std::mt19937_64 rng(11);
  std::exponential_distribution<double> loss(2.0);
  std::uniform_real_distribution<double> lam(0.05, 3.0), alpha(0.1, 10.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> l(5);
    for (auto& v : l) v = loss(rng);
    const double a = alpha(rng), lm = lam(rng);
    EXPECT_EQ(select_weak(l, lm, a), brute_force(l, lm, a));
  }
}

TEST(SelectWeakTest, SelectionSizeIsMonotoneInLambda) {
  std::mt19937_64 rng(12);
  std::exponential_distribution<double> loss(1.0);
  std::vector<double> l(200);
  for (auto& v : l) v = loss(rng);
  std::size_t prev = 0;
  for (double lambda = 0.1; lambda < 10.0; lambda += 0.1) {
    const auto v = select_weak(l, lambda, 1.5);
    const auto n = static_cast<std::size_t>(std::count(v.begin(), v.end(), 1));
    EXPECT_GE(n, prev);
    prev = n;
  }
}

TEST(HydraConfigTest, Validation) {
  auto c = quick_config();
  EXPECT_NO_THROW(c.validate());
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = quick_config();
  c.lambda_schedule = {1.0, 1.0};
  EXPECT_THROW(c.validate(), ValidationError);
  c = quick_config();
  c.batch_half = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_EQ(default_lambda_schedule().size(), 30u);
  EXPECT_DOUBLE_EQ(default_lambda_schedule().back(), 3.0);
}

TEST(PredictTest, ZeroCleanHeadPicksClassZero) {
  const auto data = fixtures::toy_data({.clean = 2, .weak = 2}, 4);
  Network net(network_config(data, 2), 1);
  const auto& head = net.head(kCleanHead);
  std::fill(net.params()[head.weight].values.begin(), net.params()[head.weight].values.end(), 0.0);
  std::fill(net.params()[head.bias].values.begin(), net.params()[head.bias].values.end(), 0.0);
  for (const auto& ex : data.test) {
    const auto p = predict(net, ex.tokens);
    EXPECT_EQ(p.label, 0);
    EXPECT_DOUBLE_EQ(p.distribution[0], 0.5);
  }
}

TEST(PredictTest, WeakHeadDoesNotAffectPredictions) {
  const auto data = fixtures::toy_data({}, 5);
  Network net(network_config(data, 2), 2);
  std::vector<Prediction> before;
  for (const auto& ex : data.test) before.push_back(predict(net, ex.tokens));
  const auto& head = net.head(kWeakHead);
  for (auto& v : net.params()[head.weight].values) v = 100.0;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const auto p = predict(net, data.test[i].tokens);
    EXPECT_EQ(p.label, before[i].label);
    EXPECT_EQ(p.distribution, before[i].distribution);
  }
}

TEST(TrainSelfPacedTest, LearnsAndLogsStages) {
  const auto data = fixtures::toy_data({.clean = 20, .weak = 300, .weak_flip = 0.25}, 6);
  auto cfg = quick_config();
  cfg.stop_when_all_selected = false;
  const auto r = train_self_paced(data, data.weak, cfg);
  ASSERT_EQ(r.log.size(), 4u);
  EXPECT_EQ(r.log[0].stage, 0u);
  for (std::size_t k = 1; k < r.log.size(); ++k) {
    EXPECT_DOUBLE_EQ(r.log[k].lambda, cfg.lambda_schedule[k - 1]);
    EXPECT_LE(r.log[k].selected, data.weak.size());
  }
  EXPECT_GT(r.log.back().selected, 0u);
  EXPECT_EQ(r.final_selection.size(), data.weak.size());
  EXPECT_GE(accuracy(r.model, data.test, kCleanHead), 0.75);

  const auto again = train_self_paced(data, data.weak, cfg);
  EXPECT_EQ(again.dev_accuracy, r.dev_accuracy);
  EXPECT_EQ(again.model.params()[0].values, r.model.params()[0].values);
}

TEST(TrainSelfPacedTest, StopsOnceEverythingIsSelected) {
  const auto data = fixtures::toy_data({.clean = 10, .weak = 40}, 7);
  auto cfg = quick_config();
  cfg.lambda_schedule = {1e6, 2e6, 3e6};
  const auto r = train_self_paced(data, data.weak, cfg);
  ASSERT_EQ(r.log.size(), 2u);
  EXPECT_EQ(r.log[1].selected, data.weak.size());
}

TEST(TrainSelfPacedTest, EmptyCleanSetThrows) {
  auto data = fixtures::toy_data({.clean = 0, .weak = 10}, 8);
  EXPECT_THROW(train_self_paced(data, data.weak, quick_config()), InputError);
}

TEST(TrainSelfPacedTest, AlphaGridKeepsBestDev) {
  const auto data = fixtures::toy_data({.clean = 20, .weak = 100}, 9);
  const std::vector<double> alphas{0.1, 1.0};
  const auto r = train_with_alpha_grid(data, data.weak, quick_config(), alphas);
  double best = -1.0;
  for (double a : alphas) {
    auto c = quick_config();
    c.alpha = a;
    best = std::max(best, train_self_paced(data, data.weak, c).dev_accuracy);
  }
  EXPECT_DOUBLE_EQ(r.dev_accuracy, best);
  EXPECT_TRUE(r.alpha == 0.1 || r.alpha == 1.0);
}
