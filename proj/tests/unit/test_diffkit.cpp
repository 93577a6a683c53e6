#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mailintent/diffkit.hpp"
#include "mailintent/error.hpp"

using namespace mailintent;
using namespace mailintent::diffkit;

TEST(LossTest, OneHotMatchIsZero) {
  const std::vector<double> p{0.0, 1.0, 0.0};
  EXPECT_DOUBLE_EQ(cross_entropy(p, p).loss, 0.0);
}

TEST(LossTest, UniformOverTwoIsLn2) {
  const std::vector<double> p{0.5, 0.5}, t{1.0, 0.0};
  const auto r = cross_entropy(p, t);
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-12);
  EXPECT_NEAR(r.d_logits[0], -0.5, 1e-12);
  EXPECT_NEAR(r.d_logits[1], 0.5, 1e-12);
}

TEST(LossTest, RejectsUnnormalizedInputs) {
  const std::vector<double> p{0.4, 0.4}, t{1.0, 0.0};
  EXPECT_THROW(cross_entropy(p, t), ValidationError);
  EXPECT_THROW(cross_entropy(t, p), ValidationError);
}

TEST(LossTest, LogitFormStaysFiniteForLargeLogits) {
  const std::vector<double> z{1000.0, -1000.0}, t{0.0, 1.0};
  const auto r = cross_entropy_logits(z, t);
  EXPECT_NEAR(r.loss, 2000.0, 1e-9);
  EXPECT_TRUE(std::isfinite(r.d_logits[0]));
}

namespace {

double central_difference(const std::function<double(std::vector<double>&)>& f, std::vector<double> x,
                          std::size_t i, double h = 1e-6) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2 * h);
}

}  // namespace

TEST(LossTest, LogitGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> z(4), t(4), c(16);
    for (auto& v : z) v = n(rng);
    double s = 0;
    for (auto& v : t) s += v = std::abs(n(rng));
    for (auto& v : t) v /= s;
    for (int r = 0; r < 4; ++r) {
      double rs = 0;
      for (int k = 0; k < 4; ++k) rs += c[r * 4 + k] = 0.05 + std::abs(n(rng));
      for (int k = 0; k < 4; ++k) c[r * 4 + k] /= rs;
    }
    const auto plain = cross_entropy_logits(z, t);
    const auto corrected = corrected_cross_entropy(z, t, c);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(plain.d_logits[i],
                  central_difference([&](std::vector<double>& x) { return cross_entropy_logits(x, t).loss; }, z, i),
                  1e-6);
      EXPECT_NEAR(corrected.d_logits[i],
                  central_difference([&](std::vector<double>& x) { return corrected_cross_entropy(x, t, c).loss; },
                                     z, i),
                  1e-6);
    }
  }
}

TEST(LossTest, CorrectedLossHandValue) {
  const std::vector<double> z{0.3, -0.2}, t{0.25, 0.75}, c{0.7, 0.3, 0.2, 0.8};
  const double e0 = std::exp(0.3), e1 = std::exp(-0.2);
  const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
  const double q0 = 0.7 * p0 + 0.2 * p1, q1 = 0.3 * p0 + 0.8 * p1;
  EXPECT_NEAR(corrected_cross_entropy(z, t, c).loss, -(0.25 * std::log(q0) + 0.75 * std::log(q1)), 1e-12);
}

TEST(LossTest, IdentityCorruptionEqualsPlainLoss) {
  const std::vector<double> z{1.1, -0.4, 0.2}, t{0.0, 0.0, 1.0}, id{1, 0, 0, 0, 1, 0, 0, 0, 1};
  EXPECT_NEAR(corrected_cross_entropy(z, t, id).loss, cross_entropy_logits(z, t).loss, 1e-12);
}

// ---------------------------------------------------------------------------
// Optimizers

TEST(AdadeltaTest, HandRecurrence) {
  ParamStore store;
  store.add("w", {1});
  store[0].values[0] = 0.5;
  Adadelta opt(store, {.rho = 0.95, .epsilon = 1e-6, .learning_rate = 1.0});
  double eg = 0, ex = 0, x = 0.5;
  for (int step = 0; step < 3; ++step) {
    store[0].grad[0] = 1.0;
    opt.step(store);
    eg = 0.95 * eg + 0.05 * 1.0;
    const double dx = -std::sqrt(ex + 1e-6) / std::sqrt(eg + 1e-6) * 1.0;
    ex = 0.95 * ex + 0.05 * dx * dx;
    x += dx;
    EXPECT_NEAR(store[0].values[0], x, 1e-15) << "step " << step;
    EXPECT_NEAR(opt.squared_grad(0)[0], eg, 1e-15);
    EXPECT_NEAR(opt.squared_update(0)[0], ex, 1e-15);
    EXPECT_EQ(store[0].grad[0], 0.0);
  }
  EXPECT_NEAR(0.5 - store[0].values[0], 0.004472091 + 0.004529062 + 0.004567599, 1e-8);
}

TEST(AdadeltaTest, ZeroGradientLeavesParameters) {
  ParamStore store;
  store.add("w", {3, 2});
  store[0].values = {1, 2, 3, 4, 5, 6};
  Adadelta opt(store);
  opt.step(store);
  EXPECT_EQ(store[0].values, (std::vector<double>{1, 2, 3, 4, 5, 6}));
}

TEST(AdadeltaTest, IdenticalGroupsGetIdenticalUpdates) {
  ParamStore store;
  store.add("a", {4});
  store.add("b", {4});
  store[0].values = store[1].values = {0.1, -0.2, 0.3, 0.0};
  Adadelta opt(store);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  for (int s = 0; s < 10; ++s) {
    for (std::size_t i = 0; i < 4; ++i) store[0].grad[i] = store[1].grad[i] = n(rng);
    opt.step(store);
  }
  EXPECT_EQ(store[0].values, store[1].values);
}

TEST(AdadeltaTest, LazySparseRowsMatchDenseUpdates) {
  ParamStore sparse, dense;
  sparse.add("emb", {5, 3}, true);
  dense.add("emb", {5, 3}, false);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n;
  for (auto& v : sparse[0].values) v = n(rng);
  dense[0].values = sparse[0].values;
  Adadelta a(sparse), b(dense);
  std::uniform_int_distribution<int> row(0, 4);
  for (int step = 0; step < 40; ++step) {
    for (int k = 0; k < 2; ++k) {
      const auto r = static_cast<std::size_t>(row(rng));
      auto gs = sparse[0].grad_row(r);
      auto gd = dense[0].grad_row(r);
      for (std::size_t j = 0; j < 3; ++j) {
        const double g = n(rng);
        gs[j] += g;
        gd[j] += g;
      }
    }
    a.step(sparse);
    b.step(dense);
  }
  // Rows untouched since their last update still carry undecayed state in
  // the sparse optimizer; the parameter values agree exactly.
  for (std::size_t i = 0; i < 15; ++i) EXPECT_NEAR(sparse[0].values[i], dense[0].values[i], 1e-12);
}

TEST(SgdTest, StepsAgainstGradient) {
  ParamStore store;
  store.add("w", {2});
  store[0].values = {1.0, 1.0};
  store[0].grad = {2.0, -4.0};
  sgd_step(store, 0.25);
  EXPECT_EQ(store[0].values, (std::vector<double>{0.5, 2.0}));
  EXPECT_EQ(store[0].grad, (std::vector<double>{0.0, 0.0}));
}

// ---------------------------------------------------------------------------
// Gradient check and checkpoints

TEST(GradCheckTest, LinearSoftmaxModel) {
  ParamStore store;
  const auto w = store.add("w", {3, 4});
  const auto b = store.add("b", {3});
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (auto& t : store)
    for (auto& v : t.values) v = n(rng);
  const std::vector<double> x{0.5, -1.0, 2.0, 0.1}, target{0.2, 0.0, 0.8};
  auto loss = [&](ParamStore& p, bool with_grad) {
    std::vector<double> z(3);
    for (std::size_t r = 0; r < 3; ++r) {
      z[r] = p[b].values[r];
      for (std::size_t c = 0; c < 4; ++c) z[r] += p[w].values[r * 4 + c] * x[c];
    }
    const auto lg = cross_entropy_logits(z, target);
    if (with_grad) {
      for (std::size_t r = 0; r < 3; ++r) {
        p[b].grad[r] += lg.d_logits[r];
        for (std::size_t c = 0; c < 4; ++c) p[w].grad[r * 4 + c] += lg.d_logits[r] * x[c];
      }
    }
    return lg.loss;
  };
  const auto report = grad_check(loss, store);
  EXPECT_EQ(report.checked, 15u);
  EXPECT_LT(report.max_relative_error, 1e-6);
}

TEST(GradCheckTest, DetectsAWrongGradient) {
  ParamStore store;
  store.add("w", {1});
  store[0].values[0] = 1.5;
  auto loss = [](ParamStore& p, bool with_grad) {
    const double v = p[0].values[0];
    if (with_grad) p[0].grad[0] += 3 * v;  // true derivative is 2v
    return v * v;
  };
  const auto report = grad_check(loss, store);
  EXPECT_FALSE(report.passed(1e-4));
  EXPECT_EQ(report.worst_tensor, "w");
}

TEST(CheckpointTest, SaveLoadAndVersionCheck) {
  ParamStore store;
  store.add("encoder.embedding", {3, 2}, true);
  store.add("head.bias", {2});
  store[0].values = {1, 2, 3, 4, 5, 6.25};
  store[1].values = {-0.5, 1e-300};
  std::stringstream buf;
  save_checkpoint(buf, store);
  const auto back = load_checkpoint(buf);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "encoder.embedding");
  EXPECT_EQ(back[0].shape, (std::vector<std::size_t>{3, 2}));
  EXPECT_EQ(back[0].values, store[0].values);
  EXPECT_EQ(back[1].values, store[1].values);

  std::string bytes;
  {
    std::stringstream again;
    save_checkpoint(again, store);
    bytes = again.str();
  }
  bytes[4] = 9;
  std::stringstream bad(bytes);
  EXPECT_THROW(load_checkpoint(bad), Error);
}
