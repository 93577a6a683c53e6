#include "mailintent/hydra.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "mailintent/error.hpp"

namespace mailintent::hydra {

std::vector<double> default_lambda_schedule() {
  std::vector<double> s;
  for (int k = 1; k <= 30; ++k) s.push_back(k / 10.0);
  return s;
}

void HydraConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ValidationError("alpha must be positive");
  if (lambda_schedule.empty()) throw ValidationError("lambda schedule is empty");
  for (std::size_t i = 1; i < lambda_schedule.size(); ++i) {
    if (!(lambda_schedule[i] > lambda_schedule[i - 1])) {
      throw ValidationError("lambda schedule must be strictly increasing");
    }
  }
  if (batch_half == 0) throw ValidationError("batch half-size must be at least 1");
}

DualLoss dual_loss(Network& model, std::span<const PreparedExample* const> clean,
                   std::span<const PreparedExample* const> weak, double alpha, bool with_grad) {
  if (model.num_heads() < 2) throw ShapeError("dual loss needs a two-headed network");
  DualLoss out;
  if (!clean.empty()) {
    const double scale = 1.0 / static_cast<double>(clean.size());
    for (const auto* ex : clean) {
      if (ex->target.size() != model.num_classes()) throw ShapeError("clean target width mismatch");
      out.clean += with_grad ? model.accumulate(ex->tokens, kCleanHead, ex->target, scale)
                             : model.loss(ex->tokens, kCleanHead, ex->target);
    }
    out.clean *= scale;
  }
  if (!weak.empty() && alpha != 0.0) {
    const double scale = 1.0 / static_cast<double>(weak.size());
    for (const auto* ex : weak) {
      if (ex->target.size() != model.num_classes()) throw ShapeError("weak target width mismatch");
      out.weak += with_grad ? model.accumulate(ex->tokens, kWeakHead, ex->target, alpha * scale)
                            : model.loss(ex->tokens, kWeakHead, ex->target);
    }
    out.weak *= scale;
  }
  out.total = out.clean + alpha * out.weak;
  return out;
}

std::vector<std::uint8_t> select_weak(std::span<const double> losses, double lambda, double alpha) {
  std::vector<std::uint8_t> v(losses.size());
  for (std::size_t j = 0; j < losses.size(); ++j) v[j] = alpha * losses[j] < lambda ? 1 : 0;
  return v;
}

double selection_objective(std::span<const double> losses, std::span<const std::uint8_t> v, double lambda,
                           double alpha) {
  double s = 0.0;
  for (std::size_t j = 0; j < losses.size(); ++j) {
    if (v[j]) s += alpha * losses[j] - lambda;
  }
  return s;
}

std::vector<double> weak_losses(const Network& model, const PreparedSet& weak) {
  std::vector<double> out;
  out.reserve(weak.size());
  for (const auto& ex : weak) out.push_back(model.loss(ex.tokens, kWeakHead, ex.target));
  return out;
}

double self_paced_objective(const Network& model, const PreparedSet& clean, const PreparedSet& weak,
                            std::span<const std::uint8_t> v, double lambda, double alpha) {
  double c = 0.0;
  for (const auto& ex : clean) c += model.loss(ex.tokens, kCleanHead, ex.target);
  if (!clean.empty()) c /= static_cast<double>(clean.size());
  const auto losses = weak_losses(model, weak);
  const double w = weak.empty() ? 0.0 : selection_objective(losses, v, lambda, alpha) / static_cast<double>(weak.size());
  return c + w;
}

nlohmann::json to_json(const StageRecord& r) {
  nlohmann::json j{{"stage", r.stage}, {"selected", r.selected}, {"train_loss", r.train_loss}};
  j["lambda"] = std::isnan(r.lambda) ? nlohmann::json(nullptr) : nlohmann::json(r.lambda);
  j["dev_accuracy"] = std::isnan(r.dev_accuracy) ? nlohmann::json(nullptr) : nlohmann::json(r.dev_accuracy);
  return j;
}

namespace {

class Loop {
 public:
  Loop(const PreparedData& data, const PreparedSet& weak, const HydraConfig& config)
      : data_(data),
        weak_(weak),
        config_(config),
        model_(network_config(data, 2), config.seed),
        optimizer_(model_.params(), config.optimizer),
        rng_(config.seed),
        result_{model_, std::numeric_limits<double>::quiet_NaN(), config.alpha, {}, {}, {}} {}

  HydraResult run() {
    StageRecord warm;
    for (std::size_t e = 0; e < config_.warmup_epochs; ++e) {
      warm.train_loss = clean_epoch(config_.warmup_both_heads);
      warm.dev_accuracy = std::max(std::isnan(warm.dev_accuracy) ? -1.0 : warm.dev_accuracy, evaluate());
    }
    result_.log.push_back(warm);

    std::size_t stale = 0;
    std::vector<std::uint8_t> v;
    for (std::size_t s = 0; s < config_.lambda_schedule.size(); ++s) {
      const double lambda = config_.lambda_schedule[s];
      v = select_weak(weak_losses(model_, weak_), lambda, config_.alpha);
      std::vector<std::size_t> selected;
      for (std::size_t j = 0; j < v.size(); ++j) {
        if (v[j]) selected.push_back(j);
      }
      const double before = best_;
      StageRecord rec;
      rec.stage = s + 1;
      rec.lambda = lambda;
      rec.selected = selected.size();
      for (std::size_t e = 0; e < config_.epochs_per_stage; ++e) {
        rec.train_loss = selected.empty() ? clean_epoch() : joint_epoch(selected);
        const double acc = evaluate();
        rec.dev_accuracy = std::isnan(rec.dev_accuracy) ? acc : std::max(rec.dev_accuracy, acc);
      }
      result_.log.push_back(rec);
      if (config_.stop_when_all_selected && !weak_.empty() && selected.size() == weak_.size()) break;
      if (config_.patience > 0 && !data_.dev.empty()) {
        stale = best_ > before ? 0 : stale + 1;
        if (stale >= config_.patience) break;
      }
    }
    if (!weak_.empty() && std::none_of(v.begin(), v.end(), [](std::uint8_t x) { return x != 0; })) {
      result_.warnings.push_back("no weak example selected at the final lambda; training was clean-only");
    }
    result_.final_selection = std::move(v);
    if (data_.dev.empty()) result_.model = model_;
    return std::move(result_);
  }

 private:
  double evaluate() {
    if (data_.dev.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double acc = accuracy(model_, data_.dev, kCleanHead);
    if (acc > best_) {
      best_ = acc;
      result_.model = model_;
      result_.dev_accuracy = acc;
    }
    return acc;
  }

  // With both_heads set, clean batches also stand in for the weak stream so
  // the weak head starts the first selection from a fitted state.
  double clean_epoch(bool both_heads = false) {
    std::vector<std::size_t> order(data_.clean.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    const std::size_t m = config_.batch_half;
    double total = 0.0;
    std::size_t batches = 0;
    std::vector<const PreparedExample*> batch;
    for (std::size_t start = 0; start < order.size(); start += m) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + m); ++k) batch.push_back(&data_.clean[order[k]]);
      total += dual_loss(model_, batch, both_heads ? std::span<const PreparedExample* const>(batch)
                                                   : std::span<const PreparedExample* const>(),
                         config_.alpha, true)
                   .total;
      optimizer_.step(model_.params());
      ++batches;
    }
    return batches ? total / static_cast<double>(batches) : 0.0;
  }

  double joint_epoch(std::vector<std::size_t>& selected) {
    std::shuffle(selected.begin(), selected.end(), rng_);
    std::uniform_int_distribution<std::size_t> pick(0, data_.clean.size() - 1);
    const std::size_t m = config_.batch_half;
    double total = 0.0;
    std::size_t batches = 0;
    std::vector<const PreparedExample*> clean, weak;
    for (std::size_t start = 0; start < selected.size(); start += m) {
      weak.clear();
      clean.clear();
      for (std::size_t k = start; k < std::min(selected.size(), start + m); ++k) weak.push_back(&weak_[selected[k]]);
      for (std::size_t k = 0; k < m; ++k) clean.push_back(&data_.clean[pick(rng_)]);
      total += dual_loss(model_, clean, weak, config_.alpha, true).total;
      optimizer_.step(model_.params());
      ++batches;
    }
    return batches ? total / static_cast<double>(batches) : 0.0;
  }

  const PreparedData& data_;
  const PreparedSet& weak_;
  const HydraConfig& config_;
  Network model_;
  diffkit::Adadelta optimizer_;
  std::mt19937_64 rng_;
  HydraResult result_;
  double best_ = -1.0;
};

}  // namespace

HydraResult train_self_paced(const PreparedData& data, const PreparedSet& weak, const HydraConfig& config) {
  config.validate();
  if (data.clean.empty()) throw InputError("self-paced training needs a non-empty clean set");
  return Loop(data, weak, config).run();
}

HydraResult train_with_alpha_grid(const PreparedData& data, const PreparedSet& weak, HydraConfig config,
                                  std::span<const double> alphas) {
  if (alphas.empty()) throw ValidationError("alpha grid is empty");
  std::optional<HydraResult> best;
  for (double a : alphas) {
    config.alpha = a;
    auto r = train_self_paced(data, weak, config);
    if (!best || r.dev_accuracy > best->dev_accuracy) best = std::move(r);
  }
  return std::move(*best);
}

Prediction predict(const Network& model, const encoder::TokenSequence& seq) {
  Prediction p;
  p.distribution = model.predict_proba(seq, kCleanHead);
  p.label = argmax(p.distribution);
  return p;
}

}  // namespace mailintent::hydra
