#include "mailintent/baselines.hpp"

#include <algorithm>
#include <cctype>

#include "mailintent/error.hpp"

namespace mailintent::baselines {

std::string_view baseline_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::Clean: return "clean";
    case BaselineKind::Weak: return "weak";
    case BaselineKind::CleanPlusWeak: return "clean+weak";
    case BaselineKind::PreWeak: return "preweak";
    case BaselineKind::IWT: return "iwt";
    case BaselineKind::GLC: return "glc";
  }
  return "?";
}

Method Method::parse(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "hydra") return hydra();
  if (lower == "clean_plus_weak" || lower == "cleanplusweak") return of(BaselineKind::CleanPlusWeak);
  for (auto k : kAllBaselines) {
    if (lower == baseline_name(k)) return of(k);
  }
  throw ValidationError("unknown method '" + std::string(text) + "'");
}

std::vector<Method> Method::all() {
  std::vector<Method> out;
  for (auto k : kAllBaselines) out.push_back(of(k));
  out.push_back(hydra());
  return out;
}

std::string Method::name() const { return kind_ ? std::string(baseline_name(*kind_)) : "hydra"; }

nlohmann::json to_json(const RunMetrics& m) {
  nlohmann::json j{{"method", m.method},          {"encoder", m.encoder},
                   {"clean_ratio", m.clean_ratio}, {"seed", m.seed},
                   {"dev_acc", m.dev_accuracy},    {"test_acc", m.test_accuracy}};
  if (m.alpha) j["alpha"] = *m.alpha;
  if (m.corruption) j["corruption"] = glc::to_json(*m.corruption);
  return j;
}

std::vector<double> saturated_schedule(std::size_t stages) {
  std::vector<double> s;
  for (std::size_t k = 0; k < stages; ++k) s.push_back(1e12 + static_cast<double>(k));
  return s;
}

namespace {

constexpr std::uint64_t kPretrainStream = 0x5bd1e995ULL;

double ratio(const PreparedData& data) {
  const double n = static_cast<double>(data.clean.size());
  const double total = n + static_cast<double>(data.weak.size());
  return total == 0.0 ? 0.0 : n / total;
}

TrainConfig seeded(TrainConfig c, std::uint64_t seed) {
  c.seed = seed;
  return c;
}

void require(bool ok, const char* what) {
  if (!ok) throw InputError(what);
}

RunResult finish(Network model, double dev, const PreparedData& data, std::string method, std::uint64_t seed) {
  RunResult r{std::move(model), {}, {}, {}};
  r.metrics.method = std::move(method);
  r.metrics.encoder = std::string(encoder::encoder_kind_name(data.encoder.kind));
  r.metrics.clean_ratio = ratio(data);
  r.metrics.seed = seed;
  r.metrics.dev_accuracy = std::isnan(dev) ? accuracy(r.model, data.dev) : dev;
  r.metrics.test_accuracy = accuracy(r.model, data.test);
  return r;
}

RunResult train_hydra(const PreparedData& data, const MethodConfig& config, std::uint64_t seed) {
  require(!data.clean.empty(), "hydra needs a non-empty clean set");
  std::vector<std::string> warnings;
  std::optional<glc::CorruptionMatrix> corruption;
  PreparedSet targets;
  if (config.hydra_label_correction && !data.weak.empty()) {
    glc::GlcConfig gc{seeded(config.train, seed), seeded(config.train, seed), config.hard_labels};
    auto g = glc::run_glc(data, gc);
    warnings = std::move(g.warnings);
    corruption = g.corruption;
    targets = std::move(g.corrected_weak);
  } else {
    targets = data.weak;
  }
  hydra::HydraConfig hc = config.hydra;
  hc.seed = seed;
  if (!config.hydra_self_paced) {
    hc.lambda_schedule = saturated_schedule(hc.lambda_schedule.size());
    hc.stop_when_all_selected = false;
  }
  auto h = config.alpha_grid.empty() ? hydra::train_self_paced(data, targets, hc)
                                     : hydra::train_with_alpha_grid(data, targets, hc, config.alpha_grid);
  auto r = finish(std::move(h.model), h.dev_accuracy, data, "hydra", seed);
  r.metrics.alpha = h.alpha;
  r.metrics.corruption = corruption;
  r.stages = std::move(h.log);
  warnings.insert(warnings.end(), h.warnings.begin(), h.warnings.end());
  r.warnings = std::move(warnings);
  return r;
}

}  // namespace

RunResult train_baseline(BaselineKind kind, const PreparedData& data, const MethodConfig& config,
                         std::uint64_t seed) {
  const auto train = seeded(config.train, seed);
  const auto name = std::string(baseline_name(kind));
  auto fresh = [&] { return Network(network_config(data), seed); };
  auto run = [&](std::span<const TrainingSource> sources) {
    auto t = train_supervised(fresh(), sources, data.dev, train);
    return finish(std::move(t.model), t.dev_accuracy, data, name, seed);
  };
  switch (kind) {
    case BaselineKind::Clean: {
      require(!data.clean.empty(), "clean baseline needs a non-empty clean set");
      const TrainingSource s[] = {{&data.clean, 0, 1.0, {}}};
      return run(s);
    }
    case BaselineKind::Weak: {
      require(!data.weak.empty(), "weak baseline needs a non-empty weak set");
      const TrainingSource s[] = {{&data.weak, 0, 1.0, {}}};
      return run(s);
    }
    case BaselineKind::CleanPlusWeak: {
      require(!data.clean.empty() || !data.weak.empty(), "clean+weak needs training data");
      const TrainingSource s[] = {{&data.clean, 0, 1.0, {}}, {&data.weak, 0, 1.0, {}}};
      return run(s);
    }
    case BaselineKind::IWT: {
      require(!data.clean.empty() || !data.weak.empty(), "iwt needs training data");
      const auto& w = config.iwt;
      if (w.clean_weight < 0.0 || w.weak_weight < 0.0) throw ValidationError("iwt weights must be non-negative");
      const TrainingSource s[] = {{&data.clean, 0, w.clean_weight, {}},
                                  {&data.weak, 0, w.alpha * w.weak_weight, {}}};
      auto r = run(s);
      r.metrics.alpha = w.alpha;
      return r;
    }
    case BaselineKind::PreWeak: {
      require(!data.clean.empty(), "preweak needs a non-empty clean set");
      auto pre = train;
      pre.epochs = config.pretrain_epochs.value_or(train.epochs);
      pre.seed = seed ^ kPretrainStream;
      Network start = fresh();
      if (pre.epochs > 0) {
        require(!data.weak.empty(), "preweak needs a non-empty weak set");
        const TrainingSource w[] = {{&data.weak, 0, 1.0, {}}};
        start = train_supervised(std::move(start), w, data.dev, pre).model;
      }
      const TrainingSource s[] = {{&data.clean, 0, 1.0, {}}};
      auto t = train_supervised(std::move(start), s, data.dev, train);
      return finish(std::move(t.model), t.dev_accuracy, data, name, seed);
    }
    case BaselineKind::GLC: {
      require(!data.clean.empty(), "glc needs a non-empty clean set");
      glc::GlcConfig gc{train, train, config.hard_labels};
      auto g = glc::run_glc(data, gc);
      auto r = finish(std::move(g.corrected_model.model), g.corrected_model.dev_accuracy, data, name, seed);
      r.metrics.corruption = g.corruption;
      r.warnings = std::move(g.warnings);
      return r;
    }
  }
  throw ValidationError("unknown baseline kind");
}

RunResult train_method(const Method& method, const PreparedData& data, const MethodConfig& config,
                       std::uint64_t seed) {
  return method.is_hydra() ? train_hydra(data, config, seed) : train_baseline(method.kind(), data, config, seed);
}

RepeatedMetrics run_repeated(const Method& method, const PreparedData& data, const MethodConfig& config,
                             std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw ValidationError("run_repeated needs at least one seed");
  RepeatedMetrics out;
  for (auto s : seeds) out.runs.push_back(train_method(method, data, config, s).metrics);
  for (const auto& r : out.runs) {
    out.mean_dev_accuracy += r.dev_accuracy;
    out.mean_test_accuracy += r.test_accuracy;
  }
  out.mean_dev_accuracy /= static_cast<double>(out.runs.size());
  out.mean_test_accuracy /= static_cast<double>(out.runs.size());
  return out;
}

}  // namespace mailintent::baselines
