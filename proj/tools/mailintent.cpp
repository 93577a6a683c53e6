// mailintent: corpus generation, weak labeling, dataset construction,
// training, sweeps, transfer runs and reports.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mailintent/baselines.hpp"
#include "mailintent/corpus.hpp"
#include "mailintent/dataset_io.hpp"
#include "mailintent/error.hpp"
#include "mailintent/experiment.hpp"
#include "mailintent/report.hpp"
#include "mailintent/synthetic.hpp"
#include "mailintent/weaklabel.hpp"

namespace mi = mailintent;
namespace ex = mailintent::experiment;
namespace fs = std::filesystem;

namespace {

constexpr int kExitCellsFailed = 1;
constexpr int kExitError = 2;

/// Spec-building options shared by every subcommand. Precedence, lowest
/// first: preset, config file, --set, then the per-key flags.
struct SpecOptions {
  std::string preset = "default";
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;

  void attach(CLI::App* app) {
    app->add_option("--preset", preset, "starting point: default, benchmark or transfer-benchmark")
        ->check(CLI::IsMember({"default", "benchmark", "transfer-benchmark"}));
    app->add_option("-c,--config", config_file, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "KEY=VALUE override, repeatable");
    for (const auto& [key, help] : ex::config_keys()) {
      app->add_option("--" + key, flags[key], help)->group("Experiment keys");
    }
  }

  ex::ConfigMap collect(CLI::App* app) const {
    ex::ExperimentSpec base;
    if (preset == "benchmark") base = ex::benchmark_spec();
    if (preset == "transfer-benchmark") base = ex::transfer_benchmark_spec();
    auto config = ex::to_config(base);
    if (!config_file.empty()) config = ex::merge(config, ex::load_config(config_file));
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw mi::ValidationError("--set expects KEY=VALUE, got '" + kv + "'");
      config[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    for (const auto& [key, value] : flags) {
      if (app->count("--" + key) > 0) config[key] = value;
    }
    return config;
  }

  ex::ExperimentSpec spec(CLI::App* app) const { return ex::spec_from_config(collect(app)); }
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw mi::InputError("cannot write " + path.string());
  return out;
}

mi::Corpus corpus_of(const ex::ExperimentSpec& spec) {
  if (!spec.corpus) throw mi::ValidationError("corpus.messages is required");
  return mi::load_corpus(*spec.corpus);
}

std::vector<mi::Intent> intents_for(const std::string& which, mi::Intent fallback) {
  if (which.empty()) return {fallback};
  if (which == "all") {
    return {mi::Intent::RequestInformation, mi::Intent::ScheduleMeeting, mi::Intent::PromiseAction};
  }
  return {mi::parse_intent(which)};
}

void print_record(const mi::report::Record& r, std::size_t done, std::size_t total) {
  char line[256];
  if (r.ok) {
    std::snprintf(line, sizeof line, "[%zu/%zu] %-10s %s seed %llu ratio %.4g weak %zu: test %.4f dev %.4f", done,
                  total, r.method.c_str(), r.variant.c_str(), static_cast<unsigned long long>(r.seed), r.clean_ratio,
                  r.weak_count, r.test_accuracy, r.dev_accuracy);
  } else {
    std::snprintf(line, sizeof line, "[%zu/%zu] %-10s %s seed %llu ratio %.4g: FAILED %s", done, total,
                  r.method.c_str(), r.variant.c_str(), static_cast<unsigned long long>(r.seed), r.clean_ratio,
                  r.error.c_str());
  }
  std::cerr << line << '\n';
}

ex::RunOptions run_options(const fs::path& out, std::size_t total, const std::string& config_file) {
  ex::RunOptions opts;
  opts.out_dir = out;
  if (!config_file.empty()) opts.extra_inputs.push_back(config_file);
  auto done = std::make_shared<std::size_t>(0);
  opts.on_record = [done, total](const mi::report::Record& r) { print_record(r, ++*done, total); };
  return opts;
}

ex::ExperimentSpec replayed_or(const std::string& manifest, const SpecOptions& opts, CLI::App* app) {
  if (manifest.empty()) return opts.spec(app);
  std::ifstream in(manifest);
  if (!in) throw mi::InputError("cannot read " + manifest);
  nlohmann::json j;
  in >> j;
  return ex::spec_from_manifest(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised email intent detection"};
  bool list_keys = false;
  app.add_flag("--list-keys", list_keys, "print every config key and exit");
  app.require_subcommand(0, 1);

  // generate
  auto* gen = app.add_subcommand("generate", "write a synthetic corpus");
  SpecOptions gen_opts;
  gen_opts.attach(gen);
  std::string gen_out;
  std::uint64_t gen_seed = 1;
  std::string gen_domain;
  gen->add_option("-o,--out", gen_out, "output directory")->required();
  gen->add_option("--seed", gen_seed, "corpus seed");
  gen->add_option("--domain", gen_domain, "domain name; defaults to synthetic.domain");

  // weak-label
  auto* wl = app.add_subcommand("weak-label", "apply the interaction labeling functions");
  SpecOptions wl_opts;
  wl_opts.attach(wl);
  std::string wl_out, wl_intents;
  wl->add_option("-o,--out", wl_out, "weak labels JSONL")->required();
  wl->add_option("--intents", wl_intents, "RI, SM, PA or all; defaults to the intent key");

  // audit-labels
  auto* audit = app.add_subcommand("audit-labels", "measure weak-label quality against gold labels");
  SpecOptions audit_opts;
  audit_opts.attach(audit);
  std::string audit_labels, audit_truth, audit_intents;
  std::size_t audit_per_class = 0;
  std::uint64_t audit_seed = 1;
  audit->add_option("--labels", audit_labels, "weak labels JSONL; computed from the corpus when omitted");
  audit->add_option("--truth", audit_truth, "gold JSONL to audit against; defaults to corpus.gold");
  audit->add_option("--per-class", audit_per_class, "balanced sample size per class; 0 audits everything");
  audit->add_option("--sample-seed", audit_seed, "seed of the balanced sample");
  audit->add_option("--intents", audit_intents, "RI, SM, PA or all; defaults to the intent key");

  // build-dataset
  auto* build = app.add_subcommand("build-dataset", "carve clean, weak, dev and test splits");
  SpecOptions build_opts;
  build_opts.attach(build);
  std::string build_out, build_labels, build_truth;
  std::uint64_t build_seed = 1;
  build->add_option("-o,--out", build_out, "dataset directory")->required();
  build->add_option("--labels", build_labels, "weak labels JSONL; computed from the corpus when omitted");
  build->add_option("--truth", build_truth, "gold JSONL for weak-example truth (evaluation only)");
  build->add_option("--seed", build_seed, "split seed");

  // train
  auto* train = app.add_subcommand("train", "train one method with one seed");
  SpecOptions train_opts;
  train_opts.attach(train);
  std::string train_out, train_method = "hydra";
  std::uint64_t train_seed = 1;
  train->add_option("-o,--out", train_out, "output directory")->required();
  train->add_option("--method", train_method, "method name");
  train->add_option("--seed", train_seed, "seed");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run every (seed, clean ratio, weak fraction, method) cell");
  SpecOptions sweep_opts;
  sweep_opts.attach(sweep);
  std::string sweep_out, sweep_manifest;
  sweep->add_option("-o,--out", sweep_out, "output directory")->required();
  sweep->add_option("--replay", sweep_manifest, "rerun the spec stored in a manifest")->check(CLI::ExistingFile);

  // transfer
  auto* transfer = app.add_subcommand("transfer", "target clean plus source weak data, with controls");
  SpecOptions transfer_opts;
  transfer_opts.attach(transfer);
  std::string transfer_out, transfer_manifest;
  transfer->add_option("-o,--out", transfer_out, "output directory")->required();
  transfer->add_option("--replay", transfer_manifest, "rerun the spec stored in a manifest")->check(CLI::ExistingFile);

  // report
  auto* rep = app.add_subcommand("report", "aggregate per-seed records into table, summary and series");
  std::vector<std::string> rep_records;
  std::string rep_out;
  rep->add_option("records", rep_records, "records JSONL files")->required()->check(CLI::ExistingFile);
  rep->add_option("-o,--out", rep_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (list_keys) {
      for (const auto& [key, help] : ex::config_keys()) std::cout << key << "\t" << help << '\n';
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return kExitError;
    }

    if (*gen) {
      const auto spec = gen_opts.spec(gen);
      const auto syn_spec =
          ex::synthetic_for_seed(spec, gen_seed, gen_domain.empty() ? spec.synthetic.domain : gen_domain);
      const auto syn = mi::synthetic::generate_synthetic(syn_spec);
      const auto paths = mi::save_corpus(syn.corpus, gen_out);
      auto truth = open_out(fs::path(gen_out) / "truth.jsonl");
      mi::write_gold(truth, syn.truth);
      std::cout << "wrote " << syn.corpus.size() << " messages, " << syn.corpus.calendar().size()
                << " calendar entries, " << syn.corpus.threads().size() << " threads to " << gen_out << '\n';
      std::cout << "messages " << paths.messages.string() << '\n';
      return 0;
    }

    if (*wl) {
      const auto spec = wl_opts.spec(wl);
      const auto corpus = corpus_of(spec);
      std::vector<mi::weaklabel::WeakLabelAssignment> all;
      for (auto intent : intents_for(wl_intents, spec.intent)) {
        auto labels = mi::weaklabel::label_intent(corpus, intent);
        std::size_t pos = 0;
        for (const auto& a : labels) pos += a.positive ? 1 : 0;
        std::cout << mi::intent_code(intent) << ": " << pos << " positive of " << labels.size() << '\n';
        all.insert(all.end(), labels.begin(), labels.end());
      }
      auto out = open_out(wl_out);
      mi::weaklabel::write_weak_labels(out, all);
      return 0;
    }

    if (*audit) {
      const auto spec = audit_opts.spec(audit);
      const auto corpus = corpus_of(spec);
      mi::GoldMap gold;
      if (!audit_truth.empty()) {
        std::ifstream in(audit_truth);
        if (!in) throw mi::InputError("cannot read " + audit_truth);
        gold = mi::read_gold(in);
      } else if (corpus.gold()) {
        gold = *corpus.gold();
      } else {
        throw mi::ValidationError("no gold labels: pass --truth or corpus.gold");
      }
      std::vector<mi::weaklabel::WeakLabelAssignment> given;
      if (!audit_labels.empty()) {
        std::ifstream in(audit_labels);
        if (!in) throw mi::InputError("cannot read " + audit_labels);
        given = mi::weaklabel::read_weak_labels(in);
      }
      nlohmann::json out = nlohmann::json::array();
      for (auto intent : intents_for(audit_intents, spec.intent)) {
        std::vector<mi::weaklabel::WeakLabelAssignment> labels;
        if (audit_labels.empty()) {
          labels = mi::weaklabel::label_intent(corpus, intent);
        } else {
          for (const auto& a : given) {
            if (a.intent == intent) labels.push_back(a);
          }
        }
        // Only messages the gold file covers can be audited.
        std::erase_if(labels, [&](const auto& a) { return !gold.count({a.message_id, intent}); });
        if (audit_per_class > 0) labels = mi::weaklabel::sample_balanced(labels, audit_per_class, audit_seed);
        out.push_back(mi::weaklabel::to_json(mi::weaklabel::evaluate_labeling(labels, gold)));
      }
      std::cout << out.dump(2) << '\n';
      return 0;
    }

    if (*build) {
      const auto spec = build_opts.spec(build);
      mi::Dataset ds;
      nlohmann::json meta{{"intent", mi::intent_code(spec.intent)}, {"seed", build_seed}};
      if (!spec.corpus) {
        ds = ex::make_dataset(spec, spec.clean_ratios.front(), spec.weak_fractions.front(), build_seed);
        meta["source"] = "synthetic";
      } else {
        const auto corpus = corpus_of(spec);
        mi::WeakLabelMap labels;
        if (build_labels.empty()) {
          labels = mi::weaklabel::to_label_map(mi::weaklabel::label_intent(corpus, spec.intent));
        } else {
          std::ifstream in(build_labels);
          if (!in) throw mi::InputError("cannot read " + build_labels);
          auto all = mi::weaklabel::read_weak_labels(in);
          std::erase_if(all, [&](const auto& a) { return a.intent != spec.intent; });
          labels = mi::weaklabel::to_label_map(all);
        }
        std::optional<mi::GoldMap> truth;
        if (!build_truth.empty()) {
          std::ifstream in(build_truth);
          if (!in) throw mi::InputError("cannot read " + build_truth);
          truth = mi::read_gold(in);
        }
        mi::DatasetOptions opt;
        opt.intent = spec.intent;
        opt.clean_ratio = spec.clean_ratios.front();
        opt.weak_size = ex::weak_counts(spec.weak_size, std::span(spec.weak_fractions).first(1))[0];
        if (spec.clean_ratios.front() >= 1.0) opt.clean_size = spec.clean_size;
        opt.dev_size = spec.dev_size;
        opt.test_size = spec.test_size;
        opt.seed = build_seed;
        opt.natural_eval_prevalence = spec.natural_eval_prevalence;
        ds = mi::build_dataset(corpus, labels, opt, truth ? &*truth : nullptr);
        meta["source"] = spec.corpus->messages.string();
      }
      mi::save_dataset(ds, build_out, meta);
      std::cout << "clean " << ds.clean.size() << " weak " << ds.weak.size() << " dev " << ds.dev.size() << " test "
                << ds.test.size() << " -> " << build_out << '\n';
      return 0;
    }

    if (*train) {
      auto spec = train_opts.spec(train);
      const auto method = mi::baselines::Method::parse(train_method);
      spec.methods = {method};
      spec.seeds = {train_seed};
      spec.validate();
      const double ratio = spec.clean_ratios.front();
      const auto ds = ex::make_dataset(spec, ratio, spec.weak_fractions.front(), train_seed);
      const auto data = mi::prepare_dataset(ds, spec.encoder);
      const auto result = mi::baselines::train_method(method, data, spec.method, train_seed);
      const fs::path out(train_out);
      fs::create_directories(out);
      mi::diffkit::save_checkpoint(out / "model.ckpt", result.model.params());
      {
        auto vocab_out = open_out(out / "vocab.txt");
        data.vocab.save(vocab_out);
      }
      nlohmann::json metrics = mi::baselines::to_json(result.metrics);
      metrics["warnings"] = result.warnings;
      metrics["stages"] = nlohmann::json::array();
      for (const auto& st : result.stages) metrics["stages"].push_back(mi::hydra::to_json(st));
      open_out(out / "metrics.json") << metrics.dump(2) << '\n';

      mi::report::Record rec;
      rec.method = method.name();
      rec.encoder = std::string(mi::encoder::encoder_kind_name(spec.encoder.kind));
      rec.intent = std::string(mi::intent_code(spec.intent));
      rec.clean_ratio = spec.dataset ? ds.clean_ratio() : ratio;
      rec.clean_count = data.clean.size();
      rec.weak_count = data.weak.size();
      rec.seed = train_seed;
      rec.dev_accuracy = result.metrics.dev_accuracy;
      rec.test_accuracy = result.metrics.test_accuracy;
      rec.alpha = result.metrics.alpha;
      const std::vector<mi::report::Record> records{rec};
      {
        auto rec_out = open_out(out / "records.jsonl");
        mi::report::write_records(rec_out, records);
      }
      std::vector<fs::path> extra;
      if (!train_opts.config_file.empty()) extra.push_back(train_opts.config_file);
      open_out(out / "manifest.json") << ex::make_manifest(spec, "train", extra).dump(2) << '\n';
      mi::report::emit_report(records, out);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
      print_record(rec, 1, 1);
      return 0;
    }

    if (*sweep) {
      const auto spec = replayed_or(sweep_manifest, sweep_opts, sweep);
      spec.validate();
      const auto result =
          ex::run_sweep(spec, run_options(sweep_out, ex::expand_cells(spec).size(), sweep_opts.config_file));
      std::cout << mi::report::format_summary(result.table);
      return result.ok() ? 0 : kExitCellsFailed;
    }

    if (*transfer) {
      const auto spec = replayed_or(transfer_manifest, transfer_opts, transfer);
      spec.validate();
      const auto result =
          ex::run_transfer(spec, run_options(transfer_out, spec.seeds.size() * 5, transfer_opts.config_file));
      std::cout << mi::report::format_summary(result.table);
      return result.ok() ? 0 : kExitCellsFailed;
    }

    if (*rep) {
      std::vector<mi::report::Record> records;
      for (const auto& path : rep_records) {
        std::ifstream in(path);
        auto part = mi::report::read_records(in);
        records.insert(records.end(), part.begin(), part.end());
      }
      mi::report::emit_report(records, rep_out);
      std::cout << mi::report::format_summary(mi::report::aggregate(records));
      bool all_ok = true;
      for (const auto& r : records) all_ok = all_ok && r.ok;
      return all_ok ? 0 : kExitCellsFailed;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
