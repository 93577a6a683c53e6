#pragma once

// Experiment configuration, the seeded sweep runner, domain transfer runs,
// and run manifests.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mailintent/baselines.hpp"
#include "mailintent/corpus.hpp"
#include "mailintent/report.hpp"
#include "mailintent/synthetic.hpp"

namespace mailintent::experiment {

// ---------------------------------------------------------------------------
// Key-value configuration

/// Ordered so that printing is canonical.
using ConfigMap = std::map<std::string, std::string>;

/// `key = value` lines; `#` starts a comment; blank lines are skipped.
/// Throws ParseError on a line without `=` or with an empty key.
ConfigMap parse_config(std::istream& in);
ConfigMap load_config(const std::filesystem::path& path);
/// One `key = value` line per entry, sorted by key.
std::string format_config(const ConfigMap& config);

/// Entries of `top` replace those of `base`.
ConfigMap merge(ConfigMap base, const ConfigMap& top);

// ---------------------------------------------------------------------------
// Experiment specification

struct ExperimentSpec {
  Intent intent = Intent::ScheduleMeeting;
  encoder::EncoderConfig encoder;
  std::vector<baselines::Method> methods = baselines::Method::all();
  std::vector<double> clean_ratios{0.1};
  std::vector<std::uint64_t> seeds{1};
  /// Shares of weak_size used per cell; 1.0 is the full pool.
  std::vector<double> weak_fractions{1.0};
  std::size_t weak_size = 1800;
  std::size_t dev_size = 300;
  std::size_t test_size = 1000;
  /// Clean count for a clean ratio of 1 (no weak data); unset takes the
  /// whole remaining gold pool.
  std::optional<std::size_t> clean_size;
  bool natural_eval_prevalence = false;

  /// A corpus on disk. When unset a synthetic corpus is generated per seed.
  std::optional<CorpusPaths> corpus;
  /// A dataset directory written by save_dataset; bypasses corpus, ratios
  /// and weak fractions.
  std::optional<std::filesystem::path> dataset;

  synthetic::SyntheticSpec synthetic;
  /// Solve the synthetic interaction noise for the published audit rates.
  bool calibrate = true;

  baselines::MethodConfig method;

  /// Transfer: the source (weak) domain. Synthetic runs use the domain name;
  /// corpus runs use the paths.
  std::string transfer_source_domain = "source";
  std::optional<CorpusPaths> transfer_source_corpus;
  std::size_t transfer_clean_size = 200;
  std::size_t transfer_tiny_clean_size = 20;

  std::size_t jobs = 1;

  /// Throws ValidationError on empty grids, ratios outside (0, 1], fractions
  /// outside [0, 1], or zero jobs.
  void validate() const;
};

/// Builds a spec from defaults plus `config`. Throws ValidationError on an
/// unknown key or an unparsable value.
ExperimentSpec spec_from_config(const ConfigMap& config);
/// Every key with its effective value; spec_from_config(to_config(s))
/// reproduces s.
ConfigMap to_config(const ExperimentSpec& spec);
/// Documented keys, in order, with a one-line description each.
std::vector<std::pair<std::string, std::string>> config_keys();

/// The calibrated synthetic benchmark: intent SM, AvgEmb with 32-dimensional
/// embeddings, topic-correlated interaction noise, 5 seeds, every method.
ExperimentSpec benchmark_spec();
/// benchmark_spec with two synthetic domains that share half of their cue
/// and background vocabulary.
ExperimentSpec transfer_benchmark_spec();

/// round(f * total) for each fraction.
std::vector<std::size_t> weak_counts(std::size_t total, std::span<const double> fractions);

/// The synthetic spec used for one seed: calibrated when requested and
/// sized for the largest cell of `spec`.
synthetic::SyntheticSpec synthetic_for_seed(const ExperimentSpec& spec, std::uint64_t seed,
                                            const std::string& domain);
/// The synthetic spec for one seed and domain sized for `sizes`; transfer
/// runs size both domains for {transfer.clean_size, weak_size, dev_size,
/// test_size}.
synthetic::SyntheticSpec synthetic_for_sizes(const ExperimentSpec& spec, std::uint64_t seed,
                                             const std::string& domain, const synthetic::SplitSizes& sizes);

// ---------------------------------------------------------------------------
// Sweeps

struct Cell {
  baselines::Method method = baselines::Method::hydra();
  double clean_ratio = 0.1;
  double weak_fraction = 1.0;
  std::uint64_t seed = 1;
};

/// The dataset of one sweep cell, built exactly as run_sweep builds it: the
/// prebuilt dataset when set, otherwise splits carved with `seed` from the
/// corpus or from the synthetic corpus of `seed`.
Dataset make_dataset(const ExperimentSpec& spec, double clean_ratio, double weak_fraction, std::uint64_t seed);

/// Seeds outermost, then clean ratios, weak fractions and methods.
std::vector<Cell> expand_cells(const ExperimentSpec& spec);

struct RunOptions {
  /// Directory for records.jsonl, manifest.json and the report files; empty
  /// skips persistence.
  std::filesystem::path out_dir;
  /// Inputs hashed into the manifest besides the spec's own paths.
  std::vector<std::filesystem::path> extra_inputs;
  /// Called after every cell, serialized.
  std::function<void(const report::Record&)> on_record;
};

struct SweepResult {
  /// In cell order, independent of scheduling.
  std::vector<report::Record> records;
  report::ReportTable table;
  std::size_t failed = 0;

  bool ok() const { return failed == 0; }
};

/// Runs every cell on up to spec.jobs threads. A failing cell is recorded
/// with its error and the sweep continues.
SweepResult run_sweep(const ExperimentSpec& spec, const RunOptions& options = {});

// ---------------------------------------------------------------------------
// Transfer

inline constexpr const char* kTransferCombined = "combined";
inline constexpr const char* kTransferCombinedTiny = "combined-tiny";
inline constexpr const char* kTransferTargetOnly = "target-only";
inline constexpr const char* kTransferTargetOnlyTiny = "target-only-tiny";
inline constexpr const char* kTransferZeroShot = "zero-shot";

/// Per seed: the dual-headed model on target clean plus source weak data
/// (full and tiny clean sets), the clean baseline on target clean data
/// (full and tiny), and the dual-headed model trained entirely on the
/// source domain. Every variant is tested on the target test split. The
/// vocabulary of each variant is the union over its training sources.
/// Throws ValidationError when the two domains disagree on the label space.
SweepResult run_transfer(const ExperimentSpec& spec, const RunOptions& options = {});

// ---------------------------------------------------------------------------
// Manifests

/// Git blob hash: SHA-1 over "blob <size>\0" followed by the content.
std::string git_blob_sha1(std::string_view content);
std::string git_blob_sha1(const std::filesystem::path& path);
std::string sha1_hex(std::string_view content);

/// {kind, config, config_sha1, inputs: {path: blob sha1}, seeds}.
nlohmann::json make_manifest(const ExperimentSpec& spec, std::string_view kind,
                             std::span<const std::filesystem::path> extra_inputs = {});
/// Recovers the spec stored by make_manifest.
ExperimentSpec spec_from_manifest(const nlohmann::json& manifest);

}  // namespace mailintent::experiment
