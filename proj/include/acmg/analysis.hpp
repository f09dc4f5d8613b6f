#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "acmg/corpus.hpp"
#include "acmg/metrics.hpp"
#include "acmg/model.hpp"
#include "acmg/train.hpp"

namespace acmg {

/// Per-frame gate values of one sample next to its side channels.
struct GateTrace {
  std::string sample_id;
  std::size_t label = 0;
  std::vector<double> gates_a;  // one per valid acoustic frame
  std::vector<double> gates_t;  // one per valid token
  std::optional<std::vector<double>> energy;
  std::optional<std::vector<std::uint8_t>> negative_token_flags;
  std::optional<std::vector<std::uint8_t>> diagnostic_a;
  std::optional<std::vector<std::uint8_t>> diagnostic_t;
};

/// Runs the model on a sample and records its gates. Throws ConfigError if
/// the model has no gating.
GateTrace trace_sample(const FusionModel& model, const Sample& s);
std::vector<GateTrace> collect_traces(const FusionModel& model, const Corpus& corpus);

struct CorrelationReport {
  std::optional<double> overall;                  // absent when undefined
  std::vector<std::optional<double>> per_class;   // indexed by true label
  std::size_t n_frames = 0;
  std::vector<std::size_t> frames_per_class;
  std::size_t skipped_traces = 0;  // traces without an energy channel
};

/// Pearson r between acoustic gates and frame energy, with frames pooled
/// across samples, overall and grouped by true class. Energy is linearly
/// resampled to the gate length when the two differ.
CorrelationReport gate_energy_correlation(std::span<const GateTrace> traces, std::size_t n_classes);

struct ModalityAlignment {
  double mean_gate_diagnostic = 0.0;
  double mean_gate_other = 0.0;
  double gap = 0.0;               // diagnostic minus other
  std::optional<double> auroc;    // absent if every frame is flagged
  std::size_t n_diagnostic = 0;
  std::size_t n_other = 0;
};

struct AlignmentReport {
  std::optional<ModalityAlignment> acoustic;
  std::optional<ModalityAlignment> textual;
};

/// How well gates single out the planted diagnostic frames. Throws
/// AnalysisError when no trace carries diagnostic flags.
AlignmentReport gate_diagnostic_alignment(std::span<const GateTrace> traces);

struct FoldResult {
  std::size_t fold = 0;
  std::vector<std::size_t> test_indices;
  std::vector<std::size_t> predictions;  // per test sample
  ClassificationMetrics metrics;         // subject-level when subjects exist
  TrainHistory history;
  std::vector<GateTrace> traces;         // held-out traces when gating is on
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation over folds; 0 for one value
};

struct EvalReport {
  std::vector<std::string> class_names;
  std::size_t n_samples = 0;
  bool subject_level = false;
  /// Single-model metrics, or pooled held-out predictions under k-fold.
  ClassificationMetrics metrics;
  /// Fold means (k-fold) or the single-model values.
  MeanStd accuracy, macro_f1, macro_precision, macro_recall;
  std::vector<FoldResult> folds;
  std::optional<CorrelationReport> gate_energy;
  std::optional<AlignmentReport> gate_alignment;
  std::vector<std::string> warnings;
};

struct KFoldOptions {
  std::size_t k = 5;
  std::size_t threads = 1;
  /// Explicit fold per sample; overrides the seeded assignment when set.
  std::optional<std::vector<std::size_t>> fold_of;
  std::uint64_t seed = 0;  // fold assignment
};

/// Fold id per sample. Subjects are kept whole when present; assignment is
/// stratified by class and deterministic in `seed`. Throws ConfigError when
/// there are fewer than 2k units (subjects or samples).
std::vector<std::size_t> assign_folds(const Corpus& corpus, std::size_t k, std::uint64_t seed);

/// Trains k models from scratch, each on k-1 folds, and evaluates on the
/// held-out fold. Every fold starts from the same initialization and
/// training seed. Fold workers run concurrently up to opts.threads; results
/// do not depend on the thread count.
EvalReport kfold(const Corpus& corpus, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                 const KFoldOptions& opts);

/// Evaluates a trained model on a corpus.
EvalReport evaluate(const FusionModel& model, const Corpus& corpus);

/// Majority vote of sample predictions per subject (ties go to the lower
/// class). Returns (subject predictions, subject labels) in first-seen order.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> subject_vote(
    const Corpus& corpus, std::span<const std::size_t> indices, std::span<const std::size_t> predictions,
    std::vector<std::string>* warnings = nullptr);

MeanStd mean_std(std::span<const double> values);

// Report emission. Output is a pure function of the report, so reruns are
// byte-identical.
std::string report_json(const EvalReport& report);
std::string per_class_csv(const EvalReport& report);
std::string confusion_csv(const EvalReport& report);
std::string folds_csv(const EvalReport& report);
/// class,r,n_frames rows per class plus an "overall" row; undefined r is "NA".
std::string correlation_csv(const CorrelationReport& corr, const std::vector<std::string>& class_names);
std::string history_csv(const TrainHistory& history);

/// Writes report.json, per_class.csv, confusion.csv, folds.csv (k-fold) and
/// gate_energy_correlation.csv (when available) into `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

/// Writes `text` to `path` through a temporary file.
void write_text_file(const std::filesystem::path& path, const std::string& text);

struct PlotOptions {
  /// Acoustic frames with energy at or below this quantile of the trace's
  /// energy are shaded as low-energy.
  double low_energy_quantile = 0.25;
};

/// SVG figure: acoustic gate curve over energy with low-energy frames shaded,
/// and a per-token gate heatmap with negative tokens outlined. Overlays are
/// left out when the side channels are absent.
std::string render_trace_svg(const GateTrace& trace, const PlotOptions& opts = {});
void export_trace_plot(const GateTrace& trace, const std::filesystem::path& path,
                       const PlotOptions& opts = {});

}  // namespace acmg
