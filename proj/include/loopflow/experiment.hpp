#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loopflow/core.hpp"
#include "loopflow/ingest.hpp"
#include "loopflow/matrix.hpp"
#include "loopflow/metrics.hpp"
#include "loopflow/mlr.hpp"
#include "loopflow/rf.hpp"

namespace loopflow {

class KeyValueConfig;

enum class ModelKind { Mlr, Rf };

std::string model_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

struct ExperimentConfig {
    std::string input_path;
    int detector_id = 191;
    std::vector<double> intervals{0.5, 1, 2, 5, 10, 15};
    std::vector<ModelKind> models{ModelKind::Mlr, ModelKind::Rf};
    double train_fraction = 0.8;
    int rf_n_trees = 500;
    int rf_tune_trees = 50;
    int rf_patience = 3;
    bool rf_exhaustive = false;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string output_dir = "sweep_out";

    /// Keys: input_path, detector_id, intervals, models, train_fraction, rf.n_trees,
    /// rf.tune_trees, rf.patience, rf.search (early|exhaustive), seed, threads, output_dir.
    /// `synth.*` keys are accepted and ignored so one file can drive both commands.
    static ExperimentConfig from(const KeyValueConfig& cfg);
};

/// Order-preserving partition: the first floor(n * train_fraction) rows train.
std::pair<FeatureDataset, FeatureDataset> split_linear(const FeatureDataset& ds, double train_fraction);

struct Design {
    Matrix x;
    std::vector<double> y;
};

/// Feature matrix [month, time_norm, occ] and target vol.
Design design_of(const FeatureDataset& ds);

/// Resample, drop weekends, and build CFD_T for one interval.
FeatureDataset prepare_cfd(const DetectorSeries& series, CollectionInterval interval);

struct IntervalOutcome {
    MetricsReport report;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    std::optional<Timestamp> last_train;
    std::optional<Timestamp> first_test;
    std::optional<MlrModel> mlr;
    std::optional<RfModel> rf;
    std::optional<TuneResult> tuning;
};

/// Linear split, fit on the train part (RF: tune, then fit the final forest), score the test part.
IntervalOutcome run_interval(const FeatureDataset& cfd, ModelKind kind, const ExperimentConfig& cfg);

struct SweepCell {
    ModelKind model = ModelKind::Mlr;
    CollectionInterval interval = CollectionInterval::from_minutes(kNativeIntervalMin);
    MetricsReport report;
    std::size_t train_rows = 0;
    std::size_t test_rows = 0;
    std::optional<Timestamp> last_train;
    std::optional<Timestamp> first_test;
    std::optional<RfHyperparams> rf_params;
    std::vector<TuneStep> tuning_trace;
};

struct SweepResult {
    /// Grouped by model (config order), intervals ascending within a model.
    std::vector<SweepCell> cells;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
    int rf_tune_trees = 0;
    int rf_patience = 0;
    bool rf_exhaustive = false;
    /// False when reconstructed from sweep.csv, which carries no configuration.
    bool config_known = false;
};

SweepResult run_sweep(const DetectorSeries& series, const ExperimentConfig& cfg);

/// Writes sweep.csv, the per-figure plot-data CSVs, summary.txt, and (when present) the
/// configuration echo and RF tuning traces into `dir`.
void render_report(const SweepResult& sr, const std::filesystem::path& dir);

std::string sweep_csv(const SweepResult& sr);
SweepResult parse_sweep_csv(std::istream& in);
std::string sweep_summary(const SweepResult& sr);

struct IngestOutcome {
    DetectorSeries series;
    GapReport gaps;
    std::size_t rows = 0;
    std::size_t row_errors = 0;
    std::size_t total_cells = 0;
    std::size_t empty_cells = 0;
};

/// Parse, pivot, and interpolate the series of one detector.
IngestOutcome ingest_detector(std::istream& in, int detector_id, const ParseOptions& opts = {});

}  // namespace loopflow
