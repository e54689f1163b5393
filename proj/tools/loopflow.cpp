// Command-line front end: synth, preprocess, train, sweep, report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "loopflow/config.hpp"
#include "loopflow/experiment.hpp"
#include "loopflow/features.hpp"
#include "loopflow/format.hpp"
#include "loopflow/ingest.hpp"
#include "loopflow/resample.hpp"
#include "loopflow/synth.hpp"

namespace fs = std::filesystem;
using namespace loopflow;

namespace {

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    return in;
}

std::ofstream open_output(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
    fs::path p = path;
    p.replace_extension();
    p += suffix;
    return p;
}

template <typename F>
auto stage(const char* name, F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(std::string(name) + ": " + e.what());
    }
}

TimeLabel parse_label(const std::string& s) {
    if (s == "end") return TimeLabel::IntervalEnd;
    if (s == "start") return TimeLabel::IntervalStart;
    throw Error("--time-label must be 'end' or 'start'");
}

struct SynthArgs {
    std::string config, out;
    unsigned threads = 1;
};

int run_synth(const SynthArgs& a) {
    KeyValueConfig kv;
    if (!a.config.empty()) kv = KeyValueConfig::load(a.config);
    const SynthConfig cfg = synth_config_from(kv);
    const SynthOutput data = generate(cfg, a.threads);

    const fs::path out = a.out;
    const fs::path truth = sibling(out, ".truth.csv");
    {
        auto f = open_output(out);
        write_raw_csv(f, data.samples, data.layout);
    }
    {
        auto f = open_output(truth);
        write_truth_csv(f, data.truth);
    }
    std::cout << "wrote " << data.samples.size() << " samples to " << out.string() << "\n"
              << "wrote " << data.truth.size() << " blanked slots to " << truth.string() << "\n"
              << "per-slot noise sd: volume " << format_real(data.volume_noise_sd) << ", occupancy "
              << format_real(data.occupancy_noise_sd) << "\n";
    return 0;
}

struct PreprocessArgs {
    std::string in, out, gaps, resampled, time_label = "end";
    int detector = kTargetDetector;
    double interval = 0.0;
    std::size_t error_budget = 100;
};

int run_preprocess(const PreprocessArgs& a) {
    const auto interval = stage("resample", [&] { return CollectionInterval::from_minutes(a.interval); });
    ParseOptions opts;
    opts.error_budget = a.error_budget;
    opts.time_label = parse_label(a.time_label);

    auto in = open_input(a.in);
    auto parsed = stage("ingest", [&] { return parse_raw_csv(in, opts); });
    for (const auto& e : parsed.errors)
        std::cerr << "warning: line " << e.line << ": " << e.message << "\n";
    auto series_map = stage("ingest", [&] { return pivot_by_detector(parsed.samples, parsed.lines); });
    auto it = series_map.find(a.detector);
    if (it == series_map.end()) throw Error("ingest: no rows for detector " + std::to_string(a.detector));

    const GapReport gaps = detect_gaps(it->second);
    const DetectorSeries series = stage("interpolate", [&] { return interpolate_linear(it->second); });
    const auto resampled = stage("resample", [&] { return resample(series, interval); });
    const auto weekdays = filter_weekdays(resampled.records);
    const FeatureDataset cfd = stage("features", [&] { return build_cfd(weekdays, interval, a.detector); });

    if (!a.gaps.empty()) {
        auto f = open_output(a.gaps);
        write_gap_report(f, gaps.gaps);
    }
    if (!a.resampled.empty()) {
        auto f = open_output(a.resampled);
        write_resampled_csv(f, resampled.records);
    }
    {
        auto f = open_output(a.out);
        write_cfd_csv(f, cfd);
    }
    {
        auto f = open_output(sibling(a.out, ".json"));
        f << cfd_sidecar_json(cfd) << "\n";
    }
    const double cell_fraction = parsed.total_cells == 0
                                     ? 0.0
                                     : static_cast<double>(parsed.empty_cells) /
                                           static_cast<double>(parsed.total_cells);
    std::cout << "detector " << a.detector << ": " << series.samples.size() << " slots, "
              << gaps.missing_slots << " missing (" << format_real(gaps.missing_fraction())
              << " of slots, " << format_real(cell_fraction) << " of cells), "
              << series.boundary_filled << " boundary-filled\n"
              << "interval " << format_minutes(interval.minutes()) << " min: "
              << resampled.records.size() << " windows, " << resampled.dropped_slots
              << " trailing slots dropped, " << cfd.size() << " weekday rows\n";
    return 0;
}

struct TrainArgs {
    std::string in, model = "mlr", out, metrics, search = "early";
    std::optional<double> interval;
    std::uint64_t seed = 1;
    double train_fraction = 0.8;
    int n_trees = 500, tune_trees = 50, patience = 3;
    unsigned threads = 1;
};

int run_train(const TrainArgs& a) {
    double minutes = 0.0;
    if (a.interval) {
        minutes = *a.interval;
    } else {
        const auto sidecar = sibling(a.in, ".json");
        std::ifstream f(sidecar);
        if (!f) throw Error("--interval not given and no sidecar " + sidecar.string());
        minutes = nlohmann::json::parse(f).at("interval_T").get<double>();
    }
    const auto interval = CollectionInterval::from_minutes(minutes);
    auto in = open_input(a.in);
    const FeatureDataset cfd = read_cfd_csv(in, interval);

    ExperimentConfig cfg;
    cfg.seed = a.seed;
    cfg.train_fraction = a.train_fraction;
    cfg.rf_n_trees = a.n_trees;
    cfg.rf_tune_trees = a.tune_trees;
    cfg.rf_patience = a.patience;
    if (a.search != "early" && a.search != "exhaustive")
        throw Error("--search must be 'early' or 'exhaustive'");
    cfg.rf_exhaustive = a.search == "exhaustive";
    cfg.threads = a.threads;

    const ModelKind kind = parse_model_kind(a.model);
    const IntervalOutcome o = run_interval(cfd, kind, cfg);
    if (!a.out.empty()) {
        auto f = open_output(a.out);
        f << (o.mlr ? mlr_to_json(*o.mlr) : rf_to_json(*o.rf)).dump() << "\n";
    }
    const std::string table = metrics_csv_header() + "\n" + metrics_csv_row(o.report) + "\n";
    if (!a.metrics.empty()) {
        auto f = open_output(a.metrics);
        f << table;
    }
    std::cout << table;
    if (o.tuning)
        std::cout << "selected max_depth=" << o.tuning->best.max_depth
                  << " min_leaf=" << o.tuning->best.min_leaf << " after "
                  << o.tuning->search.trace.size() << " grid points\n";
    return 0;
}

struct SweepArgs {
    std::string config, out_dir;
    std::optional<unsigned> threads;
};

int run_sweep_cmd(const SweepArgs& a) {
    if (!fs::exists(a.config)) throw Error("config file not found: " + a.config);
    const KeyValueConfig kv = KeyValueConfig::load(a.config);
    ExperimentConfig cfg = ExperimentConfig::from(kv);
    if (a.threads) cfg.threads = std::max(1u, *a.threads);
    if (!a.out_dir.empty()) cfg.output_dir = a.out_dir;
    if (cfg.input_path.empty()) throw Error(a.config + ": input_path is required");

    fs::path input = cfg.input_path;
    if (input.is_relative() && !fs::exists(input)) input = fs::path(a.config).parent_path() / input;
    auto in = open_input(input.string());
    const IngestOutcome ingest = stage("ingest", [&] { return ingest_detector(in, cfg.detector_id); });
    const SweepResult sr = run_sweep(ingest.series, cfg);
    render_report(sr, cfg.output_dir);
    std::cout << sweep_summary(sr) << "\nartifacts in " << cfg.output_dir << "\n";
    return 0;
}

int run_report(const std::string& in_path, const std::string& out_dir) {
    auto in = open_input(in_path);
    const SweepResult sr = parse_sweep_csv(in);
    render_report(sr, out_dir);
    std::cout << sweep_summary(sr);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Loop-detector traffic volume forecasting across collection intervals"};
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic raw detector CSV and its truth sidecar");
    synth->add_option("--config", synth_args.config, "Key-value config (synth.* keys, seed)")
        ->check(CLI::ExistingFile);
    synth->add_option("--out", synth_args.out, "Output CSV; truth goes to <stem>.truth.csv")->required();
    synth->add_option("--threads", synth_args.threads, "Worker threads (results do not depend on it)");

    PreprocessArgs pre;
    auto* preprocess = app.add_subcommand("preprocess", "Raw CSV -> interpolated, resampled weekday CFD_T CSV");
    preprocess->add_option("--in", pre.in, "Raw detector CSV")->required();
    preprocess->add_option("--detector", pre.detector, "Detector id")->capture_default_str();
    preprocess->add_option("--interval", pre.interval, "Collection interval in minutes: 0.5,1,2,5,10,15")
        ->required();
    preprocess->add_option("--out", pre.out, "CFD_T CSV; sidecar JSON goes to <stem>.json")->required();
    preprocess->add_option("--gaps", pre.gaps, "Write the gap report CSV here");
    preprocess->add_option("--resampled", pre.resampled, "Write the resampled records CSV here");
    preprocess->add_option("--time-label", pre.time_label, "Time column names the interval 'end' or 'start'")
        ->capture_default_str();
    preprocess->add_option("--error-budget", pre.error_budget, "Bad rows tolerated before failing")
        ->capture_default_str();

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "Fit one model on one CFD_T CSV and report test metrics");
    train->add_option("--in", tr.in, "CFD_T CSV")->required();
    train->add_option("--model", tr.model, "mlr or rf")->capture_default_str();
    train->add_option("--interval", tr.interval, "Interval in minutes (default: from the sidecar JSON)");
    train->add_option("--out", tr.out, "Write the fitted model as JSON");
    train->add_option("--metrics", tr.metrics, "Write the metrics row as CSV");
    train->add_option("--seed", tr.seed)->capture_default_str();
    train->add_option("--train-fraction", tr.train_fraction)->capture_default_str();
    train->add_option("--n-trees", tr.n_trees, "Final forest size")->capture_default_str();
    train->add_option("--tune-trees", tr.tune_trees, "Forest size during tuning")->capture_default_str();
    train->add_option("--patience", tr.patience, "Early-stopping patience")->capture_default_str();
    train->add_option("--search", tr.search, "early or exhaustive")->capture_default_str();
    train->add_option("--threads", tr.threads, "Worker threads (results do not depend on it)");

    SweepArgs sw;
    auto* sweep = app.add_subcommand("sweep", "Run MLR and RF over every interval and write report artifacts");
    sweep->add_option("--config", sw.config, "Experiment config file")->required();
    sweep->add_option("--out-dir", sw.out_dir, "Override output_dir");
    sweep->add_option("--threads", sw.threads, "Worker threads (results do not depend on it)");

    std::string report_in, report_out;
    auto* report = app.add_subcommand("report", "Re-render plot data and summary from a sweep.csv");
    report->add_option("--in", report_in, "sweep.csv")->required();
    report->add_option("--out", report_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) return run_synth(synth_args);
        if (*preprocess) return run_preprocess(pre);
        if (*train) return run_train(tr);
        if (*sweep) return run_sweep_cmd(sw);
        if (*report) return run_report(report_in, report_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
