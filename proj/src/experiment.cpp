#include "loopflow/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

#include <json.hpp>

#include "loopflow/config.hpp"
#include "loopflow/features.hpp"
#include "loopflow/format.hpp"
#include "loopflow/resample.hpp"

namespace loopflow {

std::string model_name(ModelKind kind) { return kind == ModelKind::Mlr ? "MLR" : "RF"; }

ModelKind parse_model_kind(const std::string& name) {
    std::string lower;
    for (char c : name) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "mlr") return ModelKind::Mlr;
    if (lower == "rf") return ModelKind::Rf;
    throw Error("unknown model '" + name + "', expected mlr or rf");
}

ExperimentConfig ExperimentConfig::from(const KeyValueConfig& kv) {
    kv.reject_unknown({"input_path", "detector_id", "intervals", "models", "train_fraction",
                       "rf.n_trees", "rf.tune_trees", "rf.patience", "rf.search", "seed",
                       "threads", "output_dir"},
                      {"synth."});
    ExperimentConfig c;
    c.input_path = kv.get_string("input_path", c.input_path);
    c.detector_id = static_cast<int>(kv.get_int("detector_id", c.detector_id));
    c.intervals = kv.get_doubles("intervals", c.intervals);
    if (kv.has("models")) {
        c.models.clear();
        std::stringstream ss(kv.get_string("models", ""));
        std::string item;
        while (std::getline(ss, item, ',')) {
            item.erase(0, item.find_first_not_of(" \t"));
            item.erase(item.find_last_not_of(" \t") + 1);
            c.models.push_back(parse_model_kind(item));
        }
    }
    c.train_fraction = kv.get_double("train_fraction", c.train_fraction);
    c.rf_n_trees = static_cast<int>(kv.get_int("rf.n_trees", c.rf_n_trees));
    c.rf_tune_trees = static_cast<int>(kv.get_int("rf.tune_trees", c.rf_tune_trees));
    c.rf_patience = static_cast<int>(kv.get_int("rf.patience", c.rf_patience));
    const auto search = kv.get_string("rf.search", "early");
    if (search != "early" && search != "exhaustive")
        throw Error("rf.search must be 'early' or 'exhaustive', got '" + search + "'");
    c.rf_exhaustive = search == "exhaustive";
    c.seed = kv.get_u64("seed", c.seed);
    c.threads = static_cast<unsigned>(std::max(1LL, kv.get_int("threads", c.threads)));
    c.output_dir = kv.get_string("output_dir", c.output_dir);

    if (c.intervals.empty()) throw Error("intervals must not be empty");
    for (double t : c.intervals) (void)CollectionInterval::from_minutes(t);
    if (c.models.empty()) throw Error("models must not be empty");
    if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
        throw Error("train_fraction must be in (0, 1)");
    if (c.rf_n_trees < 1 || c.rf_tune_trees < 1 || c.rf_patience < 1)
        throw Error("rf.n_trees, rf.tune_trees and rf.patience must be positive");
    return c;
}

std::pair<FeatureDataset, FeatureDataset> split_linear(const FeatureDataset& ds, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw Error("split_linear: train_fraction must be in (0, 1)");
    const auto n = ds.rows.size();
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction));
    if (n_train == 0 || n_train == n)
        throw Error("split_linear: " + std::to_string(n) + " rows at fraction " +
                    format_real(train_fraction) + " leaves an empty side");

    auto slice = [&](std::size_t from, std::size_t to) {
        FeatureDataset part;
        part.interval = ds.interval;
        part.rows.assign(ds.rows.begin() + static_cast<std::ptrdiff_t>(from),
                         ds.rows.begin() + static_cast<std::ptrdiff_t>(to));
        if (!ds.stamps.empty())
            part.stamps.assign(ds.stamps.begin() + static_cast<std::ptrdiff_t>(from),
                               ds.stamps.begin() + static_cast<std::ptrdiff_t>(to));
        return part;
    };
    return {slice(0, n_train), slice(n_train, n)};
}

Design design_of(const FeatureDataset& ds) {
    Design d;
    d.x = Matrix(ds.rows.size(), 3);
    d.y.reserve(ds.rows.size());
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        const auto& r = ds.rows[i];
        d.x(i, 0) = r.month;
        d.x(i, 1) = r.time_norm;
        d.x(i, 2) = r.occ;
        d.y.push_back(r.vol);
    }
    return d;
}

FeatureDataset prepare_cfd(const DetectorSeries& series, CollectionInterval interval) {
    const auto resampled = resample(series, interval);
    const auto weekdays = filter_weekdays(resampled.records);
    return build_cfd(weekdays, interval, series.detector_id);
}

IntervalOutcome run_interval(const FeatureDataset& cfd, ModelKind kind, const ExperimentConfig& cfg) {
    if (cfd.empty()) throw Error("run_interval: empty dataset");
    auto [train, test] = split_linear(cfd, cfg.train_fraction);
    const Design tr = design_of(train);
    const Design te = design_of(test);

    IntervalOutcome out;
    out.train_rows = train.size();
    out.test_rows = test.size();
    if (!train.stamps.empty()) out.last_train = train.stamps.back();
    if (!test.stamps.empty()) out.first_test = test.stamps.front();

    std::vector<double> predictions;
    if (kind == ModelKind::Mlr) {
        out.mlr = fit_mlr(tr.x, tr.y, cfd_feature_names());
        predictions = predict_mlr(*out.mlr, te.x);
    } else {
        TuneOptions opts;
        opts.search.patience = cfg.rf_patience;
        opts.search.exhaustive = cfg.rf_exhaustive;
        opts.tune_trees = cfg.rf_tune_trees;
        opts.seed = cfg.seed;
        opts.threads = cfg.threads;
        out.tuning = tune_hyperparams(tr.x, tr.y, opts, cfg.rf_n_trees);
        out.rf = fit_forest(tr.x, tr.y, out.tuning->best, cfd_feature_names(), cfg.threads);
        predictions = predict_forest(*out.rf, te.x);
    }
    out.report = evaluate(model_name(kind), cfd.interval, te.y, predictions);
    return out;
}

SweepResult run_sweep(const DetectorSeries& series, const ExperimentConfig& cfg) {
    if (cfg.intervals.empty()) throw Error("run_sweep: no intervals");
    std::vector<CollectionInterval> intervals;
    for (double t : cfg.intervals) intervals.push_back(CollectionInterval::from_minutes(t));
    std::sort(intervals.begin(), intervals.end());
    intervals.erase(std::unique(intervals.begin(), intervals.end()), intervals.end());

    SweepResult sr;
    sr.seed = cfg.seed;
    sr.train_fraction = cfg.train_fraction;
    sr.rf_tune_trees = cfg.rf_tune_trees;
    sr.rf_patience = cfg.rf_patience;
    sr.rf_exhaustive = cfg.rf_exhaustive;
    sr.config_known = true;

    // CFD_T is rebuilt from the 30 s series for every interval.
    std::vector<FeatureDataset> datasets;
    for (auto t : intervals) datasets.push_back(prepare_cfd(series, t));

    for (ModelKind kind : cfg.models) {
        for (std::size_t i = 0; i < intervals.size(); ++i) {
            IntervalOutcome o;
            try {
                o = run_interval(datasets[i], kind, cfg);
            } catch (const Error& e) {
                throw Error(model_name(kind) + " at " + format_minutes(intervals[i].minutes()) +
                            " min: " + e.what());
            }
            SweepCell cell;
            cell.model = kind;
            cell.interval = intervals[i];
            cell.report = o.report;
            cell.train_rows = o.train_rows;
            cell.test_rows = o.test_rows;
            cell.last_train = o.last_train;
            cell.first_test = o.first_test;
            if (o.tuning) {
                cell.rf_params = o.tuning->best;
                cell.tuning_trace = o.tuning->search.trace;
            }
            sr.cells.push_back(std::move(cell));
        }
    }
    return sr;
}

std::string sweep_csv(const SweepResult& sr) {
    std::string out = metrics_csv_header() + "\n";
    for (const auto& c : sr.cells) out += metrics_csv_row(c.report) + "\n";
    return out;
}

SweepResult parse_sweep_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error("empty sweep file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != metrics_csv_header()) throw Error("unexpected sweep header '" + line + "'");
    SweepResult sr;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        SweepCell cell;
        cell.report = parse_metrics_csv_row(line);
        cell.model = parse_model_kind(cell.report.model);
        cell.interval = CollectionInterval::from_minutes(cell.report.interval_min);
        sr.cells.push_back(std::move(cell));
    }
    return sr;
}

namespace {

std::vector<const SweepCell*> cells_of(const SweepResult& sr, ModelKind kind) {
    std::vector<const SweepCell*> out;
    for (const auto& c : sr.cells)
        if (c.model == kind) out.push_back(&c);
    return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << content;
    if (!f) throw Error("write failed for " + path.string());
}

std::string plot_csv(const std::vector<const SweepCell*>& cells,
                     const std::vector<std::pair<std::string, double MetricsReport::*>>& metrics) {
    const bool tagged = metrics.size() > 1;
    std::string out = tagged ? "interval_min,value,metric\n" : "interval_min,value\n";
    for (const auto* c : cells)
        for (const auto& [name, field] : metrics) {
            out += format_minutes(c->report.interval_min) + "," + format_real(c->report.*field);
            if (tagged) out += "," + name;
            out += "\n";
        }
    return out;
}

}  // namespace

std::string sweep_summary(const SweepResult& sr) {
    std::ostringstream os;
    os << "Collection-interval sweep\n";
    for (ModelKind kind : {ModelKind::Mlr, ModelKind::Rf}) {
        const auto cells = cells_of(sr, kind);
        if (cells.empty()) continue;
        const SweepCell* best_r2 = cells.front();
        const SweepCell* best_scaled = cells.front();
        for (const auto* c : cells) {
            if (c->report.r2 > best_r2->report.r2) best_r2 = c;
            if (c->report.scaled_mae < best_scaled->report.scaled_mae) best_scaled = c;
        }
        os << "\n" << model_name(kind) << ":\n";
        for (const auto* c : cells) {
            os << "  T=" << format_minutes(c->report.interval_min) << " min  n=" << c->report.n
               << "  R2=" << format_real(c->report.r2) << "  MAE=" << format_real(c->report.mae)
               << "  RMSE=" << format_real(c->report.rmse)
               << "  scaled MAE=" << format_real(c->report.scaled_mae)
               << "  scaled RMSE=" << format_real(c->report.scaled_rmse);
            if (c->rf_params)
                os << "  (max_depth=" << c->rf_params->max_depth
                   << ", min_leaf=" << c->rf_params->min_leaf << ")";
            os << "\n";
        }
        os << "  best R2 interval: " << format_minutes(best_r2->report.interval_min) << " min\n";
        os << "  best scaled MAE interval: " << format_minutes(best_scaled->report.interval_min)
           << " min\n";
    }
    return os.str();
}

void render_report(const SweepResult& sr, const std::filesystem::path& dir) {
    if (sr.cells.empty()) throw Error("render_report: empty sweep result");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());

    write_file(dir / "sweep.csv", sweep_csv(sr));
    const auto mlr = cells_of(sr, ModelKind::Mlr);
    const auto rf = cells_of(sr, ModelKind::Rf);
    if (!mlr.empty()) {
        write_file(dir / "mlr_mae_rmse.csv",
                   plot_csv(mlr, {{"mae", &MetricsReport::mae}, {"rmse", &MetricsReport::rmse}}));
        write_file(dir / "mlr_r2.csv", plot_csv(mlr, {{"r2", &MetricsReport::r2}}));
        write_file(dir / "mlr_scaled.csv",
                   plot_csv(mlr, {{"scaled_mae", &MetricsReport::scaled_mae},
                                  {"scaled_rmse", &MetricsReport::scaled_rmse}}));
    }
    if (!rf.empty()) {
        write_file(dir / "rf_mae_rmse.csv",
                   plot_csv(rf, {{"mae", &MetricsReport::mae}, {"rmse", &MetricsReport::rmse}}));
        write_file(dir / "rf_r2.csv", plot_csv(rf, {{"r2", &MetricsReport::r2}}));
    }
    write_file(dir / "summary.txt", sweep_summary(sr));

    if (!sr.config_known) return;
    nlohmann::ordered_json echo;
    echo["seed"] = sr.seed;
    echo["train_fraction"] = sr.train_fraction;
    echo["rf_tune_trees"] = sr.rf_tune_trees;
    echo["rf_patience"] = sr.rf_patience;
    echo["rf_search"] = sr.rf_exhaustive ? "exhaustive" : "early";
    auto& per_t = echo["rf_hyperparams"] = nlohmann::ordered_json::array();
    for (const auto& c : sr.cells) {
        if (!c.rf_params) continue;
        per_t.push_back({{"interval_min", c.interval.minutes()},
                         {"n_trees", c.rf_params->n_trees},
                         {"max_depth", c.rf_params->max_depth},
                         {"min_leaf", c.rf_params->min_leaf},
                         {"grid_points", c.tuning_trace.size()}});
        std::string trace = "max_depth,min_leaf,val_rmse\n";
        for (const auto& s : c.tuning_trace)
            trace += std::to_string(s.max_depth) + "," + std::to_string(s.min_leaf) + "," +
                     format_real(s.val_rmse) + "\n";
        write_file(dir / ("rf_tuning_T" + format_minutes(c.interval.minutes()) + ".csv"), trace);
    }
    write_file(dir / "config_echo.json", echo.dump(2) + "\n");
}

IngestOutcome ingest_detector(std::istream& in, int detector_id, const ParseOptions& opts) {
    auto parsed = parse_raw_csv(in, opts);
    IngestOutcome out;
    out.row_errors = parsed.errors.size();
    out.total_cells = parsed.total_cells;
    out.empty_cells = parsed.empty_cells;

    std::vector<RawSample> mine;
    std::vector<std::size_t> lines;
    for (std::size_t i = 0; i < parsed.samples.size(); ++i) {
        if (parsed.samples[i].detector_id != detector_id) continue;
        mine.push_back(std::move(parsed.samples[i]));
        lines.push_back(parsed.lines[i]);
    }
    if (mine.empty()) throw Error("no rows for detector " + std::to_string(detector_id));
    out.rows = mine.size();
    auto pivot = pivot_by_detector(mine, lines);
    const RawSeries& raw = pivot.at(detector_id);
    out.gaps = detect_gaps(raw);
    out.series = interpolate_linear(raw);
    return out;
}

}  // namespace loopflow
