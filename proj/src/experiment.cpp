#include "rangevol/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "rangevol/labeling.hpp"

namespace rangevol {

namespace fs = std::filesystem;

void ExperimentConfig::validate() const {
    if (data_dir.empty()) throw std::invalid_argument("experiment: data_dir is required");
    if (!fs::exists(data_dir)) throw std::invalid_argument("experiment: no such data dir: " + data_dir.string());
    if (output_dir.empty()) throw std::invalid_argument("experiment: output_dir is required");
    if (estimators.empty()) throw std::invalid_argument("experiment: no estimators selected");
    if (vol_window < 2) throw std::invalid_argument("experiment: vol window must be >= 2");
    if (!(vol_scale > 0.0)) throw std::invalid_argument("experiment: vol scale must be > 0");
    if (window_len < 1) throw std::invalid_argument("experiment: unroll length must be >= 1");
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw std::invalid_argument("experiment: train fraction must be in (0,1)");
    if (!(val_frac_of_train > 0.0 && val_frac_of_train < 1.0))
        throw std::invalid_argument("experiment: validation fraction must be in (0,1)");
    if (hidden_sizes.empty()) throw std::invalid_argument("experiment: need at least one hidden layer");
    if (jobs < 1) throw std::invalid_argument("experiment: jobs must be >= 1");
    train.validate();
    regime_params.validate();
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view ticker, EstimatorKind kind) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
    const auto mix = [&h](unsigned char byte) {
        h ^= byte;
        h *= 1099511628211ULL;
    };
    for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(master >> (8 * i)));
    mix(0x1f);
    for (char c : ticker) mix(static_cast<unsigned char>(c));
    mix(0x1f);
    for (char c : estimator_name(kind)) mix(static_cast<unsigned char>(c));
    return h;
}

void atomic_write_text(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

namespace {

std::string fmt17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt3(double v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

Regime regime_from_name(std::string_view name) {
    for (Regime r : kAllRegimes)
        if (regime_name(r) == name) return r;
    throw std::runtime_error("unknown regime '" + std::string(name) + "'");
}

std::string vols_csv(const std::map<EstimatorKind, VolSeries>& vols) {
    std::ostringstream out;
    out << "date";
    for (EstimatorKind k : kAllEstimators) out << ',' << estimator_name(k);
    out << '\n';
    const VolSeries& first = vols.begin()->second;
    for (std::size_t i = 0; i < first.size(); ++i) {
        out << first.dates[i].iso();
        for (EstimatorKind k : kAllEstimators) out << ',' << fmt17(vols.at(k).sigma[i]);
        out << '\n';
    }
    return out.str();
}

std::string correlations_csv(const CorrelationReport& rep) {
    std::ostringstream out;
    out << "estimator";
    for (EstimatorKind k : kAllEstimators) out << ',' << estimator_name(k);
    out << '\n';
    for (std::size_t i = 0; i < kAllEstimators.size(); ++i) {
        out << estimator_name(kAllEstimators[i]);
        for (std::size_t j = 0; j < kAllEstimators.size(); ++j)
            out << ',' << (rep.defined[i][j] ? fmt17(rep.r[i][j]) : "nan");
        out << '\n';
    }
    return out.str();
}

std::string metrics_csv(const RunResult& run) {
    std::ostringstream out;
    out << "ticker,estimator,regime,accuracy,precision,precision_defined,recall,recall_defined,"
           "f1,f1_defined,keep_ratio,kept,total,tp,fp,tn,fn\n";
    for (Regime reg : kAllRegimes) {
        const RegimeResult& r = run.regimes.at(reg);
        out << run.ticker << ',' << estimator_name(run.kind) << ',' << regime_name(reg) << ','
            << fmt17(r.metrics.accuracy) << ',' << fmt17(r.metrics.precision) << ','
            << (r.metrics.precision_defined ? 1 : 0) << ',' << fmt17(r.metrics.recall) << ','
            << (r.metrics.recall_defined ? 1 : 0) << ',' << fmt17(r.metrics.f1) << ','
            << (r.metrics.f1_defined ? 1 : 0) << ',' << fmt17(r.keep_ratio) << ',' << r.kept
            << ',' << r.total << ',' << r.counts.tp << ',' << r.counts.fp << ',' << r.counts.tn
            << ',' << r.counts.fn << '\n';
    }
    return out.str();
}

std::string predictions_csv(const std::vector<double>& probs, const std::vector<int>& truth) {
    std::ostringstream out;
    out << "index,prob,truth\n";
    for (std::size_t i = 0; i < probs.size(); ++i)
        out << i << ',' << fmt17(probs[i]) << ',' << truth[i] << '\n';
    return out.str();
}

std::string loss_curve_csv(const TrainReport& report) {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss\n";
    for (std::size_t i = 0; i < report.train_loss.size(); ++i)
        out << (i + 1) << ',' << fmt17(report.train_loss[i]) << ',' << fmt17(report.val_loss[i])
            << '\n';
    return out.str();
}

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(delim, start);
        out.push_back(line.substr(start, pos == std::string::npos ? pos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw std::runtime_error("bad number '" + s + "' in metrics file");
    return v;
}

struct MetricRow {
    std::string ticker;
    EstimatorKind kind{};
    Regime regime{};
    RegimeResult result;
};

std::vector<MetricRow> load_metric_rows(const fs::path& runs_dir) {
    std::vector<fs::path> files;
    if (fs::exists(runs_dir)) {
        for (const auto& ticker_entry : fs::directory_iterator(runs_dir)) {
            if (!ticker_entry.is_directory()) continue;
            for (const auto& run_entry : fs::directory_iterator(ticker_entry.path())) {
                if (!run_entry.is_directory()) continue;
                const fs::path f = run_entry.path() / "metrics.csv";
                if (fs::exists(f)) files.push_back(f);
            }
        }
    }
    std::sort(files.begin(), files.end());

    std::vector<MetricRow> rows;
    for (const fs::path& file : files) {
        std::ifstream in(file);
        if (!in) throw std::runtime_error("cannot open " + file.string());
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto f = split(line, ',');
            if (f.size() != 17) throw std::runtime_error(file.string() + ": malformed row");
            MetricRow row;
            row.ticker = f[0];
            row.kind = estimator_from_name(f[1]);
            row.regime = regime_from_name(f[2]);
            row.result.metrics.accuracy = parse_double(f[3]);
            row.result.metrics.precision = parse_double(f[4]);
            row.result.metrics.precision_defined = f[5] == "1";
            row.result.metrics.recall = parse_double(f[6]);
            row.result.metrics.recall_defined = f[7] == "1";
            row.result.metrics.f1 = parse_double(f[8]);
            row.result.metrics.f1_defined = f[9] == "1";
            row.result.keep_ratio = parse_double(f[10]);
            row.result.kept = static_cast<std::size_t>(parse_double(f[11]));
            row.result.total = static_cast<std::size_t>(parse_double(f[12]));
            row.result.counts.tp = static_cast<long>(parse_double(f[13]));
            row.result.counts.fp = static_cast<long>(parse_double(f[14]));
            row.result.counts.tn = static_cast<long>(parse_double(f[15]));
            row.result.counts.fn = static_cast<long>(parse_double(f[16]));
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::string mean_std_cell(const MeanStd& ms) { return fmt3(ms.mean) + " ± " + fmt3(ms.stdev); }

void write_regime_tables(const fs::path& tables_dir, const std::vector<MetricRow>& rows) {
    for (Regime reg : kAllRegimes) {
        std::ostringstream csv, txt;
        csv << "estimator,n,accuracy_mean,accuracy_std,precision_mean,precision_std,"
               "recall_mean,recall_std,f1_mean,f1_std\n";
        txt << "test-set metrics, " << regime_name(reg)
            << " regime (mean ± sample std over tickers)\n\n";
        char line[160];
        std::snprintf(line, sizeof(line), "%-16s %4s  %-15s %-15s %-15s %-15s\n", "estimator", "n",
                      "accuracy", "precision", "recall", "f1");
        txt << line;
        for (EstimatorKind kind : kAllEstimators) {
            std::vector<RegimeResult> per_ticker;
            for (const MetricRow& row : rows)
                if (row.kind == kind && row.regime == reg) per_ticker.push_back(row.result);
            if (per_ticker.empty()) continue;
            const Aggregate agg = aggregate(per_ticker);
            csv << estimator_name(kind) << ',' << agg.n << ',' << fmt17(agg.accuracy.mean) << ','
                << fmt17(agg.accuracy.stdev) << ',' << fmt17(agg.precision.mean) << ','
                << fmt17(agg.precision.stdev) << ',' << fmt17(agg.recall.mean) << ','
                << fmt17(agg.recall.stdev) << ',' << fmt17(agg.f1.mean) << ','
                << fmt17(agg.f1.stdev) << '\n';
            std::snprintf(line, sizeof(line), "%-16s %4zu  %-15s %-15s %-15s %-15s\n",
                          std::string(estimator_name(kind)).c_str(), agg.n,
                          mean_std_cell(agg.accuracy).c_str(), mean_std_cell(agg.precision).c_str(),
                          mean_std_cell(agg.recall).c_str(), mean_std_cell(agg.f1).c_str());
            txt << line;
        }
        const std::string base = "metrics_" + std::string(regime_name(reg));
        atomic_write_text(tables_dir / (base + ".csv"), csv.str());
        atomic_write_text(tables_dir / (base + ".txt"), txt.str());
    }

    // keep ratios: the confidence-filtered regime's surviving-prediction share
    {
        std::ostringstream csv, txt;
        csv << "estimator,n,keep_ratio_mean,keep_ratio_std\n";
        txt << "proportion of confidently predicted directions (mean ± sample std over tickers)\n\n";
        char line[96];
        std::snprintf(line, sizeof(line), "%-16s %4s  %s\n", "estimator", "n", "keep_ratio");
        txt << line;
        for (EstimatorKind kind : kAllEstimators) {
            std::vector<RegimeResult> per_ticker;
            for (const MetricRow& row : rows)
                if (row.kind == kind && row.regime == Regime::Confident)
                    per_ticker.push_back(row.result);
            if (per_ticker.empty()) continue;
            const Aggregate agg = aggregate(per_ticker);
            csv << estimator_name(kind) << ',' << agg.n << ',' << fmt17(agg.keep_ratio.mean) << ','
                << fmt17(agg.keep_ratio.stdev) << '\n';
            std::snprintf(line, sizeof(line), "%-16s %4zu  %s\n",
                          std::string(estimator_name(kind)).c_str(), agg.n,
                          mean_std_cell(agg.keep_ratio).c_str());
            txt << line;
        }
        atomic_write_text(tables_dir / "keep_ratios.csv", csv.str());
        atomic_write_text(tables_dir / "keep_ratios.txt", txt.str());
    }
}

void write_correlation_tables(const fs::path& out_dir) {
    const fs::path runs_dir = out_dir / "runs";
    std::vector<fs::path> files;
    if (fs::exists(runs_dir)) {
        for (const auto& entry : fs::directory_iterator(runs_dir)) {
            if (!entry.is_directory()) continue;
            const fs::path f = entry.path() / "correlations.csv";
            if (fs::exists(f)) files.push_back(f);
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) return;

    constexpr std::size_t kN = kAllEstimators.size();
    std::array<std::array<double, kN>, kN> sum{};
    std::array<std::array<std::size_t, kN>, kN> count{};
    for (const fs::path& file : files) {
        std::ifstream in(file);
        if (!in) throw std::runtime_error("cannot open " + file.string());
        std::string line;
        std::getline(in, line);
        std::size_t i = 0;
        while (std::getline(in, line) && i < kN) {
            const auto f = split(line, ',');
            if (f.size() != kN + 1) throw std::runtime_error(file.string() + ": malformed row");
            for (std::size_t j = 0; j < kN; ++j) {
                if (f[j + 1] == "nan") continue;
                sum[i][j] += parse_double(f[j + 1]);
                count[i][j] += 1;
            }
            ++i;
        }
    }

    std::ostringstream csv, txt;
    csv << "estimator";
    for (EstimatorKind k : kAllEstimators) csv << ',' << estimator_name(k);
    csv << '\n';
    txt << "mean pairwise correlation of the five volatility series over tickers (n="
        << files.size() << ")\n\n";
    char cell[64];
    std::snprintf(cell, sizeof(cell), "%-16s", "");
    txt << cell;
    for (EstimatorKind k : kAllEstimators) {
        std::snprintf(cell, sizeof(cell), " %15s", std::string(estimator_name(k)).c_str());
        txt << cell;
    }
    txt << '\n';
    for (std::size_t i = 0; i < kN; ++i) {
        csv << estimator_name(kAllEstimators[i]);
        std::snprintf(cell, sizeof(cell), "%-16s",
                      std::string(estimator_name(kAllEstimators[i])).c_str());
        txt << cell;
        for (std::size_t j = 0; j < kN; ++j) {
            if (count[i][j] == 0) {
                csv << ",nan";
                std::snprintf(cell, sizeof(cell), " %15s", "nan");
            } else {
                const double mean = sum[i][j] / static_cast<double>(count[i][j]);
                csv << ',' << fmt17(mean);
                std::snprintf(cell, sizeof(cell), " %15.3f", mean);
            }
            txt << cell;
        }
        csv << '\n';
        txt << '\n';
    }
    atomic_write_text(out_dir / "tables" / "correlations.csv", csv.str());
    atomic_write_text(out_dir / "tables" / "correlations.txt", txt.str());
}

}  // namespace

void write_vols_csv(const fs::path& path, const std::map<EstimatorKind, VolSeries>& vols) {
    atomic_write_text(path, vols_csv(vols));
}

std::size_t report_aggregate(const fs::path& out_dir) {
    fs::create_directories(out_dir / "tables");
    const std::vector<MetricRow> rows = load_metric_rows(out_dir / "runs");
    write_regime_tables(out_dir / "tables", rows);
    write_correlation_tables(out_dir);
    return rows.size() / kAllRegimes.size();
}

namespace {

// One (ticker, estimator) training + evaluation, artifacts included.
void run_one(RunResult& run, const VolSeries& vol, const ExperimentConfig& config,
             const fs::path& run_dir, std::vector<std::string>& files,
             const std::string& rel_prefix) {
    const DirectionSeries dir = directions(vol);
    const DirectionDataset data =
        make_dataset(dir, config.window_len, config.train_frac, config.val_frac_of_train);

    RnnModel model(config.cell, 1, config.hidden_sizes);
    model.init_weights(derive_seed(config.train.seed, run.ticker, run.kind));
    TrainConfig tc = config.train;
    // separate stream for shuffles and dropout masks
    tc.seed = derive_seed(config.train.seed ^ 0x9e3779b97f4a7c15ULL, run.ticker, run.kind);
    run.report = train(model, data, tc);

    const std::vector<double> probs = predict(model, data, data.test);
    std::vector<int> truth;
    truth.reserve(data.test.size());
    for (std::size_t s : data.test) truth.push_back(data.target(s));
    for (Regime reg : kAllRegimes)
        run.regimes[reg] = evaluate_regime(probs, truth, reg, config.regime_params);

    fs::create_directories(run_dir);
    {
        fs::path tmp = run_dir / "model.bin.tmp";
        model.save(tmp);
        fs::rename(tmp, run_dir / "model.bin");
    }
    atomic_write_text(run_dir / "loss_curve.csv", loss_curve_csv(run.report));
    atomic_write_text(run_dir / "predictions.csv", predictions_csv(probs, truth));
    atomic_write_text(run_dir / "metrics.csv", metrics_csv(run));
    for (const char* name : {"model.bin", "loss_curve.csv", "predictions.csv", "metrics.csv"})
        files.push_back(rel_prefix + name);
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& config) {
    config.validate();
    const fs::path out = config.output_dir;
    fs::create_directories(out / "runs");
    fs::create_directories(out / "vols");
    fs::create_directories(out / "tables");

    std::vector<std::string> tickers = config.tickers;
    if (tickers.empty()) {
        for (const auto& entry : fs::directory_iterator(config.data_dir))
            if (entry.path().extension() == ".csv") tickers.push_back(entry.path().stem().string());
        std::sort(tickers.begin(), tickers.end());
    }
    if (tickers.empty()) throw std::runtime_error("experiment: no ticker CSVs in " +
                                                  config.data_dir.string());

    const std::size_t n_est = config.estimators.size();
    ExperimentSummary summary;
    summary.runs.resize(tickers.size() * n_est);
    for (std::size_t ti = 0; ti < tickers.size(); ++ti)
        for (std::size_t ei = 0; ei < n_est; ++ei) {
            summary.runs[ti * n_est + ei].ticker = tickers[ti];
            summary.runs[ti * n_est + ei].kind = config.estimators[ei];
        }

    std::vector<std::vector<std::string>> ticker_files(tickers.size());
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> completed{0};
    std::mutex log_mutex;
    const std::size_t total_runs = summary.runs.size();

    const auto process_ticker = [&](std::size_t ti) {
        const std::string& ticker = tickers[ti];
        std::vector<std::string>& files = ticker_files[ti];
        std::map<EstimatorKind, VolSeries> vols;
        std::string data_error;
        try {
            const OhlcSeries series = load_csv(config.data_dir / (ticker + ".csv"), ticker);
            vols = compute_all(series, VolParams{config.vol_window, config.vol_scale});
            write_vols_csv(out / "vols" / (ticker + ".csv"), vols);
            files.push_back("vols/" + ticker + ".csv");
            fs::create_directories(out / "runs" / ticker);
            atomic_write_text(out / "runs" / ticker / "correlations.csv",
                              correlations_csv(correlation_report(vols)));
            files.push_back("runs/" + ticker + "/correlations.csv");
        } catch (const std::exception& e) {
            data_error = e.what();
        }

        for (std::size_t ei = 0; ei < n_est; ++ei) {
            RunResult& run = summary.runs[ti * n_est + ei];
            if (!data_error.empty()) {
                run.error = "data: " + data_error;
            } else {
                const std::string est(estimator_name(run.kind));
                const fs::path run_dir = out / "runs" / ticker / est;
                try {
                    run_one(run, vols.at(run.kind), config, run_dir, files,
                            "runs/" + ticker + "/" + est + "/");
                    run.ok = true;
                } catch (const std::exception& e) {
                    run.error = e.what();
                }
            }
            const std::size_t done = ++completed;
            std::lock_guard<std::mutex> lock(log_mutex);
            std::cerr << "[" << done << "/" << total_runs << "] " << ticker << ' '
                      << estimator_name(run.kind);
            if (run.ok)
                std::cerr << " ok (epochs " << run.report.epochs_run << ", best "
                          << run.report.best_epoch << ", test acc "
                          << fmt3(run.regimes.at(Regime::Default).metrics.accuracy) << ")\n";
            else
                std::cerr << " FAILED: " << run.error << '\n';
        }
    };

    const int jobs = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(config.jobs), tickers.size()));
    if (jobs <= 1) {
        for (std::size_t ti = 0; ti < tickers.size(); ++ti) process_ticker(ti);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(jobs));
        for (int j = 0; j < jobs; ++j)
            pool.emplace_back([&] {
                for (std::size_t ti = next++; ti < tickers.size(); ti = next++) process_ticker(ti);
            });
        for (std::thread& t : pool) t.join();
    }

    for (const RunResult& run : summary.runs) (run.ok ? summary.n_ok : summary.n_failed)++;

    report_aggregate(out);

    // summary + manifest (timestamp-free: reruns must be byte-identical)
    std::ostringstream sum;
    for (const RunResult& run : summary.runs) {
        sum << run.ticker << ' ' << estimator_name(run.kind);
        if (run.ok)
            sum << " ok epochs=" << run.report.epochs_run << " best=" << run.report.best_epoch
                << " stopped_early=" << (run.report.stopped_early ? 1 : 0)
                << " test_accuracy_default="
                << fmt17(run.regimes.at(Regime::Default).metrics.accuracy) << '\n';
        else
            sum << " FAILED " << run.error << '\n';
    }
    sum << "ok " << summary.n_ok << " failed " << summary.n_failed << '\n';
    atomic_write_text(out / "summary.txt", sum.str());

    std::vector<std::string> manifest;
    for (const auto& files : ticker_files)
        manifest.insert(manifest.end(), files.begin(), files.end());
    for (Regime reg : kAllRegimes) {
        manifest.push_back("tables/metrics_" + std::string(regime_name(reg)) + ".csv");
        manifest.push_back("tables/metrics_" + std::string(regime_name(reg)) + ".txt");
    }
    for (const char* name : {"tables/keep_ratios.csv", "tables/keep_ratios.txt", "summary.txt"})
        manifest.push_back(name);
    if (fs::exists(out / "tables" / "correlations.csv")) {
        manifest.push_back("tables/correlations.csv");
        manifest.push_back("tables/correlations.txt");
    }
    std::sort(manifest.begin(), manifest.end());
    std::ostringstream man;
    for (const std::string& f : manifest) man << f << '\n';
    atomic_write_text(out / "manifest.txt", man.str());

    return summary;
}

}  // namespace rangevol
