// rangevol: range-based volatility estimation and direction-of-change
// forecasting over daily OHLC data.
//
// Subcommands:
//   run       full pipeline: ingest -> estimate -> label -> train -> evaluate -> report
//   estimate  volatility series CSVs only
//   simulate  synthetic geometric-Brownian-motion OHLC data
//   train     single (ticker, estimator) run
//   evaluate  re-score a saved model on its test split
//   report    rebuild aggregate tables from existing run directories

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rangevol/experiment.hpp"
#include "rangevol/gbm.hpp"

namespace fs = std::filesystem;
using namespace rangevol;

namespace {

std::vector<EstimatorKind> parse_estimators(const std::vector<std::string>& names) {
    if (names.empty() || (names.size() == 1 && names[0] == "all"))
        return {kAllEstimators.begin(), kAllEstimators.end()};
    std::vector<EstimatorKind> out;
    out.reserve(names.size());
    for (const std::string& name : names) out.push_back(estimator_from_name(name));
    return out;
}

std::vector<std::string> parse_tickers(const std::vector<std::string>& tickers) {
    if (tickers.size() == 1 && tickers[0] == "all") return {};
    return tickers;
}

double parse_strict_double(const std::string& text, const char* what) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw CLI::ValidationError(std::string(what) + ": bad number '" + text + "'");
    return v;
}

// Options shared by the pipeline subcommands (run/train/evaluate, and the
// ingest/estimator subset for estimate).
struct PipelineOpts {
    std::string data_dir;
    std::string out;
    std::vector<std::string> tickers;
    std::vector<std::string> estimators;
    int window = 21;
    int unroll = 10;
    int epochs = 300;
    int patience = 50;
    int batch = 32;
    int jobs = 1;
    double lr = 0.001;
    double dropout = 0.3;
    double threshold = 0.45;
    std::string band = "0.4:0.5";
    double scale = 252.0;
    double train_frac = 0.70;
    double val_frac = 0.15;
    std::string cell = "lstm";
    std::vector<int> hidden{10, 10};
    std::uint64_t seed = 1;
};

void add_data_options(CLI::App* cmd, PipelineOpts& o) {
    cmd->set_config("--config", "", "key=value config file; explicit flags win");
    cmd->add_option("--data-dir", o.data_dir, "directory of per-ticker OHLC CSVs")->required();
    cmd->add_option("--out", o.out, "output directory")->required();
    cmd->add_option("--tickers", o.tickers,
                    "comma-separated tickers ('all' or omit for every CSV in --data-dir)")
        ->delimiter(',');
    cmd->add_option("--estimators", o.estimators,
                    "comma-separated estimators ('all' = close_to_close,parkinson,garman_klass,"
                    "rogers_satchell,yang_zhang)")
        ->delimiter(',');
    cmd->add_option("--window", o.window, "volatility window length in days (default 21)");
    cmd->add_option("--scale", o.scale, "annualization factor F (default 252)");
}

void add_model_options(CLI::App* cmd, PipelineOpts& o) {
    cmd->add_option("--unroll", o.unroll, "days the network is unrolled over (default 10)");
    cmd->add_option("--cell", o.cell, "recurrent cell: lstm or vanilla")
        ->check(CLI::IsMember({"lstm", "vanilla"}));
    cmd->add_option("--hidden", o.hidden, "comma-separated hidden layer sizes (default 10,10)")
        ->delimiter(',');
    cmd->add_option("--train-frac", o.train_frac, "train share of the labeled windows");
    cmd->add_option("--val-frac", o.val_frac, "validation share carved from the train tail");
    cmd->add_option("--threshold", o.threshold, "lowered-threshold regime cutoff (default 0.45)");
    cmd->add_option("--band", o.band, "confidence band lo:hi dropped as unconfident");
    cmd->add_option("--seed", o.seed, "master seed; per-run seeds are derived from it");
}

void add_training_options(CLI::App* cmd, PipelineOpts& o) {
    cmd->add_option("--epochs", o.epochs, "max training epochs (default 300)");
    cmd->add_option("--patience", o.patience,
                    "consecutive non-improving validation epochs tolerated (default 50)");
    cmd->add_option("--batch", o.batch, "mini-batch size (default 32)");
    cmd->add_option("--lr", o.lr, "Adam learning rate (default 0.001)");
    cmd->add_option("--dropout", o.dropout, "non-recurrent dropout probability (default 0.3)");
    cmd->add_option("--jobs", o.jobs, "tickers trained in parallel (default 1)");
}

ExperimentConfig to_config(const PipelineOpts& o) {
    ExperimentConfig cfg;
    cfg.data_dir = o.data_dir;
    cfg.output_dir = o.out;
    cfg.tickers = parse_tickers(o.tickers);
    cfg.estimators = parse_estimators(o.estimators);
    cfg.vol_window = o.window;
    cfg.vol_scale = o.scale;
    cfg.window_len = o.unroll;
    cfg.train_frac = o.train_frac;
    cfg.val_frac_of_train = o.val_frac;
    cfg.cell = o.cell == "vanilla" ? CellKind::VanillaTanh : CellKind::Lstm;
    cfg.hidden_sizes = o.hidden;
    cfg.train.learning_rate = o.lr;
    cfg.train.dropout_p = o.dropout;
    cfg.train.batch_size = o.batch;
    cfg.train.max_epochs = o.epochs;
    cfg.train.patience = o.patience;
    cfg.train.seed = o.seed;
    cfg.jobs = o.jobs;
    cfg.regime_params.lowered_threshold = o.threshold;
    const std::size_t colon = o.band.find(':');
    if (colon == std::string::npos)
        throw CLI::ValidationError("--band expects lo:hi, got '" + o.band + "'");
    cfg.regime_params.band_low = parse_strict_double(o.band.substr(0, colon), "--band");
    cfg.regime_params.band_high = parse_strict_double(o.band.substr(colon + 1), "--band");
    cfg.regime_params.validate();
    return cfg;
}

int exit_code(std::size_t n_ok, std::size_t n_failed) {
    if (n_failed == 0) return 0;
    return n_ok == 0 ? 1 : 2;
}

void print_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) return;
    std::cout << in.rdbuf();
}

int cmd_run(const PipelineOpts& o) {
    const ExperimentConfig cfg = to_config(o);
    const ExperimentSummary summary = run_experiment(cfg);
    std::cout << "runs ok " << summary.n_ok << ", failed " << summary.n_failed << "\n\n";
    print_file(cfg.output_dir / "tables" / "metrics_default.txt");
    std::cout << "\nartifacts under " << cfg.output_dir.string() << " (see manifest.txt)\n";
    return exit_code(summary.n_ok, summary.n_failed);
}

int cmd_train(const PipelineOpts& o) {
    if (o.tickers.size() != 1 || o.tickers[0] == "all")
        throw CLI::ValidationError("train: give exactly one --tickers value");
    if (parse_estimators(o.estimators).size() != 1)
        throw CLI::ValidationError("train: give exactly one --estimators value");
    const ExperimentConfig cfg = to_config(o);
    const ExperimentSummary summary = run_experiment(cfg);
    const RunResult& run = summary.runs.at(0);
    if (!run.ok) {
        std::cerr << "error: " << run.error << '\n';
        return 1;
    }
    std::cout << "trained " << run.ticker << ' ' << estimator_name(run.kind) << ": epochs "
              << run.report.epochs_run << ", best epoch " << run.report.best_epoch
              << ", artifacts under "
              << (cfg.output_dir / "runs" / run.ticker / std::string(estimator_name(run.kind)))
                     .string()
              << '\n';
    return 0;
}

int cmd_estimate(const PipelineOpts& o) {
    const std::vector<EstimatorKind> kinds = parse_estimators(o.estimators);
    std::vector<std::string> tickers = parse_tickers(o.tickers);
    if (tickers.empty()) {
        if (!fs::exists(o.data_dir)) {
            std::cerr << "error: no such data dir: " << o.data_dir << '\n';
            return 1;
        }
        for (const auto& entry : fs::directory_iterator(o.data_dir))
            if (entry.path().extension() == ".csv") tickers.push_back(entry.path().stem().string());
        std::sort(tickers.begin(), tickers.end());
    }
    if (tickers.empty()) {
        std::cerr << "error: no ticker CSVs in " << o.data_dir << '\n';
        return 1;
    }
    fs::create_directories(fs::path(o.out) / "vols");
    std::size_t n_ok = 0, n_failed = 0;
    VolParams params;
    params.window = o.window;
    params.scale = o.scale;
    for (const std::string& ticker : tickers) {
        try {
            const OhlcSeries series = load_csv(fs::path(o.data_dir) / (ticker + ".csv"), ticker);
            std::map<EstimatorKind, VolSeries> all = compute_all(series, params);
            std::map<EstimatorKind, VolSeries> selected;
            for (EstimatorKind k : kinds) selected.emplace(k, std::move(all.at(k)));
            const fs::path out_file = fs::path(o.out) / "vols" / (ticker + ".csv");
            write_vols_csv(out_file, selected);
            std::cout << ticker << " -> " << out_file.string() << '\n';
            ++n_ok;
        } catch (const std::exception& e) {
            std::cerr << ticker << " FAILED: " << e.what() << '\n';
            ++n_failed;
        }
    }
    return exit_code(n_ok, n_failed);
}

int cmd_evaluate(const PipelineOpts& o) {
    const ExperimentConfig cfg = to_config(o);
    std::vector<std::string> tickers = cfg.tickers;
    if (tickers.empty()) {
        for (const auto& entry : fs::directory_iterator(cfg.data_dir))
            if (entry.path().extension() == ".csv") tickers.push_back(entry.path().stem().string());
        std::sort(tickers.begin(), tickers.end());
    }
    std::size_t n_ok = 0, n_failed = 0;
    for (const std::string& ticker : tickers) {
        std::map<EstimatorKind, VolSeries> vols;
        try {
            const OhlcSeries series = load_csv(cfg.data_dir / (ticker + ".csv"), ticker);
            vols = compute_all(series, VolParams{cfg.vol_window, cfg.vol_scale});
        } catch (const std::exception& e) {
            std::cerr << ticker << " FAILED: " << e.what() << '\n';
            n_failed += cfg.estimators.size();
            continue;
        }
        for (EstimatorKind kind : cfg.estimators) {
            const fs::path model_file = cfg.output_dir / "runs" / ticker /
                                        std::string(estimator_name(kind)) / "model.bin";
            try {
                const RnnModel model = RnnModel::load(model_file);
                const DirectionDataset data = make_dataset(
                    directions(vols.at(kind)), cfg.window_len, cfg.train_frac,
                    cfg.val_frac_of_train);
                const std::vector<double> probs = predict(model, data, data.test);
                std::vector<int> truth;
                truth.reserve(data.test.size());
                for (std::size_t s : data.test) truth.push_back(data.target(s));
                std::cout << ticker << ' ' << estimator_name(kind) << '\n';
                for (Regime reg : kAllRegimes) {
                    const RegimeResult r =
                        evaluate_regime(probs, truth, reg, cfg.regime_params);
                    char line[256];
                    std::snprintf(line, sizeof(line),
                                  "  %-10s accuracy %.3f  precision %.3f%s  recall %.3f%s  "
                                  "f1 %.3f%s  kept %zu/%zu\n",
                                  std::string(regime_name(reg)).c_str(), r.metrics.accuracy,
                                  r.metrics.precision, r.metrics.precision_defined ? "" : "*",
                                  r.metrics.recall, r.metrics.recall_defined ? "" : "*",
                                  r.metrics.f1, r.metrics.f1_defined ? "" : "*", r.kept, r.total);
                    std::cout << line;
                }
                ++n_ok;
            } catch (const std::exception& e) {
                std::cerr << ticker << ' ' << estimator_name(kind) << " FAILED: " << e.what()
                          << '\n';
                ++n_failed;
            }
        }
    }
    if (n_ok > 0) std::cout << "(* = undefined ratio reported as 0)\n";
    return exit_code(n_ok, n_failed);
}

struct SimulateOpts {
    std::string out;
    std::string ticker = "GBM";
    GbmConfig gbm;
};

int cmd_simulate(const SimulateOpts& o) {
    OhlcSeries series = gbm_simulate(o.gbm);
    series.ticker = o.ticker;
    fs::create_directories(o.out);
    const fs::path out_file = fs::path(o.out) / (o.ticker + ".csv");
    write_csv(out_file, series);
    std::cout << o.ticker << ": " << series.bars.size() << " bars -> " << out_file.string()
              << '\n';
    return 0;
}

std::string trimmed(const std::string& text) {
    const std::size_t first = text.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    return text.substr(first, text.find_last_not_of(" \t\r") - first + 1);
}

// CLI11 only processes config files attached to the top-level command, so the
// per-subcommand --config is expanded here instead: each key=value line turns
// into the matching --key value pair unless that flag was given explicitly
// (explicit flags win). Keys the subcommand doesn't know are skipped, matching
// how CLI11 treats unrecognized config entries.
std::vector<std::string> apply_config_file(const CLI::App& app, std::vector<std::string> args) {
    std::string file;
    for (std::size_t i = 0; i < args.size();) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size())
                throw CLI::ValidationError("--config: expected a file path");
            file = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                       args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
        } else if (args[i].rfind("--config=", 0) == 0) {
            file = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
        } else {
            ++i;
        }
    }
    if (file.empty() || args.empty()) return args;
    const CLI::App* sub = app.get_subcommand_no_throw(args[0]);
    if (sub == nullptr) return args;

    std::ifstream in(file);
    if (!in) throw CLI::ValidationError("--config: cannot read '" + file + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string entry = trimmed(line);
        if (entry.empty() || entry[0] == '#') continue;
        const std::size_t eq = entry.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError(file + ":" + std::to_string(lineno) +
                                       ": expected key=value");
        const std::string flag = "--" + trimmed(entry.substr(0, eq));
        if (sub->get_option_no_throw(flag) == nullptr) continue;
        bool given = false;
        for (const std::string& arg : args)
            given |= arg == flag || arg.rfind(flag + "=", 0) == 0;
        if (given) continue;
        args.push_back(flag);
        args.push_back(trimmed(entry.substr(eq + 1)));
    }
    return args;
}

int cmd_report(const std::string& out) {
    const std::size_t n_runs = report_aggregate(out);
    if (n_runs == 0) {
        std::cerr << "error: no run metrics under " << out << "/runs\n";
        return 1;
    }
    std::cout << "aggregated " << n_runs << " runs\n\n";
    print_file(fs::path(out) / "tables" / "metrics_default.txt");
    std::cout << "\ntables under " << (fs::path(out) / "tables").string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"range-based volatility estimators + direction-of-change forecasting"};
    app.require_subcommand(1);

    PipelineOpts run_opts, train_opts, eval_opts, est_opts;
    SimulateOpts sim_opts;
    std::string report_out;

    CLI::App* run = app.add_subcommand("run", "full pipeline over a ticker universe");
    add_data_options(run, run_opts);
    add_model_options(run, run_opts);
    add_training_options(run, run_opts);

    CLI::App* train = app.add_subcommand("train", "train one (ticker, estimator) model");
    add_data_options(train, train_opts);
    add_model_options(train, train_opts);
    add_training_options(train, train_opts);

    CLI::App* evaluate = app.add_subcommand("evaluate", "re-score saved models on their test split");
    add_data_options(evaluate, eval_opts);
    add_model_options(evaluate, eval_opts);

    CLI::App* estimate = app.add_subcommand("estimate", "write volatility series CSVs only");
    add_data_options(estimate, est_opts);

    CLI::App* simulate = app.add_subcommand("simulate", "emit synthetic OHLC data");
    simulate->set_config("--config", "", "key=value config file; explicit flags win");
    simulate->add_option("--out", sim_opts.out, "output directory")->required();
    simulate->add_option("--ticker", sim_opts.ticker, "ticker name for the CSV (default GBM)");
    simulate->add_option("--sigma", sim_opts.gbm.sigma_true, "annualized volatility (default 0.2)");
    simulate->add_option("--mu", sim_opts.gbm.mu, "annualized drift (default 0)");
    simulate->add_option("--jump-sigma", sim_opts.gbm.jump_sigma,
                         "stdev of the overnight log gap (default 0 = no jumps)");
    simulate->add_option("--steps-per-day", sim_opts.gbm.steps_per_day,
                         "intraday sampling resolution (default 1000)");
    simulate->add_option("--days", sim_opts.gbm.days, "trading days to simulate (default 252)");
    simulate->add_option("--s0", sim_opts.gbm.s0, "initial price (default 100)");
    simulate->add_option("--seed", sim_opts.gbm.seed, "simulation seed");

    CLI::App* report = app.add_subcommand("report", "rebuild aggregate tables from run artifacts");
    report->add_option("--out", report_out, "output directory holding runs/")->required();

    if (argc > 0) app.name(fs::path(argv[0]).filename().string());
    try {
        std::vector<std::string> args(argv + 1, argv + argc);
        args = apply_config_file(app, std::move(args));
        std::reverse(args.begin(), args.end());  // CLI11 consumes back to front
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (run->parsed()) return cmd_run(run_opts);
        if (train->parsed()) return cmd_train(train_opts);
        if (evaluate->parsed()) return cmd_evaluate(eval_opts);
        if (estimate->parsed()) return cmd_estimate(est_opts);
        if (simulate->parsed()) return cmd_simulate(sim_opts);
        if (report->parsed()) return cmd_report(report_out);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
