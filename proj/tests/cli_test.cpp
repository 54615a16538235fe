#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "rangevol/market_data.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
namespace ts = rangevol::testsupport;
using rangevol::Date;
using rangevol::load_csv;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

// Runs the installed binary through the shell, capturing exit code and both
// streams. Scratch paths come from TempDir, so they never contain spaces.
CliResult run_cli(const std::string& args, const fs::path& scratch) {
    static int counter = 0;
    const fs::path out_file = scratch / ("out" + std::to_string(counter) + ".txt");
    const fs::path err_file = scratch / ("err" + std::to_string(counter) + ".txt");
    ++counter;
    const std::string cmd = std::string(RANGEVOL_CLI_PATH) + " " + args + " >" +
                            out_file.string() + " 2>" + err_file.string();
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return {WEXITSTATUS(status), slurp(out_file), slurp(err_file)};
}

void write_constant_csv(const fs::path& path, int days, double price) {
    const std::vector<Date>& cal = ts::trading_calendar();
    std::ofstream out(path);
    out << "Date,Open,High,Low,Close\n";
    for (int i = 0; i < days; ++i)
        out << cal[static_cast<std::size_t>(i)].iso() << ',' << price << ',' << price << ','
            << price << ',' << price << '\n';
}

}  // namespace

TEST_CASE("bad invocations exit nonzero, help exits zero") {
    ts::TempDir tmp;
    CHECK(run_cli("", tmp.path).code != 0);
    CHECK(run_cli("frobnicate", tmp.path).code != 0);
    CHECK(run_cli("run --out somewhere", tmp.path).code != 0);  // missing --data-dir
    CHECK(run_cli("simulate --out x --no-such-flag 1", tmp.path).code != 0);
    CHECK(run_cli("estimate --data-dir /nope/nothing --out " + (tmp.path / "o").string(),
                  tmp.path)
              .code != 0);

    const CliResult help = run_cli("--help", tmp.path);
    CHECK(help.code == 0);
    for (const char* sub : {"run", "estimate", "simulate", "train", "evaluate", "report"})
        CHECK(help.out.find(sub) != std::string::npos);
}

TEST_CASE("simulate writes a deterministic, loadable series") {
    ts::TempDir tmp;
    const std::string flags =
        " --sigma 0.25 --days 120 --steps-per-day 12 --seed 5 --ticker SIM";
    const CliResult first = run_cli("simulate --out " + (tmp.path / "d1").string() + flags,
                                    tmp.path);
    CHECK(first.code == 0);
    CHECK(first.out.find("SIM: 120 bars") != std::string::npos);
    const CliResult second = run_cli("simulate --out " + (tmp.path / "d2").string() + flags,
                                     tmp.path);
    CHECK(second.code == 0);
    CHECK(slurp(tmp.path / "d1" / "SIM.csv") == slurp(tmp.path / "d2" / "SIM.csv"));

    const rangevol::OhlcSeries series = load_csv(tmp.path / "d1" / "SIM.csv", "SIM");
    REQUIRE(series.size() == 120);
    for (const auto& bar : series.bars) CHECK(bar.valid());
}

TEST_CASE("estimate on a constant price yields zero volatility in every column") {
    ts::TempDir tmp;
    fs::create_directories(tmp.path / "data");
    write_constant_csv(tmp.path / "data" / "FLAT.csv", 60, 100.0);

    const CliResult r = run_cli("estimate --data-dir " + (tmp.path / "data").string() +
                                    " --out " + (tmp.path / "est").string() + " --window 5",
                                tmp.path);
    CHECK(r.code == 0);
    const std::vector<std::string> rows = lines_of(slurp(tmp.path / "est" / "vols" / "FLAT.csv"));
    REQUIRE(rows.size() == 1 + 60 - 5);
    CHECK(rows[0] ==
          "date,close_to_close,parkinson,garman_klass,rogers_satchell,yang_zhang");
    for (std::size_t i = 1; i < rows.size(); ++i)
        CHECK(rows[i].substr(rows[i].find(',')) == ",0,0,0,0,0");
}

TEST_CASE("simulated data flows into the estimator stage") {
    ts::TempDir tmp;
    REQUIRE(run_cli("simulate --out " + (tmp.path / "data").string() +
                        " --sigma 0.25 --days 252 --steps-per-day 25 --seed 9 --ticker SIM",
                    tmp.path)
                .code == 0);
    const CliResult r = run_cli("estimate --data-dir " + (tmp.path / "data").string() +
                                    " --out " + (tmp.path / "est").string(),
                                tmp.path);
    CHECK(r.code == 0);
    const std::vector<std::string> rows = lines_of(slurp(tmp.path / "est" / "vols" / "SIM.csv"));
    REQUIRE(rows.size() == 1 + 252 - 21);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::istringstream fields(rows[i].substr(rows[i].find(',') + 1));
        std::string field;
        while (std::getline(fields, field, ',')) {
            const double sigma = std::stod(field);
            CHECK(sigma > 0.0);
            CHECK(sigma < 1.0);
        }
    }
}

TEST_CASE("run, report, evaluate and train cooperate on one universe") {
    ts::TempDir tmp;
    ts::write_universe(tmp.path / "data", 2, 7);
    const std::string common = " --data-dir " + (tmp.path / "data").string() + " --out " +
                               (tmp.path / "out").string() +
                               " --unroll 6 --hidden 4,4 --seed 3";

    const CliResult run = run_cli("run" + common + " --epochs 8 --patience 8", tmp.path);
    CHECK(run.code == 0);
    CHECK(run.out.find("runs ok 10, failed 0") != std::string::npos);
    CHECK(run.out.find("accuracy") != std::string::npos);  // printed default table
    CHECK(fs::exists(tmp.path / "out" / "manifest.txt"));

    // report is idempotent over an untouched directory
    const std::string tables_before =
        slurp(tmp.path / "out" / "tables" / "metrics_default.csv") +
        slurp(tmp.path / "out" / "tables" / "keep_ratios.csv");
    const CliResult rep = run_cli("report --out " + (tmp.path / "out").string(), tmp.path);
    CHECK(rep.code == 0);
    CHECK(rep.out.find("aggregated 10 runs") != std::string::npos);
    CHECK(slurp(tmp.path / "out" / "tables" / "metrics_default.csv") +
              slurp(tmp.path / "out" / "tables" / "keep_ratios.csv") ==
          tables_before);

    const CliResult eval = run_cli(
        "evaluate" + common + " --tickers T00 --estimators parkinson", tmp.path);
    CHECK(eval.code == 0);
    CHECK(eval.out.find("T00 parkinson") != std::string::npos);
    for (const char* regime : {"default", "lowered", "confident"})
        CHECK(eval.out.find(regime) != std::string::npos);

    const CliResult train = run_cli("train --data-dir " + (tmp.path / "data").string() +
                                        " --out " + (tmp.path / "out2").string() +
                                        " --tickers T00 --estimators parkinson --unroll 6" +
                                        " --hidden 4,4 --seed 3 --epochs 8 --patience 8",
                                    tmp.path);
    CHECK(train.code == 0);
    CHECK(train.out.find("trained T00 parkinson") != std::string::npos);
    CHECK(fs::exists(tmp.path / "out2" / "runs" / "T00" / "parkinson" / "model.bin"));

    // train demands exactly one ticker and one estimator
    CHECK(run_cli("train --data-dir " + (tmp.path / "data").string() + " --out " +
                      (tmp.path / "out3").string() + " --estimators parkinson",
                  tmp.path)
              .code != 0);
}

TEST_CASE("partial and total failures map onto distinct exit codes") {
    ts::TempDir tmp;
    ts::write_universe(tmp.path / "data", 2, 11);
    {
        std::ofstream bad(tmp.path / "data" / "T01.csv");
        bad << "not,a,market,file\n1,2,3,4\n";
    }
    const std::string tail = " --unroll 6 --hidden 4,4 --epochs 6 --patience 6 --seed 3";

    const CliResult partial = run_cli("run --data-dir " + (tmp.path / "data").string() +
                                          " --out " + (tmp.path / "o1").string() + tail,
                                      tmp.path);
    CHECK(partial.code == 2);

    const CliResult total = run_cli("run --data-dir " + (tmp.path / "data").string() +
                                        " --out " + (tmp.path / "o2").string() +
                                        " --tickers T01" + tail,
                                    tmp.path);
    CHECK(total.code == 1);
}

TEST_CASE("config files feed defaults and explicit flags beat them") {
    ts::TempDir tmp;
    fs::create_directories(tmp.path / "data");
    write_constant_csv(tmp.path / "data" / "FLAT.csv", 60, 50.0);
    {
        std::ofstream cfg(tmp.path / "est.cfg");
        cfg << "window=5\n";
    }
    const std::string base = "estimate --data-dir " + (tmp.path / "data").string() +
                             " --config " + (tmp.path / "est.cfg").string();

    const CliResult from_config =
        run_cli(base + " --out " + (tmp.path / "o1").string(), tmp.path);
    CHECK(from_config.code == 0);
    CHECK(lines_of(slurp(tmp.path / "o1" / "vols" / "FLAT.csv")).size() == 1 + 60 - 5);

    const CliResult overridden =
        run_cli(base + " --out " + (tmp.path / "o2").string() + " --window 8", tmp.path);
    CHECK(overridden.code == 0);
    CHECK(lines_of(slurp(tmp.path / "o2" / "vols" / "FLAT.csv")).size() == 1 + 60 - 8);
}
