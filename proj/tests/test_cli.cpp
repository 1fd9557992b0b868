// End-to-end tests for the rrci binary: output fields match the library,
// every documented exit code is reachable, and seeded commands rerun
// byte-identically. The binary path arrives via the RRCI_BIN environment
// variable.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "riskratio/core.hpp"
#include "riskratio/dataset.hpp"
#include "riskratio/internal_variability.hpp"
#include "riskratio/ratio_intervals.hpp"
#include "riskratio/rng.hpp"

namespace {

using namespace riskratio;

std::string binary_path() {
    const char* bin = std::getenv("RRCI_BIN");
    REQUIRE(bin != nullptr);
    return bin;
}

// Scratch directory for fixture files and captured output, removed on exit.
const std::filesystem::path& scratch_dir() {
    static const std::filesystem::path dir = [] {
        std::string tmpl =
            (std::filesystem::temp_directory_path() / "rrci_cli_XXXXXX").string();
        REQUIRE(mkdtemp(tmpl.data()) != nullptr);
        return std::filesystem::path(tmpl);
    }();
    return dir;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    REQUIRE(out.good());
}

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

RunResult run(const std::string& args) {
    static int counter = 0;
    const std::filesystem::path out_path =
        scratch_dir() / ("stdout." + std::to_string(counter));
    const std::filesystem::path err_path =
        scratch_dir() / ("stderr." + std::to_string(counter));
    ++counter;
    const std::string cmd = binary_path() + " " + args + " > " + out_path.string() +
                            " 2> " + err_path.string();
    const int status = std::system(cmd.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.out = slurp(out_path);
    result.err = slurp(err_path);
    return result;
}

// Value token following "<key> " on its own line of key-value output.
std::string kv(const std::string& text, const std::string& key) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.size() > key.size() && line.compare(0, key.size(), key) == 0 &&
            line[key.size()] == ' ') {
            return line.substr(key.size() + 1);
        }
    }
    FAIL("key not found in output: " << key);
    return {};
}

std::string fmt10(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// Inverse CDF of the generalized extreme value distribution.
double gev_quantile(double u, double mu, double sigma, double xi) {
    return mu + sigma * (std::pow(-std::log(u), -xi) - 1.0) / xi;
}

std::filesystem::path write_gev_fixture(bool negated) {
    const std::filesystem::path path =
        scratch_dir() / (negated ? "gev_neg.csv" : "gev.csv");
    std::ostringstream out;
    out << "scenario,member,value\n";
    const double sign = negated ? -1.0 : 1.0;
    char buf[40];
    SplitMix g(20260816);
    for (int m = 1; m <= 500; ++m) {
        std::snprintf(buf, sizeof buf, "%.17g",
                      sign * gev_quantile(g.uniform_open(), 1.0, 1.0, 0.1));
        out << "factual," << m << ',' << buf << '\n';
    }
    for (int m = 1; m <= 500; ++m) {
        std::snprintf(buf, sizeof buf, "%.17g",
                      sign * gev_quantile(g.uniform_open(), 0.0, 1.0, 0.1));
        out << "counterfactual," << m << ',' << buf << '\n';
    }
    write_file(path, out.str());
    return path;
}

const std::string kSweepFixture = [] {
    std::ostringstream out;
    out << "scenario,member,value\n";
    for (int m = 1; m <= 20; ++m) {
        out << "factual," << m << ',' << fmt10(m * 0.1) << '\n';
    }
    for (int m = 1; m <= 20; ++m) {
        out << "counterfactual," << m << ',' << fmt10(m * 0.05) << '\n';
    }
    return out.str();
}();

} // namespace

TEST_CASE("interval output matches the library", "[cli]") {
    const auto koopman = run("rr-ci --counts 129,400,3,400 --method koopman --level 0.90");
    REQUIRE(koopman.exit_code == 0);
    CHECK(kv(koopman.out, "y_factual") == "129");
    CHECK(kv(koopman.out, "n_factual") == "400");
    CHECK(kv(koopman.out, "y_counterfactual") == "3");
    CHECK(kv(koopman.out, "n_counterfactual") == "400");
    CHECK(kv(koopman.out, "method") == "koopman");
    CHECK(kv(koopman.out, "side") == "two-sided");
    const CountPair counts{BinomialCount{129, 400}, BinomialCount{3, 400}};
    const RatioInterval expected = koopman_interval(counts, 0.90, Side::two_sided);
    CHECK(kv(koopman.out, "estimate") == fmt10(expected.estimate.as_double()));
    CHECK(kv(koopman.out, "lower") == fmt10(expected.lower));
    CHECK(kv(koopman.out, "upper") == fmt10(expected.upper));

    const auto lrt = run("rr-ci --counts 43,400,0,400 --method lrt --level 0.90");
    REQUIRE(lrt.exit_code == 0);
    const RatioInterval lrt_expected =
        lrt_interval(CountPair{BinomialCount{43, 400}, BinomialCount{0, 400}}, 0.90,
                     Side::two_sided);
    CHECK(kv(lrt.out, "estimate") == "inf");
    CHECK(kv(lrt.out, "upper") == "inf");
    CHECK(kv(lrt.out, "lower") == fmt10(lrt_expected.lower));

    const auto one_sided =
        run("rr-ci --counts 30,100,10,100 --method wilson --level 0.95 --side lower");
    REQUIRE(one_sided.exit_code == 0);
    const RatioInterval wilson_expected =
        wilson_interval(CountPair{BinomialCount{30, 100}, BinomialCount{10, 100}}, 0.95,
                        Side::lower_one_sided);
    CHECK(kv(one_sided.out, "side") == "lower");
    CHECK(kv(one_sided.out, "lower") == fmt10(wilson_expected.lower));
    CHECK(kv(one_sided.out, "upper") == "inf");
}

TEST_CASE("counts derived from member values honor cutoff, tail, and anomaly",
          "[cli]") {
    const std::filesystem::path input = scratch_dir() / "members.csv";
    write_file(input,
               "scenario,member,value\n"
               "factual,1,1\nfactual,2,2\nfactual,3,3\nfactual,4,4\n"
               "counterfactual,1,1\ncounterfactual,2,1\ncounterfactual,3,1\n"
               "counterfactual,4,3\n");

    const auto upper =
        run("rr-ci --input " + input.string() + " --cutoff 2.5 --method delta");
    REQUIRE(upper.exit_code == 0);
    CHECK(kv(upper.out, "y_factual") == "2");
    CHECK(kv(upper.out, "y_counterfactual") == "1");

    const auto lower = run("rr-ci --input " + input.string() +
                           " --cutoff 2.5 --tail lower --method delta");
    REQUIRE(lower.exit_code == 0);
    CHECK(kv(lower.out, "y_factual") == "2");
    CHECK(kv(lower.out, "y_counterfactual") == "3");

    const std::filesystem::path reference = scratch_dir() / "reference.csv";
    write_file(reference,
               "scenario,member,value\n"
               "factual,1,0.5\nfactual,2,1.5\n"
               "counterfactual,1,0.5\ncounterfactual,2,1.5\n");
    // Reference mean 1.0; subtracting shifts every value down by one, so the
    // cutoff catches one more factual member than the raw run at 2.5.
    const auto anomaly =
        run("rr-ci --input " + input.string() + " --reference " + reference.string() +
            " --anomaly subtract --cutoff 1.5 --method delta");
    REQUIRE(anomaly.exit_code == 0);
    CHECK(kv(anomaly.out, "y_factual") == "2");
    CHECK(kv(anomaly.out, "y_counterfactual") == "1");
}

TEST_CASE("usage and input errors exit 2", "[cli]") {
    CHECK(run("rr-ci --counts 1,2,3").exit_code == 2);
    CHECK(run("rr-ci --counts 1,10,1,10 --method bogus").exit_code == 2);
    CHECK(run("rr-ci").exit_code == 2);
    CHECK(run("").exit_code == 2);
    CHECK(run("rr-ci --counts 1,10,1,10 --side sideways").exit_code == 2);
    CHECK(run("rr-ci --counts 1,10,1,10 --level 1.5").exit_code == 2);

    const std::filesystem::path input = scratch_dir() / "bad_column.csv";
    write_file(input, "scenario,member,intensity\nfactual,1,2.0\n");
    const auto bad = run("rr-ci --input " + input.string() + " --cutoff 1");
    CHECK(bad.exit_code == 2);
    CHECK(bad.err.find("intensity") != std::string::npos);

    const std::filesystem::path ok = scratch_dir() / "tiny.csv";
    write_file(ok,
               "scenario,member,value\nfactual,1,2\ncounterfactual,1,1\n");
    CHECK(run("rr-ci --input " + ok.string() + " --counts 1,2,1,2 --cutoff 1").exit_code ==
          2);
    CHECK(run("rr-ci --input " + ok.string() + " --cutoff 1 --anomaly subtract")
              .exit_code == 2);
    CHECK(run("rr-ci --input " + ok.string() + " --cutoff 1 --anomaly halve --reference " +
              ok.string())
              .exit_code == 2);
    CHECK(run("rr-ci --input " + ok.string()).exit_code == 2);
}

TEST_CASE("degenerate counts exit 3", "[cli]") {
    const auto both_zero = run("rr-ci --counts 0,50,0,50 --method delta");
    CHECK(both_zero.exit_code == 3);
    CHECK(!both_zero.err.empty());
    CHECK(run("rr-ci --counts 0,50,0,50 --method koopman").exit_code == 3);
}

TEST_CASE("oversize exact method without a table exits 5", "[cli]") {
    const std::filesystem::path empty = scratch_dir() / "no_tables";
    std::filesystem::create_directories(empty);
    const auto direct = run("rr-ci --counts 5,400,3,400 --method wang-shan --table-dir " +
                            empty.string());
    CHECK(direct.exit_code == 5);
    CHECK(direct.err.find("ws_nf400_nc400_level0.95.txt") != std::string::npos);

    const auto sim = run("simulate --n 400 --rr 2 --pf 0.05 --reps 10 --methods wang-shan "
                         "--table-dir " +
                         empty.string() + " --out " + (scratch_dir() / "sim5.csv").string());
    CHECK(sim.exit_code == 5);
    CHECK(!std::filesystem::exists(scratch_dir() / "sim5.csv"));
}

TEST_CASE("nonconvergent tail fit exits 4", "[cli]") {
    // A linear ramp has a bounded, regularly shaped tail: the shape estimate
    // slides to the boundary of the searched region and the fit reports
    // nonconvergence rather than a spurious interval.
    const std::filesystem::path input = scratch_dir() / "ramp.csv";
    std::ostringstream data;
    data << "scenario,member,value\n";
    for (int m = 1; m <= 100; ++m) {
        data << "factual," << m << ',' << fmt10(m * 0.01) << '\n';
        data << "counterfactual," << m << ',' << fmt10(m * 0.009) << '\n';
    }
    write_file(input, data.str());
    const auto result = run("fit-eva --input " + input.string() + " --cutoff 0.95");
    CHECK(result.exit_code == 4);
    CHECK(kv(result.out, "factual.converged") == "0");
}

TEST_CASE("sweep emits one row per cutoff", "[cli]") {
    const std::filesystem::path input = scratch_dir() / "sweep.csv";
    write_file(input, kSweepFixture);

    const auto lrt = run("sweep --input " + input.string() +
                         " --cutoffs 0.5,1.5,1.95,2.5 --method lrt --level 0.90");
    REQUIRE(lrt.exit_code == 0);
    CHECK(lrt.out ==
          "cutoff,method,level,side,y_factual,n_factual,y_counterfactual,"
          "n_counterfactual,estimate,lower,upper,status\n"
          "0.5,lrt,0.9,two-sided,15,20,10,20,1.5,1.000016698,2.413090872,ok\n"
          "1.5,lrt,0.9,two-sided,5,20,0,20,inf,3.420129305,inf,ok\n"
          "1.95,lrt,0.9,two-sided,1,20,0,20,inf,0.3618953924,inf,ok\n"
          "2.5,lrt,0.9,two-sided,0,20,0,20,nan,nan,nan,not-computable\n");

    const auto koopman = run("sweep --input " + input.string() +
                             " --cutoffs 0.5,1.5,1.95,2.5 --method koopman --level 0.90");
    REQUIRE(koopman.exit_code == 0);
    CHECK(koopman.out ==
          "cutoff,method,level,side,y_factual,n_factual,y_counterfactual,"
          "n_counterfactual,estimate,lower,upper,status\n"
          "0.5,koopman,0.9,two-sided,15,20,10,20,1.5,0.9970320568,2.377044549,ok\n"
          "1.5,koopman,0.9,two-sided,5,20,0,20,inf,2.020749607,inf,ok\n"
          "1.95,koopman,0.9,two-sided,1,20,0,20,inf,0.383240427,inf,ok\n"
          "2.5,koopman,0.9,two-sided,0,20,0,20,nan,nan,nan,not-computable\n");
}

TEST_CASE("tail fits converge on heavy-tailed data and mirror across tails",
          "[cli]") {
    const std::filesystem::path upper_file = write_gev_fixture(false);
    const auto up = run("fit-eva --input " + upper_file.string() + " --cutoff 4.0");
    REQUIRE(up.exit_code == 0);
    CHECK(kv(up.out, "factual.converged") == "1");
    CHECK(kv(up.out, "counterfactual.converged") == "1");
    CHECK(kv(up.out, "factual.n_exceedances") == "50");
    const double p_f = std::stod(kv(up.out, "factual.p_event"));
    const double p_c = std::stod(kv(up.out, "counterfactual.p_event"));
    CHECK(p_f > p_c);
    CHECK(p_c > 0.0);
    const double lower = std::stod(kv(up.out, "lower"));
    const double estimate = std::stod(kv(up.out, "estimate"));
    const double upper = std::stod(kv(up.out, "upper"));
    CHECK(lower < estimate);
    CHECK(estimate < upper);

    // The same analysis posed as a lower-tail problem on negated values must
    // reproduce the fit exactly, with location and threshold sign-flipped.
    const std::filesystem::path lower_file = write_gev_fixture(true);
    const auto down =
        run("fit-eva --input " + lower_file.string() + " --cutoff -4.0 --tail lower "
            "--threshold-quantile 10");
    REQUIRE(down.exit_code == 0);
    CHECK(kv(down.out, "factual.sigma") == kv(up.out, "factual.sigma"));
    CHECK(kv(down.out, "factual.xi") == kv(up.out, "factual.xi"));
    CHECK(std::stod(kv(down.out, "factual.mu")) ==
          -std::stod(kv(up.out, "factual.mu")));
    CHECK(std::stod(kv(down.out, "factual.threshold")) ==
          -std::stod(kv(up.out, "factual.threshold")));
    CHECK(kv(down.out, "factual.p_event") == kv(up.out, "factual.p_event"));
    CHECK(kv(down.out, "lower") == kv(up.out, "lower"));
    CHECK(kv(down.out, "upper") == kv(up.out, "upper"));

    const auto again = run("fit-eva --input " + upper_file.string() + " --cutoff 4.0");
    CHECK(again.out == up.out);
}

TEST_CASE("time-average reports pooled, per-year, and bootstrap results", "[cli]") {
    // Three years, four members each. 2003 has factual events only (ratio
    // inf); 2002 has none in either scenario (ratio nan).
    const std::filesystem::path input = scratch_dir() / "years.csv";
    write_file(input,
               "scenario,year,member,value\n"
               "factual,2001,1,2\nfactual,2001,2,2\nfactual,2001,3,0\nfactual,2001,4,0\n"
               "factual,2002,1,0\nfactual,2002,2,0\nfactual,2002,3,0\nfactual,2002,4,0\n"
               "factual,2003,1,2\nfactual,2003,2,0\nfactual,2003,3,0\nfactual,2003,4,0\n"
               "counterfactual,2001,1,2\ncounterfactual,2001,2,0\n"
               "counterfactual,2001,3,0\ncounterfactual,2001,4,0\n"
               "counterfactual,2002,1,0\ncounterfactual,2002,2,0\n"
               "counterfactual,2002,3,0\ncounterfactual,2002,4,0\n"
               "counterfactual,2003,1,0\ncounterfactual,2003,2,0\n"
               "counterfactual,2003,3,0\ncounterfactual,2003,4,0\n");

    const auto result = run("time-average --input " + input.string() +
                            " --cutoff 1 --boot-method boot-percentile --nb 500 --seed 9");
    REQUIRE(result.exit_code == 0);
    CHECK(kv(result.out, "n_years") == "3");
    CHECK(kv(result.out, "p_factual") == fmt10(3.0 / 12.0));
    CHECK(kv(result.out, "p_counterfactual") == fmt10(1.0 / 12.0));
    CHECK(kv(result.out, "per_year 2001") == "2 1 2");
    CHECK(kv(result.out, "per_year 2002") == "0 0 nan");
    CHECK(kv(result.out, "per_year 2003") == "1 0 inf");

    Dataset data;
    {
        std::ifstream in(input);
        data = parse_dataset(in);
    }
    const EventDefinition event{1.0, Tail::upper};
    const RatioInterval expected = time_averaged_delta_interval(
        scenario_series(data, Scenario::factual),
        scenario_series(data, Scenario::counterfactual), event, 0.90, Side::two_sided);
    CHECK(kv(result.out, "method") == "time-averaged-delta");
    CHECK(kv(result.out, "lower") == fmt10(expected.lower));
    CHECK(kv(result.out, "upper") == fmt10(expected.upper));
    CHECK(kv(result.out, "boot.method") == "boot-percentile");

    const auto again = run("time-average --input " + input.string() +
                           " --cutoff 1 --boot-method boot-percentile --nb 500 --seed 9");
    CHECK(again.out == result.out);
    const auto reseeded = run("time-average --input " + input.string() +
                              " --cutoff 1 --boot-method boot-percentile --nb 500 --seed 10");
    CHECK(kv(reseeded.out, "lower") == kv(result.out, "lower"));
    CHECK(reseeded.out != result.out);
}

TEST_CASE("simulate writes a reproducible metrics file", "[cli]") {
    const std::filesystem::path out = scratch_dir() / "metrics.csv";
    const std::string cmd = "simulate --n 25 --rr 1,4 --pf 0.05,0.1 --reps 100 "
                            "--methods delta,koopman,boot-percentile --nb 200 --seed 3 "
                            "--out " +
                            out.string();
    const auto first = run(cmd);
    REQUIRE(first.exit_code == 0);
    REQUIRE(std::filesystem::exists(out));
    CHECK(!std::filesystem::exists(out.string() + ".tmp"));
    const std::string content = slurp(out);
    CHECK(content.rfind("method,n,rr,p_f,metric,value\n", 0) == 0);
    // 3 methods x 4 cells x 5 metric rows + header
    CHECK(std::count(content.begin(), content.end(), '\n') == 61);

    const auto second = run(cmd);
    REQUIRE(second.exit_code == 0);
    CHECK(slurp(out) == content);

    CHECK(run("simulate --n 25 --rr 0 --pf 0.05 --reps 10 --out " + out.string())
              .exit_code == 2);
}

TEST_CASE("seeded bootstrap commands rerun identically", "[cli]") {
    const std::string cmd =
        "rr-ci --counts 12,60,4,60 --method boot-studentized --level 0.90 --seed 17 "
        "--nb 400";
    const auto first = run(cmd);
    REQUIRE(first.exit_code == 0);
    const auto second = run(cmd);
    CHECK(second.out == first.out);
    const auto reseeded = run(
        "rr-ci --counts 12,60,4,60 --method boot-studentized --level 0.90 --seed 18 "
        "--nb 400");
    CHECK(reseeded.out != first.out);
}
