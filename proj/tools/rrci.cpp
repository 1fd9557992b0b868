// rrci: risk-ratio estimation and confidence intervals for ensemble counts.
//
// Exit codes: 0 success, 2 parse/usage error, 3 requested quantity not
// computable from the data, 4 convergence failure, 5 infeasible problem size.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "riskratio/bootstrap.hpp"
#include "riskratio/core.hpp"
#include "riskratio/dataset.hpp"
#include "riskratio/eva.hpp"
#include "riskratio/internal_variability.hpp"
#include "riskratio/ratio_intervals.hpp"
#include "riskratio/simstudy.hpp"
#include "riskratio/wang_shan.hpp"

namespace {

using namespace riskratio;

constexpr int kExitSuccess = 0;
constexpr int kExitParse = 2;
constexpr int kExitNotComputable = 3;
constexpr int kExitConvergence = 4;
constexpr int kExitInfeasible = 5;

// ---------------------------------------------------------------------------
// Small formatting and parsing helpers shared by the subcommands.

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string fmt(const ExtReal& v) {
    if (v.is_undefined()) return "nan";
    if (v.is_infinite()) return "inf";
    return fmt(v.as_double());
}

Tail parse_tail(const std::string& s) {
    if (s == "upper") return Tail::upper;
    if (s == "lower") return Tail::lower;
    throw std::invalid_argument("--tail must be upper or lower, got " + s);
}

Side parse_side(const std::string& s) {
    if (s == "lower") return Side::lower_one_sided;
    if (s == "upper") return Side::upper_one_sided;
    if (s == "two-sided") return Side::two_sided;
    throw std::invalid_argument("--side must be lower, upper, or two-sided, got " + s);
}

Method parse_count_method(const std::string& s) {
    static const std::map<std::string, Method> names{
        {"delta", Method::delta},
        {"lrt", Method::lrt},
        {"koopman", Method::koopman},
        {"wilson", Method::wilson},
        {"wang-shan", Method::wang_shan},
        {"boot-normal", Method::boot_normal},
        {"boot-percentile", Method::boot_percentile},
        {"boot-basic", Method::boot_basic},
        {"boot-studentized", Method::boot_studentized},
        {"boot-bca", Method::boot_bca},
    };
    const auto it = names.find(s);
    if (it == names.end()) {
        throw std::invalid_argument("unknown method: " + s +
                                    " (expected delta, lrt, koopman, wilson, wang-shan, or "
                                    "boot-normal/percentile/basic/studentized/bca)");
    }
    return it->second;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& tok, const std::string& what) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (tok.empty() || end != tok.c_str() + tok.size()) {
        throw std::invalid_argument(what + " is not a number: " + tok);
    }
    return v;
}

int parse_int(const std::string& tok, const std::string& what) {
    char* end = nullptr;
    const long v = std::strtol(tok.c_str(), &end, 10);
    if (tok.empty() || end != tok.c_str() + tok.size()) {
        throw std::invalid_argument(what + " is not an integer: " + tok);
    }
    return static_cast<int>(v);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open input file: " + path);
    return parse_dataset(in);
}

// ---------------------------------------------------------------------------
// Shared input plumbing: every data-consuming subcommand reads the same file
// format and supports the same explicit anomaly preprocessing.

struct InputArgs {
    std::string input;
    std::string anomaly; // "", "subtract", or "divide"
    std::string reference;
};

void add_input_options(CLI::App* cmd, InputArgs& args, bool required) {
    auto* opt = cmd->add_option("--input", args.input, "input records file");
    if (required) opt->required();
    cmd->add_option("--anomaly", args.anomaly,
                    "preprocess values relative to --reference: subtract or divide");
    cmd->add_option("--reference", args.reference,
                    "reference-period records file for --anomaly");
}

Dataset load_input(const InputArgs& args) {
    Dataset data = load_dataset(args.input);
    if (args.anomaly.empty() && args.reference.empty()) return data;
    if (args.anomaly.empty() || args.reference.empty()) {
        throw std::invalid_argument("--anomaly and --reference must be given together");
    }
    AnomalyMode mode;
    if (args.anomaly == "subtract") {
        mode = AnomalyMode::subtract;
    } else if (args.anomaly == "divide") {
        mode = AnomalyMode::divide;
    } else {
        throw std::invalid_argument("--anomaly must be subtract or divide, got " +
                                    args.anomaly);
    }
    const Dataset reference = load_dataset(args.reference);
    apply_anomaly(data, mode, dataset_mean(reference));
    return data;
}

std::string default_table_dir() {
    const char* env = std::getenv("RRCI_TABLE_DIR");
    return env == nullptr ? std::string() : std::string(env);
}

// Load the lookup tables an exact-method interval needs (factual->counter
// and mirrored) from the table directory, allowing the direct construction
// to stand in for small ensembles when no file exists.
struct WsTables {
    std::optional<WangShanTable> fc;
    std::optional<WangShanTable> cf;
};

WsTables load_ws_tables(const std::string& dir, int n_f, int n_c, double side_level) {
    WsTables out;
    auto try_load = [&](int a, int b) -> std::optional<WangShanTable> {
        if (dir.empty()) return std::nullopt;
        const std::filesystem::path path =
            std::filesystem::path(dir) / wang_shan_table_filename(a, b, side_level);
        if (!std::filesystem::exists(path)) return std::nullopt;
        return load_wang_shan_table(path.string());
    };
    out.fc = try_load(n_f, n_c);
    if (n_f == n_c) {
        out.cf = out.fc;
    } else {
        out.cf = try_load(n_c, n_f);
    }
    const int n_max = std::max(n_f, n_c);
    if (n_max > 50 && (!out.fc || !out.cf)) {
        std::string msg = "wang-shan needs a prebuilt table for this ensemble size; expected ";
        msg += wang_shan_table_filename(n_f, n_c, side_level);
        if (n_f != n_c) msg += " and " + wang_shan_table_filename(n_c, n_f, side_level);
        msg += dir.empty() ? " (set --table-dir or RRCI_TABLE_DIR)" : " under " + dir;
        throw InfeasibleSizeError(msg);
    }
    return out;
}

// ---------------------------------------------------------------------------
// rr-ci: one interval from counts or from raw member values.

struct RrCiArgs {
    InputArgs input;
    std::string counts;
    double cutoff = 0.0;
    bool cutoff_set = false;
    std::string tail = "upper";
    std::string method = "koopman";
    double level = 0.90;
    std::string side = "two-sided";
    std::uint64_t seed = 1;
    int n_b = 1000;
    std::string table_dir = default_table_dir();
};

CountPair counts_from_args(const RrCiArgs& args) {
    if (!args.counts.empty()) {
        if (!args.input.input.empty()) {
            throw std::invalid_argument("give either --input or --counts, not both");
        }
        const auto parts = split_list(args.counts);
        if (parts.size() != 4) {
            throw std::invalid_argument("--counts expects yF,nF,yC,nC");
        }
        return CountPair{BinomialCount{parse_int(parts[0], "yF"), parse_int(parts[1], "nF")},
                         BinomialCount{parse_int(parts[2], "yC"), parse_int(parts[3], "nC")}};
    }
    if (args.input.input.empty()) {
        throw std::invalid_argument("one of --input or --counts is required");
    }
    if (!args.cutoff_set) {
        throw std::invalid_argument("--cutoff is required with --input");
    }
    const Dataset data = load_input(args.input);
    const EventDefinition event{args.cutoff, parse_tail(args.tail)};
    return ScenarioPair::from_samples(scenario_sample(data, Scenario::factual),
                                      scenario_sample(data, Scenario::counterfactual))
        .to_counts(event);
}

RatioInterval count_interval(Method method, const CountPair& data, double level, Side side,
                             std::uint64_t seed, int n_b, const std::string& table_dir) {
    if (is_bootstrap_method(method)) {
        BootstrapConfig cfg;
        cfg.n_b = n_b;
        cfg.seed = seed;
        cfg.policy = DegeneratePolicy::drop_and_flag;
        const BootstrapDistribution dist = resample_pair(data, cfg);
        switch (method) {
            case Method::boot_normal: return boot_normal(dist, level, side);
            case Method::boot_percentile: return boot_percentile(dist, level, side);
            case Method::boot_basic: return boot_basic(dist, level, side);
            case Method::boot_studentized: return boot_studentized(dist, level, side);
            default: return boot_bca(dist, level, side);
        }
    }
    if (method == Method::wang_shan) {
        const double side_level = side == Side::two_sided ? 0.5 * (1.0 + level) : level;
        const WsTables tables =
            load_ws_tables(table_dir, data.factual.trials, data.counterfactual.trials,
                           side_level);
        return wang_shan_interval(data, level, side, tables.fc ? &*tables.fc : nullptr,
                                  tables.cf ? &*tables.cf : nullptr);
    }
    switch (method) {
        case Method::delta: return delta_interval(data, level, side);
        case Method::lrt: return lrt_interval(data, level, side);
        case Method::koopman: return koopman_interval(data, level, side);
        default: return wilson_interval(data, level, side);
    }
}

void print_interval(std::ostream& out, const RatioInterval& iv) {
    out << "method " << method_name(iv.method) << "\n";
    out << "level " << fmt(iv.level) << "\n";
    const char* side = iv.side == Side::two_sided
                           ? "two-sided"
                           : (iv.side == Side::lower_one_sided ? "lower" : "upper");
    out << "side " << side << "\n";
    out << "estimate " << fmt(iv.estimate) << "\n";
    out << "lower " << fmt(iv.lower) << "\n";
    out << "upper " << fmt(iv.upper) << "\n";
    for (const auto& [key, value] : iv.diagnostics) {
        out << "diag." << key << " " << fmt(value) << "\n";
    }
}

int cmd_rr_ci(const RrCiArgs& args) {
    const CountPair data = counts_from_args(args);
    const Method method = parse_count_method(args.method);
    const Side side = parse_side(args.side);
    const RatioInterval iv =
        count_interval(method, data, args.level, side, args.seed, args.n_b, args.table_dir);
    std::cout << "y_factual " << data.factual.events << "\n"
              << "n_factual " << data.factual.trials << "\n"
              << "y_counterfactual " << data.counterfactual.events << "\n"
              << "n_counterfactual " << data.counterfactual.trials << "\n";
    print_interval(std::cout, iv);
    return kExitSuccess;
}

// ---------------------------------------------------------------------------
// sweep: the same interval across a ladder of event cutoffs.

struct SweepArgs {
    InputArgs input;
    std::string cutoffs;
    std::string tail = "upper";
    std::string method = "koopman";
    double level = 0.90;
    std::string side = "two-sided";
    std::uint64_t seed = 1;
    int n_b = 1000;
    std::string table_dir = default_table_dir();
};

int cmd_sweep(const SweepArgs& args) {
    const Dataset data = load_input(args.input);
    const Tail tail = parse_tail(args.tail);
    const Method method = parse_count_method(args.method);
    const Side side = parse_side(args.side);
    const ScenarioPair pair =
        ScenarioPair::from_samples(scenario_sample(data, Scenario::factual),
                                   scenario_sample(data, Scenario::counterfactual));

    std::vector<double> cutoffs;
    for (const auto& tok : split_list(args.cutoffs)) {
        cutoffs.push_back(parse_double(tok, "--cutoffs entry"));
    }
    if (cutoffs.empty()) throw std::invalid_argument("--cutoffs must name at least one value");

    std::cout << "cutoff,method,level,side,y_factual,n_factual,y_counterfactual,"
                 "n_counterfactual,estimate,lower,upper,status\n";
    for (double cutoff : cutoffs) {
        const CountPair counts = pair.to_counts(EventDefinition{cutoff, tail});
        std::cout << fmt(cutoff) << ',' << method_name(method) << ',' << fmt(args.level)
                  << ',' << args.side << ',' << counts.factual.events << ','
                  << counts.factual.trials << ',' << counts.counterfactual.events << ','
                  << counts.counterfactual.trials << ',';
        try {
            const RatioInterval iv = count_interval(method, counts, args.level, side,
                                                    args.seed, args.n_b, args.table_dir);
            std::cout << fmt(iv.estimate) << ',' << fmt(iv.lower) << ',' << fmt(iv.upper)
                      << ",ok\n";
        } catch (const NotComputableError&) {
            const ExtReal est = risk_ratio_estimate(counts.factual.proportion(),
                                                    counts.counterfactual.proportion());
            std::cout << fmt(est) << ",nan,nan,not-computable\n";
        }
    }
    return kExitSuccess;
}

// ---------------------------------------------------------------------------
// fit-eva: tail fits for both scenarios plus the profile-likelihood interval.

struct FitEvaArgs {
    InputArgs input;
    double cutoff = 0.0;
    std::string tail = "upper";
    double threshold_quantile = -1.0; // percent; default depends on the tail
    double n_blocks = 0.0;            // 0 = one block per member
    double level = 0.90;
    std::string side = "two-sided";
};

// Empirical quantile at q as the ceil(q*n) order statistic (1-based).
double sample_quantile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double m = static_cast<double>(values.size());
    const auto r = static_cast<std::size_t>(std::clamp(std::ceil(q * m), 1.0, m));
    return values[r - 1];
}

int cmd_fit_eva(const FitEvaArgs& args) {
    const Tail tail = parse_tail(args.tail);
    double quantile = args.threshold_quantile;
    if (quantile < 0.0) quantile = tail == Tail::upper ? 90.0 : 20.0;
    if (!(quantile > 0.0 && quantile < 100.0)) {
        throw std::invalid_argument("--threshold-quantile must lie strictly between 0 and "
                                    "100 (percent)");
    }
    if (args.n_blocks < 0.0) {
        throw std::invalid_argument("--n-blocks must be positive (or 0 for one block per "
                                    "member)");
    }

    const Dataset data = load_input(args.input);
    // Lower-tail events are analyzed on the negated scale, where they are
    // upper-tail; thresholds and cutoffs map along.
    auto working = [&](const RawSample& s) {
        if (tail == Tail::upper) return s;
        std::vector<double> neg(s.values.size());
        std::transform(s.values.begin(), s.values.end(), neg.begin(),
                       [](double v) { return -v; });
        return RawSample(std::move(neg));
    };
    const RawSample factual = working(scenario_sample(data, Scenario::factual));
    const RawSample counterfactual = working(scenario_sample(data, Scenario::counterfactual));
    const double cutoff = tail == Tail::upper ? args.cutoff : -args.cutoff;
    const EventDefinition event{cutoff, Tail::upper};
    const double q_work = tail == Tail::upper ? quantile / 100.0 : 1.0 - quantile / 100.0;
    const double u_f = sample_quantile(factual.values, q_work);
    const double u_c = sample_quantile(counterfactual.values, q_work);

    std::cout << "tail " << args.tail << "\n";
    std::cout << "cutoff " << fmt(args.cutoff) << "\n";
    std::cout << "threshold_quantile " << fmt(quantile) << "\n";

    bool all_converged = true;
    auto report_fit = [&](const char* name, const RawSample& sample, double threshold)
        -> PotFit {
        const double n_blocks =
            args.n_blocks > 0.0 ? args.n_blocks : static_cast<double>(sample.size());
        const PotFit fit = fit_pot(sample, threshold, n_blocks);
        const double sign = tail == Tail::upper ? 1.0 : -1.0;
        std::cout << name << ".threshold " << fmt(sign * threshold) << "\n";
        std::cout << name << ".n_blocks " << fmt(fit.n_blocks) << "\n";
        std::cout << name << ".n_exceedances " << fit.n_exceedances << "\n";
        std::cout << name << ".mu " << fmt(sign * fit.params.mu) << "\n";
        std::cout << name << ".sigma " << fmt(fit.params.sigma) << "\n";
        std::cout << name << ".xi " << fmt(fit.params.xi) << "\n";
        std::cout << name << ".log_likelihood " << fmt(fit.log_likelihood) << "\n";
        std::cout << name << ".converged " << (fit.converged ? 1 : 0) << "\n";
        if (fit.converged) {
            const auto p = eva_probability(fit, event);
            std::cout << name << ".p_event " << fmt(p.value) << "\n";
            std::cout << name << ".p_event_extrapolated "
                      << (p.below_threshold_extrapolation ? 1 : 0) << "\n";
        } else {
            all_converged = false;
        }
        return fit;
    };
    report_fit("factual", factual, u_f);
    report_fit("counterfactual", counterfactual, u_c);
    if (!all_converged) {
        std::cerr << "rrci: a tail fit did not converge; no interval computed\n";
        return kExitConvergence;
    }

    const RatioInterval iv = eva_lrt_interval(factual, counterfactual, event, u_f, u_c,
                                              args.level, parse_side(args.side),
                                              args.n_blocks, args.n_blocks);
    print_interval(std::cout, iv);
    return kExitSuccess;
}

// ---------------------------------------------------------------------------
// time-average: multi-year ensembles, year-blocked uncertainty.

struct TimeAverageArgs {
    InputArgs input;
    double cutoff = 0.0;
    std::string tail = "upper";
    double level = 0.90;
    std::string side = "two-sided";
    std::string boot_method;
    std::uint64_t seed = 1;
    int n_b = 1000;
};

int cmd_time_average(const TimeAverageArgs& args) {
    const Dataset data = load_input(args.input);
    const EventDefinition event{args.cutoff, parse_tail(args.tail)};
    const Side side = parse_side(args.side);
    const EnsembleSeries factual = scenario_series(data, Scenario::factual);
    const EnsembleSeries counterfactual = scenario_series(data, Scenario::counterfactual);

    const auto p_f = time_averaged_p(factual, event);
    const auto p_c = time_averaged_p(counterfactual, event);
    std::cout << "n_years " << factual.n_years() << "\n";
    std::cout << "members_per_year_factual " << factual.members_per_year << "\n";
    std::cout << "members_per_year_counterfactual " << counterfactual.members_per_year
              << "\n";
    std::cout << "p_factual " << fmt(p_f.value) << "\n";
    std::cout << "p_counterfactual " << fmt(p_c.value) << "\n";

    // Per-year exceedance counts and ratio: the year-resolved view that the
    // pooled number averages over.
    const auto counts_f = factual.per_year_counts(event);
    const auto counts_c = counterfactual.per_year_counts(event);
    for (int t = 0; t < factual.n_years(); ++t) {
        const ExtReal rr_t = risk_ratio_estimate(counts_f[static_cast<std::size_t>(t)].proportion(),
                                                 counts_c[static_cast<std::size_t>(t)].proportion());
        std::cout << "per_year " << factual.years[static_cast<std::size_t>(t)] << " "
                  << counts_f[static_cast<std::size_t>(t)].events << " "
                  << counts_c[static_cast<std::size_t>(t)].events << " " << fmt(rr_t) << "\n";
    }

    const RatioInterval iv =
        time_averaged_delta_interval(factual, counterfactual, event, args.level, side);
    print_interval(std::cout, iv);

    if (!args.boot_method.empty()) {
        const Method method = parse_count_method(args.boot_method);
        if (!is_bootstrap_method(method)) {
            throw std::invalid_argument("--boot-method must be one of the boot-* methods");
        }
        BootstrapConfig cfg;
        cfg.n_b = args.n_b;
        cfg.seed = args.seed;
        cfg.policy = DegeneratePolicy::drop_and_flag;
        const BootstrapDistribution dist =
            year_block_bootstrap(factual, counterfactual, event, cfg);
        RatioInterval boot;
        switch (method) {
            case Method::boot_normal: boot = boot_normal(dist, args.level, side); break;
            case Method::boot_percentile:
                boot = boot_percentile(dist, args.level, side);
                break;
            case Method::boot_basic: boot = boot_basic(dist, args.level, side); break;
            case Method::boot_studentized:
                boot = boot_studentized(dist, args.level, side);
                break;
            default: boot = boot_bca(dist, args.level, side); break;
        }
        std::cout << "boot.method " << method_name(boot.method) << "\n";
        std::cout << "boot.estimate " << fmt(boot.estimate) << "\n";
        std::cout << "boot.lower " << fmt(boot.lower) << "\n";
        std::cout << "boot.upper " << fmt(boot.upper) << "\n";
        for (const auto& [key, value] : boot.diagnostics) {
            std::cout << "boot.diag." << key << " " << fmt(value) << "\n";
        }
    }
    return kExitSuccess;
}

// ---------------------------------------------------------------------------
// simulate: the coverage study, written as a long-format metrics file.

struct SimulateArgs {
    std::string n_list = "25,50,100,400";
    std::string rr_list = "1,2,4,8,16";
    std::string pf_list = "0.01,0.025,0.05,0.1,0.2";
    std::string methods = "delta,lrt,koopman,wilson";
    int reps = 1000;
    double level = 0.95;
    std::uint64_t seed = 1;
    int n_b = 1000;
    std::string table_dir = default_table_dir();
    std::string out;
};

int cmd_simulate(const SimulateArgs& args) {
    ScenarioGrid grid;
    grid.n_values.clear();
    for (const auto& tok : split_list(args.n_list)) {
        grid.n_values.push_back(parse_int(tok, "--n entry"));
    }
    grid.rr_values.clear();
    for (const auto& tok : split_list(args.rr_list)) {
        grid.rr_values.push_back(parse_double(tok, "--rr entry"));
    }
    grid.pF_values.clear();
    for (const auto& tok : split_list(args.pf_list)) {
        grid.pF_values.push_back(parse_double(tok, "--pf entry"));
    }
    grid.replications = args.reps;
    grid.level = args.level;
    grid.seed = args.seed;
    grid.validate();

    std::vector<Method> methods;
    for (const auto& tok : split_list(args.methods)) {
        methods.push_back(parse_count_method(tok));
    }

    // The exact method runs off prebuilt lookup tables; resolve them now so
    // a missing one fails before any sampling starts.
    std::vector<WangShanTable> storage;
    std::map<int, const WangShanTable*> tables;
    if (std::find(methods.begin(), methods.end(), Method::wang_shan) != methods.end()) {
        std::string missing;
        storage.reserve(grid.n_values.size());
        for (int n : grid.n_values) {
            const std::string name = wang_shan_table_filename(n, n, grid.level);
            const std::filesystem::path path = std::filesystem::path(args.table_dir) / name;
            if (args.table_dir.empty() || !std::filesystem::exists(path)) {
                if (!missing.empty()) missing += ", ";
                missing += name;
                continue;
            }
            storage.push_back(load_wang_shan_table(path.string()));
            tables[n] = &storage.back();
        }
        if (!missing.empty()) {
            throw InfeasibleSizeError(
                "wang-shan tables not found: " + missing +
                (args.table_dir.empty() ? " (set --table-dir or RRCI_TABLE_DIR)"
                                        : " under " + args.table_dir));
        }
    }

    const auto metrics = run_grid(grid, methods, tables, args.n_b);

    // Stage the output and rename into place so readers never see a partial
    // file.
    const std::filesystem::path out_path(args.out);
    if (out_path.has_parent_path()) {
        std::filesystem::create_directories(out_path.parent_path());
    }
    const std::filesystem::path tmp_path(args.out + ".tmp");
    {
        std::ofstream out(tmp_path);
        if (!out) throw std::runtime_error("cannot open for writing: " + args.out);
        emit_figures(metrics, out);
    }
    std::filesystem::rename(tmp_path, out_path);
    std::cout << "wrote " << args.out << " (" << metrics.size() << " method-cell rows)\n";
    return kExitSuccess;
}

// ---------------------------------------------------------------------------
// build-ws-table: precompute the exact-method lookup table.

struct BuildWsTableArgs {
    int nf = 0;
    int nc = 0;
    double level = 0.0;
    std::string out;
    bool quiet = false;
};

int cmd_build_ws_table(const BuildWsTableArgs& args) {
    if (args.nf < 1 || args.nc < 1) {
        std::cerr << "rrci: --nf and --nc must be at least 1\n";
        return kExitParse;
    }
    if (!(args.level > 0.0 && args.level < 1.0)) {
        std::cerr << "rrci: --level must lie strictly between 0 and 1\n";
        return kExitParse;
    }
    const std::filesystem::path out_path(args.out);
    if (out_path.has_parent_path()) {
        std::filesystem::create_directories(out_path.parent_path());
    }

    const std::size_t total =
        static_cast<std::size_t>(args.nf + 1) * static_cast<std::size_t>(args.nc + 1);
    const auto start = std::chrono::steady_clock::now();
    auto progress = [&](std::size_t step, riskratio::ws_detail::Candidate cell, double bound) {
        if (args.quiet) return;
        if ((step + 1) % 100 != 0 && step + 1 != total) return;
        const auto elapsed = std::chrono::duration_cast<std::chrono::seconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        std::fprintf(stderr, "build-ws-table: step %zu/%zu cell (%d, %d) bound %.6g [%llds]\n",
                      step + 1, total, cell.a, cell.b, bound,
                      static_cast<long long>(elapsed));
    };

    const riskratio::WangShanTable table =
        riskratio::build_wang_shan_table(args.nf, args.nc, args.level, progress);
    riskratio::save_wang_shan_table(table, args.out);
    std::cout << "wrote " << args.out << " (nF=" << table.nF << " nC=" << table.nC
              << " level=" << table.level << " cells=" << total << ")\n";
    return kExitSuccess;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"risk ratios and confidence intervals for event counts from model ensembles"};
    app.require_subcommand(1);

    RrCiArgs rr_args;
    CLI::App* rr_ci = app.add_subcommand(
        "rr-ci", "risk ratio and confidence interval from counts or member values");
    add_input_options(rr_ci, rr_args.input, false);
    rr_ci->add_option("--counts", rr_args.counts, "direct counts as yF,nF,yC,nC");
    rr_ci->add_option("--cutoff", rr_args.cutoff, "event cutoff in value units")
        ->each([&](const std::string&) { rr_args.cutoff_set = true; });
    rr_ci->add_option("--tail", rr_args.tail, "event tail: upper or lower");
    rr_ci->add_option("--method", rr_args.method, "interval method (default koopman)");
    rr_ci->add_option("--level", rr_args.level, "confidence level (default 0.90)");
    rr_ci->add_option("--side", rr_args.side, "lower, upper, or two-sided");
    rr_ci->add_option("--seed", rr_args.seed, "bootstrap seed");
    rr_ci->add_option("--nb", rr_args.n_b, "bootstrap replicates (default 1000)");
    rr_ci->add_option("--table-dir", rr_args.table_dir,
                      "directory of precomputed wang-shan tables (default RRCI_TABLE_DIR)");

    SweepArgs sweep_args;
    CLI::App* sweep =
        app.add_subcommand("sweep", "one interval per event cutoff, as a csv table");
    add_input_options(sweep, sweep_args.input, true);
    sweep->add_option("--cutoffs", sweep_args.cutoffs, "comma-separated cutoff values")
        ->required();
    sweep->add_option("--tail", sweep_args.tail, "event tail: upper or lower");
    sweep->add_option("--method", sweep_args.method, "interval method (default koopman)");
    sweep->add_option("--level", sweep_args.level, "confidence level (default 0.90)");
    sweep->add_option("--side", sweep_args.side, "lower, upper, or two-sided");
    sweep->add_option("--seed", sweep_args.seed, "bootstrap seed");
    sweep->add_option("--nb", sweep_args.n_b, "bootstrap replicates (default 1000)");
    sweep->add_option("--table-dir", sweep_args.table_dir,
                      "directory of precomputed wang-shan tables (default RRCI_TABLE_DIR)");

    FitEvaArgs eva_args;
    CLI::App* fit_eva = app.add_subcommand(
        "fit-eva", "extreme-value tail fits and the profile-likelihood ratio interval");
    add_input_options(fit_eva, eva_args.input, true);
    fit_eva->add_option("--cutoff", eva_args.cutoff, "event cutoff in value units")
        ->required();
    fit_eva->add_option("--tail", eva_args.tail, "event tail: upper or lower");
    fit_eva->add_option("--threshold-quantile", eva_args.threshold_quantile,
                        "fit threshold percentile (default 90 upper / 20 lower)");
    fit_eva->add_option("--n-blocks", eva_args.n_blocks,
                        "blocks per ensemble (default: one block per member)");
    fit_eva->add_option("--level", eva_args.level, "confidence level (default 0.90)");
    fit_eva->add_option("--side", eva_args.side, "lower, upper, or two-sided");

    TimeAverageArgs ta_args;
    CLI::App* time_average = app.add_subcommand(
        "time-average", "multi-year series: pooled interval plus per-year ratios");
    add_input_options(time_average, ta_args.input, true);
    time_average->add_option("--cutoff", ta_args.cutoff, "event cutoff in value units")
        ->required();
    time_average->add_option("--tail", ta_args.tail, "event tail: upper or lower");
    time_average->add_option("--level", ta_args.level, "confidence level (default 0.90)");
    time_average->add_option("--side", ta_args.side, "lower, upper, or two-sided");
    time_average->add_option("--boot-method", ta_args.boot_method,
                             "also report a year-block bootstrap interval (boot-*)");
    time_average->add_option("--seed", ta_args.seed, "bootstrap seed");
    time_average->add_option("--nb", ta_args.n_b, "bootstrap replicates (default 1000)");

    SimulateArgs sim_args;
    CLI::App* simulate =
        app.add_subcommand("simulate", "coverage study over a scenario grid");
    simulate->add_option("--n", sim_args.n_list, "ensemble sizes (default 25,50,100,400)");
    simulate->add_option("--rr", sim_args.rr_list, "true risk ratios (default 1,2,4,8,16)");
    simulate->add_option("--pf", sim_args.pf_list,
                         "factual probabilities (default 0.01,0.025,0.05,0.1,0.2)");
    simulate->add_option("--methods", sim_args.methods,
                         "methods to evaluate (default delta,lrt,koopman,wilson)");
    simulate->add_option("--reps", sim_args.reps, "replications per cell (default 1000)");
    simulate->add_option("--level", sim_args.level, "one-sided level (default 0.95)");
    simulate->add_option("--seed", sim_args.seed, "simulation seed");
    simulate->add_option("--nb", sim_args.n_b, "bootstrap replicates per dataset");
    simulate->add_option("--table-dir", sim_args.table_dir,
                         "directory of precomputed wang-shan tables (default RRCI_TABLE_DIR)");
    simulate->add_option("--out", sim_args.out, "metrics output file")->required();

    BuildWsTableArgs ws_args;
    CLI::App* build_ws = app.add_subcommand(
        "build-ws-table", "precompute the exact-method lower-bound lookup table");
    build_ws->add_option("--nf", ws_args.nf, "factual ensemble size")->required();
    build_ws->add_option("--nc", ws_args.nc, "counterfactual ensemble size")->required();
    build_ws->add_option("--level", ws_args.level, "one-sided confidence level, e.g. 0.95")
        ->required();
    build_ws->add_option("--out", ws_args.out, "output file path")->required();
    build_ws->add_flag("--quiet", ws_args.quiet, "suppress progress output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitParse;
    }

    try {
        if (rr_ci->parsed()) return cmd_rr_ci(rr_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args);
        if (fit_eva->parsed()) return cmd_fit_eva(eva_args);
        if (time_average->parsed()) return cmd_time_average(ta_args);
        if (simulate->parsed()) return cmd_simulate(sim_args);
        if (build_ws->parsed()) return cmd_build_ws_table(ws_args);
    } catch (const riskratio::InfeasibleSizeError& e) {
        std::cerr << "rrci: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const riskratio::ConvergenceError& e) {
        std::cerr << "rrci: " << e.what() << "\n";
        return kExitConvergence;
    } catch (const riskratio::ParseError& e) {
        std::cerr << "rrci: " << e.what() << "\n";
        return kExitParse;
    } catch (const riskratio::NotComputableError& e) {
        std::cerr << "rrci: " << e.what() << "\n";
        return kExitNotComputable;
    } catch (const std::invalid_argument& e) {
        std::cerr << "rrci: " << e.what() << "\n";
        return kExitParse;
    } catch (const std::domain_error& e) {
        std::cerr << "rrci: " << e.what() << "\n";
        return kExitParse;
    } catch (const std::exception& e) {
        std::cerr << "rrci: " << e.what() << "\n";
        return 1;
    }
    return kExitSuccess;
}
