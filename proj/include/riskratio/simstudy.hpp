#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "riskratio/bootstrap.hpp"
#include "riskratio/core.hpp"
#include "riskratio/math.hpp"
#include "riskratio/ratio_intervals.hpp"
#include "riskratio/rng.hpp"
#include "riskratio/wang_shan.hpp"

namespace riskratio {

// One synthetic-data configuration: ensemble size, true risk ratio, and the
// factual exceedance probability (the counterfactual one is p_f / rr).
struct GridCell {
    int n = 0;
    double rr = 1.0;
    double p_f = 0.0;

    double p_c() const { return p_f / rr; }
};

// Cartesian scenario grid for the coverage study, plus the sampling budget.
// `level` is the one-sided level at which both the lower and the upper
// bound of every method are evaluated.
struct ScenarioGrid {
    std::vector<int> n_values{25, 50, 100, 400};
    std::vector<double> rr_values{1.0, 2.0, 4.0, 8.0, 16.0};
    std::vector<double> pF_values{0.01, 0.025, 0.05, 0.10, 0.20};
    int replications = 1000;
    double level = 0.95;
    std::uint64_t seed = 1;

    void validate() const {
        if (n_values.empty() || rr_values.empty() || pF_values.empty()) {
            throw std::domain_error("scenario grid must not be empty along any axis");
        }
        for (int n : n_values) {
            if (n < 1) throw std::domain_error("scenario grid needs positive ensemble sizes");
        }
        for (double rr : rr_values) {
            if (!(rr > 0.0) || !std::isfinite(rr)) {
                throw std::domain_error("scenario grid risk ratios must be positive finite");
            }
        }
        for (double p : pF_values) {
            if (!(p > 0.0 && p < 1.0)) {
                throw std::domain_error("scenario grid probabilities must lie in (0, 1)");
            }
        }
        for (double rr : rr_values) {
            for (double p : pF_values) {
                if (p / rr > 1.0) {
                    throw std::domain_error(
                        "scenario grid cell has a counterfactual probability above one");
                }
            }
        }
        if (replications < 1) throw std::domain_error("replications must be positive");
        validate_level(level);
    }

    // Cells in deterministic n-major, then rr, then p_f order.
    std::vector<GridCell> cells() const {
        std::vector<GridCell> out;
        out.reserve(n_values.size() * rr_values.size() * pF_values.size());
        for (int n : n_values) {
            for (double rr : rr_values) {
                for (double p : pF_values) out.push_back(GridCell{n, rr, p});
            }
        }
        return out;
    }
};

// Aggregated performance of one method in one cell. Coverage is conditional
// on the lower bound being computable (replicates where it is not are
// excluded and reported via prop_not_computable); the integer tallies make
// the bookkeeping auditable.
struct MethodMetrics {
    Method method = Method::delta;
    GridCell cell;
    double coverage_lower = 0.0;
    double coverage_upper = 0.0;
    ExtReal median_lower_bound = ExtReal::undefined();
    double prop_not_computable = 0.0;
    double mc_standard_error = 0.0; // binomial se of coverage_lower
    int n_computable = 0;
    int n_not_computable = 0;
    int n_covered_lower = 0;
    int n_covered_upper = 0;
    // Bootstrap methods only: mean fraction of resamples dropped for a zero
    // count, averaged over computable replicates.
    double mean_degenerate_fraction = 0.0;
};

namespace sim_detail {

// Outcome of evaluating one method's two one-sided bounds at one dataset.
struct BoundOutcome {
    bool lower_ok = false;
    double lower = 0.0;
    bool upper_ok = false;
    double upper = kInf;
    double degenerate_fraction = 0.0;
};

inline RatioInterval closed_form_interval(Method m, const CountPair& data, double level,
                                          Side side, const WangShanTable* ws_table) {
    switch (m) {
        case Method::delta: return delta_interval(data, level, side);
        case Method::lrt: return lrt_interval(data, level, side);
        case Method::koopman: return koopman_interval(data, level, side);
        case Method::wilson: return wilson_interval(data, level, side);
        case Method::wang_shan:
            return wang_shan_interval(data, level, side, ws_table, ws_table);
        default: throw std::logic_error("not a count-based closed-form method");
    }
}

inline BoundOutcome evaluate_deterministic(Method m, const CountPair& data, double level,
                                           const WangShanTable* ws_table) {
    BoundOutcome out;
    try {
        out.lower = closed_form_interval(m, data, level, Side::lower_one_sided, ws_table).lower;
        out.lower_ok = true;
    } catch (const NotComputableError&) {
    }
    try {
        out.upper = closed_form_interval(m, data, level, Side::upper_one_sided, ws_table).upper;
        out.upper_ok = true;
    } catch (const NotComputableError&) {
    }
    return out;
}

inline BoundOutcome evaluate_bootstrap(Method m, const BootstrapDistribution& dist,
                                       double level) {
    BoundOutcome out;
    out.degenerate_fraction =
        static_cast<double>(dist.n_degenerate) / static_cast<double>(dist.replicates.size());
    auto bound = [&](Side side) -> RatioInterval {
        switch (m) {
            case Method::boot_normal: return boot_normal(dist, level, side);
            case Method::boot_percentile: return boot_percentile(dist, level, side);
            case Method::boot_basic: return boot_basic(dist, level, side);
            case Method::boot_studentized: return boot_studentized(dist, level, side);
            case Method::boot_bca: return boot_bca(dist, level, side);
            default: throw std::logic_error("not a bootstrap method");
        }
    };
    try {
        out.lower = bound(Side::lower_one_sided).lower;
        out.lower_ok = true;
    } catch (const NotComputableError&) {
    }
    try {
        out.upper = bound(Side::upper_one_sided).upper;
        out.upper_ok = true;
    } catch (const NotComputableError&) {
    }
    return out;
}

// Per-cell stream derivation keyed by the cell's content rather than its
// position, so a cell's metrics do not depend on what else is in the grid.
inline SplitMix cell_stream(std::uint64_t seed, const GridCell& cell, std::uint64_t rep,
                            std::uint64_t role) {
    return SplitMix::derive(seed, {static_cast<std::uint64_t>(cell.n),
                                   std::bit_cast<std::uint64_t>(cell.rr),
                                   std::bit_cast<std::uint64_t>(cell.p_f), rep, role});
}

// Running tallies for one method in one cell.
struct Tally {
    int covered_lower = 0;
    int covered_upper = 0;
    int computable = 0;
    int upper_computable = 0;
    int not_computable = 0;
    double degenerate_sum = 0.0;
    std::vector<double> lower_bounds;
};

inline MethodMetrics finalize(Method m, const GridCell& cell, int replications, Tally& t) {
    MethodMetrics out;
    out.method = m;
    out.cell = cell;
    out.n_computable = t.computable;
    out.n_not_computable = t.not_computable;
    out.n_covered_lower = t.covered_lower;
    out.n_covered_upper = t.covered_upper;
    out.prop_not_computable =
        static_cast<double>(t.not_computable) / static_cast<double>(replications);
    if (t.computable > 0) {
        const double c = static_cast<double>(t.covered_lower) / t.computable;
        out.coverage_lower = c;
        out.mc_standard_error = std::sqrt(c * (1.0 - c) / t.computable);
        out.mean_degenerate_fraction = t.degenerate_sum / t.computable;
        std::sort(t.lower_bounds.begin(), t.lower_bounds.end());
        out.median_lower_bound =
            ExtReal::finite(boot_detail::order_statistic(t.lower_bounds, 0.5));
    }
    if (t.upper_computable > 0) {
        out.coverage_upper = static_cast<double>(t.covered_upper) / t.upper_computable;
    }
    return out;
}

} // namespace sim_detail

// Monte Carlo coverage study: for every cell, draw `replications`
// independent count pairs from Binomial(n, p_F) x Binomial(n, p_C) and
// evaluate each requested method's one-sided lower and upper bounds at the
// grid level. Replicates whose lower bound is not computable are excluded
// from coverage and reported via prop_not_computable. Deterministic given
// the seed, with per-cell streams, so results do not depend on evaluation
// order or on which other cells are present. Wang-Shan cells need a
// prebuilt table per ensemble size, passed by size; anything missing fails
// fast up front.
inline std::vector<MethodMetrics> run_grid(
    const ScenarioGrid& grid, const std::vector<Method>& methods,
    const std::map<int, const WangShanTable*>& ws_tables = {}, int bootstrap_n_b = 1000) {
    grid.validate();
    if (methods.empty()) throw std::domain_error("run_grid needs at least one method");
    bool any_bootstrap = false;
    bool any_ws = false;
    for (Method m : methods) {
        if (is_bootstrap_method(m)) any_bootstrap = true;
        if (m == Method::wang_shan) any_ws = true;
        if (m == Method::eva_lrt || m == Method::eva_delta ||
            m == Method::time_averaged_delta) {
            throw std::invalid_argument(std::string("method ") + method_name(m) +
                                        " does not operate on count pairs");
        }
    }
    if (any_ws) {
        std::string missing;
        for (int n : grid.n_values) {
            const auto it = ws_tables.find(n);
            const bool ok = it != ws_tables.end() && it->second != nullptr &&
                            it->second->nF == n && it->second->nC == n &&
                            it->second->level == grid.level;
            if (!ok) {
                if (!missing.empty()) missing += ", ";
                missing += wang_shan_table_filename(n, n, grid.level);
            }
        }
        if (!missing.empty()) {
            throw std::invalid_argument(
                "wang-shan requested but tables are missing or mismatched: " + missing);
        }
    }

    std::vector<MethodMetrics> out;
    for (const GridCell& cell : grid.cells()) {
        const WangShanTable* ws_table =
            any_ws ? ws_tables.at(cell.n) : nullptr;
        std::vector<sim_detail::Tally> tallies(methods.size());
        for (auto& t : tallies) t.lower_bounds.reserve(grid.replications);

        // Deterministic methods depend only on the counts, which repeat
        // heavily, so their bound evaluations are memoized per pair.
        std::vector<std::unordered_map<int, sim_detail::BoundOutcome>> memo(methods.size());

        for (int rep = 0; rep < grid.replications; ++rep) {
            const auto r = static_cast<std::uint64_t>(rep);
            const int y_f =
                sim_detail::cell_stream(grid.seed, cell, r, 0).binomial(cell.n, cell.p_f);
            const int y_c =
                sim_detail::cell_stream(grid.seed, cell, r, 1).binomial(cell.n, cell.p_c());
            const CountPair data{BinomialCount{y_f, cell.n}, BinomialCount{y_c, cell.n}};

            // One shared resampling distribution per replicate; absent when
            // an observed count is zero, in which case every bootstrap bound
            // is not computable.
            BootstrapDistribution boot_dist;
            bool boot_ok = false;
            if (any_bootstrap && y_f > 0 && y_c > 0) {
                BootstrapConfig cfg;
                cfg.n_b = bootstrap_n_b;
                cfg.seed = sim_detail::cell_stream(grid.seed, cell, r, 2).next_u64();
                cfg.policy = DegeneratePolicy::drop_and_flag;
                boot_dist = resample_pair(data, cfg);
                boot_ok = true;
            }

            for (std::size_t mi = 0; mi < methods.size(); ++mi) {
                const Method m = methods[mi];
                sim_detail::BoundOutcome outcome;
                if (is_bootstrap_method(m)) {
                    if (boot_ok) {
                        outcome = sim_detail::evaluate_bootstrap(m, boot_dist, grid.level);
                    } else {
                        outcome.degenerate_fraction = 1.0;
                    }
                } else {
                    const int key = y_f * (cell.n + 1) + y_c;
                    auto hit = memo[mi].find(key);
                    if (hit == memo[mi].end()) {
                        hit = memo[mi]
                                  .emplace(key, sim_detail::evaluate_deterministic(
                                                    m, data, grid.level, ws_table))
                                  .first;
                    }
                    outcome = hit->second;
                }

                auto& t = tallies[mi];
                if (!outcome.lower_ok) {
                    ++t.not_computable;
                    continue;
                }
                ++t.computable;
                t.degenerate_sum += outcome.degenerate_fraction;
                t.lower_bounds.push_back(outcome.lower);
                if (outcome.lower <= cell.rr) ++t.covered_lower;
                if (outcome.upper_ok) {
                    ++t.upper_computable;
                    if (outcome.upper >= cell.rr) ++t.covered_upper;
                }
            }
        }

        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            out.push_back(
                sim_detail::finalize(methods[mi], cell, grid.replications, tallies[mi]));
        }
    }
    return out;
}

// Exact analogue of one run_grid cell for enumerable methods: sums the
// binomial pmf over every (y_F, y_C) outcome instead of sampling.
struct ExactCellResult {
    double coverage = 0.0;           // conditional on computability
    double prop_not_computable = 0.0; // total pmf mass of excluded outcomes
};

namespace sim_detail {

inline std::vector<double> binomial_pmf_row(int n, double p) {
    if (p >= 1.0) {
        std::vector<double> pmf(static_cast<std::size_t>(n) + 1, 0.0);
        pmf.back() = 1.0;
        return pmf;
    }
    std::vector<double> log_choose(static_cast<std::size_t>(n) + 1);
    for (int k = 0; k <= n; ++k) {
        log_choose[static_cast<std::size_t>(k)] = std::lgamma(n + 1.0) -
                                                  std::lgamma(k + 1.0) -
                                                  std::lgamma(n - k + 1.0);
    }
    std::vector<double> pmf(static_cast<std::size_t>(n) + 1);
    for (int k = 0; k <= n; ++k) {
        pmf[static_cast<std::size_t>(k)] = std::exp(log_choose[static_cast<std::size_t>(k)] +
                                                    k * std::log(p) +
                                                    (n - k) * std::log1p(-p));
    }
    return pmf;
}

} // namespace sim_detail

// Enumerate all (n+1)^2 outcomes and weight the coverage indicator by the
// exact binomial pmf, conditioning on the bound being computable exactly as
// the Monte Carlo study does. Only closed-form and test-inversion methods
// are enumerable (bootstrap bounds depend on a resampling seed); Wang-Shan
// needs a prebuilt table beyond the direct-construction cap.
inline ExactCellResult exact_cell(int n, double rr, double p_f, Method method, double level,
                                  Side side, const WangShanTable* ws_table = nullptr) {
    if (n < 1) throw std::domain_error("exact_cell needs a positive ensemble size");
    if (!(rr > 0.0) || !std::isfinite(rr)) {
        throw std::domain_error("exact_cell needs a positive finite risk ratio");
    }
    if (!(p_f > 0.0 && p_f < 1.0) || p_f / rr > 1.0) {
        throw std::domain_error("exact_cell needs probabilities inside (0, 1]");
    }
    validate_level(level);
    switch (method) {
        case Method::delta:
        case Method::lrt:
        case Method::koopman:
        case Method::wilson:
            if (n > 400) {
                throw InfeasibleSizeError("exact enumeration capped at n = 400");
            }
            break;
        case Method::wang_shan:
            if (ws_table == nullptr && n > 50) {
                throw InfeasibleSizeError(
                    "exact enumeration of wang-shan beyond n = 50 needs a prebuilt table");
            }
            break;
        default:
            throw InfeasibleSizeError(std::string("method ") + method_name(method) +
                                      " is not enumerable");
    }

    const double p_c = p_f / rr;
    const auto pmf_f = sim_detail::binomial_pmf_row(n, p_f);
    const auto pmf_c = sim_detail::binomial_pmf_row(n, p_c);

    double covered = 0.0;
    double computable = 0.0;
    double excluded = 0.0;
    for (int y_f = 0; y_f <= n; ++y_f) {
        for (int y_c = 0; y_c <= n; ++y_c) {
            const double w = pmf_f[static_cast<std::size_t>(y_f)] *
                             pmf_c[static_cast<std::size_t>(y_c)];
            const CountPair data{BinomialCount{y_f, n}, BinomialCount{y_c, n}};
            try {
                const RatioInterval iv =
                    sim_detail::closed_form_interval(method, data, level, side, ws_table);
                computable += w;
                if (iv.lower <= rr && iv.upper >= rr) covered += w;
            } catch (const NotComputableError&) {
                excluded += w;
            }
        }
    }
    if (computable <= 0.0) {
        throw NotComputableError("no outcome in the enumeration yields a computable bound");
    }
    ExactCellResult out;
    out.coverage = covered / computable;
    out.prop_not_computable = excluded;
    return out;
}

inline double exact_coverage(int n, double rr, double p_f, Method method, double level,
                             Side side, const WangShanTable* ws_table = nullptr) {
    return exact_cell(n, rr, p_f, method, level, side, ws_table).coverage;
}

// Long-format metrics export for plotting: one record per metric with a
// fixed column order (method, n, rr, p_f, metric, value). Numbers use %.10g;
// an empty median (no computable replicate) is written as nan.
inline void emit_figures(const std::vector<MethodMetrics>& metrics, std::ostream& out) {
    out << "method,n,rr,p_f,metric,value\n";
    char buf[40];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.10g", v);
        return std::string(buf);
    };
    for (const auto& m : metrics) {
        const std::string prefix = std::string(method_name(m.method)) + "," +
                                   std::to_string(m.cell.n) + "," + fmt(m.cell.rr) + "," +
                                   fmt(m.cell.p_f) + ",";
        out << prefix << "coverage_lower," << fmt(m.coverage_lower) << "\n";
        out << prefix << "coverage_upper," << fmt(m.coverage_upper) << "\n";
        const double median = m.median_lower_bound.is_finite()
                                  ? m.median_lower_bound.as_double()
                                  : std::numeric_limits<double>::quiet_NaN();
        out << prefix << "median_lower_bound," << fmt(median) << "\n";
        out << prefix << "prop_not_computable," << fmt(m.prop_not_computable) << "\n";
        out << prefix << "mc_standard_error," << fmt(m.mc_standard_error) << "\n";
    }
    if (!out) throw std::runtime_error("metrics write failed");
}

} // namespace riskratio
