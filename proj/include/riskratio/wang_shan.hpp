#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "riskratio/core.hpp"
#include "riskratio/math.hpp"

namespace riskratio {

// Precomputed one-sided lower bounds for every (yF, yC) outcome of one
// (nF, nC, level) configuration. rank records the order in which the
// construction assigned cells (0 = most extreme); it is derivable from the
// bounds and is not serialized.
struct WangShanTable {
    int nF = 0;
    int nC = 0;
    double level = 0.0;
    std::vector<double> bounds;
    std::vector<int> rank;

    double at(int yF, int yC) const { return bounds[idx(yF, yC)]; }
    int rank_at(int yF, int yC) const { return rank[idx(yF, yC)]; }

    std::size_t idx(int yF, int yC) const {
        return static_cast<std::size_t>(yF) * (nC + 1) + yC;
    }
};

namespace ws_detail {

// Binomial pmf over a contiguous index range, seeded at the in-range mode
// and extended by the pmf ratio recurrence in both directions. Seeding at
// the mode keeps every entry accurate at its own magnitude; entries whose
// true value is below the subnormal floor flush to zero, which is harmless
// against an alpha-sized threshold.
inline void pmf_range(int n, double p, int lo, int hi, const std::vector<double>& log_choose,
                      std::vector<double>& out) {
    out.assign(hi - lo + 1, 0.0);
    if (p <= 0.0) {
        if (lo == 0) out[0] = 1.0;
        return;
    }
    if (p >= 1.0) {
        if (hi == n) out[hi - lo] = 1.0;
        return;
    }
    const double lp = std::log(p);
    const double l1p = std::log1p(-p);
    int m = static_cast<int>((n + 1) * p);
    m = std::clamp(m, lo, hi);
    out[m - lo] = std::exp(log_choose[m] + m * lp + (n - m) * l1p);
    const double odds = p / (1.0 - p);
    for (int j = m; j < hi; ++j) {
        out[j + 1 - lo] = out[j - lo] * odds * (n - j) / (j + 1.0);
    }
    for (int j = m; j > lo; --j) {
        out[j - 1 - lo] = out[j - lo] * (1.0 / odds) * j / (n - j + 1.0);
    }
}

struct Candidate {
    int a = 0;  // factual count of the cell being tested for inclusion
    int b = 0;  // counterfactual count
};

// State of the inductive construction: the current upper set M is the
// staircase {(a, b) : b <= beta[a]}, beta non-decreasing in a.
struct Builder {
    int nF, nC;
    double alpha;
    std::vector<double> lcF, lcC;   // log binomial coefficients
    std::vector<int> beta;
    WangShanTable table;
    // Called after each cell is assigned; used by the CLI for progress.
    std::function<void(std::size_t step, Candidate cell, double bound)> on_step;

    Builder(int nF_, int nC_, double level) : nF(nF_), nC(nC_), alpha(1.0 - level) {
        validate_level(level);
        auto log_choose = [](int n) {
            std::vector<double> lc(n + 1);
            for (int y = 0; y <= n; ++y) {
                lc[y] = std::lgamma(n + 1.0) - std::lgamma(y + 1.0) - std::lgamma(n - y + 1.0);
            }
            return lc;
        };
        lcF = log_choose(nF);
        lcC = log_choose(nC);
        beta.assign(nF + 1, -1);
        table.nF = nF;
        table.nC = nC;
        table.level = level;
        table.bounds.assign(static_cast<std::size_t>(nF + 1) * (nC + 1), -1.0);
        table.rank.assign(table.bounds.size(), -1);
    }

    // Cells whose addition keeps M an upper set of the partial order
    // (more factual events, or fewer counterfactual events, is more
    // extreme): the next cell of row a is admissible when the row above is
    // already at least one cell ahead.
    std::vector<Candidate> candidates() const {
        std::vector<Candidate> out;
        for (int a = nF; a >= 0; --a) {
            const int b = beta[a] + 1;
            if (b > nC) continue;
            if (a == nF || beta[a + 1] >= b) out.push_back({a, b});
        }
        return out;
    }

    // Result of one probe: the smallest candidate supremum and which
    // candidate attains it. The probe is accepted when best_g <= alpha.
    struct GEval {
        double best_g = kInf;
        std::size_t best_idx = 0;
    };

    // For rejection probability rho = exp(t), evaluate per candidate
    //   g_c = sup over nuisance pF of P_{pF, pF/rho}(M union {c}),
    // maximized on the prescribed grid of 10,000 equally spaced pF values
    // over the admissible range, then refined once on a 1000-point subgrid
    // around the coarse argmax. Refinement only raises a supremum, so a
    // candidate whose coarse value already exceeds alpha stays rejected
    // unrefined, and candidates are refined in increasing coarse order
    // until no later one can undercut the best refined value. A probe
    // where every candidate's running maximum has passed alpha is rejected
    // without finishing the sweep.
    GEval eval_g(double t, const std::vector<Candidate>& cands) const {
        const double rho = std::exp(t);
        const double hi = std::min(1.0, rho);
        const int grid = 10000;
        std::vector<double> g(cands.size(), 0.0);
        std::vector<int> argmax(cands.size(), 0);
        std::vector<double> pmfF, pmfC;
        const int row_lo = first_relevant_row(cands);
        const int b_need = needed_cdf_depth(cands);

        auto scan_point = [&](double pF, auto&& record) {
            const double pC = std::min(pF / rho, 1.0);
            pmf_range(nF, pF, row_lo, nF, lcF, pmfF);
            pmf_range(nC, pC, 0, b_need, lcC, pmfC);
            // prefix sums turn pmfC into the CDF in place
            for (std::size_t j = 1; j < pmfC.size(); ++j) pmfC[j] += pmfC[j - 1];
            double base = 0.0;
            for (int a = std::max(row_lo, 0); a <= nF; ++a) {
                if (beta[a] >= 0) base += pmfF[a - row_lo] * pmfC[beta[a]];
            }
            for (std::size_t c = 0; c < cands.size(); ++c) {
                const double pmf_b =
                    cands[c].b == 0 ? pmfC[0] : pmfC[cands[c].b] - pmfC[cands[c].b - 1];
                record(c, base + pmfF[cands[c].a - row_lo] * pmf_b);
            }
        };

        std::size_t still_below = cands.size();
        for (int i = 0; i < grid && still_below > 0; ++i) {
            const double pF = hi * i / (grid - 1);
            scan_point(pF, [&](std::size_t c, double v) {
                if (v > g[c]) {
                    if (g[c] <= alpha && v > alpha) --still_below;
                    g[c] = v;
                    argmax[c] = i;
                }
            });
        }
        if (still_below == 0) {
            // Rejected for certain: every final supremum is above alpha.
            GEval out;
            for (std::size_t c = 0; c < cands.size(); ++c) {
                if (g[c] < out.best_g) {
                    out.best_g = g[c];
                    out.best_idx = c;
                }
            }
            return out;
        }

        std::vector<std::size_t> order(cands.size());
        for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t x, std::size_t y) { return g[x] < g[y]; });
        GEval out;
        for (std::size_t c : order) {
            if (g[c] >= out.best_g) break;  // refined values only go up
            double refined = g[c];
            const double lo_p = hi * std::max(argmax[c] - 1, 0) / (grid - 1);
            const double hi_p = hi * std::min(argmax[c] + 1, grid - 1) / (grid - 1);
            for (int k = 0; k <= 1000; ++k) {
                const double pF = lo_p + (hi_p - lo_p) * k / 1000.0;
                scan_point(pF, [&](std::size_t cc, double v) {
                    if (cc == c && v > refined) refined = v;
                });
            }
            if (refined < out.best_g) {
                out.best_g = refined;
                out.best_idx = c;
            }
        }
        return out;
    }

    int first_relevant_row(const std::vector<Candidate>& cands) const {
        int lo = nF;
        for (int a = 0; a <= nF; ++a) {
            if (beta[a] >= 0) {
                lo = a;
                break;
            }
        }
        for (const Candidate& c : cands) lo = std::min(lo, c.a);
        return lo;
    }

    int needed_cdf_depth(const std::vector<Candidate>& cands) const {
        int depth = 0;
        for (int a = 0; a <= nF; ++a) depth = std::max(depth, beta[a]);
        for (const Candidate& c : cands) depth = std::max(depth, c.b);
        return std::min(depth, nC);
    }

    // Run the construction; if stop_at is set, return as soon as that cell
    // has its bound. Bounds are non-increasing along the construction, so
    // each step can reuse the previous bound as the rejected bracket end.
    void run(std::optional<Candidate> stop_at = std::nullopt) {
        const std::size_t total = table.bounds.size();
        double t_rejected = kInf;  // +inf marks "not yet located"
        bool exhausted = false;
        for (std::size_t step = 0; step < total; ++step) {
            const std::vector<Candidate> cands = candidates();
            if (cands.empty()) break;
            Candidate winner = cands.front();
            double bound = 0.0;
            if (!exhausted) {
                if (std::isinf(t_rejected)) {
                    // First step: scan up from rho = 1 until the test rejects.
                    double t = 0.0, step_up = 1.0;
                    while (eval_g(t, cands).best_g <= alpha) {
                        t += step_up;
                        step_up *= 2.0;
                    }
                    t_rejected = t;
                }
                // Expand down to an accepted point.
                double t_hi = t_rejected;
                double t_lo = t_hi;
                double step_down = 0.5;
                bool found = false;
                while (t_lo > -70.0) {
                    t_lo = t_hi - step_down;
                    step_down *= 2.0;
                    if (eval_g(t_lo, cands).best_g <= alpha) {
                        found = true;
                        break;
                    }
                }
                if (!found) {
                    exhausted = true;  // every remaining cell gets bound 0
                } else {
                    double lo = t_lo, hi_t = t_hi;
                    while (hi_t - lo > 1e-8) {
                        const double mid = 0.5 * (lo + hi_t);
                        (eval_g(mid, cands).best_g <= alpha ? lo : hi_t) = mid;
                    }
                    // Winner: the candidate attaining the smallest supremum
                    // at the accepted end of the final bracket.
                    winner = cands[eval_g(lo, cands).best_idx];
                    bound = std::exp(lo);
                    t_rejected = hi_t;
                }
            }
            if (exhausted) {
                // Deterministic sweep order for the zero-bound remainder.
                winner = cands.front();
                bound = 0.0;
            }
            beta[winner.a] += 1;
            table.bounds[table.idx(winner.a, winner.b)] = bound;
            table.rank[table.idx(winner.a, winner.b)] = static_cast<int>(step);
            if (on_step) on_step(step, winner, bound);
            if (stop_at && winner.a == stop_at->a && winner.b == stop_at->b) return;
        }
    }
};

} // namespace ws_detail

// Build the full lookup table of one-sided lower bounds at the given level.
inline WangShanTable build_wang_shan_table(
    int nF, int nC, double level,
    const std::function<void(std::size_t, ws_detail::Candidate, double)>& progress = {}) {
    if (nF < 1 || nC < 1) {
        throw std::domain_error("build_wang_shan_table: ensemble sizes must be >= 1");
    }
    ws_detail::Builder b(nF, nC, level);
    b.on_step = progress;
    b.run();
    return b.table;
}

// Canonical file name for a table keyed by (nF, nC, level), used by the CLI
// when resolving tables from a directory.
inline std::string wang_shan_table_filename(int nF, int nC, double level) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "ws_nf%d_nc%d_level%g.txt", nF, nC, level);
    return buf;
}

// One cell's lower bound without materializing the whole table; the
// construction still runs in its global order but stops at the target cell.
inline double wang_shan_lower_bound(int yF, int nF, int yC, int nC, double level) {
    ws_detail::Builder b(nF, nC, level);
    b.run(ws_detail::Candidate{yF, yC});
    return b.table.at(yF, yC);
}

// Flat text serialization, one bound per line in row-major (yF, yC) order.
// %.17g round-trips doubles exactly; infinities use the token "inf".
inline void save_wang_shan_table(const WangShanTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "wang-shan-table v1\n";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", table.level);
    out << "nF " << table.nF << "\nnC " << table.nC << "\nlevel " << buf << "\n";
    for (int yF = 0; yF <= table.nF; ++yF) {
        for (int yC = 0; yC <= table.nC; ++yC) {
            const double v = table.at(yF, yC);
            if (std::isinf(v)) {
                out << "inf\n";
            } else {
                std::snprintf(buf, sizeof buf, "%.17g", v);
                out << buf << "\n";
            }
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline WangShanTable load_wang_shan_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open wang-shan table: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "wang-shan-table v1") {
        throw ParseError("unrecognized wang-shan table header in " + path);
    }
    WangShanTable table;
    std::string key;
    in >> key >> table.nF;
    if (key != "nF") throw ParseError("expected nF in " + path);
    in >> key >> table.nC;
    if (key != "nC") throw ParseError("expected nC in " + path);
    in >> key >> table.level;
    if (key != "level") throw ParseError("expected level in " + path);
    if (table.nF < 1 || table.nC < 1 || !(table.level > 0.0 && table.level < 1.0)) {
        throw ParseError("invalid wang-shan table dimensions in " + path);
    }
    const std::size_t total = static_cast<std::size_t>(table.nF + 1) * (table.nC + 1);
    table.bounds.reserve(total);
    std::string tok;
    while (table.bounds.size() < total && in >> tok) {
        if (tok == "inf") {
            table.bounds.push_back(kInf);
        } else {
            table.bounds.push_back(std::strtod(tok.c_str(), nullptr));
        }
    }
    if (table.bounds.size() != total) {
        throw ParseError("wang-shan table truncated: " + path);
    }
    table.rank.assign(total, -1);
    return table;
}

// Exact unconditional interval. The lower bound comes from a lookup table
// when one is supplied (or from the direct construction when the problem is
// small enough); the upper bound is the mirrored construction with the
// scenarios swapped, i.e. 1 / lower(yC, yF; nC, nF). A two-sided interval
// at level L combines two one-sided bounds at level (1+L)/2.
inline RatioInterval wang_shan_interval(const CountPair& data, double level, Side side,
                                        const WangShanTable* table_fc = nullptr,
                                        const WangShanTable* table_cf = nullptr,
                                        int direct_cap = 50) {
    validate_level(level);
    const int yF = data.factual.events, nF = data.factual.trials;
    const int yC = data.counterfactual.events, nC = data.counterfactual.trials;
    if (yF == 0 && yC == 0) {
        throw NotComputableError("no events occur in both scenarios");
    }
    const double side_level = side == Side::two_sided ? 0.5 * (1.0 + level) : level;

    auto lower_from = [&](int y1, int n1, int y2, int n2, const WangShanTable* table) {
        if (table != nullptr) {
            if (table->nF != n1 || table->nC != n2 || table->level != side_level) {
                throw std::invalid_argument(
                    "wang_shan_interval: table does not match (nF, nC, level)");
            }
            return table->at(y1, y2);
        }
        if (n1 > direct_cap || n2 > direct_cap) {
            throw InfeasibleSizeError(
                "wang-shan direct computation capped at n = " + std::to_string(direct_cap) +
                "; supply a precomputed table");
        }
        return wang_shan_lower_bound(y1, n1, y2, n2, side_level);
    };

    double lower = 0.0;
    double upper = kInf;
    if (side != Side::upper_one_sided) {
        lower = lower_from(yF, nF, yC, nC, table_fc);
    }
    if (side != Side::lower_one_sided) {
        const double mirrored = lower_from(yC, nC, yF, nF, table_cf);
        upper = mirrored == 0.0 ? kInf : 1.0 / mirrored;
    }
    RatioInterval out;
    out.estimate =
        risk_ratio_estimate(data.factual.proportion(), data.counterfactual.proportion());
    out.lower = side == Side::upper_one_sided ? 0.0 : lower;
    out.upper = side == Side::lower_one_sided ? kInf : upper;
    out.level = level;
    out.side = side;
    out.method = Method::wang_shan;
    return out;
}

} // namespace riskratio
