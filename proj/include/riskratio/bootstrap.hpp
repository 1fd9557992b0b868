#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "riskratio/core.hpp"
#include "riskratio/math.hpp"
#include "riskratio/ratio_intervals.hpp"
#include "riskratio/rng.hpp"

namespace riskratio {

// What to do when a resampled dataset has a zero count on either side (its
// ratio is then 0, infinite, or undefined). Dropping such replicates is the
// common ad hoc choice; it lacks a clear justification, so the count of
// dropped replicates is always surfaced in the interval diagnostics.
enum class DegeneratePolicy { error, drop_and_flag };

struct BootstrapConfig {
    int n_b = 10000;
    std::uint64_t seed = 0;
    DegeneratePolicy policy = DegeneratePolicy::drop_and_flag;
};

// The resampled ratio distribution plus everything the interval
// constructions need: the replicate counts themselves (the studentized and
// BCa intervals recompute per-replicate quantities) and the source data.
struct BootstrapDistribution {
    CountPair source;
    double theta_hat = 0.0;            // log RR at the source counts
    std::vector<int> rep_yF, rep_yC;   // replicate event counts
    std::vector<ExtReal> replicates;   // replicate risk ratios
    int n_degenerate = 0;              // replicates with a zero count
    std::optional<double> se_hat;      // sd of log RR over usable replicates
    DegeneratePolicy policy = DegeneratePolicy::drop_and_flag;
};

namespace boot_detail {

// Record replicate i's resampled counts: the ratio marker (undefined when
// both counts are zero, infinite when only the counterfactual's is) and
// the degeneracy tally.
inline void record_replicate(BootstrapDistribution& dist, int i, int f, int n_f, int c,
                             int n_c) {
    dist.rep_yF[i] = f;
    dist.rep_yC[i] = c;
    if (f == 0 && c == 0) {
        dist.replicates.push_back(ExtReal::undefined());
    } else if (c == 0) {
        dist.replicates.push_back(ExtReal::infinity());
    } else {
        dist.replicates.push_back(ExtReal::finite((static_cast<double>(f) / n_f) /
                                                  (static_cast<double>(c) / n_c)));
    }
    if (f == 0 || c == 0) ++dist.n_degenerate;
}

// Spread of the usable replicates on the log scale; absent when the
// policy forbids dropping degenerate replicates or fewer than two remain.
inline void stamp_se_hat(BootstrapDistribution& dist) {
    if (dist.policy == DegeneratePolicy::error && dist.n_degenerate > 0) return;
    const int n_b = static_cast<int>(dist.replicates.size());
    double sum = 0.0;
    int m = 0;
    for (int i = 0; i < n_b; ++i) {
        if (dist.rep_yF[i] > 0 && dist.rep_yC[i] > 0) {
            sum += std::log(dist.replicates[i].as_double());
            ++m;
        }
    }
    if (m < 2) return;
    const double mean = sum / m;
    double ss = 0.0;
    for (int i = 0; i < n_b; ++i) {
        if (dist.rep_yF[i] > 0 && dist.rep_yC[i] > 0) {
            const double d = std::log(dist.replicates[i].as_double()) - mean;
            ss += d * d;
        }
    }
    dist.se_hat = std::sqrt(ss / (m - 1));
}

} // namespace boot_detail

// Draw n_b paired resamples. Resampling members with replacement and
// re-counting exceedances is distributionally a binomial draw at the
// observed proportion, so counts are generated directly. Each replicate and
// scenario gets its own counter-derived stream, making the result
// independent of evaluation order.
inline BootstrapDistribution resample_pair(const CountPair& data, const BootstrapConfig& cfg) {
    if (cfg.n_b < 100) {
        throw std::domain_error("BootstrapConfig: n_b must be at least 100");
    }
    const int yF = data.factual.events, nF = data.factual.trials;
    const int yC = data.counterfactual.events, nC = data.counterfactual.trials;
    if (yF == 0 || yC == 0) {
        throw TotalDegeneracyError(
            "resampling cannot produce variability when an observed proportion is zero");
    }
    const double pF = data.factual.proportion();
    const double pC = data.counterfactual.proportion();

    BootstrapDistribution dist;
    dist.source = data;
    dist.theta_hat = std::log(pF) - std::log(pC);
    dist.policy = cfg.policy;
    dist.rep_yF.resize(cfg.n_b);
    dist.rep_yC.resize(cfg.n_b);
    dist.replicates.reserve(cfg.n_b);
    for (int i = 0; i < cfg.n_b; ++i) {
        const auto rep = static_cast<std::uint64_t>(i);
        SplitMix gF = SplitMix::derive(cfg.seed, {0, rep});
        SplitMix gC = SplitMix::derive(cfg.seed, {1, rep});
        const int f = gF.binomial(nF, pF);
        const int c = gC.binomial(nC, pC);
        boot_detail::record_replicate(dist, i, f, nF, c, nC);
    }
    boot_detail::stamp_se_hat(dist);
    return dist;
}

namespace boot_detail {

// Log ratios of the replicates with a nonzero count on both sides, in
// replicate order. Enforces the degenerate-replicate policy.
inline std::vector<double> usable_log_rr(const BootstrapDistribution& dist) {
    if (dist.policy == DegeneratePolicy::error && dist.n_degenerate > 0) {
        throw NotComputableError(
            "bootstrap replicates with a zero count are present and the policy "
            "forbids dropping them");
    }
    std::vector<double> out;
    out.reserve(dist.replicates.size() - dist.n_degenerate);
    for (std::size_t i = 0; i < dist.replicates.size(); ++i) {
        if (dist.rep_yF[i] > 0 && dist.rep_yC[i] > 0) {
            out.push_back(std::log(dist.replicates[i].as_double()));
        }
    }
    if (out.empty()) {
        throw NotComputableError("every bootstrap replicate has a zero count");
    }
    return out;
}

// Empirical quantile as the order statistic at ceil(q * m) (1-based,
// clamped); no interpolation, so results are exactly reproducible.
inline double order_statistic(const std::vector<double>& sorted, double q) {
    const double m = static_cast<double>(sorted.size());
    const double r = std::clamp(std::ceil(q * m), 1.0, m);
    return sorted[static_cast<std::size_t>(r) - 1];
}

// Nominal tail quantiles for the requested level and side; for one-sided
// intervals only the relevant member ends up in the reported bound.
struct TailQuantiles {
    double lo = 0.0;
    double hi = 0.0;
};

inline TailQuantiles tail_quantiles(double level, Side side) {
    validate_level(level);
    const double alpha = side == Side::two_sided ? 0.5 * (1.0 - level) : 1.0 - level;
    return {alpha, 1.0 - alpha};
}

inline void stamp_diagnostics(RatioInterval& iv, const BootstrapDistribution& dist,
                              std::size_t n_usable) {
    iv.diagnostics["n_degenerate"] = static_cast<double>(dist.n_degenerate);
    iv.diagnostics["n_usable"] = static_cast<double>(n_usable);
    iv.diagnostics["dropped"] =
        (dist.policy == DegeneratePolicy::drop_and_flag && dist.n_degenerate > 0) ? 1.0 : 0.0;
}

inline RatioInterval finish(const BootstrapDistribution& dist, double lower, double upper,
                            double level, Side side, Method method, std::size_t n_usable) {
    RatioInterval out = detail::finish_interval(
        risk_ratio_estimate(dist.source.factual.proportion(),
                            dist.source.counterfactual.proportion()),
        lower, upper, level, side, method);
    stamp_diagnostics(out, dist, n_usable);
    return out;
}

} // namespace boot_detail

// Normal interval using the resampled spread: exp(theta_hat +- z * sd).
inline RatioInterval boot_normal(const BootstrapDistribution& dist, double level,
                                 Side side = Side::two_sided) {
    validate_level(level);
    if (dist.policy == DegeneratePolicy::error && dist.n_degenerate > 0) {
        throw NotComputableError(
            "the spread of the ratio replicates cannot be computed: replicates with a "
            "zero count are present and the policy forbids dropping them");
    }
    if (!dist.se_hat) {
        throw NotComputableError("too few usable bootstrap replicates for a spread estimate");
    }
    const double z = detail::z_critical(level, side);
    const std::size_t n_usable = dist.replicates.size() - dist.n_degenerate;
    return boot_detail::finish(dist, std::exp(dist.theta_hat - z * *dist.se_hat),
                               std::exp(dist.theta_hat + z * *dist.se_hat), level, side,
                               Method::boot_normal, n_usable);
}

// Percentile interval: empirical quantiles of the replicate distribution.
inline RatioInterval boot_percentile(const BootstrapDistribution& dist, double level,
                                     Side side = Side::two_sided) {
    std::vector<double> theta = boot_detail::usable_log_rr(dist);
    std::sort(theta.begin(), theta.end());
    const auto q = boot_detail::tail_quantiles(level, side);
    return boot_detail::finish(dist, std::exp(boot_detail::order_statistic(theta, q.lo)),
                               std::exp(boot_detail::order_statistic(theta, q.hi)), level,
                               side, Method::boot_percentile, theta.size());
}

// Basic (reflected) interval: 2 theta_hat minus the opposite percentile.
inline RatioInterval boot_basic(const BootstrapDistribution& dist, double level,
                                Side side = Side::two_sided) {
    std::vector<double> theta = boot_detail::usable_log_rr(dist);
    std::sort(theta.begin(), theta.end());
    const auto q = boot_detail::tail_quantiles(level, side);
    const double lower = 2.0 * dist.theta_hat - boot_detail::order_statistic(theta, q.hi);
    const double upper = 2.0 * dist.theta_hat - boot_detail::order_statistic(theta, q.lo);
    return boot_detail::finish(dist, std::exp(lower), std::exp(upper), level, side,
                               Method::boot_basic, theta.size());
}

// Studentized interval: each replicate is standardized by its own
// propagation-of-errors standard error, and the quantiles of those pivots
// are rescaled by the source-data standard error.
inline RatioInterval boot_studentized(const BootstrapDistribution& dist, double level,
                                      Side side = Side::two_sided) {
    if (dist.policy == DegeneratePolicy::error && dist.n_degenerate > 0) {
        throw NotComputableError(
            "studentized pivots cannot be computed: replicates with a zero count are "
            "present and the policy forbids dropping them");
    }
    std::vector<double> z;
    z.reserve(dist.replicates.size() - dist.n_degenerate);
    for (std::size_t i = 0; i < dist.replicates.size(); ++i) {
        if (dist.rep_yF[i] > 0 && dist.rep_yC[i] > 0) {
            const CountPair rep{{dist.rep_yF[i], dist.source.factual.trials},
                                {dist.rep_yC[i], dist.source.counterfactual.trials}};
            const double se_i = log_risk_ratio_se(rep);
            const double diff = std::log(dist.replicates[i].as_double()) - dist.theta_hat;
            // se_i is zero only when every member exceeds on both sides; the
            // pivot is then the limit 0 when the replicate equals the
            // estimate and +-inf otherwise.
            if (se_i > 0.0) {
                z.push_back(diff / se_i);
            } else {
                z.push_back(diff == 0.0 ? 0.0 : (diff > 0.0 ? kInf : -kInf));
            }
        }
    }
    if (z.empty()) {
        throw NotComputableError("every bootstrap replicate has a zero count");
    }
    std::sort(z.begin(), z.end());
    const double se0 = log_risk_ratio_se(dist.source);
    const auto q = boot_detail::tail_quantiles(level, side);
    const double lower = dist.theta_hat - se0 * boot_detail::order_statistic(z, q.hi);
    const double upper = dist.theta_hat - se0 * boot_detail::order_statistic(z, q.lo);
    return boot_detail::finish(dist, std::exp(lower), std::exp(upper), level, side,
                               Method::boot_studentized, z.size());
}

// Bias-corrected and accelerated percentile interval. The bias constant
// comes from the proportion of replicates below the source estimate; the
// acceleration from a delete-one jackknife within each scenario, pooled.
inline RatioInterval boot_bca(const BootstrapDistribution& dist, double level,
                              Side side = Side::two_sided) {
    std::vector<double> theta = boot_detail::usable_log_rr(dist);
    std::sort(theta.begin(), theta.end());

    // Identical replicates carry no distributional information to adjust;
    // every quantile is the same point.
    if (theta.front() == theta.back()) {
        return boot_detail::finish(dist, std::exp(theta.front()), std::exp(theta.front()),
                                   level, side, Method::boot_bca, theta.size());
    }

    const double below =
        static_cast<double>(std::lower_bound(theta.begin(), theta.end(), dist.theta_hat) -
                            theta.begin());
    const double prop = below / static_cast<double>(theta.size());
    if (prop <= 0.0 || prop >= 1.0) {
        throw NotComputableError(
            "bias correction undefined: all replicates fall on one side of the estimate");
    }
    const double z0 = normal_quantile(prop);

    const int yF = dist.source.factual.events, nF = dist.source.factual.trials;
    const int yC = dist.source.counterfactual.events, nC = dist.source.counterfactual.trials;
    if (nF < 2 || nC < 2 || yF < 2 || yC < 2) {
        throw NotComputableError(
            "jackknife acceleration undefined: deleting the only exceedance leaves a "
            "zero count");
    }
    // Delete-one log ratios with multiplicities: removing an exceeding or a
    // non-exceeding member from either scenario.
    const double pF = dist.source.factual.proportion();
    const double pC = dist.source.counterfactual.proportion();
    const double jk_val[4] = {
        std::log((yF - 1.0) / (nF - 1.0)) - std::log(pC),  // drop F exceedance
        std::log(yF / (nF - 1.0)) - std::log(pC),          // drop F non-exceedance
        std::log(pF) - std::log((yC - 1.0) / (nC - 1.0)),  // drop C exceedance
        std::log(pF) - std::log(yC / (nC - 1.0)),          // drop C non-exceedance
    };
    const double jk_mult[4] = {static_cast<double>(yF), static_cast<double>(nF - yF),
                               static_cast<double>(yC), static_cast<double>(nC - yC)};
    double wsum = 0.0, mean = 0.0;
    for (int k = 0; k < 4; ++k) {
        wsum += jk_mult[k];
        mean += jk_mult[k] * jk_val[k];
    }
    mean /= wsum;
    double m2 = 0.0, m3 = 0.0;
    for (int k = 0; k < 4; ++k) {
        const double d = mean - jk_val[k];
        m2 += jk_mult[k] * d * d;
        m3 += jk_mult[k] * d * d * d;
    }
    const double accel = m2 > 0.0 ? m3 / (6.0 * std::pow(m2, 1.5)) : 0.0;

    const auto q = boot_detail::tail_quantiles(level, side);
    auto adjusted = [&](double nominal) {
        const double zq = normal_quantile(nominal);
        const double denom = 1.0 - accel * (z0 + zq);
        if (denom <= 0.0) {
            throw NotComputableError("acceleration adjustment leaves no valid quantile");
        }
        return normal_cdf(z0 + (z0 + zq) / denom);
    };
    // Only evaluate the side that is reported: the adjustment can fail, and
    // a bound that was never requested must not be the reason it does.
    double lower = 0.0, upper = kInf;
    if (side != Side::upper_one_sided) {
        lower = std::exp(boot_detail::order_statistic(theta, adjusted(q.lo)));
    }
    if (side != Side::lower_one_sided) {
        upper = std::exp(boot_detail::order_statistic(theta, adjusted(q.hi)));
    }
    return boot_detail::finish(dist, lower, upper, level, side, Method::boot_bca,
                               theta.size());
}

} // namespace riskratio
