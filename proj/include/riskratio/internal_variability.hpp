#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "riskratio/bootstrap.hpp"
#include "riskratio/core.hpp"
#include "riskratio/estimation.hpp"
#include "riskratio/ratio_intervals.hpp"
#include "riskratio/rng.hpp"

namespace riskratio {

// A multi-year ensemble: for each of n_t years, the same number n_w of
// exchangeable member values. Years carry labels so that the factual and
// counterfactual scenarios can be checked for covering the same period.
// Members are exchangeable within a year; across years the forced state
// may differ, which is exactly the structure the year-block bootstrap and
// the time-averaged variance below account for.
struct EnsembleSeries {
    std::vector<int> years;
    int members_per_year = 1;
    std::vector<std::vector<double>> values; // values[t][w]: year t, member w

    EnsembleSeries(std::vector<int> years_in, int n_w,
                   std::vector<std::vector<double>> values_in)
        : years(std::move(years_in)), members_per_year(n_w), values(std::move(values_in)) {
        if (years.empty()) {
            throw std::domain_error("ensemble series needs at least one year");
        }
        if (members_per_year < 1) {
            throw std::domain_error("ensemble series needs at least one member per year");
        }
        if (values.size() != years.size()) {
            throw std::domain_error("ensemble series needs one row of values per year");
        }
        for (const auto& row : values) {
            if (static_cast<int>(row.size()) != members_per_year) {
                throw std::domain_error(
                    "every year must have exactly members_per_year values");
            }
            for (double v : row) {
                if (!std::isfinite(v)) {
                    throw std::domain_error("ensemble values must be finite");
                }
            }
        }
    }

    int n_years() const { return static_cast<int>(years.size()); }

    // Exceedance count for each year, in year order.
    std::vector<BinomialCount> per_year_counts(const EventDefinition& event) const {
        std::vector<BinomialCount> out;
        out.reserve(values.size());
        for (const auto& row : values) {
            int k = 0;
            for (double v : row) {
                if (event.exceeds(v)) ++k;
            }
            out.push_back(BinomialCount{k, members_per_year});
        }
        return out;
    }
};

namespace iv_detail {

inline void require_same_years(const EnsembleSeries& factual,
                               const EnsembleSeries& counterfactual) {
    if (factual.years != counterfactual.years) {
        throw std::invalid_argument(
            "the factual and counterfactual series must cover the same years in "
            "the same order");
    }
}

} // namespace iv_detail

// Mean over years of the per-year exceedance proportions. With equal
// members per year this equals the pooled proportion, but the estimator is
// defined year-wise because its variance is not the pooled binomial one.
inline ProbabilityEstimate time_averaged_p(const EnsembleSeries& series,
                                           const EventDefinition& event) {
    int total = 0;
    for (const auto& row : series.values) {
        for (double v : row) {
            if (event.exceeds(v)) ++total;
        }
    }
    const int n = series.n_years() * series.members_per_year;
    ProbabilityEstimate est;
    est.value = static_cast<double>(total) / n;
    est.n_effective = n;
    est.source = EstimateSource::nonparametric;
    return est;
}

// Variance of the time-averaged proportion treating years as fixed blocks:
// members vary within a year around that year's own rate, so
//   Var(p_bar) = (1/n_t^2) * sum_t p_t (1 - p_t) / n_w.
// With a single year this is the ordinary binomial variance. It is smaller
// than the pooled-binomial variance whenever the per-year rates spread out,
// which is why pooled formulas misstate the uncertainty for ensembles of
// transient simulations.
inline double time_averaged_var(const EnsembleSeries& series, const EventDefinition& event) {
    const auto counts = series.per_year_counts(event);
    const double n_t = static_cast<double>(series.n_years());
    const double n_w = static_cast<double>(series.members_per_year);
    double acc = 0.0;
    for (const auto& c : counts) {
        const double p = c.proportion();
        acc += p * (1.0 - p) / n_w;
    }
    return acc / (n_t * n_t);
}

// Normal-theory interval for the ratio of time-averaged probabilities, on
// the log scale with the year-blocked variances above:
//   se^2(log RR) = Var(p_F)/p_F^2 + Var(p_C)/p_C^2.
// Requires both scenarios to cover the same years; a zero proportion on
// either side leaves the log-scale error undefined.
inline RatioInterval time_averaged_delta_interval(const EnsembleSeries& factual,
                                                  const EnsembleSeries& counterfactual,
                                                  const EventDefinition& event, double level,
                                                  Side side) {
    iv_detail::require_same_years(factual, counterfactual);
    validate_level(level);
    const double p_f = time_averaged_p(factual, event).value;
    const double p_c = time_averaged_p(counterfactual, event).value;
    if (p_f == 0.0 || p_c == 0.0) {
        throw NotComputableError(
            "the time-averaged interval needs a nonzero exceedance proportion in "
            "each scenario");
    }
    const double var_f = time_averaged_var(factual, event);
    const double var_c = time_averaged_var(counterfactual, event);
    const double se = std::sqrt(var_f / (p_f * p_f) + var_c / (p_c * p_c));
    const double z = detail::z_critical(level, side);
    const double log_rr = std::log(p_f) - std::log(p_c);
    RatioInterval out = detail::finish_interval(
        risk_ratio_estimate(p_f, p_c), std::exp(log_rr - z * se),
        std::exp(log_rr + z * se), level, side, Method::time_averaged_delta);
    out.diagnostics["se_log_rr"] = se;
    out.diagnostics["var_p_factual"] = var_f;
    out.diagnostics["var_p_counterfactual"] = var_c;
    return out;
}

// Paired bootstrap that respects the year structure: each replicate first
// draws n_t years with replacement (one draw shared by both scenarios, so
// a jointly unusual year stays joint), then resamples members within each
// drawn year independently per scenario. Member resampling with
// replacement is distributionally a binomial draw at that year's observed
// rate, so counts are generated directly. Stream layout per replicate:
// {0, rep} factual members, {1, rep} counterfactual members, {2, rep} the
// shared year draw — with a single year the member streams coincide with
// the pooled-count resampler's, which this reduces to exactly.
inline BootstrapDistribution year_block_bootstrap(const EnsembleSeries& factual,
                                                  const EnsembleSeries& counterfactual,
                                                  const EventDefinition& event,
                                                  const BootstrapConfig& cfg) {
    iv_detail::require_same_years(factual, counterfactual);
    if (cfg.n_b < 100) {
        throw std::domain_error("bootstrap needs at least 100 replicates");
    }
    const auto counts_f = factual.per_year_counts(event);
    const auto counts_c = counterfactual.per_year_counts(event);
    const int n_t = factual.n_years();
    const int nw_f = factual.members_per_year;
    const int nw_c = counterfactual.members_per_year;

    int y_f = 0;
    int y_c = 0;
    for (const auto& c : counts_f) y_f += c.events;
    for (const auto& c : counts_c) y_c += c.events;
    const int n_f = n_t * nw_f;
    const int n_c = n_t * nw_c;
    if (y_f == 0 || y_c == 0) {
        throw TotalDegeneracyError(
            "no exceedances in at least one scenario; the bootstrap cannot start");
    }

    BootstrapDistribution dist;
    dist.source = CountPair{BinomialCount{y_f, n_f}, BinomialCount{y_c, n_c}};
    dist.theta_hat = std::log(static_cast<double>(y_f) / n_f) -
                     std::log(static_cast<double>(y_c) / n_c);
    dist.policy = cfg.policy;
    dist.rep_yF.resize(cfg.n_b);
    dist.rep_yC.resize(cfg.n_b);
    dist.replicates.reserve(cfg.n_b);
    for (int i = 0; i < cfg.n_b; ++i) {
        const auto rep = static_cast<std::uint64_t>(i);
        SplitMix g_f = SplitMix::derive(cfg.seed, {0, rep});
        SplitMix g_c = SplitMix::derive(cfg.seed, {1, rep});
        SplitMix g_year = SplitMix::derive(cfg.seed, {2, rep});
        int f = 0;
        int c = 0;
        for (int t = 0; t < n_t; ++t) {
            const auto y = static_cast<int>(g_year.uniform_int(static_cast<std::uint32_t>(n_t)));
            f += g_f.binomial(nw_f, counts_f[y].proportion());
            c += g_c.binomial(nw_c, counts_c[y].proportion());
        }
        boot_detail::record_replicate(dist, i, f, n_f, c, n_c);
    }
    boot_detail::stamp_se_hat(dist);
    return dist;
}

} // namespace riskratio
