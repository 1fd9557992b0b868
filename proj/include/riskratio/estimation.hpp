#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "riskratio/core.hpp"
#include "riskratio/math.hpp"

namespace riskratio {

enum class EstimateSource { nonparametric, parametric_normal, eva };

// An event-probability estimate for one scenario, with the sample size that
// backs it.
struct ProbabilityEstimate {
    double value = 0.0;
    int n_effective = 1;
    EstimateSource source = EstimateSource::nonparametric;
    // Set when a fitted-tail estimate was evaluated below the fitted
    // region (cutoff under the fit threshold): the value is an
    // extrapolation the data never constrained directly.
    bool below_threshold_extrapolation = false;
};

// Exceedance frequency: the count of members beyond the cutoff over the
// ensemble size. Total on its domain; zero is a legitimate outcome.
inline ProbabilityEstimate estimate_nonparametric(const RawSample& sample,
                                                  const EventDefinition& event) {
    int k = 0;
    for (double v : sample.values) k += event.exceeds(v) ? 1 : 0;
    return {static_cast<double>(k) / sample.size(), sample.size(),
            EstimateSource::nonparametric};
}

inline ProbabilityEstimate estimate_nonparametric(const BinomialCount& counts) {
    return {counts.proportion(), counts.trials, EstimateSource::nonparametric};
}

// Tail mass of a fitted normal beyond the cutoff, using the unbiased
// (n-1) variance. Never returns exactly 0 or 1: the fitted density has
// unbounded support, and erfc keeps far-tail masses above the underflow
// floor for any physically plausible cutoff.
inline ProbabilityEstimate estimate_parametric_normal(const RawSample& sample,
                                                      const EventDefinition& event) {
    const int n = sample.size();
    if (n < 2) {
        throw DegenerateSampleError(
            "parametric estimate needs at least 2 values");
    }
    // Lower-tail events reduce to upper-tail on the negated axis.
    const double sign = event.tail == Tail::upper ? 1.0 : -1.0;
    double mean = 0.0;
    for (double v : sample.values) mean += sign * v;
    mean /= n;
    double ss = 0.0;
    for (double v : sample.values) {
        const double d = sign * v - mean;
        ss += d * d;
    }
    if (ss <= 0.0) {
        throw DegenerateSampleError("parametric estimate: sample variance is zero");
    }
    const double sd = std::sqrt(ss / (n - 1));
    const double z = (sign * event.cutoff - mean) / sd;
    // The mathematical value is strictly inside (0,1); keep the returned
    // double inside the open interval even where rounding would reach an
    // endpoint (tail mass ~1e-17 from 1, or below the subnormal floor).
    const double p = std::clamp(normal_tail(z), std::numeric_limits<double>::denorm_min(),
                                std::nextafter(1.0, 0.0));
    return {p, n, EstimateSource::parametric_normal};
}

} // namespace riskratio
