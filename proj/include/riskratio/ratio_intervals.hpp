#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "riskratio/core.hpp"
#include "riskratio/math.hpp"

namespace riskratio {

// Maximum-likelihood probabilities under the restriction pF = rr0 * pC.
struct ConstrainedMle {
    double pF_tilde = 0.0;
    double pC_tilde = 0.0;
    double rr0 = 1.0;
};

namespace detail {

// Critical values under the adopted convention: a chi-square inversion uses
// the chi-square(1) quantile at the requested interval's own level for both
// sidednesses (a two-sided level-L interval and a one-sided level-l bound
// each invert at their own level); z-based methods use the matching normal
// quantile, where the two readings coincide.
inline double z_critical(double level, Side side) {
    validate_level(level);
    return side == Side::two_sided ? normal_quantile(0.5 * (1.0 + level))
                                   : normal_quantile(level);
}

inline double chi2_critical(double level, Side side) {
    validate_level(level);
    (void)side;
    return chi_square1_quantile(level);
}

// Binomial log-likelihood without the combinatorial constant (it cancels in
// every likelihood ratio we form), with the 0*log(0) = 0 convention.
inline double binom_loglik(int y, int n, double p) {
    if (p <= 0.0) return (y == 0) ? 0.0 : -kInf;
    if (p >= 1.0) return (y == n) ? 0.0 : -kInf;
    double ll = 0.0;
    if (y > 0) ll += y * std::log(p);
    if (y < n) ll += (n - y) * std::log1p(-p);
    return ll;
}

// One scenario's Pearson chi-square contribution, with the conventional
// limits at the parameter-space boundary.
inline double pearson_term(int y, int n, double p) {
    if (p <= 0.0) return (y == 0) ? 0.0 : kInf;
    if (p >= 1.0) return (y == n) ? 0.0 : kInf;
    const double d = y - n * p;
    return d * d / (n * p * (1.0 - p));
}

} // namespace detail

// Closed-form constrained maximizer (the Farrington-Manning quadratic).
// Writing the stationarity condition of the joint binomial likelihood under
// pF = rr0*pC gives A*pC^2 + B*pC + C = 0 with the coefficients below; the
// admissible root is the smaller one, computed in the 2C/(-B+sqrt(disc))
// form which is numerically stable because B < 0 <= disc here.
inline ConstrainedMle constrained_binomial_mle(const CountPair& data, double rr0) {
    if (!(rr0 > 0.0) || std::isinf(rr0)) {
        throw std::domain_error("constrained_binomial_mle: rr0 must be finite and > 0");
    }
    const double yF = data.factual.events, nF = data.factual.trials;
    const double yC = data.counterfactual.events, nC = data.counterfactual.trials;
    const double A = rr0 * (nF + nC);
    const double B = -(rr0 * (nF + yC) + yF + nC);
    const double C = yF + yC;
    const double disc = std::max(B * B - 4.0 * A * C, 0.0);
    double pC = (2.0 * C) / (-B + std::sqrt(disc));
    pC = std::clamp(pC, 0.0, std::min(1.0, 1.0 / rr0));
    return {rr0 * pC, pC, rr0};
}

// Likelihood-ratio statistic lambda(rr0) = 2(l(unconstrained) - l(constrained)).
// Non-negative, zero at rr0 = observed RR when that is finite and nonzero.
inline double lrt_statistic(const CountPair& data, double rr0) {
    const int yF = data.factual.events, nF = data.factual.trials;
    const int yC = data.counterfactual.events, nC = data.counterfactual.trials;
    const ConstrainedMle m = constrained_binomial_mle(data, rr0);
    const double l_hat =
        detail::binom_loglik(yF, nF, data.factual.proportion()) +
        detail::binom_loglik(yC, nC, data.counterfactual.proportion());
    const double l_con = detail::binom_loglik(yF, nF, m.pF_tilde) +
                         detail::binom_loglik(yC, nC, m.pC_tilde);
    return std::max(2.0 * (l_hat - l_con), 0.0);
}

// Score statistic: Pearson chi-square evaluated at the constrained MLE.
inline double koopman_statistic(const CountPair& data, double rr0) {
    const ConstrainedMle m = constrained_binomial_mle(data, rr0);
    return detail::pearson_term(data.factual.events, data.factual.trials, m.pF_tilde) +
           detail::pearson_term(data.counterfactual.events, data.counterfactual.trials,
                                m.pC_tilde);
}

namespace detail {

// The acceptance region {rr0 : stat(rr0) <= q} of either test statistic is
// an interval in log rr0 (the statistic is unimodal with minimum 0 at the
// observed RR). Each endpoint is found by geometric bracket expansion from
// an accepted point followed by bisection to 1e-8 on log rr0.
inline double invert_statistic_endpoint(const std::function<double(double)>& stat_of_log_rr,
                                        double q, double t_accepted, bool lower_endpoint) {
    const double step0 = 0.5;
    double t_in = t_accepted;
    double t_out = t_in;
    double step = step0;
    // Expand away from the accepted region until the test rejects. 700 in
    // log space is past every representable double, so the loop terminating
    // without a sign change means the endpoint is at the domain boundary.
    while (true) {
        t_out = lower_endpoint ? t_in - step : t_in + step;
        if (std::fabs(t_out) > 700.0) {
            return lower_endpoint ? 0.0 : kInf;
        }
        if (stat_of_log_rr(t_out) > q) break;
        step *= 2.0;
    }
    double lo = lower_endpoint ? t_out : t_in;  // stat(lo side facing out) > q
    double hi = lower_endpoint ? t_in : t_out;
    // Invariant: the accepted end stays accepted, the rejected end rejected.
    for (int i = 0; i < 200 && hi - lo > 1e-8; ++i) {
        const double mid = 0.5 * (lo + hi);
        const bool rejected = stat_of_log_rr(mid) > q;
        if (lower_endpoint) {
            (rejected ? lo : hi) = mid;
        } else {
            (rejected ? hi : lo) = mid;
        }
    }
    return std::exp(0.5 * (lo + hi));
}

// Locate a log-rr0 value the test accepts, to seed endpoint inversion.
// The observed RR is the natural seed; when it is 0 or infinity the
// statistic still decays to 0 in the appropriate direction, so scanning
// geometrically from rr0 = 1 finds an accepted point.
inline double find_accepted_log_rr(const std::function<double(double)>& stat_of_log_rr,
                                   double q, double rr_hat, bool scan_up) {
    if (rr_hat > 0.0 && std::isfinite(rr_hat)) {
        return std::log(rr_hat);
    }
    double t = 0.0;
    double step = 1.0;
    while (std::fabs(t) <= 700.0) {
        if (stat_of_log_rr(t) <= q) return t;
        t = scan_up ? t + step : t - step;
        step *= 2.0;
    }
    throw NotComputableError("test inversion found no accepted parameter value");
}

inline RatioInterval finish_interval(ExtReal estimate, double lower, double upper,
                                     double level, Side side, Method method) {
    RatioInterval out;
    out.estimate = estimate;
    out.lower = side == Side::upper_one_sided ? 0.0 : lower;
    out.upper = side == Side::lower_one_sided ? kInf : upper;
    out.level = level;
    out.side = side;
    out.method = method;
    return out;
}

// Shared driver for the two test-inversion methods.
inline RatioInterval invert_test_interval(const CountPair& data, double level, Side side,
                                          Method method,
                                          const std::function<double(const CountPair&, double)>& stat) {
    const int yF = data.factual.events;
    const int yC = data.counterfactual.events;
    if (yF == 0 && yC == 0) {
        throw NotComputableError("no events occur in both scenarios");
    }
    const double q = chi2_critical(level, side);
    const ExtReal est =
        risk_ratio_estimate(data.factual.proportion(), data.counterfactual.proportion());
    auto stat_log = [&](double t) { return stat(data, std::exp(t)); };

    double lower = 0.0;
    double upper = kInf;
    if (side != Side::upper_one_sided) {
        if (yF == 0) {
            lower = 0.0;
        } else {
            const double rr_hat = est.is_infinite() ? kInf : est.as_double();
            const double t0 = find_accepted_log_rr(stat_log, q, rr_hat, /*scan_up=*/true);
            lower = invert_statistic_endpoint(stat_log, q, t0, /*lower_endpoint=*/true);
        }
    }
    if (side != Side::lower_one_sided) {
        if (yC == 0) {
            upper = kInf;
        } else {
            const double rr_hat = est.is_infinite() ? kInf : est.as_double();
            const double t0 = find_accepted_log_rr(stat_log, q, rr_hat, /*scan_up=*/false);
            upper = invert_statistic_endpoint(stat_log, q, t0, /*lower_endpoint=*/false);
        }
    }
    return finish_interval(est, lower, upper, level, side, method);
}

} // namespace detail

// Propagation-of-errors standard error of log RR at the given counts:
// se^2 = (1-pF)/(nF pF) + (1-pC)/(nC pC). Infinite when a count is zero.
inline double log_risk_ratio_se(const CountPair& data) {
    const double pF = data.factual.proportion();
    const double pC = data.counterfactual.proportion();
    return std::sqrt((1.0 - pF) / (data.factual.trials * pF) +
                     (1.0 - pC) / (data.counterfactual.trials * pC));
}

// Normal-theory interval for log RR via propagation of errors:
// exp(log RR_hat +- z * se). Needs at least one event on each side.
inline RatioInterval delta_interval(const CountPair& data, double level, Side side) {
    const int yF = data.factual.events;
    const int yC = data.counterfactual.events;
    if (yF == 0 || yC == 0) {
        throw NotComputableError("delta interval needs at least one event per scenario");
    }
    const double pF = data.factual.proportion();
    const double pC = data.counterfactual.proportion();
    const double z = detail::z_critical(level, side);
    const double se = log_risk_ratio_se(data);
    const double log_rr = std::log(pF) - std::log(pC);
    RatioInterval out = detail::finish_interval(
        risk_ratio_estimate(pF, pC), std::exp(log_rr - z * se), std::exp(log_rr + z * se),
        level, side, Method::delta);
    out.diagnostics["se_log_rr"] = se;
    return out;
}

// Likelihood-ratio inversion: bounds where lambda(rr0) crosses the
// chi-square(1) critical value.
inline RatioInterval lrt_interval(const CountPair& data, double level, Side side) {
    return detail::invert_test_interval(
        data, level, side, Method::lrt,
        [](const CountPair& d, double rr0) { return lrt_statistic(d, rr0); });
}

// Score-test inversion: Pearson chi-square at the constrained MLE.
inline RatioInterval koopman_interval(const CountPair& data, double level, Side side) {
    return detail::invert_test_interval(
        data, level, side, Method::koopman,
        [](const CountPair& d, double rr0) { return koopman_statistic(d, rr0); });
}

// Conditional method: given s = yF + yC, yF is binomial with success
// probability theta = nF*pF / (nF*pF + nC*pC). A Wilson score interval for
// theta maps to RR through RR = (nC/nF) * theta/(1-theta); theta hitting 1
// (only possible when yC = 0) maps the upper bound to +inf.
inline RatioInterval wilson_interval(const CountPair& data, double level, Side side) {
    const int yF = data.factual.events, nF = data.factual.trials;
    const int yC = data.counterfactual.events, nC = data.counterfactual.trials;
    const int s = yF + yC;
    if (s == 0) {
        throw NotComputableError("no events occur in both scenarios");
    }
    const double z = detail::z_critical(level, side);
    const double theta_hat = static_cast<double>(yF) / s;
    const double denom = 1.0 + z * z / s;
    const double center = (theta_hat + z * z / (2.0 * s)) / denom;
    const double half =
        (z / denom) * std::sqrt(theta_hat * (1.0 - theta_hat) / s + z * z / (4.0 * s * s));
    const double ratio = static_cast<double>(nC) / nF;
    auto to_rr = [&](double theta) {
        if (theta <= 0.0) return 0.0;
        if (theta >= 1.0) return kInf;
        return ratio * theta / (1.0 - theta);
    };
    return detail::finish_interval(
        risk_ratio_estimate(data.factual.proportion(), data.counterfactual.proportion()),
        to_rr(center - half), to_rr(center + half), level, side, Method::wilson);
}

} // namespace riskratio
