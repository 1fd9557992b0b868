#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "riskratio/core.hpp"
#include "riskratio/estimation.hpp"
#include "riskratio/math.hpp"
#include "riskratio/ratio_intervals.hpp"

namespace riskratio {

// Shape magnitudes below this use the Gumbel limit expressions; the xi and
// 1/xi factors in the general forms lose all precision long before the
// limit stops being the better approximation.
inline constexpr double kGumbelSwitch = 1e-8;

struct GevParams {
    double mu = 0.0;
    double sigma = 1.0;
    double xi = 0.0;

    GevParams() = default;
    GevParams(double mu_, double sigma_, double xi_) : mu(mu_), sigma(sigma_), xi(xi_) {
        if (!std::isfinite(mu) || !std::isfinite(sigma) || !std::isfinite(xi) ||
            !(sigma > 0.0)) {
            throw std::domain_error("GevParams: need finite values with sigma > 0");
        }
    }
};

using Matrix3 = std::array<std::array<double, 3>, 3>;

// A point-process fit above a threshold, parameterized so (mu, sigma, xi)
// are the GEV parameters of the maximum over one block (n_blocks blocks of
// data total). hessian_inverse, when present, is the inverse of the
// observed information (negative Hessian of the log-likelihood) at the
// optimum: the usual large-sample covariance of (mu, sigma, xi).
struct PotFit {
    GevParams params;
    double threshold = 0.0;
    double n_blocks = 1.0;
    int n_exceedances = 0;
    double log_likelihood = -kInf;
    bool converged = false;
    std::optional<Matrix3> hessian_inverse;
};

namespace eva_detail {

// t = (y - mu)/sigma reduced once; callers pass raw parameters so the
// optimizer can probe sigma <= 0 and simply see an impossible model.
inline double gev_cdf_raw(double y, double mu, double sigma, double xi) {
    const double t = (y - mu) / sigma;
    if (std::fabs(xi) < kGumbelSwitch) {
        return std::exp(-std::exp(-t));
    }
    const double arg = 1.0 + xi * t;
    if (arg <= 0.0) {
        // Outside the support: xi > 0 has a finite lower endpoint (mass 0
        // below it), xi < 0 a finite upper endpoint (mass 1 above it).
        return xi > 0.0 ? 0.0 : 1.0;
    }
    return std::exp(-std::pow(arg, -1.0 / xi));
}

// 1 - F(y) computed through expm1 so small tail masses keep relative
// precision instead of cancelling against 1.
inline double gev_exceedance_raw(double y, double mu, double sigma, double xi) {
    const double t = (y - mu) / sigma;
    double cum;  // the exponent -log F(y), i.e. the exceedance intensity
    if (std::fabs(xi) < kGumbelSwitch) {
        cum = std::exp(-t);
    } else {
        const double arg = 1.0 + xi * t;
        if (arg <= 0.0) return xi > 0.0 ? 1.0 : 0.0;
        cum = std::pow(arg, -1.0 / xi);
    }
    return -std::expm1(-cum);
}

} // namespace eva_detail

inline double gev_cdf(double y, const GevParams& p) {
    return eva_detail::gev_cdf_raw(y, p.mu, p.sigma, p.xi);
}

inline double gev_exceedance(double y, const GevParams& p) {
    return eva_detail::gev_exceedance_raw(y, p.mu, p.sigma, p.xi);
}

// The level exceeded once per T blocks on average: the 1 - 1/T quantile.
inline double return_value(double T, const GevParams& p) {
    if (!(T > 1.0)) {
        throw std::domain_error("return_value: return period must exceed 1 block");
    }
    const double w = -std::log1p(-1.0 / T);  // -log(1 - 1/T), in (0, inf)
    if (std::fabs(p.xi) < kGumbelSwitch) {
        return p.mu - p.sigma * std::log(w);
    }
    return p.mu + (p.sigma / p.xi) * (std::pow(w, -p.xi) - 1.0);
}

// Exceedance probability for a single block implied by one for the maximum
// over b blocks: P(m_1 > z) = 1 - P(m_b < z)^(1/b). b is a positive real;
// it need not be an integer.
inline double single_block_exceedance(double p_b_blocks, double b) {
    if (!(b > 0.0) || !std::isfinite(b)) {
        throw std::domain_error("single_block_exceedance: b must be positive and finite");
    }
    if (!(p_b_blocks >= 0.0 && p_b_blocks <= 1.0)) {
        throw std::domain_error("single_block_exceedance: probability outside [0,1]");
    }
    return -std::expm1(std::log1p(-p_b_blocks) / b);
}

namespace eva_detail {

// Point-process log-likelihood for exceedances of u, with n_blocks blocks:
//   -n_blocks * [1 + xi (u - mu)/sigma]^(-1/xi)
//   - n_exc * log sigma - (1/xi + 1) * sum log[1 + xi (y_i - mu)/sigma],
// and the xi -> 0 limit -n_blocks*exp(-(u-mu)/sigma) - n_exc*log sigma
// - sum (y_i - mu)/sigma. Parameter sets that put the threshold or any
// exceedance outside the support have likelihood -inf.
inline double pp_loglik_raw(const std::vector<double>& exc, double u, double n_blocks,
                            double mu, double sigma, double xi) {
    if (!(sigma > 0.0)) return -kInf;
    const double inv_sigma = 1.0 / sigma;
    double ll = -static_cast<double>(exc.size()) * std::log(sigma);
    if (std::fabs(xi) < kGumbelSwitch) {
        ll -= n_blocks * std::exp(-(u - mu) * inv_sigma);
        for (double y : exc) ll -= (y - mu) * inv_sigma;
        return ll;
    }
    const double arg_u = 1.0 + xi * (u - mu) * inv_sigma;
    if (arg_u <= 0.0) return -kInf;
    ll -= n_blocks * std::pow(arg_u, -1.0 / xi);
    const double shape_coef = 1.0 / xi + 1.0;
    for (double y : exc) {
        const double arg = 1.0 + xi * (y - mu) * inv_sigma;
        if (arg <= 0.0) return -kInf;
        ll -= shape_coef * std::log(arg);
    }
    return ll;
}

// The location that gives exceedance probability p at level c under
// (sigma, xi): the inverse of gev_exceedance in mu. Also the constrained
// counterfactual location in the profile-likelihood interval.
inline double location_for_exceedance(double c, double sigma, double xi, double p) {
    const double w = -std::log1p(-p);  // requires p in (0, 1)
    if (std::fabs(xi) < kGumbelSwitch) {
        return c + sigma * std::log(w);
    }
    return c + (sigma / xi) * (1.0 - std::pow(w, -xi));
}

struct NmResult {
    std::vector<double> x;
    double f = kInf;
    bool tol_met = false;
};

// Nelder-Mead simplex minimization (reflection 1, expansion 2, contraction
// 0.5, shrink 0.5). Stops when the value spread across the simplex falls
// below f_tol relative to the best value. Infinite objective values are
// legal; they mark infeasible parameter sets and get reflected away.
inline NmResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                            const std::vector<double>& x0, const std::vector<double>& step,
                            int max_iter, double f_tol) {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> xs(n + 1, x0);
    std::vector<double> fs(n + 1);
    for (std::size_t i = 0; i < n; ++i) xs[i + 1][i] += step[i];
    for (std::size_t i = 0; i <= n; ++i) fs[i] = f(xs[i]);

    NmResult out;
    for (int iter = 0; iter < max_iter; ++iter) {
        std::size_t ib = 0, iw = 0;
        for (std::size_t i = 1; i <= n; ++i) {
            if (fs[i] < fs[ib]) ib = i;
            if (fs[i] > fs[iw]) iw = i;
        }
        std::size_t isw = (iw == 0) ? 1 : 0;  // worst among the rest
        for (std::size_t i = 0; i <= n; ++i) {
            if (i != iw && fs[i] > fs[isw]) isw = i;
        }
        if (fs[iw] - fs[ib] <= f_tol * (1.0 + std::fabs(fs[ib]))) {
            out.tol_met = true;
            break;
        }

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == iw) continue;
            for (std::size_t j = 0; j < n; ++j) centroid[j] += xs[i][j];
        }
        for (double& cj : centroid) cj /= static_cast<double>(n);

        auto along = [&](double coef) {
            std::vector<double> x(n);
            for (std::size_t j = 0; j < n; ++j) {
                x[j] = centroid[j] + coef * (xs[iw][j] - centroid[j]);
            }
            return x;
        };
        std::vector<double> xr = along(-1.0);
        const double fr = f(xr);
        if (fr < fs[ib]) {
            std::vector<double> xe = along(-2.0);
            const double fe = f(xe);
            if (fe < fr) {
                xs[iw] = std::move(xe);
                fs[iw] = fe;
            } else {
                xs[iw] = std::move(xr);
                fs[iw] = fr;
            }
        } else if (fr < fs[isw]) {
            xs[iw] = std::move(xr);
            fs[iw] = fr;
        } else {
            std::vector<double> xc = along(fr < fs[iw] ? -0.5 : 0.5);
            const double fc = f(xc);
            if (fc < std::min(fr, fs[iw])) {
                xs[iw] = std::move(xc);
                fs[iw] = fc;
            } else {
                for (std::size_t i = 0; i <= n; ++i) {
                    if (i == ib) continue;
                    for (std::size_t j = 0; j < n; ++j) {
                        xs[i][j] = xs[ib][j] + 0.5 * (xs[i][j] - xs[ib][j]);
                    }
                    fs[i] = f(xs[i]);
                }
            }
        }
    }
    std::size_t ib = 0;
    for (std::size_t i = 1; i <= n; ++i) {
        if (fs[i] < fs[ib]) ib = i;
    }
    out.x = xs[ib];
    out.f = fs[ib];
    return out;
}

// Two-stage minimization: a full run, then a fresh small simplex around the
// incumbent. The restart breaks the stagnation the simplex method is prone
// to and re-verifies convergence at the tighter scale.
inline NmResult minimize(const std::function<double(const std::vector<double>&)>& f,
                         const std::vector<double>& x0, std::vector<double> step) {
    const NmResult first = nelder_mead(f, x0, step, 2000, 1e-13);
    for (double& s : step) s *= 1e-3;
    NmResult second = nelder_mead(f, first.x, step, 2000, 1e-13);
    if (first.f < second.f) {
        second.x = first.x;
        second.f = first.f;
    }
    return second;
}

// An optimized shape this close to the +-1 box edge means the optimizer was
// stopped by the constraint, not by a stationary point.
inline bool shape_at_boundary(double xi) { return std::fabs(xi) >= 1.0 - 1e-6; }

struct ExceedanceFit {
    GevParams params;
    double log_likelihood = -kInf;
    bool converged = false;
};

// Maximize the point-process likelihood over (mu, log sigma, xi) with
// restarts over starting shapes. The log-sigma coordinate keeps the scale
// positive without an explicit constraint; xi is boxed to (-1, 1), where
// hitting the box means the fit is not trustworthy.
inline ExceedanceFit fit_exceedances(const std::vector<double>& exc, double threshold,
                                     double n_blocks) {
    double mean = 0.0;
    for (double y : exc) mean += y;
    mean /= static_cast<double>(exc.size());
    double ss = 0.0;
    for (double y : exc) ss += (y - mean) * (y - mean);
    const double sd = exc.size() > 1
                          ? std::sqrt(ss / static_cast<double>(exc.size() - 1))
                          : 0.0;
    const double sigma0 = sd > 0.0 ? sd : 1.0;

    auto objective = [&](const std::vector<double>& x) {
        if (std::fabs(x[1]) > 50.0 || std::fabs(x[2]) >= 1.0) return kInf;
        const double v =
            -pp_loglik_raw(exc, threshold, n_blocks, x[0], std::exp(x[1]), x[2]);
        return std::isnan(v) ? kInf : v;
    };

    const double xi_starts[] = {-0.1, 0.0, 0.1};
    ExceedanceFit best;
    double best_obj = kInf;
    bool best_converged = false;
    for (double xi0 : xi_starts) {
        const std::vector<double> x0 = {threshold, std::log(sigma0), xi0};
        const std::vector<double> step = {0.5 * sigma0, 0.5, 0.2};
        const NmResult r = minimize(objective, x0, step);
        if (r.f == kInf) continue;
        const bool r_converged = r.tol_met && !shape_at_boundary(r.x[2]);
        // A converged restart beats any unconverged one; within a class the
        // higher likelihood wins, with ties going to the earlier start.
        const bool better = (r_converged && !best_converged) ||
                            (r_converged == best_converged && r.f < best_obj);
        if (better) {
            best_obj = r.f;
            best_converged = r_converged;
            best.params = GevParams(r.x[0], std::exp(r.x[1]), r.x[2]);
            best.log_likelihood = -r.f;
            best.converged = r_converged;
        }
    }
    if (best_obj == kInf) {
        throw ConvergenceError(
            "extreme-value fit: likelihood not evaluable from any starting point");
    }
    return best;
}

// Cholesky-based inverse of a symmetric positive definite 3x3 matrix;
// nullopt when a pivot fails, i.e. the matrix is not positive definite.
inline std::optional<Matrix3> invert_spd3(const Matrix3& a) {
    Matrix3 l{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a[i][j];
            for (int k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
            if (i == j) {
                if (!(s > 0.0)) return std::nullopt;
                l[i][i] = std::sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    // Solve L L^T X = I column by column.
    Matrix3 inv{};
    for (int col = 0; col < 3; ++col) {
        std::array<double, 3> y{};
        for (int i = 0; i < 3; ++i) {
            double s = (i == col) ? 1.0 : 0.0;
            for (int k = 0; k < i; ++k) s -= l[i][k] * y[k];
            y[i] = s / l[i][i];
        }
        for (int i = 2; i >= 0; --i) {
            double s = y[i];
            for (int k = i + 1; k < 3; ++k) s -= l[k][i] * inv[k][col];
            inv[i][col] = s / l[i][i];
        }
    }
    for (int i = 0; i < 3; ++i) {
        for (int j = i + 1; j < 3; ++j) {
            const double sym = 0.5 * (inv[i][j] + inv[j][i]);
            inv[i][j] = inv[j][i] = sym;
        }
    }
    return inv;
}

// Central-difference observed information at the optimum, inverted to a
// covariance. Differencing in (mu, sigma, xi) directly; the sigma step is
// clipped to keep the probe points positive.
inline std::optional<Matrix3> curvature_covariance(
    const std::function<double(double, double, double)>& ll, const GevParams& p) {
    const std::array<double, 3> theta = {p.mu, p.sigma, p.xi};
    std::array<double, 3> h{};
    h[0] = 1e-4 * std::max(1.0, std::fabs(p.mu));
    h[1] = std::min(1e-4 * std::max(1.0, p.sigma), 0.45 * p.sigma);
    h[2] = 1e-4;
    auto at = [&](const std::array<double, 3>& t) { return ll(t[0], t[1], t[2]); };
    const double f0 = at(theta);

    Matrix3 info{};
    for (int i = 0; i < 3; ++i) {
        for (int j = i; j < 3; ++j) {
            double second;
            if (i == j) {
                auto tp = theta, tm = theta;
                tp[i] += h[i];
                tm[i] -= h[i];
                second = (at(tp) - 2.0 * f0 + at(tm)) / (h[i] * h[i]);
            } else {
                auto tpp = theta, tpm = theta, tmp = theta, tmm = theta;
                tpp[i] += h[i]; tpp[j] += h[j];
                tpm[i] += h[i]; tpm[j] -= h[j];
                tmp[i] -= h[i]; tmp[j] += h[j];
                tmm[i] -= h[i]; tmm[j] -= h[j];
                second = (at(tpp) - at(tpm) - at(tmp) + at(tmm)) / (4.0 * h[i] * h[j]);
            }
            if (!std::isfinite(second)) return std::nullopt;
            info[i][j] = info[j][i] = -second;
        }
    }
    return invert_spd3(info);
}

} // namespace eva_detail

// Evaluate the point-process log-likelihood of a sample's exceedances of
// threshold under the given parameters. The value fit_pot maximizes.
inline double pp_log_likelihood(const RawSample& sample, double threshold,
                                double n_blocks, const GevParams& p) {
    std::vector<double> exc;
    for (double v : sample.values) {
        if (v > threshold) exc.push_back(v);
    }
    return eva_detail::pp_loglik_raw(exc, threshold, n_blocks, p.mu, p.sigma, p.xi);
}

inline PotFit fit_pot(const RawSample& sample, double threshold, double n_blocks) {
    if (!std::isfinite(threshold)) {
        throw std::domain_error("fit_pot: threshold must be finite");
    }
    if (!(n_blocks > 0.0) || !std::isfinite(n_blocks)) {
        throw std::domain_error("fit_pot: n_blocks must be positive and finite");
    }
    std::vector<double> exc;
    for (double v : sample.values) {
        if (v > threshold) exc.push_back(v);
    }
    if (exc.size() < 5) {
        throw InsufficientExceedancesError(
            "fit_pot: need at least 5 threshold exceedances, have " +
            std::to_string(exc.size()));
    }

    const eva_detail::ExceedanceFit fitted =
        eva_detail::fit_exceedances(exc, threshold, n_blocks);

    PotFit out;
    out.params = fitted.params;
    out.threshold = threshold;
    out.n_blocks = n_blocks;
    out.n_exceedances = static_cast<int>(exc.size());
    out.log_likelihood = fitted.log_likelihood;
    out.converged = fitted.converged;
    if (out.converged) {
        auto ll = [&](double mu, double sigma, double xi) {
            return eva_detail::pp_loglik_raw(exc, threshold, n_blocks, mu, sigma, xi);
        };
        out.hessian_inverse = eva_detail::curvature_covariance(ll, out.params);
    }
    return out;
}

// Exceedance probability of the event cutoff under a fitted model. The fit
// machinery is upper-tail only: lower-tail events must be negated (values
// and cutoff) before fitting, which the command-line layer does.
inline ProbabilityEstimate eva_probability(const PotFit& fit, const EventDefinition& event) {
    if (event.tail != Tail::upper) {
        throw std::domain_error(
            "eva_probability: negate values and cutoff to map a lower-tail event "
            "to the upper tail before fitting");
    }
    if (!fit.converged) {
        throw ConvergenceError("eva_probability: the fit did not converge");
    }
    ProbabilityEstimate out;
    out.value = gev_exceedance(event.cutoff, fit.params);
    out.n_effective = fit.n_exceedances;
    out.source = EstimateSource::eva;
    out.below_threshold_extrapolation = event.cutoff < fit.threshold;
    return out;
}

namespace eva_detail {

// The profile-likelihood problem for RR estimated by two extreme-value
// fits. Built once per dataset; lambda(rr0) then runs one constrained
// maximization per evaluation, warm-started from the previous solution
// (the constrained optimum moves continuously in rr0).
struct LrtProblem {
    std::vector<double> exc_f, exc_c;
    double u_f = 0.0, u_c = 0.0;
    double nb_f = 1.0, nb_c = 1.0;
    double cutoff = 0.0;
    GevParams factual_hat;
    std::optional<GevParams> counterfactual_hat;
    double l_hat = -kInf;
    double p_f_hat = 0.0;
    double p_c_hat = 0.0;
    mutable std::optional<std::vector<double>> warm;

    // 2 * (unconstrained - constrained) log-likelihood at RR = rr0, with the
    // constrained maximization over (mu_F, log sigma_F, xi_F, log sigma_C,
    // xi_C) and the counterfactual location tied to the factual exceedance
    // probability through the constraint p_C = p_F / rr0.
    double lambda(double rr0) const {
        auto objective = [&](const std::vector<double>& x) {
            if (std::fabs(x[1]) > 50.0 || std::fabs(x[3]) > 50.0 ||
                std::fabs(x[2]) >= 1.0 || std::fabs(x[4]) >= 1.0) {
                return kInf;
            }
            const double mu_f = x[0], s_f = std::exp(x[1]), xi_f = x[2];
            const double s_c = std::exp(x[3]), xi_c = x[4];
            const double p_f = gev_exceedance_raw(cutoff, mu_f, s_f, xi_f);
            if (!(p_f > 0.0)) return kInf;
            const double p_c = p_f / rr0;
            if (!(p_c > 0.0 && p_c < 1.0)) return kInf;
            const double mu_c = location_for_exceedance(cutoff, s_c, xi_c, p_c);
            if (!std::isfinite(mu_c)) return kInf;
            const double v = -pp_loglik_raw(exc_f, u_f, nb_f, mu_f, s_f, xi_f) -
                             pp_loglik_raw(exc_c, u_c, nb_c, mu_c, s_c, xi_c);
            return std::isnan(v) ? kInf : v;
        };

        // Heuristic start: factual location adjusted so the constraint is
        // satisfiable with room to spare, scales and shapes from the
        // unconstrained fits (counterfactual falling back to the factual
        // scale and a Gumbel shape when it was never fit).
        const double p_f_target = 0.9 * std::min({std::max(p_f_hat, 1e-8), rr0, 1.0});
        const double s_c0 = counterfactual_hat ? counterfactual_hat->sigma
                                               : factual_hat.sigma;
        const double xi_c0 = counterfactual_hat ? counterfactual_hat->xi : 0.0;
        const std::vector<double> x_heuristic = {
            location_for_exceedance(cutoff, factual_hat.sigma, factual_hat.xi,
                                    p_f_target),
            std::log(factual_hat.sigma), factual_hat.xi, std::log(s_c0), xi_c0};
        const std::vector<double> step = {0.25 * factual_hat.sigma, 0.25, 0.1, 0.25,
                                          0.1};

        NmResult best = minimize(objective, x_heuristic, step);
        if (warm && objective(*warm) < kInf) {
            const NmResult from_warm = minimize(objective, *warm, step);
            if (from_warm.f < best.f) best = from_warm;
        }
        if (best.f == kInf || !best.tol_met) {
            throw ConvergenceError(
                "profile fit for the extreme-value likelihood-ratio interval did "
                "not converge at rr0 = " +
                std::to_string(rr0));
        }
        if (shape_at_boundary(best.x[2]) || shape_at_boundary(best.x[4])) {
            throw ConvergenceError(
                "profile fit pinned a shape parameter at the box boundary at "
                "rr0 = " +
                std::to_string(rr0));
        }
        warm = best.x;
        return std::max(0.0, 2.0 * (l_hat - (-best.f)));
    }
};

inline std::vector<double> exceedances_of(const RawSample& sample, double threshold) {
    std::vector<double> exc;
    for (double v : sample.values) {
        if (v > threshold) exc.push_back(v);
    }
    return exc;
}

inline LrtProblem make_lrt_problem(const RawSample& factual,
                                   const RawSample& counterfactual,
                                   const EventDefinition& event, double threshold_factual,
                                   double threshold_counterfactual,
                                   double n_blocks_factual,
                                   double n_blocks_counterfactual) {
    if (event.tail != Tail::upper) {
        throw std::domain_error(
            "extreme-value intervals: negate values and cutoff to map a lower-tail "
            "event to the upper tail before fitting");
    }
    if (!std::isfinite(threshold_factual) || !std::isfinite(threshold_counterfactual)) {
        throw std::domain_error("extreme-value intervals: thresholds must be finite");
    }
    LrtProblem prob;
    prob.u_f = threshold_factual;
    prob.u_c = threshold_counterfactual;
    // n_blocks = 0 asks for the default: one block per ensemble member.
    prob.nb_f = n_blocks_factual > 0.0 ? n_blocks_factual
                                       : static_cast<double>(factual.size());
    prob.nb_c = n_blocks_counterfactual > 0.0
                    ? n_blocks_counterfactual
                    : static_cast<double>(counterfactual.size());
    prob.cutoff = event.cutoff;
    prob.exc_f = exceedances_of(factual, threshold_factual);
    prob.exc_c = exceedances_of(counterfactual, threshold_counterfactual);

    if (prob.exc_f.size() < 5) {
        throw InsufficientExceedancesError(
            "extreme-value intervals: the factual sample needs at least 5 threshold "
            "exceedances, has " +
            std::to_string(prob.exc_f.size()));
    }
    const ExceedanceFit fit_f = fit_exceedances(prob.exc_f, prob.u_f, prob.nb_f);
    if (!fit_f.converged) {
        throw ConvergenceError("extreme-value intervals: the factual fit did not converge");
    }
    prob.factual_hat = fit_f.params;
    prob.p_f_hat = gev_exceedance(event.cutoff, fit_f.params);
    double l_hat_c = 0.0;  // supremum with no exceedances: intensity -> 0
    if (!prob.exc_c.empty()) {
        const ExceedanceFit fit_c = fit_exceedances(prob.exc_c, prob.u_c, prob.nb_c);
        if (!fit_c.converged) {
            throw ConvergenceError(
                "extreme-value intervals: the counterfactual fit did not converge");
        }
        prob.counterfactual_hat = fit_c.params;
        prob.p_c_hat = gev_exceedance(event.cutoff, fit_c.params);
        l_hat_c = fit_c.log_likelihood;
    }
    prob.l_hat = fit_f.log_likelihood + l_hat_c;
    return prob;
}

} // namespace eva_detail

// The likelihood-ratio statistic for RR = rr0 under per-scenario
// point-process models; the quantity whose chi-square(1) inversion gives
// eva_lrt_interval. Exposed for diagnostics and profile plots.
inline double eva_lrt_statistic(const RawSample& factual, const RawSample& counterfactual,
                                const EventDefinition& event, double threshold_factual,
                                double threshold_counterfactual, double rr0,
                                double n_blocks_factual = 0.0,
                                double n_blocks_counterfactual = 0.0) {
    if (!(rr0 > 0.0) || std::isinf(rr0)) {
        throw std::domain_error("eva_lrt_statistic: rr0 must be finite and > 0");
    }
    const eva_detail::LrtProblem prob = eva_detail::make_lrt_problem(
        factual, counterfactual, event, threshold_factual, threshold_counterfactual,
        n_blocks_factual, n_blocks_counterfactual);
    return prob.lambda(rr0);
}

// Confidence interval for RR from inverting the likelihood-ratio test under
// per-scenario extreme-value models. Handles a counterfactual with zero
// threshold exceedances: the estimate is then infinite and the result is a
// finite lower bound with upper = +inf, which is the construction's key
// capability over the count-based methods.
inline RatioInterval eva_lrt_interval(const RawSample& factual,
                                      const RawSample& counterfactual,
                                      const EventDefinition& event,
                                      double threshold_factual,
                                      double threshold_counterfactual, double level,
                                      Side side, double n_blocks_factual = 0.0,
                                      double n_blocks_counterfactual = 0.0) {
    const eva_detail::LrtProblem prob = eva_detail::make_lrt_problem(
        factual, counterfactual, event, threshold_factual, threshold_counterfactual,
        n_blocks_factual, n_blocks_counterfactual);
    const double q = detail::chi2_critical(level, side);
    if (prob.p_f_hat == 0.0 && prob.p_c_hat == 0.0) {
        throw NotComputableError(
            "the fitted models assign zero probability to the event in both scenarios");
    }
    const ExtReal est = risk_ratio_estimate(prob.p_f_hat, prob.p_c_hat);
    auto stat_log = [&](double t) { return prob.lambda(std::exp(t)); };

    double lower = 0.0;
    double upper = kInf;
    if (side != Side::upper_one_sided && prob.p_f_hat > 0.0) {
        const double rr_hat = est.is_infinite() ? kInf : est.as_double();
        const double t0 = detail::find_accepted_log_rr(stat_log, q, rr_hat, true);
        lower = detail::invert_statistic_endpoint(stat_log, q, t0, true);
    }
    if (side != Side::lower_one_sided && prob.p_c_hat > 0.0) {
        const double rr_hat = est.is_infinite() ? kInf : est.as_double();
        const double t0 = detail::find_accepted_log_rr(stat_log, q, rr_hat, false);
        upper = detail::invert_statistic_endpoint(stat_log, q, t0, false);
    }
    RatioInterval out =
        detail::finish_interval(est, lower, upper, level, side, Method::eva_lrt);
    out.diagnostics["p_factual"] = prob.p_f_hat;
    out.diagnostics["p_counterfactual"] = prob.p_c_hat;
    out.diagnostics["n_exceedances_factual"] = static_cast<double>(prob.exc_f.size());
    out.diagnostics["n_exceedances_counterfactual"] =
        static_cast<double>(prob.exc_c.size());
    return out;
}

// Normal-theory interval for RR from two fitted models: log RR as a
// function of the six parameters, variance by propagating each fit's
// curvature covariance through the gradient. Secondary to
// eva_lrt_interval, which respects the likelihood's asymmetry.
inline RatioInterval eva_delta_interval(const PotFit& factual, const PotFit& counterfactual,
                                        const EventDefinition& event, double level,
                                        Side side) {
    if (event.tail != Tail::upper) {
        throw std::domain_error(
            "eva_delta_interval: negate values and cutoff to map a lower-tail event "
            "to the upper tail before fitting");
    }
    if (!factual.converged || !counterfactual.converged) {
        throw ConvergenceError("eva_delta_interval: both fits must have converged");
    }
    if (!factual.hessian_inverse || !counterfactual.hessian_inverse) {
        throw NotComputableError(
            "eva_delta_interval: a fit lacks a positive definite curvature estimate");
    }
    const double c = event.cutoff;
    const double p_f = gev_exceedance(c, factual.params);
    const double p_c = gev_exceedance(c, counterfactual.params);
    if (!(p_f > 0.0) || !(p_c > 0.0)) {
        throw NotComputableError(
            "eva_delta_interval: a fitted event probability is zero; the log-RR "
            "gradient does not exist there");
    }

    // d log p / d(mu, sigma, xi) by central differences, one scenario at a
    // time; Var(log RR) = gF' SigmaF gF + gC' SigmaC gC.
    auto grad_log_p = [&](const GevParams& p) {
        std::array<double, 3> theta = {p.mu, p.sigma, p.xi};
        std::array<double, 3> h = {1e-5 * std::max(1.0, std::fabs(p.mu)),
                                   std::min(1e-5 * std::max(1.0, p.sigma), 0.45 * p.sigma),
                                   1e-5};
        std::array<double, 3> g{};
        for (int i = 0; i < 3; ++i) {
            auto tp = theta, tm = theta;
            tp[i] += h[i];
            tm[i] -= h[i];
            const double fp = eva_detail::gev_exceedance_raw(c, tp[0], tp[1], tp[2]);
            const double fm = eva_detail::gev_exceedance_raw(c, tm[0], tm[1], tm[2]);
            if (!(fp > 0.0) || !(fm > 0.0)) {
                throw NotComputableError(
                    "eva_delta_interval: the event probability vanishes next to the "
                    "optimum; the log-RR gradient does not exist there");
            }
            g[i] = (std::log(fp) - std::log(fm)) / (2.0 * h[i]);
        }
        return g;
    };
    auto quad_form = [](const std::array<double, 3>& g, const Matrix3& cov) {
        double s = 0.0;
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) s += g[i] * cov[i][j] * g[j];
        }
        return s;
    };
    const double var = quad_form(grad_log_p(factual.params), *factual.hessian_inverse) +
                       quad_form(grad_log_p(counterfactual.params),
                                 *counterfactual.hessian_inverse);
    if (!(var >= 0.0) || !std::isfinite(var)) {
        throw NotComputableError("eva_delta_interval: variance estimate is not finite");
    }
    const double se = std::sqrt(var);
    const double z = detail::z_critical(level, side);
    const double log_rr = std::log(p_f) - std::log(p_c);
    RatioInterval out = detail::finish_interval(
        risk_ratio_estimate(p_f, p_c), std::exp(log_rr - z * se),
        std::exp(log_rr + z * se), level, side, Method::eva_delta);
    out.diagnostics["se_log_rr"] = se;
    out.diagnostics["p_factual"] = p_f;
    out.diagnostics["p_counterfactual"] = p_c;
    return out;
}

} // namespace riskratio
