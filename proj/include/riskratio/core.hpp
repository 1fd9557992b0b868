#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "riskratio/math.hpp"

namespace riskratio {

// Raised when a method's bound is undefined for the given data, e.g. zero
// counts for the delta method or both counts zero for the test inversions.
struct NotComputableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bootstrap resampling from data with no variability on one side.
struct TotalDegeneracyError : NotComputableError {
    using NotComputableError::NotComputableError;
};

// Parametric fit on a sample whose variance is zero.
struct DegenerateSampleError : NotComputableError {
    using NotComputableError::NotComputableError;
};

// Too few threshold exceedances to attempt an extreme-value fit.
struct InsufficientExceedancesError : NotComputableError {
    using NotComputableError::NotComputableError;
};

// Numerical optimization failed to converge.
struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Problem size exceeds a configured cap (exact-method enumeration).
struct InfeasibleSizeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input data or command arguments.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A value in [0, +inf] with a distinct undefined state (0/0). Undefined is
// an explicit state rather than a NaN payload so callers can branch on
// degeneracy without inspecting float bits.
class ExtReal {
public:
    static ExtReal finite(double v) {
        if (!(v >= 0.0) || std::isinf(v)) {
            throw std::domain_error("ExtReal::finite: need a finite value >= 0");
        }
        return ExtReal(State::finite, v);
    }
    static ExtReal infinity() { return ExtReal(State::infinite, kInf); }
    static ExtReal undefined() { return ExtReal(State::undefined, 0.0); }

    bool is_finite() const { return state_ == State::finite; }
    bool is_infinite() const { return state_ == State::infinite; }
    bool is_undefined() const { return state_ == State::undefined; }

    // Numeric view: finite value or +inf. Undefined has no numeric view.
    double as_double() const {
        if (is_undefined()) {
            throw std::domain_error("ExtReal::as_double: value is undefined");
        }
        return value_;
    }

    ExtReal reciprocal() const {
        if (is_undefined()) return undefined();
        if (is_infinite()) return finite(0.0);
        if (value_ == 0.0) return infinity();
        return finite(1.0 / value_);
    }

    friend bool operator==(const ExtReal& a, const ExtReal& b) {
        return a.state_ == b.state_ && (a.state_ != State::finite || a.value_ == b.value_);
    }

private:
    enum class State { finite, infinite, undefined };
    ExtReal(State s, double v) : state_(s), value_(v) {}
    State state_;
    double value_;
};

// Events and trials for one scenario; the sufficient statistic for
// nonparametric estimation.
struct BinomialCount {
    int events = 0;
    int trials = 1;

    BinomialCount() = default;
    BinomialCount(int events_, int trials_) : events(events_), trials(trials_) {
        if (trials < 1) throw std::domain_error("BinomialCount: trials must be >= 1");
        if (events < 0 || events > trials) {
            throw std::domain_error("BinomialCount: need 0 <= events <= trials");
        }
    }

    double proportion() const {
        return static_cast<double>(events) / static_cast<double>(trials);
    }
};

// One value per ensemble member, in the physical units of the analyzed
// variable.
struct RawSample {
    std::vector<double> values;

    explicit RawSample(std::vector<double> v) : values(std::move(v)) {
        if (values.empty()) throw std::domain_error("RawSample: sample is empty");
        for (double x : values) {
            if (!std::isfinite(x)) {
                throw std::domain_error("RawSample: values must be finite");
            }
        }
    }

    int size() const { return static_cast<int>(values.size()); }
};

enum class Tail { upper, lower };

// Threshold defining the event, in the units of the sample values.
// Lower-tail events are handled by negating values and cutoff once at
// entry, so everything downstream is upper-tail only.
struct EventDefinition {
    double cutoff = 0.0;
    Tail tail = Tail::upper;

    EventDefinition(double cutoff_, Tail tail_) : cutoff(cutoff_), tail(tail_) {
        if (!std::isfinite(cutoff)) {
            throw std::domain_error("EventDefinition: cutoff must be finite");
        }
    }

    bool exceeds(double value) const {
        return tail == Tail::upper ? value > cutoff : value < cutoff;
    }
};

// Factual and counterfactual counts: the input of every count-based
// interval method.
struct CountPair {
    BinomialCount factual;
    BinomialCount counterfactual;
};

struct SamplePair {
    RawSample factual;
    RawSample counterfactual;
};

// The unit of an RR analysis: factual and counterfactual ensembles in a
// matching representation (both counts or both raw).
class ScenarioPair {
public:
    static ScenarioPair from_counts(BinomialCount factual, BinomialCount counterfactual) {
        return ScenarioPair(CountPair{factual, counterfactual});
    }
    static ScenarioPair from_samples(RawSample factual, RawSample counterfactual) {
        return ScenarioPair(SamplePair{std::move(factual), std::move(counterfactual)});
    }

    bool has_counts() const { return std::holds_alternative<CountPair>(data_); }

    const CountPair& counts() const {
        if (!has_counts()) {
            throw std::logic_error("ScenarioPair: counts requested from raw representation");
        }
        return std::get<CountPair>(data_);
    }

    const SamplePair& samples() const {
        if (has_counts()) {
            throw std::logic_error("ScenarioPair: samples requested from counts representation");
        }
        return std::get<SamplePair>(data_);
    }

    // Reduce either representation to exceedance counts for the given event.
    CountPair to_counts(const EventDefinition& event) const {
        if (has_counts()) return counts();
        const SamplePair& s = samples();
        auto count_side = [&](const RawSample& sample) {
            int k = 0;
            for (double v : sample.values) k += event.exceeds(v) ? 1 : 0;
            return BinomialCount(k, sample.size());
        };
        return CountPair{count_side(s.factual), count_side(s.counterfactual)};
    }

private:
    explicit ScenarioPair(std::variant<CountPair, SamplePair> d) : data_(std::move(d)) {}
    std::variant<CountPair, SamplePair> data_;
};

enum class Side { lower_one_sided, upper_one_sided, two_sided };

enum class Method {
    delta,
    lrt,
    koopman,
    wilson,
    wang_shan,
    boot_normal,
    boot_percentile,
    boot_basic,
    boot_studentized,
    boot_bca,
    eva_lrt,
    eva_delta,
    time_averaged_delta,
};

inline const char* method_name(Method m) {
    switch (m) {
        case Method::delta: return "delta";
        case Method::lrt: return "lrt";
        case Method::koopman: return "koopman";
        case Method::wilson: return "wilson";
        case Method::wang_shan: return "wang-shan";
        case Method::boot_normal: return "boot-normal";
        case Method::boot_percentile: return "boot-percentile";
        case Method::boot_basic: return "boot-basic";
        case Method::boot_studentized: return "boot-studentized";
        case Method::boot_bca: return "boot-bca";
        case Method::eva_lrt: return "eva-lrt";
        case Method::eva_delta: return "eva-delta";
        case Method::time_averaged_delta: return "time-averaged-delta";
    }
    return "unknown";
}

// Methods whose bounds come from resampling and therefore carry a seed.
inline bool is_bootstrap_method(Method m) {
    switch (m) {
        case Method::boot_normal:
        case Method::boot_percentile:
        case Method::boot_basic:
        case Method::boot_studentized:
        case Method::boot_bca: return true;
        default: return false;
    }
}

// Point estimate plus confidence bounds for RR. Bounds live on [0, +inf];
// a one-sided lower interval carries upper = +inf and vice versa.
struct RatioInterval {
    ExtReal estimate = ExtReal::undefined();
    double lower = 0.0;
    double upper = kInf;
    double level = 0.0;
    Side side = Side::two_sided;
    Method method = Method::delta;
    std::map<std::string, double> diagnostics;
};

// RR = pF/pC on the extended reals: 0/0 is the distinguished undefined
// state, x/0 with x > 0 is +inf.
inline ExtReal risk_ratio_estimate(double pF_hat, double pC_hat) {
    if (!(pF_hat >= 0.0 && pF_hat <= 1.0) || !(pC_hat >= 0.0 && pC_hat <= 1.0)) {
        throw std::domain_error("risk_ratio_estimate: probabilities must lie in [0,1]");
    }
    if (pC_hat == 0.0) {
        return pF_hat == 0.0 ? ExtReal::undefined() : ExtReal::infinity();
    }
    return ExtReal::finite(pF_hat / pC_hat);
}

inline void validate_level(double level) {
    if (!(level > 0.0 && level < 1.0)) {
        throw std::domain_error("confidence level must lie strictly in (0,1)");
    }
}

} // namespace riskratio
