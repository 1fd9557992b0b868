#include <catch2/catch_amalgamated.hpp>

#include "riskratio/core.hpp"
#include "riskratio/math.hpp"
#include "riskratio/rng.hpp"

using namespace riskratio;

TEST_CASE("risk ratio estimate handles the degenerate corners", "[core]") {
    CHECK(risk_ratio_estimate(129.0 / 400, 3.0 / 400).as_double() == Catch::Approx(43.0));
    CHECK(risk_ratio_estimate(0.1, 0.1).as_double() == Catch::Approx(1.0));
    CHECK(risk_ratio_estimate(0.0, 0.0).is_undefined());
    CHECK(risk_ratio_estimate(0.2, 0.0).is_infinite());
    CHECK(risk_ratio_estimate(0.0, 0.2).as_double() == 0.0);
    CHECK_THROWS_AS(risk_ratio_estimate(1.5, 0.2), std::domain_error);
}

TEST_CASE("reciprocal symmetry of the estimate", "[core]") {
    SplitMix rng = SplitMix::derive(42, {1});
    for (int i = 0; i < 100; ++i) {
        const double a = 0.01 + 0.98 * rng.uniform();
        const double b = 0.01 + 0.98 * rng.uniform();
        const double prod = risk_ratio_estimate(a, b).as_double() *
                            risk_ratio_estimate(b, a).as_double();
        CHECK(prod == Catch::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("extended reals never expose NaN", "[core]") {
    CHECK(ExtReal::undefined().reciprocal().is_undefined());
    CHECK(ExtReal::infinity().reciprocal().as_double() == 0.0);
    CHECK(ExtReal::finite(0.0).reciprocal().is_infinite());
    CHECK(ExtReal::finite(4.0).reciprocal().as_double() == Catch::Approx(0.25));
    CHECK_THROWS_AS(ExtReal::undefined().as_double(), std::domain_error);
    CHECK_THROWS_AS(ExtReal::finite(kInf), std::domain_error);
    CHECK_THROWS_AS(ExtReal::finite(-1.0), std::domain_error);
}

TEST_CASE("domain type invariants are enforced", "[core]") {
    CHECK_THROWS_AS(BinomialCount(5, 4), std::domain_error);
    CHECK_THROWS_AS(BinomialCount(-1, 4), std::domain_error);
    CHECK_THROWS_AS(BinomialCount(0, 0), std::domain_error);
    CHECK_THROWS_AS(RawSample({}), std::domain_error);
    CHECK_THROWS_AS(RawSample({1.0, kInf}), std::domain_error);
    CHECK_THROWS_AS(EventDefinition(kInf, Tail::upper), std::domain_error);
}

TEST_CASE("scenario pair reduces raw samples to counts", "[core]") {
    auto pair = ScenarioPair::from_samples(RawSample({1, 2, 3, 4}), RawSample({0, 1, 2, 5}));
    const CountPair counts = pair.to_counts(EventDefinition(2.5, Tail::upper));
    CHECK(counts.factual.events == 2);
    CHECK(counts.counterfactual.events == 1);
    const CountPair low = pair.to_counts(EventDefinition(2.5, Tail::lower));
    CHECK(low.factual.events == 2);
    CHECK(low.counterfactual.events == 3);
    CHECK_THROWS_AS(pair.counts(), std::logic_error);
}

TEST_CASE("normal quantile and cdf round-trip", "[core]") {
    CHECK(normal_quantile(0.95) == Catch::Approx(1.6448536269514722).epsilon(1e-14));
    CHECK(normal_quantile(0.975) == Catch::Approx(1.959963984540054).epsilon(1e-14));
    SplitMix rng = SplitMix::derive(7, {2});
    for (int i = 0; i < 200; ++i) {
        const double p = rng.uniform_open();
        CHECK(normal_cdf(normal_quantile(p)) == Catch::Approx(p).epsilon(1e-10));
    }
    // Far tail keeps relative accuracy where naive 1 - Phi would round to 0.
    CHECK(normal_tail(8.0) == Catch::Approx(6.22096057427174e-16).epsilon(1e-10));
}

TEST_CASE("chi-square(1) quantiles match the pinned table", "[core]") {
    CHECK(chi_square1_quantile(0.90) == 2.705543454095404);
    CHECK(chi_square1_quantile(0.95) == 3.841458820694124);
    CHECK(chi_square1_quantile(0.975) == 5.0238861873148881);
    CHECK(chi_square1_quantile(0.99) == 6.6348966010212145);
    // Off-table levels go through the squared normal quantile.
    CHECK(chi_square1_quantile(0.80) == Catch::Approx(1.642374415149816).epsilon(1e-10));
}

TEST_CASE("binomial pmf respects boundary conventions", "[core]") {
    CHECK(binomial_pmf(0, 10, 0.0) == 1.0);
    CHECK(binomial_pmf(3, 10, 0.0) == 0.0);
    CHECK(binomial_pmf(10, 10, 1.0) == 1.0);
    CHECK(binomial_pmf(2, 4, 0.5) == Catch::Approx(0.375).epsilon(1e-14));
    double total = 0.0;
    for (int y = 0; y <= 25; ++y) total += binomial_pmf(y, 25, 0.17);
    CHECK(total == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("counter rng streams are order-insensitive and seeded", "[core]") {
    SplitMix a = SplitMix::derive(123, {4, 5});
    SplitMix b = SplitMix::derive(123, {4, 5});
    for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
    SplitMix c = SplitMix::derive(123, {4, 6});
    CHECK(SplitMix::derive(123, {4, 5}).next_u64() != c.next_u64());

    // Binomial draws should match the target mean closely.
    SplitMix d = SplitMix::derive(9, {1});
    double sum = 0.0;
    const int reps = 20000;
    for (int i = 0; i < reps; ++i) sum += d.binomial(50, 0.3);
    CHECK(sum / reps == Catch::Approx(15.0).margin(0.1));

    SplitMix e = SplitMix::derive(9, {2});
    int hist[4] = {0, 0, 0, 0};
    for (int i = 0; i < 40000; ++i) hist[e.uniform_int(4)]++;
    for (int k = 0; k < 4; ++k) CHECK(hist[k] > 9500);
}
