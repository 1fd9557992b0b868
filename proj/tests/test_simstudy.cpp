#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include "riskratio/simstudy.hpp"

using namespace riskratio;
using Catch::Approx;

namespace {

// Compare two metrics rows field-for-field (bitwise on the doubles).
void require_same_metrics(const MethodMetrics& a, const MethodMetrics& b) {
    REQUIRE(a.method == b.method);
    REQUIRE(a.cell.n == b.cell.n);
    REQUIRE(a.cell.rr == b.cell.rr);
    REQUIRE(a.cell.p_f == b.cell.p_f);
    REQUIRE(a.coverage_lower == b.coverage_lower);
    REQUIRE(a.coverage_upper == b.coverage_upper);
    REQUIRE(a.prop_not_computable == b.prop_not_computable);
    REQUIRE(a.mc_standard_error == b.mc_standard_error);
    REQUIRE(a.n_computable == b.n_computable);
    REQUIRE(a.n_not_computable == b.n_not_computable);
    REQUIRE(a.n_covered_lower == b.n_covered_lower);
    REQUIRE(a.n_covered_upper == b.n_covered_upper);
    REQUIRE(a.median_lower_bound.is_finite() == b.median_lower_bound.is_finite());
    if (a.median_lower_bound.is_finite()) {
        REQUIRE(a.median_lower_bound.as_double() == b.median_lower_bound.as_double());
    }
    REQUIRE(a.mean_degenerate_fraction == b.mean_degenerate_fraction);
}

} // namespace

TEST_CASE("the scenario grid validates its cells", "[simstudy]") {
    ScenarioGrid grid;
    grid.replications = 10;
    REQUIRE_NOTHROW(grid.validate());
    REQUIRE(grid.cells().size() == 100);
    // Cells are emitted n-major, then rr, then p_f.
    REQUIRE(grid.cells().front().n == 25);
    REQUIRE(grid.cells().front().rr == 1.0);
    REQUIRE(grid.cells().front().p_f == 0.01);
    REQUIRE(grid.cells().back().n == 400);
    REQUIRE(grid.cells().back().rr == 16.0);
    REQUIRE(grid.cells().back().p_f == 0.20);

    ScenarioGrid bad = grid;
    bad.rr_values = {0.5};
    bad.pF_values = {0.9}; // p_C = 1.8
    REQUIRE_THROWS_AS(bad.validate(), std::domain_error);

    bad = grid;
    bad.n_values.clear();
    REQUIRE_THROWS_AS(bad.validate(), std::domain_error);
    bad = grid;
    bad.replications = 0;
    REQUIRE_THROWS_AS(bad.validate(), std::domain_error);
    bad = grid;
    bad.level = 1.0;
    REQUIRE_THROWS_AS(bad.validate(), std::domain_error);
    bad = grid;
    bad.pF_values = {0.0};
    REQUIRE_THROWS_AS(bad.validate(), std::domain_error);
}

TEST_CASE("exact enumeration rejects what it cannot enumerate", "[simstudy]") {
    REQUIRE_THROWS_AS(exact_cell(25, 0.0, 0.1, Method::delta, 0.95, Side::lower_one_sided),
                      std::domain_error);
    REQUIRE_THROWS_AS(exact_cell(25, -2.0, 0.1, Method::delta, 0.95, Side::lower_one_sided),
                      std::domain_error);
    REQUIRE_THROWS_AS(exact_cell(25, 2.0, 0.0, Method::delta, 0.95, Side::lower_one_sided),
                      std::domain_error);
    // Counterfactual probability above one.
    REQUIRE_THROWS_AS(exact_cell(25, 0.1, 0.5, Method::delta, 0.95, Side::lower_one_sided),
                      std::domain_error);
    REQUIRE_THROWS_AS(exact_cell(401, 2.0, 0.1, Method::delta, 0.95, Side::lower_one_sided),
                      InfeasibleSizeError);
    REQUIRE_THROWS_AS(
        exact_cell(25, 2.0, 0.1, Method::boot_percentile, 0.95, Side::lower_one_sided),
        InfeasibleSizeError);
    REQUIRE_THROWS_AS(
        exact_cell(60, 2.0, 0.1, Method::wang_shan, 0.95, Side::lower_one_sided),
        InfeasibleSizeError);
}

TEST_CASE("enumerated exclusion mass matches the closed-form zero-count probability",
          "[simstudy]") {
    // The normal-theory bound exists iff both counts are nonzero, so its
    // excluded mass is P(y_F = 0 or y_C = 0) exactly.
    const int n = 25;
    const double p_f = 0.01;
    const double rr = 8.0;
    const double p_c = p_f / rr;
    const auto cell = exact_cell(n, rr, p_f, Method::delta, 0.95, Side::lower_one_sided);
    const double q = std::pow(1.0 - p_f, n) + std::pow(1.0 - p_c, n) -
                     std::pow((1.0 - p_f) * (1.0 - p_c), n);
    REQUIRE(cell.prop_not_computable == Approx(q).epsilon(0).margin(1e-10));
    // Most of the mass is excluded in this corner.
    REQUIRE(cell.prop_not_computable > 0.9);

    // Test-inversion bounds exist unless both counts are zero.
    const auto lrt = exact_cell(n, rr, p_f, Method::lrt, 0.95, Side::lower_one_sided);
    const double q_both = std::pow((1.0 - p_f) * (1.0 - p_c), n);
    REQUIRE(lrt.prop_not_computable == Approx(q_both).epsilon(0).margin(1e-10));
}

TEST_CASE("at a unit ratio, lower and upper non-coverage mirror each other",
          "[simstudy]") {
    // Swapping the two scenarios maps RR to 1/RR, so at RR = 1 the
    // lower-side non-coverage of outcome (a, b) must be the upper-side
    // non-coverage of (b, a), cell by cell.
    const int n = 20;
    const double level = 0.95;
    for (Method m : {Method::delta, Method::lrt, Method::koopman, Method::wilson}) {
        for (int a = 0; a <= n; ++a) {
            for (int b = 0; b <= n; ++b) {
                bool lower_ok = true, upper_ok = true;
                double lower = 0.0, upper = kInf;
                const CountPair ab{BinomialCount{a, n}, BinomialCount{b, n}};
                const CountPair ba{BinomialCount{b, n}, BinomialCount{a, n}};
                try {
                    lower = sim_detail::closed_form_interval(m, ab, level,
                                                             Side::lower_one_sided, nullptr)
                                .lower;
                } catch (const NotComputableError&) {
                    lower_ok = false;
                }
                try {
                    upper = sim_detail::closed_form_interval(m, ba, level,
                                                             Side::upper_one_sided, nullptr)
                                .upper;
                } catch (const NotComputableError&) {
                    upper_ok = false;
                }
                REQUIRE(lower_ok == upper_ok);
                if (lower_ok) {
                    REQUIRE((lower > 1.0) == (upper < 1.0));
                }
            }
        }
        const double cov_lower =
            exact_coverage(n, 1.0, 0.1, m, level, Side::lower_one_sided);
        const double cov_upper =
            exact_coverage(n, 1.0, 0.1, m, level, Side::upper_one_sided);
        REQUIRE(cov_lower == Approx(cov_upper).epsilon(1e-12));
    }
}

TEST_CASE("sampled coverage agrees with exact enumeration", "[simstudy]") {
    ScenarioGrid grid;
    grid.n_values = {25};
    grid.rr_values = {2.0};
    grid.pF_values = {0.10};
    grid.replications = 2000;
    grid.level = 0.95;
    grid.seed = 7;
    const std::vector<Method> methods{Method::delta, Method::lrt, Method::koopman,
                                      Method::wilson};
    const auto metrics = run_grid(grid, methods);
    REQUIRE(metrics.size() == methods.size());

    for (const auto& m : metrics) {
        const auto lo = exact_cell(25, 2.0, 0.10, m.method, 0.95, Side::lower_one_sided);
        const auto hi = exact_cell(25, 2.0, 0.10, m.method, 0.95, Side::upper_one_sided);
        const double se_lo =
            std::sqrt(lo.coverage * (1.0 - lo.coverage) / grid.replications) + 1e-9;
        const double se_hi =
            std::sqrt(hi.coverage * (1.0 - hi.coverage) / grid.replications) + 1e-9;
        const double se_nc = std::sqrt(lo.prop_not_computable *
                                       (1.0 - lo.prop_not_computable) / grid.replications) +
                             1e-9;
        REQUIRE(std::abs(m.coverage_lower - lo.coverage) < 3.0 * se_lo);
        REQUIRE(std::abs(m.coverage_upper - hi.coverage) < 3.0 * se_hi);
        REQUIRE(std::abs(m.prop_not_computable - lo.prop_not_computable) < 3.0 * se_nc);

        // Bookkeeping invariants.
        REQUIRE(m.n_computable + m.n_not_computable == grid.replications);
        REQUIRE(m.coverage_lower ==
                static_cast<double>(m.n_covered_lower) / m.n_computable);
        REQUIRE(m.prop_not_computable ==
                static_cast<double>(m.n_not_computable) / grid.replications);
        REQUIRE(m.mc_standard_error ==
                Approx(std::sqrt(m.coverage_lower * (1.0 - m.coverage_lower) /
                                 m.n_computable))
                    .epsilon(1e-14));
        REQUIRE(m.median_lower_bound.is_finite());
        REQUIRE(m.median_lower_bound.as_double() >= 0.0);
        REQUIRE(m.median_lower_bound.as_double() < 2.0);
    }
}

TEST_CASE("grid runs are deterministic and cells are independent", "[simstudy]") {
    ScenarioGrid grid;
    grid.n_values = {25, 50};
    grid.rr_values = {1.0, 2.0};
    grid.pF_values = {0.05, 0.10};
    grid.replications = 300;
    grid.seed = 20250601;
    const std::vector<Method> methods{Method::delta, Method::koopman};

    const auto a = run_grid(grid, methods);
    const auto b = run_grid(grid, methods);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) require_same_metrics(a[i], b[i]);

    // A cell's metrics do not depend on which other cells are in the grid.
    ScenarioGrid single = grid;
    single.n_values = {50};
    single.rr_values = {2.0};
    single.pF_values = {0.10};
    const auto alone = run_grid(single, methods);
    REQUIRE(alone.size() == 2);
    bool found = false;
    for (const auto& row : a) {
        if (row.cell.n == 50 && row.cell.rr == 2.0 && row.cell.p_f == 0.10 &&
            row.method == Method::koopman) {
            require_same_metrics(row, alone[1]);
            found = true;
        }
    }
    REQUIRE(found);

    // Nor do they depend on which other methods are requested.
    const auto koopman_only = run_grid(single, {Method::koopman});
    require_same_metrics(koopman_only[0], alone[1]);

    // A different seed gives different draws.
    ScenarioGrid other = single;
    other.seed = 20250602;
    const auto c = run_grid(other, {Method::koopman});
    REQUIRE(c[0].n_covered_lower != koopman_only[0].n_covered_lower);
}

TEST_CASE("a symmetric data-generating process balances the two one-sided coverages",
          "[simstudy]") {
    ScenarioGrid grid;
    grid.n_values = {50};
    grid.rr_values = {1.0};
    grid.pF_values = {0.10};
    grid.replications = 2000;
    grid.seed = 11;
    for (const auto& m : run_grid(grid, {Method::delta, Method::koopman})) {
        const double se = std::sqrt(2.0) * std::max(m.mc_standard_error, 1e-3);
        REQUIRE(std::abs(m.coverage_lower - m.coverage_upper) <= 2.0 * se);
    }
}

TEST_CASE("score inversion holds its level where the quick bootstraps fall short",
          "[simstudy]") {
    ScenarioGrid grid;
    grid.n_values = {100};
    grid.rr_values = {4.0};
    grid.pF_values = {0.05};
    grid.replications = 1200;
    grid.seed = 404;
    const auto metrics = run_grid(
        grid, {Method::koopman, Method::boot_percentile, Method::boot_basic}, {}, 400);
    REQUIRE(metrics.size() == 3);
    const auto& koop = metrics[0];
    const auto& pct = metrics[1];
    const auto& basic = metrics[2];

    REQUIRE(koop.coverage_lower >= 0.95 - koop.mc_standard_error);
    // The percentile construction stays conservative here; the basic one
    // undershoots decisively.
    REQUIRE(pct.coverage_lower >= 0.95 - 2.0 * pct.mc_standard_error);
    REQUIRE(basic.coverage_lower < 0.95 - 2.0 * basic.mc_standard_error);
    // Bootstrap rows carry the dropped-replicate statistics.
    REQUIRE(pct.mean_degenerate_fraction >= 0.0);
    REQUIRE(pct.mean_degenerate_fraction < 0.5);
}

TEST_CASE("exact coverage floors at the smallest study size", "[simstudy]") {
    // One-sided 95% lower bounds at n = 25 over representative study cells:
    // the score and unconditional-score inversions stay within a point of
    // nominal from below; the likelihood-ratio inversion never drops under
    // 0.90 even where it is the most liberal of the three.
    for (double rr : {1.0, 4.0, 16.0}) {
        for (double p_f : {0.01, 0.05, 0.20}) {
            const double koop =
                exact_coverage(25, rr, p_f, Method::koopman, 0.95, Side::lower_one_sided);
            const double wils =
                exact_coverage(25, rr, p_f, Method::wilson, 0.95, Side::lower_one_sided);
            const double lrt =
                exact_coverage(25, rr, p_f, Method::lrt, 0.95, Side::lower_one_sided);
            INFO("rr=" << rr << " p_f=" << p_f << " koopman=" << koop << " wilson=" << wils
                       << " lrt=" << lrt);
            REQUIRE(koop >= 0.94);
            REQUIRE(wils >= 0.94);
            REQUIRE(lrt >= 0.90);
        }
    }
}

TEST_CASE("the coverage study needs prebuilt tables for the exact method", "[simstudy]") {
    ScenarioGrid grid;
    grid.n_values = {10, 20};
    grid.rr_values = {2.0};
    grid.pF_values = {0.20};
    grid.replications = 150;
    grid.seed = 5;
    try {
        run_grid(grid, {Method::wang_shan});
        FAIL("expected a missing-table error");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find(wang_shan_table_filename(10, 10, 0.95)) != std::string::npos);
        REQUIRE(msg.find(wang_shan_table_filename(20, 20, 0.95)) != std::string::npos);
    }

    // With a table the method runs inside the grid and in the enumerator.
    const WangShanTable table = build_wang_shan_table(10, 10, 0.95);
    grid.n_values = {10};
    const std::map<int, const WangShanTable*> tables{{10, &table}};
    const auto metrics = run_grid(grid, {Method::wang_shan}, tables);
    REQUIRE(metrics.size() == 1);
    REQUIRE(metrics[0].n_computable + metrics[0].n_not_computable == 150);
    REQUIRE(metrics[0].coverage_lower >= 0.9);

    // The exact construction is designed to never undershoot its level.
    const double exact =
        exact_coverage(10, 2.0, 0.20, Method::wang_shan, 0.95, Side::lower_one_sided, &table);
    REQUIRE(exact >= 0.95);

    // A mismatched level is as unusable as a missing table.
    ScenarioGrid wrong = grid;
    wrong.level = 0.90;
    REQUIRE_THROWS_AS(run_grid(wrong, {Method::wang_shan}, tables), std::invalid_argument);
}

TEST_CASE("methods that do not consume count pairs are rejected", "[simstudy]") {
    ScenarioGrid grid;
    grid.n_values = {25};
    grid.rr_values = {2.0};
    grid.pF_values = {0.10};
    grid.replications = 100;
    REQUIRE_THROWS_AS(run_grid(grid, {Method::eva_lrt}), std::invalid_argument);
    REQUIRE_THROWS_AS(run_grid(grid, {Method::time_averaged_delta}), std::invalid_argument);
    REQUIRE_THROWS_AS(run_grid(grid, {}), std::domain_error);
}

TEST_CASE("metrics export in a fixed long format", "[simstudy]") {
    MethodMetrics m;
    m.method = Method::koopman;
    m.cell = GridCell{100, 4.0, 0.05};
    m.coverage_lower = 0.9375;
    m.coverage_upper = 0.875;
    m.median_lower_bound = ExtReal::finite(2.25);
    m.prop_not_computable = 0.125;
    m.mc_standard_error = 0.0078125;

    std::ostringstream out;
    emit_figures({m}, out);
    const std::string expected = "method,n,rr,p_f,metric,value\n"
                                 "koopman,100,4,0.05,coverage_lower,0.9375\n"
                                 "koopman,100,4,0.05,coverage_upper,0.875\n"
                                 "koopman,100,4,0.05,median_lower_bound,2.25\n"
                                 "koopman,100,4,0.05,prop_not_computable,0.125\n"
                                 "koopman,100,4,0.05,mc_standard_error,0.0078125\n";
    REQUIRE(out.str() == expected);

    // Header only when there are no rows.
    std::ostringstream empty;
    emit_figures({}, empty);
    REQUIRE(empty.str() == "method,n,rr,p_f,metric,value\n");

    // An empty median renders as nan.
    MethodMetrics none;
    none.method = Method::delta;
    none.cell = GridCell{25, 8.0, 0.01};
    std::ostringstream nanout;
    emit_figures({none}, nanout);
    REQUIRE(nanout.str().find("delta,25,8,0.01,median_lower_bound,nan\n") !=
            std::string::npos);
}
