#include <catch2/catch_amalgamated.hpp>

#include "inoc/rng.hpp"
#include "inoc/theory.hpp"

#include "oracles.hpp"

using namespace inoc;
using Catch::Matchers::WithinAbs;

TEST_CASE("compute_k is the ratio of training effects") {
    SECTION("equal effects give k = 1") {
        const auto k = compute_k("brevity", 0.3, 0.3);
        CHECK_THAT(k.k, WithinAbs(1.0, 1e-15));
        CHECK(k.numerator == 0.3);
        CHECK(k.denominator == 0.3);
        CHECK(k.trait == "brevity");
    }
    SECTION("halved neutral effect gives k = 0.5") {
        CHECK_THAT(compute_k("t", 0.2, 0.4).k, WithinAbs(0.5, 1e-15));
    }
    SECTION("degenerate denominator") {
        CHECK_THROWS_AS(compute_k("t", 0.2, 0.0), UndefinedK);
        CHECK_THROWS_AS(compute_k("t", 0.2, 5e-7), UndefinedK);  // default eps 1e-6
        CHECK_NOTHROW(compute_k("t", 0.2, 5e-7, 1e-8));          // tighter eps admits it
    }
    SECTION("negative effects are allowed") {
        CHECK_THAT(compute_k("t", -0.2, -0.1).k, WithinAbs(2.0, 1e-15));
    }
}

TEST_CASE("predict_shift is k times the remaining headroom") {
    CHECK_THAT(predict_shift(0.5, 0.9, 0.3), WithinAbs(0.3, 1e-15));
    SECTION("elicitation at the oversight optimum predicts zero shift") {
        Rng rng(42);
        for (int i = 0; i < 100; ++i) {
            const double k = 0.1 + 2.0 * rng.next_double();
            const double t_star = rng.next_double();
            CHECK(predict_shift(k, t_star, t_star) == 0.0);
        }
    }
    SECTION("overinoculation predicts a decrease") {
        CHECK(predict_shift(0.8, 0.5, 0.9) < 0.0);
    }
}

TEST_CASE("make_prediction adds the shift to the neutral baseline") {
    const auto p = make_prediction("sycophancy", 0.5, 0.9, 0.3, 0.1);
    CHECK_THAT(p.predicted_shift, WithinAbs(0.3, 1e-15));
    CHECK_THAT(p.predicted_post, WithinAbs(0.4, 1e-15));
    CHECK(p.trait == "sycophancy");
}

TEST_CASE("selection threshold sel1: elicit at least the oversight optimum") {
    CHECK(check_sel1(0.9, 0.9));        // boundary passes
    CHECK(check_sel1(0.95, 0.9));
    CHECK_FALSE(check_sel1(0.85, 0.9));
}

TEST_CASE("selection threshold sel2: do not over-elicit the good trait") {
    // boundary cases use binary-exact values so the threshold arithmetic is exact
    SECTION("k = 1 reduces to elicited <= baseline") {
        CHECK(check_sel2(0.25, 0.75, 0.25, 1.0));  // equality passes
        CHECK(check_sel2(0.125, 0.75, 0.25, 1.0));
        CHECK_FALSE(check_sel2(0.375, 0.75, 0.25, 1.0));
    }
    SECTION("smaller k tightens the allowance") {
        // threshold = t* + (1/k)(baseline - t*); k=0.5 doubles the shortfall below t*
        CHECK(check_sel2(0.0, 0.5, 0.25, 0.5));    // threshold 0.5 + 2(0.25-0.5) = 0
        CHECK_FALSE(check_sel2(0.125, 0.5, 0.25, 0.5));
        CHECK(check_sel2(0.125, 0.5, 0.25, 1.0));  // same point admissible at k=1
    }
    SECTION("sel2 is equivalent to predicted post >= t_star") {
        Rng rng(7);
        for (int i = 0; i < 500; ++i) {
            const double k = 0.05 + 2.0 * rng.next_double();
            const double t_star = rng.next_double();
            const double baseline = rng.next_double();
            const double elicited = rng.next_double();
            const double post = baseline + predict_shift(k, t_star, elicited);
            CHECK(check_sel2(elicited, t_star, baseline, k) == (post >= t_star));
        }
    }
    SECTION("nonpositive k is rejected") {
        CHECK_THROWS_AS(check_sel2(0.3, 0.9, 0.3, 0.0), NonpositiveK);
        CHECK_THROWS_AS(check_sel2(0.3, 0.9, 0.3, -1.0), NonpositiveK);
    }
}

TEST_CASE("fit_k pools shifts through the origin") {
    SECTION("an exact line recovers its slope") {
        std::vector<std::pair<double, double>> pts;
        for (double x : {0.1, 0.4, 0.7, 1.0}) pts.emplace_back(x, 0.8 * x);
        CHECK_THAT(fit_k(pts), WithinAbs(0.8, 1e-12));
    }
    SECTION("matches the definitional oracle on noisy points") {
        Rng rng(99);
        std::vector<std::pair<double, double>> pts;
        for (int i = 0; i < 40; ++i)
            pts.emplace_back(rng.next_double(), rng.next_double());
        CHECK_THAT(fit_k(pts), WithinAbs(oracles::origin_slope(pts), 1e-12));
    }
    SECTION("degenerate inputs") {
        CHECK_THROWS_AS(fit_k({}), DegenerateInput);
        CHECK_THROWS_AS(fit_k({{0.1, 0.2}}), DegenerateInput);
        CHECK_THROWS_AS(fit_k({{0.0, 0.2}, {0.0, 0.4}}), DegenerateInput);
    }
}

TEST_CASE("round trip: k from effects reproduces the neutral shift") {
    Rng rng(1234);
    for (int i = 0; i < 200; ++i) {
        const double t0_cs = rng.next_double();
        const double ip_cs = rng.next_double();
        const double t0_c0 = rng.next_double();
        const double ip_c0 = rng.next_double();
        const double num = ip_c0 - t0_c0;
        const double den = ip_cs - t0_cs;
        if (std::abs(den) <= 1e-6) continue;
        const auto k = compute_k("t", num, den);
        // choosing t* = ip_cs makes the predicted shift equal the measured one
        CHECK_THAT(predict_shift(k.k, ip_cs, t0_cs), WithinAbs(num, 1e-12));
    }
}
