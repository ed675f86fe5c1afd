#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "msd/error.hpp"
#include "msd/stats.hpp"

using namespace msd;
using namespace msd::stats;

namespace {

struct WelchCase {
    std::vector<double> a, b;
    double t, df, p;
};

// Reference values from scipy.stats.ttest_ind(a, b, equal_var=False).
const std::vector<WelchCase> kWelchCases = {
    {{10, 11, 12, 13}, {20, 21, 22, 23}, -10.954451150103322, 6.0, 3.436402807612147e-05},
    {{1.2, 3.4, 2.2, 5.1, 4.4}, {2.0, 2.5, 3.1}, 0.9344611806139288, 5.337162615221916, 0.39038806132984305},
    {{48.1, 52.3, 50.0, 47.7, 55.2, 49.9},
     {9.5, 12.2, 8.8, 10.1, 7.9, 11.4, 9.0},
     31.727019716444822,
     7.4096511484090355,
     3.4615170992612754e-09},
    {{0.1, 0.2, 0.15}, {0.12, 0.3, 0.05, 0.22}, -0.362326357002813, 4.382450165238269, 0.7339133929057066},
    {{100, 90, 95, 85, 110}, {60, 140, 80, 120, 70, 130}, -0.27482917947595026, 5.934752080499559, 0.7927640051460885},
};

// 2 x 5 design, 3 observations per cell; reference sums of squares, F and p
// from statsmodels anova_lm(typ=2) on ols("v ~ C(a) * C(b)").
const std::vector<double> kAnovaValues = {70.4, 24.4, 54.2, 44.3, 45.5, 47.8, 29.8, 47.7, 41.3, 83.2,
                                          52.3, 46.5, 47.2, 43.3, 39.4, 46.1, 54.8, 47.6, 59.6, 48.0,
                                          50.2, 65.5, 55.5, 44.9, 48.2, 55.4, 69.4, 47.3, 47.6, 60.0};

std::vector<std::string> anova_factor_a() {
    std::vector<std::string> a;
    for (std::size_t i = 0; i < kAnovaValues.size(); ++i) a.push_back(i % 2 == 0 ? "bs" : "contrast");
    return a;
}

std::vector<std::string> anova_factor_b() {
    std::vector<std::string> b;
    for (std::size_t i = 0; i < kAnovaValues.size(); ++i) b.push_back("c" + std::to_string(i / 6));
    return b;
}

}  // namespace

TEST_CASE("incomplete beta agrees with Boost") {
    for (double a : {0.5, 1.0, 2.5, 7.0, 40.0}) {
        for (double b : {0.5, 1.0, 3.0, 12.5, 60.0}) {
            for (double x : {0.0, 1e-6, 0.05, 0.3, 0.5, 0.77, 0.99, 1.0}) {
                CAPTURE(a);
                CAPTURE(b);
                CAPTURE(x);
                CHECK(incomplete_beta(a, b, x) == doctest::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("t and F distribution functions agree with Boost") {
    for (double df : {1.0, 2.0, 4.38, 10.0, 29.5, 200.0}) {
        const boost::math::students_t dist(df);
        for (double t : {-8.0, -2.1, -0.3, 0.0, 0.7, 1.96, 12.0}) {
            CAPTURE(df);
            CAPTURE(t);
            CHECK(t_cdf(t, df) == doctest::Approx(boost::math::cdf(dist, t)).epsilon(1e-10));
            CHECK(t_two_sided_p(t, df) ==
                  doctest::Approx(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)))).epsilon(1e-9));
        }
    }
    for (double d1 : {1.0, 4.0, 9.0}) {
        for (double d2 : {1.0, 5.0, 20.0, 290.0}) {
            const boost::math::fisher_f dist(d1, d2);
            for (double f : {0.0, 0.05, 0.6, 1.0, 2.5, 13.0}) {
                CAPTURE(d1);
                CAPTURE(d2);
                CAPTURE(f);
                CHECK(f_cdf(f, d1, d2) == doctest::Approx(boost::math::cdf(dist, f)).epsilon(1e-10));
                CHECK(f_sf(f, d1, d2) ==
                      doctest::Approx(boost::math::cdf(boost::math::complement(dist, f))).epsilon(1e-9));
            }
        }
    }
    CHECK(t_cdf(1.0, 10.0) == doctest::Approx(0.82955343384897).epsilon(1e-12));
    CHECK(f_cdf(1.0, 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(t_cdf(1.0, 0.0), Error);
    CHECK_THROWS_AS(incomplete_beta(0.0, 1.0, 0.5), Error);
}

TEST_CASE("Welch t-test matches reference values") {
    for (const auto& c : kWelchCases) {
        const auto r = welch_t(c.a, c.b);
        CHECK(r.t == doctest::Approx(c.t).epsilon(1e-10));
        CHECK(r.df == doctest::Approx(c.df).epsilon(1e-10));
        CHECK(r.p == doctest::Approx(c.p).epsilon(1e-8));
        CHECK(r.n_a == c.a.size());
        CHECK(r.n_b == c.b.size());
        CHECK(r.mean_a == doctest::Approx(mean(c.a)));
        const auto swapped = welch_t(c.b, c.a);
        CHECK(swapped.t == doctest::Approx(-c.t).epsilon(1e-12));
        CHECK(swapped.p == doctest::Approx(r.p).epsilon(1e-12));
    }
}

TEST_CASE("Welch t-test preconditions") {
    const std::vector<double> one = {1.0}, two = {1.0, 2.0}, flat = {3.0, 3.0, 3.0};
    CHECK_THROWS_AS(welch_t(one, two), Error);
    CHECK_THROWS_AS(welch_t(flat, flat), Error);
    const auto r = welch_t(flat, two);
    CHECK(std::isfinite(r.t));
}

TEST_CASE("Pearson correlation") {
    const std::vector<double> x = {0.5, 1.7, 2.2, 3.9, 4.1, 5.6, 6.3, 7.7, 8.2, 9.9,
                                   10.4, 11.8, 12.1, 13.5, 14.9, 15.2, 16.8, 17.3, 18.6, 19.4};
    const std::vector<double> y = {2.1, 2.9, 4.4, 4.0, 6.8, 6.1, 8.9, 8.2, 11.5, 10.1,
                                   12.7, 14.9, 13.2, 16.6, 15.0, 18.8, 17.1, 20.4, 19.9, 22.6};
    const auto r = pearson_r(x, y);
    CHECK(r.r == doctest::Approx(0.9808696676615882).epsilon(1e-12));
    CHECK(r.n == 20);
    const std::vector<double> lin = {1, 2, 3, 4};
    const std::vector<double> lin2 = {-3, -5, -7, -9};
    CHECK(pearson_r(lin, lin2).r == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(pearson_r(x, y).r == doctest::Approx(pearson_r(y, x).r).epsilon(1e-15));
    const std::vector<double> flat = {1, 1, 1, 1};
    CHECK_THROWS_AS(pearson_r(lin, flat), Error);
    CHECK_THROWS_AS(pearson_r(std::vector<double>{1, 2}, std::vector<double>{1, 2}), Error);
    CHECK_THROWS_AS(pearson_r(lin, std::vector<double>{1, 2, 3}), Error);
}

TEST_CASE("two-way ANOVA matches reference values") {
    const auto fa = anova_factor_a();
    const auto fb = anova_factor_b();
    const auto t = two_way_anova(kAnovaValues, fa, fb);
    CHECK(t.levels_a == std::vector<std::string>{"bs", "contrast"});
    CHECK(t.levels_b.size() == 5);
    CHECK(t.n_per_cell == 3);
    CHECK(t.factor_a.sum_sq == doctest::Approx(5.985333333332957).epsilon(1e-9));
    CHECK(t.factor_a.df == 1.0);
    CHECK(t.factor_a.F == doctest::Approx(0.04656059411691198).epsilon(1e-9));
    CHECK(t.factor_a.p == doctest::Approx(0.8313454054064777).epsilon(1e-9));
    CHECK(t.factor_b.sum_sq == doctest::Approx(321.05133333333356).epsilon(1e-10));
    CHECK(t.factor_b.df == 4.0);
    CHECK(t.factor_b.F == doctest::Approx(0.6243737812720412).epsilon(1e-10));
    CHECK(t.factor_b.p == doctest::Approx(0.6505276178077348).epsilon(1e-10));
    CHECK(t.interaction.sum_sq == doctest::Approx(971.0446666666692).epsilon(1e-10));
    CHECK(t.interaction.df == 4.0);
    CHECK(t.interaction.F == doctest::Approx(1.8884669439488908).epsilon(1e-10));
    CHECK(t.interaction.p == doctest::Approx(0.15188642141184247).epsilon(1e-10));
    CHECK(t.residual.sum_sq == doctest::Approx(2570.9866666666667).epsilon(1e-10));
    CHECK(t.residual.df == 20.0);
    CHECK(t.total_sum_sq() ==
          doctest::Approx(t.factor_a.sum_sq + t.factor_b.sum_sq + t.interaction.sum_sq + t.residual.sum_sq));
}

TEST_CASE("two-way ANOVA preconditions") {
    auto fa = anova_factor_a();
    auto fb = anova_factor_b();
    std::vector<double> v = kAnovaValues;
    v.pop_back();
    CHECK_THROWS_AS(two_way_anova(v, fa, fb), Error);
    fa.pop_back();
    fb.pop_back();
    CHECK_THROWS_AS(two_way_anova(v, fa, fb), Error);
    const std::vector<std::string> one_level(kAnovaValues.size(), "x");
    CHECK_THROWS_AS(two_way_anova(kAnovaValues, one_level, anova_factor_b()), Error);
}

TEST_CASE("post-hoc tests per category") {
    const auto fa = anova_factor_a();
    const auto fb = anova_factor_b();
    const auto tests = posthoc_per_category(kAnovaValues, fa, fb);
    REQUIRE(tests.size() == 5);
    for (std::size_t c = 0; c < 5; ++c) {
        std::vector<double> pos, neg;
        for (std::size_t i = 6 * c; i < 6 * c + 6; ++i) (i % 2 == 0 ? pos : neg).push_back(kAnovaValues[i]);
        const auto direct = welch_t(pos, neg);
        CHECK(tests[c].category == "c" + std::to_string(c));
        CHECK(tests[c].test.t == direct.t);
        CHECK(tests[c].test.p == direct.p);
    }
    const auto flipped = posthoc_per_category(kAnovaValues, fa, fb, std::string("contrast"));
    CHECK(flipped[0].test.t == -tests[0].test.t);
    const auto corrected = posthoc_per_category(kAnovaValues, fa, fb, std::nullopt, true);
    for (std::size_t c = 0; c < 5; ++c) CHECK(corrected[c].test.p == std::min(1.0, 5.0 * tests[c].test.p));
    CHECK_THROWS_AS(posthoc_per_category(kAnovaValues, fa, fb, std::string("missing")), Error);
}

TEST_CASE("descriptive statistics") {
    const std::vector<double> xs = {2, 4, 4, 4, 5, 5, 7, 9};
    CHECK(mean(xs) == 5.0);
    CHECK(sample_variance(xs) == doctest::Approx(32.0 / 7.0));
    CHECK_THROWS_AS(mean(std::vector<double>{}), Error);
    CHECK_THROWS_AS(sample_variance(std::vector<double>{1.0}), Error);
}
