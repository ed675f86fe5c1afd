#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msd::stats {

double mean(std::span<const double> xs);
/// Sample variance (n - 1 denominator); requires at least 2 values.
double sample_variance(std::span<const double> xs);

struct CorrelationReport {
    double r = 0.0;
    std::size_t n = 0;
};

/// Sample Pearson correlation. Requires equal lengths >= 3 and non-zero
/// variance on both sides.
CorrelationReport pearson_r(std::span<const double> x, std::span<const double> y);

/// Welch two-sample t-test, two-sided.
struct TTestResult {
    double t = 0.0;
    double df = 0.0;  ///< Welch-Satterthwaite, fractional
    double p = 1.0;
    double mean_a = 0.0;
    double mean_b = 0.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
};

TTestResult welch_t(std::span<const double> a, std::span<const double> b);

struct AnovaRow {
    std::string term;
    double sum_sq = 0.0;
    double df = 0.0;
    double mean_sq = 0.0;
    double F = 0.0;
    double p = 1.0;
};

/// Balanced two-way fixed-effects ANOVA with interaction.
struct AnovaTable {
    AnovaRow factor_a;
    AnovaRow factor_b;
    AnovaRow interaction;
    AnovaRow residual;  ///< F and p unused
    double grand_mean = 0.0;
    std::vector<std::string> levels_a;
    std::vector<std::string> levels_b;
    std::size_t n_per_cell = 0;

    double total_sum_sq() const;
};

/// Levels are the sorted distinct labels of each factor. Requires every
/// cell to hold the same number (>= 2) of observations.
AnovaTable two_way_anova(std::span<const double> values, std::span<const std::string> factor_a,
                         std::span<const std::string> factor_b);

struct CategoryTest {
    std::string category;
    TTestResult test;  ///< group a = positive flag level
};

/// Welch test between the two flag levels inside each category (sorted).
/// `positive_level` defaults to the first flag level in sorted order.
/// With `bonferroni`, p-values are multiplied by the number of categories
/// and capped at 1.
std::vector<CategoryTest> posthoc_per_category(std::span<const double> values, std::span<const std::string> flag,
                                               std::span<const std::string> category,
                                               const std::optional<std::string>& positive_level = std::nullopt,
                                               bool bonferroni = false);

/// Regularized incomplete beta I_x(a, b) by continued fraction
/// (tolerance 1e-12, at most 300 iterations).
double incomplete_beta(double a, double b, double x);

/// Student t distribution function.
double t_cdf(double t, double df);
/// Two-sided tail probability P(|T| >= |t|).
double t_two_sided_p(double t, double df);
/// F distribution function and its upper tail.
double f_cdf(double F, double df1, double df2);
double f_sf(double F, double df1, double df2);

}  // namespace msd::stats
