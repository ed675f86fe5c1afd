#include "msd/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "msd/error.hpp"

namespace msd::stats {

namespace {

constexpr double kBetaTolerance = 1e-12;
constexpr int kBetaMaxIterations = 300;

double beta_continued_fraction(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kBetaMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kBetaTolerance) return h;
    }
    throw data_error("incomplete beta: continued fraction did not converge (a=" + std::to_string(a) +
                     ", b=" + std::to_string(b) + ", x=" + std::to_string(x) + ")");
}

void require_df(double df) {
    if (!(df > 0.0) || std::isnan(df)) throw data_error("distribution: degrees of freedom must be positive");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw data_error("incomplete beta: shape parameters must be positive");
    if (std::isnan(x)) throw data_error("incomplete beta: x is NaN");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double t_two_sided_p(double t, double df) {
    require_df(df);
    if (std::isnan(t)) throw data_error("t distribution: statistic is NaN");
    if (std::isinf(t)) return 0.0;
    return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

double t_cdf(double t, double df) {
    const double tail = t_two_sided_p(t, df) / 2.0;
    return t > 0.0 ? 1.0 - tail : tail;
}

double f_cdf(double F, double df1, double df2) {
    require_df(df1);
    require_df(df2);
    if (!(F > 0.0)) return 0.0;
    if (std::isinf(F)) return 1.0;
    return incomplete_beta(df1 / 2.0, df2 / 2.0, df1 * F / (df1 * F + df2));
}

double f_sf(double F, double df1, double df2) {
    require_df(df1);
    require_df(df2);
    if (!(F > 0.0)) return 1.0;
    if (std::isinf(F)) return 0.0;
    return incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * F));
}

double mean(std::span<const double> xs) {
    if (xs.empty()) throw data_error("mean of an empty sample");
    double sum = 0.0;
    for (double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
    if (xs.size() < 2) throw data_error("variance needs at least 2 values");
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return ss / static_cast<double>(xs.size() - 1);
}

CorrelationReport pearson_r(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw data_error("pearson_r: length mismatch");
    if (x.size() < 3) throw data_error("pearson_r: need at least 3 pairs");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw data_error("pearson_r: zero variance");
    return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), x.size()};
}

TTestResult welch_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw data_error("welch_t: each group needs at least 2 values");
    TTestResult r;
    r.n_a = a.size();
    r.n_b = b.size();
    r.mean_a = mean(a);
    r.mean_b = mean(b);
    const double se_a = sample_variance(a) / static_cast<double>(a.size());
    const double se_b = sample_variance(b) / static_cast<double>(b.size());
    const double se2 = se_a + se_b;
    if (se2 == 0.0) throw data_error("welch_t: both groups have zero variance");
    r.t = (r.mean_a - r.mean_b) / std::sqrt(se2);
    r.df = se2 * se2 / (se_a * se_a / static_cast<double>(a.size() - 1) +
                        se_b * se_b / static_cast<double>(b.size() - 1));
    r.p = t_two_sided_p(r.t, r.df);
    return r;
}

double AnovaTable::total_sum_sq() const {
    return factor_a.sum_sq + factor_b.sum_sq + interaction.sum_sq + residual.sum_sq;
}

namespace {

std::vector<std::string> sorted_levels(std::span<const std::string> labels) {
    std::vector<std::string> levels(labels.begin(), labels.end());
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    return levels;
}

std::size_t level_index(const std::vector<std::string>& levels, const std::string& label) {
    return static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), label) - levels.begin());
}

}  // namespace

AnovaTable two_way_anova(std::span<const double> values, std::span<const std::string> factor_a,
                         std::span<const std::string> factor_b) {
    if (values.size() != factor_a.size() || values.size() != factor_b.size()) {
        throw data_error("anova: values and factor labels differ in length");
    }
    AnovaTable table;
    table.levels_a = sorted_levels(factor_a);
    table.levels_b = sorted_levels(factor_b);
    const std::size_t na = table.levels_a.size(), nb = table.levels_b.size();
    if (na < 2 || nb < 2) throw data_error("anova: each factor needs at least 2 levels");

    std::vector<std::vector<double>> cells(na * nb);
    for (std::size_t i = 0; i < values.size(); ++i) {
        cells[level_index(table.levels_a, factor_a[i]) * nb + level_index(table.levels_b, factor_b[i])].push_back(
            values[i]);
    }
    const std::size_t n = cells[0].size();
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto& cell = cells[c];
        const std::string name = table.levels_a[c / nb] + " x " + table.levels_b[c % nb];
        if (cell.empty()) throw data_error("anova: empty cell " + name);
        if (cell.size() < 2) throw data_error("anova: cell " + name + " has a single observation");
        if (cell.size() != n) throw data_error("anova: unbalanced design (cell " + name + ")");
    }
    table.n_per_cell = n;
    table.factor_a.term = "factor_a";
    table.factor_b.term = "factor_b";
    table.interaction.term = "interaction";
    table.residual.term = "residual";
    table.factor_a.df = static_cast<double>(na - 1);
    table.factor_b.df = static_cast<double>(nb - 1);
    table.interaction.df = static_cast<double>((na - 1) * (nb - 1));
    table.residual.df = static_cast<double>(na * nb * (n - 1));

    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    table.grand_mean = mean(values);
    if (*lo == *hi) {
        table.grand_mean = *lo;
        return table;  // no variance anywhere: all SS, F are 0 and p is 1
    }

    std::vector<double> cell_mean(na * nb), mean_a(na, 0.0), mean_b(nb, 0.0);
    for (std::size_t c = 0; c < cells.size(); ++c) cell_mean[c] = mean(cells[c]);
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j) mean_a[i] += cell_mean[i * nb + j];
        mean_a[i] /= static_cast<double>(nb);
    }
    for (std::size_t j = 0; j < nb; ++j) {
        for (std::size_t i = 0; i < na; ++i) mean_b[j] += cell_mean[i * nb + j];
        mean_b[j] /= static_cast<double>(na);
    }
    const double g = table.grand_mean;
    const double nd = static_cast<double>(n);
    for (std::size_t i = 0; i < na; ++i) table.factor_a.sum_sq += nd * nb * (mean_a[i] - g) * (mean_a[i] - g);
    for (std::size_t j = 0; j < nb; ++j) table.factor_b.sum_sq += nd * na * (mean_b[j] - g) * (mean_b[j] - g);
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j) {
            const double e = cell_mean[i * nb + j] - mean_a[i] - mean_b[j] + g;
            table.interaction.sum_sq += nd * e * e;
        }
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (double y : cells[c]) table.residual.sum_sq += (y - cell_mean[c]) * (y - cell_mean[c]);
    }

    table.residual.mean_sq = table.residual.sum_sq / table.residual.df;
    for (AnovaRow* row : {&table.factor_a, &table.factor_b, &table.interaction}) {
        row->mean_sq = row->sum_sq / row->df;
        if (table.residual.mean_sq > 0.0) {
            row->F = row->mean_sq / table.residual.mean_sq;
            row->p = f_sf(row->F, row->df, table.residual.df);
        } else if (row->sum_sq > 0.0) {
            row->F = std::numeric_limits<double>::infinity();
            row->p = 0.0;
        }
    }
    return table;
}

std::vector<CategoryTest> posthoc_per_category(std::span<const double> values, std::span<const std::string> flag,
                                               std::span<const std::string> category,
                                               const std::optional<std::string>& positive_level, bool bonferroni) {
    if (values.size() != flag.size() || values.size() != category.size()) {
        throw data_error("posthoc: values and labels differ in length");
    }
    const auto flag_levels = sorted_levels(flag);
    if (flag_levels.size() != 2) throw data_error("posthoc: flag must have exactly 2 levels");
    const std::string positive = positive_level.value_or(flag_levels.front());
    if (positive != flag_levels[0] && positive != flag_levels[1]) {
        throw data_error("posthoc: positive level '" + positive + "' not present");
    }
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto& [pos, neg] = groups[category[i]];
        (flag[i] == positive ? pos : neg).push_back(values[i]);
    }
    std::vector<CategoryTest> out;
    for (const auto& [cat, pair] : groups) {
        if (pair.first.size() < 2 || pair.second.size() < 2) {
            throw data_error("posthoc: category '" + cat + "' needs at least 2 values per flag level");
        }
        out.push_back({cat, welch_t(pair.first, pair.second)});
    }
    if (bonferroni) {
        for (auto& c : out) c.test.p = std::min(1.0, c.test.p * static_cast<double>(out.size()));
    }
    return out;
}

}  // namespace msd::stats
