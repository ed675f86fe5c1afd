#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msd/pipeline.hpp"
#include "msd/score.hpp"
#include "msd/stats.hpp"

namespace msd {

enum class Design { TwoGroup, Factorial };

std::string_view to_string(Design design);
/// Accepts "two-group" and "factorial".
std::optional<Design> parse_design(std::string_view text);

struct ExperimentSpec {
    Design design = Design::TwoGroup;
    std::string group_field = "group";
    std::string flag_field = "flag";
    std::string category_field = "category";
    /// Group or flag level reported as side "a" of every t-test. Defaults to
    /// the first level in sorted order.
    std::optional<std::string> positive_level;
    bool bonferroni = false;
    std::string manifest_digest;
    /// Scoring threads; 0 picks the hardware concurrency.
    std::size_t threads = 0;
};

/// Counts of values over `bins` equal-width bins spanning [lower, upper].
/// Values outside the range land in the end bins.
struct Histogram {
    double lower = -5.0;
    double upper = 5.0;
    std::vector<std::size_t> counts;

    double width() const { return (upper - lower) / static_cast<double>(counts.size()); }
};

Histogram make_histogram(std::span<const double> values, double lower = -5.0, double upper = 5.0,
                         std::size_t bins = 20);

/// One row of the per-category summary of a factorial run.
struct CellSummary {
    std::string category;
    double positive_mean = 0.0;
    double contrast_mean = 0.0;
    std::size_t n_positive = 0;
    std::size_t n_contrast = 0;
    double p = 1.0;
};

struct ExperimentResult {
    Design design = Design::TwoGroup;
    std::string manifest_digest;
    std::vector<MsdScore> scores;
    /// Per document: the group (two-group) or flag (factorial) level, and the
    /// category (factorial only).
    std::vector<std::string> arm;
    std::vector<std::string> category;
    /// Mean bs_meter per group or flag level.
    std::map<std::string, double> group_means;
    std::optional<stats::TTestResult> ttest;
    std::vector<std::string> ttest_levels;  ///< {a, b}
    std::optional<stats::AnovaTable> anova;
    std::vector<stats::CategoryTest> posthoc;
    std::vector<CellSummary> cells;
    Histogram word_histogram;
    Histogram context_histogram;
    /// Absent when either score column has zero variance.
    std::optional<stats::CorrelationReport> correlation;
};

ExperimentResult run_two_group(const LabeledCorpus& corpus, const MsdModel& model, const ExperimentSpec& spec);
ExperimentResult run_factorial(const LabeledCorpus& corpus, const MsdModel& model, const ExperimentSpec& spec);
ExperimentResult run_experiment(const LabeledCorpus& corpus, const MsdModel& model, const ExperimentSpec& spec);

/// The statistics of a run from precomputed scores (no model needed).
ExperimentResult analyze(std::vector<MsdScore> scores, const LabeledCorpus& corpus, const ExperimentSpec& spec);

enum class ReportFormat { Json, CsvBundle };

/// JSON: `out` is the report file. CSV bundle: `out` is a directory that
/// receives scores.csv, histogram_word.csv, histogram_context.csv,
/// scatter.csv, tests.csv, cells.csv (factorial only) and run.json with
/// `header`.
void render_report(const ExperimentResult& result, ReportFormat format, const std::filesystem::path& out,
                   const nlohmann::json& header = nlohmann::json::object());

nlohmann::json report_json(const ExperimentResult& result, const nlohmann::json& header = nlohmann::json::object());

nlohmann::json score_json(const MsdScore& score);
/// One record per line, with the manifest digest on every record.
void write_scores_jsonl(std::span<const MsdScore> scores, const std::string& manifest_digest, std::ostream& out);
/// RFC 4180 with a header row.
void write_scores_csv(std::span<const MsdScore> scores, const std::string& manifest_digest, std::ostream& out);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double value);

}  // namespace msd
