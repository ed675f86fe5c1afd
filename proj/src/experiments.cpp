#include "msd/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "msd/error.hpp"

namespace msd {

using nlohmann::json;

std::string_view to_string(Design design) { return design == Design::TwoGroup ? "two-group" : "factorial"; }

std::optional<Design> parse_design(std::string_view text) {
    if (text == "two-group") return Design::TwoGroup;
    if (text == "factorial") return Design::Factorial;
    return std::nullopt;
}

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, end);
}

Histogram make_histogram(std::span<const double> values, double lower, double upper, std::size_t bins) {
    if (bins == 0 || !(upper > lower)) throw data_error("histogram: invalid range or bin count");
    Histogram h{lower, upper, std::vector<std::size_t>(bins, 0)};
    const double width = h.width();
    for (double v : values) {
        const double pos = std::floor((v - lower) / width);
        const auto bin = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(bins - 1)));
        ++h.counts[bin];
    }
    return h;
}

namespace {

std::string require_field(const Document& doc, const std::string& field) {
    auto value = doc.field(field);
    if (!value || value->empty()) throw data_error("document '" + doc.id + "' has no '" + field + "' field");
    return *value;
}

std::vector<std::string> sorted_levels(const std::vector<std::string>& values) {
    const std::set<std::string> unique(values.begin(), values.end());
    return {unique.begin(), unique.end()};
}

// Positive level first.
std::vector<std::string> ordered_levels(const std::vector<std::string>& values, const ExperimentSpec& spec,
                                        const std::string& what) {
    auto levels = sorted_levels(values);
    if (levels.size() != 2) {
        throw data_error(what + " must have exactly 2 distinct values, found " + std::to_string(levels.size()));
    }
    if (spec.positive_level) {
        auto it = std::find(levels.begin(), levels.end(), *spec.positive_level);
        if (it == levels.end()) throw data_error("positive level '" + *spec.positive_level + "' not present in " + what);
        std::iter_swap(levels.begin(), it);
    }
    return levels;
}

std::vector<double> column(const std::vector<MsdScore>& scores, double MsdScore::*member) {
    std::vector<double> out;
    out.reserve(scores.size());
    for (const auto& s : scores) out.push_back(s.*member);
    return out;
}

double clip_of(const MsdModel& model) { return model.score.clip; }

void fill_common(ExperimentResult& r, double clip) {
    const auto word = column(r.scores, &MsdScore::word_score);
    const auto context = column(r.scores, &MsdScore::context_score);
    r.word_histogram = make_histogram(word, -clip, clip);
    r.context_histogram = make_histogram(context, -clip, clip);
    if (word.size() >= 3 && stats::sample_variance(word) > 0.0 && stats::sample_variance(context) > 0.0) {
        r.correlation = stats::pearson_r(word, context);
    }
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
        auto& [sum, n] = sums[r.arm[i]];
        sum += r.scores[i].bs_meter;
        ++n;
    }
    for (const auto& [level, sn] : sums) r.group_means[level] = sn.first / static_cast<double>(sn.second);
}

ExperimentResult analyze_impl(std::vector<MsdScore> scores, const LabeledCorpus& corpus, const ExperimentSpec& spec,
                              double clip) {
    if (scores.size() != corpus.size()) throw data_error("experiment: score count does not match corpus size");
    ExperimentResult r;
    r.design = spec.design;
    r.manifest_digest = spec.manifest_digest;
    r.scores = std::move(scores);
    const auto bs = column(r.scores, &MsdScore::bs_meter);

    if (spec.design == Design::TwoGroup) {
        for (const auto& doc : corpus) r.arm.push_back(require_field(doc, spec.group_field));
        r.ttest_levels = ordered_levels(r.arm, spec, "group field '" + spec.group_field + "'");
        std::vector<double> a, b;
        for (std::size_t i = 0; i < bs.size(); ++i) (r.arm[i] == r.ttest_levels[0] ? a : b).push_back(bs[i]);
        if (a.size() < 2 || b.size() < 2) throw data_error("experiment: each group needs at least 2 documents");
        r.ttest = stats::welch_t(a, b);
    } else {
        for (const auto& doc : corpus) {
            r.arm.push_back(require_field(doc, spec.flag_field));
            r.category.push_back(require_field(doc, spec.category_field));
        }
        const auto flags = ordered_levels(r.arm, spec, "flag field '" + spec.flag_field + "'");
        const auto categories = sorted_levels(r.category);
        if (categories.size() != 5) {
            throw data_error("factorial design needs 5 categories, found " + std::to_string(categories.size()));
        }
        r.ttest_levels = flags;
        r.anova = stats::two_way_anova(bs, r.arm, r.category);
        r.anova->factor_a.term = spec.flag_field;
        r.anova->factor_b.term = spec.category_field;
        r.anova->interaction.term = spec.flag_field + ":" + spec.category_field;
        r.posthoc = stats::posthoc_per_category(bs, r.arm, r.category, flags[0], spec.bonferroni);
        for (const auto& ct : r.posthoc) {
            r.cells.push_back({ct.category, ct.test.mean_a, ct.test.mean_b, ct.test.n_a, ct.test.n_b, ct.test.p});
        }
    }
    fill_common(r, clip);
    return r;
}

}  // namespace

ExperimentResult analyze(std::vector<MsdScore> scores, const LabeledCorpus& corpus, const ExperimentSpec& spec) {
    return analyze_impl(std::move(scores), corpus, spec, ScoreParams{}.clip);
}

ExperimentResult run_two_group(const LabeledCorpus& corpus, const MsdModel& model, const ExperimentSpec& spec) {
    ExperimentSpec s = spec;
    s.design = Design::TwoGroup;
    // Validate metadata before spending time on scoring.
    for (const auto& doc : corpus) require_field(doc, s.group_field);
    return analyze_impl(score_corpus(corpus, model, s.threads), corpus, s, clip_of(model));
}

ExperimentResult run_factorial(const LabeledCorpus& corpus, const MsdModel& model, const ExperimentSpec& spec) {
    ExperimentSpec s = spec;
    s.design = Design::Factorial;
    for (const auto& doc : corpus) {
        require_field(doc, s.flag_field);
        require_field(doc, s.category_field);
    }
    return analyze_impl(score_corpus(corpus, model, s.threads), corpus, s, clip_of(model));
}

ExperimentResult run_experiment(const LabeledCorpus& corpus, const MsdModel& model, const ExperimentSpec& spec) {
    return spec.design == Design::TwoGroup ? run_two_group(corpus, model, spec) : run_factorial(corpus, model, spec);
}

namespace {

json ttest_json(const stats::TTestResult& t) {
    return {{"t", t.t}, {"df", t.df}, {"p", t.p}, {"mean_a", t.mean_a}, {"mean_b", t.mean_b}, {"n_a", t.n_a}, {"n_b", t.n_b}};
}

json anova_row_json(const stats::AnovaRow& row) {
    return {{"term", row.term}, {"sum_sq", row.sum_sq}, {"df", row.df}, {"mean_sq", row.mean_sq}, {"F", row.F}, {"p", row.p}};
}

json histogram_json(const Histogram& h) {
    return {{"lower", h.lower}, {"upper", h.upper}, {"width", h.width()}, {"counts", h.counts}};
}

// RFC 4180 field quoting.
std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    CsvWriter& row(std::initializer_list<std::string> fields) {
        bool first = true;
        for (const auto& f : fields) {
            if (!first) out_ << ',';
            out_ << csv_field(f);
            first = false;
        }
        out_ << "\r\n";
        return *this;
    }

private:
    std::ostream& out_;
};

std::string num(double v) { return format_number(v); }
std::string num(std::size_t v) { return std::to_string(v); }

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write '" + path.string() + "'");
    return out;
}

void write_histogram_csv(const Histogram& h, const std::string& digest, std::ostream& os) {
    CsvWriter csv(os);
    csv.row({"manifest_digest", "bin", "lower", "upper", "count"});
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
        const double lo = h.lower + h.width() * static_cast<double>(b);
        const double hi = b + 1 == h.counts.size() ? h.upper : h.lower + h.width() * static_cast<double>(b + 1);
        csv.row({digest, num(b), num(lo), num(hi), num(h.counts[b])});
    }
}

}  // namespace

json score_json(const MsdScore& s) {
    return {{"doc_id", s.doc_id},
            {"word", {{"label", to_string(s.word.label)}, {"confidence", s.word.confidence}, {"score", s.word_score}}},
            {"context",
             {{"label", to_string(s.context.label)}, {"confidence", s.context.confidence}, {"score", s.context_score}}},
            {"combined", s.combined},
            {"bs_meter", s.bs_meter}};
}

void write_scores_jsonl(std::span<const MsdScore> scores, const std::string& manifest_digest, std::ostream& out) {
    for (const auto& s : scores) {
        json j = score_json(s);
        j["manifest_digest"] = manifest_digest;
        out << j.dump() << '\n';
    }
}

void write_scores_csv(std::span<const MsdScore> scores, const std::string& manifest_digest, std::ostream& out) {
    CsvWriter csv(out);
    csv.row({"manifest_digest", "doc_id", "word_label", "word_confidence", "word_score", "context_label",
             "context_confidence", "context_score", "combined", "bs_meter"});
    for (const auto& s : scores) {
        csv.row({manifest_digest, s.doc_id, std::string(to_string(s.word.label)), num(s.word.confidence),
                 num(s.word_score), std::string(to_string(s.context.label)), num(s.context.confidence),
                 num(s.context_score), num(s.combined), num(s.bs_meter)});
    }
}

json report_json(const ExperimentResult& r, const json& header) {
    json scores = json::array();
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
        json s = score_json(r.scores[i]);
        s["arm"] = r.arm[i];
        if (!r.category.empty()) s["category"] = r.category[i];
        scores.push_back(std::move(s));
    }
    json scatter = json::array();
    for (const auto& s : r.scores) scatter.push_back({s.word_score, s.context_score});
    json j = {{"header", header},
              {"design", to_string(r.design)},
              {"manifest_digest", r.manifest_digest},
              {"scores", scores},
              {"group_means", r.group_means},
              {"histograms", {{"word", histogram_json(r.word_histogram)}, {"context", histogram_json(r.context_histogram)}}},
              {"scatter",
               {{"points", scatter},
                {"correlation", r.correlation ? json{{"r", r.correlation->r}, {"n", r.correlation->n}} : json()}}}};
    if (r.ttest) {
        j["ttest"] = ttest_json(*r.ttest);
        j["ttest"]["levels"] = r.ttest_levels;
    }
    if (r.anova) {
        const auto& a = *r.anova;
        j["anova"] = {{"rows", {anova_row_json(a.factor_a), anova_row_json(a.factor_b), anova_row_json(a.interaction),
                                anova_row_json(a.residual)}},
                      {"grand_mean", a.grand_mean},
                      {"n_per_cell", a.n_per_cell}};
        json posthoc = json::array();
        for (const auto& ct : r.posthoc) {
            json t = ttest_json(ct.test);
            t["category"] = ct.category;
            posthoc.push_back(std::move(t));
        }
        j["posthoc"] = posthoc;
        json cells = json::array();
        for (const auto& c : r.cells) {
            cells.push_back({{"category", c.category},
                             {"positive_mean", c.positive_mean},
                             {"contrast_mean", c.contrast_mean},
                             {"n_positive", c.n_positive},
                             {"n_contrast", c.n_contrast},
                             {"p", c.p}});
        }
        j["cells"] = cells;
        j["flag_levels"] = r.ttest_levels;
    }
    return j;
}

void render_report(const ExperimentResult& r, ReportFormat format, const std::filesystem::path& out,
                   const json& header) {
    if (format == ReportFormat::Json) {
        auto os = open_out(out);
        os << report_json(r, header).dump(2) << '\n';
        if (!os) throw io_error("failed writing '" + out.string() + "'");
        return;
    }
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw io_error("cannot create report directory '" + out.string() + "': " + ec.message());
    const auto& digest = r.manifest_digest;

    {
        auto os = open_out(out / "scores.csv");
        CsvWriter csv(os);
        csv.row({"manifest_digest", "doc_id", "arm", "category", "word_label", "word_confidence", "word_score",
                 "context_label", "context_confidence", "context_score", "combined", "bs_meter"});
        for (std::size_t i = 0; i < r.scores.size(); ++i) {
            const auto& s = r.scores[i];
            csv.row({digest, s.doc_id, r.arm[i], r.category.empty() ? std::string() : r.category[i],
                     std::string(to_string(s.word.label)), num(s.word.confidence), num(s.word_score),
                     std::string(to_string(s.context.label)), num(s.context.confidence), num(s.context_score),
                     num(s.combined), num(s.bs_meter)});
        }
    }
    {
        auto os = open_out(out / "histogram_word.csv");
        write_histogram_csv(r.word_histogram, digest, os);
    }
    {
        auto os = open_out(out / "histogram_context.csv");
        write_histogram_csv(r.context_histogram, digest, os);
    }
    {
        auto os = open_out(out / "scatter.csv");
        CsvWriter csv(os);
        csv.row({"manifest_digest", "doc_id", "word_score", "context_score"});
        for (const auto& s : r.scores) csv.row({digest, s.doc_id, num(s.word_score), num(s.context_score)});
    }
    {
        auto os = open_out(out / "tests.csv");
        CsvWriter csv(os);
        csv.row({"manifest_digest", "test", "term", "statistic", "df1", "df2", "p", "mean_a", "mean_b", "n_a", "n_b"});
        auto ttest_row = [&](const std::string& test, const std::string& term, const stats::TTestResult& t) {
            csv.row({digest, test, term, num(t.t), num(t.df), "", num(t.p), num(t.mean_a), num(t.mean_b), num(t.n_a),
                     num(t.n_b)});
        };
        if (r.ttest) ttest_row("welch_t", r.ttest_levels[0] + " vs " + r.ttest_levels[1], *r.ttest);
        if (r.anova) {
            const auto& a = *r.anova;
            for (const auto* row : {&a.factor_a, &a.factor_b, &a.interaction}) {
                csv.row({digest, "anova_F", row->term, num(row->F), num(row->df), num(a.residual.df), num(row->p), "", "",
                         "", ""});
            }
            for (const auto& ct : r.posthoc) ttest_row("posthoc_welch_t", ct.category, ct.test);
        }
        if (r.correlation) {
            csv.row({digest, "pearson_r", "word_score~context_score", num(r.correlation->r), "", "", "", "", "",
                     num(r.correlation->n), ""});
        }
    }
    if (!r.cells.empty()) {
        auto os = open_out(out / "cells.csv");
        CsvWriter csv(os);
        csv.row({"manifest_digest", "category", "positive_mean", "contrast_mean", "n_positive", "n_contrast", "p"});
        for (const auto& c : r.cells) {
            csv.row({digest, c.category, num(c.positive_mean), num(c.contrast_mean), num(c.n_positive),
                     num(c.n_contrast), num(c.p)});
        }
    }
    {
        auto os = open_out(out / "run.json");
        json run = {{"header", header}, {"design", to_string(r.design)}, {"manifest_digest", digest}};
        os << run.dump(2) << '\n';
    }
}

}  // namespace msd
