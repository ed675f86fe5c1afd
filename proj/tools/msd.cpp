// msd: train, score, run experiments and generate synthetic corpora.
//
// Exit codes: 0 success, 2 I/O or usage error, 3 data or contract error,
// 4 remote embedding failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "msd/corpus.hpp"
#include "msd/error.hpp"
#include "msd/experiments.hpp"
#include "msd/pipeline.hpp"
#include "msd/synth.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitRemote = 4;

int exit_code(msd::ErrorKind kind) {
    switch (kind) {
        case msd::ErrorKind::Io: return kExitUsage;
        case msd::ErrorKind::Data: return kExitData;
        case msd::ErrorKind::Remote: return kExitRemote;
    }
    return kExitData;
}

struct Common {
    bool verbose = false;
};

struct TrainArgs {
    std::string corpus, out, report, provider = "builtin", corpus_format = "auto";
    std::optional<std::string> endpoint, stopwords, format_pattern;
    msd::TrainConfig config;
};

struct ScoreArgs {
    std::string corpus, manifest, out, format = "json", corpus_format = "auto";
    std::optional<std::string> endpoint, expect_digest;
    std::size_t threads = 0;
};

struct ExperimentArgs {
    std::string corpus, manifest, out, format = "json", design = "two-group", corpus_format = "auto";
    std::optional<std::string> endpoint, expect_digest, positive_level;
    msd::ExperimentSpec spec;
};

struct SynthArgs {
    std::string out, layout = "labeled";
    bool unlinked = false;
    msd::SynthSpec spec;
};

// Every option of a subcommand with its effective value, for report headers.
json flag_set(const CLI::App& app) {
    json flags = json::object();
    for (const CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
        if (name == "help" || name.empty()) continue;
        if (opt->count() > 0) {
            const auto& results = opt->results();
            flags[name] = results.size() == 1 ? json(results.front()) : json(results);
        } else if (!opt->get_default_str().empty()) {
            flags[name] = opt->get_default_str();
        } else {
            flags[name] = nullptr;
        }
    }
    return flags;
}

json header(const CLI::App& sub, std::uint64_t seed, const std::string& digest) {
    return {{"tool", "msd"},
            {"version", MSD_VERSION},
            {"subcommand", sub.get_name()},
            {"seed", seed},
            {"manifest_digest", digest},
            {"flags", flag_set(sub)}};
}

msd::LabeledCorpus read_corpus(const std::string& path, const std::string& format) {
    if (format == "jsonl") return msd::load_corpus(path, msd::CorpusFormat::Jsonl);
    if (format == "text-dir") return msd::load_corpus(path, msd::CorpusFormat::TextDir);
    return msd::load_corpus(path);
}

void check_digest(const std::optional<std::string>& expected, const std::string& actual) {
    if (expected && *expected != actual) {
        std::cerr << "warning: manifest digest " << actual << " differs from expected " << *expected << '\n';
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw msd::io_error("cannot write '" + path + "'");
    return out;
}

void add_train(CLI::App& app, TrainArgs& a) {
    auto& c = a.config;
    app.add_option("--corpus", a.corpus, "Labeled corpus (JSONL file or <label>/<id>.txt directory)")->required();
    app.add_option("--out", a.out, "Manifest output path")->required();
    app.add_option("--report", a.report, "Training report path (default: <out> with .report.json)");
    app.add_option("--corpus-format", a.corpus_format)->check(CLI::IsMember({"auto", "jsonl", "text-dir"}))->capture_default_str();
    app.add_option("--seed", c.seed)->capture_default_str();
    app.add_option("--eval-fraction", c.eval_fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    app.add_option("--provider", a.provider)->check(CLI::IsMember({"builtin", "remote"}))->capture_default_str();
    app.add_option("--endpoint", a.endpoint, "Embedding server URL (default: $MSD_EMBED_URL)");
    app.add_option("--stopwords", a.stopwords, "Stop-word file, one word per line");
    app.add_option("--format-pattern", a.format_pattern, "Regex of formatting tokens to drop");
    app.add_option("--min-df", c.tfidf.min_df)->capture_default_str();
    app.add_option("--trees", c.gbdt.n_trees)->capture_default_str();
    app.add_option("--depth", c.gbdt.max_depth)->capture_default_str();
    app.add_option("--learning-rate", c.gbdt.learning_rate)->capture_default_str();
    app.add_option("--l2", c.gbdt.l2_reg)->capture_default_str();
    app.add_option("--min-leaf-weight", c.gbdt.min_leaf_weight)->capture_default_str();
    app.add_option("--subsample", c.gbdt.subsample)->capture_default_str();
    app.add_option("--vocab-size", c.context.vocab_size)->capture_default_str();
    app.add_option("--dim", c.context.dim)->capture_default_str();
    app.add_option("--window", c.context.window)->capture_default_str();
    app.add_option("--max-tokens", c.context.max_tokens)->capture_default_str();
    app.add_option("--epochs", c.context.epochs)->capture_default_str();
    app.add_option("--batch-size", c.context.batch_size)->capture_default_str();
    app.add_option("--context-lr", c.context.learning_rate)->capture_default_str();
    app.add_option("--weight-decay", c.context.weight_decay)->capture_default_str();
    app.add_option("--init-range", c.context.init_range)->capture_default_str();
    app.add_option("--score-offset", c.score.offset)->capture_default_str();
    app.add_option("--score-scale", c.score.scale)->capture_default_str();
    app.add_option("--score-base", c.score.log_base)->capture_default_str();
    app.add_option("--score-clip", c.score.clip)->capture_default_str();
}

int run_train(const CLI::App& sub, TrainArgs& a, const Common& common) {
    auto& c = a.config;
    if (a.stopwords) {
        c.filters.stopwords = msd::load_stopword_file(*a.stopwords);
        c.filters.stopword_list_id = "file:" + std::filesystem::path(*a.stopwords).filename().string();
    }
    if (a.format_pattern) c.filters.set_format_pattern(*a.format_pattern);
    if (a.provider == "remote") {
        c.context.provider = msd::EmbeddingProvider::Remote;
        const auto endpoint = msd::resolve_endpoint(a.endpoint);
        if (!endpoint) {
            std::cerr << "error: --provider remote needs --endpoint or " << msd::kEmbedUrlEnv << '\n';
            return kExitUsage;
        }
        c.context.remote.endpoint = *endpoint;
    }
    const auto corpus = read_corpus(a.corpus, a.corpus_format);
    if (common.verbose) std::cerr << "training on " << corpus.size() << " documents\n";
    msd::TrainReport report;
    const auto model = msd::train_pipeline(corpus, c, &report);
    msd::save_manifest(model, a.out);
    const auto digest = msd::manifest_digest(model);

    json out = {{"header", header(sub, c.seed, digest)}, {"report", report.to_json()}};
    const std::string report_path =
        a.report.empty() ? std::filesystem::path(a.out).replace_extension(".report.json").string() : a.report;
    auto os = open_out(report_path);
    os << out.dump(2) << '\n';
    std::cout << "manifest " << a.out << " " << digest << '\n'
              << "word: accuracy " << report.word_eval.accuracy << ", mean confidence "
              << report.word_eval.mean_confidence << '\n'
              << "context: accuracy " << report.context_eval.accuracy << ", mean confidence "
              << report.context_eval.mean_confidence << '\n';
    return kExitOk;
}

void add_score(CLI::App& app, ScoreArgs& a) {
    app.add_option("--corpus", a.corpus)->required();
    app.add_option("--manifest", a.manifest)->required();
    app.add_option("--out", a.out, "Output file (JSONL or CSV)")->required();
    app.add_option("--format", a.format)->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
    app.add_option("--corpus-format", a.corpus_format)->check(CLI::IsMember({"auto", "jsonl", "text-dir"}))->capture_default_str();
    app.add_option("--endpoint", a.endpoint, "Embedding server URL for remote manifests (default: $MSD_EMBED_URL)");
    app.add_option("--expect-digest", a.expect_digest, "Warn if the manifest digest differs");
    app.add_option("--threads", a.threads, "0 = hardware concurrency")->capture_default_str();
}

int run_score(const CLI::App&, ScoreArgs& a, const Common& common) {
    const auto model = msd::load_manifest(a.manifest, msd::resolve_endpoint(a.endpoint));
    const auto digest = msd::manifest_digest(model);
    check_digest(a.expect_digest, digest);
    const auto corpus = read_corpus(a.corpus, a.corpus_format);
    if (common.verbose) std::cerr << "scoring " << corpus.size() << " documents\n";
    const auto scores = msd::score_corpus(corpus, model, a.threads);
    auto os = open_out(a.out);
    if (a.format == "csv") {
        msd::write_scores_csv(scores, digest, os);
    } else {
        msd::write_scores_jsonl(scores, digest, os);
    }
    if (!os) throw msd::io_error("failed writing '" + a.out + "'");
    return kExitOk;
}

void add_experiment(CLI::App& app, ExperimentArgs& a) {
    app.add_option("--corpus", a.corpus)->required();
    app.add_option("--manifest", a.manifest)->required();
    app.add_option("--out", a.out, "Report file (json) or directory (csv)")->required();
    app.add_option("--format", a.format)->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
    app.add_option("--corpus-format", a.corpus_format)->check(CLI::IsMember({"auto", "jsonl", "text-dir"}))->capture_default_str();
    app.add_option("--design", a.design)->check(CLI::IsMember({"two-group", "factorial"}))->capture_default_str();
    app.add_option("--group-field", a.spec.group_field)->capture_default_str();
    app.add_option("--flag-field", a.spec.flag_field)->capture_default_str();
    app.add_option("--category-field", a.spec.category_field)->capture_default_str();
    app.add_option("--positive-level", a.positive_level, "Level reported as side a of each t-test");
    app.add_flag("--bonferroni", a.spec.bonferroni, "Bonferroni-correct the post-hoc p-values");
    app.add_option("--endpoint", a.endpoint, "Embedding server URL for remote manifests (default: $MSD_EMBED_URL)");
    app.add_option("--expect-digest", a.expect_digest, "Warn if the manifest digest differs");
    app.add_option("--threads", a.spec.threads, "0 = hardware concurrency")->capture_default_str();
}

int run_experiment(const CLI::App& sub, ExperimentArgs& a, const Common& common) {
    const auto model = msd::load_manifest(a.manifest, msd::resolve_endpoint(a.endpoint));
    const auto digest = msd::manifest_digest(model);
    check_digest(a.expect_digest, digest);
    a.spec.design = *msd::parse_design(a.design);
    a.spec.positive_level = a.positive_level;
    a.spec.manifest_digest = digest;
    const auto corpus = read_corpus(a.corpus, a.corpus_format);
    if (common.verbose) std::cerr << "running " << a.design << " experiment on " << corpus.size() << " documents\n";
    const auto result = msd::run_experiment(corpus, model, a.spec);
    const auto seed = model.training.value("seed", std::uint64_t{0});
    msd::render_report(result, a.format == "csv" ? msd::ReportFormat::CsvBundle : msd::ReportFormat::Json, a.out,
                       header(sub, seed, digest));
    if (result.ttest) {
        std::cout << "welch t = " << result.ttest->t << ", df = " << result.ttest->df << ", p = " << result.ttest->p
                  << '\n';
    }
    if (result.anova) {
        for (const auto* row : {&result.anova->factor_a, &result.anova->factor_b, &result.anova->interaction}) {
            std::cout << row->term << ": F(" << row->df << ", " << result.anova->residual.df << ") = " << row->F
                      << ", p = " << row->p << '\n';
        }
    }
    return kExitOk;
}

void add_synth(CLI::App& app, SynthArgs& a) {
    auto& s = a.spec;
    app.add_option("--out", a.out, "JSONL output path")->required();
    app.add_option("--layout", a.layout, "labeled: training corpus; two-group / factorial: unlabeled experiment input")
        ->check(CLI::IsMember({"labeled", "two-group", "factorial"}))
        ->capture_default_str();
    app.add_flag("--unlinked", a.unlinked, "Factorial layout: draw registers independently of the flag");
    app.add_option("--n", s.n_per_class, "Documents per class, group or cell")->capture_default_str();
    app.add_option("--markers", s.marker_terms_per_class)->capture_default_str();
    app.add_option("--shared-vocab", s.shared_vocab_size)->capture_default_str();
    app.add_option("--min-tokens", s.min_tokens)->capture_default_str();
    app.add_option("--max-tokens", s.max_tokens)->capture_default_str();
    app.add_option("--marker-rate", s.marker_rate)->capture_default_str();
    app.add_option("--context-terms", s.context_terms)->capture_default_str();
    app.add_option("--context-rate", s.context_rate)->capture_default_str();
    app.add_option("--zipf", s.zipf_exponent)->capture_default_str();
    app.add_option("--seed", s.seed)->capture_default_str();
}

int run_synth(const CLI::App&, SynthArgs& a, const Common&) {
    msd::LabeledCorpus corpus;
    if (a.layout == "two-group") {
        corpus = msd::synth_two_group(a.spec);
    } else if (a.layout == "factorial") {
        corpus = msd::synth_factorial(a.spec, !a.unlinked);
    } else {
        corpus = msd::synth_corpus(a.spec);
    }
    msd::save_jsonl(corpus, a.out);
    std::cout << "wrote " << corpus.size() << " documents to " << a.out << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-classifier register detector and BS-meter"};
    app.set_version_flag("--version", MSD_VERSION);
    app.set_config("--config", "", "Key = value configuration file; flags override it");
    app.require_subcommand(1);
    Common common;
    app.add_flag("-v,--verbose", common.verbose);

    TrainArgs train;
    ScoreArgs score;
    ExperimentArgs experiment;
    SynthArgs synth;
    auto* train_cmd = app.add_subcommand("train", "Fit both classifiers and write a manifest");
    auto* score_cmd = app.add_subcommand("score", "Score documents with a manifest");
    auto* experiment_cmd = app.add_subcommand("experiment", "Run a two-group or factorial experiment");
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic corpus");
    add_train(*train_cmd, train);
    add_score(*score_cmd, score);
    add_experiment(*experiment_cmd, experiment);
    add_synth(*synth_cmd, synth);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (train_cmd->parsed()) return run_train(*train_cmd, train, common);
        if (score_cmd->parsed()) return run_score(*score_cmd, score, common);
        if (experiment_cmd->parsed()) return run_experiment(*experiment_cmd, experiment, common);
        return run_synth(*synth_cmd, synth, common);
    } catch (const msd::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
}
