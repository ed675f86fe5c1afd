#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "msd/context.hpp"
#include "msd/corpus.hpp"
#include "msd/gbdt.hpp"
#include "msd/score.hpp"
#include "msd/textprep.hpp"
#include "msd/tfidf.hpp"

namespace msd {

inline constexpr std::string_view kManifestFormat = "msd-manifest";
inline constexpr int kManifestVersion = 1;

struct TrainConfig {
    FilterConfig filters;
    TfidfOptions tfidf;
    GbdtParams gbdt;
    ContextConfig context;
    ScoreParams score;
    double eval_fraction = 0.2;
    /// Drives the split, the context initialization and shuffling, and GBDT
    /// row subsampling; overrides the seeds inside `context` and `gbdt`.
    std::uint64_t seed = 7;
};

struct ClassifierEval {
    std::size_t n = 0;
    double accuracy = 0.0;
    /// Mean confidence of the predicted label.
    double mean_confidence = 0.0;
};

struct TrainReport {
    std::size_t n_train = 0;
    std::size_t n_eval = 0;
    std::size_t tfidf_vocab = 0;
    std::size_t gbdt_trees = 0;
    double gbdt_initial_loss = 0.0;
    double gbdt_final_loss = 0.0;
    ContextTrainReport context;
    ClassifierEval word_eval;
    ClassifierEval context_eval;

    nlohmann::json to_json() const;
};

/// Every fitted piece needed to score a document.
struct MsdModel {
    TfidfModel tfidf;
    GbdtModel gbdt;
    ContextClassifier context;
    ScoreParams score;
    /// Provenance recorded at training time (seed, corpus size, digest of the
    /// training corpus). Part of the manifest digest.
    nlohmann::json training = nlohmann::json::object();
};

/// Splits off a stratified held-out set, fits both classifiers on the rest,
/// and evaluates them on the held-out documents.
MsdModel train_pipeline(const LabeledCorpus& corpus, const TrainConfig& config, TrainReport* report = nullptr);

ClassifierOutput classify_word(const MsdModel& model, const Document& doc);

/// Throws a data error when the filters leave no tokens.
MsdScore score_document(const Document& doc, const MsdModel& model);

/// Scores every document; results are in corpus order regardless of
/// `threads` (0 picks the hardware concurrency).
std::vector<MsdScore> score_corpus(const LabeledCorpus& corpus, const MsdModel& model, std::size_t threads = 0);

/// Manifest without the "digest" member.
nlohmann::json manifest_body(const MsdModel& model);
/// "sha256:<hex>" of the compact dump of manifest_body().
std::string manifest_digest(const MsdModel& model);
nlohmann::json to_manifest(const MsdModel& model);

/// Rejects unknown formats and digests that do not match the content.
/// `endpoint_override` replaces a remote context model's stored endpoint.
MsdModel from_manifest(const nlohmann::json& j, const std::optional<std::string>& endpoint_override = std::nullopt);

void save_manifest(const MsdModel& model, const std::filesystem::path& path);
MsdModel load_manifest(const std::filesystem::path& path,
                       const std::optional<std::string>& endpoint_override = std::nullopt);

/// SHA-256 of the canonical JSONL serialization of a corpus.
std::string corpus_digest(const LabeledCorpus& corpus);

}  // namespace msd
