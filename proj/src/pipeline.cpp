#include "msd/pipeline.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "msd/digest.hpp"
#include "msd/error.hpp"

namespace msd {

using nlohmann::json;

json TrainReport::to_json() const {
    auto eval = [](const ClassifierEval& e) {
        return json{{"n", e.n}, {"accuracy", e.accuracy}, {"mean_confidence", e.mean_confidence}};
    };
    return {{"n_train", n_train},
            {"n_eval", n_eval},
            {"tfidf_vocab", tfidf_vocab},
            {"gbdt", {{"trees", gbdt_trees}, {"initial_loss", gbdt_initial_loss}, {"final_loss", gbdt_final_loss}}},
            {"context",
             {{"initial_loss", context.initial_loss},
              {"final_loss", context.final_loss},
              {"epochs", context.epochs},
              {"vocab_size", context.vocab_size},
              {"reverted_to_initial", context.reverted_to_initial}}},
            {"eval", {{"word", eval(word_eval)}, {"context", eval(context_eval)}}}};
}

namespace {

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = next++; i < n; i = next++) fn(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                    next = n;
                }
            });
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

ClassifierEval evaluate(const std::vector<ClassifierOutput>& outputs, const LabeledCorpus& eval) {
    ClassifierEval e;
    e.n = outputs.size();
    if (e.n == 0) return e;
    std::size_t correct = 0;
    double conf = 0.0;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        correct += outputs[i].label == *eval[i].label;
        conf += outputs[i].confidence;
    }
    e.accuracy = static_cast<double>(correct) / static_cast<double>(e.n);
    e.mean_confidence = conf / static_cast<double>(e.n);
    return e;
}

std::vector<std::string> texts_of(const LabeledCorpus& corpus) {
    std::vector<std::string> texts;
    texts.reserve(corpus.size());
    for (const auto& doc : corpus) texts.push_back(doc.text);
    return texts;
}

void require_tokens(const Document& doc, const FilterConfig& filters) {
    if (preprocess(doc.text, filters, doc.id).tokens.empty()) {
        throw data_error("document '" + doc.id + "' is empty after filtering");
    }
}

}  // namespace

std::string corpus_digest(const LabeledCorpus& corpus) {
    std::ostringstream out;
    write_jsonl(corpus, out);
    return "sha256:" + sha256_hex(out.str());
}

MsdModel train_pipeline(const LabeledCorpus& corpus, const TrainConfig& config, TrainReport* report) {
    config.score.validate();
    corpus.require_trainable(2);
    auto [train, eval] = split_train_eval(corpus, config.eval_fraction, config.seed);

    GbdtParams gbdt_params = config.gbdt;
    gbdt_params.subsample_seed = config.seed;
    ContextConfig context_config = config.context;
    context_config.seed = config.seed;

    MsdModel model;
    model.score = config.score;
    model.tfidf = TfidfModel::fit(train, config.filters, config.tfidf);
    std::vector<FeatureVector> vectors;
    vectors.reserve(train.size());
    for (const auto& doc : train) vectors.push_back(model.tfidf.vectorize(doc));
    const auto labels = train.labels();
    std::vector<double> loss_history;
    model.gbdt = train_gbdt(vectors, labels, model.tfidf.vocab_size(), gbdt_params, &loss_history);

    ContextTrainReport context_report;
    model.context = train_context(train, context_config, &context_report);

    model.training = {{"seed", config.seed},
                      {"eval_fraction", config.eval_fraction},
                      {"n_train", train.size()},
                      {"n_eval", eval.size()},
                      {"corpus_digest", corpus_digest(corpus)},
                      {"context_provider", to_string(context_config.provider)}};

    if (report) {
        TrainReport r;
        r.n_train = train.size();
        r.n_eval = eval.size();
        r.tfidf_vocab = model.tfidf.vocab_size();
        r.gbdt_trees = model.gbdt.trees().size();
        r.gbdt_initial_loss = loss_history.front();
        r.gbdt_final_loss = loss_history.back();
        r.context = context_report;
        std::vector<ClassifierOutput> word_out;
        for (const auto& doc : eval) word_out.push_back(classify_word(model, doc));
        const auto eval_texts = texts_of(eval);
        r.word_eval = evaluate(word_out, eval);
        r.context_eval = evaluate(model.context.predict_many(eval_texts), eval);
        *report = r;
    }
    return model;
}

ClassifierOutput classify_word(const MsdModel& model, const Document& doc) {
    return predict_word(model.gbdt, model.tfidf.vectorize(doc));
}

MsdScore score_document(const Document& doc, const MsdModel& model) {
    require_tokens(doc, model.tfidf.filters());
    return make_score(doc.id, classify_word(model, doc), model.context.predict(doc.text), model.score);
}

std::vector<MsdScore> score_corpus(const LabeledCorpus& corpus, const MsdModel& model, std::size_t threads) {
    std::vector<MsdScore> scores(corpus.size());
    if (model.context.provider() == EmbeddingProvider::Builtin) {
        parallel_for(corpus.size(), threads, [&](std::size_t i) { scores[i] = score_document(corpus[i], model); });
        return scores;
    }
    std::vector<ClassifierOutput> word(corpus.size());
    parallel_for(corpus.size(), threads, [&](std::size_t i) {
        require_tokens(corpus[i], model.tfidf.filters());
        word[i] = classify_word(model, corpus[i]);
    });
    const auto context = model.context.predict_many(texts_of(corpus));
    for (std::size_t i = 0; i < corpus.size(); ++i) scores[i] = make_score(corpus[i].id, word[i], context[i], model.score);
    return scores;
}

json manifest_body(const MsdModel& model) {
    return {{"format", kManifestFormat},
            {"format_version", kManifestVersion},
            {"tool_version", MSD_VERSION},
            {"training", model.training},
            {"score", model.score.to_json()},
            {"word", {{"tfidf", model.tfidf.to_json()}, {"gbdt", model.gbdt.to_json()}}},
            {"context", model.context.to_json()}};
}

namespace {

std::string digest_of(const json& body) { return "sha256:" + sha256_hex(body.dump()); }

}  // namespace

std::string manifest_digest(const MsdModel& model) { return digest_of(manifest_body(model)); }

json to_manifest(const MsdModel& model) {
    json j = manifest_body(model);
    j["digest"] = digest_of(j);
    return j;
}

MsdModel from_manifest(const json& j, const std::optional<std::string>& endpoint_override) {
    if (!j.is_object() || j.value("format", "") != kManifestFormat) throw data_error("not an msd manifest");
    if (j.value("format_version", 0) != kManifestVersion) {
        throw data_error("unsupported manifest version " + j.value("format_version", json()).dump());
    }
    json body = j;
    const auto stored = body.value("digest", "");
    body.erase("digest");
    if (stored != digest_of(body)) throw data_error("manifest digest does not match its content");
    MsdModel model;
    try {
        model.training = j.at("training");
        model.score = ScoreParams::from_json(j.at("score"));
        model.tfidf = TfidfModel::from_json(j.at("word").at("tfidf"));
        model.gbdt = GbdtModel::from_json(j.at("word").at("gbdt"));
        model.context = ContextClassifier::from_json(j.at("context"), endpoint_override);
    } catch (const json::exception& e) {
        throw data_error(std::string("malformed manifest: ") + e.what());
    }
    if (model.gbdt.n_features() != model.tfidf.vocab_size()) {
        throw data_error("manifest: gbdt feature count does not match the tfidf vocabulary");
    }
    return model;
}

void save_manifest(const MsdModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write manifest '" + path.string() + "'");
    out << to_manifest(model).dump() << '\n';
    if (!out) throw io_error("failed writing manifest '" + path.string() + "'");
}

MsdModel load_manifest(const std::filesystem::path& path, const std::optional<std::string>& endpoint_override) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot read manifest '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw data_error("manifest '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return from_manifest(j, endpoint_override);
}

}  // namespace msd
