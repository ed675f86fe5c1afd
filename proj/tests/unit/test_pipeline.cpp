#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fake_embed_server.hpp"
#include "msd/error.hpp"
#include "msd/pipeline.hpp"
#include "msd/synth.hpp"

using namespace msd;

namespace {

SynthSpec small_spec(std::uint64_t seed = 7) {
    SynthSpec s;
    s.n_per_class = 100;
    s.min_tokens = 60;
    s.max_tokens = 120;
    s.marker_rate = 0.25;
    s.seed = seed;
    return s;
}

TrainConfig fast_config() {
    TrainConfig c;
    c.context.epochs = 8;
    c.context.dim = 16;
    return c;
}

struct Trained {
    LabeledCorpus corpus;
    MsdModel model;
    TrainReport report;
};

const Trained& trained() {
    static const Trained t = [] {
        Trained r;
        r.corpus = synth_corpus(small_spec());
        r.model = train_pipeline(r.corpus, fast_config(), &r.report);
        return r;
    }();
    return t;
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::Io;
}

std::filesystem::path temp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("msd_test_pipeline_" + name);
}

}  // namespace

TEST_CASE("training report") {
    const auto& t = trained();
    CHECK(t.report.n_train + t.report.n_eval == t.corpus.size());
    CHECK(t.report.n_eval == 40);
    CHECK(t.report.gbdt_trees == 200);
    CHECK(t.report.gbdt_final_loss < t.report.gbdt_initial_loss);
    CHECK(t.report.context.final_loss <= t.report.context.initial_loss);
    CHECK(t.report.word_eval.n == 40);
    CHECK(t.report.word_eval.accuracy > 0.9);
    CHECK(t.report.word_eval.mean_confidence > 0.5);
    CHECK(t.report.context_eval.mean_confidence > 0.5);
    const auto j = t.report.to_json();
    CHECK(j.at("eval").at("word").at("accuracy") == t.report.word_eval.accuracy);
    CHECK(j.at("eval").at("context").at("n") == 40);
    CHECK(t.model.training.at("seed") == 7);
    CHECK(t.model.training.at("corpus_digest") == corpus_digest(t.corpus));
    CHECK(t.model.training.at("context_provider") == "builtin");
}

TEST_CASE("register documents land on their side of the meter") {
    const auto& t = trained();
    SynthSpec fresh = small_spec(99);
    fresh.n_per_class = 10;
    for (const auto& doc : synth_corpus(fresh)) {
        const auto s = score_document(doc, t.model);
        CHECK(s.doc_id == doc.id);
        CHECK(s.bs_meter >= 0.0);
        CHECK(s.bs_meter <= 100.0);
        CHECK(s.combined == doctest::Approx((s.word_score + s.context_score) / 2.0));
        if (*doc.label == Label::Bullshit) {
            CHECK(s.bs_meter > 50.0);
        } else {
            CHECK(s.bs_meter < 50.0);
        }
    }
}

TEST_CASE("documents emptied by the filters are rejected") {
    const auto& t = trained();
    Document doc{"stop", "The and of, Figure. The (fig).", std::nullopt, {}, {}, {}};
    CHECK(kind_of([&] { score_document(doc, t.model); }) == ErrorKind::Data);
}

TEST_CASE("scores do not depend on the thread count") {
    const auto& t = trained();
    const auto one = score_corpus(t.corpus, t.model, 1);
    const auto three = score_corpus(t.corpus, t.model, 3);
    const auto automatic = score_corpus(t.corpus, t.model);
    REQUIRE(one.size() == t.corpus.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
        CHECK(one[i].doc_id == t.corpus[i].id);
        CHECK(one[i].bs_meter == three[i].bs_meter);
        CHECK(one[i].bs_meter == automatic[i].bs_meter);
        CHECK(one[i].word_score == three[i].word_score);
        CHECK(one[i].context_score == three[i].context_score);
    }
}

TEST_CASE("manifest round trip") {
    const auto& t = trained();
    const auto j = to_manifest(t.model);
    CHECK(j.at("format") == kManifestFormat);
    CHECK(j.at("format_version") == kManifestVersion);
    CHECK(j.at("digest") == manifest_digest(t.model));
    CHECK(j.at("digest").get<std::string>().rfind("sha256:", 0) == 0);
    CHECK(j.at("score") == t.model.score.to_json());

    const auto path = temp_file("roundtrip.json");
    save_manifest(t.model, path);
    const auto loaded = load_manifest(path);
    CHECK(manifest_digest(loaded) == manifest_digest(t.model));
    CHECK(to_manifest(loaded) == j);
    const auto a = score_corpus(t.corpus, t.model, 1);
    const auto b = score_corpus(t.corpus, loaded, 1);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].bs_meter == b[i].bs_meter);
    std::filesystem::remove(path);
}

TEST_CASE("tampered or foreign manifests are rejected") {
    const auto& t = trained();
    const auto j = to_manifest(t.model);

    auto tampered = j;
    tampered["score"]["offset"] = 0.5;
    CHECK(kind_of([&] { from_manifest(tampered); }) == ErrorKind::Data);

    auto foreign = j;
    foreign["format"] = "something-else";
    CHECK(kind_of([&] { from_manifest(foreign); }) == ErrorKind::Data);

    auto future = j;
    future["format_version"] = kManifestVersion + 1;
    CHECK(kind_of([&] { from_manifest(future); }) == ErrorKind::Data);

    auto missing = j;
    missing.erase("word");
    CHECK(kind_of([&] { from_manifest(missing); }) == ErrorKind::Data);

    CHECK(kind_of([&] { load_manifest(temp_file("does-not-exist.json")); }) == ErrorKind::Io);
    const auto garbage = temp_file("garbage.json");
    std::ofstream(garbage) << "{not json";
    CHECK(kind_of([&] { load_manifest(garbage); }) == ErrorKind::Data);
    std::filesystem::remove(garbage);
}

TEST_CASE("training is reproducible and the seed matters") {
    const auto corpus = synth_corpus(small_spec());
    auto config = fast_config();
    config.context.epochs = 2;
    config.gbdt.n_trees = 10;
    const auto a = train_pipeline(corpus, config);
    const auto b = train_pipeline(corpus, config);
    CHECK(manifest_digest(a) == manifest_digest(b));
    CHECK(to_manifest(a).dump() == to_manifest(b).dump());
    config.seed = 8;
    CHECK(manifest_digest(train_pipeline(corpus, config)) != manifest_digest(a));
}

TEST_CASE("corpus digest") {
    const auto a = synth_corpus(small_spec());
    const auto b = synth_corpus(small_spec());
    CHECK(corpus_digest(a) == corpus_digest(b));
    CHECK(corpus_digest(a).size() == 7 + 64);
    CHECK(corpus_digest(a).rfind("sha256:", 0) == 0);
    CHECK(corpus_digest(a) != corpus_digest(synth_corpus(small_spec(8))));
}

TEST_CASE("remote context model in the manifest") {
    testing::FakeEmbedServer server({.dim = 4, .reply_dim = 4, .max_batch = 16});
    auto spec = small_spec();
    spec.n_per_class = 20;
    auto config = fast_config();
    config.context.provider = EmbeddingProvider::Remote;
    config.context.remote.endpoint = server.url();
    config.context.remote.initial_backoff = std::chrono::milliseconds(1);
    const auto model = train_pipeline(synth_corpus(spec), config);
    const auto j = to_manifest(model);
    CHECK(j.at("context").at("provider") == "remote");
    CHECK(j.at("context").at("endpoint") == server.url());
    CHECK(model.training.at("context_provider") == "remote");

    testing::FakeEmbedServer other({.dim = 4, .reply_dim = 4, .max_batch = 16});
    const auto moved = from_manifest(j, other.url());
    CHECK(moved.context.config().remote.endpoint == other.url());
    CHECK(manifest_digest(moved) == j.at("digest"));
    const auto corpus = synth_corpus(spec);
    const auto& doc = *corpus.begin();
    CHECK(score_document(doc, moved).bs_meter == score_document(doc, model).bs_meter);
    CHECK(other.embed_calls() > 0);
}
