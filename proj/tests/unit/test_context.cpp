#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "../support/fixtures.hpp"
#include "fake_embed_server.hpp"
#include "msd/context.hpp"
#include "msd/error.hpp"
#include "msd/synth.hpp"

using namespace msd;

namespace {

struct TrainedFixture {
    SynthSpec spec;
    LabeledCorpus train, eval;
    ContextClassifier model;
    ContextTrainReport report;
};

const TrainedFixture& context_fixture() {
    static const TrainedFixture f = [] {
        TrainedFixture t;
        t.spec = fixtures::context_only_spec(1);
        auto [train, eval] = split_train_eval(synth_corpus(t.spec), 0.25, 7);
        t.train = std::move(train);
        t.eval = std::move(eval);
        t.model = train_context(t.train, ContextConfig{}, &t.report);
        return t;
    }();
    return f;
}

double accuracy(const ContextClassifier& model, const LabeledCorpus& corpus) {
    std::size_t ok = 0;
    for (const auto& doc : corpus) ok += model.predict(doc.text).label == *doc.label;
    return static_cast<double>(ok) / static_cast<double>(corpus.size());
}

std::vector<std::string> words_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string w; in >> w;) {
        std::string clean;
        for (char c : w) {
            if (std::isalpha(static_cast<unsigned char>(c))) clean.push_back(static_cast<char>(std::tolower(c)));
        }
        if (!clean.empty()) out.push_back(clean);
    }
    return out;
}

// Plain logistic regression on relative n-gram frequencies, fitted by full
// batch gradient descent. Serves as an independent reference for how much
// signal the fixture carries at each n-gram order.
double ngram_lr_accuracy(const LabeledCorpus& train, const LabeledCorpus& eval, bool bigrams) {
    std::map<std::string, std::size_t> index;
    auto featurize = [&](const Document& doc, bool grow) {
        const auto w = words_of(doc.text);
        std::map<std::size_t, double> f;
        const std::size_t n = bigrams ? w.size() - 1 : w.size();
        for (std::size_t i = 0; i < n; ++i) {
            const auto key = bigrams ? w[i] + " " + w[i + 1] : w[i];
            auto it = index.find(key);
            if (it == index.end()) {
                if (!grow) continue;
                it = index.emplace(key, index.size()).first;
            }
            f[it->second] += 1.0 / static_cast<double>(n);
        }
        return f;
    };
    std::vector<std::map<std::size_t, double>> xs;
    std::vector<double> ys;
    for (const auto& doc : train) {
        xs.push_back(featurize(doc, true));
        ys.push_back(*doc.label == Label::Bullshit ? 1.0 : 0.0);
    }
    std::vector<double> w(index.size(), 0.0);
    double b = 0.0;
    for (int it = 0; it < 3000; ++it) {
        std::vector<double> g(w.size(), 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double z = b;
            for (const auto& [k, v] : xs[i]) z += w[k] * v;
            const double r = 1.0 / (1.0 + std::exp(-z)) - ys[i];
            for (const auto& [k, v] : xs[i]) g[k] += r * v;
            gb += r;
        }
        for (std::size_t k = 0; k < w.size(); ++k) w[k] -= 4.0 * (g[k] / xs.size() + 1e-4 * w[k]);
        b -= 4.0 * gb / xs.size();
    }
    std::size_t ok = 0;
    for (const auto& doc : eval) {
        double z = b;
        for (const auto& [k, v] : featurize(doc, false)) z += w[k] * v;
        ok += (z >= 0.0) == (*doc.label == Label::Bullshit);
    }
    return static_cast<double>(ok) / static_cast<double>(eval.size());
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

}  // namespace

TEST_CASE("analytic gradient matches central differences on a 5-token example") {
    auto net = fixtures::gradient_fixture_network();
    for (double target : {0.0, 1.0}) {
        const auto check = fixtures::check_gradient(net, fixtures::gradient_fixture_tokens(), target);
        CHECK(check.n_params == 9 * 4 + 3 * 16 + 5 + 4 + 1);
        CHECK(check.max_relative_error < 1e-4);
        CHECK(check.norm_relative_error < 1e-6);
    }
}

TEST_CASE("PAD tokens never change the pooled vector") {
    auto net = fixtures::gradient_fixture_network();
    const std::vector<std::int32_t> plain = {5, 7, 4, 8, 5};
    const auto reference = net.pooled(plain);
    for (const std::vector<std::int32_t>& padded :
         {std::vector<std::int32_t>{0, 5, 7, 4, 8, 5}, {5, 7, 0, 0, 4, 8, 5}, {5, 7, 4, 8, 5, 0, 0, 0},
          {0, 5, 0, 7, 0, 4, 0, 8, 0, 5, 0}}) {
        CHECK((net.pooled(padded) - reference).norm() == 0.0);
        CHECK(net.logit(padded) == net.logit(plain));
    }
}

TEST_CASE("network input validation") {
    auto net = fixtures::gradient_fixture_network();
    CHECK(kind_of([&] { net.logit(std::vector<std::int32_t>{0, 0}); }) == ErrorKind::Data);
    CHECK(kind_of([&] { net.logit(std::vector<std::int32_t>{}); }) == ErrorKind::Data);
    CHECK(kind_of([&] { net.logit(std::vector<std::int32_t>{5, 9}); }) == ErrorKind::Data);
}

TEST_CASE("context fixture carries bigram signal only") {
    const auto& f = context_fixture();
    CHECK(ngram_lr_accuracy(f.train, f.eval, true) > 0.9);
    CHECK(ngram_lr_accuracy(f.train, f.eval, false) < 0.7);
}

TEST_CASE("context classifier separates classes that differ only in word order") {
    const auto& f = context_fixture();
    CHECK(f.report.final_loss <= f.report.initial_loss);
    CHECK_FALSE(f.report.reverted_to_initial);
    CHECK(accuracy(f.model, f.eval) > 0.9);

    std::size_t confident = 0;
    for (const auto& doc : f.train) {
        const auto out = f.model.predict(doc.text);
        confident += out.label == *doc.label && out.confidence > 0.9;
    }
    CHECK(static_cast<double>(confident) / static_cast<double>(f.train.size()) > 0.95);
}

TEST_CASE("identical bags of words in different orders get different probabilities") {
    const auto& f = context_fixture();
    const SynthGenerator gen(f.spec);
    std::string forward, swapped;
    for (std::size_t k = 0; k < gen.context_anchors().size(); ++k) {
        const auto& a = gen.context_anchors()[k];
        const auto& bs = gen.context_neighbors(Label::Bullshit)[k];
        const auto& ref = gen.context_neighbors(Label::Reference)[k];
        forward += a + " " + bs + " " + ref + " ";
        swapped += a + " " + ref + " " + bs + " ";
    }
    auto bag = [](const std::string& s) {
        auto w = words_of(s);
        std::sort(w.begin(), w.end());
        return w;
    };
    REQUIRE(bag(forward) == bag(swapped));
    const auto p_forward = f.model.predict(forward).p_bullshit();
    const auto p_swapped = f.model.predict(swapped).p_bullshit();
    CHECK(p_forward != p_swapped);
    CHECK(p_forward > 0.5);
    CHECK(p_swapped < 0.5);
}

TEST_CASE("prediction contract") {
    const auto& f = context_fixture();
    const auto& text = f.eval.begin()->text;
    const auto a = f.model.predict(text);
    const auto b = f.model.predict(text);
    CHECK(a.label == b.label);
    CHECK(a.confidence == b.confidence);
    CHECK(a.confidence > 0.5);
    CHECK(a.confidence < 1.0);
    CHECK(kind_of([&] { f.model.predict(""); }) == ErrorKind::Data);
    CHECK(kind_of([&] { f.model.predict("   \n\t"); }) == ErrorKind::Data);

    std::vector<std::string> texts;
    for (const auto& doc : f.eval) texts.push_back(doc.text);
    const auto many = f.model.predict_many(texts);
    REQUIRE(many.size() == texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i) CHECK(many[i].confidence == f.model.predict(texts[i]).confidence);
}

TEST_CASE("model JSON round trip reproduces predictions") {
    const auto& f = context_fixture();
    const auto j = f.model.to_json();
    CHECK(j.at("provider") == "builtin");
    const auto restored = ContextClassifier::from_json(nlohmann::json::parse(j.dump()));
    CHECK(restored.to_json() == j);
    for (const auto& doc : f.eval) {
        CHECK(restored.predict(doc.text).confidence == f.model.predict(doc.text).confidence);
    }
    auto broken = j;
    broken["parameters"].erase(broken["parameters"].begin());
    CHECK(kind_of([&] { ContextClassifier::from_json(broken); }) == ErrorKind::Data);
}

TEST_CASE("identical texts in both classes carry no signal") {
    SynthSpec spec;
    spec.n_per_class = 60;
    spec.min_tokens = 30;
    spec.max_tokens = 60;
    spec.seed = 5;
    // Every text appears once with each label; train and eval share no text.
    std::vector<Document> train_docs, eval_docs;
    std::size_t i = 0;
    for (const auto& doc : synth_corpus(spec)) {
        if (*doc.label != Label::Bullshit) continue;
        auto& target = i % 4 == 0 ? eval_docs : train_docs;
        for (Label label : {Label::Bullshit, Label::Reference}) {
            Document d = doc;
            d.id = "d" + std::to_string(i) + std::string(to_string(label));
            d.label = label;
            target.push_back(std::move(d));
        }
        ++i;
    }
    const LabeledCorpus train(std::move(train_docs)), eval(std::move(eval_docs));
    ContextConfig config;
    config.epochs = 5;
    const auto model = train_context(train, config);
    CHECK(std::abs(accuracy(model, eval) - 0.5) <= 0.15);
    double mean_confidence = 0.0;
    for (const auto& doc : eval) mean_confidence += model.predict(doc.text).confidence;
    CHECK(mean_confidence / static_cast<double>(eval.size()) < 0.6);
}

TEST_CASE("training is deterministic for a fixed seed") {
    SynthSpec spec;
    spec.n_per_class = 10;
    spec.min_tokens = 20;
    spec.max_tokens = 30;
    const auto corpus = synth_corpus(spec);
    ContextConfig config;
    config.epochs = 3;
    config.dim = 8;
    const auto a = train_context(corpus, config);
    const auto b = train_context(corpus, config);
    CHECK(a.to_json() == b.to_json());
    config.seed = 8;
    CHECK(train_context(corpus, config).to_json() != a.to_json());
}

TEST_CASE("non-finite loss is reported") {
    SynthSpec spec;
    spec.n_per_class = 10;
    spec.min_tokens = 20;
    spec.max_tokens = 30;
    const auto corpus = synth_corpus(spec);
    ContextConfig config;
    config.epochs = 50;
    config.learning_rate = 1e300;
    config.dim = 8;
    try {
        train_context(corpus, config);
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Data);
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
}

TEST_CASE("configuration and corpus validation") {
    SynthSpec spec;
    spec.n_per_class = 3;
    spec.min_tokens = 10;
    spec.max_tokens = 12;
    const auto corpus = synth_corpus(spec);
    ContextConfig bad;
    bad.dim = 0;
    CHECK(kind_of([&] { train_context(corpus, bad); }) == ErrorKind::Data);
    bad = {};
    bad.learning_rate = -1;
    CHECK(kind_of([&] { train_context(corpus, bad); }) == ErrorKind::Data);

    std::vector<Document> one_class;
    for (const auto& doc : corpus) {
        if (*doc.label == Label::Bullshit) one_class.push_back(doc);
    }
    CHECK(kind_of([&] { train_context(LabeledCorpus(one_class), ContextConfig{}); }) == ErrorKind::Data);
}

TEST_CASE("remote provider trains a head on server embeddings") {
    testing::FakeEmbedServer server({.dim = 4, .reply_dim = 4, .max_batch = 8});
    SynthSpec spec;
    spec.n_per_class = 40;
    spec.min_tokens = 20;
    spec.max_tokens = 40;
    spec.marker_rate = 0.3;
    const auto corpus = synth_corpus(spec);
    auto [train, eval] = split_train_eval(corpus, 0.25, 2);

    ContextConfig config;
    config.provider = EmbeddingProvider::Remote;
    config.remote.endpoint = server.url();
    config.remote.max_batch = 8;
    config.epochs = 200;
    config.learning_rate = 0.05;
    ContextTrainReport report;
    const auto model = train_context(train, config, &report);
    CHECK(model.provider() == EmbeddingProvider::Remote);
    CHECK(model.remote_manifest().dim == 4);
    CHECK(report.final_loss < report.initial_loss);
    CHECK(accuracy(model, eval) > 0.9);

    const auto j = model.to_json();
    CHECK(j.at("provider") == "remote");
    CHECK(j.at("endpoint") == server.url());
    const auto restored = ContextClassifier::from_json(j);
    const auto& text = eval.begin()->text;
    CHECK(restored.predict(text).confidence == model.predict(text).confidence);

    std::vector<std::string> texts;
    for (const auto& doc : eval) texts.push_back(doc.text);
    const int before = server.embed_calls();
    const auto many = model.predict_many(texts);
    CHECK(server.embed_calls() - before == static_cast<int>((texts.size() + 7) / 8));
    CHECK(many.front().confidence == model.predict(texts.front()).confidence);

    SUBCASE("server changing dimension is rejected") {
        testing::FakeEmbedServer wide({.dim = 6, .reply_dim = 6});
        const auto moved = ContextClassifier::from_json(j, wide.url());
        CHECK(kind_of([&] { moved.predict(text); }) == ErrorKind::Remote);
    }
}

TEST_CASE("remote provider with a dead endpoint fails without a model") {
    SynthSpec spec;
    spec.n_per_class = 3;
    spec.min_tokens = 10;
    spec.max_tokens = 12;
    ContextConfig config;
    config.provider = EmbeddingProvider::Remote;
    config.remote.endpoint = "http://127.0.0.1:9";
    config.remote.max_retries = 1;
    config.remote.initial_backoff = std::chrono::milliseconds(1);
    config.remote.timeout = std::chrono::milliseconds(500);
    CHECK(kind_of([&] { train_context(synth_corpus(spec), config); }) == ErrorKind::Remote);

    config.remote.endpoint.clear();
    CHECK(kind_of([&] { train_context(synth_corpus(spec), config); }) == ErrorKind::Remote);
}
