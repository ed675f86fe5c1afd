#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "msd/corpus.hpp"
#include "msd/error.hpp"

using namespace msd;

namespace {

LabeledCorpus parse(const std::string& jsonl) {
    std::istringstream in(jsonl);
    return read_jsonl(in, "fixture.jsonl");
}

std::string error_of(const std::string& jsonl) {
    try {
        parse(jsonl);
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

LabeledCorpus balanced(std::size_t per_class) {
    std::vector<Document> docs;
    for (std::size_t i = 0; i < per_class; ++i) {
        docs.push_back({"b" + std::to_string(i), "bs text " + std::to_string(i), Label::Bullshit, {}, {}, {}});
        docs.push_back({"r" + std::to_string(i), "ref text " + std::to_string(i), Label::Reference, {}, {}, {}});
    }
    return LabeledCorpus(std::move(docs));
}

std::set<std::string> ids(const LabeledCorpus& c) {
    std::set<std::string> out;
    for (const auto& d : c) out.insert(d.id);
    return out;
}

}  // namespace

TEST_CASE("jsonl with two valid lines") {
    const auto c = parse(R"({"id":"a","text":"hello there","label":"bullshit"}
{"id":"b","text":"general kenobi","label":"REFERENCE","group":"g1","category":"goons","source":"x"}
)");
    REQUIRE(c.size() == 2);
    CHECK(c[0].id == "a");
    CHECK(c[1].label == Label::Reference);
    CHECK(c[1].group == "g1");
    CHECK(c[1].category == "goons");
    CHECK(c[1].metadata.at("source") == "x");
    CHECK(c.class_counts() == ClassCounts{1, 1, 0});
    CHECK(c[0].length_chars() == 11);
}

TEST_CASE("duplicate id names the line") {
    std::string jsonl;
    for (int i = 1; i <= 6; ++i) jsonl += R"({"id":"d)" + std::to_string(i) + R"(","text":"t"})" + "\n";
    jsonl += R"({"id":"d3","text":"again"})" "\n";
    const auto msg = error_of(jsonl);
    CHECK(msg.find(":7:") != std::string::npos);
    CHECK(msg.find("duplicate id 'd3'") != std::string::npos);
}

TEST_CASE("malformed records report their line") {
    CHECK(error_of("{\"id\":\"a\",\"text\":\"x\"}\n{not json\n").find(":2:") != std::string::npos);
    CHECK(error_of(R"({"id":"a"})").find("missing field 'text'") != std::string::npos);
    CHECK(error_of(R"({"id":"a","text":"x","label":"neutral"})").find("unsupported label") != std::string::npos);
    CHECK(error_of(R"({"id":"a","text":"   "})").find("empty") != std::string::npos);
    CHECK(error_of(R"({"id":"","text":"x"})") != "");
    CHECK(error_of("") != "");
}

TEST_CASE("blank lines are skipped") {
    CHECK(parse("\n{\"id\":\"a\",\"text\":\"x\"}\n\n").size() == 1);
}

TEST_CASE("text dir fixture") {
    const auto c = load_corpus(std::filesystem::path(MSD_TEST_DATA) / "textdir");
    CHECK(c.class_counts() == ClassCounts{3, 3, 0});
    std::vector<std::string> order;
    for (const auto& d : c) order.push_back(d.id);
    CHECK(order == std::vector<std::string>{"b1", "b2", "b3", "r1", "r2", "r3"});
    CHECK(c[1].text.find('\r') == std::string::npos);
    CHECK(c[2].text.rfind("Transformative", 0) == 0);
}

TEST_CASE("text dir rejects unknown label directories") {
    const auto root = std::filesystem::temp_directory_path() / "msd_test_textdir_bad";
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root / "neutral");
    std::ofstream(root / "neutral" / "a.txt") << "text";
    CHECK_THROWS_AS(load_corpus(root, CorpusFormat::TextDir), Error);
    std::filesystem::remove_all(root);
}

TEST_CASE("missing path is an io error") {
    try {
        load_corpus("/nonexistent/corpus.jsonl");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Io);
        CHECK(std::string(e.what()).find("/nonexistent/corpus.jsonl") != std::string::npos);
    }
}

TEST_CASE("jsonl round trip is exact") {
    const auto c = parse(
        R"({"id":"x1","text":"multi\nline \"quoted\" é text\t","label":"bullshit","group":"g","extra":"m"}
{"id":"x2","text":"plain","category":"flunkies"}
)");
    std::ostringstream out;
    write_jsonl(c, out);
    const auto back = parse(out.str());
    REQUIRE(back.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(back[i] == c[i]);
    std::ostringstream again;
    write_jsonl(back, again);
    CHECK(again.str() == out.str());
}

TEST_CASE("corpus invariants") {
    CHECK_THROWS_AS(LabeledCorpus({{"a", "x", Label::Bullshit, {}, {}, {}}, {"a", "y", Label::Reference, {}, {}, {}}}),
                    Error);
    CHECK_THROWS_AS(LabeledCorpus({{"a", " \n", Label::Bullshit, {}, {}, {}}}), Error);
    CHECK_THROWS_AS(balanced(1).require_trainable(), Error);
    CHECK_NOTHROW(balanced(2).require_trainable());
    CHECK_THROWS_AS(LabeledCorpus({{"a", "x", std::nullopt, {}, {}, {}}}).require_trainable(1), Error);
}

TEST_CASE("split 10+10 at 0.2") {
    const auto c = balanced(10);
    const auto [train, eval] = split_train_eval(c, 0.2, 1);
    CHECK(train.class_counts() == ClassCounts{8, 8, 0});
    CHECK(eval.class_counts() == ClassCounts{2, 2, 0});
}

TEST_CASE("split is a deterministic partition") {
    const auto c = balanced(25);
    const auto [t1, e1] = split_train_eval(c, 0.3, 42);
    const auto [t2, e2] = split_train_eval(c, 0.3, 42);
    CHECK(ids(t1) == ids(t2));
    CHECK(ids(e1) == ids(e2));
    auto all = ids(t1);
    for (const auto& id : ids(e1)) CHECK(all.insert(id).second);
    CHECK(all == ids(c));
    const auto [t3, e3] = split_train_eval(c, 0.3, 43);
    CHECK(ids(e3) != ids(e1));
}

TEST_CASE("split preserves input order inside each side") {
    const auto c = balanced(10);
    const auto [train, eval] = split_train_eval(c, 0.5, 9);
    auto position = [&](const std::string& id) {
        for (std::size_t i = 0; i < c.size(); ++i)
            if (c[i].id == id) return i;
        return c.size();
    };
    for (std::size_t i = 1; i < train.size(); ++i) CHECK(position(train[i - 1].id) < position(train[i].id));
}

TEST_CASE("split errors") {
    std::vector<Document> docs{{"b0", "x", Label::Bullshit, {}, {}, {}}};
    for (int i = 0; i < 10; ++i) docs.push_back({"r" + std::to_string(i), "y", Label::Reference, {}, {}, {}});
    CHECK_THROWS_AS(split_train_eval(LabeledCorpus(docs), 0.2, 1), Error);
    CHECK_THROWS_AS(split_train_eval(balanced(5), 0.0, 1), Error);
    CHECK_THROWS_AS(split_train_eval(balanced(5), 1.0, 1), Error);
}

TEST_CASE("labels parse case-insensitively") {
    CHECK(parse_label("Bullshit") == Label::Bullshit);
    CHECK(parse_label("reference") == Label::Reference);
    CHECK_FALSE(parse_label("other").has_value());
    CHECK(to_string(Label::Bullshit) == "bullshit");
}
