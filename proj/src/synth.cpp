#include "msd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "msd/error.hpp"
#include "msd/textprep.hpp"

namespace msd {

namespace {

constexpr std::string_view kConsonants = "bdfglmnprstv";
constexpr std::string_view kVowels = "aeiou";

std::string syllables(std::size_t n) {
    const std::size_t base = kConsonants.size() * kVowels.size();
    std::string out;
    do {
        const std::size_t s = n % base;
        out.insert(0, {kConsonants[s / kVowels.size()], kVowels[s % kVowels.size()]});
        n /= base;
    } while (n > 0);
    return out;
}

// Background words only use kConsonants, so a leading letter outside that
// set keeps each special word family disjoint from the background and from
// each other.
std::vector<std::string> word_family(char prefix, std::size_t count) {
    std::vector<std::string> words;
    words.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        words.push_back(std::string(1, prefix) + kVowels[k % kVowels.size()] + syllables(k / kVowels.size() + 60));
    }
    return words;
}

}  // namespace

void SynthSpec::validate() const {
    if (n_per_class == 0) throw data_error("synth: n_per_class must be positive");
    if (marker_terms_per_class == 0) throw data_error("synth: at least one marker term per class is required");
    if (shared_vocab_size == 0) throw data_error("synth: shared vocabulary is empty");
    if (min_tokens == 0 || max_tokens < min_tokens) throw data_error("synth: invalid document length range");
    if (!(marker_rate >= 0.0 && context_rate >= 0.0 && marker_rate + 2.0 * context_rate < 1.0)) {
        throw data_error("synth: marker_rate + 2 * context_rate must lie in [0, 1)");
    }
    if (context_rate > 0.0 && context_terms == 0) throw data_error("synth: context_rate set without context terms");
    if (!(zipf_exponent >= 0.0)) throw data_error("synth: zipf exponent must be non-negative");
}

SynthGenerator::SynthGenerator(SynthSpec spec) : spec_(spec) {
    spec_.validate();
    const FilterConfig filters;
    for (std::size_t k = 0; shared_.size() < spec_.shared_vocab_size; ++k) {
        auto word = syllables(k + 60);
        if (filters.stopwords.contains(word) || filters.format_literals.contains(word)) continue;
        shared_.push_back(std::move(word));
    }
    double total = 0.0;
    shared_cdf_.reserve(shared_.size());
    for (std::size_t k = 0; k < shared_.size(); ++k) {
        total += 1.0 / std::pow(static_cast<double>(k + 1), spec_.zipf_exponent);
        shared_cdf_.push_back(total);
    }
    for (auto& c : shared_cdf_) c /= total;
    bullshit_markers_ = word_family('z', spec_.marker_terms_per_class);
    reference_markers_ = word_family('x', spec_.marker_terms_per_class);
    anchors_ = word_family('k', spec_.context_terms);
    bullshit_neighbors_ = word_family('j', spec_.context_terms);
    reference_neighbors_ = word_family('w', spec_.context_terms);
}

const std::vector<std::string>& SynthGenerator::markers(Label label) const {
    return label == Label::Bullshit ? bullshit_markers_ : reference_markers_;
}

const std::vector<std::string>& SynthGenerator::context_neighbors(Label label) const {
    return label == Label::Bullshit ? bullshit_neighbors_ : reference_neighbors_;
}

const std::string& SynthGenerator::background(Rng& rng) const {
    const double u = rng.uniform();
    auto it = std::upper_bound(shared_cdf_.begin(), shared_cdf_.end(), u);
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - shared_cdf_.begin()), shared_.size() - 1);
    return shared_[idx];
}

std::string SynthGenerator::text(const Register& reg, Rng& rng) const {
    const auto length = static_cast<std::size_t>(rng.between(spec_.min_tokens, spec_.max_tokens));
    const bool context_on = reg.context && spec_.context_terms > 0 && spec_.context_rate > 0.0;
    const double marker_p = reg.markers ? spec_.marker_rate : 0.0;
    const double pair_p = context_on ? spec_.context_rate : 0.0;

    auto pick = [&rng](const std::vector<std::string>& words) -> const std::string& {
        return words[rng.below(words.size())];
    };

    std::vector<const std::string*> tokens;
    tokens.reserve(length + 1);
    while (tokens.size() < length) {
        const double r = rng.uniform();
        if (r < marker_p) {
            tokens.push_back(&pick(markers(*reg.markers)));
        } else if (r < marker_p + pair_p) {
            tokens.push_back(&pick(anchors_));
            tokens.push_back(&pick(context_neighbors(*reg.context)));
        } else if (r < marker_p + 2.0 * pair_p) {
            const Label other = *reg.context == Label::Bullshit ? Label::Reference : Label::Bullshit;
            tokens.push_back(&pick(context_neighbors(other)));
        } else {
            tokens.push_back(&background(rng));
        }
    }

    std::string out;
    std::size_t sentence_left = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const bool starts_sentence = sentence_left == 0;
        if (starts_sentence) sentence_left = static_cast<std::size_t>(rng.between(8, 18));
        if (i > 0) out.push_back(' ');
        std::string word = *tokens[i];
        if (starts_sentence) word[0] = static_cast<char>(word[0] - 'a' + 'A');
        out += word;
        if (--sentence_left == 0 || i + 1 == tokens.size()) out.push_back('.');
    }
    return out;
}

LabeledCorpus synth_corpus(const SynthSpec& spec) {
    const SynthGenerator gen(spec);
    Rng rng(spec.seed);
    const bool with_context = spec.context_terms > 0 && spec.context_rate > 0.0;
    std::vector<Document> docs;
    docs.reserve(2 * spec.n_per_class);
    char id[32];
    for (std::size_t i = 0; i < spec.n_per_class; ++i) {
        for (Label label : {Label::Bullshit, Label::Reference}) {
            Document doc;
            std::snprintf(id, sizeof id, "%s-%04zu", label == Label::Bullshit ? "bs" : "ref", i);
            doc.id = id;
            doc.text = gen.text(Register::of(label, with_context), rng);
            doc.label = label;
            docs.push_back(std::move(doc));
        }
    }
    return LabeledCorpus(std::move(docs));
}

const std::vector<std::string>& factorial_categories() {
    static const std::vector<std::string> categories = {"flunkies", "goons", "duct-tapers", "box-tickers",
                                                        "taskmasters"};
    return categories;
}

LabeledCorpus synth_two_group(const SynthSpec& spec) {
    const SynthGenerator gen(spec);
    Rng rng(spec.seed);
    const bool with_context = spec.context_terms > 0 && spec.context_rate > 0.0;
    std::vector<Document> docs;
    char id[32];
    for (Label label : {Label::Bullshit, Label::Reference}) {
        for (std::size_t i = 0; i < spec.n_per_class; ++i) {
            Document doc;
            std::snprintf(id, sizeof id, "%s-%04zu", label == Label::Bullshit ? "a" : "b", i);
            doc.id = id;
            doc.text = gen.text(Register::of(label, with_context), rng);
            doc.group = std::string(label == Label::Bullshit ? kBullshitGroup : kReferenceGroup);
            docs.push_back(std::move(doc));
        }
    }
    return LabeledCorpus(std::move(docs));
}

LabeledCorpus synth_factorial(const SynthSpec& spec, bool register_linked) {
    const SynthGenerator gen(spec);
    Rng rng(spec.seed);
    const bool with_context = spec.context_terms > 0 && spec.context_rate > 0.0;
    std::vector<Document> docs;
    char id[64];
    for (const auto& category : factorial_categories()) {
        for (std::string_view flag : {kFlagBullshit, kFlagContrast}) {
            for (std::size_t i = 0; i < spec.n_per_class; ++i) {
                Label reg = flag == kFlagBullshit ? Label::Bullshit : Label::Reference;
                if (!register_linked) reg = rng.below(2) == 0 ? Label::Bullshit : Label::Reference;
                Document doc;
                std::snprintf(id, sizeof id, "%s-%s-%02zu", category.c_str(), std::string(flag).c_str(), i);
                doc.id = id;
                doc.text = gen.text(Register::of(reg, with_context), rng);
                doc.category = category;
                doc.metadata[std::string(kFlagField)] = std::string(flag);
                docs.push_back(std::move(doc));
            }
        }
    }
    return LabeledCorpus(std::move(docs));
}

}  // namespace msd
