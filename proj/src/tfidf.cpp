#include "msd/tfidf.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "msd/error.hpp"

namespace msd {

using nlohmann::json;

double FeatureVector::weight(std::uint32_t index) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), index,
                               [](const auto& e, std::uint32_t i) { return e.first < i; });
    return (it != entries.end() && it->first == index) ? it->second : 0.0;
}

TfidfModel TfidfModel::fit(const LabeledCorpus& corpus, FilterConfig filters, TfidfOptions options) {
    if (corpus.empty()) throw data_error("tfidf: cannot fit on an empty corpus");
    if (options.min_df == 0) throw data_error("tfidf: min_df must be at least 1");
    filters.validate();

    std::map<std::string, std::size_t> df;
    for (const auto& doc : corpus) {
        auto tokens = preprocess(doc.text, filters).tokens;
        std::set<std::string> unique(std::make_move_iterator(tokens.begin()), std::make_move_iterator(tokens.end()));
        for (const auto& t : unique) ++df[t];
    }

    TfidfModel model;
    model.filters_ = std::move(filters);
    model.min_df_ = options.min_df;
    model.n_docs_ = corpus.size();
    const double n = static_cast<double>(corpus.size());
    for (const auto& [term, count] : df) {
        if (count < options.min_df) continue;
        model.terms_.push_back(term);
        model.doc_freq_.push_back(count);
        model.idf_.push_back(count == corpus.size() ? 0.0 : std::log(n / static_cast<double>(count)));
    }
    if (model.terms_.empty()) {
        throw data_error("tfidf: vocabulary is empty after stop-word/format filtering and min_df=" +
                         std::to_string(options.min_df));
    }
    model.rebuild_index();
    return model;
}

void TfidfModel::rebuild_index() {
    index_.clear();
    index_.reserve(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i], static_cast<std::uint32_t>(i));
}

std::int64_t TfidfModel::index_of(const std::string& term) const {
    auto it = index_.find(term);
    return it == index_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

FeatureVector TfidfModel::vectorize(const TokenStream& tokens) const {
    std::map<std::uint32_t, std::size_t> counts;
    for (const auto& t : tokens.tokens) {
        if (auto it = index_.find(t); it != index_.end()) ++counts[it->second];
    }
    FeatureVector out;
    out.source_id = tokens.source_id;
    for (const auto& [index, count] : counts) {
        const double w = static_cast<double>(count) * idf_[index];
        if (w != 0.0) out.entries.emplace_back(index, w);
    }
    return out;
}

FeatureVector TfidfModel::vectorize(const Document& doc) const {
    return vectorize(preprocess(doc.text, filters_, doc.id));
}

json TfidfModel::to_json() const {
    json terms = json::array();
    for (std::size_t i = 0; i < terms_.size(); ++i) terms.push_back(json::array({terms_[i], doc_freq_[i]}));
    return {
        {"weighting", "raw_tf*ln(N/df)"},
        {"min_df", min_df_},
        {"n_docs", n_docs_},
        {"terms", std::move(terms)},
        {"filters",
         {{"stopword_list", filters_.stopword_list_id},
          {"stopwords", filters_.stopwords},
          {"format_literals", filters_.format_literals},
          {"format_pattern", filters_.format_pattern()}}},
    };
}

TfidfModel TfidfModel::from_json(const json& j) {
    TfidfModel model;
    try {
        const auto& f = j.at("filters");
        model.filters_.stopword_list_id = f.at("stopword_list").get<std::string>();
        model.filters_.stopwords = f.at("stopwords").get<std::set<std::string>>();
        model.filters_.format_literals = f.at("format_literals").get<std::set<std::string>>();
        model.filters_.set_format_pattern(f.at("format_pattern").get<std::string>());
        model.min_df_ = j.at("min_df").get<std::size_t>();
        model.n_docs_ = j.at("n_docs").get<std::size_t>();
        const double n = static_cast<double>(model.n_docs_);
        for (const auto& entry : j.at("terms")) {
            const auto df = entry.at(1).get<std::size_t>();
            if (df == 0 || df > model.n_docs_) throw data_error("tfidf: document frequency out of range");
            model.terms_.push_back(entry.at(0).get<std::string>());
            model.doc_freq_.push_back(df);
            model.idf_.push_back(df == model.n_docs_ ? 0.0 : std::log(n / static_cast<double>(df)));
        }
    } catch (const json::exception& e) {
        throw data_error(std::string("tfidf: malformed model: ") + e.what());
    }
    model.rebuild_index();
    return model;
}

}  // namespace msd
