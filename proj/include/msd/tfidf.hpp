#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "msd/corpus.hpp"
#include "msd/textprep.hpp"

namespace msd {

/// Sparse document vector: (feature index, weight) pairs sorted by index,
/// no explicit zeros.
struct FeatureVector {
    std::vector<std::pair<std::uint32_t, double>> entries;
    std::string source_id;

    bool empty() const { return entries.empty(); }
    /// Weight of feature `index`, 0 if absent.
    double weight(std::uint32_t index) const;
};

struct TfidfOptions {
    std::size_t min_df = 2;
};

/// Vocabulary and document statistics of a training corpus.
///
/// idf(t) = ln(N / df(t)) with raw term counts as tf and no normalization.
class TfidfModel {
public:
    /// Terms surviving the filters in at least `min_df` documents, ordered
    /// lexicographically. Throws a data error if nothing survives.
    static TfidfModel fit(const LabeledCorpus& corpus, FilterConfig filters, TfidfOptions options = {});

    FeatureVector vectorize(const Document& doc) const;
    FeatureVector vectorize(const TokenStream& tokens) const;

    std::size_t vocab_size() const { return terms_.size(); }
    std::size_t n_docs() const { return n_docs_; }
    std::size_t min_df() const { return min_df_; }
    const std::vector<std::string>& terms() const { return terms_; }
    const FilterConfig& filters() const { return filters_; }

    /// Feature index of `term`, or -1 if out of vocabulary.
    std::int64_t index_of(const std::string& term) const;
    std::size_t doc_freq(std::size_t index) const { return doc_freq_[index]; }
    double idf(std::size_t index) const { return idf_[index]; }

    nlohmann::json to_json() const;
    static TfidfModel from_json(const nlohmann::json& j);

private:
    void rebuild_index();

    FilterConfig filters_;
    std::size_t min_df_ = 2;
    std::size_t n_docs_ = 0;
    std::vector<std::string> terms_;
    std::vector<std::size_t> doc_freq_;
    std::vector<double> idf_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

}  // namespace msd
