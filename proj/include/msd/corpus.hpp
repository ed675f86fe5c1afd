#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace msd {

/// BULLSHIT is the positive class (LLM-style fabrication); REFERENCE is the
/// precise-prose class the detector contrasts it with.
enum class Label { Bullshit, Reference };

std::string_view to_string(Label label);
/// Case-insensitive "bullshit"/"reference"; nullopt for anything else.
std::optional<Label> parse_label(std::string_view text);

struct Document {
    std::string id;
    std::string text;
    std::optional<Label> label;
    std::optional<std::string> group;
    std::optional<std::string> category;
    /// Additional string-valued fields carried through load/save unchanged.
    std::map<std::string, std::string> metadata;

    /// Length in Unicode code points.
    std::size_t length_chars() const;

    /// Value of a named metadata field: "group", "category", "label", "id",
    /// or any key of `metadata`.
    std::optional<std::string> field(std::string_view name) const;

    bool operator==(const Document&) const = default;
};

struct ClassCounts {
    std::size_t bullshit = 0;
    std::size_t reference = 0;
    std::size_t unlabeled = 0;

    std::size_t of(Label label) const { return label == Label::Bullshit ? bullshit : reference; }
    bool operator==(const ClassCounts&) const = default;
};

/// Ordered, validated document collection. Immutable once built.
class LabeledCorpus {
public:
    LabeledCorpus() = default;
    /// Validates unique ids and non-blank texts; throws a data error otherwise.
    explicit LabeledCorpus(std::vector<Document> documents);

    const std::vector<Document>& documents() const { return documents_; }
    const ClassCounts& class_counts() const { return counts_; }
    std::size_t size() const { return documents_.size(); }
    bool empty() const { return documents_.empty(); }
    const Document& operator[](std::size_t i) const { return documents_[i]; }

    auto begin() const { return documents_.begin(); }
    auto end() const { return documents_.end(); }

    /// Throws a data error unless every document is labeled and each class
    /// has at least `min_per_class` documents.
    void require_trainable(std::size_t min_per_class = 2) const;

    std::vector<Label> labels() const;

private:
    std::vector<Document> documents_;
    ClassCounts counts_;
};

enum class CorpusFormat { Jsonl, TextDir };

/// JSONL: one object per line with `id`, `text`, optional `label`, `group`,
/// `category`; other string fields go to Document::metadata.
/// TEXT_DIR: `<label>/<id>.txt`, documents ordered by id.
LabeledCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format);
/// Directory -> TEXT_DIR, anything else -> JSONL.
LabeledCorpus load_corpus(const std::filesystem::path& path);

LabeledCorpus read_jsonl(std::istream& in, std::string_view source_name = "<stream>");
void write_jsonl(const LabeledCorpus& corpus, std::ostream& out);
void save_jsonl(const LabeledCorpus& corpus, const std::filesystem::path& path);

/// Stratified by label; each class contributes round(eval_fraction * n)
/// documents to the eval side, clamped so both sides keep at least one.
/// Partition order follows the input order.
std::pair<LabeledCorpus, LabeledCorpus> split_train_eval(const LabeledCorpus& corpus, double eval_fraction,
                                                         std::uint64_t seed);

}  // namespace msd
