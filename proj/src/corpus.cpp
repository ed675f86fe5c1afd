#include "msd/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "msd/error.hpp"
#include "msd/rng.hpp"
#include "msd/textprep.hpp"

namespace msd {

using nlohmann::json;

std::string_view to_string(Label label) { return label == Label::Bullshit ? "bullshit" : "reference"; }

std::optional<Label> parse_label(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "bullshit") return Label::Bullshit;
    if (lower == "reference") return Label::Reference;
    return std::nullopt;
}

std::size_t Document::length_chars() const { return utf8::length(text); }

std::optional<std::string> Document::field(std::string_view name) const {
    if (name == "id") return id;
    if (name == "group") return group;
    if (name == "category") return category;
    if (name == "label") {
        if (!label) return std::nullopt;
        return std::string(to_string(*label));
    }
    if (auto it = metadata.find(std::string(name)); it != metadata.end()) return it->second;
    return std::nullopt;
}

namespace {

bool is_blank(std::string_view text) {
    for (std::size_t pos = 0; pos < text.size();) {
        if (!utf8::is_space(utf8::next(text, pos))) return false;
    }
    return true;
}

}  // namespace

LabeledCorpus::LabeledCorpus(std::vector<Document> documents) : documents_(std::move(documents)) {
    std::unordered_map<std::string_view, std::size_t> seen;
    for (std::size_t i = 0; i < documents_.size(); ++i) {
        const auto& doc = documents_[i];
        if (doc.id.empty()) throw data_error("document " + std::to_string(i) + " has an empty id");
        if (auto [it, inserted] = seen.emplace(doc.id, i); !inserted) {
            throw data_error("duplicate document id '" + doc.id + "' (documents " + std::to_string(it->second) +
                             " and " + std::to_string(i) + ")");
        }
        if (is_blank(doc.text)) throw data_error("document '" + doc.id + "' has empty text");
        if (!doc.label) {
            ++counts_.unlabeled;
        } else if (*doc.label == Label::Bullshit) {
            ++counts_.bullshit;
        } else {
            ++counts_.reference;
        }
    }
}

void LabeledCorpus::require_trainable(std::size_t min_per_class) const {
    if (counts_.unlabeled > 0) {
        throw data_error("training corpus has " + std::to_string(counts_.unlabeled) + " unlabeled documents");
    }
    for (Label label : {Label::Bullshit, Label::Reference}) {
        if (counts_.of(label) < min_per_class) {
            throw data_error("class '" + std::string(to_string(label)) + "' has " +
                             std::to_string(counts_.of(label)) + " documents; at least " +
                             std::to_string(min_per_class) + " required");
        }
    }
}

std::vector<Label> LabeledCorpus::labels() const {
    std::vector<Label> out;
    out.reserve(documents_.size());
    for (const auto& doc : documents_) {
        if (!doc.label) throw data_error("document '" + doc.id + "' has no label");
        out.push_back(*doc.label);
    }
    return out;
}

namespace {

Document document_from_json(const json& obj, const std::string& where) {
    if (!obj.is_object()) throw data_error(where + ": expected a JSON object");
    Document doc;
    auto string_field = [&](const char* key, bool required) -> std::optional<std::string> {
        auto it = obj.find(key);
        if (it == obj.end() || it->is_null()) {
            if (required) throw data_error(where + ": missing field '" + key + "'");
            return std::nullopt;
        }
        if (!it->is_string()) throw data_error(where + ": field '" + key + "' must be a string");
        return it->get<std::string>();
    };
    doc.id = *string_field("id", true);
    doc.text = *string_field("text", true);
    if (auto label = string_field("label", false)) {
        doc.label = parse_label(*label);
        if (!doc.label) {
            throw data_error(where + ": unsupported label '" + *label + "' (expected bullshit or reference)");
        }
    }
    doc.group = string_field("group", false);
    doc.category = string_field("category", false);
    for (const auto& [key, value] : obj.items()) {
        if (key == "id" || key == "text" || key == "label" || key == "group" || key == "category" ||
            key == "length_chars") {
            continue;
        }
        if (value.is_string()) doc.metadata.emplace(key, value.get<std::string>());
    }
    return doc;
}

json document_to_json(const Document& doc) {
    json obj = json::object();
    obj["id"] = doc.id;
    obj["text"] = doc.text;
    obj["label"] = doc.label ? json(std::string(to_string(*doc.label))) : json(nullptr);
    obj["group"] = doc.group ? json(*doc.group) : json(nullptr);
    obj["category"] = doc.category ? json(*doc.category) : json(nullptr);
    for (const auto& [key, value] : doc.metadata) obj[key] = value;
    return obj;
}

LabeledCorpus load_text_dir(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    std::vector<Document> docs;
    std::unordered_map<std::string, fs::path> origin;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const auto dirname = entry.path().filename().string();
        auto label = parse_label(dirname);
        if (!label) {
            throw data_error("unsupported label directory '" + entry.path().string() +
                             "' (expected bullshit/ or reference/)");
        }
        for (const auto& file : fs::directory_iterator(entry.path())) {
            if (!file.is_regular_file() || file.path().extension() != ".txt") continue;
            std::ifstream in(file.path(), std::ios::binary);
            if (!in) throw io_error("cannot read " + file.path().string());
            std::ostringstream buf;
            buf << in.rdbuf();
            std::string text = buf.str();
            if (text.starts_with("\xEF\xBB\xBF")) text.erase(0, 3);
            std::string normalized;
            normalized.reserve(text.size());
            for (std::size_t i = 0; i < text.size(); ++i) {
                if (text[i] == '\r' && i + 1 < text.size() && text[i + 1] == '\n') continue;
                normalized.push_back(text[i]);
            }
            Document doc;
            doc.id = file.path().stem().string();
            doc.text = std::move(normalized);
            doc.label = label;
            if (auto [it, inserted] = origin.emplace(doc.id, file.path()); !inserted) {
                throw data_error("duplicate document id '" + doc.id + "' in " + it->second.string() + " and " +
                                 file.path().string());
            }
            docs.push_back(std::move(doc));
        }
    }
    std::sort(docs.begin(), docs.end(), [](const Document& a, const Document& b) { return a.id < b.id; });
    if (docs.empty()) throw data_error("corpus " + root.string() + " is empty");
    return LabeledCorpus(std::move(docs));
}

}  // namespace

LabeledCorpus read_jsonl(std::istream& in, std::string_view source_name) {
    std::vector<Document> docs;
    std::unordered_map<std::string, std::size_t> id_line;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (is_blank(line)) continue;
        const std::string where = std::string(source_name) + ":" + std::to_string(line_no);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw data_error(where + ": malformed JSON record (" + e.what() + ")");
        }
        Document doc = document_from_json(obj, where);
        if (is_blank(doc.text)) throw data_error(where + ": document '" + doc.id + "' has empty text");
        if (doc.id.empty()) throw data_error(where + ": empty id");
        if (auto [it, inserted] = id_line.emplace(doc.id, line_no); !inserted) {
            throw data_error(where + ": duplicate id '" + doc.id + "' (first seen on line " +
                             std::to_string(it->second) + ")");
        }
        docs.push_back(std::move(doc));
    }
    if (docs.empty()) throw data_error(std::string(source_name) + ": corpus is empty");
    return LabeledCorpus(std::move(docs));
}

LabeledCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
    if (!std::filesystem::exists(path)) throw io_error("corpus path does not exist: " + path.string());
    if (format == CorpusFormat::TextDir) {
        if (!std::filesystem::is_directory(path)) throw io_error("not a directory: " + path.string());
        return load_text_dir(path);
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open corpus " + path.string());
    return read_jsonl(in, path.string());
}

LabeledCorpus load_corpus(const std::filesystem::path& path) {
    return load_corpus(path, std::filesystem::is_directory(path) ? CorpusFormat::TextDir : CorpusFormat::Jsonl);
}

void write_jsonl(const LabeledCorpus& corpus, std::ostream& out) {
    for (const auto& doc : corpus) out << document_to_json(doc).dump() << '\n';
}

void save_jsonl(const LabeledCorpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    write_jsonl(corpus, out);
    if (!out) throw io_error("error writing " + path.string());
}

std::pair<LabeledCorpus, LabeledCorpus> split_train_eval(const LabeledCorpus& corpus, double eval_fraction,
                                                         std::uint64_t seed) {
    if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
        throw data_error("eval fraction must lie in (0, 1)");
    }
    try {
        corpus.require_trainable(2);
    } catch (const Error& e) {
        throw data_error(std::string("cannot stratify split: ") + e.what());
    }
    std::vector<bool> to_eval(corpus.size(), false);
    Rng rng(seed);
    for (Label label : {Label::Bullshit, Label::Reference}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            if (corpus[i].label == label) members.push_back(i);
        }
        rng.shuffle(std::span<std::size_t>(members));
        auto n_eval = static_cast<std::size_t>(std::llround(eval_fraction * static_cast<double>(members.size())));
        n_eval = std::clamp<std::size_t>(n_eval, 1, members.size() - 1);
        for (std::size_t k = 0; k < n_eval; ++k) to_eval[members[k]] = true;
    }
    std::vector<Document> train, eval;
    for (std::size_t i = 0; i < corpus.size(); ++i) (to_eval[i] ? eval : train).push_back(corpus[i]);
    return {LabeledCorpus(std::move(train)), LabeledCorpus(std::move(eval))};
}

}  // namespace msd
