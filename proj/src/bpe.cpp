#include "msd/bpe.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <queue>
#include <set>
#include <tuple>

#include "msd/error.hpp"
#include "msd/textprep.hpp"

namespace msd {

using nlohmann::json;

namespace {

constexpr std::uint64_t pair_key(std::int32_t a, std::int32_t b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (std::size_t pos = 0; pos < text.size();) {
        const std::size_t start = pos;
        const char32_t cp = utf8::next(text, pos);
        if (utf8::is_space(cp)) {
            if (!current.empty()) words.push_back(std::move(current));
            current.clear();
        } else {
            current.append(text.substr(start, pos - start));
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

// Characters of a word, the last carrying the end-of-word marker.
std::vector<std::string> initial_symbols(std::string_view word) {
    std::vector<std::string> out;
    for (std::size_t pos = 0; pos < word.size();) {
        const std::size_t start = pos;
        utf8::next(word, pos);
        out.emplace_back(word.substr(start, pos - start));
    }
    if (!out.empty()) out.back() += SubwordTokenizer::kEndOfWord;
    return out;
}

std::vector<std::string> reserved_symbols() {
    std::vector<std::string> out = {"<pad>", "<unk>", "<bos>", "<eos>"};
    char name[8];
    for (int b = 0; b < 256; ++b) {
        std::snprintf(name, sizeof name, "<0x%02X>", b);
        out.emplace_back(name);
    }
    out.emplace_back(SubwordTokenizer::kEndOfWord);
    return out;
}

}  // namespace

SubwordTokenizer SubwordTokenizer::train(std::span<const std::string> texts, std::size_t vocab_size) {
    if (vocab_size < kReservedSymbols) {
        throw data_error("tokenizer: vocabulary size must be at least " + std::to_string(kReservedSymbols));
    }
    std::map<std::string, std::int64_t> word_freq;
    for (const auto& text : texts) {
        for (auto& w : split_words(text)) ++word_freq[std::move(w)];
    }
    if (word_freq.empty()) throw data_error("tokenizer: training texts contain no words");

    SubwordTokenizer tok;
    tok.symbols_ = reserved_symbols();
    std::set<std::string> alphabet;
    std::vector<std::vector<std::string>> spelled;
    for (const auto& [word, freq] : word_freq) {
        spelled.push_back(initial_symbols(word));
        alphabet.insert(spelled.back().begin(), spelled.back().end());
    }
    for (const auto& s : alphabet) tok.symbols_.push_back(s);
    tok.rebuild_lookup();

    struct Word {
        std::vector<std::int32_t> syms;
        std::int64_t freq;
    };
    std::vector<Word> words;
    words.reserve(word_freq.size());
    {
        std::size_t i = 0;
        for (const auto& [word, freq] : word_freq) {
            Word w{{}, freq};
            for (const auto& s : spelled[i]) w.syms.push_back(tok.symbol_ids_.at(s));
            words.push_back(std::move(w));
            ++i;
        }
    }

    std::unordered_map<std::uint64_t, std::int64_t> pair_count;
    std::unordered_map<std::uint64_t, std::set<std::size_t>> pair_words;
    auto add_pairs = [&](std::size_t wi, std::int64_t sign) {
        const auto& w = words[wi];
        for (std::size_t k = 0; k + 1 < w.syms.size(); ++k) {
            const auto key = pair_key(w.syms[k], w.syms[k + 1]);
            pair_count[key] += sign * w.freq;
            if (sign > 0) pair_words[key].insert(wi);
        }
    };
    for (std::size_t wi = 0; wi < words.size(); ++wi) add_pairs(wi, +1);

    // Max-heap on (count, smallest pair key first); stale entries are skipped.
    using Entry = std::tuple<std::int64_t, std::uint64_t>;
    auto cmp = [](const Entry& x, const Entry& y) {
        return std::get<0>(x) < std::get<0>(y) || (std::get<0>(x) == std::get<0>(y) && std::get<1>(x) > std::get<1>(y));
    };
    std::priority_queue<Entry, std::vector<Entry>, decltype(cmp)> heap(cmp);
    for (const auto& [key, count] : pair_count) heap.emplace(count, key);

    while (tok.symbols_.size() < vocab_size && !heap.empty()) {
        const auto [count, key] = heap.top();
        heap.pop();
        auto it = pair_count.find(key);
        if (it == pair_count.end() || it->second != count) continue;
        if (count < 2) break;
        const auto a = static_cast<std::int32_t>(key >> 32);
        const auto b = static_cast<std::int32_t>(key & 0xffffffffu);
        const std::string merged = tok.symbols_[static_cast<std::size_t>(a)] + tok.symbols_[static_cast<std::size_t>(b)];
        std::int32_t merged_id;
        if (auto found = tok.symbol_ids_.find(merged); found != tok.symbol_ids_.end()) {
            merged_id = found->second;
        } else {
            merged_id = static_cast<std::int32_t>(tok.symbols_.size());
            tok.symbols_.push_back(merged);
            tok.symbol_ids_.emplace(merged, merged_id);
        }
        tok.merges_.emplace_back(a, b);

        std::set<std::uint64_t> touched;
        const auto affected = pair_words[key];
        for (std::size_t wi : affected) {
            auto& w = words[wi];
            for (std::size_t k = 0; k + 1 < w.syms.size(); ++k) {
                const auto old_key = pair_key(w.syms[k], w.syms[k + 1]);
                pair_count[old_key] -= w.freq;
                touched.insert(old_key);
            }
            std::vector<std::int32_t> next;
            next.reserve(w.syms.size());
            for (std::size_t k = 0; k < w.syms.size(); ++k) {
                if (k + 1 < w.syms.size() && w.syms[k] == a && w.syms[k + 1] == b) {
                    next.push_back(merged_id);
                    ++k;
                } else {
                    next.push_back(w.syms[k]);
                }
            }
            w.syms = std::move(next);
            for (std::size_t k = 0; k + 1 < w.syms.size(); ++k) {
                const auto new_key = pair_key(w.syms[k], w.syms[k + 1]);
                pair_count[new_key] += w.freq;
                pair_words[new_key].insert(wi);
                touched.insert(new_key);
            }
        }
        for (auto k : touched) {
            if (pair_count[k] > 0) heap.emplace(pair_count[k], k);
        }
        pair_count.erase(key);
        pair_words.erase(key);
    }
    tok.rebuild_lookup();
    return tok;
}

// Reserved symbols are reachable only by id, never by spelling.
void SubwordTokenizer::rebuild_lookup() {
    symbol_ids_.clear();
    for (std::size_t i = kReservedSymbols; i < symbols_.size(); ++i) symbol_ids_.emplace(symbols_[i], static_cast<std::int32_t>(i));
    merge_rank_.clear();
    for (std::size_t r = 0; r < merges_.size(); ++r) {
        merge_rank_.emplace(pair_key(merges_[r].first, merges_[r].second), static_cast<std::int32_t>(r));
    }
}

std::vector<std::int32_t> SubwordTokenizer::encode_word(std::string_view word) const {
    std::vector<std::int32_t> syms;
    for (const auto& s : initial_symbols(word)) {
        if (auto it = symbol_ids_.find(s); it != symbol_ids_.end()) {
            syms.push_back(it->second);
            continue;
        }
        const bool last = s.ends_with(kEndOfWord);
        const std::string_view ch = last ? std::string_view(s).substr(0, s.size() - kEndOfWord.size()) : s;
        for (unsigned char b : ch) syms.push_back(kFirstByte + b);
        if (last) syms.push_back(kWordEnd);
    }
    while (syms.size() > 1) {
        std::int32_t best_rank = -1;
        std::size_t best_pos = 0;
        for (std::size_t k = 0; k + 1 < syms.size(); ++k) {
            auto it = merge_rank_.find(pair_key(syms[k], syms[k + 1]));
            if (it != merge_rank_.end() && (best_rank < 0 || it->second < best_rank)) {
                best_rank = it->second;
                best_pos = k;
            }
        }
        if (best_rank < 0) break;
        const auto& [a, b] = merges_[static_cast<std::size_t>(best_rank)];
        const auto merged = symbol_ids_.at(symbols_[static_cast<std::size_t>(a)] + symbols_[static_cast<std::size_t>(b)]);
        syms[best_pos] = merged;
        syms.erase(syms.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
    }
    return syms;
}

std::vector<std::int32_t> SubwordTokenizer::encode(std::string_view text) const {
    std::vector<std::int32_t> ids;
    for (const auto& word : split_words(text)) {
        const auto piece = encode_word(word);
        ids.insert(ids.end(), piece.begin(), piece.end());
    }
    return ids;
}

std::string SubwordTokenizer::decode(std::span<const std::int32_t> ids) const {
    std::string out;
    bool word_open = false;
    for (auto id : ids) {
        if (id == kPad || id == kBos || id == kEos) continue;
        if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
            throw data_error("tokenizer: id " + std::to_string(id) + " out of range");
        }
        if (!word_open && !out.empty()) out.push_back(' ');
        word_open = true;
        if (id == kUnk) {
            out += "\xEF\xBF\xBD";
            continue;
        }
        if (id >= kFirstByte && id < kWordEnd) {
            out.push_back(static_cast<char>(id - kFirstByte));
            continue;
        }
        if (id == kWordEnd) {
            word_open = false;
            continue;
        }
        std::string_view s = symbols_[static_cast<std::size_t>(id)];
        if (s.ends_with(kEndOfWord)) {
            out.append(s.substr(0, s.size() - kEndOfWord.size()));
            word_open = false;
        } else {
            out.append(s);
        }
    }
    return out;
}

json SubwordTokenizer::to_json() const {
    json merges = json::array();
    for (const auto& [a, b] : merges_) merges.push_back(json::array({a, b}));
    return {{"symbols", symbols_}, {"merges", std::move(merges)}};
}

SubwordTokenizer SubwordTokenizer::from_json(const json& j) {
    SubwordTokenizer tok;
    try {
        tok.symbols_ = j.at("symbols").get<std::vector<std::string>>();
        for (const auto& m : j.at("merges")) {
            tok.merges_.emplace_back(m.at(0).get<std::int32_t>(), m.at(1).get<std::int32_t>());
        }
    } catch (const json::exception& e) {
        throw data_error(std::string("tokenizer: malformed vocabulary: ") + e.what());
    }
    const auto reserved = reserved_symbols();
    if (tok.symbols_.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), tok.symbols_.begin())) {
        throw data_error("tokenizer: vocabulary lacks the reserved symbols");
    }
    const auto n = static_cast<std::int32_t>(tok.symbols_.size());
    for (const auto& [a, b] : tok.merges_) {
        if (a < static_cast<std::int32_t>(kReservedSymbols) || b < static_cast<std::int32_t>(kReservedSymbols) || a >= n || b >= n) throw data_error("tokenizer: merge refers to unknown symbol");
    }
    tok.rebuild_lookup();
    for (const auto& [a, b] : tok.merges_) {
        if (!tok.symbol_ids_.contains(tok.symbols_[static_cast<std::size_t>(a)] + tok.symbols_[static_cast<std::size_t>(b)])) {
            throw data_error("tokenizer: merge result missing from vocabulary");
        }
    }
    return tok;
}

}  // namespace msd
