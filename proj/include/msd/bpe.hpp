#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace msd {

/// Byte-pair-style subword vocabulary learned from a training corpus.
///
/// Text is split on whitespace; each word becomes its UTF-8 characters with
/// an end-of-word marker on the last one, and the most frequent adjacent
/// symbol pairs are merged until the vocabulary is full or no pair occurs
/// twice. A character never seen in training is spelled as byte symbols
/// followed, at the end of a word, by the bare end-of-word symbol.
///
/// Ids 0-3 are the special tokens, 4-259 the bytes 0x00-0xFF, 260 the bare
/// end-of-word symbol; learned symbols follow.
class SubwordTokenizer {
public:
    static constexpr std::int32_t kPad = 0;
    static constexpr std::int32_t kUnk = 1;
    static constexpr std::int32_t kBos = 2;
    static constexpr std::int32_t kEos = 3;
    static constexpr std::int32_t kFirstByte = 4;
    static constexpr std::int32_t kWordEnd = kFirstByte + 256;
    static constexpr std::size_t kReservedSymbols = kWordEnd + 1;
    /// Words never contain whitespace, so a trailing space cannot be confused
    /// with text.
    static constexpr std::string_view kEndOfWord = " ";

    /// `vocab_size` counts the reserved symbols; learned symbols beyond the
    /// training alphabet are added only while there is room.
    static SubwordTokenizer train(std::span<const std::string> texts, std::size_t vocab_size = 8000);

    std::vector<std::int32_t> encode(std::string_view text) const;
    /// Joins words with single spaces; PAD, BOS and EOS are skipped and UNK
    /// renders as U+FFFD.
    std::string decode(std::span<const std::int32_t> ids) const;

    std::size_t vocab_size() const { return symbols_.size(); }
    const std::string& symbol(std::int32_t id) const { return symbols_.at(static_cast<std::size_t>(id)); }
    std::size_t merge_count() const { return merges_.size(); }

    nlohmann::json to_json() const;
    static SubwordTokenizer from_json(const nlohmann::json& j);

private:
    void rebuild_lookup();
    std::vector<std::int32_t> encode_word(std::string_view word) const;

    std::vector<std::string> symbols_;
    std::vector<std::pair<std::int32_t, std::int32_t>> merges_;  // in rank order

    std::unordered_map<std::string, std::int32_t> symbol_ids_;
    std::unordered_map<std::uint64_t, std::int32_t> merge_rank_;
};

}  // namespace msd
