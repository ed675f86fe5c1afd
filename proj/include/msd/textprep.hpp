#pragma once

#include <filesystem>
#include <memory>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace msd {

/// Identifier of the compiled-in stop-word list. Bump when the list changes.
inline constexpr std::string_view kStopwordListId = "msd-en-v1";

struct TokenStream {
    std::vector<std::string> tokens;
    std::string source_id;
};

/// Stop-word and formatting-token filters applied before TF*IDF.
///
/// Formatting tokens are the words that only reflect a publication's layout
/// (figure references): a fixed literal set plus a pattern for panel labels
/// such as "1a" or "2b".
class FilterConfig {
public:
    /// Shipped stop-word list, `figure`/`fig` literals, `[0-9]+[a-z]` pattern.
    FilterConfig();

    std::set<std::string> stopwords;
    std::set<std::string> format_literals;

    const std::string& format_pattern() const { return pattern_; }
    /// Throws a data error if the pattern is not a valid ECMAScript regex.
    void set_format_pattern(std::string pattern);
    /// Full-token match against the format pattern.
    bool matches_format_pattern(std::string_view token) const;

    /// Stop-words must be lowercase; throws a data error otherwise.
    void validate() const;

    std::string stopword_list_id{kStopwordListId};

private:
    std::string pattern_;
    std::shared_ptr<const std::regex> regex_;
};

/// The compiled-in English stop-word list (see data/stopwords_en.txt).
const std::vector<std::string>& default_stopwords();

/// One token per line, surrounding blanks trimmed; blank lines and lines
/// starting with '#' are skipped.
std::set<std::string> load_stopword_file(const std::filesystem::path& path);

/// Lowercase, split on Unicode whitespace, strip leading/trailing
/// punctuation. Inner punctuation ("tf*idf-based", "don't") is kept.
TokenStream tokenize(std::string_view text, std::string source_id = {});

TokenStream remove_stopwords(TokenStream stream, const FilterConfig& cfg);
TokenStream remove_format_tokens(TokenStream stream, const FilterConfig& cfg);

/// tokenize, then both filters.
TokenStream preprocess(std::string_view text, const FilterConfig& cfg, std::string source_id = {});

namespace utf8 {

/// Decodes one code point starting at `pos` and advances `pos`. Invalid bytes
/// decode as themselves (one byte each) so no input is ever dropped.
char32_t next(std::string_view s, std::size_t& pos);
void append(std::string& out, char32_t cp);
bool is_space(char32_t cp);
bool is_punct(char32_t cp);
char32_t to_lower(char32_t cp);
std::size_t length(std::string_view s);

}  // namespace utf8

}  // namespace msd
