#include "msd/textprep.hpp"

#include <algorithm>
#include <fstream>

#include "msd/error.hpp"

namespace msd {

namespace utf8 {

namespace {

// Undecodable bytes are carried as lone low surrogates (U+DC80..U+DCFF) and
// re-emitted verbatim by append().
constexpr char32_t kEscapeBase = 0xDC00;

char32_t escape(unsigned char byte) { return kEscapeBase + byte; }

}  // namespace

char32_t next(std::string_view s, std::size_t& pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) {
        ++pos;
        return b0;
    }
    int extra = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        extra = 1;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        extra = 2;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        extra = 3;
        cp = b0 & 0x07;
    } else {
        ++pos;
        return escape(b0);
    }
    if (pos + extra >= s.size()) {
        ++pos;
        return escape(b0);
    }
    for (int i = 1; i <= extra; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) {
            ++pos;
            return escape(b0);
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
        ++pos;
        return escape(b0);
    }
    pos += extra + 1;
    return cp;
}

void append(std::string& out, char32_t cp) {
    if (cp >= kEscapeBase + 0x80 && cp <= kEscapeBase + 0xFF) {
        out.push_back(static_cast<char>(cp - kEscapeBase));
    } else if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

bool is_space(char32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_punct(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
               (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
    }
    switch (cp) {
        case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
            return true;
        default:
            break;
    }
    return (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) ||
           (cp >= 0x3001 && cp <= 0x3003) || (cp >= 0x3008 && cp <= 0x3011) ||
           (cp >= 0xFF01 && cp <= 0xFF0F);
}

char32_t to_lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp < 0xC0) return cp;
    if ((cp >= 0xC0 && cp <= 0xDE && cp != 0xD7)) return cp + 32;  // Latin-1
    if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 32;  // Greek
    if (cp >= 0x410 && cp <= 0x42F) return cp + 32;                 // Cyrillic
    if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
    return cp;
}

std::size_t length(std::string_view s) {
    std::size_t n = 0;
    for (std::size_t pos = 0; pos < s.size();) {
        next(s, pos);
        ++n;
    }
    return n;
}

}  // namespace utf8

namespace {

const std::vector<std::string> kDefaultStopwords = {
#include "stopwords_en.inc"
};

}  // namespace

const std::vector<std::string>& default_stopwords() { return kDefaultStopwords; }

FilterConfig::FilterConfig()
    : stopwords(kDefaultStopwords.begin(), kDefaultStopwords.end()), format_literals{"figure", "fig"} {
    set_format_pattern("[0-9]+[a-z]");
}

void FilterConfig::set_format_pattern(std::string pattern) {
    try {
        regex_ = std::make_shared<const std::regex>(pattern, std::regex::ECMAScript | std::regex::optimize);
    } catch (const std::regex_error& e) {
        throw data_error("invalid format-token pattern '" + pattern + "': " + e.what());
    }
    pattern_ = std::move(pattern);
}

bool FilterConfig::matches_format_pattern(std::string_view token) const {
    return regex_ && std::regex_match(token.begin(), token.end(), *regex_);
}

void FilterConfig::validate() const {
    for (const auto& word : stopwords) {
        if (tokenize(word).tokens != std::vector<std::string>{word}) {
            throw data_error("stop-word '" + word + "' is not a lowercase single token");
        }
    }
}

std::set<std::string> load_stopword_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open stop-word file " + path.string());
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto last = line.find_last_not_of(" \t\r");
        words.insert(line.substr(first, last - first + 1));
    }
    return words;
}

TokenStream tokenize(std::string_view text, std::string source_id) {
    TokenStream out;
    out.source_id = std::move(source_id);
    std::vector<char32_t> word;
    auto flush = [&] {
        std::size_t lo = 0, hi = word.size();
        while (lo < hi && utf8::is_punct(word[lo])) ++lo;
        while (hi > lo && utf8::is_punct(word[hi - 1])) --hi;
        if (lo < hi) {
            std::string token;
            for (std::size_t i = lo; i < hi; ++i) utf8::append(token, utf8::to_lower(word[i]));
            out.tokens.push_back(std::move(token));
        }
        word.clear();
    };
    for (std::size_t pos = 0; pos < text.size();) {
        const char32_t cp = utf8::next(text, pos);
        if (utf8::is_space(cp)) {
            flush();
        } else {
            word.push_back(cp);
        }
    }
    flush();
    return out;
}

TokenStream remove_stopwords(TokenStream stream, const FilterConfig& cfg) {
    std::erase_if(stream.tokens, [&](const std::string& t) { return cfg.stopwords.contains(t); });
    return stream;
}

TokenStream remove_format_tokens(TokenStream stream, const FilterConfig& cfg) {
    std::erase_if(stream.tokens, [&](const std::string& t) {
        return cfg.format_literals.contains(t) || cfg.matches_format_pattern(t);
    });
    return stream;
}

TokenStream preprocess(std::string_view text, const FilterConfig& cfg, std::string source_id) {
    return remove_format_tokens(remove_stopwords(tokenize(text, std::move(source_id)), cfg), cfg);
}

}  // namespace msd
