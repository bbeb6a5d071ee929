#pragma once

// UTF-8 helpers for French legal text: decoding, case folding, diacritic
// folding, whitespace tokens and lexical tokens.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lexcite::text {

inline constexpr char32_t kInvalid = 0xFFFD;

struct Decoded {
    char32_t cp;
    std::size_t len;  // bytes consumed, always >= 1
};

// Decodes one code point at `pos`. Invalid sequences consume one byte and
// yield U+FFFD, so decoding never stalls on arbitrary bytes.
inline Decoded decode_at(std::string_view s, std::size_t pos) noexcept {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) return {b0, 1};
    std::size_t len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        return {kInvalid, 1};
    }
    if (pos + len > s.size()) return {kInvalid, 1};
    for (std::size_t i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) return {kInvalid, 1};
        cp = (cp << 6) | (b & 0x3F);
    }
    return {cp, len};
}

inline void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
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

inline bool is_space(char32_t cp) noexcept {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' ||
           cp == '\v' || cp == 0x00A0 || cp == 0x202F || cp == 0x2009;
}

// Latin letters as they occur in French text (ASCII + Latin-1 + Latin Ext-A).
inline bool is_letter(char32_t cp) noexcept {
    if ((cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z')) return true;
    if (cp >= 0xC0 && cp <= 0x24F) return cp != 0xD7 && cp != 0xF7;
    return false;
}

inline bool is_digit(char32_t cp) noexcept { return cp >= '0' && cp <= '9'; }

inline bool is_upper(char32_t cp) noexcept {
    if (cp >= 'A' && cp <= 'Z') return true;
    if (cp >= 0xC0 && cp <= 0xDE) return cp != 0xD7;
    if (cp >= 0x100 && cp <= 0x17F) return (cp % 2) == 0;  // Latin Ext-A pairs
    return false;
}

inline char32_t to_lower(char32_t cp) noexcept {
    if (cp >= 'A' && cp <= 'Z') return cp + 32;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
    if (cp >= 0x100 && cp <= 0x17F && (cp % 2) == 0) return cp + 1;
    return cp;
}

// Strips diacritics from a lowercase code point. Ligatures expand.
inline std::u32string_view fold_diacritic(char32_t cp) noexcept {
    switch (cp) {
        case 0xE0: case 0xE1: case 0xE2: case 0xE3: case 0xE4: case 0xE5: return U"a";
        case 0xE7: return U"c";
        case 0xE8: case 0xE9: case 0xEA: case 0xEB: return U"e";
        case 0xEC: case 0xED: case 0xEE: case 0xEF: return U"i";
        case 0xF1: return U"n";
        case 0xF2: case 0xF3: case 0xF4: case 0xF5: case 0xF6: return U"o";
        case 0xF9: case 0xFA: case 0xFB: case 0xFC: return U"u";
        case 0xFD: case 0xFF: return U"y";
        case 0xE6: return U"ae";
        case 0x153: return U"oe";
        default: return {};
    }
}

// Lowercase; with `strip_accents` also removes diacritics ("RÉPONSE" -> "reponse").
inline std::string fold(std::string_view s, bool strip_accents = true) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        const auto [cp, len] = decode_at(s, i);
        if (cp == kInvalid) {
            out.append(s.substr(i, len));
        } else {
            const char32_t lower = to_lower(cp);
            const auto folded = strip_accents ? fold_diacritic(lower) : std::u32string_view{};
            if (folded.empty()) {
                append_utf8(out, lower);
            } else {
                for (char32_t f : folded) append_utf8(out, f);
            }
        }
        i += len;
    }
    return out;
}

// Whitespace-delimited tokens; this is the token unit for chunk limits.
inline std::size_t count_tokens(std::string_view s) {
    std::size_t n = 0;
    bool in_token = false;
    for (std::size_t i = 0; i < s.size();) {
        const auto [cp, len] = decode_at(s, i);
        const bool space = is_space(cp);
        if (!space && !in_token) ++n;
        in_token = !space;
        i += len;
    }
    return n;
}

inline std::size_t count_words(std::string_view s) { return count_tokens(s); }

// Lexical tokens: lowercase, punctuation stripped, digits and inner dashes
// kept so that "1352-9" survives as one token.
inline std::vector<std::string> lexical_tokens(std::string_view s) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        while (!current.empty() && current.back() == '-') current.pop_back();
        std::size_t lead = 0;
        while (lead < current.size() && current[lead] == '-') ++lead;
        if (lead < current.size()) tokens.emplace_back(current.substr(lead));
        current.clear();
    };
    for (std::size_t i = 0; i < s.size();) {
        const auto [cp, len] = decode_at(s, i);
        if (is_letter(cp) || is_digit(cp)) {
            append_utf8(current, to_lower(cp));
        } else if (cp == '-' && !current.empty()) {
            current.push_back('-');
        } else {
            flush();
        }
        i += len;
    }
    flush();
    return tokens;
}

inline std::string_view trim(std::string_view s) noexcept {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\n' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\n' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

// FNV-1a 64; stable across platforms, used for pair ids and template hashes.
inline std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
        v >>= 4;
    }
    return out;
}

}  // namespace lexcite::text
