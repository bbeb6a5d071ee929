#pragma once

// Explicit statutory citations in French legal prose: "article 1240 du code
// civil", "art. 1103 et 1104 C. civ.", "articles 1352 à 1352-9", plus the
// old/new equivalence table for the 2016 contract-law renumbering.
// The accepted grammar is written up in data/citation_grammar.md.

#include <algorithm>
#include <istream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "lexcite/common.hpp"
#include "lexcite/corpus.hpp"
#include "lexcite/text.hpp"

namespace lexcite {

enum class Code { civil, commercial, consommation, procedure_civile, other };

inline std::string to_string(Code c) {
    switch (c) {
        case Code::civil: return "civil";
        case Code::commercial: return "commercial";
        case Code::consommation: return "consommation";
        case Code::procedure_civile: return "procedure_civile";
        case Code::other: return "other";
    }
    return "other";
}

struct CitationMention {
    Code code = Code::civil;
    std::string other_name;       // set when code == other ("code du travail", "loi", ...)
    bool code_explicit = false;   // false when no code was named and civil was assumed
    std::string prefix;           // "L", "R" or "D" for codified legislative/regulatory parts
    std::vector<std::string> articles;
    CharSpan span;
};

struct CitationRejection {
    CharSpan span;
    std::string reason;
};

struct CitationOptions {
    std::size_t max_range = 200;  // longer ranges are treated as typos
};

namespace detail {

inline constexpr auto kCiteFlags = std::regex::ECMAScript | std::regex::icase;

struct Cursor {
    std::string_view s;
    std::size_t pos = 0;

    bool done() const { return pos >= s.size(); }

    void skip_space() {
        while (pos < s.size()) {
            const auto [cp, len] = text::decode_at(s, pos);
            if (!text::is_space(cp)) break;
            pos += len;
        }
    }

    // Case-insensitive ASCII literal; unless it ends in '.', it must not be
    // followed by a letter or digit.
    bool word(std::string_view w) {
        if (pos + w.size() > s.size()) return false;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (!ascii_iequal(s[pos + i], w[i])) return false;
        }
        const std::size_t after = pos + w.size();
        if (w.back() != '.' && after < s.size()) {
            const char32_t cp = text::decode_at(s, after).cp;
            if (text::is_letter(cp) || text::is_digit(cp)) return false;
        }
        pos = after;
        return true;
    }

    bool literal(std::string_view w) {
        if (s.substr(pos, w.size()) != w) return false;
        pos += w.size();
        return true;
    }
};

struct RawNumber {
    std::string prefix;
    std::string digits;  // "1352" or "1352-9"
    bool extra_segments = false;
    CharSpan span;
};

inline std::optional<RawNumber> read_number(Cursor& c) {
    Cursor t = c;
    RawNumber n;
    const std::size_t start = t.pos;
    if (!t.done() && (t.s[t.pos] == 'L' || t.s[t.pos] == 'R' || t.s[t.pos] == 'D')) {
        Cursor p = t;
        p.pos++;
        p.literal(".");
        p.skip_space();
        if (!p.done() && text::is_digit(static_cast<unsigned char>(p.s[p.pos]))) {
            n.prefix = std::string(1, t.s[t.pos]);
            t = p;
        }
    }
    const std::size_t dstart = t.pos;
    while (!t.done() && t.s[t.pos] >= '0' && t.s[t.pos] <= '9') t.pos++;
    if (t.pos == dstart) return std::nullopt;
    std::string digits(t.s.substr(dstart, t.pos - dstart));
    // "1er" (premier) is article 1.
    if (t.s.substr(t.pos, 2) == "er") {
        const std::size_t after = t.pos + 2;
        if (after >= t.s.size() || !text::is_letter(text::decode_at(t.s, after).cp)) t.pos = after;
    }
    int segments = 0;
    while (t.pos + 1 < t.s.size() && t.s[t.pos] == '-' && t.s[t.pos + 1] >= '0' && t.s[t.pos + 1] <= '9') {
        const std::size_t seg = t.pos;
        t.pos++;
        while (!t.done() && t.s[t.pos] >= '0' && t.s[t.pos] <= '9') t.pos++;
        if (++segments == 1) {
            digits += std::string(t.s.substr(seg, t.pos - seg));
        } else {
            n.extra_segments = true;
        }
    }
    // A following letter means this is not a number ("12h", "3bis" is out of scope).
    if (!t.done() && text::is_letter(text::decode_at(t.s, t.pos).cp)) return std::nullopt;
    n.digits = std::move(digits);
    n.span = {start, t.pos};
    c = t;
    return n;
}

// Skips "alinéa 2", "al. 2", ", alinéa 1er," and similar paragraph pointers.
inline void skip_alinea(Cursor& c) {
    Cursor t = c;
    t.skip_space();
    t.literal(",");
    t.skip_space();
    if (!(t.word("alinéas") || t.word("alinéa") || t.word("alineas") || t.word("alinea") || t.word("al."))) return;
    t.skip_space();
    const std::size_t d = t.pos;
    while (!t.done() && t.s[t.pos] >= '0' && t.s[t.pos] <= '9') t.pos++;
    if (t.pos == d) return;
    if (t.s.substr(t.pos, 2) == "er") t.pos += 2;
    c = t;
}

struct CodeMatch {
    Code code;
    std::string other_name;
    bool inherit = false;
    std::size_t end = 0;
};

inline std::optional<CodeMatch> read_code(std::string_view s, std::size_t pos) {
    struct Rule {
        std::regex re;
        Code code;
        bool inherit;
        bool capture_name;
    };
    static const std::vector<Rule> rules = [] {
        const std::string S = R"((?:\s|\xC2\xA0|\xE2\x80\xAF))";
        const std::string lead = "^" + S + "*,?" + S + "*(?:(?:du|de" + S + "+la|de" + S + "+l(?:'|\xE2\x80\x99)|des?|dudit|au)" + S +
                                 "*)?(?:(?:nouveau|ancien)" + S + "+)?";
        const std::string e = "(?:\xC3\xA9|\xC3\x89|e)";
        std::vector<Rule> r;
        r.push_back({std::regex(lead + "code" + S + "+civil\\b", kCiteFlags), Code::civil, false, false});
        r.push_back({std::regex(lead + R"(C\.?)" + S + R"(*civ\b\.?)", kCiteFlags), Code::civil, false, false});
        r.push_back({std::regex(lead + "code" + S + "+de" + S + "+commerce\\b", kCiteFlags), Code::commercial, false, false});
        r.push_back({std::regex(lead + R"(C\.?)" + S + R"(*com\b\.?)", kCiteFlags), Code::commercial, false, false});
        r.push_back({std::regex(lead + "code" + S + "+de" + S + "+la" + S + "+consommation\\b", kCiteFlags),
                     Code::consommation, false, false});
        r.push_back({std::regex(lead + R"(C\.?)" + S + R"(*consom\b\.?)", kCiteFlags), Code::consommation, false, false});
        r.push_back({std::regex(lead + "code" + S + "+de" + S + "+proc" + e + "dure" + S + "+civile\\b", kCiteFlags),
                     Code::procedure_civile, false, false});
        r.push_back({std::regex(lead + R"((?:CPC\b|C\.?)" + S + R"(*pr\.?)" + S + R"(*civ\b\.?|N?CPC\b))",
                                std::regex::ECMAScript),
                     Code::procedure_civile, false, false});
        r.push_back({std::regex(lead + "(?:m(?:\xC3\xAA|e)me" + S + "+code|code" + S + "+pr" + e + "cit" + e +
                                    "|ce" + S + "+code|code)\\b(?!" + S + "*(?:de|du|des|civil|p" + e + "nal|rural|g" +
                                    e + "n" + e + "ral|mon" + e + "taire)\\b)",
                                kCiteFlags),
                     Code::civil, true, false});
        r.push_back({std::regex(lead + "(code(?:" + S + "+(?:de" + S + "+la|de" + S + "+l(?:'|\xE2\x80\x99)|de|du|des|g" +
                                    e + "n" + e + "ral|p" + e + "nal|rural|mon" + e + "taire|et|la|l(?:'|\xE2\x80\x99))?" +
                                    S + "*[^\\s,;.()]+){1,4})",
                                kCiteFlags),
                     Code::other, false, true});
        r.push_back({std::regex(lead + "(loi|ordonnance|d" + e + "cret|r" + e + "glement|convention|directive)\\b",
                                kCiteFlags),
                     Code::other, false, true});
        return r;
    }();
    const std::string tail(s.substr(pos, std::min<std::size_t>(160, s.size() - pos)));
    for (const auto& rule : rules) {
        std::smatch m;
        if (!std::regex_search(tail, m, rule.re, std::regex_constants::match_continuous)) continue;
        CodeMatch cm{rule.code, {}, rule.inherit, pos + static_cast<std::size_t>(m.length(0))};
        if (rule.capture_name) cm.other_name = text::fold(m.str(1), false);
        return cm;
    }
    return std::nullopt;
}

// "C. civ., art. 1240": a code abbreviation just before the head.
inline std::optional<Code> code_before(std::string_view s, std::size_t head) {
    static const std::regex civ(R"(C\.\s*civ\.?\s*,?\s*$)", kCiteFlags);
    static const std::regex com(R"(C\.\s*com\.?\s*,?\s*$)", kCiteFlags);
    static const std::regex cons(R"(C\.\s*consom\.?\s*,?\s*$)", kCiteFlags);
    static const std::regex cpc(R"((?:CPC|C\.\s*pr\.\s*civ\.?)\s*,?\s*$)", kCiteFlags);
    const std::size_t from = head > 24 ? head - 24 : 0;
    const std::string before(s.substr(from, head - from));
    if (std::regex_search(before, civ)) return Code::civil;
    if (std::regex_search(before, com)) return Code::commercial;
    if (std::regex_search(before, cons)) return Code::consommation;
    if (std::regex_search(before, cpc)) return Code::procedure_civile;
    return std::nullopt;
}

// Expands "A à B". Same base: the suffix sequence. Different unsuffixed bases:
// every integer base. Anything else is rejected.
inline std::optional<std::vector<std::string>> expand_range(const ArticleNumber& a, const ArticleNumber& b,
                                                            std::size_t max_range, std::string& why) {
    std::vector<std::string> out;
    if (b < a) {
        why = "range end precedes start";
        return std::nullopt;
    }
    if (a.base() == b.base()) {
        if (!b.suffix()) {
            why = "range end has no suffix";
            return std::nullopt;
        }
        const std::uint32_t lo = a.suffix() ? *a.suffix() : 0;
        if (*b.suffix() - lo + 1 > max_range) {
            why = "range too long";
            return std::nullopt;
        }
        if (!a.suffix()) out.push_back(a.str());
        for (std::uint32_t s = a.suffix() ? *a.suffix() : 1; s <= *b.suffix(); ++s) {
            out.push_back(ArticleNumber(a.base(), s).str());
        }
        return out;
    }
    if (a.suffix() || b.suffix()) {
        why = "range across bases with suffixes";
        return std::nullopt;
    }
    if (b.base() - a.base() + 1 > max_range) {
        why = "range too long";
        return std::nullopt;
    }
    for (std::uint32_t n = a.base(); n <= b.base(); ++n) out.push_back(std::to_string(n));
    return out;
}

}  // namespace detail

// Mentions in document order with non-overlapping spans. Rejected ranges are
// reported through `rejected` when given.
inline std::vector<CitationMention> extract_citations(std::string_view text,
                                                      std::vector<CitationRejection>* rejected = nullptr,
                                                      const CitationOptions& opts = {}) {
    using namespace detail;
    static const std::regex head(R"(\b(?:articles?\b|art\.))", kCiteFlags);

    std::vector<CitationMention> mentions;
    std::optional<CitationMention> previous;
    const std::string buffer(text);
    std::size_t search_from = 0;

    while (search_from < buffer.size()) {
        std::smatch m;
        if (!std::regex_search(buffer.cbegin() + static_cast<std::ptrdiff_t>(search_from), buffer.cend(), m, head)) break;
        const std::size_t head_start = search_from + static_cast<std::size_t>(m.position(0));
        Cursor c{text, head_start + static_cast<std::size_t>(m.length(0))};
        search_from = c.pos;

        CitationMention mention;
        std::vector<std::string> articles;
        std::string prefix;
        std::size_t end = c.pos;

        auto push = [&](const RawNumber& n) -> std::optional<ArticleNumber> {
            if (n.extra_segments) {
                if (rejected) rejected->push_back({n.span, "article number with more than one suffix"});
                return std::nullopt;
            }
            if (!n.prefix.empty()) prefix = n.prefix;
            auto a = ArticleNumber::parse(n.digits);
            if (!a) return std::nullopt;
            return a;
        };

        // number list
        bool expect_number = true;
        while (expect_number) {
            expect_number = false;
            Cursor t = c;
            t.skip_space();
            auto first = read_number(t);
            if (!first) break;
            auto fa = push(*first);
            c = t;
            end = c.pos;
            // range?
            Cursor r = c;
            r.skip_space();
            if (r.word("à") || r.word("au") || r.word("a")) {
                r.skip_space();
                if (auto second = read_number(r)) {
                    auto sa = push(*second);
                    if (fa && sa) {
                        std::string why;
                        if (auto ex = expand_range(*fa, *sa, opts.max_range, why)) {
                            articles.insert(articles.end(), ex->begin(), ex->end());
                        } else if (rejected) {
                            rejected->push_back({{first->span.start, second->span.end}, why});
                        }
                    }
                    c = r;
                    end = c.pos;
                } else if (fa) {
                    articles.push_back(fa->str());
                }
            } else if (fa) {
                articles.push_back(fa->str());
            }
            skip_alinea(c);
            end = c.pos;
            // separators
            Cursor s = c;
            s.skip_space();
            const bool comma = s.literal(",");
            s.skip_space();
            const bool conj = s.word("et") || s.word("ou");
            if (comma || conj) {
                s.skip_space();
                // "et de l'article 4" style repeats the head; stop so it starts a new mention.
                Cursor peek = s;
                if (read_number(peek)) {
                    c = s;
                    expect_number = true;
                }
            }
        }
        if (articles.empty()) continue;

        // code designation
        auto code = read_code(text, end);
        if (code) {
            if (code->inherit) {
                if (previous) {
                    mention.code = previous->code;
                    mention.other_name = previous->other_name;
                    mention.code_explicit = previous->code_explicit;
                } else {
                    mention.code = Code::civil;
                    mention.code_explicit = false;
                }
            } else {
                mention.code = code->code;
                mention.other_name = code->other_name;
                mention.code_explicit = true;
            }
            end = code->end;
        } else if (auto before = code_before(text, head_start)) {
            mention.code = *before;
            mention.code_explicit = true;
        } else if (!prefix.empty()) {
            // L./R./D. parts do not exist in the Civil Code.
            mention.code = Code::other;
            mention.other_name = "unspecified";
        } else {
            mention.code = Code::civil;
            mention.code_explicit = false;
        }
        mention.prefix = prefix;
        // keep order, drop duplicates from overlapping enumerations
        std::vector<std::string> unique;
        for (auto& a : articles) {
            if (std::find(unique.begin(), unique.end(), a) == unique.end()) unique.push_back(std::move(a));
        }
        mention.articles = std::move(unique);
        while (end > head_start && (text[end - 1] == ' ' || text[end - 1] == ',')) --end;
        mention.span = {head_start, end};
        search_from = std::max(search_from, end);
        previous = mention;
        mentions.push_back(std::move(mention));
    }
    return mentions;
}

// ---------------------------------------------------------------------------
// Keyword screen

struct KeywordOptions {
    std::vector<std::string> keywords = {"article", "loi", "code"};
};

// True iff some token equals a keyword or its plural, after case and accent folding.
inline bool has_explicit_keywords(std::string_view text, const KeywordOptions& opts = {}) {
    std::vector<std::string> folded;
    folded.reserve(opts.keywords.size());
    for (const auto& k : opts.keywords) folded.push_back(text::fold(k));
    for (const auto& tok : text::lexical_tokens(text::fold(text))) {
        for (const auto& k : folded) {
            if (tok == k) return true;
            if (tok.size() == k.size() + 1 && tok.compare(0, k.size(), k) == 0 && (tok.back() == 's' || tok.back() == 'x'))
                return true;
        }
    }
    return false;
}

// ---------------------------------------------------------------------------
// Renumbering

class RenumberingTable {
  public:
    RenumberingTable() = default;

    // CSV "old,new"; '#' comments and an "old,new" header line are skipped.
    static RenumberingTable load(std::istream& in) {
        RenumberingTable t;
        for_each_line(in, [&](std::size_t line, const std::string& raw) {
            const auto s = text::trim(raw);
            if (s.empty() || s[0] == '#') return;
            const auto comma = s.find(',');
            if (comma == std::string_view::npos) throw RecordError(line, "expected old,new");
            const auto old_s = text::trim(s.substr(0, comma));
            const auto new_s = text::trim(s.substr(comma + 1));
            if (old_s == "old" && new_s == "new") return;
            try {
                t.add(std::string(old_s), std::string(new_s));
            } catch (const ValidationError& e) {
                throw RecordError(line, e.what());
            }
        });
        return t;
    }

    static RenumberingTable load_file(const std::string& path) {
        auto in = open_input(path);
        return load(in);
    }

    void add(const std::string& old_number, const std::string& new_number) {
        const auto o = ArticleNumber::from(old_number).str();
        const auto n = ArticleNumber::from(new_number).str();
        if (o == n) throw ValidationError("identity mapping for " + o);
        if (old_to_new_.count(o)) throw ValidationError("old number " + o + " mapped twice");
        if (new_to_old_.count(n)) throw ValidationError("new number " + n + " mapped twice");
        if (new_to_old_.count(o) || old_to_new_.count(n))
            throw ValidationError("chained mapping through " + (new_to_old_.count(o) ? o : n));
        old_to_new_[o] = n;
        new_to_old_[n] = o;
    }

    std::optional<std::string> new_for(const std::string& old_number) const {
        auto it = old_to_new_.find(old_number);
        if (it == old_to_new_.end()) return std::nullopt;
        return it->second;
    }

    std::optional<std::string> old_for(const std::string& new_number) const {
        auto it = new_to_old_.find(new_number);
        if (it == new_to_old_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t size() const noexcept { return old_to_new_.size(); }
    const std::map<std::string, std::string>& pairs() const noexcept { return old_to_new_; }

  private:
    std::map<std::string, std::string> old_to_new_;
    std::map<std::string, std::string> new_to_old_;
};

// The number itself plus its counterpart, if any. Throws on malformed input.
inline std::set<std::string> resolve_renumbering(std::string_view number, const RenumberingTable& table) {
    const auto n = ArticleNumber::from(number).str();
    std::set<std::string> out{n};
    if (auto x = table.new_for(n)) out.insert(*x);
    if (auto x = table.old_for(n)) out.insert(*x);
    return out;
}

inline bool is_cited_in_decision(std::string_view article_number, const std::vector<CitationMention>& mentions,
                                 const RenumberingTable& table) {
    const auto equivalents = resolve_renumbering(article_number, table);
    for (const auto& m : mentions) {
        if (m.code != Code::civil) continue;
        for (const auto& a : m.articles) {
            if (equivalents.count(a)) return true;
        }
    }
    return false;
}

// Every civil-code article number cited anywhere in the text.
inline std::set<std::string> cited_civil_articles(std::string_view text) {
    std::set<std::string> out;
    for (const auto& m : extract_citations(text)) {
        if (m.code != Code::civil) continue;
        out.insert(m.articles.begin(), m.articles.end());
    }
    return out;
}

inline json to_json(const CitationMention& m) {
    json j = {{"code", to_string(m.code)},
              {"code_explicit", m.code_explicit},
              {"articles", m.articles},
              {"span", {m.span.start, m.span.end}}};
    if (!m.other_name.empty()) j["other_name"] = m.other_name;
    if (!m.prefix.empty()) j["prefix"] = m.prefix;
    return j;
}

}  // namespace lexcite
