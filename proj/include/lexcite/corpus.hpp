#pragma once

// Corpus store: decisions and Civil Code articles, sentence-aware chunking,
// legal-reference masking, decision-grouped splits and length statistics.
//
// The store is build-then-read: ingest from one thread, then share it as
// const. Chunking and masking are pure functions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <regex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lexcite/common.hpp"
#include "lexcite/text.hpp"

namespace lexcite {

using json = nlohmann::json;

struct Decision {
    std::string id;
    std::string court_id;
    std::string date;  // ISO-8601 YYYY-MM-DD, may be empty
    std::string motivation;
};

enum class Book { I = 1, II, III, IV, V };

inline std::string to_string(Book b) {
    static constexpr std::array<const char*, 5> kNames = {"I", "II", "III", "IV", "V"};
    return kNames[static_cast<std::size_t>(b) - 1];
}

inline std::optional<Book> parse_book(std::string_view s) {
    static constexpr std::array<std::string_view, 5> kNames = {"I", "II", "III", "IV", "V"};
    for (std::size_t i = 0; i < kNames.size(); ++i) {
        if (s == kNames[i]) return static_cast<Book>(i + 1);
    }
    return std::nullopt;
}

struct HierarchyLevel {
    std::string level;    // "livre", "titre", "chapitre", "section", ...
    std::string heading;
};

struct Article {
    std::string number;
    Book book = Book::III;
    std::vector<HierarchyLevel> hierarchy;
    std::string text;
};

struct CharSpan {
    std::size_t start = 0;
    std::size_t end = 0;  // exclusive, byte offsets into the motivation
    friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

struct Chunk {
    std::string decision_id;
    std::size_t index = 0;
    std::string text;
    std::size_t token_count = 0;
    CharSpan span;
    std::size_t sentence_count = 0;
    bool oversize = false;  // a single sentence longer than the token limit
};

inline std::string chunk_key(std::string_view decision_id, std::size_t index) {
    return std::string(decision_id) + ":" + std::to_string(index);
}

// ---------------------------------------------------------------------------
// Ingestion

struct IngestIssue {
    std::size_t line = 0;
    std::string message;
};

struct IngestReport {
    std::size_t accepted = 0;
    std::vector<IngestIssue> errors;
};

namespace detail {

inline bool is_iso_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
        if (s[i] < '0' || s[i] > '9') return false;
    }
    const int month = (s[5] - '0') * 10 + (s[6] - '0');
    const int day = (s[8] - '0') * 10 + (s[9] - '0');
    return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

inline std::string optional_string(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return {};
    if (!j[key].is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
    return j[key].get<std::string>();
}

inline std::string required_string(const json& j, const char* key) {
    if (!j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
    if (!j[key].is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
    return j[key].get<std::string>();
}

}  // namespace detail

inline Decision decision_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("record is not an object");
    Decision d;
    d.id = detail::required_string(j, "id");
    if (d.id.empty()) throw ValidationError("empty id");
    d.motivation = detail::required_string(j, "motivation");
    if (text::trim(d.motivation).empty()) throw ValidationError("empty motivation");
    d.court_id = detail::optional_string(j, "court_id");
    d.date = detail::optional_string(j, "date");
    if (!d.date.empty() && !detail::is_iso_date(d.date)) {
        throw ValidationError("date '" + d.date + "' is not YYYY-MM-DD");
    }
    return d;
}

inline json to_json(const Decision& d) {
    return json{{"id", d.id}, {"court_id", d.court_id}, {"date", d.date}, {"motivation", d.motivation}};
}

inline Article article_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("record is not an object");
    Article a;
    a.number = detail::required_string(j, "number");
    if (!ArticleNumber::parse(a.number)) throw ValidationError("malformed article number '" + a.number + "'");
    a.text = detail::required_string(j, "text");
    if (text::trim(a.text).empty()) throw ValidationError("empty article text");
    const std::string book = detail::optional_string(j, "book");
    if (!book.empty()) {
        auto b = parse_book(book);
        if (!b) throw ValidationError("unknown book '" + book + "'");
        a.book = *b;
    }
    if (j.contains("hierarchy") && !j["hierarchy"].is_null()) {
        if (!j["hierarchy"].is_array()) throw ValidationError("hierarchy must be an array");
        for (const auto& h : j["hierarchy"]) {
            if (h.is_array() && h.size() == 2) {
                a.hierarchy.push_back({h[0].get<std::string>(), h[1].get<std::string>()});
            } else if (h.is_object()) {
                a.hierarchy.push_back({detail::required_string(h, "level"), detail::required_string(h, "heading")});
            } else {
                throw ValidationError("hierarchy entries are {level, heading}");
            }
        }
    }
    return a;
}

inline json to_json(const Article& a) {
    json h = json::array();
    for (const auto& l : a.hierarchy) h.push_back({{"level", l.level}, {"heading", l.heading}});
    return json{{"number", a.number}, {"book", to_string(a.book)}, {"hierarchy", h}, {"text", a.text}};
}

inline json to_json(const Chunk& c) {
    return json{{"decision_id", c.decision_id},
                {"index", c.index},
                {"text", c.text},
                {"token_count", c.token_count},
                {"span", {c.span.start, c.span.end}},
                {"oversize", c.oversize}};
}

inline Chunk chunk_from_json(const json& j) {
    Chunk c;
    c.decision_id = detail::required_string(j, "decision_id");
    c.index = j.at("index").get<std::size_t>();
    c.text = detail::required_string(j, "text");
    c.token_count = j.at("token_count").get<std::size_t>();
    const auto& span = j.at("span");
    if (!span.is_array() || span.size() != 2) throw ValidationError("span must be [start, end]");
    c.span = {span[0].get<std::size_t>(), span[1].get<std::size_t>()};
    c.oversize = j.value("oversize", false);
    return c;
}

class CorpusStore {
  public:
    // Reads one JSON decision per line. Malformed or duplicate records are
    // reported with their line number and skipped.
    IngestReport ingest_decisions(std::istream& in) {
        IngestReport report;
        for_each_line(in, [&](std::size_t line, const std::string& raw) {
            try {
                Decision d = decision_from_json(json::parse(raw));
                if (decision_index_.count(d.id)) throw ValidationError("duplicate decision id '" + d.id + "'");
                decision_index_.emplace(d.id, decisions_.size());
                decisions_.push_back(std::move(d));
                ++report.accepted;
            } catch (const json::exception& e) {
                report.errors.push_back({line, std::string("invalid JSON: ") + e.what()});
            } catch (const Error& e) {
                report.errors.push_back({line, e.what()});
            }
        });
        return report;
    }

    IngestReport ingest_articles(std::istream& in) {
        IngestReport report;
        for_each_line(in, [&](std::size_t line, const std::string& raw) {
            try {
                Article a = article_from_json(json::parse(raw));
                if (articles_.count(a.number)) throw ValidationError("duplicate article '" + a.number + "'");
                articles_.emplace(a.number, std::move(a));
                ++report.accepted;
            } catch (const json::exception& e) {
                report.errors.push_back({line, std::string("invalid JSON: ") + e.what()});
            } catch (const Error& e) {
                report.errors.push_back({line, e.what()});
            }
        });
        return report;
    }

    void add_decision(Decision d) {
        if (decision_index_.count(d.id)) throw ValidationError("duplicate decision id '" + d.id + "'");
        decision_index_.emplace(d.id, decisions_.size());
        decisions_.push_back(std::move(d));
    }

    void add_article(Article a) {
        if (articles_.count(a.number)) throw ValidationError("duplicate article '" + a.number + "'");
        articles_.emplace(a.number, std::move(a));
    }

    const std::vector<Decision>& decisions() const noexcept { return decisions_; }

    const Decision* find_decision(std::string_view id) const {
        auto it = decision_index_.find(std::string(id));
        return it == decision_index_.end() ? nullptr : &decisions_[it->second];
    }

    // Articles ordered by article number.
    std::vector<const Article*> articles() const {
        std::vector<const Article*> out;
        out.reserve(articles_.size());
        for (const auto& [_, a] : articles_) out.push_back(&a);
        std::sort(out.begin(), out.end(),
                  [](const Article* a, const Article* b) { return article_less(a->number, b->number); });
        return out;
    }

    const Article* find_article(std::string_view number) const {
        auto it = articles_.find(std::string(number));
        return it == articles_.end() ? nullptr : &it->second;
    }

    std::size_t decision_count() const noexcept { return decisions_.size(); }
    std::size_t article_count() const noexcept { return articles_.size(); }

  private:
    std::vector<Decision> decisions_;
    std::unordered_map<std::string, std::size_t> decision_index_;
    std::unordered_map<std::string, Article> articles_;
};

// ---------------------------------------------------------------------------
// Chunking

struct ChunkerOptions {
    std::size_t max_tokens = 100;
    std::size_t max_sentences = 2;
    std::vector<std::string> protected_abbreviations = {
        "C. civ.", "C. com.", "C. consom.", "C. pr. civ.", "C. trav.", "C. pén.", "art.", "al.",
        "civ.",    "com.",    "soc.",      "crim.",       "Cass.",   "ass.",    "plén.", "M.",
        "MM.",     "Mme.",    "Mlle.",     "Me.",         "cf.",     "p.",      "n.",    "ch.",
        "préc.",   "req.",    "Ord.",      "éd.",         "ss.",     "spéc.",   "s."};
};

struct Sentence {
    CharSpan span;
    std::size_t tokens = 0;
};

namespace detail {

inline bool ascii_iequal(char a, char b) {
    auto lower = [](char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c + 32) : c; };
    return lower(a) == lower(b);
}

// True when text[0, end) ends with `abbr` at a word boundary.
inline bool ends_with_abbreviation(std::string_view text, std::size_t end, std::string_view abbr) {
    if (abbr.size() > end) return false;
    const std::size_t start = end - abbr.size();
    for (std::size_t i = 0; i < abbr.size(); ++i) {
        if (!ascii_iequal(text[start + i], abbr[i])) return false;
    }
    if (start == 0) return true;
    // Step back one code point to test the boundary.
    std::size_t prev = start - 1;
    while (prev > 0 && (static_cast<unsigned char>(text[prev]) & 0xC0) == 0x80) --prev;
    const char32_t cp = text::decode_at(text, prev).cp;
    return !(text::is_letter(cp) || text::is_digit(cp));
}

inline bool is_closer(char32_t cp) {
    return cp == ')' || cp == ']' || cp == '"' || cp == '\'' || cp == 0xBB || cp == 0x201D || cp == 0x2019;
}

inline bool is_opener(char32_t cp) {
    return cp == '(' || cp == '[' || cp == '"' || cp == 0xAB || cp == 0x201C;
}

}  // namespace detail

// Sentence spans: a sentence ends at '.', '!' or '?' (plus closing quotes or
// brackets) when followed by whitespace and an uppercase letter or digit,
// unless the terminator closes a protected abbreviation.
inline std::vector<Sentence> split_sentences(std::string_view text, const ChunkerOptions& opts = {}) {
    std::vector<Sentence> out;
    std::size_t pos = 0;
    auto skip_space = [&](std::size_t p) {
        while (p < text.size()) {
            const auto d = text::decode_at(text, p);
            if (!text::is_space(d.cp)) break;
            p += d.len;
        }
        return p;
    };
    std::size_t start = skip_space(0);
    pos = start;
    auto emit = [&](std::size_t end) {
        if (end > start) {
            const auto s = text.substr(start, end - start);
            out.push_back({{start, end}, text::count_tokens(s)});
        }
    };
    while (pos < text.size()) {
        const auto d = text::decode_at(text, pos);
        if (d.cp != '.' && d.cp != '!' && d.cp != '?') {
            pos += d.len;
            continue;
        }
        std::size_t end = pos + d.len;
        // Runs like "?!" or "..." stay with the sentence.
        while (end < text.size()) {
            const auto n = text::decode_at(text, end);
            if (n.cp == '.' || n.cp == '!' || n.cp == '?' || detail::is_closer(n.cp)) {
                end += n.len;
            } else {
                break;
            }
        }
        bool boundary = false;
        if (end < text.size() && text::is_space(text::decode_at(text, end).cp)) {
            std::size_t next = skip_space(end);
            while (next < text.size()) {
                const auto o = text::decode_at(text, next);
                if (!detail::is_opener(o.cp)) break;
                next = skip_space(next + o.len);
            }
            if (next < text.size()) {
                const char32_t cp = text::decode_at(text, next).cp;
                boundary = text::is_upper(cp) || text::is_digit(cp);
            }
        }
        if (boundary && d.cp == '.') {
            for (const auto& abbr : opts.protected_abbreviations) {
                if (detail::ends_with_abbreviation(text, pos + 1, abbr)) {
                    boundary = false;
                    break;
                }
            }
        }
        if (boundary) {
            emit(end);
            start = skip_space(end);
            pos = start;
        } else {
            pos = end;
        }
    }
    std::size_t tail = text.size();
    while (tail > start && text::is_space(static_cast<unsigned char>(text[tail - 1]))) --tail;
    emit(tail);
    return out;
}

// Greedy grouping of consecutive sentences into chunks of at most
// `max_sentences` sentences and `max_tokens` whitespace tokens.
inline std::vector<Chunk> chunk_motivation(std::string_view text, const ChunkerOptions& opts = {}) {
    if (opts.max_tokens == 0) throw ValidationError("max_tokens must be >= 1");
    if (opts.max_sentences == 0) throw ValidationError("max_sentences must be >= 1");
    const auto sentences = split_sentences(text, opts);
    std::vector<Chunk> chunks;
    std::size_t i = 0;
    while (i < sentences.size()) {
        Chunk c;
        c.index = chunks.size();
        if (sentences[i].tokens > opts.max_tokens) {
            c.span = sentences[i].span;
            c.sentence_count = 1;
            c.oversize = true;
            ++i;
        } else {
            std::size_t j = i + 1;
            std::size_t tokens = sentences[i].tokens;
            while (j < sentences.size() && j - i < opts.max_sentences &&
                   tokens + sentences[j].tokens <= opts.max_tokens) {
                tokens += sentences[j].tokens;
                ++j;
            }
            c.span = {sentences[i].span.start, sentences[j - 1].span.end};
            c.sentence_count = j - i;
            i = j;
        }
        c.text = std::string(text.substr(c.span.start, c.span.end - c.span.start));
        c.token_count = text::count_tokens(c.text);
        chunks.push_back(std::move(c));
    }
    return chunks;
}

inline std::vector<Chunk> chunk_motivation(std::string_view text, std::size_t max_tokens) {
    ChunkerOptions opts;
    opts.max_tokens = max_tokens;
    return chunk_motivation(text, opts);
}

inline std::vector<Chunk> chunk_decision(const Decision& d, const ChunkerOptions& opts = {}) {
    auto chunks = chunk_motivation(d.motivation, opts);
    for (auto& c : chunks) c.decision_id = d.id;
    return chunks;
}

// ---------------------------------------------------------------------------
// Reference masking

inline constexpr std::string_view kArticleToken = "[ARTICLE]";
inline constexpr std::string_view kDecisionToken = "[DECISION]";
inline constexpr std::string_view kLawToken = "[LOI]";
inline constexpr std::string_view kAmountToken = "[MONTANT]";

namespace detail {

struct MaskRule {
    std::regex pattern;
    std::string replacement;
};

inline const std::vector<MaskRule>& mask_rules() {
    static const std::vector<MaskRule> rules = [] {
        // Whitespace including no-break spaces, as found in French typography.
        const std::string S = R"((?:[ \t\n]|\xC2\xA0|\xE2\x80\xAF))";
        const std::string apos = R"((?:'|\xE2\x80\x99))";
        const std::string a_grave = R"((?:à|À|a))";
        const std::string num_sign = "(?:n\xC2\xB0|n\xC2\xBA|no\\.?|n\\.|num\xC3\xA9ro)";
        const std::string month =
            "(?:janvier|f\xC3\xA9vrier|fevrier|mars|avril|mai|juin|juillet|ao\xC3\xBBt|aout|septembre|octobre|"
            "novembre|d\xC3\xA9" "cembre|decembre)";
        const std::string date = R"(\d{1,2}(?:er)?)" + S + "+" + month + S + R"(+\d{4})";
        const std::string docket = R"(\d{2}[-/]\d{2,}(?:[./]\d+)*)";
        const auto flags = std::regex::ECMAScript | std::regex::icase | std::regex::optimize;

        std::vector<MaskRule> r;
        // Court decisions: "arrêt du 12 mars 2020", "Cass. civ. 1re, 12 mars 2020, n° 18-21.345",
        // docket numbers "RG n° 22/01234".
        r.push_back({std::regex(std::string(R"(\b(?:arr(?:ê|Ê|e)ts?|jugements?|d(?:é|É|e)cisions?))") + "(?:" + S +
                                    R"(+rendu(?:e|s|es)?)?)" + S + "+(?:du|en" + S + "+date" + S + "+du)" + S +
                                    "+" + date + "(?:," + S + "*(?:pourvoi" + S + "*)?" + num_sign + S + "*" +
                                    docket + ")?",
                                flags),
                     std::string(kDecisionToken)});
        r.push_back({std::regex(R"(\bCass\.?)" + S + R"(*(?:civ|com|soc|crim|ass\.)" + S +
                                    R"(*pl(?:é|e)n|ch\.)" + S + R"(*mixte)\.?(?:)" + S +
                                    R"(*\d(?:re|e|(?:è|e)me))?,?)" + S + "*" + date + "(?:," + S +
                                    "*(?:pourvoi" + S + "*)?" + num_sign + S + "*" + docket + ")?",
                                flags),
                     std::string(kDecisionToken)});
        r.push_back({std::regex(std::string(R"(\b(?:RG)") + S + "*" + num_sign + "?|pourvoi" + S + "*" + num_sign + "|" +
                                    num_sign + ")" + S + "*" + docket,
                                flags),
                     std::string(kDecisionToken)});
        // Statutes: "loi n° 2016-131 du 10 février 2016", "ordonnance du 10 février 2016".
        r.push_back({std::regex(R"(\b(?:lois?|ordonnances?|d(?:é|É|e)crets?))" + S + "+(?:organique" + S + "+)?(?:" +
                                    num_sign + S + R"(*\d+-\d+(?:)" + S + "+du" + S + "+" + date + ")?|du" +
                                    S + "+" + date + ")",
                                flags),
                     std::string(kLawToken)});
        // Article numbers with their head, including enumerations and ranges.
        const std::string artnum = R"((?:[LRD]\.?)" + S + R"(*)?\d+(?:-\d+)*)";
        r.push_back({std::regex(R"(\b(?:articles?|art\.))" + S + "*" + artnum + "(?:" + S + "*(?:,|et|ou|" +
                                    a_grave + ")" + S + "*" + artnum + ")*(?:" + S + "+(?:alin(?:é|e)a|al\\.)" + S +
                                    R"(*\d+(?:er)?)?)",
                                flags),
                     std::string(kArticleToken)});
        // Code names and their abbreviations.
        const std::string code_names =
            "(?:civil|p(?:\xC3\xA9|e)nal|de" + S + "+commerce|de" + S + "+la" + S + "+consommation|de" + S +
            "+proc(?:\xC3\xA9|e)dure" + S + "+civile|des" + S + "+proc(?:\xC3\xA9|e)dures" + S + "+civiles" + S +
            "+d" + apos + "ex(?:\xC3\xA9|e)cution|du" + S + "+travail|de" + S + "+la" + S + "+s(?:\xC3\xA9|e)curit(?:\xC3\xA9|e)" +
            S + "+sociale|des" + S + "+assurances|g(?:\xC3\xA9|e)n(?:\xC3\xA9|e)ral" + S + "+des" + S +
            "+imp(?:\xC3\xB4|o)ts|de" + S + "+l" + apos + "urbanisme|de" + S + "+la" + S + "+construction" + S +
            "+et" + S + "+de" + S + "+l" + apos + "habitation|mon(?:\xC3\xA9|e)taire" + S + "+et" + S +
            "+financier|de" + S + "+l" + apos + "environnement|rural(?:" + S + "+et" + S + "+de" + S + "+la" + S +
            "+p(?:\xC3\xAA|e)che" + S + "+maritime)?|de" + S + "+l" + apos + "organisation" + S + "+judiciaire|de" +
            S + "+la" + S + "+route|de" + S + "+la" + S + "+sant(?:\xC3\xA9|e)" + S + "+publique)";
        r.push_back({std::regex(R"(\bcodes?)" + S + "+" + code_names, flags), std::string(kLawToken)});
        r.push_back({std::regex(R"(\bC\.)" + S + R"(*(?:civ|com|consom|pr\.)" + S +
                                    R"(*civ|trav|p(?:é|e)n|ass|s(?:é|e)c\.)" + S + R"(*soc)\.)",
                                flags),
                     std::string(kLawToken)});
        r.push_back({std::regex(R"(\b(?:CPC|CPCE)\b)", std::regex::ECMAScript), std::string(kLawToken)});
        // Monetary amounts: "1 500 euros", "1.500,00 €", "3000 EUR".
        r.push_back({std::regex(R"(\b(?:\d{1,3}(?:(?:)" + S + R"(|\.)\d{3})+|\d+)(?:,\d+)?)" + S +
                                    R"(*(?:euros?\b|€|EUR\b))",
                                flags),
                     std::string(kAmountToken)});
        return r;
    }();
    return rules;
}

}  // namespace detail

// Replaces article references, code names, statute references, decision
// citations and amounts with placeholder tokens. Idempotent.
inline std::string mask_references(std::string_view input) {
    std::string out(input);
    for (const auto& rule : detail::mask_rules()) {
        out = std::regex_replace(out, rule.pattern, rule.replacement);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splits

enum class Split { train, validation, test };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "train";
}

struct SplitAssignment {
    std::map<std::string, Split> by_decision;

    std::vector<std::string> members(Split s) const {
        std::vector<std::string> out;
        for (const auto& [id, split] : by_decision) {
            if (split == s) out.push_back(id);
        }
        return out;
    }
    std::size_t count(Split s) const {
        return static_cast<std::size_t>(std::count_if(by_decision.begin(), by_decision.end(),
                                                      [s](const auto& kv) { return kv.second == s; }));
    }
};

// Decision-grouped train/validation/test assignment. Sizes follow the
// largest-remainder rule; remainder ties are broken by the seeded generator.
inline SplitAssignment assign_splits(std::vector<std::string> decision_ids,
                                     std::array<double, 3> ratios = {0.70, 0.15, 0.15}, std::uint64_t seed = 0) {
    if (decision_ids.size() < 3) throw ValidationError("assign_splits needs at least 3 decisions");
    double total = 0;
    for (double r : ratios) {
        if (r < 0 || !std::isfinite(r)) throw ValidationError("split ratios must be non-negative");
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
    std::sort(decision_ids.begin(), decision_ids.end());
    if (std::adjacent_find(decision_ids.begin(), decision_ids.end()) != decision_ids.end()) {
        throw ValidationError("duplicate decision id in split input");
    }
    Rng rng(seed);
    seeded_shuffle(decision_ids, rng);

    const double n = static_cast<double>(decision_ids.size());
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double exact = ratios[i] * n;
        sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        remainder[i] = exact - static_cast<double>(sizes[i]);
        assigned += sizes[i];
    }
    std::array<std::size_t, 3> order = {0, 1, 2};
    std::array<std::uint64_t, 3> tie{};
    for (auto& t : tie) t = rng();
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (std::abs(remainder[a] - remainder[b]) > 1e-9) return remainder[a] > remainder[b];
        return tie[a] < tie[b];
    });
    for (std::size_t k = 0; assigned < decision_ids.size(); ++k, ++assigned) {
        ++sizes[order[k % 3]];
    }

    SplitAssignment out;
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        for (std::size_t i = 0; i < sizes[s]; ++i, ++pos) {
            out.by_decision.emplace(decision_ids[pos], static_cast<Split>(s));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

struct LengthStats {
    std::size_t count = 0;
    double mean = 0;
    double median = 0;
    std::size_t min = 0;
    std::size_t max = 0;
};

inline LengthStats length_stats(std::vector<std::size_t> values) {
    if (values.empty()) throw ValidationError("length statistics over an empty set");
    std::sort(values.begin(), values.end());
    LengthStats s;
    s.count = values.size();
    double sum = 0;
    for (auto v : values) sum += static_cast<double>(v);
    s.mean = sum / static_cast<double>(values.size());
    const std::size_t mid = values.size() / 2;
    s.median = values.size() % 2 ? static_cast<double>(values[mid])
                                 : (static_cast<double>(values[mid - 1]) + static_cast<double>(values[mid])) / 2.0;
    s.min = values.front();
    s.max = values.back();
    return s;
}

inline json to_json(const LengthStats& s) {
    return json{{"count", s.count}, {"mean", s.mean}, {"median", s.median}, {"min", s.min}, {"max", s.max}};
}

struct CorpusReport {
    std::size_t decisions = 0;
    std::size_t articles = 0;
    std::size_t chunks = 0;
    std::optional<LengthStats> chunk_words;
    std::optional<LengthStats> article_words;
};

inline CorpusReport corpus_stats(const CorpusStore& store, const std::vector<Chunk>& chunks) {
    if (store.decision_count() == 0 && store.article_count() == 0 && chunks.empty()) {
        throw ValidationError("corpus_stats on an empty store");
    }
    CorpusReport r;
    r.decisions = store.decision_count();
    r.articles = store.article_count();
    r.chunks = chunks.size();
    if (!chunks.empty()) {
        std::vector<std::size_t> lens;
        lens.reserve(chunks.size());
        for (const auto& c : chunks) lens.push_back(text::count_words(c.text));
        r.chunk_words = length_stats(std::move(lens));
    }
    if (store.article_count() > 0) {
        std::vector<std::size_t> lens;
        for (const Article* a : store.articles()) lens.push_back(text::count_words(a->text));
        r.article_words = length_stats(std::move(lens));
    }
    return r;
}

inline json to_json(const CorpusReport& r) {
    json j{{"decisions", r.decisions}, {"articles", r.articles}, {"chunks", r.chunks}};
    j["chunk_words"] = r.chunk_words ? to_json(*r.chunk_words) : json(nullptr);
    j["article_words"] = r.article_words ? to_json(*r.article_words) : json(nullptr);
    return j;
}

}  // namespace lexcite
