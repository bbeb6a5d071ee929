#pragma once

// TF-IDF cosine and Okapi BM25 over a fitted vocabulary, min-max
// normalisation, and a plain-text dump format:
//
//   lexcite-lexical 1
//   docs <N>
//   avgdl <mean tokens per document>
//   k1 <k1>
//   b <b>
//   terms <M>
//   <term>\t<df>        (M lines, byte order)

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lexcite/common.hpp"
#include "lexcite/text.hpp"

namespace lexcite {

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

class LexicalModel {
  public:
    using TermCounts = std::map<std::string, double>;

    LexicalModel() = default;

    template <typename Range>
    static LexicalModel fit(const Range& docs, Bm25Params params = {}) {
        check_params(params);
        LexicalModel m;
        m.params_ = params;
        std::size_t total = 0;
        for (const auto& d : docs) {
            const auto toks = text::lexical_tokens(d);
            total += toks.size();
            const std::set<std::string> uniq(toks.begin(), toks.end());
            for (const auto& t : uniq) ++m.df_[t];
            ++m.n_docs_;
        }
        if (m.n_docs_ == 0) throw ValidationError("cannot fit a lexical model on an empty corpus");
        m.avgdl_ = static_cast<double>(total) / static_cast<double>(m.n_docs_);
        return m;
    }

    std::size_t n_docs() const noexcept { return n_docs_; }
    double avgdl() const noexcept { return avgdl_; }
    const Bm25Params& params() const noexcept { return params_; }
    const std::map<std::string, std::size_t>& document_frequencies() const noexcept { return df_; }

    std::size_t df(const std::string& term) const {
        auto it = df_.find(term);
        return it == df_.end() ? 0 : it->second;
    }

    // Smoothed idf: ln((1+N)/(1+df)) + 1. Out-of-vocabulary terms have no weight.
    double tfidf_idf(const std::string& term) const {
        const std::size_t d = df(term);
        if (d == 0) return 0.0;
        return std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + static_cast<double>(d))) + 1.0;
    }

    // Lucene-style idf, never negative.
    double bm25_idf(const std::string& term) const {
        const double d = static_cast<double>(df(term));
        const double n = static_cast<double>(n_docs_);
        return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
    }

    TermCounts tfidf_vector(std::string_view s) const {
        TermCounts v;
        for (const auto& t : text::lexical_tokens(s)) {
            const double w = tfidf_idf(t);
            if (w > 0.0) v[t] += w;
        }
        return v;
    }

    void dump(std::ostream& out) const {
        char buf[64];
        out << "lexcite-lexical 1\n";
        out << "docs " << n_docs_ << "\n";
        std::snprintf(buf, sizeof buf, "%.17g", avgdl_);
        out << "avgdl " << buf << "\n";
        std::snprintf(buf, sizeof buf, "%.17g", params_.k1);
        out << "k1 " << buf << "\n";
        std::snprintf(buf, sizeof buf, "%.17g", params_.b);
        out << "b " << buf << "\n";
        out << "terms " << df_.size() << "\n";
        for (const auto& [t, d] : df_) out << t << '\t' << d << '\n';
    }

    static LexicalModel load(std::istream& in) {
        LexicalModel m;
        std::string line;
        std::size_t line_no = 0;
        auto next = [&](const char* what) {
            if (!std::getline(in, line)) throw RecordError(line_no + 1, std::string("missing ") + what);
            ++line_no;
            return line;
        };
        if (next("header") != "lexcite-lexical 1") throw RecordError(line_no, "not a lexical model dump");
        auto field = [&](const char* key) {
            std::istringstream ss(next(key));
            std::string k;
            double v = 0;
            if (!(ss >> k >> v) || k != key) throw RecordError(line_no, std::string("expected ") + key);
            return v;
        };
        m.n_docs_ = static_cast<std::size_t>(field("docs"));
        m.avgdl_ = field("avgdl");
        m.params_.k1 = field("k1");
        m.params_.b = field("b");
        const auto n_terms = static_cast<std::size_t>(field("terms"));
        check_params(m.params_);
        for (std::size_t i = 0; i < n_terms; ++i) {
            const auto l = next("term");
            const auto tab = l.find('\t');
            if (tab == std::string::npos) throw RecordError(line_no, "expected term<TAB>df");
            const auto d = std::stoull(l.substr(tab + 1));
            if (d == 0 || d > m.n_docs_) throw RecordError(line_no, "document frequency out of range");
            m.df_[l.substr(0, tab)] = static_cast<std::size_t>(d);
        }
        if (m.n_docs_ == 0) throw ValidationError("lexical model with no documents");
        return m;
    }

  private:
    static void check_params(const Bm25Params& p) {
        if (!(p.k1 > 0.0) || !(p.b >= 0.0 && p.b <= 1.0)) throw ValidationError("BM25 needs k1 > 0 and 0 <= b <= 1");
    }

    std::map<std::string, std::size_t> df_;
    std::size_t n_docs_ = 0;
    double avgdl_ = 0.0;
    Bm25Params params_;
};

inline double cosine(const LexicalModel::TermCounts& a, const LexicalModel::TermCounts& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [t, w] : a) {
        na += w * w;
        auto it = b.find(t);
        if (it != b.end()) dot += w * it->second;
    }
    for (const auto& [t, w] : b) nb += w * w;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

// Symmetric, in [0, 1]; 0 when either side has no in-vocabulary term.
inline double tfidf_cosine(const LexicalModel& m, std::string_view a, std::string_view b) {
    return cosine(m.tfidf_vector(a), m.tfidf_vector(b));
}

// Okapi BM25 of `doc` for the distinct terms of `query`.
inline double bm25(const LexicalModel& m, std::string_view query, std::string_view doc) {
    const auto qtok = text::lexical_tokens(query);
    const auto dtok = text::lexical_tokens(doc);
    std::unordered_map<std::string, double> tf;
    for (const auto& t : dtok) tf[t] += 1.0;
    const double dl = static_cast<double>(dtok.size());
    const double avgdl = m.avgdl() > 0.0 ? m.avgdl() : 1.0;
    const auto& p = m.params();
    double score = 0.0;
    const std::set<std::string> terms(qtok.begin(), qtok.end());
    for (const auto& t : terms) {
        auto it = tf.find(t);
        if (it == tf.end()) continue;
        const double f = it->second;
        score += m.bm25_idf(t) * f * (p.k1 + 1.0) / (f + p.k1 * (1.0 - p.b + p.b * dl / avgdl));
    }
    return score;
}

// Min-max to [0, 1]; constant or single-element lists map to 0.5.
inline std::vector<double> minmax_normalize(const std::vector<double>& scores) {
    if (scores.empty()) throw ValidationError("cannot normalise an empty score list");
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    const double a = *lo, b = *hi;
    std::vector<double> out(scores.size(), 0.5);
    if (!(b > a)) return out;
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - a) / (b - a);
    return out;
}

}  // namespace lexcite
