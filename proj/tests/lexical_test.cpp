#include "lexcite/lexical.hpp"

#include <gtest/gtest.h>

#include <cctype>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace lexcite;

namespace {

// ASCII-only oracle tokenizer: lowercase, split on anything not alnum or '-'.
std::vector<std::string> ascii_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || (c == '-' && !cur.empty())) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            while (!cur.empty() && cur.back() == '-') cur.pop_back();
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        }
    }
    while (!cur.empty() && cur.back() == '-') cur.pop_back();
    if (!cur.empty()) out.push_back(cur);
    return out;
}

const std::vector<std::string> kCorpus = {
    "Le bail est resilie de plein droit.",
    "Le preneur doit payer le loyer; le bail le prevoit.",
    "La caution garantit la dette du preneur.",
    "Article 1352-9: la caution reste tenue.",
    "Le juge peut reduire la penalite.",
};

}  // namespace

TEST(Fit, SingleDocumentHasDfOne) {
    const auto m = LexicalModel::fit(std::vector<std::string>{"la dette et la caution"});
    for (const auto& [t, d] : m.document_frequencies()) EXPECT_EQ(d, 1u) << t;
    EXPECT_EQ(m.n_docs(), 1u);
}

TEST(Fit, SharedTermCountedPerDocument) {
    const auto m = LexicalModel::fit(std::vector<std::string>{"bail bail loyer", "bail caution"});
    EXPECT_EQ(m.df("bail"), 2u);
    EXPECT_EQ(m.df("loyer"), 1u);
}

TEST(Fit, DfMatchesBruteForceCount) {
    const auto m = LexicalModel::fit(kCorpus);
    std::map<std::string, std::size_t> oracle;
    for (const auto& d : kCorpus) {
        const auto toks = ascii_tokens(d);
        for (const auto& t : std::set<std::string>(toks.begin(), toks.end())) ++oracle[t];
    }
    EXPECT_EQ(m.document_frequencies(), oracle);
    EXPECT_EQ(m.df("1352-9"), 1u);
}

TEST(Fit, OrderInsensitive) {
    auto shuffled = kCorpus;
    std::reverse(shuffled.begin(), shuffled.end());
    EXPECT_EQ(LexicalModel::fit(kCorpus).document_frequencies(), LexicalModel::fit(shuffled).document_frequencies());
}

TEST(Fit, EmptyCorpusAndBadParamsRejected) {
    EXPECT_THROW(LexicalModel::fit(std::vector<std::string>{}), ValidationError);
    EXPECT_THROW(LexicalModel::fit(kCorpus, {0.0, 0.75}), ValidationError);
    EXPECT_THROW(LexicalModel::fit(kCorpus, {1.2, 1.5}), ValidationError);
}

TEST(TfidfCosine, IdentityAndDisjoint) {
    const auto m = LexicalModel::fit(kCorpus);
    EXPECT_NEAR(tfidf_cosine(m, "le bail est resilie", "le bail est resilie"), 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(tfidf_cosine(m, "bail loyer", "caution dette"), 0.0);
    EXPECT_DOUBLE_EQ(tfidf_cosine(m, "zzz", "zzz"), 0.0);
}

TEST(TfidfCosine, ThreeTermHandComputation) {
    const auto m = LexicalModel::fit(std::vector<std::string>{"alpha beta", "alpha gamma", "alpha"});
    // idf(alpha) = ln(4/4)+1 = 1, idf(beta) = idf(gamma) = ln(4/2)+1
    const double w = std::log(2.0) + 1.0;
    const double expected = 1.0 / (1.0 + w * w);
    EXPECT_NEAR(tfidf_cosine(m, "alpha beta", "alpha gamma"), expected, 1e-12);
    EXPECT_NEAR(tfidf_cosine(m, "alpha gamma", "alpha beta"), expected, 1e-12);
}

TEST(TfidfCosineProperty, SymmetricAndBounded) {
    const auto m = LexicalModel::fit(kCorpus);
    std::mt19937_64 rng(1);
    std::vector<std::string> words;
    for (const auto& d : kCorpus) {
        for (const auto& t : ascii_tokens(d)) words.push_back(t);
    }
    words.push_back("inconnu");
    auto random_text = [&] {
        std::string s;
        const auto n = rng() % 12;
        for (std::size_t i = 0; i < n; ++i) s += words[rng() % words.size()] + " ";
        return s;
    };
    for (int i = 0; i < 500; ++i) {
        const auto a = random_text();
        const auto b = random_text();
        const double ab = tfidf_cosine(m, a, b);
        EXPECT_DOUBLE_EQ(ab, tfidf_cosine(m, b, a));
        EXPECT_GE(ab, 0.0);
        EXPECT_LE(ab, 1.0);
    }
}

TEST(Bm25, NoOverlapIsZero) {
    const auto m = LexicalModel::fit(kCorpus);
    EXPECT_DOUBLE_EQ(bm25(m, "caution dette", "le bail est resilie"), 0.0);
}

TEST(Bm25, MonotoneInTermFrequency) {
    const auto m = LexicalModel::fit(kCorpus);
    EXPECT_GE(bm25(m, "bail", "bail bail juge"), bm25(m, "bail", "bail loyer juge"));
}

TEST(Bm25, MatchesOkapiFormula) {
    const auto m = LexicalModel::fit(kCorpus);
    const std::string query = "caution preneur";
    const std::string doc = "La caution garantit la dette du preneur.";
    // N = 5; df(caution) = 2, df(preneur) = 2. avgdl from the corpus token counts.
    double total = 0;
    for (const auto& d : kCorpus) total += static_cast<double>(ascii_tokens(d).size());
    const double avgdl = total / 5.0;
    const double dl = 7.0, k1 = 1.5, b = 0.75;
    const double idf = std::log(1.0 + (5.0 - 2.0 + 0.5) / (2.0 + 0.5));
    const double per_term = idf * (1.0 * (k1 + 1.0)) / (1.0 + k1 * (1.0 - b + b * dl / avgdl));
    EXPECT_NEAR(bm25(m, query, doc), 2.0 * per_term, 1e-12);
}

TEST(Bm25Property, NonNegative) {
    const auto m = LexicalModel::fit(kCorpus);
    for (const auto& q : kCorpus) {
        for (const auto& d : kCorpus) EXPECT_GE(bm25(m, q, d), 0.0);
    }
}

TEST(MinMax, Examples) {
    EXPECT_EQ(minmax_normalize({2, 4, 6}), (std::vector<double>{0, 0.5, 1}));
    EXPECT_EQ(minmax_normalize({5, 5}), (std::vector<double>{0.5, 0.5}));
    EXPECT_EQ(minmax_normalize({3}), (std::vector<double>{0.5}));
    EXPECT_THROW(minmax_normalize({}), ValidationError);
}

TEST(DumpLoad, RoundTripPreservesScores) {
    const auto m = LexicalModel::fit(kCorpus, {1.2, 0.6});
    std::stringstream ss;
    m.dump(ss);
    const auto back = LexicalModel::load(ss);
    EXPECT_EQ(back.document_frequencies(), m.document_frequencies());
    EXPECT_EQ(back.avgdl(), m.avgdl());
    EXPECT_EQ(back.params().k1, 1.2);
    for (const auto& q : kCorpus) {
        for (const auto& d : kCorpus) {
            EXPECT_EQ(bm25(back, q, d), bm25(m, q, d));
            EXPECT_EQ(tfidf_cosine(back, q, d), tfidf_cosine(m, q, d));
        }
    }
}

TEST(DumpLoad, RejectsCorruptDumps) {
    std::istringstream wrong_header("lexcite-lexical 2\n");
    EXPECT_THROW(LexicalModel::load(wrong_header), RecordError);
    std::istringstream truncated("lexcite-lexical 1\ndocs 2\navgdl 3\nk1 1.5\nb 0.75\nterms 2\nbail\t1\n");
    EXPECT_THROW(LexicalModel::load(truncated), RecordError);
    std::istringstream df_too_big("lexcite-lexical 1\ndocs 2\navgdl 3\nk1 1.5\nb 0.75\nterms 1\nbail\t3\n");
    EXPECT_THROW(LexicalModel::load(df_too_big), RecordError);
}
