#pragma once

// Unsupervised fusion of per-pair signals: LLM vote sets, the weighted
// ensemble score, and the epsilon tie-break used to order rankings.

#include <algorithm>
#include <array>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lexcite/common.hpp"
#include "lexcite/gateway.hpp"
#include "lexcite/lexical.hpp"

namespace lexcite {

using VoteVector = std::array<bool, 4>;

enum class VoteLevel { union_any = 1, inter2, inter3, inter4 };

inline std::string to_string(VoteLevel l) {
    switch (l) {
        case VoteLevel::union_any: return "union";
        case VoteLevel::inter2: return "inter2";
        case VoteLevel::inter3: return "inter3";
        case VoteLevel::inter4: return "inter4";
    }
    return "?";
}

inline VoteLevel parse_vote_level(std::string_view s) {
    if (s == "union") return VoteLevel::union_any;
    if (s == "inter2") return VoteLevel::inter2;
    if (s == "inter3") return VoteLevel::inter3;
    if (s == "inter4") return VoteLevel::inter4;
    throw ValidationError("unknown vote level '" + std::string(s) + "'");
}

inline int yes_count(const VoteVector& v) { return static_cast<int>(std::count(v.begin(), v.end(), true)); }

inline bool vote_set(const VoteVector& v, VoteLevel level) { return yes_count(v) >= static_cast<int>(level); }

struct FusionConfig {
    double llm_weight = 0.25;
    double bonus_inter2 = 0.3;
    double bonus_inter3 = 0.5;
    double bonus_inter4 = 1.0;
    bool cumulative_bonus = false;  // default: only the highest level reached pays
    double w_tfidf = 0.2;
    double w_bm25 = 0.2;
    double w_cross = 0.4;
    double epsilon = 1e-6;

    void validate() const {
        for (double w : {llm_weight, bonus_inter2, bonus_inter3, bonus_inter4, w_tfidf, w_bm25, w_cross})
            if (!(w >= 0.0)) throw ValidationError("fusion weights must be >= 0");
        if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
    }
};

inline double agreement_bonus(int yes, const FusionConfig& c) {
    if (c.cumulative_bonus)
        return (yes >= 2 ? c.bonus_inter2 : 0.0) + (yes >= 3 ? c.bonus_inter3 : 0.0) + (yes >= 4 ? c.bonus_inter4 : 0.0);
    if (yes >= 4) return c.bonus_inter4;
    if (yes == 3) return c.bonus_inter3;
    if (yes == 2) return c.bonus_inter2;
    return 0.0;
}

// Lexical and cross-encoder inputs are expected already min-max normalised.
inline double ensemble_score(const VoteVector& v, double tfidf_n, double bm25_n, double cross_n,
                             const FusionConfig& c = {}) {
    const int yes = yes_count(v);
    return c.llm_weight * yes + agreement_bonus(yes, c) + c.w_tfidf * tfidf_n + c.w_bm25 * bm25_n + c.w_cross * cross_n;
}

struct RankedItem {
    std::string pair_id;
    double score = 0.0;  // primary + epsilon * tie_break
    std::size_t rank = 0;  // 1-based
};

// Descending by primary + epsilon * tie_break, then pair_id ascending.
inline std::vector<RankedItem> rank(const std::vector<std::string>& pair_ids, const std::vector<double>& primary,
                                    const std::vector<double>& tie_break, double epsilon = 1e-6) {
    if (primary.size() != pair_ids.size() || tie_break.size() != pair_ids.size())
        throw ValidationError("rank: pair_ids, primary and tie-break lengths differ");
    std::vector<RankedItem> out(pair_ids.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!std::isfinite(primary[i]) || !std::isfinite(tie_break[i]))
            throw ValidationError("rank: non-finite score for " + pair_ids[i]);
        out[i] = {pair_ids[i], primary[i] + epsilon * tie_break[i], 0};
    }
    std::sort(out.begin(), out.end(), [](const RankedItem& a, const RankedItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.pair_id < b.pair_id;
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
    return out;
}

// The `n` models with the lowest yes rates, ties by model id.
inline std::vector<std::string> select_low_yes_models(const std::map<std::string, double>& yes_rates, std::size_t n = 4) {
    if (yes_rates.size() < n)
        throw ValidationError("need at least " + std::to_string(n) + " models, got " + std::to_string(yes_rates.size()));
    std::vector<std::pair<double, std::string>> v;
    for (const auto& [m, r] : yes_rates) {
        if (!(r >= 0.0 && r <= 1.0)) throw ValidationError("yes rate outside [0,1] for " + m);
        v.emplace_back(r, m);
    }
    std::sort(v.begin(), v.end());
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(v[i].second);
    return out;
}

// ---------------------------------------------------------------------------
// Pool-level fusion

struct FusionRow {
    std::string pair_id;
    std::array<ParsedVerdict, 4> verdicts{ParsedVerdict::no, ParsedVerdict::no, ParsedVerdict::no, ParsedVerdict::no};
    double tfidf = 0.0;  // raw; normalised over the pool here
    double bm25 = 0.0;
    double cross = 0.0;
};

struct FusionQuality {
    std::array<std::size_t, 4> unparseable{};  // per model slot, counted as no
};

inline json to_json(const FusionQuality& q, const std::vector<std::string>& models) {
    json j = json::object();
    for (std::size_t i = 0; i < 4; ++i) j[i < models.size() ? models[i] : std::to_string(i)] = q.unparseable[i];
    return {{"unparseable_as_no", j}};
}

inline VoteVector to_votes(const std::array<ParsedVerdict, 4>& v, FusionQuality* q = nullptr) {
    VoteVector out{};
    for (std::size_t i = 0; i < 4; ++i) {
        out[i] = v[i] == ParsedVerdict::yes;
        if (v[i] == ParsedVerdict::unparseable && q) ++q->unparseable[i];
    }
    return out;
}

struct Ranking {
    std::string method;
    std::vector<RankedItem> items;
};

// method: "union", "inter2", "inter3", "inter4" (membership, cross-encoder
// tie-break) or "ensemble" (weighted score, same tie-break). The cross-encoder
// is normalised once and feeds both the ensemble and the tie-break.
inline Ranking fuse(const std::vector<FusionRow>& rows, const std::string& method, const FusionConfig& cfg = {},
                    FusionQuality* quality = nullptr) {
    cfg.validate();
    if (rows.empty()) return {method, {}};
    std::vector<double> tf, bm, ce;
    std::vector<std::string> ids;
    for (const auto& r : rows) {
        ids.push_back(r.pair_id);
        tf.push_back(r.tfidf);
        bm.push_back(r.bm25);
        ce.push_back(r.cross);
    }
    const auto tf_n = minmax_normalize(tf);
    const auto bm_n = minmax_normalize(bm);
    const auto ce_n = minmax_normalize(ce);
    std::vector<double> primary(rows.size());
    const bool ensemble = method == "ensemble";
    const auto level = ensemble ? VoteLevel::union_any : parse_vote_level(method);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto votes = to_votes(rows[i].verdicts, quality);
        primary[i] = ensemble ? ensemble_score(votes, tf_n[i], bm_n[i], ce_n[i], cfg) : (vote_set(votes, level) ? 1.0 : 0.0);
    }
    return {method, rank(ids, primary, ce_n, cfg.epsilon)};
}

// fusion_inputs.jsonl: {"pair_id", "verdicts": {model: raw text}, "cross_encoder",
// optional "tfidf", "bm25", "verdict_mode"}. `models` fixes the slot order;
// empty means the four verdict keys in sorted order.
inline FusionRow fusion_row_from_json(const json& j, const std::vector<std::string>& models = {}) {
    FusionRow r;
    r.pair_id = j.at("pair_id").get<std::string>();
    const auto& v = j.at("verdicts");
    if (!v.is_object() || v.size() != 4) throw ValidationError("expected verdicts from exactly 4 models for " + r.pair_id);
    const auto mode = j.contains("verdict_mode") ? parse_verdict_mode(j["verdict_mode"].get<std::string>()) : VerdictMode::binary;
    std::vector<std::string> order = models;
    if (order.empty())
        for (const auto& [m, _] : v.items()) order.push_back(m);
    if (order.size() != 4) throw ValidationError("fusion needs exactly 4 verdict models");
    for (std::size_t i = 0; i < 4; ++i) {
        if (!v.contains(order[i])) throw ValidationError("missing verdict from " + order[i] + " for " + r.pair_id);
        r.verdicts[i] = parse_verdict(v[order[i]].get<std::string>(), mode);
    }
    r.cross = j.at("cross_encoder").get<double>();
    r.tfidf = j.value("tfidf", 0.0);
    r.bm25 = j.value("bm25", 0.0);
    return r;
}

inline std::vector<FusionRow> load_fusion_rows(std::istream& in, const std::vector<std::string>& models = {}) {
    std::vector<FusionRow> out;
    for_each_line(in, [&](std::size_t line, const std::string& raw) {
        try {
            out.push_back(fusion_row_from_json(json::parse(raw), models));
        } catch (const std::exception& e) {
            throw RecordError(line, e.what());
        }
    });
    return out;
}

inline void write_ranking(std::ostream& out, const Ranking& r) {
    for (const auto& it : r.items)
        out << json{{"pair_id", it.pair_id}, {"method", r.method}, {"score", it.score}, {"rank", it.rank}}.dump() << '\n';
}

}  // namespace lexcite
