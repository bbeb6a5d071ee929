#pragma once

// Annotation labels: vocabulary, event log replay (latest label per pair and
// annotator wins), gold resolution with adjudication, and agreement summaries.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lexcite/common.hpp"
#include "lexcite/stats.hpp"

namespace lexcite {

enum class Label { yes, no, no_facts, no_special_regime, unsure, review };

inline std::string to_string(Label l) {
    switch (l) {
        case Label::yes: return "yes";
        case Label::no: return "no";
        case Label::no_facts: return "no_facts";
        case Label::no_special_regime: return "no_special_regime";
        case Label::unsure: return "unsure";
        case Label::review: return "review";
    }
    return "?";
}

inline Label parse_label(std::string_view s) {
    for (auto l : {Label::yes, Label::no, Label::no_facts, Label::no_special_regime, Label::unsure, Label::review})
        if (s == to_string(l)) return l;
    throw ValidationError("unknown label '" + std::string(s) + "'");
}

// yes -> true, the three "no" variants -> false, unsure / review -> no
// binary value (kept out of gold until replaced).
inline std::optional<bool> collapse(Label l) {
    switch (l) {
        case Label::yes: return true;
        case Label::no:
        case Label::no_facts:
        case Label::no_special_regime: return false;
        default: return std::nullopt;
    }
}

struct LabelEvent {
    std::string pair_id;
    std::string annotator_id;
    Label label = Label::no;
    std::int64_t ts = 0;
    friend bool operator==(const LabelEvent&, const LabelEvent&) = default;
};

inline json to_json(const LabelEvent& e) {
    return {{"pair_id", e.pair_id}, {"annotator_id", e.annotator_id}, {"label", to_string(e.label)}, {"ts", e.ts}};
}

inline LabelEvent label_event_from_json(const json& j) {
    LabelEvent e;
    e.pair_id = j.at("pair_id").get<std::string>();
    e.annotator_id = j.at("annotator_id").get<std::string>();
    e.label = parse_label(j.at("label").get<std::string>());
    e.ts = j.at("ts").get<std::int64_t>();
    if (e.pair_id.empty() || e.annotator_id.empty()) throw ValidationError("label event needs pair_id and annotator_id");
    return e;
}

inline std::vector<LabelEvent> load_label_events(std::istream& in) {
    std::vector<LabelEvent> out;
    for_each_line(in, [&](std::size_t line, const std::string& raw) {
        try {
            out.push_back(label_event_from_json(json::parse(raw)));
        } catch (const std::exception& e) {
            throw RecordError(line, e.what());
        }
    });
    return out;
}

// Latest label per (pair, annotator). Among equal timestamps the event applied
// later wins, so replaying a log in order is deterministic.
class LabelState {
  public:
    void apply(const LabelEvent& e) {
        auto& slot = labels_[e.pair_id][e.annotator_id];
        if (!slot || e.ts >= slot->ts) slot = e;
    }

    static LabelState replay(const std::vector<LabelEvent>& events) {
        LabelState s;
        for (const auto& e : events) s.apply(e);
        return s;
    }

    std::optional<Label> get(const std::string& pair_id, const std::string& annotator) const {
        auto it = labels_.find(pair_id);
        if (it == labels_.end()) return std::nullopt;
        auto jt = it->second.find(annotator);
        if (jt == it->second.end()) return std::nullopt;
        return jt->second->label;
    }

    std::map<std::string, LabelEvent> for_pair(const std::string& pair_id) const {
        std::map<std::string, LabelEvent> out;
        auto it = labels_.find(pair_id);
        if (it != labels_.end())
            for (const auto& [a, e] : it->second) out.emplace(a, *e);
        return out;
    }

    std::vector<std::string> pair_ids() const {
        std::vector<std::string> out;
        for (const auto& [p, _] : labels_) out.push_back(p);
        return out;
    }

    // Flattened latest records, ordered by pair then annotator.
    std::vector<LabelEvent> records() const {
        std::vector<LabelEvent> out;
        for (const auto& [p, m] : labels_)
            for (const auto& [a, e] : m) out.push_back(*e);
        return out;
    }

    friend bool operator==(const LabelState&, const LabelState&) = default;

  private:
    std::map<std::string, std::map<std::string, std::optional<LabelEvent>>> labels_;
};

// ---------------------------------------------------------------------------
// Gold

struct GoldLabel {
    bool yes = false;
    bool agree = true;
};

// A3 must be present exactly when the collapsed A1 and A2 labels differ.
inline GoldLabel resolve_gold(Label a1, Label a2, std::optional<Label> a3) {
    const auto c1 = collapse(a1), c2 = collapse(a2);
    if (!c1 || !c2) throw ValidationError("first-round labels must be yes or a no variant");
    if (*c1 == *c2) {
        if (a3) throw ValidationError("adjudication present although A1 and A2 agree");
        return {*c1, true};
    }
    if (!a3) throw ValidationError("disagreement without adjudication");
    const auto c3 = collapse(*a3);
    if (!c3) throw ValidationError("adjudication must be yes or a no variant");
    return {*c3, false};
}

struct AnnotatorRoles {
    std::string first = "A1", second = "A2", adjudicator = "A3";
};

enum class PairStatus { gold, missing_first_round, pending_first_round, needs_adjudication, pending_adjudication };

inline std::string to_string(PairStatus s) {
    switch (s) {
        case PairStatus::gold: return "gold";
        case PairStatus::missing_first_round: return "missing_first_round";
        case PairStatus::pending_first_round: return "pending_first_round";  // unsure / review
        case PairStatus::needs_adjudication: return "needs_adjudication";
        case PairStatus::pending_adjudication: return "pending_adjudication";
    }
    return "?";
}

struct PairResolution {
    PairStatus status = PairStatus::missing_first_round;
    std::optional<GoldLabel> gold;
    std::optional<bool> agree;  // known once both first-round labels are binary
};

inline PairResolution resolve_pair(const LabelState& s, const std::string& pair_id, const AnnotatorRoles& roles = {}) {
    PairResolution r;
    const auto a1 = s.get(pair_id, roles.first), a2 = s.get(pair_id, roles.second);
    if (!a1 || !a2) return r;
    const auto c1 = collapse(*a1), c2 = collapse(*a2);
    if (!c1 || !c2) {
        r.status = PairStatus::pending_first_round;
        return r;
    }
    r.agree = *c1 == *c2;
    if (*r.agree) {
        r.status = PairStatus::gold;
        r.gold = GoldLabel{*c1, true};
        return r;
    }
    const auto a3 = s.get(pair_id, roles.adjudicator);
    if (!a3) {
        r.status = PairStatus::needs_adjudication;
        return r;
    }
    if (!collapse(*a3)) {
        r.status = PairStatus::pending_adjudication;
        return r;
    }
    r.status = PairStatus::gold;
    r.gold = resolve_gold(*a1, *a2, *a3);
    return r;
}

// Pairs whose collapsed A1 and A2 labels differ and that have no A3 label.
inline std::vector<std::string> adjudication_queue(const LabelState& s, const AnnotatorRoles& roles = {}) {
    std::vector<std::string> out;
    for (const auto& p : s.pair_ids())
        if (resolve_pair(s, p, roles).status == PairStatus::needs_adjudication) out.push_back(p);
    return out;
}

struct AgreementReport {
    std::size_t pairs_compared = 0;  // both first-round labels binary
    std::size_t yy = 0, yn = 0, ny = 0, nn = 0;
    std::optional<KappaResult> kappa;
    std::size_t disagreements = 0;
    // disagreement structure keyed by the adjudicator's label variant
    std::map<std::string, std::size_t> structure;
    std::size_t gold_yes = 0, gold_no = 0;
    std::size_t unresolved = 0;
};

inline AgreementReport agreement_report(const LabelState& s, const AnnotatorRoles& roles = {}) {
    AgreementReport r;
    for (const auto& p : s.pair_ids()) {
        const auto res = resolve_pair(s, p, roles);
        if (res.agree) {
            ++r.pairs_compared;
            const bool y1 = *collapse(*s.get(p, roles.first)), y2 = *collapse(*s.get(p, roles.second));
            if (y1 && y2) ++r.yy;
            else if (y1) ++r.yn;
            else if (y2) ++r.ny;
            else ++r.nn;
            if (!*res.agree) {
                ++r.disagreements;
                if (auto a3 = s.get(p, roles.adjudicator)) ++r.structure[to_string(*a3)];
            }
        }
        if (res.gold) (res.gold->yes ? r.gold_yes : r.gold_no)++;
        else ++r.unresolved;
    }
    if (r.pairs_compared > 0) r.kappa = cohen_kappa_counts(r.yy, r.yn, r.ny, r.nn);
    return r;
}

struct AnnotatorSummary {
    std::size_t labelled = 0;  // latest label is binary
    std::size_t yes = 0;
    std::size_t pending = 0;   // unsure / review
    std::optional<double> yes_rate() const { return labelled ? std::optional(double(yes) / double(labelled)) : std::nullopt; }
};

inline std::map<std::string, AnnotatorSummary> annotator_summaries(const LabelState& s) {
    std::map<std::string, AnnotatorSummary> out;
    for (const auto& e : s.records()) {
        auto& a = out[e.annotator_id];
        if (auto c = collapse(e.label)) {
            ++a.labelled;
            a.yes += *c;
        } else {
            ++a.pending;
        }
    }
    return out;
}

inline json to_json(const AnnotatorSummary& a) {
    const auto r = a.yes_rate();
    return {{"labelled", a.labelled}, {"yes", a.yes}, {"pending", a.pending}, {"yes_rate", r ? json(*r) : json("undefined")}};
}

inline json to_json(const AgreementReport& r) {
    json k = r.kappa ? to_json(*r.kappa) : json{{"observed_agreement", "undefined"}, {"kappa", "undefined"}};
    return {{"pairs_compared", r.pairs_compared},
            {"table", {{"yes_yes", r.yy}, {"yes_no", r.yn}, {"no_yes", r.ny}, {"no_no", r.nn}}},
            {"agreement", k},
            {"disagreements", r.disagreements},
            {"structure", r.structure},
            {"gold", {{"yes", r.gold_yes}, {"no", r.gold_no}}},
            {"unresolved", r.unresolved}};
}

}  // namespace lexcite
