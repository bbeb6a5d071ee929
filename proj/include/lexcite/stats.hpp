#pragma once

// Evaluation metrics and significance tests: confusion-matrix metrics, Cohen's
// kappa, ranking metrics, false positives by agreement stratum with Fisher's
// exact test, Benjamini-Hochberg, and calibration.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lexcite/common.hpp"

namespace lexcite {

using json = nlohmann::json;

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json("undefined"); }

// ---------------------------------------------------------------------------
// Classification

struct ConfusionMatrix {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    std::size_t total() const noexcept { return tp + tn + fp + fn; }
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(const std::vector<bool>& predicted, const std::vector<bool>& gold) {
    if (predicted.size() != gold.size()) throw ValidationError("prediction and gold lengths differ");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (predicted[i]) (gold[i] ? cm.tp : cm.fp)++;
        else (gold[i] ? cm.fn : cm.tn)++;
    }
    return cm;
}

struct Metrics {
    std::optional<double> precision, recall, f1, accuracy, mcc, balanced_accuracy;
};

inline std::optional<double> safe_div(double a, double b) {
    if (b == 0.0) return std::nullopt;
    return a / b;
}

inline std::optional<double> mcc(const ConfusionMatrix& cm) {
    const double tp = double(cm.tp), tn = double(cm.tn), fp = double(cm.fp), fn = double(cm.fn);
    const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (den == 0.0) return std::nullopt;
    return (tp * tn - fp * fn) / std::sqrt(den);
}

inline Metrics classification_metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw ValidationError("empty confusion matrix");
    Metrics m;
    const double tp = double(cm.tp), tn = double(cm.tn), fp = double(cm.fp), fn = double(cm.fn);
    m.precision = safe_div(tp, tp + fp);
    m.recall = safe_div(tp, tp + fn);
    m.f1 = safe_div(2 * tp, 2 * tp + fp + fn);
    m.accuracy = (tp + tn) / double(cm.total());
    m.mcc = mcc(cm);
    const auto spec = safe_div(tn, tn + fp);
    if (m.recall && spec) m.balanced_accuracy = (*m.recall + *spec) / 2.0;
    return m;
}

inline json to_json(const ConfusionMatrix& cm) { return {{"tp", cm.tp}, {"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}}; }

inline json to_json(const Metrics& m) {
    return {{"precision", opt_json(m.precision)}, {"recall", opt_json(m.recall)},
            {"f1", opt_json(m.f1)},               {"accuracy", opt_json(m.accuracy)},
            {"mcc", opt_json(m.mcc)},             {"balanced_accuracy", opt_json(m.balanced_accuracy)}};
}

// ---------------------------------------------------------------------------
// Agreement

struct KappaResult {
    double observed = 0.0;
    double expected = 0.0;
    std::optional<double> kappa;  // undefined when expected agreement is 1
};

inline KappaResult cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.size() != b.size() || a.empty()) throw ValidationError("kappa needs two label lists of the same non-zero length");
    std::map<std::string, double> ma, mb;
    double agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma[a[i]] += 1;
        mb[b[i]] += 1;
        agree += a[i] == b[i];
    }
    const double n = double(a.size());
    KappaResult r;
    r.observed = agree / n;
    for (const auto& [k, v] : ma) {
        auto it = mb.find(k);
        if (it != mb.end()) r.expected += (v / n) * (it->second / n);
    }
    if (r.expected < 1.0) r.kappa = (r.observed - r.expected) / (1.0 - r.expected);
    return r;
}

// Binary 2x2 form: yy = both yes, yn = first yes / second no, ...
inline KappaResult cohen_kappa_counts(std::size_t yy, std::size_t yn, std::size_t ny, std::size_t nn) {
    const double n = double(yy + yn + ny + nn);
    if (n == 0) throw ValidationError("kappa on an empty table");
    KappaResult r;
    r.observed = double(yy + nn) / n;
    r.expected = (double(yy + yn) / n) * (double(yy + ny) / n) + (double(ny + nn) / n) * (double(yn + nn) / n);
    if (r.expected < 1.0) r.kappa = (r.observed - r.expected) / (1.0 - r.expected);
    return r;
}

inline json to_json(const KappaResult& k) {
    return {{"observed_agreement", k.observed}, {"expected_agreement", k.expected}, {"kappa", opt_json(k.kappa)}};
}

// ---------------------------------------------------------------------------
// Ranking

// Mean over positives of precision at each positive's rank.
inline std::optional<double> average_precision(const std::vector<bool>& ranked) {
    double hits = 0, sum = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (!ranked[i]) continue;
        hits += 1;
        sum += hits / double(i + 1);
    }
    if (hits == 0) return std::nullopt;
    return sum / hits;
}

struct CutoffEval {
    std::size_t k = 0, tp = 0, fp = 0;
    double precision = 0, recall = 0;
    std::optional<double> fp_reduction;  // vs a random ranking: 1 - FP@k / (k * negative rate)
};

struct RankedEval {
    std::optional<double> ap;
    std::size_t positives = 0, negatives = 0;
    std::vector<CutoffEval> cutoffs;
};

inline RankedEval precision_recall_at_k(const std::vector<bool>& ranked, const std::vector<std::size_t>& ks) {
    RankedEval r;
    r.ap = average_precision(ranked);
    r.positives = static_cast<std::size_t>(std::count(ranked.begin(), ranked.end(), true));
    r.negatives = ranked.size() - r.positives;
    const double neg_rate = ranked.empty() ? 0.0 : double(r.negatives) / double(ranked.size());
    for (auto k : ks) {
        if (k == 0 || k > ranked.size())
            throw ValidationError("cutoff " + std::to_string(k) + " outside 1.." + std::to_string(ranked.size()));
        CutoffEval c;
        c.k = k;
        c.tp = static_cast<std::size_t>(std::count(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), true));
        c.fp = k - c.tp;
        c.precision = double(c.tp) / double(k);
        c.recall = r.positives ? double(c.tp) / double(r.positives) : 0.0;
        if (neg_rate > 0) c.fp_reduction = 1.0 - double(c.fp) / (double(k) * neg_rate);
        r.cutoffs.push_back(c);
    }
    return r;
}

inline json to_json(const RankedEval& r) {
    json cs = json::array();
    for (const auto& c : r.cutoffs)
        cs.push_back({{"k", c.k}, {"tp", c.tp}, {"fp", c.fp}, {"precision", c.precision}, {"recall", c.recall},
                      {"fp_reduction", opt_json(c.fp_reduction)}});
    return {{"ap", opt_json(r.ap)}, {"positives", r.positives}, {"negatives", r.negatives}, {"cutoffs", cs}};
}

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}
}  // namespace detail

// Mean AP of uniformly random orderings of `labels`. Each permutation has its
// own seed, so the result does not depend on `jobs`.
inline double random_average_precision(const std::vector<bool>& labels, std::size_t iterations = 10000,
                                       std::uint64_t seed = 0, std::size_t jobs = 0) {
    if (std::find(labels.begin(), labels.end(), true) == labels.end())
        throw ValidationError("random AP needs at least one positive");
    std::vector<double> aps(iterations);
    parallel_for(iterations, jobs, [&](std::size_t i) {
        Rng rng(detail::splitmix64(seed ^ detail::splitmix64(i)));
        auto v = labels;
        seeded_shuffle(v, rng);
        aps[i] = *average_precision(v);
    });
    return std::accumulate(aps.begin(), aps.end(), 0.0) / double(std::max<std::size_t>(1, iterations));
}

// ---------------------------------------------------------------------------
// False positives by agreement

// Two-sided Fisher exact test on [[a, b], [c, d]]: sum of the probabilities
// of all tables with the same margins that are no more likely than observed.
inline double fisher_exact_two_sided(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    const std::size_t r1 = a + b, r2 = c + d, c1 = a + c, n = a + b + c + d;
    if (n == 0) throw ValidationError("Fisher test on an empty table");
    auto lchoose = [](double n_, double k_) { return std::lgamma(n_ + 1) - std::lgamma(k_ + 1) - std::lgamma(n_ - k_ + 1); };
    const double denom = lchoose(double(n), double(c1));
    auto prob = [&](std::size_t x) {
        return std::exp(lchoose(double(r1), double(x)) + lchoose(double(r2), double(c1 - x)) - denom);
    };
    const std::size_t lo = c1 > r2 ? c1 - r2 : 0, hi = std::min(r1, c1);
    const double p_obs = prob(a);
    double p = 0;
    for (std::size_t x = lo; x <= hi; ++x) {
        const double px = prob(x);
        if (px <= p_obs * (1.0 + 1e-7)) p += px;
    }
    return std::min(1.0, p);
}

struct SignificanceResult {
    std::size_t fp_agree = 0, n_agree = 0, fp_disagree = 0, n_disagree = 0;
    double fpr_agree = 0, fpr_disagree = 0;
    double odds_ratio = 0;
    bool continuity_corrected = false;
    double p_value = 1;
    std::optional<double> q_value;
    std::optional<bool> reject;
};

// Counts are false positives and gold negatives per stratum.
inline SignificanceResult fp_by_agreement_counts(std::size_t fp_a, std::size_t n_a, std::size_t fp_d, std::size_t n_d) {
    if (n_a == 0 || n_d == 0) throw ValidationError("both strata need gold negatives");
    if (fp_a > n_a || fp_d > n_d) throw ValidationError("more false positives than gold negatives");
    SignificanceResult r;
    r.fp_agree = fp_a, r.n_agree = n_a, r.fp_disagree = fp_d, r.n_disagree = n_d;
    r.fpr_agree = double(fp_a) / double(n_a);
    r.fpr_disagree = double(fp_d) / double(n_d);
    double fa = double(fp_a), ta = double(n_a - fp_a), fd = double(fp_d), td = double(n_d - fp_d);
    if (fa == 0 || ta == 0 || fd == 0 || td == 0) {
        fa += 0.5, ta += 0.5, fd += 0.5, td += 0.5;
        r.continuity_corrected = true;
    }
    r.odds_ratio = (fd * ta) / (fa * td);
    r.p_value = fisher_exact_two_sided(fp_d, n_d - fp_d, fp_a, n_a - fp_a);
    return r;
}

inline SignificanceResult fp_by_agreement(const std::vector<bool>& predicted, const std::vector<bool>& gold,
                                          const std::vector<bool>& agree) {
    if (predicted.size() != gold.size() || agree.size() != gold.size())
        throw ValidationError("prediction, gold and agreement lengths differ");
    std::size_t fp_a = 0, n_a = 0, fp_d = 0, n_d = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i]) continue;
        (agree[i] ? n_a : n_d)++;
        if (predicted[i]) (agree[i] ? fp_a : fp_d)++;
    }
    return fp_by_agreement_counts(fp_a, n_a, fp_d, n_d);
}

inline json to_json(const SignificanceResult& s) {
    json j = {{"fp_agree", s.fp_agree},       {"n_agree", s.n_agree},     {"fp_disagree", s.fp_disagree},
              {"n_disagree", s.n_disagree},   {"fpr_agree", s.fpr_agree}, {"fpr_disagree", s.fpr_disagree},
              {"odds_ratio", s.odds_ratio},   {"continuity_corrected", s.continuity_corrected},
              {"p_value", s.p_value}};
    if (s.q_value) j["q_value"] = *s.q_value;
    if (s.reject) j["reject"] = *s.reject;
    return j;
}

struct FdrResult {
    std::vector<double> q;
    std::vector<bool> reject;
};

// Benjamini-Hochberg step-up. q-values are made monotone from the largest p down.
inline FdrResult bh_fdr(const std::vector<double>& p, double alpha = 0.05) {
    const std::size_t m = p.size();
    for (double x : p)
        if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("p-value outside [0,1]");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    FdrResult r{std::vector<double>(m), std::vector<bool>(m, false)};
    double running = 1.0;
    for (std::size_t i = m; i-- > 0;) {
        const double q = p[order[i]] * double(m) / double(i + 1);
        running = std::min(running, q);
        r.q[order[i]] = std::clamp(running, p[order[i]], 1.0);  // p * m / rank can round below p
    }
    std::size_t cut = 0;
    for (std::size_t i = 0; i < m; ++i)
        if (p[order[i]] <= double(i + 1) / double(m) * alpha) cut = i + 1;
    for (std::size_t i = 0; i < cut; ++i) r.reject[order[i]] = true;
    return r;
}

inline json to_json(const FdrResult& r) {
    std::size_t n = 0;
    for (bool b : r.reject) n += b;
    return {{"q", r.q}, {"reject", r.reject}, {"rejections", n}};
}

// ---------------------------------------------------------------------------
// Calibration

struct CalibrationBin {
    double lo = 0, hi = 0;
    std::size_t count = 0, positives = 0;
    std::optional<double> mean_confidence, actual_rate;
    std::optional<double> gap;           // actual - mean confidence
    std::optional<double> gap_midpoint;  // actual - bin midpoint
};

struct CalibrationReport {
    std::vector<CalibrationBin> bins;
    std::size_t total = 0;         // samples that fell in some bin
    std::size_t out_of_range = 0;  // below the first edge or above the last
    std::optional<double> ece;
};

// Bins are [lo, hi), the last one closed. Empty bins stay in the report with
// count 0 and do not contribute to ECE.
inline CalibrationReport calibration(const std::vector<double>& probs, const std::vector<bool>& outcomes,
                                     const std::vector<double>& edges) {
    if (probs.size() != outcomes.size()) throw ValidationError("probability and outcome lengths differ");
    if (edges.size() < 2) throw ValidationError("calibration needs at least two bin edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) throw ValidationError("bin edges must be strictly increasing");
    const std::size_t nb = edges.size() - 1;
    std::vector<double> conf_sum(nb, 0.0);
    CalibrationReport r;
    r.bins.resize(nb);
    for (std::size_t b = 0; b < nb; ++b) r.bins[b].lo = edges[b], r.bins[b].hi = edges[b + 1];
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = probs[i];
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("probability outside [0,1]");
        if (p < edges.front() || p > edges.back()) {
            ++r.out_of_range;
            continue;
        }
        std::size_t b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), p) - edges.begin());
        b = std::min(b, nb) - 1;
        ++r.bins[b].count;
        r.bins[b].positives += outcomes[i];
        conf_sum[b] += p;
        ++r.total;
    }
    double ece = 0;
    for (std::size_t b = 0; b < nb; ++b) {
        auto& bin = r.bins[b];
        if (bin.count == 0) continue;
        bin.mean_confidence = conf_sum[b] / double(bin.count);
        bin.actual_rate = double(bin.positives) / double(bin.count);
        bin.gap = *bin.actual_rate - *bin.mean_confidence;
        bin.gap_midpoint = *bin.actual_rate - (bin.lo + bin.hi) / 2.0;
        ece += double(bin.count) * std::abs(*bin.gap);
    }
    if (r.total > 0) r.ece = ece / double(r.total);
    return r;
}

inline json to_json(const CalibrationReport& r) {
    json bins = json::array();
    for (const auto& b : r.bins)
        bins.push_back({{"lo", b.lo},
                        {"hi", b.hi},
                        {"count", b.count},
                        {"mean_confidence", opt_json(b.mean_confidence)},
                        {"actual_rate", opt_json(b.actual_rate)},
                        {"gap", opt_json(b.gap)},
                        {"gap_midpoint", opt_json(b.gap_midpoint)}});
    return {{"bins", bins}, {"total", r.total}, {"out_of_range", r.out_of_range}, {"ece", opt_json(r.ece)}};
}

}  // namespace lexcite
