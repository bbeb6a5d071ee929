#pragma once

// Supervised ensembling over precomputed base-model probabilities: grouped
// k-fold plans, an L2 logistic-regression meta-learner, nested stacking,
// MCC threshold search, weighted averaging and reciprocal-rank fusion.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "lexcite/common.hpp"
#include "lexcite/stats.hpp"

namespace lexcite {

// ---------------------------------------------------------------------------
// Features

struct FeatureRecord {
    std::string pair_id;
    std::string model_id;
    double probability = 0.0;
};

inline std::vector<FeatureRecord> load_features(std::istream& in) {
    std::vector<FeatureRecord> out;
    for_each_line(in, [&](std::size_t line, const std::string& raw) {
        try {
            const auto j = json::parse(raw);
            FeatureRecord r{j.at("pair_id").get<std::string>(), j.at("model_id").get<std::string>(),
                            j.at("probability").get<double>()};
            if (!(r.probability >= 0.0 && r.probability <= 1.0)) throw ValidationError("probability outside [0,1]");
            out.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw RecordError(line, e.what());
        }
    });
    return out;
}

struct FeatureTable {
    std::vector<std::string> pair_ids;  // sorted
    std::vector<std::string> models;    // sorted
    Eigen::MatrixXd X;                  // rows x models
    std::vector<bool> y;

    std::size_t rows() const noexcept { return pair_ids.size(); }
};

struct FeatureReport {
    std::vector<std::string> incomplete;  // some model missing
    std::vector<std::string> unlabeled;
};

// Rows are the labelled pairs that have a probability from every model.
inline FeatureTable build_feature_table(const std::vector<FeatureRecord>& records,
                                        const std::map<std::string, bool>& labels, FeatureReport* report = nullptr) {
    std::map<std::string, std::map<std::string, double>> cells;
    std::set<std::string> models;
    for (const auto& r : records) {
        if (!(r.probability >= 0.0 && r.probability <= 1.0))
            throw ValidationError("probability outside [0,1] for " + r.pair_id + " / " + r.model_id);
        if (!cells[r.pair_id].emplace(r.model_id, r.probability).second)
            throw ValidationError("duplicate feature " + r.pair_id + " / " + r.model_id);
        models.insert(r.model_id);
    }
    FeatureTable t;
    t.models.assign(models.begin(), models.end());
    FeatureReport rep;
    std::vector<std::pair<std::string, const std::map<std::string, double>*>> kept;
    for (const auto& [pid, row] : cells) {
        auto lab = labels.find(pid);
        if (lab == labels.end()) rep.unlabeled.push_back(pid);
        else if (row.size() != models.size()) rep.incomplete.push_back(pid);
        else kept.emplace_back(pid, &row);
    }
    t.X.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(t.models.size()));
    for (std::size_t i = 0; i < kept.size(); ++i) {
        t.pair_ids.push_back(kept[i].first);
        t.y.push_back(labels.at(kept[i].first));
        for (std::size_t m = 0; m < t.models.size(); ++m)
            t.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = kept[i].second->at(t.models[m]);
    }
    if (report) *report = std::move(rep);
    return t;
}

// ---------------------------------------------------------------------------
// Grouped folds

struct FoldPlan {
    std::size_t n_folds = 0;
    std::vector<std::size_t> fold;  // aligned with the input rows

    std::vector<std::size_t> sizes() const {
        std::vector<std::size_t> s(n_folds, 0);
        for (auto f : fold) ++s[f];
        return s;
    }
};

// Groups are shuffled with the seed, then placed largest first into the
// currently smallest fold. Only the multiset of (group, size) matters, so the
// plan does not depend on row order.
inline FoldPlan group_kfold(const std::vector<std::string>& groups, std::size_t n, std::uint64_t seed = 0) {
    if (n < 2) throw ValidationError("group k-fold needs n >= 2");
    std::map<std::string, std::size_t> size_of;
    for (const auto& g : groups) ++size_of[g];
    if (size_of.size() < n)
        throw ValidationError("group k-fold: " + std::to_string(size_of.size()) + " groups for " + std::to_string(n) + " folds");
    std::vector<std::string> order;
    for (const auto& [g, _] : size_of) order.push_back(g);
    Rng rng(seed);
    seeded_shuffle(order, rng);
    std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) { return size_of[a] > size_of[b]; });
    std::vector<std::size_t> load(n, 0);
    std::map<std::string, std::size_t> fold_of;
    for (const auto& g : order) {
        const auto f = static_cast<std::size_t>(std::min_element(load.begin(), load.end()) - load.begin());
        fold_of[g] = f;
        load[f] += size_of[g];
    }
    FoldPlan plan;
    plan.n_folds = n;
    for (const auto& g : groups) plan.fold.push_back(fold_of[g]);
    return plan;
}

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticOptions {
    double l2 = 1e-3;  // on the weights only; the intercept is free
    double tol = 1e-8;  // gradient norm; much below ~1e-9 the objective no longer resolves a step
    int max_iter = 100;
};

struct MetaLearner {
    Eigen::VectorXd w;
    double b = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> loss_history;  // objective after each accepted step, starting at zero init

    double predict_one(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
        const double z = x.dot(w) + b;
        return 1.0 / (1.0 + std::exp(-z));
    }
    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const {
        Eigen::VectorXd out(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = predict_one(X.row(i));
        return out;
    }
};

namespace detail {

inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double logistic_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double b,
                                 double l2) {
    const Eigen::VectorXd z = (X * w).array() + b;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) loss += softplus(z(i)) - y(i) * z(i);
    return loss / double(X.rows()) + 0.5 * l2 * w.squaredNorm();
}

inline Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                                         double b, double l2) {
    const auto d = X.cols();
    const Eigen::VectorXd z = (X * w).array() + b;
    const Eigen::VectorXd r = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }) - y;
    Eigen::VectorXd g(d + 1);
    g.head(d) = X.transpose() * r / double(X.rows()) + l2 * w;
    g(d) = r.sum() / double(X.rows());
    return g;
}

}  // namespace detail

// Minimises mean log-loss + l2/2 * |w|^2 by Newton steps with backtracking,
// starting from zero. Deterministic for a given row order.
inline MetaLearner fit_logistic(const Eigen::MatrixXd& X, const std::vector<bool>& labels, const LogisticOptions& opt = {}) {
    const auto n = X.rows(), d = X.cols();
    if (static_cast<std::size_t>(n) != labels.size()) throw ValidationError("feature rows and labels differ");
    if (!(opt.l2 > 0.0)) throw ValidationError("l2 strength must be > 0");
    const auto pos = std::count(labels.begin(), labels.end(), true);
    if (pos == 0 || pos == n) throw ValidationError("logistic regression needs both classes");
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;

    MetaLearner m;
    m.w = Eigen::VectorXd::Zero(d);
    double f = detail::logistic_objective(X, y, m.w, m.b, opt.l2);
    m.loss_history.push_back(f);
    for (m.iterations = 0; m.iterations < opt.max_iter; ++m.iterations) {
        const Eigen::VectorXd z = (X * m.w).array() + m.b;
        const Eigen::VectorXd p = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
        const Eigen::VectorXd g = detail::logistic_gradient(X, y, m.w, m.b, opt.l2);
        if (g.norm() <= opt.tol) {
            m.converged = true;
            break;
        }
        const Eigen::VectorXd s = p.array() * (1.0 - p.array());
        Eigen::MatrixXd H(d + 1, d + 1);
        const Eigen::MatrixXd Xs = X.array().colwise() * s.array();
        H.topLeftCorner(d, d) = X.transpose() * Xs / double(n);
        H.topLeftCorner(d, d).diagonal().array() += opt.l2;
        H.topRightCorner(d, 1) = Xs.colwise().sum().transpose() / double(n);
        H.bottomLeftCorner(1, d) = H.topRightCorner(d, 1).transpose();
        H(d, d) = s.sum() / double(n) + 1e-12;  // keeps the solve defined when every p saturates
        const Eigen::VectorXd step = H.ldlt().solve(-g);
        double t = 1.0, f_new = f;
        Eigen::VectorXd w_new;
        double b_new = 0.0;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            w_new = m.w + t * step.head(d);
            b_new = m.b + t * step(d);
            f_new = detail::logistic_objective(X, y, w_new, b_new, opt.l2);
            if (f_new <= f + 1e-4 * t * g.dot(step)) break;
            // near the optimum the objective stops resolving the decrease;
            // accept a step that does not raise it and shrinks the gradient
            if (f_new <= f && detail::logistic_gradient(X, y, w_new, b_new, opt.l2).norm() < g.norm()) break;
        }
        if (!(f_new <= f)) break;
        m.w = w_new;
        m.b = b_new;
        f = f_new;
        m.loss_history.push_back(f);
    }
    if (!m.converged) {
        // the loop may stop on max_iter right at the optimum
        m.converged = detail::logistic_gradient(X, y, m.w, m.b, opt.l2).norm() <= opt.tol;
    }
    for (Eigen::Index i = 0; i < d; ++i)
        if (!std::isfinite(m.w(i))) throw Error("logistic regression diverged");
    return m;
}

inline json to_json(const MetaLearner& m) {
    return {{"weights", std::vector<double>(m.w.data(), m.w.data() + m.w.size())},
            {"intercept", m.b},
            {"iterations", m.iterations},
            {"converged", m.converged}};
}

// ---------------------------------------------------------------------------
// Threshold search

struct ThresholdResult {
    double threshold = 0.5;
    double mcc = 0.0;  // an undefined MCC counts as 0 during the search
    ConfusionMatrix cm;
};

// Candidates are the observed probabilities; predict yes iff p >= t. Ties go
// to the smallest threshold.
inline ThresholdResult optimize_threshold(const std::vector<double>& probs, const std::vector<bool>& labels) {
    if (probs.size() != labels.size()) throw ValidationError("probability and label lengths differ");
    const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
    if (pos == 0 || pos == labels.size()) throw ValidationError("threshold search needs both classes");
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    ConfusionMatrix cm{0, labels.size() - pos, 0, pos};
    ThresholdResult best;
    bool have = false;
    for (std::size_t i = 0; i < order.size();) {
        const double t = probs[order[i]];
        for (; i < order.size() && probs[order[i]] == t; ++i) {
            if (labels[order[i]]) --cm.fn, ++cm.tp;
            else --cm.tn, ++cm.fp;
        }
        const double score = mcc(cm).value_or(0.0);
        if (!have || score >= best.mcc) {
            best = {t, score, cm};
            have = true;
        }
    }
    return best;
}

inline std::vector<bool> apply_threshold(const std::vector<double>& probs, double t) {
    std::vector<bool> out;
    out.reserve(probs.size());
    for (double p : probs) out.push_back(p >= t);
    return out;
}

// ---------------------------------------------------------------------------
// Nested stacking

struct FitEvent {
    std::size_t outer_fold = 0;
    std::optional<std::size_t> inner_fold;  // empty for the outer model
    std::vector<std::size_t> train_rows;    // table row indices
    std::vector<std::size_t> scored_rows;
};

struct StackOptions {
    LogisticOptions lr;
    std::size_t inner_folds = 4;
    std::uint64_t seed = 0;
    std::function<void(const FitEvent&)> observer;
};

struct FoldReport {
    std::size_t fold = 0;
    std::size_t train = 0, test = 0;
    std::size_t inner_folds_used = 0;
    std::vector<std::string> inner_skipped;
    std::optional<double> inner_threshold;  // tuned on the inner out-of-fold predictions
    MetaLearner model;
};

struct StackResult {
    std::vector<double> oof;  // aligned with table rows
    std::vector<FoldReport> folds;
};

// Every row is scored by a meta-learner trained only on other outer folds.
// Inside each outer training set the rows are re-split by the same grouping
// rule; those inner models only serve to tune a per-fold threshold.
inline StackResult nested_stack(const FeatureTable& t, const std::vector<std::string>& groups, const FoldPlan& plan,
                                const StackOptions& opt = {}) {
    const std::size_t n = t.rows();
    if (groups.size() != n || plan.fold.size() != n) throw ValidationError("plan and groups must cover every row");
    // canonical row order so the result does not depend on input order
    std::vector<std::size_t> canon(n);
    std::iota(canon.begin(), canon.end(), 0);
    std::sort(canon.begin(), canon.end(), [&](std::size_t a, std::size_t b) { return t.pair_ids[a] < t.pair_ids[b]; });

    auto fit_rows = [&](const std::vector<std::size_t>& rows) {
        Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), t.X.cols());
        std::vector<bool> y;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            X.row(static_cast<Eigen::Index>(i)) = t.X.row(static_cast<Eigen::Index>(rows[i]));
            y.push_back(t.y[rows[i]]);
        }
        return fit_logistic(X, y, opt.lr);
    };
    auto single_class = [&](const std::vector<std::size_t>& rows) {
        std::size_t pos = 0;
        for (auto r : rows) pos += t.y[r];
        return pos == 0 || pos == rows.size();
    };

    StackResult res;
    res.oof.assign(n, std::nan(""));
    for (std::size_t f = 0; f < plan.n_folds; ++f) {
        std::vector<std::size_t> train, test;
        for (auto r : canon) (plan.fold[r] == f ? test : train).push_back(r);
        FoldReport rep;
        rep.fold = f;
        rep.train = train.size();
        rep.test = test.size();
        if (test.empty()) {
            res.folds.push_back(std::move(rep));
            continue;
        }
        if (single_class(train)) throw ValidationError("outer fold " + std::to_string(f) + " trains on a single class");

        std::vector<std::string> inner_groups;
        for (auto r : train) inner_groups.push_back(groups[r]);
        const std::size_t n_groups = std::set<std::string>(inner_groups.begin(), inner_groups.end()).size();
        const std::size_t k_inner = std::min(opt.inner_folds, n_groups);
        if (k_inner >= 2) {
            const auto inner = group_kfold(inner_groups, k_inner, opt.seed + 1 + f);
            std::vector<double> p_in;
            std::vector<bool> y_in;
            for (std::size_t g = 0; g < k_inner; ++g) {
                std::vector<std::size_t> itrain, itest;
                for (std::size_t i = 0; i < train.size(); ++i) (inner.fold[i] == g ? itest : itrain).push_back(train[i]);
                if (itest.empty()) continue;
                if (single_class(itrain)) {
                    rep.inner_skipped.push_back("inner fold " + std::to_string(g) + ": single class in training");
                    continue;
                }
                if (opt.observer) opt.observer({f, g, itrain, itest});
                const auto m = fit_rows(itrain);
                for (auto r : itest) {
                    p_in.push_back(m.predict_one(t.X.row(static_cast<Eigen::Index>(r))));
                    y_in.push_back(t.y[r]);
                }
                ++rep.inner_folds_used;
            }
            const auto pos = std::count(y_in.begin(), y_in.end(), true);
            if (pos > 0 && static_cast<std::size_t>(pos) < y_in.size())
                rep.inner_threshold = optimize_threshold(p_in, y_in).threshold;
        }

        if (opt.observer) opt.observer({f, std::nullopt, train, test});
        rep.model = fit_rows(train);
        for (auto r : test) res.oof[r] = rep.model.predict_one(t.X.row(static_cast<Eigen::Index>(r)));
        res.folds.push_back(std::move(rep));
    }
    return res;
}

inline json to_json(const FoldReport& r) {
    return {{"fold", r.fold},
            {"train", r.train},
            {"test", r.test},
            {"inner_folds_used", r.inner_folds_used},
            {"inner_skipped", r.inner_skipped},
            {"inner_threshold", r.inner_threshold ? json(*r.inner_threshold) : json(nullptr)},
            {"model", to_json(r.model)}};
}

// ---------------------------------------------------------------------------
// Non-learned combinations

inline std::vector<double> weighted_average(const Eigen::MatrixXd& probs, const std::vector<double>& weights) {
    if (weights.size() != static_cast<std::size_t>(probs.cols())) throw ValidationError("one weight per model is required");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw ValidationError("weights must be >= 0");
        sum += w;
    }
    if (!(sum > 0.0)) throw ValidationError("weights sum to zero");
    Eigen::VectorXd w(probs.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = weights[static_cast<std::size_t>(i)] / sum;
    const Eigen::VectorXd out = probs * w;
    return {out.data(), out.data() + out.size()};
}

// 1-based ranks by descending score, ties by id.
inline std::vector<std::size_t> ranks_desc(const std::vector<double>& scores, const std::vector<std::string>& ids) {
    if (scores.size() != ids.size()) throw ValidationError("scores and ids differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    });
    std::vector<std::size_t> rank(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = i + 1;
    return rank;
}

// Mean reciprocal rank across models: ranks[m][i] is pair i's rank under model m.
inline std::vector<double> rank_fusion(const std::vector<std::vector<std::size_t>>& ranks) {
    if (ranks.empty()) throw ValidationError("rank fusion needs at least one model");
    const std::size_t n = ranks.front().size();
    std::vector<double> out(n, 0.0);
    for (const auto& col : ranks) {
        if (col.size() != n) throw ValidationError("rank lists differ in length");
        for (std::size_t i = 0; i < n; ++i) {
            if (col[i] == 0) throw ValidationError("ranks are 1-based");
            out[i] += 1.0 / double(col[i]);
        }
    }
    for (auto& v : out) v /= double(ranks.size());
    return out;
}

}  // namespace lexcite
