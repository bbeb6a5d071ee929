#pragma once

// Run configuration for the batch tools. Precedence, strongest first:
// command-line flags (applied by the caller), LEXCITE_* environment
// variables, the JSON config file, built-in defaults.

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>

#include <json.hpp>

#include "lexcite/common.hpp"
#include "lexcite/fusion.hpp"
#include "lexcite/vector_index.hpp"

namespace lexcite {

struct RunPaths {
    std::string decisions, articles, renumbering, prompts, embeddings, scores, out_dir;
};

struct RunConfig {
    RunPaths paths;
    double tfidf_pos = 0.15;
    double tfidf_neg = 0.05;
    double tau = kDefaultTau;
    std::size_t k = 5;
    FusionConfig fusion;
    std::uint64_t seed = 0;
    std::size_t jobs = 0;  // 0 = hardware concurrency

    void validate() const {
        for (double t : {tfidf_pos, tfidf_neg, tau})
            if (!(t >= 0.0)) throw ValidationError("thresholds must be >= 0");
        if (k == 0) throw ValidationError("k must be >= 1");
        fusion.validate();
    }
};

namespace detail {

template <typename T>
void take(const json& obj, const char* key, T& dst) {
    if (!obj.contains(key)) return;
    try {
        dst = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config key '") + key + "': " + e.what());
    }
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
    for (const auto& [k, _] : obj.items()) {
        bool ok = false;
        for (const char* n : known) ok = ok || k == n;
        if (!ok) throw ValidationError("unknown config key '" + where + k + "'");
    }
}

inline double parse_env_double(const char* name, const char* v) {
    char* end = nullptr;
    const double d = std::strtod(v, &end);
    if (end == v || *end != '\0') throw ValidationError(std::string(name) + " is not a number: " + v);
    return d;
}

inline std::uint64_t parse_env_uint(const char* name, const char* v) {
    char* end = nullptr;
    const auto u = std::strtoull(v, &end, 10);
    if (end == v || *end != '\0' || *v == '-') throw ValidationError(std::string(name) + " is not a non-negative integer: " + v);
    return u;
}

}  // namespace detail

inline void apply_config_json(RunConfig& c, const json& j) {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    detail::reject_unknown(j, {"paths", "thresholds", "k", "fusion", "seed", "jobs"}, "");
    if (j.contains("paths")) {
        const auto& p = j["paths"];
        detail::reject_unknown(p, {"decisions", "articles", "renumbering", "prompts", "embeddings", "scores", "out_dir"}, "paths.");
        detail::take(p, "decisions", c.paths.decisions);
        detail::take(p, "articles", c.paths.articles);
        detail::take(p, "renumbering", c.paths.renumbering);
        detail::take(p, "prompts", c.paths.prompts);
        detail::take(p, "embeddings", c.paths.embeddings);
        detail::take(p, "scores", c.paths.scores);
        detail::take(p, "out_dir", c.paths.out_dir);
    }
    if (j.contains("thresholds")) {
        const auto& t = j["thresholds"];
        detail::reject_unknown(t, {"tfidf_pos", "tfidf_neg", "tau"}, "thresholds.");
        detail::take(t, "tfidf_pos", c.tfidf_pos);
        detail::take(t, "tfidf_neg", c.tfidf_neg);
        detail::take(t, "tau", c.tau);
    }
    if (j.contains("fusion")) {
        const auto& f = j["fusion"];
        detail::reject_unknown(f, {"llm_weight", "bonus_inter2", "bonus_inter3", "bonus_inter4", "cumulative_bonus", "w_tfidf",
                                   "w_bm25", "w_cross", "epsilon"},
                               "fusion.");
        detail::take(f, "llm_weight", c.fusion.llm_weight);
        detail::take(f, "bonus_inter2", c.fusion.bonus_inter2);
        detail::take(f, "bonus_inter3", c.fusion.bonus_inter3);
        detail::take(f, "bonus_inter4", c.fusion.bonus_inter4);
        detail::take(f, "cumulative_bonus", c.fusion.cumulative_bonus);
        detail::take(f, "w_tfidf", c.fusion.w_tfidf);
        detail::take(f, "w_bm25", c.fusion.w_bm25);
        detail::take(f, "w_cross", c.fusion.w_cross);
        detail::take(f, "epsilon", c.fusion.epsilon);
    }
    detail::take(j, "k", c.k);
    detail::take(j, "seed", c.seed);
    detail::take(j, "jobs", c.jobs);
}

using EnvLookup = std::function<const char*(const char*)>;

inline void apply_env(RunConfig& c, const EnvLookup& env) {
    auto str = [&](const char* name, std::string& dst) {
        if (const char* v = env(name)) dst = v;
    };
    auto dbl = [&](const char* name, double& dst) {
        if (const char* v = env(name)) dst = detail::parse_env_double(name, v);
    };
    str("LEXCITE_DECISIONS", c.paths.decisions);
    str("LEXCITE_ARTICLES", c.paths.articles);
    str("LEXCITE_RENUMBERING", c.paths.renumbering);
    str("LEXCITE_PROMPTS", c.paths.prompts);
    str("LEXCITE_EMBEDDINGS", c.paths.embeddings);
    str("LEXCITE_SCORES", c.paths.scores);
    str("LEXCITE_OUT_DIR", c.paths.out_dir);
    dbl("LEXCITE_TFIDF_POS", c.tfidf_pos);
    dbl("LEXCITE_TFIDF_NEG", c.tfidf_neg);
    dbl("LEXCITE_TAU", c.tau);
    if (const char* v = env("LEXCITE_K")) c.k = detail::parse_env_uint("LEXCITE_K", v);
    if (const char* v = env("LEXCITE_SEED")) c.seed = detail::parse_env_uint("LEXCITE_SEED", v);
    if (const char* v = env("LEXCITE_JOBS")) c.jobs = detail::parse_env_uint("LEXCITE_JOBS", v);
}

// Defaults, then the file (if any), then the environment. Flags come last
// and are the caller's business.
inline RunConfig load_run_config(const std::string& config_path = {}, const EnvLookup& env = [](const char* n) {
    return static_cast<const char*>(std::getenv(n));
}) {
    RunConfig c;
    if (!config_path.empty()) {
        auto in = open_input(config_path);
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ValidationError(config_path + ": " + e.what());
        }
        apply_config_json(c, j);
    }
    apply_env(c, env);
    c.validate();
    return c;
}

inline json to_json(const RunConfig& c) {
    const auto& f = c.fusion;
    return {{"paths",
             {{"decisions", c.paths.decisions},
              {"articles", c.paths.articles},
              {"renumbering", c.paths.renumbering},
              {"prompts", c.paths.prompts},
              {"embeddings", c.paths.embeddings},
              {"scores", c.paths.scores},
              {"out_dir", c.paths.out_dir}}},
            {"thresholds", {{"tfidf_pos", c.tfidf_pos}, {"tfidf_neg", c.tfidf_neg}, {"tau", c.tau}}},
            {"k", c.k},
            {"fusion",
             {{"llm_weight", f.llm_weight},
              {"bonus_inter2", f.bonus_inter2},
              {"bonus_inter3", f.bonus_inter3},
              {"bonus_inter4", f.bonus_inter4},
              {"cumulative_bonus", f.cumulative_bonus},
              {"w_tfidf", f.w_tfidf},
              {"w_bm25", f.w_bm25},
              {"w_cross", f.w_cross},
              {"epsilon", f.epsilon}}},
            {"seed", c.seed},
            {"jobs", c.jobs}};
}

}  // namespace lexcite
