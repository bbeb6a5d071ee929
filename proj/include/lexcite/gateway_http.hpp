#pragma once

// HTTP scorer client. Protocol (JSON bodies, bearer token when set):
//   POST /v1/verdict {model_id, prompt}           -> {text}
//   POST /v1/rerank  {model_id, pairs:[{a, b}]}   -> {scores:[...]}
//   POST /v1/embed   {model_id, texts:[...]}      -> {dim, vectors:[[...]]}
// Endpoint and token default to LEXCITE_SCORER_URL / LEXCITE_SCORER_TOKEN.

#include <chrono>
#include <cstdlib>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "lexcite/gateway.hpp"

namespace lexcite {

struct HttpConfig {
    std::string base_url;  // "http://host:port"
    std::string token;
    std::chrono::milliseconds timeout{30000};

    static HttpConfig from_env() {
        HttpConfig c;
        if (const char* u = std::getenv("LEXCITE_SCORER_URL")) c.base_url = u;
        if (const char* t = std::getenv("LEXCITE_SCORER_TOKEN")) c.token = t;
        return c;
    }
};

namespace detail {

inline json http_post(const HttpConfig& cfg, const std::string& path, const json& body) {
    if (cfg.base_url.empty()) throw ValidationError("scorer endpoint not configured (LEXCITE_SCORER_URL)");
    httplib::Client cli(cfg.base_url);
    const auto secs = cfg.timeout.count() / 1000;
    const auto usecs = (cfg.timeout.count() % 1000) * 1000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!cfg.token.empty()) headers.emplace("Authorization", "Bearer " + cfg.token);
    auto res = cli.Post(path, headers, body.dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        const bool timeout = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                             err == httplib::Error::Write;
        throw TransportError(timeout ? FailureKind::timeout : FailureKind::network,
                             path + ": " + httplib::to_string(err), true);
    }
    if (res->status == 429 || res->status >= 500)
        throw TransportError(FailureKind::network, path + ": HTTP " + std::to_string(res->status), true);
    if (res->status != 200)
        throw TransportError(FailureKind::protocol, path + ": HTTP " + std::to_string(res->status), false);
    try {
        return json::parse(res->body);
    } catch (const json::exception& e) {
        throw TransportError(FailureKind::protocol, path + ": malformed response: " + e.what(), false);
    }
}

}  // namespace detail

class HttpTransport : public Transport {
  public:
    explicit HttpTransport(HttpConfig cfg) : cfg_(std::move(cfg)) {}

    ScoreRecord fetch(const ScoreRequest& req) override {
        ScoreRecord r;
        r.pair_id = req.pair_id;
        r.model_id = req.model_id;
        r.kind = req.kind;
        try {
            switch (req.kind) {
                case ScoreKind::llm_verdict: {
                    const auto j = detail::http_post(cfg_, "/v1/verdict", {{"model_id", req.model_id}, {"prompt", req.prompt}});
                    r.raw = j.at("text").get<std::string>();
                    r.mode = req.template_id ? mode_for(*req.template_id) : VerdictMode::binary;
                    break;
                }
                case ScoreKind::cross_encoder: {
                    const auto j = detail::http_post(
                        cfg_, "/v1/rerank",
                        {{"model_id", req.model_id}, {"pairs", json::array({{{"a", req.text_a}, {"b", req.text_b}}})}});
                    const auto& scores = j.at("scores");
                    if (scores.size() != 1) throw TransportError(FailureKind::protocol, "rerank: expected one score", false);
                    r.value = scores[0].get<double>();
                    break;
                }
                default:
                    throw TransportError(FailureKind::protocol, "http transport cannot serve " + to_string(req.kind), false);
            }
        } catch (const json::exception& e) {
            throw TransportError(FailureKind::protocol, std::string("malformed response: ") + e.what(), false);
        }
        return r;
    }

    std::string name() const override { return "http"; }

  private:
    HttpConfig cfg_;
};

class HttpEmbedder : public Embedder {
  public:
    HttpEmbedder(HttpConfig cfg, std::string model_id, RetryPolicy retry = {})
        : cfg_(std::move(cfg)), model_id_(std::move(model_id)), retry_(retry) {}

    std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
        auto delay = retry_.base_delay;
        for (int attempt = 1;; ++attempt) {
            try {
                const auto j = detail::http_post(cfg_, "/v1/embed", {{"model_id", model_id_}, {"texts", texts}});
                auto vectors = j.at("vectors").get<std::vector<Embedding>>();
                if (vectors.size() != texts.size())
                    throw TransportError(FailureKind::protocol, "embed: vector count mismatch", false);
                const auto dim = j.at("dim").get<std::size_t>();
                for (auto& v : vectors) {
                    if (v.size() != dim) throw TransportError(FailureKind::protocol, "embed: dim mismatch", false);
                    normalize_embedding(v);
                }
                return vectors;
            } catch (const TransportError& e) {
                if (!e.retryable() || attempt >= retry_.max_attempts) throw;
            } catch (const json::exception& e) {
                throw TransportError(FailureKind::protocol, std::string("embed: ") + e.what(), false);
            }
            std::this_thread::sleep_for(delay);
            delay = std::min(retry_.max_delay, std::chrono::milliseconds(static_cast<long long>(
                                                   static_cast<double>(delay.count()) * retry_.multiplier)));
        }
    }

    std::string name() const override { return "http:" + model_id_; }

  private:
    HttpConfig cfg_;
    std::string model_id_;
    RetryPolicy retry_;
};

}  // namespace lexcite
