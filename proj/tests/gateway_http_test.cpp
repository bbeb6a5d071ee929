#include "lexcite/gateway_http.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <thread>

using namespace lexcite;

namespace {

// In-process scorer answering the three endpoints deterministically.
class StubServer {
  public:
    StubServer() {
        server_.Post("/v1/verdict", [this](const httplib::Request& req, httplib::Response& res) {
            if (fail_first_ > 0) {
                --fail_first_;
                res.status = 503;
                return;
            }
            if (!token_.empty() && req.get_header_value("Authorization") != "Bearer " + token_) {
                res.status = 401;
                return;
            }
            const auto j = json::parse(req.body);
            const auto prompt = j.at("prompt").get<std::string>();
            res.set_content(json{{"text", prompt.find("bonne foi") != std::string::npos ? "oui" : "non"}}.dump(),
                            "application/json");
        });
        server_.Post("/v1/rerank", [](const httplib::Request& req, httplib::Response& res) {
            const auto j = json::parse(req.body);
            json scores = json::array();
            for (const auto& p : j.at("pairs")) scores.push_back(static_cast<double>(p.at("a").get<std::string>().size()));
            res.set_content(json{{"scores", scores}}.dump(), "application/json");
        });
        server_.Post("/v1/embed", [](const httplib::Request& req, httplib::Response& res) {
            const auto j = json::parse(req.body);
            json vectors = json::array();
            for (const auto& t : j.at("texts")) vectors.push_back({static_cast<double>(t.get<std::string>().size()), 1.0});
            res.set_content(json{{"dim", 2}, {"vectors", vectors}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    HttpConfig config() const {
        HttpConfig c;
        c.base_url = "http://127.0.0.1:" + std::to_string(port_);
        c.token = token_;
        c.timeout = std::chrono::milliseconds(2000);
        return c;
    }

    std::atomic<int> fail_first_{0};
    std::string token_;

  private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

ScoreRequest verdict(const std::string& pair, const std::string& prompt) {
    ScoreRequest r;
    r.pair_id = pair;
    r.model_id = "llm";
    r.kind = ScoreKind::llm_verdict;
    r.template_id = TemplateId::zeroshot_binary;
    r.prompt = prompt;
    return r;
}

}  // namespace

TEST(HttpTransport, RecordsEqualStubOutputs) {
    StubServer server;
    server.token_ = "secret";
    HttpTransport t(server.config());
    const auto res = fetch({verdict("p1", "le contrat exige la bonne foi"), verdict("p2", "la solidarité")}, t, nullptr);
    ASSERT_TRUE(res.failures.empty());
    EXPECT_EQ(res.records[0]->raw, "oui");
    EXPECT_EQ(res.records[0]->verdict(), ParsedVerdict::yes);
    EXPECT_EQ(res.records[1]->verdict(), ParsedVerdict::no);

    ScoreRequest ce;
    ce.pair_id = "p3";
    ce.model_id = "reranker";
    ce.kind = ScoreKind::cross_encoder;
    ce.text_a = "abcd";
    ce.text_b = "x";
    const auto r = fetch({ce}, t, nullptr);
    ASSERT_TRUE(r.records[0]);
    EXPECT_DOUBLE_EQ(r.records[0]->value, 4.0);
}

TEST(HttpTransport, RetriesServerErrors) {
    StubServer server;
    server.fail_first_ = 2;
    HttpTransport t(server.config());
    FetchOptions opts;
    opts.sleep = [](std::chrono::milliseconds) {};
    const auto res = fetch({verdict("p1", "bonne foi")}, t, nullptr, opts);
    EXPECT_TRUE(res.failures.empty());
}

TEST(HttpTransport, AuthFailureIsProtocolError) {
    StubServer server;
    server.token_ = "secret";
    auto cfg = server.config();
    cfg.token = "wrong";
    HttpTransport t(cfg);
    const auto res = fetch({verdict("p1", "x")}, t, nullptr);
    ASSERT_EQ(res.failures.size(), 1u);
    EXPECT_EQ(res.failures[0].kind, FailureKind::protocol);
}

TEST(HttpTransport, UnreachableEndpointIsNetworkFailure) {
    HttpConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";
    cfg.timeout = std::chrono::milliseconds(300);
    HttpTransport t(cfg);
    FetchOptions opts;
    opts.retry.max_attempts = 2;
    opts.sleep = [](std::chrono::milliseconds) {};
    const auto res = fetch({verdict("p1", "x")}, t, nullptr, opts);
    ASSERT_EQ(res.failures.size(), 1u);
    EXPECT_TRUE(res.failures[0].kind == FailureKind::network || res.failures[0].kind == FailureKind::timeout);
}

TEST(HttpTransport, MissingEndpointConfigRejected) {
    HttpTransport t(HttpConfig{});
    EXPECT_THROW(t.fetch(verdict("p", "x")), ValidationError);
}

TEST(HttpEmbedder, NormalisesVectors) {
    StubServer server;
    HttpEmbedder e(server.config(), "bi-encoder");
    const auto v = e.embed({"abc", ""});
    ASSERT_EQ(v.size(), 2u);
    EXPECT_NEAR(v[0][0] * v[0][0] + v[0][1] * v[0][1], 1.0, 1e-12);
    EXPECT_NEAR(v[1][1], 1.0, 1e-12);
}
