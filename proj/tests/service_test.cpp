#include "lexcite/service.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

using namespace lexcite;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("lexcite_service_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

class Running {
  public:
    explicit Running(Service& svc) {
        svc.mount(server_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~Running() {
        server_.stop();
        thread_.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(10, 0);
        return c;
    }

  private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

// Small pool: 3 articles, 8 chunks in 4 decisions, random verdicts and scores.
ServiceData small_pool(std::uint64_t seed = 1) {
    ServiceData d;
    for (const char* n : {"1240", "1231-1", "1103"}) d.store.add_article({n, Book::III, {{"livre", "Livre III"}}, "Texte de l'article " + std::string(n)});
    std::mt19937_64 rng(seed);
    std::vector<FusionRow> rows;
    for (int dec = 0; dec < 4; ++dec) {
        const std::string id = "D" + std::to_string(dec);
        std::string motivation;
        for (std::size_t c = 0; c < 2; ++c) {
            Chunk ch;
            ch.decision_id = id;
            ch.index = c;
            ch.text = "Chunk " + std::to_string(c) + " de la decision " + id + ".";
            ch.span = {motivation.size(), motivation.size() + ch.text.size()};
            motivation += ch.text;
            d.chunks[chunk_key(id, c)] = ch;
            for (const char* art : {"1240", "1231-1"}) {
                auto p = make_pair(id, c, art, Provenance::implicit_candidate);
                FusionRow r;
                r.pair_id = p.pair_id;
                for (auto& v : r.verdicts) v = rng() % 2 ? ParsedVerdict::yes : ParsedVerdict::no;
                r.tfidf = double(rng() % 100) / 100;
                r.bm25 = double(rng() % 100) / 10;
                r.cross = double(rng() % 1000) / 1000;
                rows.push_back(r);
                d.pairs[p.pair_id] = p;
            }
        }
        d.store.add_decision({id, "CA", "2020-01-01", motivation});
    }
    d.rankings["ensemble"] = fuse(rows, "ensemble");
    d.rankings["inter2"] = fuse(rows, "inter2");
    return d;
}

std::vector<std::string> library_order(const ServiceData& d, const std::string& method, const std::string& article) {
    std::vector<std::string> out;
    for (const auto& it : d.rankings.at(method).items)
        if (d.pairs.at(it.pair_id).article_number == article) out.push_back(it.pair_id);
    return out;
}

json get_json(httplib::Client& c, const std::string& path, int expect = 200) {
    auto res = c.Get(path);
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << path << " " << res->body;
    return json::parse(res->body);
}

json post_label(httplib::Client& c, const std::string& pair, const std::string& who, const std::string& label,
                int expect = 200) {
    auto res = c.Post("/pairs/" + pair + "/labels", json{{"annotator_id", who}, {"label", label}}.dump(), "application/json");
    EXPECT_TRUE(res);
    if (!res) return {};
    EXPECT_EQ(res->status, expect) << res->body;
    return json::parse(res->body);
}

}  // namespace

TEST(Service, CandidatesFollowLibraryRanking) {
    const auto dir = fresh_dir("rank");
    LabelStore labels(dir / "labels.jsonl");
    const auto reference = small_pool();
    Service svc(small_pool(), labels);
    Running run(svc);
    auto c = run.client();
    for (const std::string method : {"ensemble", "inter2"})
        for (const std::string art : {"1240", "1231-1"}) {
            const auto j = get_json(c, "/articles/" + art + "/candidates?k=100&method=" + method);
            std::vector<std::string> got;
            for (const auto& it : j["items"]) got.push_back(it["pair_id"]);
            EXPECT_EQ(got, library_order(reference, method, art));
            EXPECT_TRUE(j["next_cursor"].is_null());
        }
    EXPECT_TRUE(get_json(c, "/articles/1240/candidates?k=0")["items"].empty());
    // article in the store but never retrieved: empty list, not an error
    EXPECT_TRUE(get_json(c, "/articles/1103/candidates")["items"].empty());
}

TEST(Service, CursorPagesConcatenateToFullList) {
    const auto dir = fresh_dir("cursor");
    LabelStore labels(dir / "labels.jsonl");
    Service svc(small_pool(), labels);
    Running run(svc);
    auto c = run.client();
    std::vector<std::string> paged;
    json cursor = 0;
    while (!cursor.is_null()) {
        const auto j = get_json(c, "/articles/1240/candidates?k=3&cursor=" + std::to_string(cursor.get<std::size_t>()));
        for (const auto& it : j["items"]) paged.push_back(it["pair_id"]);
        cursor = j["next_cursor"];
    }
    EXPECT_EQ(paged, library_order(svc.data(), "ensemble", "1240"));
}

TEST(Service, PairViewHighlightsChunkSpan) {
    const auto dir = fresh_dir("view");
    LabelStore labels(dir / "labels.jsonl");
    Service svc(small_pool(), labels);
    Running run(svc);
    auto c = run.client();
    for (const auto& [id, p] : svc.data().pairs) {
        const auto v = get_json(c, "/pairs/" + id);
        const auto& ch = svc.data().chunks.at(p.chunk_ref());
        EXPECT_EQ(v["highlight"]["start"], ch.span.start);
        EXPECT_EQ(v["highlight"]["end"], ch.span.end);
        const std::string text = v["decision"]["text"];
        EXPECT_EQ(text.substr(ch.span.start, ch.span.end - ch.span.start), ch.text);
        EXPECT_EQ(v["article"]["number"], p.article_number);
        EXPECT_EQ(v["status"], "missing_first_round");
    }
}

TEST(Service, ErrorMapping) {
    const auto dir = fresh_dir("errors");
    LabelStore labels(dir / "labels.jsonl");
    Service svc(small_pool(), labels);
    Running run(svc);
    auto c = run.client();
    const auto pid = svc.data().pairs.begin()->first;
    get_json(c, "/pairs/0000000000000000", 404);
    get_json(c, "/articles/9999/candidates", 404);
    get_json(c, "/articles/1240/candidates?method=inter4", 409);
    get_json(c, "/articles/1240/candidates?k=-1", 400);
    get_json(c, "/articles/1240/candidates?k=abc", 400);
    post_label(c, pid, "A1", "peut-etre", 400);
    post_label(c, "0000000000000000", "A1", "yes", 404);
    post_label(c, pid, "", "yes", 400);
    auto res = c.Post("/pairs/" + pid + "/labels", "{not json", "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400);
    res = c.Get("/stats/agreement", {{"Accept", "text/html"}});
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 406);
    res = c.Get("/stats/agreement", {{"Accept", "text/html, */*;q=0.1"}});
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(labels.log_lines(), 0u);
}

TEST(Service, SubmitRoundTripLatestWinsAndHeaderAnnotator) {
    const auto dir = fresh_dir("submit");
    LabelStore labels(dir / "labels.jsonl");
    Service svc(small_pool(), labels);
    Running run(svc);
    auto c = run.client();
    const auto pid = svc.data().pairs.begin()->first;
    const auto rec = post_label(c, pid, "A1", "no_facts");
    EXPECT_EQ(rec["label"], "no_facts");
    EXPECT_EQ(get_json(c, "/pairs/" + pid)["labels"]["A1"]["label"], "no_facts");
    post_label(c, pid, "A1", "yes");
    EXPECT_EQ(get_json(c, "/pairs/" + pid)["labels"]["A1"]["label"], "yes");
    auto res = c.Post("/pairs/" + pid + "/labels", httplib::Headers{{"X-Annotator-Id", "A2"}}, json{{"label", "yes"}}.dump(),
                      "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    const auto v = get_json(c, "/pairs/" + pid);
    EXPECT_EQ(v["labels"]["A2"]["label"], "yes");
    EXPECT_EQ(v["status"], "gold");
    EXPECT_EQ(v["gold"], "yes");
}

TEST(Service, ConcurrentAnnotatorsAllVisible) {
    const auto dir = fresh_dir("concurrent");
    LabelStore labels(dir / "labels.jsonl", dir / "snapshot.json", 7);
    Service svc(small_pool(), labels);
    Running run(svc);
    std::vector<std::string> ids;
    for (const auto& [id, _] : svc.data().pairs) ids.push_back(id);
    std::vector<std::thread> ts;
    for (const std::string who : {"A1", "A2"})
        ts.emplace_back([&, who] {
            auto c = run.client();
            for (const auto& id : ids) post_label(c, id, who, who == "A1" ? "yes" : "no_special_regime");
        });
    ts.emplace_back([&] {
        auto c = run.client();
        for (int i = 0; i < 20; ++i) get_json(c, "/stats/agreement");
    });
    for (auto& t : ts) t.join();
    auto c = run.client();
    for (const auto& id : ids) {
        const auto v = get_json(c, "/pairs/" + id);
        EXPECT_EQ(v["labels"]["A1"]["label"], "yes");
        EXPECT_EQ(v["labels"]["A2"]["label"], "no_special_regime");
    }
    EXPECT_EQ(get_json(c, "/queues/adjudication")["count"], ids.size());
    EXPECT_EQ(labels.log_lines(), 2 * ids.size());
}

TEST(LabelStoreReplay, ReopenedStoreEqualsLiveState) {
    const auto dir = fresh_dir("replay");
    std::mt19937_64 rng(3);
    LabelState live;
    {
        LabelStore s(dir / "labels.jsonl", dir / "snapshot.json", 13);
        for (int i = 0; i < 100; ++i)
            s.append("p" + std::to_string(rng() % 10), "A" + std::to_string(1 + rng() % 3), static_cast<Label>(rng() % 6));
        live = s.state();
        EXPECT_TRUE(fs::exists(dir / "snapshot.json"));
    }
    // from snapshot + tail
    EXPECT_EQ(LabelStore(dir / "labels.jsonl", dir / "snapshot.json").state(), live);
    // from the log alone
    EXPECT_EQ(LabelStore(dir / "labels.jsonl").state(), live);
    std::ifstream in(dir / "labels.jsonl");
    EXPECT_EQ(LabelState::replay(load_label_events(in)), live);
}

TEST(LabelStoreReplay, CorruptLogLineNamed) {
    const auto dir = fresh_dir("corrupt");
    {
        std::ofstream out(dir / "labels.jsonl");
        out << R"({"pair_id":"p","annotator_id":"A1","label":"yes","ts":1})" "\n" << "garbage\n";
    }
    try {
        LabelStore s(dir / "labels.jsonl");
        FAIL();
    } catch (const RecordError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(Service, AgreementEdgeCases) {
    const auto dir = fresh_dir("agreement");
    LabelStore labels(dir / "labels.jsonl");
    Service svc(small_pool(), labels);
    Running run(svc);
    auto c = run.client();
    auto j = get_json(c, "/stats/agreement");
    EXPECT_EQ(j["agreement"]["kappa"], "undefined");
    EXPECT_EQ(j["gold"]["yes"], 0);
    EXPECT_TRUE(get_json(c, "/queues/adjudication")["items"].empty());
    for (const auto& [id, _] : svc.data().pairs) {
        post_label(c, id, "A1", "yes");
        post_label(c, id, "A2", "yes");
    }
    j = get_json(c, "/stats/agreement");
    EXPECT_DOUBLE_EQ(j["agreement"]["observed_agreement"].get<double>(), 1.0);
    EXPECT_TRUE(j["structure"].empty());
    const auto pid = svc.data().pairs.begin()->first;
    post_label(c, pid, "A2", "no");
    const auto q = get_json(c, "/queues/adjudication");
    ASSERT_EQ(q["count"], 1);
    EXPECT_EQ(q["items"][0]["pair_id"], pid);
    EXPECT_EQ(q["items"][0]["labels"]["A1"], "yes");
}

TEST(ServiceBenchmark, QueueAndStructureThroughTheApi) {
    const auto dir = fresh_dir("benchmark");
    ServiceData d;
    std::vector<std::pair<std::string, std::string>> adjudications;
    {
        std::ifstream in(std::string(LEXCITE_FIXTURE_DIR) + "/benchmark/pairs.jsonl");
        for_each_line(in, [&](std::size_t, const std::string& raw) {
            const auto j = json::parse(raw);
            auto p = make_pair(j.at("decision_id").get<std::string>(), j.at("chunk_index").get<std::size_t>(),
                               j.at("article_number").get<std::string>(), Provenance::implicit_candidate);
            d.pairs[p.pair_id] = p;
        });
        std::ifstream lab(std::string(LEXCITE_FIXTURE_DIR) + "/benchmark/labels.jsonl");
        std::ofstream log(dir / "labels.jsonl");
        for (const auto& e : load_label_events(lab)) {
            if (e.annotator_id == "A3") adjudications.emplace_back(e.pair_id, to_string(e.label));
            else log << to_json(e).dump() << '\n';
        }
    }
    LabelStore labels(dir / "labels.jsonl");
    Service svc(std::move(d), labels);
    Running run(svc);
    auto c = run.client();
    EXPECT_EQ(get_json(c, "/queues/adjudication")["count"], 339);
    for (const auto& [pid, label] : adjudications) post_label(c, pid, "A3", label);
    EXPECT_EQ(get_json(c, "/queues/adjudication")["count"], 0);
    const auto s = get_json(c, "/stats/agreement");
    EXPECT_EQ(s["structure"]["no_facts"], 147);
    EXPECT_EQ(s["structure"]["no"], 106);
    EXPECT_EQ(s["structure"]["no_special_regime"], 61);
    EXPECT_EQ(s["structure"]["yes"], 25);
    EXPECT_EQ(s["gold"]["yes"], 450);
    EXPECT_EQ(s["gold"]["no"], 565);
    EXPECT_NEAR(s["agreement"]["kappa"].get<double>(), 0.33, 0.005);
    EXPECT_NEAR(s["annotators"]["A2"]["yes_rate"].get<double>(), 0.67, 0.005);
}
