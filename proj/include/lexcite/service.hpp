#pragma once

// HTTP service for the annotation campaign: ranked candidates per article,
// pair views, label submission (append-only log + snapshot), adjudication
// queue and agreement statistics. Responses are assembled from library calls.

#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "lexcite/candidates.hpp"
#include "lexcite/corpus.hpp"
#include "lexcite/fusion.hpp"
#include "lexcite/labels.hpp"

namespace lexcite {

class ConflictError : public Error {
  public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Label persistence

// Writes are serialised and appended to the log before they become visible.
// A snapshot holds the replayed state plus the number of log lines it covers;
// startup loads it and replays the remaining lines.
class LabelStore {
  public:
    LabelStore(std::filesystem::path log_path, std::filesystem::path snapshot_path = {}, std::size_t snapshot_every = 500)
        : log_path_(std::move(log_path)), snapshot_path_(std::move(snapshot_path)), snapshot_every_(snapshot_every) {
        std::size_t covered = 0;
        if (!snapshot_path_.empty() && std::filesystem::exists(snapshot_path_)) {
            std::ifstream in(snapshot_path_);
            const auto j = json::parse(in);
            covered = j.at("log_lines").get<std::size_t>();
            for (const auto& r : j.at("records")) observe(label_event_from_json(r));
        }
        if (std::filesystem::exists(log_path_)) {
            std::ifstream in(log_path_);
            std::string line;
            while (std::getline(in, line)) {
                ++lines_;
                if (line.empty()) continue;
                if (lines_ <= covered) continue;
                try {
                    observe(label_event_from_json(json::parse(line)));
                } catch (const std::exception& e) {
                    throw RecordError(lines_, std::string("label log: ") + e.what());
                }
            }
        }
        if (covered > lines_) throw ValidationError("snapshot covers more lines than the label log holds");
        log_.open(log_path_, std::ios::app);
        if (!log_) throw Error("cannot open label log " + log_path_.string());
    }

    // Timestamps are milliseconds, strictly increasing across the store, so
    // the later submission always wins.
    LabelEvent append(const std::string& pair_id, const std::string& annotator, Label label) {
        LabelEvent e;
        bool snap = false;
        {
            std::unique_lock lock(mu_);
            const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::system_clock::now().time_since_epoch())
                                 .count();
            e = {pair_id, annotator, label, std::max<std::int64_t>(now, last_ts_ + 1)};
            log_ << to_json(e).dump() << '\n';
            log_.flush();
            if (!log_) throw Error("label log write failed");
            ++lines_;
            observe(e);
            snap = !snapshot_path_.empty() && snapshot_every_ > 0 && lines_ % snapshot_every_ == 0;
        }
        if (snap) snapshot();
        return e;
    }

    template <typename Fn>
    auto read(Fn&& fn) const {
        std::shared_lock lock(mu_);
        return fn(state_);
    }

    LabelState state() const {
        return read([](const LabelState& s) { return s; });
    }

    // Copies under a shared lock and writes outside it; readers are never held up.
    void snapshot() const {
        if (snapshot_path_.empty()) return;
        std::lock_guard guard(snapshot_mu_);
        json records = json::array();
        std::size_t covered = 0;
        {
            std::shared_lock lock(mu_);
            for (const auto& r : state_.records()) records.push_back(to_json(r));
            covered = lines_;
        }
        const auto tmp = snapshot_path_.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << json{{"log_lines", covered}, {"records", records}}.dump() << '\n';
            if (!out) throw Error("snapshot write failed");
        }
        std::filesystem::rename(tmp, snapshot_path_);
    }

    std::size_t log_lines() const {
        std::shared_lock lock(mu_);
        return lines_;
    }

  private:
    void observe(const LabelEvent& e) {
        state_.apply(e);
        last_ts_ = std::max(last_ts_, e.ts);
    }

    std::filesystem::path log_path_, snapshot_path_;
    std::size_t snapshot_every_;
    mutable std::shared_mutex mu_;
    mutable std::mutex snapshot_mu_;
    std::ofstream log_;
    LabelState state_;
    std::int64_t last_ts_ = 0;
    std::size_t lines_ = 0;
};

// ---------------------------------------------------------------------------
// Service

struct ServiceData {
    CorpusStore store;
    std::map<std::string, Chunk> chunks;  // by chunk_key
    std::map<std::string, CandidatePair> pairs;
    std::map<std::string, Ranking> rankings;  // by method
    std::string default_method = "ensemble";
    AnnotatorRoles roles;
};

class Service {
  public:
    Service(ServiceData data, LabelStore& labels) : d_(std::move(data)), labels_(labels) {
        for (const auto& [method, r] : d_.rankings)
            for (const auto& it : r.items) {
                auto p = d_.pairs.find(it.pair_id);
                if (p == d_.pairs.end()) throw ValidationError("ranking " + method + " names unknown pair " + it.pair_id);
                by_article_[method][p->second.article_number].push_back(&it);
            }
    }

    Service(const Service&) = delete;  // by_article_ points into d_
    Service& operator=(const Service&) = delete;

    // Each handler returns the JSON body or throws; the HTTP layer maps errors.
    json candidates(const std::string& article, std::optional<std::string> method, std::size_t k, std::size_t cursor) const {
        if (!article_known(article)) throw NotFoundError("unknown article " + article);
        const auto m = method.value_or(d_.default_method);
        auto r = by_article_.find(m);
        if (r == by_article_.end() && !d_.rankings.count(m)) throw ConflictError("no ranking computed for method " + m);
        static const std::vector<const RankedItem*> kEmpty;
        const auto* list = &kEmpty;
        if (r != by_article_.end())
            if (auto a = r->second.find(article); a != r->second.end()) list = &a->second;
        json items = json::array();
        const auto state = labels_.state();
        const std::size_t end = std::min(list->size(), cursor + std::min(k, list->size()));
        for (std::size_t i = cursor; i < end; ++i) {
            auto v = pair_view(d_.pairs.at((*list)[i]->pair_id), state);
            v["rank"] = (*list)[i]->rank;
            v["score"] = (*list)[i]->score;
            v["position"] = i;
            items.push_back(std::move(v));
        }
        return {{"article", article},
                {"method", m},
                {"total", list->size()},
                {"items", items},
                {"next_cursor", end < list->size() && k > 0 ? json(end) : json(nullptr)}};
    }

    json pair(const std::string& id) const { return pair_view(find_pair(id), labels_.state()); }

    json submit(const std::string& id, const std::string& annotator, const std::string& label) {
        find_pair(id);
        if (annotator.empty()) throw ValidationError("annotator_id is required");
        const auto e = labels_.append(id, annotator, parse_label(label));
        return to_json(e);
    }

    json adjudication_queue_view() const {
        return labels_.read([&](const LabelState& s) {
            json items = json::array();
            for (const auto& p : adjudication_queue(s, d_.roles)) {
                json labels = json::object();
                for (const auto& [a, e] : s.for_pair(p)) labels[a] = to_string(e.label);
                items.push_back({{"pair_id", p}, {"labels", labels}});
            }
            return json{{"count", items.size()}, {"items", items}};
        });
    }

    json agreement() const {
        return labels_.read([&](const LabelState& s) {
            auto j = to_json(agreement_report(s, d_.roles));
            json ann = json::object();
            for (const auto& [a, sum] : annotator_summaries(s)) ann[a] = to_json(sum);
            j["annotators"] = ann;
            return j;
        });
    }

    void mount(httplib::Server& srv) {
        srv.Get(R"(/articles/([^/]+)/candidates)", wrap([this](const httplib::Request& req) {
                    const auto k = req.has_param("k") ? parse_count(req.get_param_value("k"), "k") : 50;
                    const auto c = req.has_param("cursor") ? parse_count(req.get_param_value("cursor"), "cursor") : 0;
                    std::optional<std::string> m;
                    if (req.has_param("method")) m = req.get_param_value("method");
                    return candidates(req.matches[1], m, k, c);
                }));
        srv.Post(R"(/pairs/([^/]+)/labels)", wrap([this](const httplib::Request& req) {
                     json body;
                     try {
                         body = json::parse(req.body);
                     } catch (const json::exception& e) {
                         throw ValidationError(std::string("invalid JSON body: ") + e.what());
                     }
                     if (!body.is_object()) throw ValidationError("body must be an object");
                     std::string annotator = req.get_header_value("X-Annotator-Id");
                     if (body.contains("annotator_id")) {
                         if (!body["annotator_id"].is_string()) throw ValidationError("annotator_id must be a string");
                         annotator = body["annotator_id"].get<std::string>();
                     }
                     if (!body.contains("label") || !body["label"].is_string()) throw ValidationError("label is required");
                     return submit(req.matches[1], annotator, body["label"].get<std::string>());
                 }));
        srv.Get(R"(/pairs/([^/]+))", wrap([this](const httplib::Request& req) { return pair(req.matches[1]); }));
        srv.Get("/queues/adjudication", wrap([this](const httplib::Request&) { return adjudication_queue_view(); }));
        srv.Get("/stats/agreement", wrap([this](const httplib::Request&) { return agreement(); }));
    }

    const ServiceData& data() const noexcept { return d_; }

  private:
    static bool accepts_json(const httplib::Request& req) {
        if (!req.has_header("Accept")) return true;
        const auto a = req.get_header_value("Accept");
        return a.empty() || a.find("application/json") != std::string::npos || a.find("application/*") != std::string::npos ||
               a.find("*/*") != std::string::npos;
    }

    static std::size_t parse_count(const std::string& s, const char* name) {
        std::size_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size())
            throw ValidationError(std::string(name) + " must be a non-negative integer");
        return v;
    }

    template <typename Fn>
    static httplib::Server::Handler wrap(Fn fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            auto send = [&](int status, const json& body) {
                res.status = status;
                res.set_content(body.dump(), "application/json");
            };
            if (!accepts_json(req)) return send(406, {{"error", "only application/json is available"}});
            try {
                send(200, fn(req));
            } catch (const NotFoundError& e) {
                send(404, {{"error", e.what()}});
            } catch (const ConflictError& e) {
                send(409, {{"error", e.what()}});
            } catch (const ValidationError& e) {
                send(400, {{"error", e.what()}});
            } catch (const std::exception& e) {
                send(500, {{"error", e.what()}});
            }
        };
    }

    bool article_known(const std::string& n) const {
        if (d_.store.find_article(n)) return true;
        for (const auto& [_, p] : d_.pairs)
            if (p.article_number == n) return true;
        return false;
    }

    const CandidatePair& find_pair(const std::string& id) const {
        auto it = d_.pairs.find(id);
        if (it == d_.pairs.end()) throw NotFoundError("unknown pair " + id);
        return it->second;
    }

    json pair_view(const CandidatePair& p, const LabelState& s) const {
        json v = {{"pair_id", p.pair_id}, {"provenance", to_string(p.provenance)}};
        if (const auto* a = d_.store.find_article(p.article_number)) v["article"] = to_json(*a);
        else v["article"] = {{"number", p.article_number}};
        auto c = d_.chunks.find(p.chunk_ref());
        v["chunk"] = c == d_.chunks.end() ? json{{"index", p.chunk_index}}
                                          : json{{"index", p.chunk_index}, {"text", c->second.text}};
        v["highlight"] = c == d_.chunks.end() ? json(nullptr)
                                              : json{{"start", c->second.span.start}, {"end", c->second.span.end}};
        if (const auto* d = d_.store.find_decision(p.decision_id))
            v["decision"] = {{"id", d->id}, {"court_id", d->court_id}, {"date", d->date}, {"text", d->motivation}};
        else
            v["decision"] = {{"id", p.decision_id}};
        json labels = json::object();
        for (const auto& [a, e] : s.for_pair(p.pair_id)) labels[a] = {{"label", to_string(e.label)}, {"ts", e.ts}};
        v["labels"] = labels;
        const auto r = resolve_pair(s, p.pair_id, d_.roles);
        v["status"] = to_string(r.status);
        v["agree"] = r.agree ? json(*r.agree) : json(nullptr);
        v["gold"] = r.gold ? json(r.gold->yes ? "yes" : "no") : json(nullptr);
        return v;
    }

    ServiceData d_;
    LabelStore& labels_;
    std::map<std::string, std::map<std::string, std::vector<const RankedItem*>>> by_article_;
};

}  // namespace lexcite
