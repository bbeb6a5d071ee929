#pragma once

// Boundary to learned models. Prompts are rendered from template files,
// verdicts parsed from raw model text, and scores come from a transport
// (file, stub, or HTTP in gateway_http.hpp) behind a persistent cache.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lexcite/common.hpp"
#include "lexcite/text.hpp"
#include "lexcite/vector_index.hpp"

namespace lexcite {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Prompts

enum class TemplateId { adversarial_strict, zeroshot_binary, zeroshot_reasoning };

inline std::string to_string(TemplateId t) {
    switch (t) {
        case TemplateId::adversarial_strict: return "adversarial_strict";
        case TemplateId::zeroshot_binary: return "zeroshot_binary";
        case TemplateId::zeroshot_reasoning: return "zeroshot_reasoning";
    }
    return "?";
}

inline TemplateId parse_template_id(std::string_view s) {
    if (s == "adversarial_strict") return TemplateId::adversarial_strict;
    if (s == "zeroshot_binary") return TemplateId::zeroshot_binary;
    if (s == "zeroshot_reasoning") return TemplateId::zeroshot_reasoning;
    throw ValidationError("unknown template id '" + std::string(s) + "'");
}

class PromptTemplate {
  public:
    static constexpr std::string_view kSlots[] = {"article_number", "article_text", "chunk_text"};

    PromptTemplate(TemplateId id, std::string body) : id_(id), body_(std::move(body)) {
        // every {{slot}} must be known, and the two texts must be present
        std::size_t pos = 0;
        while ((pos = body_.find("{{", pos)) != std::string::npos) {
            const auto end = body_.find("}}", pos);
            if (end == std::string::npos) throw ValidationError("unterminated slot in template " + to_string(id_));
            const auto name = body_.substr(pos + 2, end - pos - 2);
            if (std::find(std::begin(kSlots), std::end(kSlots), name) == std::end(kSlots))
                throw ValidationError("unknown slot {{" + name + "}} in template " + to_string(id_));
            pos = end + 2;
        }
        for (auto required : {"{{article_text}}", "{{chunk_text}}"}) {
            if (body_.find(required) == std::string::npos)
                throw ValidationError(std::string("template ") + to_string(id_) + " lacks " + required);
        }
    }

    TemplateId id() const noexcept { return id_; }
    const std::string& body() const noexcept { return body_; }
    std::string hash() const { return text::hex64(text::fnv1a64(body_)); }

    // Slots are filled in one pass, so slot-like text inside the inputs is
    // never expanded.
    std::string render(std::string_view article_number, std::string_view article_text, std::string_view chunk) const {
        if (text::trim(chunk).empty()) throw ValidationError("empty chunk text");
        if (text::trim(article_text).empty()) throw ValidationError("empty article text");
        std::string out;
        out.reserve(body_.size() + article_text.size() + chunk.size());
        std::size_t pos = 0;
        while (true) {
            const auto open = body_.find("{{", pos);
            if (open == std::string::npos) {
                out.append(body_, pos, std::string::npos);
                break;
            }
            out.append(body_, pos, open - pos);
            const auto close = body_.find("}}", open);
            const auto name = std::string_view(body_).substr(open + 2, close - open - 2);
            if (name == "article_number") out += article_number;
            else if (name == "article_text") out += article_text;
            else out += chunk;
            pos = close + 2;
        }
        return out;
    }

  private:
    TemplateId id_;
    std::string body_;
};

class PromptLibrary {
  public:
    // Reads <dir>/<template_id>.txt for the three templates.
    static PromptLibrary load(const std::filesystem::path& dir) {
        PromptLibrary lib;
        for (auto id : {TemplateId::adversarial_strict, TemplateId::zeroshot_binary, TemplateId::zeroshot_reasoning}) {
            const auto path = dir / (to_string(id) + ".txt");
            auto in = open_input(path.string());
            std::stringstream ss;
            ss << in.rdbuf();
            lib.templates_.emplace(id, PromptTemplate(id, ss.str()));
        }
        return lib;
    }

    void add(PromptTemplate t) { templates_.insert_or_assign(t.id(), std::move(t)); }

    const PromptTemplate& get(TemplateId id) const {
        auto it = templates_.find(id);
        if (it == templates_.end()) throw NotFoundError("template " + to_string(id) + " not loaded");
        return it->second;
    }

  private:
    std::map<TemplateId, PromptTemplate> templates_;
};

inline std::string render_prompt(const PromptLibrary& lib, TemplateId id, std::string_view article_number,
                                 std::string_view article_text, std::string_view chunk) {
    return lib.get(id).render(article_number, article_text, chunk);
}

// ---------------------------------------------------------------------------
// Verdicts

enum class ParsedVerdict { yes, no, unparseable };
enum class VerdictMode { binary, strict, reasoning };

inline std::string to_string(ParsedVerdict v) {
    switch (v) {
        case ParsedVerdict::yes: return "yes";
        case ParsedVerdict::no: return "no";
        case ParsedVerdict::unparseable: return "unparseable";
    }
    return "?";
}

inline ParsedVerdict parse_parsed_verdict(std::string_view s) {
    if (s == "yes") return ParsedVerdict::yes;
    if (s == "no") return ParsedVerdict::no;
    if (s == "unparseable") return ParsedVerdict::unparseable;
    throw ValidationError("unknown verdict '" + std::string(s) + "'");
}

inline std::string to_string(VerdictMode m) {
    switch (m) {
        case VerdictMode::binary: return "binary";
        case VerdictMode::strict: return "strict";
        case VerdictMode::reasoning: return "reasoning";
    }
    return "?";
}

inline VerdictMode parse_verdict_mode(std::string_view s) {
    if (s == "binary") return VerdictMode::binary;
    if (s == "strict") return VerdictMode::strict;
    if (s == "reasoning") return VerdictMode::reasoning;
    throw ValidationError("unknown verdict mode '" + std::string(s) + "'");
}

inline VerdictMode mode_for(TemplateId t) {
    switch (t) {
        case TemplateId::adversarial_strict: return VerdictMode::strict;
        case TemplateId::zeroshot_binary: return VerdictMode::binary;
        case TemplateId::zeroshot_reasoning: return VerdictMode::reasoning;
    }
    return VerdictMode::binary;
}

namespace detail {

// Leading word of folded text after skipping whitespace, quotes and markup.
inline std::pair<std::string, std::size_t> first_word(std::string_view folded) {
    std::size_t i = 0;
    while (i < folded.size()) {
        const auto [cp, len] = text::decode_at(folded, i);
        if (text::is_letter(cp) || text::is_digit(cp)) break;
        i += len;
    }
    std::size_t j = i;
    while (j < folded.size()) {
        const auto [cp, len] = text::decode_at(folded, j);
        if (!text::is_letter(cp)) break;
        j += len;
    }
    return {std::string(folded.substr(i, j - i)), j};
}

inline ParsedVerdict word_verdict(std::string_view w) {
    if (w == "oui") return ParsedVerdict::yes;
    if (w == "non") return ParsedVerdict::no;
    return ParsedVerdict::unparseable;
}

}  // namespace detail

// Total and pure. Matching ignores case and accents.
//  binary:    the answer is one word, "oui" or "non", optionally wrapped in punctuation
//  strict:    the first word decides; a justification may follow
//  reasoning: the last line of the form "RÉPONSE: oui|non" decides
inline ParsedVerdict parse_verdict(std::string_view raw, VerdictMode mode) {
    const std::string folded = text::fold(raw);
    if (mode == VerdictMode::reasoning) {
        static const std::regex line_re(R"(^[\s*_#>]*reponse[\s*_]*:[\s*_]*(oui|non)\b.*$)");
        ParsedVerdict found = ParsedVerdict::unparseable;
        std::size_t start = 0;
        while (start <= folded.size()) {
            auto end = folded.find('\n', start);
            if (end == std::string::npos) end = folded.size();
            std::string line = folded.substr(start, end - start);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            std::smatch m;
            if (std::regex_match(line, m, line_re)) found = m[1] == "oui" ? ParsedVerdict::yes : ParsedVerdict::no;
            start = end + 1;
        }
        return found;
    }
    const auto [word, after] = detail::first_word(folded);
    const auto v = detail::word_verdict(word);
    if (v == ParsedVerdict::unparseable || mode == VerdictMode::strict) return v;
    // binary: nothing but punctuation and space may follow
    for (std::size_t i = after; i < folded.size();) {
        const auto [cp, len] = text::decode_at(folded, i);
        if (text::is_letter(cp) || text::is_digit(cp) || cp == '-') return ParsedVerdict::unparseable;
        i += len;
    }
    return v;
}

// ---------------------------------------------------------------------------
// Score records

enum class ScoreKind { llm_verdict, probability, embedding_distance, cross_encoder };

inline std::string to_string(ScoreKind k) {
    switch (k) {
        case ScoreKind::llm_verdict: return "llm_verdict";
        case ScoreKind::probability: return "probability";
        case ScoreKind::embedding_distance: return "embedding_distance";
        case ScoreKind::cross_encoder: return "cross_encoder";
    }
    return "?";
}

inline ScoreKind parse_score_kind(std::string_view s) {
    if (s == "llm_verdict") return ScoreKind::llm_verdict;
    if (s == "probability") return ScoreKind::probability;
    if (s == "embedding_distance") return ScoreKind::embedding_distance;
    if (s == "cross_encoder") return ScoreKind::cross_encoder;
    throw ValidationError("unknown score kind '" + std::string(s) + "'");
}

struct ScoreRecord {
    std::string pair_id;
    std::string model_id;
    ScoreKind kind = ScoreKind::probability;
    double value = 0.0;        // numeric kinds
    std::string raw;           // llm_verdict: model text
    VerdictMode mode = VerdictMode::binary;
    ParsedVerdict verdict() const { return parse_verdict(raw, mode); }
    friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

inline void validate(const ScoreRecord& r) {
    if (r.pair_id.empty()) throw ValidationError("score record without pair_id");
    if (r.model_id.empty()) throw ValidationError("score record without model_id");
    switch (r.kind) {
        case ScoreKind::probability:
            if (!(r.value >= 0.0 && r.value <= 1.0)) throw ValidationError("probability outside [0,1] for " + r.pair_id);
            break;
        case ScoreKind::cross_encoder:
        case ScoreKind::embedding_distance:
            if (!std::isfinite(r.value)) throw ValidationError("non-finite score for " + r.pair_id);
            break;
        case ScoreKind::llm_verdict: break;
    }
}

inline json to_json(const ScoreRecord& r) {
    json j = {{"pair_id", r.pair_id}, {"model_id", r.model_id}, {"kind", to_string(r.kind)}};
    if (r.kind == ScoreKind::llm_verdict) {
        j["value"] = r.raw;
        j["mode"] = to_string(r.mode);
    } else {
        j["value"] = r.value;
    }
    return j;
}

inline ScoreRecord score_from_json(const json& j) {
    ScoreRecord r;
    r.pair_id = j.at("pair_id").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.kind = parse_score_kind(j.at("kind").get<std::string>());
    if (r.kind == ScoreKind::llm_verdict) {
        r.raw = j.at("value").get<std::string>();
        if (j.contains("mode")) r.mode = parse_verdict_mode(j["mode"].get<std::string>());
    } else {
        r.value = j.at("value").get<double>();
    }
    validate(r);
    return r;
}

inline std::vector<ScoreRecord> load_scores(std::istream& in) {
    std::vector<ScoreRecord> out;
    for_each_line(in, [&](std::size_t line, const std::string& raw) {
        try {
            out.push_back(score_from_json(json::parse(raw)));
        } catch (const json::exception& e) {
            throw RecordError(line, e.what());
        } catch (const ValidationError& e) {
            throw RecordError(line, e.what());
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Cache

// Length-prefixed fields, so no two input tuples share a key. The template
// hash makes edited template bodies miss the cache.
inline std::string cache_key(std::string_view pair_id, std::string_view model_id, std::string_view template_or_kind,
                             std::string_view template_hash = {}) {
    std::string k = "v1";
    for (auto f : {pair_id, model_id, template_or_kind, template_hash}) {
        k += '|';
        k += std::to_string(f.size());
        k += ':';
        k += f;
    }
    return k;
}

struct ScoreRequest {
    std::string pair_id;
    std::string model_id;
    ScoreKind kind = ScoreKind::llm_verdict;
    std::optional<TemplateId> template_id;
    std::string template_hash;
    std::string prompt;                 // llm_verdict
    std::string text_a, text_b;         // cross_encoder: chunk, article

    std::string key() const {
        return cache_key(pair_id, model_id, template_id ? to_string(*template_id) : to_string(kind), template_hash);
    }
};

// Concurrent readers, serialised writers. When backed by a file every put is
// appended and flushed, so a crash loses at most the record being written.
class ScoreCache {
  public:
    ScoreCache() = default;

    explicit ScoreCache(std::filesystem::path file) : file_(std::move(file)) {
        if (std::filesystem::exists(file_)) {
            auto in = open_input(file_.string());
            for_each_line(in, [&](std::size_t line, const std::string& raw) {
                try {
                    const auto j = json::parse(raw);
                    entries_[j.at("key").get<std::string>()] = score_from_json(j.at("record"));
                } catch (const std::exception& e) {
                    throw RecordError(line, std::string("cache: ") + e.what());
                }
            });
        }
    }

    std::optional<ScoreRecord> get(const std::string& key) const {
        std::shared_lock lock(mu_);
        auto it = entries_.find(key);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void put(const std::string& key, const ScoreRecord& r) {
        std::unique_lock lock(mu_);
        entries_[key] = r;
        if (!file_.empty()) {
            std::ofstream out(file_, std::ios::app | std::ios::binary);
            if (!out) throw Error("cannot append to cache " + file_.string());
            out << json{{"key", key}, {"record", to_json(r)}}.dump() << '\n';
        }
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return entries_.size();
    }

  private:
    std::filesystem::path file_;
    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, ScoreRecord> entries_;
};

// ---------------------------------------------------------------------------
// Transports

enum class FailureKind { missing_record, timeout, network, protocol };

inline std::string to_string(FailureKind k) {
    switch (k) {
        case FailureKind::missing_record: return "missing_record";
        case FailureKind::timeout: return "timeout";
        case FailureKind::network: return "network";
        case FailureKind::protocol: return "protocol";
    }
    return "?";
}

class TransportError : public Error {
  public:
    TransportError(FailureKind kind, const std::string& what, bool retryable)
        : Error(what), kind_(kind), retryable_(retryable) {}
    FailureKind kind() const noexcept { return kind_; }
    bool retryable() const noexcept { return retryable_; }

  private:
    FailureKind kind_;
    bool retryable_;
};

class Transport {
  public:
    virtual ~Transport() = default;
    virtual ScoreRecord fetch(const ScoreRequest& req) = 0;
    virtual std::string name() const = 0;
};

// Reads scores.jsonl; the reference path for tests and offline replays.
class FileTransport : public Transport {
  public:
    explicit FileTransport(std::vector<ScoreRecord> records) {
        for (auto& r : records) index_[lookup_key(r.pair_id, r.model_id, r.kind)] = std::move(r);
    }

    static FileTransport from_file(const std::string& path) {
        auto in = open_input(path);
        return FileTransport(load_scores(in));
    }

    ScoreRecord fetch(const ScoreRequest& req) override {
        auto it = index_.find(lookup_key(req.pair_id, req.model_id, req.kind));
        if (it == index_.end())
            throw TransportError(FailureKind::missing_record,
                                 "no " + to_string(req.kind) + " record for " + req.pair_id + " / " + req.model_id,
                                 false);
        ScoreRecord r = it->second;
        if (req.template_id) r.mode = mode_for(*req.template_id);
        return r;
    }

    std::string name() const override { return "file"; }

  private:
    static std::string lookup_key(const std::string& pair_id, const std::string& model_id, ScoreKind kind) {
        return cache_key(pair_id, model_id, to_string(kind));
    }
    std::unordered_map<std::string, ScoreRecord> index_;
};

// Deterministic offline stand-in: a verdict is "yes" iff a hash of
// (pair, model) falls under yes_rate; cross-encoder and probability scores
// are the same hash mapped to [0, 1).
class StubTransport : public Transport {
  public:
    explicit StubTransport(double yes_rate = 0.104) : yes_rate_(yes_rate) {
        if (!(yes_rate >= 0.0 && yes_rate <= 1.0)) throw ValidationError("stub yes rate outside [0,1]");
    }

    static double unit_hash(std::string_view pair_id, std::string_view model_id) {
        const auto h = text::fnv1a64(std::string(pair_id) + '\x1f' + std::string(model_id));
        return static_cast<double>(h % 1000000ULL) / 1e6;
    }

    ScoreRecord fetch(const ScoreRequest& req) override {
        ++calls_;
        ScoreRecord r;
        r.pair_id = req.pair_id;
        r.model_id = req.model_id;
        r.kind = req.kind;
        const double u = unit_hash(req.pair_id, req.model_id);
        if (req.kind == ScoreKind::llm_verdict) {
            r.mode = req.template_id ? mode_for(*req.template_id) : VerdictMode::binary;
            const bool yes = u < yes_rate_;
            if (r.mode == VerdictMode::reasoning) r.raw = yes ? "Analyse.\nRÉPONSE: oui" : "Analyse.\nRÉPONSE: non";
            else if (r.mode == VerdictMode::strict) r.raw = yes ? "OUI, la règle est reprise." : "NON, doute.";
            else r.raw = yes ? "oui" : "non";
        } else {
            r.value = u;
        }
        return r;
    }

    std::string name() const override { return "stub"; }
    std::size_t calls() const noexcept { return calls_; }

  private:
    double yes_rate_;
    std::atomic<std::size_t> calls_{0};
};

struct RetryPolicy {
    int max_attempts = 4;
    std::chrono::milliseconds base_delay{200};
    double multiplier = 2.0;
    std::chrono::milliseconds max_delay{10000};
};

// Retries retryable transport errors with exponential backoff. `sleep` is
// injectable so tests do not wait.
inline ScoreRecord fetch_with_retry(Transport& t, const ScoreRequest& req, const RetryPolicy& policy,
                                    const std::function<void(std::chrono::milliseconds)>& sleep = {}) {
    auto delay = policy.base_delay;
    for (int attempt = 1;; ++attempt) {
        try {
            return t.fetch(req);
        } catch (const TransportError& e) {
            if (!e.retryable() || attempt >= policy.max_attempts) throw;
        }
        if (sleep) sleep(delay);
        else std::this_thread::sleep_for(delay);
        delay = std::min(policy.max_delay,
                         std::chrono::milliseconds(static_cast<long long>(static_cast<double>(delay.count()) * policy.multiplier)));
    }
}

struct FetchFailure {
    std::string pair_id;
    std::string model_id;
    FailureKind kind;
    std::string message;
};

struct FetchResult {
    std::vector<std::optional<ScoreRecord>> records;  // aligned with the requests
    std::vector<FetchFailure> failures;
    std::size_t cache_hits = 0;
    std::size_t transport_calls = 0;
};

struct FetchOptions {
    std::size_t concurrency = 4;
    RetryPolicy retry;
    std::function<void(std::chrono::milliseconds)> sleep;
};

// Cache first; misses go to the transport with bounded concurrency and are
// cached once they succeed. Failures are typed and listed, never dropped.
inline FetchResult fetch(const std::vector<ScoreRequest>& requests, Transport& transport, ScoreCache* cache,
                         const FetchOptions& opts = {}) {
    FetchResult res;
    res.records.resize(requests.size());
    std::vector<std::optional<FetchFailure>> failures(requests.size());
    std::atomic<std::size_t> hits{0}, calls{0};
    parallel_for(requests.size(), std::max<std::size_t>(1, opts.concurrency), [&](std::size_t i) {
        const auto& req = requests[i];
        const auto key = req.key();
        if (cache) {
            if (auto hit = cache->get(key)) {
                res.records[i] = std::move(hit);
                ++hits;
                return;
            }
        }
        try {
            ++calls;
            auto rec = fetch_with_retry(transport, req, opts.retry, opts.sleep);
            validate(rec);
            if (cache) cache->put(key, rec);
            res.records[i] = std::move(rec);
        } catch (const TransportError& e) {
            failures[i] = FetchFailure{req.pair_id, req.model_id, e.kind(), e.what()};
        } catch (const ValidationError& e) {
            failures[i] = FetchFailure{req.pair_id, req.model_id, FailureKind::protocol, e.what()};
        }
    });
    for (auto& f : failures) {
        if (f) res.failures.push_back(std::move(*f));
    }
    res.cache_hits = hits;
    res.transport_calls = calls;
    return res;
}

// ---------------------------------------------------------------------------
// Embeddings

class Embedder {
  public:
    virtual ~Embedder() = default;
    virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string name() const = 0;
};

// Signed feature hashing over lexical tokens and their character trigrams.
// It only knows surface overlap; it is the offline stand-in for a trained
// bi-encoder so that the pipeline runs without a model server.
class HashEmbedder : public Embedder {
  public:
    explicit HashEmbedder(std::size_t dim = 256) : dim_(dim) {
        if (dim == 0) throw ValidationError("embedding dimension must be positive");
    }

    Embedding embed_one(std::string_view s) const {
        Embedding v(dim_, 0.0);
        auto add = [&](std::string_view feature, double w) {
            const auto h = text::fnv1a64(feature);
            v[h % dim_] += (h >> 63) ? -w : w;
        };
        for (const auto& tok : text::lexical_tokens(text::fold(s))) {
            add(tok, 1.0);
            const std::string padded = "#" + tok + "#";
            for (std::size_t i = 0; i + 3 <= padded.size(); ++i) add(std::string_view(padded).substr(i, 3), 0.3);
        }
        double sq = 0.0;
        for (double x : v) sq += x * x;
        if (sq == 0.0) v[0] = 1.0;
        normalize_embedding(v);
        return v;
    }

    std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
        std::vector<Embedding> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed_one(t));
        return out;
    }

    std::string name() const override { return "hash-" + std::to_string(dim_); }

  private:
    std::size_t dim_;
};

}  // namespace lexcite
