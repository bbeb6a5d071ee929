#pragma once

// Training and candidate pairs: explicit (chunk, cited article) pairs, sampled
// negatives, the implicit-candidate pool from kNN retrieval, and the
// adversarial verdict filter over that pool.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lexcite/citation.hpp"
#include "lexcite/common.hpp"
#include "lexcite/corpus.hpp"
#include "lexcite/gateway.hpp"
#include "lexcite/lexical.hpp"
#include "lexcite/text.hpp"
#include "lexcite/vector_index.hpp"

namespace lexcite {

inline constexpr double kExplicitMinSimilarity = 0.15;
inline constexpr double kNegativeMaxSimilarity = 0.05;

inline std::string make_pair_id(std::string_view decision_id, std::size_t chunk_index, std::string_view article) {
    std::string key(decision_id);
    key += '\x1f';
    key += std::to_string(chunk_index);
    key += '\x1f';
    key += article;
    return text::hex64(text::fnv1a64(key));
}

enum class Provenance { explicit_citation, implicit_candidate, filtered_positive };

inline std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::explicit_citation: return "explicit";
        case Provenance::implicit_candidate: return "implicit_candidate";
        case Provenance::filtered_positive: return "filtered_positive";
    }
    return "?";
}

inline Provenance parse_provenance(std::string_view s) {
    if (s == "explicit") return Provenance::explicit_citation;
    if (s == "implicit_candidate") return Provenance::implicit_candidate;
    if (s == "filtered_positive") return Provenance::filtered_positive;
    throw ValidationError("unknown provenance '" + std::string(s) + "'");
}

// Only implicit candidates move forward; explicit pairs never change stage.
inline Provenance advance(Provenance p) {
    if (p != Provenance::implicit_candidate)
        throw ValidationError("provenance " + to_string(p) + " cannot advance");
    return Provenance::filtered_positive;
}

struct CandidatePair {
    std::string pair_id;
    std::string decision_id;
    std::size_t chunk_index = 0;
    std::string article_number;
    std::optional<double> distance;    // kNN distance for retrieved pairs
    std::optional<double> similarity;  // tf-idf cosine for explicit pairs
    Provenance provenance = Provenance::implicit_candidate;

    std::string chunk_ref() const { return chunk_key(decision_id, chunk_index); }
    friend bool operator==(const CandidatePair&, const CandidatePair&) = default;
};

inline CandidatePair make_pair(std::string_view decision_id, std::size_t chunk_index, std::string_view article,
                               Provenance p) {
    CandidatePair c;
    c.pair_id = make_pair_id(decision_id, chunk_index, article);
    c.decision_id = std::string(decision_id);
    c.chunk_index = chunk_index;
    c.article_number = std::string(article);
    c.provenance = p;
    return c;
}

inline json to_json(const CandidatePair& c) {
    json j = {{"pair_id", c.pair_id},
              {"decision_id", c.decision_id},
              {"chunk_index", c.chunk_index},
              {"article_number", c.article_number},
              {"distance", c.distance ? json(*c.distance) : json(nullptr)},
              {"provenance", to_string(c.provenance)}};
    if (c.similarity) j["similarity"] = *c.similarity;
    return j;
}

inline CandidatePair candidate_from_json(const json& j) {
    CandidatePair c = make_pair(j.at("decision_id").get<std::string>(), j.at("chunk_index").get<std::size_t>(),
                                ArticleNumber::from(j.at("article_number").get<std::string>()).str(),
                                parse_provenance(j.at("provenance").get<std::string>()));
    if (j.contains("pair_id") && j["pair_id"].get<std::string>() != c.pair_id)
        throw ValidationError("pair_id does not match (decision_id, chunk_index, article_number)");
    if (j.contains("distance") && !j["distance"].is_null()) c.distance = j["distance"].get<double>();
    if (j.contains("similarity")) c.similarity = j["similarity"].get<double>();
    return c;
}

inline std::vector<CandidatePair> load_candidates(std::istream& in) {
    std::vector<CandidatePair> out;
    for_each_line(in, [&](std::size_t line, const std::string& raw) {
        try {
            out.push_back(candidate_from_json(json::parse(raw)));
        } catch (const std::exception& e) {
            throw RecordError(line, e.what());
        }
    });
    return out;
}

inline void write_candidates(std::ostream& out, const std::vector<CandidatePair>& pairs) {
    for (const auto& p : pairs) out << to_json(p).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Explicit pairs and negatives

// One pair per (chunk, cited civil-code article present in the store) whose
// tf-idf cosine with the article text reaches `min_similarity`. Pre-2016
// numbers are mapped to their current counterpart when only that is stored.
inline std::vector<CandidatePair> extract_explicit_pairs(const std::vector<Chunk>& chunks, const CorpusStore& store,
                                                         const LexicalModel& model,
                                                         const RenumberingTable* renumbering = nullptr,
                                                         double min_similarity = kExplicitMinSimilarity) {
    std::vector<CandidatePair> out;
    for (const auto& chunk : chunks) {
        std::set<std::string, decltype(&article_less)> cited(&article_less);
        for (const auto& m : extract_citations(chunk.text)) {
            if (m.code != Code::civil) continue;
            for (const auto& a : m.articles) {
                if (store.find_article(a)) cited.insert(a);
                else if (renumbering) {
                    if (auto now = renumbering->new_for(a); now && store.find_article(*now)) cited.insert(*now);
                }
            }
        }
        for (const auto& number : cited) {
            const double sim = tfidf_cosine(model, chunk.text, store.find_article(number)->text);
            if (sim < min_similarity) continue;
            auto p = make_pair(chunk.decision_id, chunk.index, number, Provenance::explicit_citation);
            p.similarity = sim;
            out.push_back(std::move(p));
        }
    }
    return out;
}

// Uniform over the articles with cosine below `max_similarity`, in article
// order so a seed replays. The result is for evaluation only.
struct NegativeSample {
    std::string article_number;
    double similarity = 0.0;
    bool evaluation_only = true;
};

inline NegativeSample sample_negative(std::string_view chunk_text, const CorpusStore& store, const LexicalModel& model,
                                      Rng& rng, double max_similarity = kNegativeMaxSimilarity) {
    std::vector<std::pair<std::string, double>> eligible;
    const auto chunk_vec = model.tfidf_vector(chunk_text);
    for (const auto* a : store.articles()) {
        const double sim = cosine(chunk_vec, model.tfidf_vector(a->text));
        if (sim < max_similarity) eligible.emplace_back(a->number, sim);
    }
    if (eligible.empty()) throw ValidationError("no article below the negative-sampling threshold");
    std::sort(eligible.begin(), eligible.end(), [](const auto& x, const auto& y) { return article_less(x.first, y.first); });
    const auto& pick = eligible[uniform_index(rng, eligible.size())];
    return {pick.first, pick.second, true};
}

// ---------------------------------------------------------------------------
// Implicit candidates

struct ImplicitOptions {
    std::size_t k = 5;
    double tau = kDefaultTau;
    bool prune_by_tau = true;
    std::size_t jobs = 0;
};

struct ImplicitReport {
    std::size_t chunks = 0;
    std::size_t keyword_chunks = 0;   // dropped whole
    std::size_t retrieved = 0;        // neighbours looked at
    std::size_t beyond_tau = 0;
    std::size_t cited_in_decision = 0;
    std::size_t kept = 0;
};

inline json to_json(const ImplicitReport& r) {
    return {{"chunks", r.chunks},         {"keyword_chunks", r.keyword_chunks},
            {"retrieved", r.retrieved},   {"beyond_tau", r.beyond_tau},
            {"cited_in_decision", r.cited_in_decision}, {"kept", r.kept}};
}

using DecisionMentions = std::map<std::string, std::vector<CitationMention>>;

inline DecisionMentions decision_mentions(const CorpusStore& store, const std::vector<std::string>& decision_ids) {
    DecisionMentions out;
    for (const auto& id : decision_ids) {
        const auto* d = store.find_decision(id);
        if (!d) throw NotFoundError("decision " + id);
        out[id] = extract_citations(d->motivation);
    }
    return out;
}

// What the embedder sees for a chunk: references replaced by placeholders.
inline std::string embedding_input(const Chunk& c) { return mask_references(c.text); }

// Filters, in order: chunks with explicit keywords (raw text) are dropped;
// the top-k neighbours are taken; neighbours beyond tau are dropped when
// pruning; articles cited in the decision (renumbering-aware) are dropped.
// `chunk_vectors` is aligned with `chunks`.
inline std::vector<CandidatePair> generate_implicit_candidates(const std::vector<Chunk>& chunks,
                                                               const std::vector<Embedding>& chunk_vectors,
                                                               const VectorIndex& index,
                                                               const DecisionMentions& mentions,
                                                               const RenumberingTable& renumbering,
                                                               const ImplicitOptions& opts = {},
                                                               ImplicitReport* report = nullptr) {
    if (chunk_vectors.size() != chunks.size()) throw ValidationError("one embedding per chunk is required");
    static const std::vector<CitationMention> kNone;
    std::vector<std::vector<CandidatePair>> per_chunk(chunks.size());
    std::vector<ImplicitReport> stats(chunks.size());
    parallel_for(chunks.size(), opts.jobs, [&](std::size_t i) {
        const auto& chunk = chunks[i];
        auto& st = stats[i];
        st.chunks = 1;
        if (has_explicit_keywords(chunk.text)) {
            st.keyword_chunks = 1;
            return;
        }
        auto it = mentions.find(chunk.decision_id);
        const auto& ms = it == mentions.end() ? kNone : it->second;
        for (const auto& n : index.knn(chunk_vectors[i], opts.k)) {
            ++st.retrieved;
            if (opts.prune_by_tau && !within_threshold(n.distance, opts.tau)) {
                ++st.beyond_tau;
                continue;
            }
            if (is_cited_in_decision(n.id, ms, renumbering)) {
                ++st.cited_in_decision;
                continue;
            }
            auto p = make_pair(chunk.decision_id, chunk.index, n.id, Provenance::implicit_candidate);
            p.distance = n.distance;
            per_chunk[i].push_back(std::move(p));
            ++st.kept;
        }
    });
    std::vector<CandidatePair> out;
    ImplicitReport total;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        out.insert(out.end(), per_chunk[i].begin(), per_chunk[i].end());
        total.chunks += stats[i].chunks;
        total.keyword_chunks += stats[i].keyword_chunks;
        total.retrieved += stats[i].retrieved;
        total.beyond_tau += stats[i].beyond_tau;
        total.cited_in_decision += stats[i].cited_in_decision;
        total.kept += stats[i].kept;
    }
    if (report) *report = total;
    return out;
}

inline std::vector<CandidatePair> generate_implicit_candidates(const std::vector<Chunk>& chunks, Embedder& embedder,
                                                               const VectorIndex& index,
                                                               const DecisionMentions& mentions,
                                                               const RenumberingTable& renumbering,
                                                               const ImplicitOptions& opts = {},
                                                               ImplicitReport* report = nullptr) {
    std::vector<std::string> inputs;
    inputs.reserve(chunks.size());
    for (const auto& c : chunks) inputs.push_back(embedding_input(c));
    return generate_implicit_candidates(chunks, inputs.empty() ? std::vector<Embedding>{} : embedder.embed(inputs),
                                        index, mentions, renumbering, opts, report);
}

// ---------------------------------------------------------------------------
// Adversarial filter

struct AdversarialReject {
    CandidatePair pair;
    std::string raw;
};

struct AdversarialResult {
    std::vector<CandidatePair> positives;  // provenance filtered_positive
    std::vector<AdversarialReject> unparseable;
    std::size_t negatives = 0;
    std::size_t cache_hits = 0;
    std::size_t transport_calls = 0;
};

inline json to_json(const AdversarialReject& r) {
    auto j = to_json(r.pair);
    j["raw"] = r.raw;
    j["reason"] = "unparseable";
    return j;
}

// Thrown when verdicts are still missing after retries. Every verdict that
// did arrive is already in the checkpoint cache, so rerunning resumes.
class PipelineHalted : public Error {
  public:
    explicit PipelineHalted(std::vector<FetchFailure> failures)
        : Error("adversarial filter halted: " + std::to_string(failures.size()) +
                " verdict(s) unavailable; rerun to resume from the checkpoint"),
          failures_(std::move(failures)) {}
    const std::vector<FetchFailure>& failures() const noexcept { return failures_; }

  private:
    std::vector<FetchFailure> failures_;
};

inline ScoreRequest adversarial_request(const CandidatePair& pair, std::string_view chunk_text, const Article& article,
                                        const PromptTemplate& tmpl, std::string model_id) {
    ScoreRequest r;
    r.pair_id = pair.pair_id;
    r.model_id = std::move(model_id);
    r.kind = ScoreKind::llm_verdict;
    r.template_id = tmpl.id();
    r.template_hash = tmpl.hash();
    r.prompt = tmpl.render(article.number, article.text, chunk_text);
    return r;
}

// Keeps the pairs whose verdict is yes. `requests` is aligned with `pairs`.
inline AdversarialResult adversarial_filter(const std::vector<CandidatePair>& pairs,
                                            const std::vector<ScoreRequest>& requests, Transport& provider,
                                            ScoreCache* checkpoint, const FetchOptions& opts = {}) {
    if (requests.size() != pairs.size()) throw ValidationError("one request per pair is required");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].provenance != Provenance::implicit_candidate)
            throw ValidationError("adversarial filter expects implicit candidates, got " +
                                  to_string(pairs[i].provenance) + " for " + pairs[i].pair_id);
        if (requests[i].pair_id != pairs[i].pair_id || requests[i].kind != ScoreKind::llm_verdict)
            throw ValidationError("request " + std::to_string(i) + " does not match its pair");
    }
    auto fetched = fetch(requests, provider, checkpoint, opts);
    if (!fetched.failures.empty()) throw PipelineHalted(std::move(fetched.failures));
    AdversarialResult res;
    res.cache_hits = fetched.cache_hits;
    res.transport_calls = fetched.transport_calls;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& rec = *fetched.records[i];
        switch (rec.verdict()) {
            case ParsedVerdict::yes: {
                auto p = pairs[i];
                p.provenance = advance(p.provenance);
                res.positives.push_back(std::move(p));
                break;
            }
            case ParsedVerdict::no: ++res.negatives; break;
            case ParsedVerdict::unparseable: res.unparseable.push_back({pairs[i], rec.raw}); break;
        }
    }
    return res;
}

}  // namespace lexcite
