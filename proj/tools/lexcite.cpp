// lexcite: batch entry points for the citation-retrieval pipeline.
//
//   ingest -> chunk -> extract-explicit
//   build-index -> gen-candidates -> filter -> score -> rank
//   eval, stats, serve

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lexcite/candidates.hpp"
#include "lexcite/citation.hpp"
#include "lexcite/config.hpp"
#include "lexcite/corpus.hpp"
#include "lexcite/ensemble.hpp"
#include "lexcite/fusion.hpp"
#include "lexcite/gateway.hpp"
#include "lexcite/gateway_http.hpp"
#include "lexcite/labels.hpp"
#include "lexcite/lexical.hpp"
#include "lexcite/service.hpp"
#include "lexcite/stats.hpp"
#include "lexcite/vector_index.hpp"

namespace fs = std::filesystem;
using namespace lexcite;

namespace {

// Exit codes
constexpr int kUsage = 64;
constexpr int kInputError = 2;
constexpr int kHalted = 3;

// Wraps line-numbered loader errors with the file they came from.
class InputError : public Error {
  public:
    using Error::Error;
};

template <typename Fn>
auto load_file(const std::string& path, Fn&& fn) {
    if (path.empty()) throw InputError("input path not set");
    auto in = open_input(path);
    try {
        return fn(in);
    } catch (const RecordError& e) {
        throw InputError(path + ": " + e.what());
    } catch (const json::exception& e) {
        throw InputError(path + ": " + e.what());
    }
}

template <typename T, typename Fn>
std::vector<T> load_jsonl(const std::string& path, Fn&& from_json) {
    return load_file(path, [&](std::istream& in) {
        std::vector<T> out;
        for_each_line(in, [&](std::size_t line, const std::string& raw) {
            try {
                out.push_back(from_json(json::parse(raw)));
            } catch (const std::exception& e) {
                throw RecordError(line, e.what());
            }
        });
        return out;
    });
}

void write_jsonl(const std::string& path, const std::vector<json>& rows) {
    auto out = open_output(path);
    for (const auto& r : rows) out << r.dump() << '\n';
    if (!out) throw Error("write failed: " + path);
}

void write_json(const std::string& path, const json& j) {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
    if (!out) throw Error("write failed: " + path);
}

std::string fmt(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string fmt(const std::optional<double>& v, int digits = 2) { return v ? fmt(*v, digits) : "undefined"; }

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* what) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::istringstream is(std::string(text::trim(item)));
        T v{};
        if (!(is >> v) || !is.eof()) throw ValidationError(std::string("bad value in ") + what + ": '" + item + "'");
        out.push_back(v);
    }
    return out;
}

// Loads decisions and articles; any malformed record is fatal here since
// these files are either user input already vetted by `ingest` or its output.
CorpusStore load_store(const std::string& decisions, const std::string& articles) {
    CorpusStore store;
    auto check = [](const std::string& path, const IngestReport& r) {
        if (!r.errors.empty())
            throw InputError(path + ": line " + std::to_string(r.errors.front().line) + ": " + r.errors.front().message);
    };
    if (!decisions.empty()) {
        auto in = open_input(decisions);
        check(decisions, store.ingest_decisions(in));
    }
    if (!articles.empty()) {
        auto in = open_input(articles);
        check(articles, store.ingest_articles(in));
    }
    return store;
}

std::vector<Chunk> load_chunks(const std::string& path) {
    return load_jsonl<Chunk>(path, [](const json& j) { return chunk_from_json(j); });
}

std::map<std::string, const Chunk*> chunk_map(const std::vector<Chunk>& chunks) {
    std::map<std::string, const Chunk*> m;
    for (const auto& c : chunks) m[chunk_key(c.decision_id, c.index)] = &c;
    return m;
}

std::vector<CandidatePair> load_pairs(const std::string& path) {
    return load_file(path, [](std::istream& in) { return load_candidates(in); });
}

RenumberingTable load_renumbering(const std::string& path) {
    if (path.empty()) return {};
    return load_file(path, [](std::istream& in) { return RenumberingTable::load(in); });
}

LabelState load_labels(const std::string& path) {
    return LabelState::replay(load_file(path, [](std::istream& in) { return load_label_events(in); }));
}

std::map<std::string, bool> gold_labels(const LabelState& s) {
    std::map<std::string, bool> out;
    for (const auto& p : s.pair_ids())
        if (auto r = resolve_pair(s, p); r.gold) out[p] = r.gold->yes;
    return out;
}

// ---------------------------------------------------------------------------
// Transports and embedders selected by flags

struct ScorerFlags {
    std::string transport = "stub";  // stub | file | http
    std::string scores;              // file transport
    double stub_yes_rate = 0.104;
    std::string url, token;

    void add(CLI::App* cmd) {
        cmd->add_option("--transport", transport, "stub, file or http")->check(CLI::IsMember({"stub", "file", "http"}));
        cmd->add_option("--scores", scores, "scores.jsonl for the file transport");
        cmd->add_option("--stub-yes-rate", stub_yes_rate, "yes rate of the offline stub")->check(CLI::Range(0.0, 1.0));
        cmd->add_option("--url", url, "scoring endpoint (else LEXCITE_SCORER_URL)");
    }

    std::unique_ptr<Transport> make(const RunConfig& cfg) const {
        if (transport == "file") {
            const auto path = scores.empty() ? cfg.paths.scores : scores;
            return std::make_unique<FileTransport>(
                load_file(path, [](std::istream& in) { return FileTransport(load_scores(in)); }));
        }
        if (transport == "http") {
            auto h = HttpConfig::from_env();
            if (!url.empty()) h.base_url = url;
            return std::make_unique<HttpTransport>(h);
        }
        return std::make_unique<StubTransport>(stub_yes_rate);
    }
};

struct EmbedderFlags {
    std::string kind = "hash";
    std::size_t dim = 256;
    std::string url, model = "bi-encoder";

    void add(CLI::App* cmd) {
        cmd->add_option("--embedder", kind, "hash or http")->check(CLI::IsMember({"hash", "http"}));
        cmd->add_option("--dim", dim, "hash embedder dimension");
        cmd->add_option("--embed-url", url, "embedding endpoint (else LEXCITE_SCORER_URL)");
        cmd->add_option("--embed-model", model, "embedding model id");
    }

    std::unique_ptr<Embedder> make() const {
        if (kind == "http") {
            auto h = HttpConfig::from_env();
            if (!url.empty()) h.base_url = url;
            return std::make_unique<HttpEmbedder>(h, model);
        }
        return std::make_unique<HashEmbedder>(dim);
    }
};

std::string in_out(const RunConfig& cfg, const std::string& explicit_path, const std::string& name) {
    if (!explicit_path.empty()) return explicit_path;
    return (fs::path(cfg.paths.out_dir.empty() ? "." : cfg.paths.out_dir) / name).string();
}

void ensure_out_dir(const RunConfig& cfg) {
    if (!cfg.paths.out_dir.empty()) fs::create_directories(cfg.paths.out_dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lexcite: implicit Civil Code citation retrieval pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--jobs", jobs, "worker threads (0 = all cores)");
    app.add_option("--out-dir", out_dir, "artifact directory");

    RunConfig cfg;
    // Resolved before any subcommand callback runs.
    auto resolve = [&] {
        cfg = load_run_config(config_path);
        if (seed) cfg.seed = *seed;
        if (jobs) cfg.jobs = *jobs;
        if (!out_dir.empty()) cfg.paths.out_dir = out_dir;
        cfg.validate();
    };

    // ---- ingest
    auto* ingest = app.add_subcommand("ingest", "validate decisions and articles, write normalised copies");
    std::string in_decisions, in_articles;
    bool strict = false;
    ingest->add_option("--decisions", in_decisions, "decisions.jsonl");
    ingest->add_option("--articles", in_articles, "articles.jsonl");
    ingest->add_flag("--strict", strict, "fail on the first malformed record");
    ingest->callback([&] {
        resolve();
        ensure_out_dir(cfg);
        const auto dpath = in_decisions.empty() ? cfg.paths.decisions : in_decisions;
        const auto apath = in_articles.empty() ? cfg.paths.articles : in_articles;
        if (dpath.empty() || apath.empty()) throw ValidationError("ingest needs --decisions and --articles");
        CorpusStore store;
        json report;
        for (const auto& [path, kind] : {std::pair{dpath, "decisions"}, std::pair{apath, "articles"}}) {
            auto in = open_input(path);
            const auto r = std::string(kind) == "decisions" ? store.ingest_decisions(in) : store.ingest_articles(in);
            json errs = json::array();
            for (const auto& e : r.errors) {
                errs.push_back({{"line", e.line}, {"message", e.message}});
                std::cerr << path << ": line " << e.line << ": " << e.message << '\n';
            }
            if (strict && !r.errors.empty())
                throw InputError(path + ": line " + std::to_string(r.errors.front().line) + ": " + r.errors.front().message);
            report[kind] = {{"accepted", r.accepted}, {"rejected", errs}};
        }
        std::vector<json> rows;
        for (const auto& d : store.decisions()) rows.push_back(to_json(d));
        write_jsonl(in_out(cfg, {}, "decisions.jsonl"), rows);
        rows.clear();
        for (const auto* a : store.articles()) rows.push_back(to_json(*a));
        write_jsonl(in_out(cfg, {}, "articles.jsonl"), rows);
        write_json(in_out(cfg, {}, "ingest_report.json"), report);
        std::cout << "decisions " << store.decision_count() << ", articles " << store.article_count() << '\n';
    });

    // ---- chunk
    auto* chunk = app.add_subcommand("chunk", "split motivations into chunks, assign splits");
    std::string chunk_decisions;
    std::size_t max_tokens = 100, max_sentences = 2;
    chunk->add_option("--decisions", chunk_decisions, "decisions.jsonl (default: out-dir copy)");
    chunk->add_option("--max-tokens", max_tokens, "token limit per chunk");
    chunk->add_option("--max-sentences", max_sentences, "sentence limit per chunk");
    chunk->callback([&] {
        resolve();
        ensure_out_dir(cfg);
        const auto store = load_store(in_out(cfg, chunk_decisions, "decisions.jsonl"), {});
        ChunkerOptions opts;
        opts.max_tokens = max_tokens;
        opts.max_sentences = max_sentences;
        std::vector<std::vector<Chunk>> per(store.decision_count());
        parallel_for(per.size(), cfg.jobs, [&](std::size_t i) { per[i] = chunk_decision(store.decisions()[i], opts); });
        std::vector<Chunk> chunks;
        std::vector<json> rows;
        for (auto& v : per)
            for (auto& c : v) {
                rows.push_back(to_json(c));
                chunks.push_back(std::move(c));
            }
        write_jsonl(in_out(cfg, {}, "chunks.jsonl"), rows);
        std::vector<std::string> ids;
        for (const auto& d : store.decisions()) ids.push_back(d.id);
        json splits = json::object();
        if (ids.size() >= 3)
            for (const auto& [id, s] : assign_splits(ids, {0.70, 0.15, 0.15}, cfg.seed).by_decision) splits[id] = to_string(s);
        write_json(in_out(cfg, {}, "splits.json"), splits);
        write_json(in_out(cfg, {}, "corpus_stats.json"), to_json(corpus_stats(store, chunks)));
        std::cout << "chunks " << chunks.size() << " from " << ids.size() << " decisions\n";
    });

    // ---- extract-explicit
    auto* explicit_cmd = app.add_subcommand("extract-explicit", "explicit citation pairs and sampled negatives");
    explicit_cmd->callback([&] {
        resolve();
        ensure_out_dir(cfg);
        const auto store = load_store(in_out(cfg, {}, "decisions.jsonl"), in_out(cfg, cfg.paths.articles, "articles.jsonl"));
        const auto chunks = load_chunks(in_out(cfg, {}, "chunks.jsonl"));
        const auto renum = load_renumbering(cfg.paths.renumbering);
        std::vector<std::string> docs;
        for (const auto* a : store.articles()) docs.push_back(a->text);
        for (const auto& c : chunks) docs.push_back(c.text);
        const auto model = LexicalModel::fit(docs);
        const auto pairs = extract_explicit_pairs(chunks, store, model, &renum, cfg.tfidf_pos);
        {
            auto out = open_output(in_out(cfg, {}, "explicit.jsonl"));
            write_candidates(out, pairs);
        }
        const auto chunks_by = chunk_map(chunks);
        Rng rng(cfg.seed);
        std::vector<json> negs;
        for (const auto& p : pairs) {
            const auto n = sample_negative(chunks_by.at(p.chunk_ref())->text, store, model, rng, cfg.tfidf_neg);
            negs.push_back({{"decision_id", p.decision_id},
                            {"chunk_index", p.chunk_index},
                            {"positive_article", p.article_number},
                            {"article_number", n.article_number},
                            {"similarity", n.similarity},
                            {"evaluation_only", n.evaluation_only}});
        }
        write_jsonl(in_out(cfg, {}, "negatives.jsonl"), negs);
        std::cout << "explicit pairs " << pairs.size() << ", negatives " << negs.size() << '\n';
    });

    // ---- build-index
    auto* build_index = app.add_subcommand("build-index", "embed articles for nearest-neighbour retrieval");
    EmbedderFlags index_embedder;
    index_embedder.add(build_index);
    build_index->callback([&] {
        resolve();
        ensure_out_dir(cfg);
        const auto store = load_store({}, in_out(cfg, cfg.paths.articles, "articles.jsonl"));
        std::vector<std::string> ids, texts;
        for (const auto* a : store.articles()) {
            ids.push_back(a->number);
            texts.push_back(a->text);
        }
        auto embedder = index_embedder.make();
        const auto vecs = texts.empty() ? std::vector<Embedding>{} : embedder->embed(texts);
        std::vector<json> rows;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            EmbeddingRecord r{ids[i], vecs[i]};
            normalize_embedding(r.vector, r.id);
            rows.push_back(to_json(r));
        }
        write_jsonl(in_out(cfg, cfg.paths.embeddings, "article_embeddings.jsonl"), rows);
        std::cout << "indexed " << rows.size() << " articles with " << embedder->name() << '\n';
    });

    // ---- gen-candidates
    auto* gen = app.add_subcommand("gen-candidates", "implicit candidates by nearest-neighbour retrieval");
    EmbedderFlags gen_embedder;
    gen_embedder.add(gen);
    std::optional<std::size_t> gen_k;
    std::optional<double> gen_tau;
    bool no_tau_prune = false;
    gen->add_option("--k", gen_k, "neighbours per chunk");
    gen->add_option("--tau", gen_tau, "distance threshold");
    gen->add_flag("--no-tau-prune", no_tau_prune, "keep neighbours beyond tau");
    gen->callback([&] {
        resolve();
        if (gen_k) cfg.k = *gen_k;
        if (gen_tau) cfg.tau = *gen_tau;
        cfg.validate();
        ensure_out_dir(cfg);
        const auto store = load_store(in_out(cfg, {}, "decisions.jsonl"), {});
        const auto chunks = load_chunks(in_out(cfg, {}, "chunks.jsonl"));
        const auto index = VectorIndex::build(load_file(in_out(cfg, cfg.paths.embeddings, "article_embeddings.jsonl"),
                                                        [](std::istream& in) { return load_embeddings(in); }));
        const auto renum = load_renumbering(cfg.paths.renumbering);
        std::vector<std::string> ids;
        for (const auto& d : store.decisions()) ids.push_back(d.id);
        const auto mentions = decision_mentions(store, ids);
        ImplicitOptions opts{cfg.k, cfg.tau, !no_tau_prune, cfg.jobs};
        ImplicitReport report;
        auto embedder = gen_embedder.make();
        const auto pairs = generate_implicit_candidates(chunks, *embedder, index, mentions, renum, opts, &report);
        {
            auto out = open_output(in_out(cfg, {}, "candidates.jsonl"));
            write_candidates(out, pairs);
        }
        auto rj = to_json(report);
        rj["k"] = cfg.k;
        rj["tau"] = cfg.tau;
        rj["prune_by_tau"] = opts.prune_by_tau;
        write_json(in_out(cfg, {}, "candidates_report.json"), rj);
        std::cout << "candidates " << pairs.size() << " (chunks " << report.chunks << ", keyword chunks "
                  << report.keyword_chunks << ", beyond tau " << report.beyond_tau << ", cited "
                  << report.cited_in_decision << ")\n";
    });

    // ---- filter
    auto* filter = app.add_subcommand("filter", "adversarial LLM filter over implicit candidates");
    ScorerFlags filter_scorer;
    filter_scorer.add(filter);
    std::string filter_model = "adversary", filter_cache;
    filter->add_option("--model", filter_model, "model id for the adversarial verdicts");
    filter->add_option("--cache", filter_cache, "checkpoint cache (default: out-dir/cache/filter.jsonl)");
    filter->callback([&] {
        resolve();
        ensure_out_dir(cfg);
        if (cfg.paths.prompts.empty()) throw ValidationError("prompt directory not set (config paths.prompts or LEXCITE_PROMPTS)");
        const auto prompts = PromptLibrary::load(cfg.paths.prompts);
        const auto& tmpl = prompts.get(TemplateId::adversarial_strict);
        const auto store = load_store({}, in_out(cfg, cfg.paths.articles, "articles.jsonl"));
        const auto chunks = load_chunks(in_out(cfg, {}, "chunks.jsonl"));
        const auto by = chunk_map(chunks);
        const auto pairs = load_pairs(in_out(cfg, {}, "candidates.jsonl"));
        std::vector<ScoreRequest> reqs;
        for (const auto& p : pairs) {
            const auto* a = store.find_article(p.article_number);
            if (!a) throw NotFoundError("article " + p.article_number + " (pair " + p.pair_id + ")");
            auto c = by.find(p.chunk_ref());
            if (c == by.end()) throw NotFoundError("chunk " + p.chunk_ref() + " (pair " + p.pair_id + ")");
            reqs.push_back(adversarial_request(p, c->second->text, *a, tmpl, filter_model));
        }
        const auto cache_path = in_out(cfg, filter_cache, "cache/filter.jsonl");
        fs::create_directories(fs::path(cache_path).parent_path());
        ScoreCache cache(cache_path);
        auto transport = filter_scorer.make(cfg);
        FetchOptions fo;
        fo.concurrency = cfg.jobs ? cfg.jobs : 4;
        const auto res = adversarial_filter(pairs, reqs, *transport, &cache, fo);
        {
            auto out = open_output(in_out(cfg, {}, "positives.jsonl"));
            write_candidates(out, res.positives);
        }
        std::vector<json> rejects;
        for (const auto& r : res.unparseable) rejects.push_back(to_json(r));
        write_jsonl(in_out(cfg, {}, "filter_rejects.jsonl"), rejects);
        write_json(in_out(cfg, {}, "filter_report.json"),
                   {{"candidates", pairs.size()},
                    {"positives", res.positives.size()},
                    {"negatives", res.negatives},
                    {"unparseable", res.unparseable.size()},
                    {"transport", transport->name()},
                    {"model", filter_model}});
        std::cout << "positives " << res.positives.size() << " / " << pairs.size() << " (unparseable "
                  << res.unparseable.size() << ", cache hits " << res.cache_hits << ", calls " << res.transport_calls
                  << ")\n";
    });

    // ---- score
    auto* score = app.add_subcommand("score", "zero-shot verdicts, cross-encoder and lexical scores per pair");
    ScorerFlags score_scorer;
    score_scorer.add(score);
    std::string score_models = "cam,juri,saul,mini", score_cross = "cross-encoder", score_pairs, score_cache;
    std::string score_template = "zeroshot_binary";
    score->add_option("--models", score_models, "four verdict models, comma separated");
    score->add_option("--cross-model", score_cross, "cross-encoder model id");
    score->add_option("--template", score_template, "zeroshot_binary or zeroshot_reasoning");
    score->add_option("--pairs", score_pairs, "pairs to score (default: out-dir/positives.jsonl)");
    score->add_option("--cache", score_cache, "score cache (default: out-dir/cache/score.jsonl)");
    score->callback([&] {
        resolve();
        ensure_out_dir(cfg);
        std::vector<std::string> models;
        for (auto& m : parse_list<std::string>(score_models, "--models")) models.push_back(m);
        if (models.size() != 4) throw ValidationError("--models needs exactly 4 model ids");
        const auto tid = parse_template_id(score_template);
        if (cfg.paths.prompts.empty()) throw ValidationError("prompt directory not set (config paths.prompts or LEXCITE_PROMPTS)");
        const auto prompts = PromptLibrary::load(cfg.paths.prompts);
        const auto& tmpl = prompts.get(tid);
        const auto store = load_store({}, in_out(cfg, cfg.paths.articles, "articles.jsonl"));
        const auto chunks = load_chunks(in_out(cfg, {}, "chunks.jsonl"));
        const auto by = chunk_map(chunks);
        const auto pairs = load_pairs(in_out(cfg, score_pairs, "positives.jsonl"));
        std::vector<std::string> docs;
        for (const auto* a : store.articles()) docs.push_back(a->text);
        for (const auto& c : chunks) docs.push_back(c.text);
        const auto lex = LexicalModel::fit(docs);

        std::vector<ScoreRequest> reqs;
        for (const auto& p : pairs) {
            const auto* a = store.find_article(p.article_number);
            if (!a) throw NotFoundError("article " + p.article_number + " (pair " + p.pair_id + ")");
            auto c = by.find(p.chunk_ref());
            if (c == by.end()) throw NotFoundError("chunk " + p.chunk_ref() + " (pair " + p.pair_id + ")");
            for (const auto& m : models) {
                ScoreRequest r;
                r.pair_id = p.pair_id;
                r.model_id = m;
                r.kind = ScoreKind::llm_verdict;
                r.template_id = tid;
                r.template_hash = tmpl.hash();
                r.prompt = tmpl.render(a->number, a->text, c->second->text);
                reqs.push_back(std::move(r));
            }
            ScoreRequest x;
            x.pair_id = p.pair_id;
            x.model_id = score_cross;
            x.kind = ScoreKind::cross_encoder;
            x.text_a = c->second->text;
            x.text_b = a->text;
            reqs.push_back(std::move(x));
        }
        const auto cache_path = in_out(cfg, score_cache, "cache/score.jsonl");
        fs::create_directories(fs::path(cache_path).parent_path());
        ScoreCache cache(cache_path);
        auto transport = score_scorer.make(cfg);
        FetchOptions fo;
        fo.concurrency = cfg.jobs ? cfg.jobs : 4;
        const auto res = fetch(reqs, *transport, &cache, fo);
        if (!res.failures.empty()) {
            for (const auto& f : res.failures)
                std::cerr << "unscored " << f.pair_id << " / " << f.model_id << ": " << to_string(f.kind) << ": " << f.message
                          << '\n';
            throw PipelineHalted(res.failures);
        }
        std::vector<json> records, rows;
        const std::size_t per = models.size() + 1;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto& p = pairs[i];
            json verdicts = json::object();
            for (std::size_t m = 0; m < per; ++m) records.push_back(to_json(*res.records[i * per + m]));
            for (std::size_t m = 0; m < models.size(); ++m) verdicts[models[m]] = res.records[i * per + m]->raw;
            const auto& chunk_text = by.at(p.chunk_ref())->text;
            const auto& art_text = store.find_article(p.article_number)->text;
            rows.push_back({{"pair_id", p.pair_id},
                            {"verdicts", verdicts},
                            {"verdict_mode", to_string(mode_for(tid))},
                            {"cross_encoder", res.records[i * per + models.size()]->value},
                            {"tfidf", tfidf_cosine(lex, chunk_text, art_text)},
                            {"bm25", bm25(lex, art_text, chunk_text)}});
        }
        write_jsonl(in_out(cfg, cfg.paths.scores, "scores.jsonl"), records);
        write_jsonl(in_out(cfg, {}, "fusion_inputs.jsonl"), rows);
        std::cout << "scored " << pairs.size() << " pairs x " << per << " (cache hits " << res.cache_hits << ", calls "
                  << res.transport_calls << ")\n";
    });

    // ---- rank
    auto* rank_cmd = app.add_subcommand("rank", "fuse verdicts and scores into a ranking");
    std::string rank_method = "ensemble", rank_input, rank_models, rank_out;
    rank_cmd->add_option("--method", rank_method, "union, inter2, inter3, inter4 or ensemble")
        ->check(CLI::IsMember({"union", "inter2", "inter3", "inter4", "ensemble"}));
    rank_cmd->add_option("--input", rank_input, "fusion_inputs.jsonl (default: out-dir copy)");
    rank_cmd->add_option("--models", rank_models, "verdict slot order, comma separated");
    rank_cmd->add_option("--out", rank_out, "ranking output (default: out-dir/ranking_<method>.jsonl)");
    rank_cmd->callback([&] {
        resolve();
        ensure_out_dir(cfg);
        std::vector<std::string> models;
        if (!rank_models.empty()) models = parse_list<std::string>(rank_models, "--models");
        const auto rows = load_file(in_out(cfg, rank_input, "fusion_inputs.jsonl"),
                                    [&](std::istream& in) { return load_fusion_rows(in, models); });
        FusionQuality q;
        const auto r = fuse(rows, rank_method, cfg.fusion, &q);
        {
            auto out = open_output(in_out(cfg, rank_out, "ranking_" + rank_method + ".jsonl"));
            write_ranking(out, r);
        }
        std::size_t bad = 0;
        for (auto n : q.unparseable) bad += n;
        std::cout << "ranked " << r.items.size() << " pairs by " << rank_method << " (unparseable verdicts counted as no: "
                  << bad << ")\n";
    });

    // ---- eval
    auto* eval = app.add_subcommand("eval", "classification, ranking and cross-validated ensemble evaluation");
    std::string eval_cm, eval_pred, eval_labels, eval_ranking, eval_ks = "38,77,151,211", eval_features, eval_groups;
    std::optional<double> eval_threshold;
    std::size_t eval_folds = 5, eval_inner = 4;
    double eval_l2 = 1e-3;
    bool eval_json = false;
    eval->add_option("--cm", eval_cm, "tp,tn,fp,fn");
    eval->add_option("--predictions", eval_pred, "jsonl {pair_id, probability}");
    eval->add_option("--labels", eval_labels, "label events jsonl (gold is resolved from it)");
    eval->add_option("--threshold", eval_threshold, "fixed threshold (default: MCC-optimal)");
    eval->add_option("--ranking", eval_ranking, "ranking jsonl to score against gold");
    eval->add_option("--ks", eval_ks, "cutoffs for precision/recall at k");
    eval->add_option("--features", eval_features, "features.jsonl {pair_id, model_id, probability}");
    eval->add_option("--groups", eval_groups, "jsonl with pair_id and decision_id");
    eval->add_option("--folds", eval_folds, "outer folds");
    eval->add_option("--inner-folds", eval_inner, "inner folds for threshold tuning");
    eval->add_option("--l2", eval_l2, "L2 strength of the meta-learner");
    eval->add_flag("--json", eval_json, "print JSON");
    eval->callback([&] {
        resolve();
        if (!eval_cm.empty()) {
            const auto v = parse_list<std::size_t>(eval_cm, "--cm");
            if (v.size() != 4) throw ValidationError("--cm needs tp,tn,fp,fn");
            const ConfusionMatrix cm{v[0], v[1], v[2], v[3]};
            const auto m = classification_metrics(cm);
            if (eval_json) std::cout << to_json(m).dump(2) << '\n';
            else
                std::cout << "Precision " << fmt(m.precision) << "\nRecall " << fmt(m.recall) << "\nF1 " << fmt(m.f1)
                          << "\nAccuracy " << fmt(m.accuracy) << "\nMCC " << fmt(m.mcc) << '\n';
            return;
        }
        if (eval_labels.empty()) throw ValidationError("eval needs --cm, or --labels with --predictions, --ranking or --features");
        const auto gold = gold_labels(load_labels(eval_labels));
        if (!eval_ranking.empty()) {
            auto items = load_jsonl<std::pair<std::string, std::size_t>>(eval_ranking, [](const json& j) {
                return std::pair{j.at("pair_id").get<std::string>(), j.at("rank").get<std::size_t>()};
            });
            std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
            std::vector<bool> ranked;
            for (const auto& [pid, _] : items)
                if (auto g = gold.find(pid); g != gold.end()) ranked.push_back(g->second);
            const auto r = precision_recall_at_k(ranked, parse_list<std::size_t>(eval_ks, "--ks"));
            std::cout << to_json(r).dump(2) << '\n';
            return;
        }
        if (!eval_features.empty()) {
            if (eval_groups.empty()) throw ValidationError("--features needs --groups");
            FeatureReport rep;
            const auto t = build_feature_table(load_file(eval_features, [](std::istream& in) { return load_features(in); }),
                                               gold, &rep);
            std::map<std::string, std::string> group_of;
            for (const auto& [p, d] : load_jsonl<std::pair<std::string, std::string>>(eval_groups, [](const json& j) {
                     return std::pair{j.at("pair_id").get<std::string>(), j.at("decision_id").get<std::string>()};
                 }))
                group_of[p] = d;
            std::vector<std::string> groups;
            for (const auto& p : t.pair_ids) {
                auto g = group_of.find(p);
                if (g == group_of.end()) throw NotFoundError("no decision_id for pair " + p + " in " + eval_groups);
                groups.push_back(g->second);
            }
            const auto plan = group_kfold(groups, eval_folds, cfg.seed);
            StackOptions so;
            so.lr.l2 = eval_l2;
            so.inner_folds = eval_inner;
            so.seed = cfg.seed;
            const auto res = nested_stack(t, groups, plan, so);
            json report;
            report["rows"] = t.rows();
            report["models"] = t.models;
            report["excluded"] = {{"incomplete", rep.incomplete}, {"unlabeled", rep.unlabeled}};
            report["fold_sizes"] = plan.sizes();
            json folds = json::array();
            for (std::size_t f = 0; f < res.folds.size(); ++f) {
                auto fj = to_json(res.folds[f]);
                std::vector<double> p;
                std::vector<bool> y;
                for (std::size_t i = 0; i < t.rows(); ++i)
                    if (plan.fold[i] == f) {
                        p.push_back(res.oof[i]);
                        y.push_back(t.y[i]);
                    }
                if (res.folds[f].inner_threshold)
                    fj["metrics_at_inner_threshold"] =
                        to_json(classification_metrics(confusion(apply_threshold(p, *res.folds[f].inner_threshold), y)));
                folds.push_back(fj);
            }
            report["folds"] = folds;
            const auto best = optimize_threshold(res.oof, t.y);
            report["pooled"] = {{"threshold", best.threshold},
                                {"metrics", to_json(classification_metrics(best.cm))},
                                {"average_precision", opt_json(average_precision(
                                                          [&] {
                                                              std::vector<std::size_t> order(t.rows());
                                                              std::iota(order.begin(), order.end(), 0);
                                                              const auto rk = ranks_desc(res.oof, t.pair_ids);
                                                              std::sort(order.begin(), order.end(),
                                                                        [&](auto a, auto b) { return rk[a] < rk[b]; });
                                                              std::vector<bool> r;
                                                              for (auto i : order) r.push_back(t.y[i]);
                                                              return r;
                                                          }()))}};
            // per-model thresholds on the pooled base probabilities
            json per_model = json::object();
            for (std::size_t m = 0; m < t.models.size(); ++m) {
                std::vector<double> col(t.X.col(Eigen::Index(m)).data(), t.X.col(Eigen::Index(m)).data() + t.rows());
                const auto r = optimize_threshold(col, t.y);
                per_model[t.models[m]] = {{"threshold", r.threshold}, {"metrics", to_json(classification_metrics(r.cm))}};
            }
            report["base_models"] = per_model;
            ensure_out_dir(cfg);
            write_json(in_out(cfg, {}, "cv_report.json"), report);
            std::vector<json> oof;
            for (std::size_t i = 0; i < t.rows(); ++i)
                oof.push_back({{"pair_id", t.pair_ids[i]}, {"probability", res.oof[i]}, {"fold", plan.fold[i]}});
            write_jsonl(in_out(cfg, {}, "oof_predictions.jsonl"), oof);
            std::cout << "stacking: threshold " << fmt(best.threshold) << ", MCC " << fmt(best.mcc) << '\n';
            return;
        }
        if (eval_pred.empty()) throw ValidationError("eval needs --predictions, --ranking or --features with --labels");
        std::vector<double> p;
        std::vector<bool> y;
        for (const auto& [pid, prob] : load_jsonl<std::pair<std::string, double>>(eval_pred, [](const json& j) {
                 return std::pair{j.at("pair_id").get<std::string>(), j.at("probability").get<double>()};
             }))
            if (auto g = gold.find(pid); g != gold.end()) {
                p.push_back(prob);
                y.push_back(g->second);
            }
        const double t = eval_threshold ? *eval_threshold : optimize_threshold(p, y).threshold;
        const auto cm = confusion(apply_threshold(p, t), y);
        auto j = to_json(classification_metrics(cm));
        j["threshold"] = t;
        j["confusion"] = {{"tp", cm.tp}, {"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}};
        std::cout << j.dump(2) << '\n';
    });

    // ---- stats
    auto* stats = app.add_subcommand("stats", "agreement, significance, FDR and calibration");
    std::string st_labels, st_fisher, st_bh, st_pred, st_edges;
    double st_alpha = 0.05;
    std::size_t st_bins = 10;
    stats->add_option("--labels", st_labels, "label events jsonl");
    stats->add_option("--fisher", st_fisher, "fp_agree,n_agree,fp_disagree,n_disagree");
    stats->add_option("--bh", st_bh, "p-values, comma separated");
    stats->add_option("--alpha", st_alpha, "FDR level");
    stats->add_option("--calibration", st_pred, "predictions jsonl {pair_id, probability}; needs --labels");
    stats->add_option("--bins", st_bins, "equal-width calibration bins");
    stats->callback([&] {
        resolve();
        json out;
        if (!st_fisher.empty()) {
            const auto v = parse_list<std::size_t>(st_fisher, "--fisher");
            if (v.size() != 4) throw ValidationError("--fisher needs fp_agree,n_agree,fp_disagree,n_disagree");
            out["fp_by_agreement"] = to_json(fp_by_agreement_counts(v[0], v[1], v[2], v[3]));
        }
        if (!st_bh.empty()) out["fdr"] = to_json(bh_fdr(parse_list<double>(st_bh, "--bh"), st_alpha));
        if (!st_labels.empty()) {
            const auto s = load_labels(st_labels);
            if (st_pred.empty()) {
                out["agreement"] = to_json(agreement_report(s));
                json ann = json::object();
                for (const auto& [a, sum] : annotator_summaries(s)) ann[a] = to_json(sum);
                out["annotators"] = ann;
            } else {
                const auto gold = gold_labels(s);
                std::vector<double> p;
                std::vector<bool> y;
                for (const auto& [pid, prob] : load_jsonl<std::pair<std::string, double>>(st_pred, [](const json& j) {
                         return std::pair{j.at("pair_id").get<std::string>(), j.at("probability").get<double>()};
                     }))
                    if (auto g = gold.find(pid); g != gold.end()) {
                        p.push_back(prob);
                        y.push_back(g->second);
                    }
                std::vector<double> edges;
                for (std::size_t i = 0; i <= st_bins; ++i) edges.push_back(double(i) / double(st_bins));
                out["calibration"] = to_json(calibration(p, y, edges));
            }
        }
        if (out.is_null()) throw ValidationError("stats needs --labels, --fisher or --bh");
        std::cout << out.dump(2) << '\n';
    });

    // ---- serve
    auto* serve = app.add_subcommand("serve", "annotation service");
    std::string sv_host = "127.0.0.1", sv_pairs, sv_log, sv_snapshot, sv_method = "ensemble";
    std::vector<std::string> sv_rankings;
    int sv_port = 8080;
    serve->add_option("--host", sv_host, "bind address");
    serve->add_option("--port", sv_port, "port");
    serve->add_option("--pairs", sv_pairs, "pairs under review (default: out-dir/positives.jsonl)");
    serve->add_option("--ranking", sv_rankings, "method=path, repeatable (default: every out-dir/ranking_*.jsonl)");
    serve->add_option("--default-method", sv_method, "ranking used when a request names none");
    serve->add_option("--label-log", sv_log, "append-only label log (default: out-dir/labels.jsonl)");
    serve->add_option("--snapshot", sv_snapshot, "label snapshot (default: out-dir/labels.snapshot.json)");
    serve->callback([&] {
        resolve();
        ensure_out_dir(cfg);
        ServiceData d;
        const auto dpath = in_out(cfg, {}, "decisions.jsonl");
        d.store = load_store(fs::exists(dpath) ? dpath : std::string{}, in_out(cfg, cfg.paths.articles, "articles.jsonl"));
        const auto cpath = in_out(cfg, {}, "chunks.jsonl");
        if (fs::exists(cpath))
            for (auto& c : load_chunks(cpath)) d.chunks[chunk_key(c.decision_id, c.index)] = std::move(c);
        for (auto& p : load_pairs(in_out(cfg, sv_pairs, "positives.jsonl"))) d.pairs[p.pair_id] = std::move(p);
        auto load_ranking = [&](const std::string& method, const std::string& path) {
            Ranking r{method, {}};
            r.items = load_jsonl<RankedItem>(path, [](const json& j) {
                return RankedItem{j.at("pair_id").get<std::string>(), j.at("score").get<double>(), j.at("rank").get<std::size_t>()};
            });
            std::sort(r.items.begin(), r.items.end(), [](const auto& a, const auto& b) { return a.rank < b.rank; });
            d.rankings[method] = std::move(r);
        };
        if (sv_rankings.empty()) {
            const fs::path dir = cfg.paths.out_dir.empty() ? "." : cfg.paths.out_dir;
            for (const char* m : {"union", "inter2", "inter3", "inter4", "ensemble"})
                if (auto p = dir / ("ranking_" + std::string(m) + ".jsonl"); fs::exists(p)) load_ranking(m, p.string());
        } else {
            for (const auto& spec : sv_rankings) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos) throw ValidationError("--ranking expects method=path");
                load_ranking(spec.substr(0, eq), spec.substr(eq + 1));
            }
        }
        d.default_method = sv_method;
        LabelStore labels(in_out(cfg, sv_log, "labels.jsonl"), in_out(cfg, sv_snapshot, "labels.snapshot.json"));
        Service svc(std::move(d), labels);
        httplib::Server server;
        svc.mount(server);
        static httplib::Server* running = nullptr;
        running = &server;
        std::signal(SIGINT, [](int) { running->stop(); });
        std::signal(SIGTERM, [](int) { running->stop(); });
        std::cout << "listening on " << sv_host << ':' << sv_port << std::endl;
        if (!server.listen(sv_host, sv_port)) throw Error("cannot listen on " + sv_host + ":" + std::to_string(sv_port));
        labels.snapshot();
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kUsage;
    } catch (const PipelineHalted& e) {
        std::cerr << "error: " << e.what() << '\n';
        for (const auto& f : e.failures())
            std::cerr << "  " << f.pair_id << " / " << f.model_id << ": " << to_string(f.kind) << '\n';
        return kHalted;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const NotFoundError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
