#pragma once

// Exact nearest neighbours over L2-normalised embeddings by flat scan.
// Distances are squared L2; for unit vectors that is 2 - 2 cos.

#include <algorithm>
#include <cmath>
#include <istream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lexcite/common.hpp"

namespace lexcite {

inline constexpr double kDefaultTau = 0.574;

using Embedding = std::vector<double>;

struct EmbeddingRecord {
    std::string id;
    Embedding vector;
};

// Unit-normalises in place; rejects empty, non-finite and zero vectors.
inline void normalize_embedding(Embedding& v, const std::string& id = {}) {
    if (v.empty()) throw ValidationError("empty embedding " + id);
    double sq = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) throw ValidationError("non-finite embedding value in " + id);
        sq += x * x;
    }
    if (!(sq > 0.0)) throw ValidationError("zero embedding " + id);
    const double inv = 1.0 / std::sqrt(sq);
    for (double& x : v) x *= inv;
}

inline double squared_l2(const Embedding& a, const Embedding& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

struct Neighbor {
    std::string id;
    double distance = 0.0;
};

class VectorIndex {
  public:
    static VectorIndex build(std::vector<EmbeddingRecord> entries) {
        if (entries.empty()) throw ValidationError("vector index needs at least one entry");
        VectorIndex idx;
        idx.dim_ = entries.front().vector.size();
        for (auto& e : entries) {
            if (e.vector.size() != idx.dim_)
                throw ValidationError("dimension mismatch for " + e.id + ": " + std::to_string(e.vector.size()) +
                                      " vs " + std::to_string(idx.dim_));
            normalize_embedding(e.vector, e.id);
        }
        idx.entries_ = std::move(entries);
        return idx;
    }

    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    const std::vector<EmbeddingRecord>& entries() const noexcept { return entries_; }

    // min(k, size) neighbours, ascending distance, ties by article number.
    // The query is normalised first.
    std::vector<Neighbor> knn(Embedding query, std::size_t k) const {
        if (k == 0) throw ValidationError("k must be >= 1");
        if (query.size() != dim_)
            throw ValidationError("query dimension " + std::to_string(query.size()) + " vs index " +
                                  std::to_string(dim_));
        normalize_embedding(query, "query");
        std::vector<Neighbor> all;
        all.reserve(entries_.size());
        for (const auto& e : entries_) all.push_back({e.id, squared_l2(query, e.vector)});
        const std::size_t n = std::min(k, all.size());
        auto less = [](const Neighbor& a, const Neighbor& b) {
            if (a.distance != b.distance) return a.distance < b.distance;
            return article_less(a.id, b.id);
        };
        std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), less);
        all.resize(n);
        return all;
    }

  private:
    std::vector<EmbeddingRecord> entries_;
    std::size_t dim_ = 0;
};

// Inclusive: a distance equal to tau is within.
inline bool within_threshold(double distance, double tau = kDefaultTau) { return distance <= tau; }

// embeddings.jsonl: {"id": ..., "dim": n, "vector": [...]}. Vectors come back normalised.
inline std::vector<EmbeddingRecord> load_embeddings(std::istream& in) {
    std::vector<EmbeddingRecord> out;
    std::size_t dim = 0;
    for_each_line(in, [&](std::size_t line, const std::string& raw) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(raw);
        } catch (const nlohmann::json::exception& e) {
            throw RecordError(line, std::string("malformed JSON: ") + e.what());
        }
        try {
            EmbeddingRecord r;
            r.id = j.at("id").get<std::string>();
            r.vector = j.at("vector").get<std::vector<double>>();
            if (j.contains("dim") && j["dim"].get<std::size_t>() != r.vector.size())
                throw ValidationError("dim field does not match vector length");
            if (dim == 0) dim = r.vector.size();
            if (r.vector.size() != dim) throw ValidationError("inconsistent dimension");
            normalize_embedding(r.vector, r.id);
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw RecordError(line, e.what());
        } catch (const ValidationError& e) {
            throw RecordError(line, e.what());
        }
    });
    return out;
}

inline nlohmann::json to_json(const EmbeddingRecord& r) {
    return {{"id", r.id}, {"dim", r.vector.size()}, {"vector", r.vector}};
}

}  // namespace lexcite
