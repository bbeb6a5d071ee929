#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <atomic>
#include <exception>
#include <mutex>
#include <vector>

namespace lexcite {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
  public:
    using Error::Error;
};

class NotFoundError : public Error {
  public:
    using Error::Error;
};

// Line-numbered schema error for line-delimited inputs.
class RecordError : public ValidationError {
  public:
    RecordError(std::size_t line, const std::string& what)
        : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

  private:
    std::size_t line_;
};

// Civil Code article number: digits with an optional dash suffix ("1352-9").
class ArticleNumber {
  public:
    ArticleNumber() = default;

    static std::optional<ArticleNumber> parse(std::string_view s) {
        if (s.empty()) return std::nullopt;
        std::uint32_t base = 0;
        std::optional<std::uint32_t> suffix;
        std::size_t i = 0;
        if (!read_uint(s, i, base)) return std::nullopt;
        if (i < s.size()) {
            if (s[i] != '-') return std::nullopt;
            ++i;
            std::uint32_t suf = 0;
            if (!read_uint(s, i, suf) || i != s.size()) return std::nullopt;
            suffix = suf;
        }
        return ArticleNumber(base, suffix);
    }

    static ArticleNumber from(std::string_view s) {
        auto n = parse(s);
        if (!n) throw ValidationError("malformed article number '" + std::string(s) + "'");
        return *n;
    }

    ArticleNumber(std::uint32_t base, std::optional<std::uint32_t> suffix = std::nullopt)
        : base_(base), suffix_(suffix) {}

    std::uint32_t base() const noexcept { return base_; }
    std::optional<std::uint32_t> suffix() const noexcept { return suffix_; }

    std::string str() const {
        std::string out = std::to_string(base_);
        if (suffix_) out += "-" + std::to_string(*suffix_);
        return out;
    }

    // Numeric order: 1352 < 1352-1 < 1352-10 < 1353.
    friend std::strong_ordering operator<=>(const ArticleNumber& a, const ArticleNumber& b) {
        if (auto c = a.base_ <=> b.base_; c != 0) return c;
        const std::int64_t sa = a.suffix_ ? static_cast<std::int64_t>(*a.suffix_) : -1;
        const std::int64_t sb = b.suffix_ ? static_cast<std::int64_t>(*b.suffix_) : -1;
        return sa <=> sb;
    }
    friend bool operator==(const ArticleNumber&, const ArticleNumber&) = default;

  private:
    static bool read_uint(std::string_view s, std::size_t& i, std::uint32_t& out) {
        const std::size_t start = i;
        std::uint64_t v = 0;
        while (i < s.size() && s[i] >= '0' && s[i] <= '9') {
            v = v * 10 + static_cast<std::uint64_t>(s[i] - '0');
            if (v > 0xFFFFFFFFULL) return false;
            ++i;
        }
        out = static_cast<std::uint32_t>(v);
        return i > start;
    }

    std::uint32_t base_ = 0;
    std::optional<std::uint32_t> suffix_;
};

// Orders article-number strings numerically, falling back to byte order for
// strings that are not well-formed numbers.
inline bool article_less(std::string_view a, std::string_view b) {
    const auto na = ArticleNumber::parse(a);
    const auto nb = ArticleNumber::parse(b);
    if (na && nb) return *na < *nb;
    if (na != nb) return static_cast<bool>(na);
    return a < b;
}

using Rng = std::mt19937_64;

// Uniform index in [0, n) by rejection sampling. std::uniform_int_distribution
// is implementation-defined, this is not.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    if (n == 0) throw Error("uniform_index over empty range");
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t x = 0;
    do {
        x = rng();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

template <typename T>
void seeded_shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::swap(items[i - 1], items[uniform_index(rng, i)]);
    }
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform_unit(Rng& rng) {
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

// Calls `fn(line_number, line)` for every non-blank line; line numbers are 1-based.
inline void for_each_line(std::istream& in, const std::function<void(std::size_t, const std::string&)>& fn) {
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        fn(n, line);
    }
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open input file '" + path + "'");
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open output file '" + path + "'");
    return out;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads (0 = hardware). Results
// must be written to per-index slots so output order never depends on
// scheduling. The first exception is rethrown after all workers stop.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min(jobs, n);
    if (jobs <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            while (!failed.load()) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) break;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mu);
                    if (!error) error = std::current_exception();
                    failed = true;
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace lexcite
