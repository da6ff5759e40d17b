#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace semdpo {

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct EmbedderConfig {
    int embed_dim = 64;
    int ngram_size = 3;

    void validate() const {
        if (embed_dim < 2) throw std::invalid_argument("embed_dim must be >= 2");
        if (ngram_size < 1) throw std::invalid_argument("ngram_size must be >= 1");
    }
};

// Unit-norm (L2 within 1e-12) vector of nonnegative entries, or the reserved
// basis vector (1,0,...) for text with no n-grams.
struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
};

// Frozen text embedding: hashed character-trigram term frequencies.
// Lowercase ASCII, trim outer whitespace, pad with '#' on both ends, hash
// every contiguous byte n-gram with FNV-1a into embed_dim slots, then
// L2-normalize (sum of squares accumulated in ascending slot order, which
// pins the result bit-for-bit). Pure function of its inputs.
inline EmbeddingVector embed(std::string_view text, const EmbedderConfig& cfg) {
    cfg.validate();
    const auto dim = static_cast<std::size_t>(cfg.embed_dim);
    const auto n = static_cast<std::size_t>(cfg.ngram_size);

    auto is_space = [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
               c == '\v';
    };
    std::size_t lo = 0;
    std::size_t hi = text.size();
    while (lo < hi && is_space(text[lo])) ++lo;
    while (hi > lo && is_space(text[hi - 1])) --hi;

    EmbeddingVector out;
    out.values.assign(dim, 0.0);
    if (lo == hi) {
        out.values[0] = 1.0; // degenerate text maps to the basis vector
        return out;
    }

    std::string padded;
    padded.reserve(hi - lo + 2);
    padded += '#';
    for (std::size_t i = lo; i < hi; ++i) {
        char c = text[i];
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
        padded += c;
    }
    padded += '#';

    if (padded.size() < n) {
        out.values[0] = 1.0;
        return out;
    }
    for (std::size_t i = 0; i + n <= padded.size(); ++i) {
        const std::uint64_t h = fnv1a64(std::string_view(padded).substr(i, n));
        out.values[h % dim] += 1.0;
    }

    double sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) sq += out.values[i] * out.values[i];
    const double norm = std::sqrt(sq);
    for (std::size_t i = 0; i < dim; ++i) out.values[i] /= norm;
    return out;
}

namespace detail {
inline void check_same_dim(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw std::invalid_argument("embedding dimension mismatch");
    }
}
} // namespace detail

// Dot product of unit vectors, clamped to [-1, 1] so downstream distances
// never go negative by a rounding ulp. Nonnegative inputs land in [0, 1].
inline double cosine_similarity(const EmbeddingVector& a,
                                const EmbeddingVector& b) {
    detail::check_same_dim(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) s += a.values[i] * b.values[i];
    if (s > 1.0) s = 1.0;
    if (s < -1.0) s = -1.0;
    return s;
}

inline double cosine_distance(const EmbeddingVector& a,
                              const EmbeddingVector& b) {
    return 1.0 - cosine_similarity(a, b);
}

inline double euclidean_distance(const EmbeddingVector& a,
                                 const EmbeddingVector& b) {
    detail::check_same_dim(a, b);
    double sq = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double d = a.values[i] - b.values[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

} // namespace semdpo
