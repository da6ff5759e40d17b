#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "semdpo/embedder.hpp"
#include "semdpo/prng.hpp"
#include "semdpo/vocab.hpp"

namespace semdpo {

constexpr double kGreedyTemperature = 1e-6;

// Prompt-conditioned bigram policy. For previous token p and prompt
// embedding xe:
//   logits[v] = B[p*V + v] + dot(C[v*embed_dim .. ], xe)
// Rows are stored row-major; the implicit sequence start is BOS.
struct PolicyParams {
    int V = 0;
    int embed_dim = 0;
    std::vector<double> B; // V*V, row-major by previous token
    std::vector<double> C; // V*embed_dim, row-major by next token

    void validate() const {
        if (V < 4) throw std::invalid_argument("PolicyParams: V must be >= 4");
        if (embed_dim < 1) throw std::invalid_argument("PolicyParams: embed_dim must be >= 1");
        if (B.size() != static_cast<std::size_t>(V) * static_cast<std::size_t>(V)) {
            throw std::invalid_argument("PolicyParams: B size mismatch");
        }
        if (C.size() != static_cast<std::size_t>(V) * static_cast<std::size_t>(embed_dim)) {
            throw std::invalid_argument("PolicyParams: C size mismatch");
        }
    }
};

// Gradient accumulator with the same layout as PolicyParams.
struct PolicyGrad {
    std::vector<double> B;
    std::vector<double> C;

    explicit PolicyGrad(const PolicyParams& p)
        : B(p.B.size(), 0.0), C(p.C.size(), 0.0) {}

    void zero() {
        std::fill(B.begin(), B.end(), 0.0);
        std::fill(C.begin(), C.end(), 0.0);
    }

    void scale(double s) {
        for (auto& v : B) v *= s;
        for (auto& v : C) v *= s;
    }

    void add_scaled(const PolicyGrad& other, double s) {
        if (B.size() != other.B.size() || C.size() != other.C.size()) {
            throw std::invalid_argument("PolicyGrad: shape mismatch");
        }
        for (std::size_t i = 0; i < B.size(); ++i) B[i] += s * other.B[i];
        for (std::size_t i = 0; i < C.size(); ++i) C[i] += s * other.C[i];
    }
};

// Uniform init in [-init_scale, init_scale]; B is filled first, then C,
// both in row-major order, one u01 draw per entry.
inline PolicyParams init_params(int V, int embed_dim, Prng& rng,
                                double init_scale) {
    if (init_scale < 0.0 || !std::isfinite(init_scale)) {
        throw std::invalid_argument("init_params: bad init_scale");
    }
    PolicyParams p;
    p.V = V;
    p.embed_dim = embed_dim;
    p.B.resize(static_cast<std::size_t>(V) * static_cast<std::size_t>(V));
    p.C.resize(static_cast<std::size_t>(V) * static_cast<std::size_t>(embed_dim));
    p.validate();
    for (auto& v : p.B) v = init_scale * (2.0 * rng.u01() - 1.0);
    for (auto& v : p.C) v = init_scale * (2.0 * rng.u01() - 1.0);
    return p;
}

inline void check_prompt_dim(const PolicyParams& p, const EmbeddingVector& xe) {
    if (xe.dim() != static_cast<std::size_t>(p.embed_dim)) {
        throw std::invalid_argument("policy: prompt embedding dim mismatch");
    }
}

inline std::vector<double> next_token_logits(const PolicyParams& p, int prev_id,
                                             const EmbeddingVector& xe) {
    if (prev_id < 0 || prev_id >= p.V) {
        throw std::invalid_argument("next_token_logits: prev_id out of range");
    }
    check_prompt_dim(p, xe);
    std::vector<double> logits(static_cast<std::size_t>(p.V));
    const std::size_t brow = static_cast<std::size_t>(prev_id) * static_cast<std::size_t>(p.V);
    for (int v = 0; v < p.V; ++v) {
        double dot = 0.0;
        const std::size_t crow = static_cast<std::size_t>(v) * static_cast<std::size_t>(p.embed_dim);
        for (int k = 0; k < p.embed_dim; ++k) {
            dot += p.C[crow + static_cast<std::size_t>(k)] * xe[k];
        }
        logits[static_cast<std::size_t>(v)] = p.B[brow + static_cast<std::size_t>(v)] + dot;
    }
    return logits;
}

// log(sum_i exp(x_i)) with max subtraction; accumulation runs in ascending
// index order so results are bit-stable.
inline double log_sum_exp(const std::vector<double>& x) {
    if (x.empty()) throw std::invalid_argument("log_sum_exp: empty input");
    double m = x[0];
    for (const double v : x) m = std::max(m, v);
    double s = 0.0;
    for (const double v : x) s += std::exp(v - m);
    return m + std::log(s);
}

// Softmax probabilities over all V tokens (BOS included in the
// normalizer; the model may assign it mass even though sampling masks it).
inline std::vector<double> softmax(const std::vector<double>& logits) {
    std::vector<double> p(logits.size());
    const double lse = log_sum_exp(logits);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - lse);
    }
    return p;
}

// Sum over steps of log softmax(logits)[y_t]; the walk starts at BOS and the
// sequence's terminal EOS contributes its own factor.
inline double sequence_logprob(const PolicyParams& p, const EmbeddingVector& xe,
                               const TokenSeq& seq) {
    if (seq.ids.empty() || seq.ids.back() != kEosId) {
        throw std::invalid_argument("sequence_logprob: sequence must end with EOS");
    }
    check_prompt_dim(p, xe);
    double lp = 0.0;
    int prev = kBosId;
    for (const int y : seq.ids) {
        if (y < 0 || y >= p.V) {
            throw std::invalid_argument("sequence_logprob: token id out of range");
        }
        const auto logits = next_token_logits(p, prev, xe);
        lp += logits[static_cast<std::size_t>(y)] - log_sum_exp(logits);
        prev = y;
    }
    return lp;
}

// Accumulate scale * d(log pi(seq | xe))/d(theta) into grad. Per step the
// softmax gradient is (1{v==y_t} - p_v) applied to B[prev][v] and, scaled by
// the prompt embedding, to C[v][:].
inline void accumulate_logprob_grad(const PolicyParams& p, const EmbeddingVector& xe,
                                    const TokenSeq& seq, double scale,
                                    PolicyGrad& grad) {
    if (seq.ids.empty() || seq.ids.back() != kEosId) {
        throw std::invalid_argument("accumulate_logprob_grad: sequence must end with EOS");
    }
    check_prompt_dim(p, xe);
    if (grad.B.size() != p.B.size() || grad.C.size() != p.C.size()) {
        throw std::invalid_argument("accumulate_logprob_grad: grad shape mismatch");
    }
    int prev = kBosId;
    for (const int y : seq.ids) {
        if (y < 0 || y >= p.V) {
            throw std::invalid_argument("accumulate_logprob_grad: token id out of range");
        }
        const auto logits = next_token_logits(p, prev, xe);
        const auto probs = softmax(logits);
        const std::size_t brow = static_cast<std::size_t>(prev) * static_cast<std::size_t>(p.V);
        for (int v = 0; v < p.V; ++v) {
            const double coef = (v == y ? 1.0 : 0.0) - probs[static_cast<std::size_t>(v)];
            grad.B[brow + static_cast<std::size_t>(v)] += scale * coef;
            const std::size_t crow = static_cast<std::size_t>(v) * static_cast<std::size_t>(p.embed_dim);
            for (int k = 0; k < p.embed_dim; ++k) {
                grad.C[crow + static_cast<std::size_t>(k)] += scale * coef * xe[k];
            }
        }
        prev = y;
    }
}

// Ancestral sampling. BOS is masked out of every step's candidate set. Each
// free step consumes exactly one u01 draw (inverse CDF over ascending token
// ids); the step forced to EOS at max_len consumes none. temperature below
// kGreedyTemperature switches to argmax (first maximum, ascending, BOS
// skipped) and consumes no draws.
inline TokenSeq sample(const PolicyParams& p, const EmbeddingVector& xe,
                       Prng& rng, int max_len = kDefaultMaxLen,
                       double temperature = 1.0) {
    if (max_len < 1) throw std::invalid_argument("sample: max_len must be >= 1");
    if (temperature < 0.0 || !std::isfinite(temperature)) {
        throw std::invalid_argument("sample: bad temperature");
    }
    check_prompt_dim(p, xe);
    TokenSeq seq;
    int prev = kBosId;
    for (int step = 1; step <= max_len; ++step) {
        int chosen;
        if (step == max_len) {
            chosen = kEosId;
        } else {
            const auto logits = next_token_logits(p, prev, xe);
            if (temperature < kGreedyTemperature) {
                chosen = -1;
                double best = 0.0;
                for (int v = 0; v < p.V; ++v) {
                    if (v == kBosId) continue;
                    const double lv = logits[static_cast<std::size_t>(v)];
                    if (chosen < 0 || lv > best) {
                        chosen = v;
                        best = lv;
                    }
                }
            } else {
                std::vector<double> scaled(static_cast<std::size_t>(p.V));
                double m = 0.0;
                bool first = true;
                for (int v = 0; v < p.V; ++v) {
                    if (v == kBosId) continue;
                    const double lv = logits[static_cast<std::size_t>(v)] / temperature;
                    scaled[static_cast<std::size_t>(v)] = lv;
                    if (first || lv > m) {
                        m = lv;
                        first = false;
                    }
                }
                double total = 0.0;
                for (int v = 0; v < p.V; ++v) {
                    if (v == kBosId) continue;
                    total += std::exp(scaled[static_cast<std::size_t>(v)] - m);
                }
                const double u = rng.u01();
                const double target = u * total;
                double cum = 0.0;
                chosen = -1;
                for (int v = 0; v < p.V; ++v) {
                    if (v == kBosId) continue;
                    cum += std::exp(scaled[static_cast<std::size_t>(v)] - m);
                    if (target < cum) {
                        chosen = v;
                        break;
                    }
                }
                if (chosen < 0) {
                    for (int v = p.V - 1; v >= 0; --v) {
                        if (v != kBosId) {
                            chosen = v;
                            break;
                        }
                    }
                }
            }
        }
        seq.ids.push_back(chosen);
        if (chosen == kEosId) break;
        prev = chosen;
    }
    return seq;
}

inline TokenSeq greedy_decode(const PolicyParams& p, const EmbeddingVector& xe,
                              int max_len = kDefaultMaxLen) {
    Prng unused(0);
    return sample(p, xe, unused, max_len, 0.0);
}

// Max relative error between the analytic gradient of sequence_logprob and
// central finite differences, over every coordinate of B and C. The
// denominator max(1, |analytic|, |fd|) keeps near-zero coordinates from
// inflating the ratio.
inline double finite_diff_check(const PolicyParams& params, const EmbeddingVector& xe,
                                const TokenSeq& seq, double epsilon = 1e-5) {
    if (epsilon < 1e-7 || epsilon > 1e-3) {
        throw std::invalid_argument("finite_diff_check: epsilon out of range");
    }
    PolicyGrad analytic(params);
    accumulate_logprob_grad(params, xe, seq, 1.0, analytic);

    PolicyParams probe = params;
    double worst = 0.0;
    auto probe_coord = [&](std::vector<double>& coords, std::size_t i, double a) {
        const double saved = coords[i];
        coords[i] = saved + epsilon;
        const double plus = sequence_logprob(probe, xe, seq);
        coords[i] = saved - epsilon;
        const double minus = sequence_logprob(probe, xe, seq);
        coords[i] = saved;
        const double fd = (plus - minus) / (2.0 * epsilon);
        const double denom = std::max({1.0, std::fabs(a), std::fabs(fd)});
        worst = std::max(worst, std::fabs(a - fd) / denom);
    };
    for (std::size_t i = 0; i < probe.B.size(); ++i) probe_coord(probe.B, i, analytic.B[i]);
    for (std::size_t i = 0; i < probe.C.size(); ++i) probe_coord(probe.C, i, analytic.C[i]);
    return worst;
}

} // namespace semdpo
