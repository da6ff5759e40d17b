#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "semdpo/embedder.hpp"
#include "semdpo/policy.hpp"
#include "semdpo/vocab.hpp"

namespace semdpo {

// One preference example: prompt, preferred/dispreferred rewrites, the
// preferred rewrite's embedding drift from the prompt, and the stored
// weight exp(-alpha * drift_d) for the alpha recorded in the dataset header.
struct PreferencePair {
    std::string x_text;
    std::string yw_text;
    std::string yl_text;
    TokenSeq x;
    TokenSeq y_w;
    TokenSeq y_l;
    double drift_d = 0.0;
    double weight = 1.0;
    EmbeddingVector xe; // embed(x_text), cached at build/load time
};

struct LossConfig {
    double alpha = 8.0;
    double beta = 0.05;
    double tau = 0.5;

    void validate() const {
        if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
            throw std::invalid_argument("LossConfig: alpha must be >= 0");
        }
        if (!(beta > 0.0) || !std::isfinite(beta)) {
            throw std::invalid_argument("LossConfig: beta must be > 0");
        }
        if (!(tau > 0.0 && tau <= 1.0)) {
            throw std::invalid_argument("LossConfig: tau must be in (0,1]");
        }
    }
};

enum class Mode { kDpo, kSemdpo, kHardFilter };

inline Mode parse_mode(const std::string& s) {
    if (s == "dpo") return Mode::kDpo;
    if (s == "semdpo") return Mode::kSemdpo;
    if (s == "hardfilter") return Mode::kHardFilter;
    throw std::invalid_argument("unknown mode: " + s);
}

inline const char* mode_name(Mode m) {
    switch (m) {
        case Mode::kDpo: return "dpo";
        case Mode::kSemdpo: return "semdpo";
        case Mode::kHardFilter: return "hardfilter";
    }
    throw std::invalid_argument("mode_name: bad mode");
}

// sigma(z) without exp overflow on either tail.
inline double stable_sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// exp(-alpha * d): 1 at zero drift, strictly decreasing in both arguments.
inline double semantic_weight(double alpha, double d) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw std::invalid_argument("semantic_weight: alpha must be >= 0");
    }
    if (!(d >= 0.0) || !std::isfinite(d)) {
        throw std::invalid_argument("semantic_weight: d must be >= 0");
    }
    return std::exp(-alpha * d);
}

// beta * ((lpw_theta - lpw_ref) - (lpl_theta - lpl_ref)).
inline double delta_logodds(double beta, double lpw_theta, double lpw_ref,
                            double lpl_theta, double lpl_ref) {
    if (!std::isfinite(beta) || !std::isfinite(lpw_theta) || !std::isfinite(lpw_ref) ||
        !std::isfinite(lpl_theta) || !std::isfinite(lpl_ref)) {
        throw std::invalid_argument("delta_logodds: non-finite input");
    }
    return beta * ((lpw_theta - lpw_ref) - (lpl_theta - lpl_ref));
}

// -log sigma(delta) = softplus(-delta), computed as
// max(-delta, 0) + log1p(exp(-|delta|)) so neither tail overflows.
inline double pair_loss(double delta) {
    if (!std::isfinite(delta)) {
        throw std::invalid_argument("pair_loss: non-finite delta");
    }
    return std::max(-delta, 0.0) + std::log1p(std::exp(-std::fabs(delta)));
}

inline double semdpo_pair_loss(double weight, double delta) {
    if (!(weight > 0.0 && weight <= 1.0)) {
        throw std::invalid_argument("semdpo_pair_loss: weight must be in (0,1]");
    }
    return weight * pair_loss(delta);
}

inline double hard_filter_pair_loss(double tau, double d, double delta) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("hard_filter_pair_loss: tau must be > 0");
    }
    return d <= tau ? pair_loss(delta) : 0.0;
}

inline double implicit_reward(double beta, double lp_theta, double lp_ref) {
    return beta * (lp_theta - lp_ref);
}

inline double bt_preference_prob(double r_w, double r_l) {
    return stable_sigmoid(r_w - r_l);
}

namespace detail {

inline double pair_delta(const PreferencePair& pair, const PolicyParams& p,
                         const PolicyParams& ref, double beta) {
    const double lpw_theta = sequence_logprob(p, pair.xe, pair.y_w);
    const double lpl_theta = sequence_logprob(p, pair.xe, pair.y_l);
    const double lpw_ref = sequence_logprob(ref, pair.xe, pair.y_w);
    const double lpl_ref = sequence_logprob(ref, pair.xe, pair.y_l);
    return delta_logodds(beta, lpw_theta, lpw_ref, lpl_theta, lpl_ref);
}

// Per-pair loss for a mode. The semdpo branch consumes the stored weight;
// callers keep stored weights consistent with cfg.alpha (see reweight_pairs).
inline double mode_pair_loss(Mode mode, const PreferencePair& pair, double delta,
                             const LossConfig& cfg) {
    switch (mode) {
        case Mode::kDpo: return pair_loss(delta);
        case Mode::kSemdpo: return semdpo_pair_loss(pair.weight, delta);
        case Mode::kHardFilter: return hard_filter_pair_loss(cfg.tau, pair.drift_d, delta);
    }
    throw std::invalid_argument("mode_pair_loss: bad mode");
}

inline double mode_weight(Mode mode, const PreferencePair& pair, const LossConfig& cfg) {
    switch (mode) {
        case Mode::kDpo: return 1.0;
        case Mode::kSemdpo: return pair.weight;
        case Mode::kHardFilter: return pair.drift_d <= cfg.tau ? 1.0 : 0.0;
    }
    throw std::invalid_argument("mode_weight: bad mode");
}

} // namespace detail

// Arithmetic mean over pairs of the per-pair loss, in dataset order.
inline double batch_loss(const std::vector<PreferencePair>& dataset,
                         const PolicyParams& p, const PolicyParams& ref,
                         const LossConfig& cfg, Mode mode) {
    if (dataset.empty()) throw std::invalid_argument("batch_loss: empty dataset");
    cfg.validate();
    double total = 0.0;
    for (const auto& pair : dataset) {
        const double delta = detail::pair_delta(pair, p, ref, cfg.beta);
        total += detail::mode_pair_loss(mode, pair, delta, cfg);
    }
    return total / static_cast<double>(dataset.size());
}

// Mean over pairs of
//   w_eff * sigma(-delta) * (-beta) * (grad logpi(y_w|x) - grad logpi(y_l|x))
// with w_eff = 1 (dpo), stored weight (semdpo), or 1{d <= tau} (hardfilter).
// The reference policy contributes no gradient.
inline PolicyGrad batch_grad(const std::vector<PreferencePair>& dataset,
                             const PolicyParams& p, const PolicyParams& ref,
                             const LossConfig& cfg, Mode mode) {
    if (dataset.empty()) throw std::invalid_argument("batch_grad: empty dataset");
    cfg.validate();
    PolicyGrad g(p);
    for (const auto& pair : dataset) {
        const double w_eff = detail::mode_weight(mode, pair, cfg);
        if (w_eff == 0.0) continue;
        const double delta = detail::pair_delta(pair, p, ref, cfg.beta);
        const double coef = w_eff * stable_sigmoid(-delta) * (-cfg.beta);
        accumulate_logprob_grad(p, pair.xe, pair.y_w, coef, g);
        accumulate_logprob_grad(p, pair.xe, pair.y_l, -coef, g);
    }
    g.scale(1.0 / static_cast<double>(dataset.size()));
    return g;
}

// Teacher-forced example for supervised fine-tuning.
struct SftExample {
    std::string x_text;
    EmbeddingVector xe;
    TokenSeq y;
};

inline double sft_nll(const std::vector<SftExample>& dataset, const PolicyParams& p) {
    if (dataset.empty()) throw std::invalid_argument("sft_nll: empty dataset");
    double total = 0.0;
    for (const auto& ex : dataset) {
        total += -sequence_logprob(p, ex.xe, ex.y);
    }
    return total / static_cast<double>(dataset.size());
}

inline PolicyGrad sft_grad(const std::vector<SftExample>& dataset, const PolicyParams& p) {
    if (dataset.empty()) throw std::invalid_argument("sft_grad: empty dataset");
    PolicyGrad g(p);
    const double scale = -1.0 / static_cast<double>(dataset.size());
    for (const auto& ex : dataset) {
        accumulate_logprob_grad(p, ex.xe, ex.y, scale, g);
    }
    return g;
}

} // namespace semdpo
