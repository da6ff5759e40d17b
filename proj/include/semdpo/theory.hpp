#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "semdpo/embedder.hpp"
#include "semdpo/objectives.hpp"
#include "semdpo/prng.hpp"

namespace semdpo {

// sup over d >= 0 of |exp(-alpha*d) - 1{d <= tau}|. The two candidate
// extremes are d -> tau+ (gap e^{-alpha*tau}) and d = tau (gap
// 1 - e^{-alpha*tau}); the latter branch is the larger one iff
// alpha*tau >= ln 2.
inline double pointwise_weight_gap_bound(double alpha, double tau) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw std::invalid_argument("pointwise_weight_gap_bound: alpha must be >= 0");
    }
    if (!(tau > 0.0)) {
        throw std::invalid_argument("pointwise_weight_gap_bound: tau must be > 0");
    }
    const double e = std::exp(-alpha * tau);
    return std::max(1.0 - e, e);
}

// Numerical audit of the deviation bound between the smoothly weighted
// objective and the hard-filtered one at a fixed parameter state.
struct Prop1Report {
    double lhs_gap = 0.0;         // |L_weighted - L_filtered|
    double M_emp = 0.0;           // max per-pair |loss| over the dataset
    double mean_weight_gap = 0.0; // mean |W(d) - 1{d <= tau}|
    double chain_bound = 0.0;     // M_emp * mean_weight_gap
    double pointwise_bound = 0.0; // M_emp * max(1-e^{-alpha*tau}, e^{-alpha*tau})
    double paper_bound = 0.0;     // M_emp * (1 - e^{-alpha*tau})
    bool holds_chain = false;
    bool holds_pointwise = false;
    bool holds_paper = false;
};

// Weights are recomputed here as exp(-cfg.alpha * drift_d) so the report is a
// pure function of (dataset drifts, params, cfg) regardless of the alpha the
// dataset file was stored with.
inline Prop1Report verify_prop1(const std::vector<PreferencePair>& dataset,
                                const PolicyParams& p, const PolicyParams& ref,
                                const LossConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("verify_prop1: empty dataset");
    cfg.validate();
    Prop1Report r;
    double sum_weighted = 0.0;
    double sum_filtered = 0.0;
    double sum_gap = 0.0;
    for (const auto& pair : dataset) {
        const double delta = detail::pair_delta(pair, p, ref, cfg.beta);
        const double ell = pair_loss(delta);
        const double w = semantic_weight(cfg.alpha, pair.drift_d);
        const double ind = pair.drift_d <= cfg.tau ? 1.0 : 0.0;
        sum_weighted += w * ell;
        sum_filtered += ind * ell;
        sum_gap += std::fabs(w - ind);
        r.M_emp = std::max(r.M_emp, std::fabs(ell));
    }
    const double n = static_cast<double>(dataset.size());
    r.lhs_gap = std::fabs(sum_weighted / n - sum_filtered / n);
    r.mean_weight_gap = sum_gap / n;
    r.chain_bound = r.M_emp * r.mean_weight_gap;
    r.pointwise_bound = r.M_emp * pointwise_weight_gap_bound(cfg.alpha, cfg.tau);
    r.paper_bound = r.M_emp * (1.0 - std::exp(-cfg.alpha * cfg.tau));
    r.holds_chain = r.lhs_gap <= r.chain_bound;
    r.holds_pointwise = r.lhs_gap <= r.pointwise_bound;
    r.holds_paper = r.lhs_gap <= r.paper_bound;
    return r;
}

// ye + r*u with u a uniformly random unit direction (normalized Gaussian
// draws) and r uniform in [0, epsilon]; hence ||output - ye|| = r <= epsilon.
// Draw order per call: dim Gaussians, then one u01 for r.
inline EmbeddingVector synth_t2i_generate(const EmbeddingVector& ye, double epsilon,
                                          Prng& rng) {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
        throw std::invalid_argument("synth_t2i_generate: epsilon must be >= 0");
    }
    const int dim = ye.dim();
    std::vector<double> dir(static_cast<std::size_t>(dim));
    double norm_sq = 0.0;
    for (auto& v : dir) {
        v = rng.gaussian();
        norm_sq += v * v;
    }
    const double r = epsilon * rng.u01();
    EmbeddingVector out = ye;
    if (r == 0.0) return out;
    const double norm = std::sqrt(norm_sq);
    if (norm == 0.0) {
        out.values[0] += r;
        return out;
    }
    for (int i = 0; i < dim; ++i) {
        out.values[static_cast<std::size_t>(i)] +=
            r * (dir[static_cast<std::size_t>(i)] / norm);
    }
    return out;
}

struct Prop2Item {
    double d_t2i_drift = 0.0;     // ||e(x) - E_img||
    double d_semantic_drift = 0.0; // ||e(x) - e(y)||
    double d_t2i = 0.0;            // ||e(y) - E_img||
};

struct Prop2Report {
    double epsilon = 0.0;
    std::vector<Prop2Item> items;
    std::int64_t violations = 0;
};

// For each (x, y): embed both, perturb e(y) into a synthetic image embedding
// within epsilon, and check the Euclidean triangle-inequality chain
// ||e(x) - E_img|| <= ||e(x) - e(y)|| + epsilon. Item index i uses the
// derived stream seed (rng_seed XOR i) so items are order-independent.
inline Prop2Report verify_prop2(const std::vector<std::pair<std::string, std::string>>& items,
                                double epsilon, std::uint64_t rng_seed,
                                const EmbedderConfig& ecfg = EmbedderConfig{}) {
    if (items.empty()) throw std::invalid_argument("verify_prop2: empty input");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
        throw std::invalid_argument("verify_prop2: epsilon must be >= 0");
    }
    Prop2Report report;
    report.epsilon = epsilon;
    report.items.resize(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        Prng rng = item_stream(rng_seed, static_cast<std::uint64_t>(i));
        const EmbeddingVector ex = embed(items[i].first, ecfg);
        const EmbeddingVector ey = embed(items[i].second, ecfg);
        const EmbeddingVector img = synth_t2i_generate(ey, epsilon, rng);
        Prop2Item& item = report.items[i];
        item.d_t2i_drift = euclidean_distance(ex, img);
        item.d_semantic_drift = euclidean_distance(ex, ey);
        item.d_t2i = euclidean_distance(ey, img);
        if (item.d_t2i_drift > item.d_semantic_drift + epsilon) {
            report.violations += 1;
        }
    }
    return report;
}

} // namespace semdpo
