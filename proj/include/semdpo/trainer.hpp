#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semdpo/objectives.hpp"
#include "semdpo/policy.hpp"
#include "semdpo/prng.hpp"

namespace semdpo {

// Raised when a training loss goes non-finite; training never clamps.
struct TrainAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TrainMode { kSft, kDpo, kSemdpo, kHardFilter };

inline TrainMode parse_train_mode(const std::string& s) {
    if (s == "sft") return TrainMode::kSft;
    if (s == "dpo") return TrainMode::kDpo;
    if (s == "semdpo") return TrainMode::kSemdpo;
    if (s == "hardfilter") return TrainMode::kHardFilter;
    throw std::invalid_argument("unknown training mode: " + s);
}

inline const char* train_mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::kSft: return "sft";
        case TrainMode::kDpo: return "dpo";
        case TrainMode::kSemdpo: return "semdpo";
        case TrainMode::kHardFilter: return "hardfilter";
    }
    throw std::invalid_argument("train_mode_name: bad mode");
}

inline Mode preference_mode(TrainMode m) {
    switch (m) {
        case TrainMode::kDpo: return Mode::kDpo;
        case TrainMode::kSemdpo: return Mode::kSemdpo;
        case TrainMode::kHardFilter: return Mode::kHardFilter;
        case TrainMode::kSft: break;
    }
    throw std::invalid_argument("preference_mode: sft is not a preference mode");
}

struct TrainConfig {
    TrainMode mode = TrainMode::kSemdpo;
    double alpha = 8.0;
    double beta = 0.05;
    double tau = 0.5;
    double lr = 0.1;       // 0 is allowed: a no-op run that still reports losses
    int epochs = 5;
    int batch_size = 64;
    std::uint64_t seed = 0;
    double init_scale = 0.01;

    void validate() const {
        LossConfig{alpha, beta, tau}.validate();
        if (!(lr >= 0.0) || !std::isfinite(lr)) {
            throw std::invalid_argument("TrainConfig: lr must be finite and >= 0");
        }
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) {
            throw std::invalid_argument("TrainConfig: init_scale must be finite and >= 0");
        }
    }

    LossConfig loss_config() const { return LossConfig{alpha, beta, tau}; }
};

struct TrainResult {
    PolicyParams params;
    std::vector<double> loss_curve; // per-epoch mean of pre-update batch losses
};

// Fresh parameters from the seed's init stream.
inline PolicyParams init_params_seeded(int V, int embed_dim, double init_scale,
                                       std::uint64_t master_seed,
                                       std::uint64_t stage_tag = stage::kTrainInit) {
    Prng rng(derive_stage_seed(master_seed, stage_tag));
    return init_params(V, embed_dim, rng, init_scale);
}

inline void apply_sgd_step(PolicyParams& p, const PolicyGrad& g, double lr) {
    if (g.B.size() != p.B.size() || g.C.size() != p.C.size()) {
        throw std::invalid_argument("apply_sgd_step: shape mismatch");
    }
    for (std::size_t i = 0; i < p.B.size(); ++i) p.B[i] -= lr * g.B[i];
    for (std::size_t i = 0; i < p.C.size(); ++i) p.C[i] -= lr * g.C[i];
}

namespace detail {

inline void check_finite_loss(double loss, int epoch, std::size_t batch_start) {
    if (!std::isfinite(loss)) {
        throw TrainAbort("training aborted: non-finite loss " + std::to_string(loss) +
                         " at epoch " + std::to_string(epoch) + ", batch offset " +
                         std::to_string(batch_start));
    }
}

inline std::vector<std::size_t> identity_order(std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    return order;
}

} // namespace detail

// Minibatch SGD on mean teacher-forced negative log-likelihood. Each epoch
// reshuffles the example order from one continuing stream; batch losses are
// recorded before the step that consumes them.
inline TrainResult train_sft(const TrainConfig& cfg,
                             const std::vector<SftExample>& data,
                             const PolicyParams& init) {
    cfg.validate();
    init.validate();
    if (data.empty()) throw std::invalid_argument("train_sft: empty dataset");
    TrainResult result;
    result.params = init;
    auto order = detail::identity_order(data.size());
    Prng shuffle_rng(derive_stage_seed(cfg.seed, stage::kSftShuffle));
    const std::size_t n = data.size();
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(std::span<std::size_t>(order), shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t end = std::min(start + bs, n);
            std::vector<SftExample> batch;
            batch.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) batch.push_back(data[order[k]]);
            const double loss = sft_nll(batch, result.params);
            detail::check_finite_loss(loss, epoch, start);
            const PolicyGrad g = sft_grad(batch, result.params);
            loss_sum += loss * static_cast<double>(batch.size());
            apply_sgd_step(result.params, g, cfg.lr);
        }
        result.loss_curve.push_back(loss_sum / static_cast<double>(n));
    }
    return result;
}

// Minibatch SGD on the preference objective selected by cfg.mode. The
// reference policy is read-only. Precondition: stored pair weights are
// consistent with cfg.alpha (reweight_pairs before calling if the dataset
// file was written at a different alpha); training never recomputes them.
// The shuffle stream depends only on cfg.seed, so different preference modes
// visit identical batch orders under the same seed.
inline TrainResult train_preference(const TrainConfig& cfg,
                                    const std::vector<PreferencePair>& data,
                                    const PolicyParams& init,
                                    const PolicyParams& ref) {
    cfg.validate();
    init.validate();
    ref.validate();
    if (data.empty()) throw std::invalid_argument("train_preference: empty dataset");
    const Mode mode = preference_mode(cfg.mode);
    const LossConfig loss_cfg = cfg.loss_config();
    TrainResult result;
    result.params = init;
    auto order = detail::identity_order(data.size());
    Prng shuffle_rng(derive_stage_seed(cfg.seed, stage::kTrainShuffle));
    const std::size_t n = data.size();
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(std::span<std::size_t>(order), shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t end = std::min(start + bs, n);
            std::vector<PreferencePair> batch;
            batch.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) batch.push_back(data[order[k]]);
            const double loss = batch_loss(batch, result.params, ref, loss_cfg, mode);
            detail::check_finite_loss(loss, epoch, start);
            const PolicyGrad g = batch_grad(batch, result.params, ref, loss_cfg, mode);
            loss_sum += loss * static_cast<double>(batch.size());
            apply_sgd_step(result.params, g, cfg.lr);
        }
        result.loss_curve.push_back(loss_sum / static_cast<double>(n));
    }
    return result;
}

} // namespace semdpo
