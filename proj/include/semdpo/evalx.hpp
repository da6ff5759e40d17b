#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "semdpo/datagen.hpp"
#include "semdpo/embedder.hpp"
#include "semdpo/io.hpp"
#include "semdpo/parallel.hpp"
#include "semdpo/policy.hpp"
#include "semdpo/prng.hpp"
#include "semdpo/theory.hpp"
#include "semdpo/trainer.hpp"
#include "semdpo/vocab.hpp"

namespace semdpo {

// Per-prompt evaluation of a policy's greedy rewrite.
struct MetricsRecord {
    std::string prompt;
    std::string y_opt_text;
    double sem_consistency = 0.0; // cos(e(x), e(y_opt)), defined as 1 - drift_d
    double pref_score = 0.0;      // noise-free style score
    double t2i_drift = 0.0;       // ||e(x) - E_img|| with the synthetic generator
    double drift_d = 0.0;         // cosine distance between e(x) and e(y_opt)
};

struct EvalConfig {
    EmbedderConfig embedder;
    int max_len = kDefaultMaxLen;
    double t2i_epsilon = 0.1;
    std::uint64_t master_seed = 0;
    int jobs = 1;
};

// Greedy-decode each prompt and compute every metric field. Prompt i's
// synthetic generator stream comes from the t2i stage of master_seed, so the
// records are independent of evaluation order and thread count.
inline std::vector<MetricsRecord> evaluate_policy(const PolicyParams& params,
                                                  const Vocab& vocab, const Lexicon& lex,
                                                  const std::vector<std::string>& prompts,
                                                  const EvalConfig& cfg) {
    params.validate();
    cfg.embedder.validate();
    if (!(cfg.t2i_epsilon >= 0.0) || !std::isfinite(cfg.t2i_epsilon)) {
        throw std::invalid_argument("evaluate_policy: bad t2i_epsilon");
    }
    const std::uint64_t t2i_seed = derive_stage_seed(cfg.master_seed, stage::kT2iEval);
    std::vector<MetricsRecord> records(prompts.size());
    parallel_for(prompts.size(), cfg.jobs, [&](std::size_t i) {
        MetricsRecord& rec = records[i];
        rec.prompt = prompts[i];
        const EmbeddingVector xe = embed(rec.prompt, cfg.embedder);
        const TokenSeq y = greedy_decode(params, xe, cfg.max_len);
        rec.y_opt_text = detok(y, vocab);
        const EmbeddingVector ey = embed(rec.y_opt_text, cfg.embedder);
        rec.drift_d = cosine_distance(xe, ey);
        rec.sem_consistency = 1.0 - rec.drift_d;
        rec.pref_score = style_score(y, lex, vocab);
        Prng rng = item_stream(t2i_seed, static_cast<std::uint64_t>(i));
        const EmbeddingVector img = synth_t2i_generate(ey, cfg.t2i_epsilon, rng);
        rec.t2i_drift = euclidean_distance(xe, img);
    });
    return records;
}

struct WinTieLoss {
    int win = 0;
    int tie = 0;
    int loss = 0;
};

struct HeadToHead {
    WinTieLoss sem_consistency; // higher is better
    WinTieLoss pref_score;      // higher is better
    WinTieLoss t2i_drift;       // lower is better
};

namespace detail {

inline void tally(WinTieLoss& counts, double a, double b, bool higher_better,
                  double tie_tol) {
    const double diff = higher_better ? a - b : b - a;
    if (std::fabs(diff) <= tie_tol) {
        counts.tie += 1;
    } else if (diff > 0.0) {
        counts.win += 1;
    } else {
        counts.loss += 1;
    }
}

} // namespace detail

// Per-prompt, per-metric comparison from a's perspective. Requires the same
// prompt list in the same order; counts partition N for each metric.
inline HeadToHead head_to_head(const std::vector<MetricsRecord>& a,
                               const std::vector<MetricsRecord>& b,
                               double tie_tol = 1e-9) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("head_to_head: record counts differ");
    }
    if (a.empty()) throw std::invalid_argument("head_to_head: empty records");
    if (!(tie_tol >= 0.0)) throw std::invalid_argument("head_to_head: bad tie_tol");
    HeadToHead h;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].prompt != b[i].prompt) {
            throw std::invalid_argument("head_to_head: prompt mismatch at row " +
                                        std::to_string(i));
        }
        detail::tally(h.sem_consistency, a[i].sem_consistency, b[i].sem_consistency, true, tie_tol);
        detail::tally(h.pref_score, a[i].pref_score, b[i].pref_score, true, tie_tol);
        detail::tally(h.t2i_drift, a[i].t2i_drift, b[i].t2i_drift, false, tie_tol);
    }
    return h;
}

inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw std::invalid_argument("pearson: need two equal-length series of length >= 2");
    }
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw std::invalid_argument("pearson: zero variance");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace detail {

// Average ranks (1-based); exactly equal values share the mean of their
// positions.
inline std::vector<double> average_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (xs[a] != xs[b]) return xs[a] < xs[b];
        return a < b;
    });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[idx[j + 1]] == xs[idx[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

} // namespace detail

inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) {
        throw std::invalid_argument("spearman: need two equal-length series of length >= 2");
    }
    return pearson(detail::average_ranks(xs), detail::average_ranks(ys));
}

// Effective sample size (sum W)^2 / (sum W^2); in [1, N] for positive weights.
inline double effective_sample_size(const std::vector<double>& weights) {
    if (weights.empty()) throw std::invalid_argument("effective_sample_size: empty weights");
    double s = 0.0, s2 = 0.0;
    for (const double w : weights) {
        if (!(w > 0.0) || !std::isfinite(w)) {
            throw std::invalid_argument("effective_sample_size: weights must be positive");
        }
        s += w;
        s2 += w * w;
    }
    return (s * s) / s2;
}

struct SweepRow {
    double alpha = 0.0;
    double mean_sem = 0.0;
    double mean_pref = 0.0;
    double mean_w = 0.0;
    double ess = 0.0;
};

// For each alpha (in input order): reweight the same dataset, train from the
// same init/ref/seed, evaluate on the same prompts. Only the weights change
// between rows.
inline std::vector<SweepRow> alpha_sweep(const TrainConfig& base_cfg,
                                         const std::vector<PreferencePair>& pairs,
                                         const PolicyParams& init, const PolicyParams& ref,
                                         const Vocab& vocab, const Lexicon& lex,
                                         const std::vector<std::string>& eval_prompts,
                                         const EvalConfig& eval_cfg,
                                         const std::vector<double>& alphas) {
    if (alphas.empty()) throw std::invalid_argument("alpha_sweep: empty alphas");
    if (pairs.empty()) throw std::invalid_argument("alpha_sweep: empty dataset");
    std::vector<SweepRow> rows;
    rows.reserve(alphas.size());
    for (const double alpha : alphas) {
        std::vector<PreferencePair> reweighted = pairs;
        reweight_pairs(reweighted, alpha);
        TrainConfig cfg = base_cfg;
        cfg.mode = TrainMode::kSemdpo;
        cfg.alpha = alpha;
        const TrainResult trained = train_preference(cfg, reweighted, init, ref);
        const auto records = evaluate_policy(trained.params, vocab, lex, eval_prompts, eval_cfg);
        SweepRow row;
        row.alpha = alpha;
        double sum_w = 0.0;
        std::vector<double> weights;
        weights.reserve(reweighted.size());
        for (const auto& pair : reweighted) {
            sum_w += pair.weight;
            weights.push_back(pair.weight);
        }
        row.mean_w = sum_w / static_cast<double>(reweighted.size());
        row.ess = effective_sample_size(weights);
        double sum_sem = 0.0, sum_pref = 0.0;
        for (const auto& rec : records) {
            sum_sem += rec.sem_consistency;
            sum_pref += rec.pref_score;
        }
        row.mean_sem = sum_sem / static_cast<double>(records.size());
        row.mean_pref = sum_pref / static_cast<double>(records.size());
        rows.push_back(row);
    }
    return rows;
}

// Min-max normalize each metric column across methods, then average the
// normalized columns per method. A degenerate column (max == min)
// contributes 0.5 to every method. values[m][k] = method m, metric k,
// oriented so higher is better.
inline std::vector<double> normalized_avg_score(const std::vector<std::vector<double>>& values) {
    if (values.size() < 2) throw std::invalid_argument("normalized_avg_score: need >= 2 methods");
    const std::size_t metrics = values[0].size();
    if (metrics == 0) throw std::invalid_argument("normalized_avg_score: need >= 1 metric");
    for (const auto& row : values) {
        if (row.size() != metrics) {
            throw std::invalid_argument("normalized_avg_score: ragged metric table");
        }
    }
    std::vector<double> scores(values.size(), 0.0);
    for (std::size_t k = 0; k < metrics; ++k) {
        double lo = values[0][k], hi = values[0][k];
        for (const auto& row : values) {
            lo = std::min(lo, row[k]);
            hi = std::max(hi, row[k]);
        }
        for (std::size_t m = 0; m < values.size(); ++m) {
            const double norm = (hi == lo) ? 0.5 : (values[m][k] - lo) / (hi - lo);
            scores[m] += norm;
        }
    }
    for (auto& s : scores) s /= static_cast<double>(metrics);
    return scores;
}

// ---- Report serialization (all byte-deterministic) ----

inline std::string loss_curve_to_csv(const std::vector<double>& curve,
                                     const std::string& config_json) {
    std::string out;
    if (!config_json.empty()) {
        out += "# config ";
        out += config_json;
        out += '\n';
    }
    out += "epoch,loss\n";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        out += std::to_string(i + 1);
        out += ',';
        out += fmt_double(curve[i]);
        out += '\n';
    }
    return out;
}

inline std::string metrics_to_csv(const std::vector<MetricsRecord>& records,
                                  const std::string& config_json) {
    std::string out;
    if (!config_json.empty()) {
        out += "# config ";
        out += config_json;
        out += '\n';
    }
    out += "prompt_idx,sem_consistency,pref_score,t2i_drift,drift_d\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += fmt_double(records[i].sem_consistency);
        out += ',';
        out += fmt_double(records[i].pref_score);
        out += ',';
        out += fmt_double(records[i].t2i_drift);
        out += ',';
        out += fmt_double(records[i].drift_d);
        out += '\n';
    }
    return out;
}

inline std::string sweep_to_csv(const std::vector<SweepRow>& rows,
                                const std::string& config_json) {
    std::string out;
    if (!config_json.empty()) {
        out += "# config ";
        out += config_json;
        out += '\n';
    }
    out += "alpha,mean_sem,mean_pref,mean_w,ess\n";
    for (const auto& row : rows) {
        out += fmt_double(row.alpha);
        out += ',';
        out += fmt_double(row.mean_sem);
        out += ',';
        out += fmt_double(row.mean_pref);
        out += ',';
        out += fmt_double(row.mean_w);
        out += ',';
        out += fmt_double(row.ess);
        out += '\n';
    }
    return out;
}

namespace detail {

inline void append_wtl(std::string& out, const char* name, const WinTieLoss& c) {
    out += '"';
    out += name;
    out += "\":{\"win\":";
    out += std::to_string(c.win);
    out += ",\"tie\":";
    out += std::to_string(c.tie);
    out += ",\"loss\":";
    out += std::to_string(c.loss);
    out += '}';
}

} // namespace detail

inline std::string head_to_head_to_json(const HeadToHead& h, const std::string& config_json) {
    std::string out = "{";
    if (!config_json.empty()) {
        out += "\"config\":";
        out += config_json;
        out += ',';
    }
    out += "\"metrics\":{";
    detail::append_wtl(out, "sem_consistency", h.sem_consistency);
    out += ',';
    detail::append_wtl(out, "pref_score", h.pref_score);
    out += ',';
    detail::append_wtl(out, "t2i_drift", h.t2i_drift);
    out += "}}\n";
    return out;
}

inline std::string prop1_to_json(const Prop1Report& r) {
    std::string out = "{\"lhs_gap\":";
    out += fmt_double(r.lhs_gap);
    out += ",\"M_emp\":";
    out += fmt_double(r.M_emp);
    out += ",\"mean_weight_gap\":";
    out += fmt_double(r.mean_weight_gap);
    out += ",\"chain_bound\":";
    out += fmt_double(r.chain_bound);
    out += ",\"pointwise_bound\":";
    out += fmt_double(r.pointwise_bound);
    out += ",\"paper_bound\":";
    out += fmt_double(r.paper_bound);
    out += ",\"holds_chain\":";
    out += r.holds_chain ? "true" : "false";
    out += ",\"holds_pointwise\":";
    out += r.holds_pointwise ? "true" : "false";
    out += ",\"holds_paper\":";
    out += r.holds_paper ? "true" : "false";
    out += '}';
    return out;
}

inline std::string prop2_to_json(const Prop2Report& r) {
    std::string out = "{\"epsilon\":";
    out += fmt_double(r.epsilon);
    out += ",\"violations\":";
    out += std::to_string(r.violations);
    out += ",\"items\":[";
    for (std::size_t i = 0; i < r.items.size(); ++i) {
        if (i > 0) out += ',';
        out += "{\"d_t2i_drift\":";
        out += fmt_double(r.items[i].d_t2i_drift);
        out += ",\"d_semantic_drift\":";
        out += fmt_double(r.items[i].d_semantic_drift);
        out += ",\"d_t2i\":";
        out += fmt_double(r.items[i].d_t2i);
        out += '}';
    }
    out += "]}";
    return out;
}

inline std::string bounds_report_to_json(const Prop1Report& p1, const Prop2Report& p2,
                                         const std::string& config_json) {
    std::string out = "{";
    if (!config_json.empty()) {
        out += "\"config\":";
        out += config_json;
        out += ',';
    }
    out += "\"prop1\":";
    out += prop1_to_json(p1);
    out += ",\"prop2\":";
    out += prop2_to_json(p2);
    out += "}\n";
    return out;
}

} // namespace semdpo
