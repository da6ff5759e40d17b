#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "semdpo/embedder.hpp"
#include "semdpo/io.hpp"
#include "semdpo/objectives.hpp"
#include "semdpo/parallel.hpp"
#include "semdpo/policy.hpp"
#include "semdpo/prng.hpp"
#include "semdpo/vocab.hpp"

namespace semdpo {

constexpr int kLexiconVersion = 1;

// Word lists that drive the synthetic testbed grammar. Frozen: the asset
// file assets/lexicon.json mirrors default_lexicon() exactly.
struct Lexicon {
    std::vector<std::string> subjects;
    std::vector<std::string> adjectives;
    std::vector<std::string> modifiers;

    void validate() const {
        if (subjects.size() < 40) throw std::invalid_argument("Lexicon: need >= 40 subjects");
        if (adjectives.size() < 20) throw std::invalid_argument("Lexicon: need >= 20 adjectives");
        if (modifiers.size() < 24) throw std::invalid_argument("Lexicon: need >= 24 modifiers");
        auto check_words = [](const std::vector<std::string>& ws, const char* what) {
            for (const auto& w : ws) {
                if (w.empty()) throw std::invalid_argument(std::string("Lexicon: empty word in ") + what);
                for (const char c : w) {
                    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'))) {
                        throw std::invalid_argument(std::string("Lexicon: bad character in ") + what);
                    }
                }
            }
        };
        check_words(subjects, "subjects");
        check_words(adjectives, "adjectives");
        check_words(modifiers, "modifiers");
        auto overlaps = [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
            for (const auto& w : a) {
                if (std::find(b.begin(), b.end(), w) != b.end()) return true;
            }
            return false;
        };
        if (overlaps(subjects, adjectives) || overlaps(subjects, modifiers) ||
            overlaps(adjectives, modifiers)) {
            throw std::invalid_argument("Lexicon: word lists must be pairwise disjoint");
        }
    }

    bool is_modifier(std::string_view w) const {
        return std::find(modifiers.begin(), modifiers.end(), w) != modifiers.end();
    }
};

inline Lexicon default_lexicon() {
    Lexicon lex;
    lex.subjects = {
        "observatory", "archipelago", "hummingbird", "salamander", "waterfall", "cathedral",
        "monastery", "shipwreck", "rainforest", "constellation", "wilderness", "labyrinth",
        "lighthouse", "planetarium", "amphitheater", "kaleidoscope", "promontory",
        "escarpment", "greenhouse", "dragon", "phoenix", "griffin", "unicorn", "castle",
        "bridge", "tower", "temple", "harbor", "island", "forest", "meadow", "canyon",
        "glacier", "volcano", "desert", "valley", "river", "lagoon", "comet", "nebula"};
    lex.adjectives = {
        "ancient", "crimson", "emerald", "frozen", "shimmering", "radiant", "shadowy",
        "resplendent", "incandescent", "crystal", "enchanting", "flourishing",
        "otherworldly", "iridescent", "mysterious", "luminous", "magnificent", "stormy",
        "tranquil", "majestic"};
    lex.modifiers = {
        "detailed", "cinematic", "dramatic", "4k", "vibrant", "intricate",
        "8k", "3d", "dof", "textured", "moody", "epic",
        "surreal", "painterly", "sharp", "glossy", "ornate", "ethereal",
        "hd", "raw", "vfx", "uhd", "cgi", "hdr"};
    return lex;
}

inline std::string lexicon_to_json(const Lexicon& lex) {
    lex.validate();
    auto append_list = [](std::string& out, const std::vector<std::string>& ws) {
        out += '[';
        for (std::size_t i = 0; i < ws.size(); ++i) {
            if (i > 0) out += ',';
            out += '"';
            out += json_escape(ws[i]);
            out += '"';
        }
        out += ']';
    };
    std::string out = "{\"version\":";
    out += std::to_string(kLexiconVersion);
    out += ",\"subjects\":";
    append_list(out, lex.subjects);
    out += ",\"adjectives\":";
    append_list(out, lex.adjectives);
    out += ",\"modifiers\":";
    append_list(out, lex.modifiers);
    out += "}\n";
    return out;
}

inline Lexicon lexicon_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("lexicon: invalid JSON: ") + e.what());
    }
    try {
        if (j.at("version").get<int>() != kLexiconVersion) {
            throw std::runtime_error("lexicon: version mismatch");
        }
        Lexicon lex;
        lex.subjects = j.at("subjects").get<std::vector<std::string>>();
        lex.adjectives = j.at("adjectives").get<std::vector<std::string>>();
        lex.modifiers = j.at("modifiers").get<std::vector<std::string>>();
        lex.validate();
        return lex;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("lexicon: bad field: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("lexicon: ") + e.what());
    }
}

struct ScorerConfig {
    double noise_sigma = 0.05;
    double tie_eps = 1e-9;

    void validate() const {
        if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
            throw std::invalid_argument("ScorerConfig: noise_sigma must be finite and >= 0");
        }
        if (!(tie_eps >= 0.0) || !std::isfinite(tie_eps)) {
            throw std::invalid_argument("ScorerConfig: tie_eps must be finite and >= 0");
        }
    }
};

// Prompt grammar: "ADJ SUBJ" with prob 0.5, else "ADJ SUBJ of SUBJ".
// Prompt i draws from its own stream (stage_seed XOR i) in the fixed order:
// form u01, adjective index, subject index, [second subject index].
inline std::vector<std::string> gen_prompts(const Lexicon& lex, int n,
                                            std::uint64_t stage_seed) {
    if (n < 1) throw std::invalid_argument("gen_prompts: n must be >= 1");
    lex.validate();
    std::vector<std::string> prompts(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Prng rng = item_stream(stage_seed, static_cast<std::uint64_t>(i));
        const bool long_form = rng.u01() >= 0.5;
        const auto& adj = lex.adjectives[static_cast<std::size_t>(
            rng.below(static_cast<std::uint64_t>(lex.adjectives.size())))];
        const auto& subj = lex.subjects[static_cast<std::size_t>(
            rng.below(static_cast<std::uint64_t>(lex.subjects.size())))];
        std::string p = adj + " " + subj;
        if (long_form) {
            const auto& subj2 = lex.subjects[static_cast<std::size_t>(
                rng.below(static_cast<std::uint64_t>(lex.subjects.size())))];
            p += " of " + subj2;
        }
        prompts[static_cast<std::size_t>(i)] = std::move(p);
    }
    return prompts;
}

// Target rewrite = prompt followed by k modifiers sampled without
// replacement, k uniform in {2,3,4}. Per-prompt stream draw order: k, then
// one below() per selection step of a partial Fisher-Yates pass.
inline std::vector<std::pair<std::string, std::string>> gen_sft_corpus(
    const Lexicon& lex, const std::vector<std::string>& prompts,
    std::uint64_t stage_seed) {
    if (prompts.empty()) throw std::invalid_argument("gen_sft_corpus: empty prompts");
    lex.validate();
    std::vector<std::pair<std::string, std::string>> out(prompts.size());
    const std::size_t m = lex.modifiers.size();
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        Prng rng = item_stream(stage_seed, static_cast<std::uint64_t>(i));
        const int k = 2 + static_cast<int>(rng.below(3));
        std::vector<std::size_t> idx(m);
        for (std::size_t t = 0; t < m; ++t) idx[t] = t;
        std::string y = prompts[i];
        for (int t = 0; t < k; ++t) {
            const std::size_t j = static_cast<std::size_t>(t) +
                static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(m - static_cast<std::size_t>(t))));
            std::swap(idx[static_cast<std::size_t>(t)], idx[j]);
            y += " " + lex.modifiers[idx[static_cast<std::size_t>(t)]];
        }
        out[i] = {prompts[i], std::move(y)};
    }
    return out;
}

// Fraction of the sequence's tokens (EOS excluded) that are modifier words.
inline double style_score(const TokenSeq& y, const Lexicon& lex, const Vocab& vocab) {
    int total = 0;
    int styled = 0;
    for (const int id : y.ids) {
        if (id == kEosId) break;
        if (id < 0 || id >= vocab.size()) {
            throw std::invalid_argument("style_score: token id out of range");
        }
        ++total;
        if (lex.is_modifier(vocab.tokens[static_cast<std::size_t>(id)])) ++styled;
    }
    if (total == 0) return 0.0;
    return static_cast<double>(styled) / static_cast<double>(total);
}

// Synthetic preference signal: style fraction plus Gaussian noise. It scores
// style only — no semantic-fidelity term — so optimizing it pulls outputs
// away from the prompt. The Gaussian is drawn even when noise_sigma is 0 so
// stream consumption does not depend on the config.
inline double synth_preference_score(const std::string& /*x_text*/, const TokenSeq& y,
                                     const Lexicon& lex, const Vocab& vocab,
                                     const ScorerConfig& cfg, Prng& rng) {
    cfg.validate();
    const double base = style_score(y, lex, vocab);
    const double noise = rng.gaussian();
    return base + cfg.noise_sigma * noise;
}

// Orders a scored candidate pair into (y_w, y_l); near-ties are dropped.
// drift_d/weight/xe are filled later by the dataset builder.
inline std::optional<PreferencePair> label_pair(const std::string& x_text,
                                                const TokenSeq& y_a, const TokenSeq& y_b,
                                                double score_a, double score_b,
                                                const ScorerConfig& cfg) {
    cfg.validate();
    if (std::fabs(score_a - score_b) < cfg.tie_eps) return std::nullopt;
    PreferencePair pair;
    pair.x_text = x_text;
    if (score_a > score_b) {
        pair.y_w = y_a;
        pair.y_l = y_b;
    } else {
        pair.y_w = y_b;
        pair.y_l = y_a;
    }
    return pair;
}

// Per prompt: sample two candidates from the frozen SFT policy at
// temperature 1.0, score both, label, then attach drift and weight. Stream
// draw order per prompt: candidate A walk, candidate B walk, noise A,
// noise B. Skipped ties shrink the output; order follows prompt index.
inline std::vector<PreferencePair> build_preference_dataset(
    const PolicyParams& sft_params, const Vocab& vocab, const Lexicon& lex,
    const std::vector<std::string>& prompts, const EmbedderConfig& ecfg,
    const ScorerConfig& scorer_cfg, double alpha, std::uint64_t stage_seed,
    int max_len = kDefaultMaxLen, int jobs = 1) {
    if (prompts.empty()) throw std::invalid_argument("build_preference_dataset: empty prompts");
    sft_params.validate();
    ecfg.validate();
    scorer_cfg.validate();
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw std::invalid_argument("build_preference_dataset: alpha must be >= 0");
    }
    std::vector<std::optional<PreferencePair>> slots(prompts.size());
    parallel_for(prompts.size(), jobs, [&](std::size_t i) {
        Prng rng = item_stream(stage_seed, static_cast<std::uint64_t>(i));
        const std::string& x_text = prompts[i];
        const EmbeddingVector xe = embed(x_text, ecfg);
        const TokenSeq y_a = sample(sft_params, xe, rng, max_len, 1.0);
        const TokenSeq y_b = sample(sft_params, xe, rng, max_len, 1.0);
        const double score_a = synth_preference_score(x_text, y_a, lex, vocab, scorer_cfg, rng);
        const double score_b = synth_preference_score(x_text, y_b, lex, vocab, scorer_cfg, rng);
        auto labeled = label_pair(x_text, y_a, y_b, score_a, score_b, scorer_cfg);
        if (!labeled) return;
        PreferencePair& pair = *labeled;
        pair.yw_text = detok(pair.y_w, vocab);
        pair.yl_text = detok(pair.y_l, vocab);
        pair.x = encode(x_text, vocab, max_len);
        pair.xe = xe;
        pair.drift_d = cosine_distance(xe, embed(pair.yw_text, ecfg));
        pair.weight = semantic_weight(alpha, pair.drift_d);
        slots[i] = std::move(pair);
    });
    std::vector<PreferencePair> dataset;
    dataset.reserve(prompts.size());
    for (auto& slot : slots) {
        if (slot) dataset.push_back(std::move(*slot));
    }
    return dataset;
}

// Restore the invariant weight == exp(-alpha * drift_d) for a new alpha.
inline void reweight_pairs(std::vector<PreferencePair>& dataset, double alpha) {
    for (auto& pair : dataset) {
        pair.weight = semantic_weight(alpha, pair.drift_d);
    }
}

struct DatasetHeader {
    double alpha = 8.0;
    std::string vocab_hash;
    std::uint64_t seed = 0;
};

namespace detail {

inline void append_id_array(std::string& out, const std::vector<int>& ids) {
    out += '[';
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) out += ',';
        out += std::to_string(ids[i]);
    }
    out += ']';
}

} // namespace detail

// First line: {"alpha":..., "vocab_hash":"...", "seed":...}. Then one line
// per pair: {"x","yw","yl","yw_text","yl_text","d","w"}. Floats use 17
// significant digits, so writing is deterministic and reading is lossless.
inline std::string dataset_to_jsonl(const std::vector<PreferencePair>& dataset,
                                    const DatasetHeader& header) {
    std::string out;
    out.reserve(128 + 256 * dataset.size());
    out += "{\"alpha\":";
    out += fmt_double(header.alpha);
    out += ",\"vocab_hash\":\"";
    out += json_escape(header.vocab_hash);
    out += "\",\"seed\":";
    out += std::to_string(header.seed);
    out += "}\n";
    for (const auto& pair : dataset) {
        out += "{\"x\":\"";
        out += json_escape(pair.x_text);
        out += "\",\"yw\":";
        detail::append_id_array(out, pair.y_w.ids);
        out += ",\"yl\":";
        detail::append_id_array(out, pair.y_l.ids);
        out += ",\"yw_text\":\"";
        out += json_escape(pair.yw_text);
        out += "\",\"yl_text\":\"";
        out += json_escape(pair.yl_text);
        out += "\",\"d\":";
        out += fmt_double(pair.drift_d);
        out += ",\"w\":";
        out += fmt_double(pair.weight);
        out += "}\n";
    }
    return out;
}

inline void write_jsonl(const std::vector<PreferencePair>& dataset,
                        const DatasetHeader& header, const std::string& path) {
    atomic_write_file(path, dataset_to_jsonl(dataset, header));
}

// Reads a dataset back. The vocab must hash to the header's vocab_hash (the
// ids would be meaningless otherwise); each pair's weight must match
// exp(-alpha * d) for the header alpha within 1e-9. Errors name the
// offending 1-based line.
inline std::vector<PreferencePair> read_jsonl(const std::string& path, const Vocab& vocab,
                                              const EmbedderConfig& ecfg,
                                              DatasetHeader* header_out = nullptr,
                                              int max_len = kDefaultMaxLen) {
    const std::string text = read_file(path);
    std::vector<PreferencePair> dataset;
    DatasetHeader header;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("dataset line " + std::to_string(line_no) +
                                     ": invalid JSON: " + e.what());
        }
        try {
            if (line_no == 1) {
                header.alpha = j.at("alpha").get<double>();
                header.vocab_hash = j.at("vocab_hash").get<std::string>();
                header.seed = j.at("seed").get<std::uint64_t>();
                if (header.vocab_hash != vocab_hash(vocab)) {
                    throw std::runtime_error("dataset line 1: vocab_hash mismatch");
                }
                continue;
            }
            PreferencePair pair;
            pair.x_text = j.at("x").get<std::string>();
            pair.y_w.ids = j.at("yw").get<std::vector<int>>();
            pair.y_l.ids = j.at("yl").get<std::vector<int>>();
            pair.yw_text = j.at("yw_text").get<std::string>();
            pair.yl_text = j.at("yl_text").get<std::string>();
            pair.drift_d = j.at("d").get<double>();
            pair.weight = j.at("w").get<double>();
            if (pair.y_w.ids.empty() || pair.y_w.ids.back() != kEosId ||
                pair.y_l.ids.empty() || pair.y_l.ids.back() != kEosId) {
                throw std::runtime_error("dataset line " + std::to_string(line_no) +
                                         ": sequence must end with EOS");
            }
            const double expect_w = semantic_weight(header.alpha, pair.drift_d);
            if (std::fabs(pair.weight - expect_w) > 1e-9) {
                throw std::runtime_error("dataset line " + std::to_string(line_no) +
                                         ": weight inconsistent with header alpha");
            }
            pair.x = encode(pair.x_text, vocab, max_len);
            pair.xe = embed(pair.x_text, ecfg);
            dataset.push_back(std::move(pair));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("dataset line " + std::to_string(line_no) +
                                     ": bad field: " + e.what());
        }
    }
    if (line_no == 0) throw std::runtime_error("dataset: empty file (missing header)");
    if (header_out != nullptr) *header_out = header;
    return dataset;
}

} // namespace semdpo
