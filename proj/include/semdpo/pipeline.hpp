#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "semdpo/checkpoint.hpp"
#include "semdpo/datagen.hpp"
#include "semdpo/embedder.hpp"
#include "semdpo/evalx.hpp"
#include "semdpo/io.hpp"
#include "semdpo/objectives.hpp"
#include "semdpo/policy.hpp"
#include "semdpo/prng.hpp"
#include "semdpo/theory.hpp"
#include "semdpo/trainer.hpp"
#include "semdpo/vocab.hpp"

namespace semdpo {

constexpr int kRunConfigVersion = 1;

// Every knob of the pipeline in one place. Files and flags both merge into
// this; the merged value is echoed into output headers.
struct RunConfig {
    // Default testbed seed, frozen after checking that the generated data
    // has a healthy drift spread and that the trained policies reproduce
    // the directional trends the evaluation suite asserts.
    std::uint64_t master_seed = 42;
    int n_prompts = 1000;
    int n_eval_prompts = 200;
    int embed_dim = 64;
    int ngram_size = 3;
    int max_len = kDefaultMaxLen;
    std::string mode = "semdpo";
    double alpha = 8.0;
    double beta = 0.05;
    double tau = 0.5;
    double lr = 0.1;
    int epochs = 5;
    int batch_size = 64;
    double init_scale = 0.01;
    double sft_lr = 1.0;
    int sft_epochs = 100;
    int sft_batch_size = 16;
    double noise_sigma = 0.05;
    double tie_eps = 1e-9;
    double t2i_epsilon = 0.1;
    std::vector<double> alphas = {0.0, 1.0, 2.0, 4.0, 8.0, 10.0, 15.0};
    int jobs = 1;

    EmbedderConfig embedder_config() const { return EmbedderConfig{embed_dim, ngram_size}; }

    ScorerConfig scorer_config() const { return ScorerConfig{noise_sigma, tie_eps}; }

    TrainConfig train_config() const {
        TrainConfig t;
        t.mode = parse_train_mode(mode);
        t.alpha = alpha;
        t.beta = beta;
        t.tau = tau;
        t.lr = lr;
        t.epochs = epochs;
        t.batch_size = batch_size;
        t.seed = master_seed;
        t.init_scale = init_scale;
        return t;
    }

    // The supervised stage runs long enough to actually fit the echo corpus;
    // preference training keeps its own deliberately light defaults. Both
    // gen-data and `train --mode sft` use this so the stage is reproducible
    // from the same config.
    TrainConfig sft_train_config() const {
        TrainConfig t;
        t.mode = TrainMode::kSft;
        t.alpha = alpha;
        t.beta = beta;
        t.tau = tau;
        t.lr = sft_lr;
        t.epochs = sft_epochs;
        t.batch_size = sft_batch_size;
        t.seed = master_seed;
        t.init_scale = init_scale;
        return t;
    }

    EvalConfig eval_config() const {
        EvalConfig e;
        e.embedder = embedder_config();
        e.max_len = max_len;
        e.t2i_epsilon = t2i_epsilon;
        e.master_seed = master_seed;
        e.jobs = jobs;
        return e;
    }

    void validate() const {
        embedder_config().validate();
        scorer_config().validate();
        train_config().validate(); // also checks mode spelling
        sft_train_config().validate();
        if (n_prompts < 1) throw std::invalid_argument("config: n_prompts must be >= 1");
        if (n_eval_prompts < 1) throw std::invalid_argument("config: n_eval_prompts must be >= 1");
        if (max_len < 2) throw std::invalid_argument("config: max_len must be >= 2");
        if (!(t2i_epsilon >= 0.0)) throw std::invalid_argument("config: t2i_epsilon must be >= 0");
        if (alphas.empty()) throw std::invalid_argument("config: alphas must be nonempty");
        for (const double a : alphas) {
            if (!(a >= 0.0)) throw std::invalid_argument("config: alphas must be >= 0");
        }
        if (jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
    }
};

// Merged-config echo: fixed key order, deterministic float formatting.
// include_jobs=false omits the worker-count knob, which bounds fan-out but
// never changes any output bytes.
inline std::string runconfig_to_json(const RunConfig& c, bool include_jobs = true) {
    std::string out = "{\"version\":";
    out += std::to_string(kRunConfigVersion);
    out += ",\"master_seed\":";
    out += std::to_string(c.master_seed);
    out += ",\"n_prompts\":";
    out += std::to_string(c.n_prompts);
    out += ",\"n_eval_prompts\":";
    out += std::to_string(c.n_eval_prompts);
    out += ",\"embed_dim\":";
    out += std::to_string(c.embed_dim);
    out += ",\"ngram_size\":";
    out += std::to_string(c.ngram_size);
    out += ",\"max_len\":";
    out += std::to_string(c.max_len);
    out += ",\"mode\":\"";
    out += json_escape(c.mode);
    out += "\",\"alpha\":";
    out += fmt_double(c.alpha);
    out += ",\"beta\":";
    out += fmt_double(c.beta);
    out += ",\"tau\":";
    out += fmt_double(c.tau);
    out += ",\"lr\":";
    out += fmt_double(c.lr);
    out += ",\"epochs\":";
    out += std::to_string(c.epochs);
    out += ",\"batch_size\":";
    out += std::to_string(c.batch_size);
    out += ",\"init_scale\":";
    out += fmt_double(c.init_scale);
    out += ",\"sft_lr\":";
    out += fmt_double(c.sft_lr);
    out += ",\"sft_epochs\":";
    out += std::to_string(c.sft_epochs);
    out += ",\"sft_batch_size\":";
    out += std::to_string(c.sft_batch_size);
    out += ",\"noise_sigma\":";
    out += fmt_double(c.noise_sigma);
    out += ",\"tie_eps\":";
    out += fmt_double(c.tie_eps);
    out += ",\"t2i_epsilon\":";
    out += fmt_double(c.t2i_epsilon);
    out += ",\"alphas\":[";
    for (std::size_t i = 0; i < c.alphas.size(); ++i) {
        if (i > 0) out += ',';
        out += fmt_double(c.alphas[i]);
    }
    out += ']';
    if (include_jobs) {
        out += ",\"jobs\":";
        out += std::to_string(c.jobs);
    }
    out += '}';
    return out;
}

// Header echo for data and metric files. Outputs must be byte-identical for
// every worker count, so the echoed experiment config leaves jobs out;
// config.json, the invocation record, keeps it.
inline std::string experiment_config_json(const RunConfig& c) {
    return runconfig_to_json(c, /*include_jobs=*/false);
}

// Parse a config file's JSON into defaults. Unknown keys are an error; a
// "version" field is required in files.
inline RunConfig runconfig_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
    static const std::set<std::string> known = {
        "version", "master_seed", "n_prompts", "n_eval_prompts", "embed_dim",
        "ngram_size", "max_len", "mode", "alpha", "beta", "tau", "lr",
        "epochs", "batch_size", "init_scale", "sft_lr", "sft_epochs",
        "sft_batch_size", "noise_sigma", "tie_eps", "t2i_epsilon", "alphas", "jobs"};
    for (const auto& [key, value] : j.items()) {
        if (known.find(key) == known.end()) {
            throw std::invalid_argument("config: unknown key \"" + key + "\"");
        }
    }
    RunConfig c;
    try {
        if (!j.contains("version")) throw std::invalid_argument("config: missing \"version\"");
        if (j.at("version").get<int>() != kRunConfigVersion) {
            throw std::invalid_argument("config: unsupported version");
        }
        if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<std::uint64_t>();
        if (j.contains("n_prompts")) c.n_prompts = j.at("n_prompts").get<int>();
        if (j.contains("n_eval_prompts")) c.n_eval_prompts = j.at("n_eval_prompts").get<int>();
        if (j.contains("embed_dim")) c.embed_dim = j.at("embed_dim").get<int>();
        if (j.contains("ngram_size")) c.ngram_size = j.at("ngram_size").get<int>();
        if (j.contains("max_len")) c.max_len = j.at("max_len").get<int>();
        if (j.contains("mode")) c.mode = j.at("mode").get<std::string>();
        if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
        if (j.contains("beta")) c.beta = j.at("beta").get<double>();
        if (j.contains("tau")) c.tau = j.at("tau").get<double>();
        if (j.contains("lr")) c.lr = j.at("lr").get<double>();
        if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
        if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
        if (j.contains("init_scale")) c.init_scale = j.at("init_scale").get<double>();
        if (j.contains("sft_lr")) c.sft_lr = j.at("sft_lr").get<double>();
        if (j.contains("sft_epochs")) c.sft_epochs = j.at("sft_epochs").get<int>();
        if (j.contains("sft_batch_size")) c.sft_batch_size = j.at("sft_batch_size").get<int>();
        if (j.contains("noise_sigma")) c.noise_sigma = j.at("noise_sigma").get<double>();
        if (j.contains("tie_eps")) c.tie_eps = j.at("tie_eps").get<double>();
        if (j.contains("t2i_epsilon")) c.t2i_epsilon = j.at("t2i_epsilon").get<double>();
        if (j.contains("alphas")) c.alphas = j.at("alphas").get<std::vector<double>>();
        if (j.contains("jobs")) c.jobs = j.at("jobs").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: bad field: ") + e.what());
    }
    return c;
}

// Everything gen-data produces, in memory.
struct GenDataResult {
    Lexicon lex;
    std::vector<std::string> prompts;
    std::vector<std::string> eval_prompts;
    std::vector<std::pair<std::string, std::string>> sft_corpus;
    Vocab vocab;
    TrainResult sft;
    std::vector<PreferencePair> pairs;
    DatasetHeader header;
};

inline std::vector<SftExample> sft_examples_from_corpus(
    const std::vector<std::pair<std::string, std::string>>& corpus, const Vocab& vocab,
    const EmbedderConfig& ecfg, int max_len) {
    std::vector<SftExample> examples;
    examples.reserve(corpus.size());
    for (const auto& [x_text, y_text] : corpus) {
        SftExample ex;
        ex.x_text = x_text;
        ex.xe = embed(x_text, ecfg);
        ex.y = encode(y_text, vocab, max_len);
        examples.push_back(std::move(ex));
    }
    return examples;
}

inline Vocab vocab_from_corpus(const std::vector<std::pair<std::string, std::string>>& corpus) {
    std::vector<std::string> lines;
    lines.reserve(corpus.size() * 2);
    for (const auto& [x_text, y_text] : corpus) {
        lines.push_back(x_text);
        lines.push_back(y_text);
    }
    return build_vocab(lines, kMaxVocab);
}

// The full data-generation stage: prompts, SFT corpus and policy, then the
// scored preference pairs, all derived from master_seed's stage streams.
inline GenDataResult gen_data(const RunConfig& cfg) {
    cfg.validate();
    GenDataResult r;
    r.lex = default_lexicon();
    const EmbedderConfig ecfg = cfg.embedder_config();
    r.prompts = gen_prompts(r.lex, cfg.n_prompts,
                            derive_stage_seed(cfg.master_seed, stage::kPrompts));
    r.eval_prompts = gen_prompts(r.lex, cfg.n_eval_prompts,
                                 derive_stage_seed(cfg.master_seed, stage::kEvalPrompts));
    r.sft_corpus = gen_sft_corpus(r.lex, r.prompts,
                                  derive_stage_seed(cfg.master_seed, stage::kSftCorpus));
    r.vocab = vocab_from_corpus(r.sft_corpus);
    const auto examples = sft_examples_from_corpus(r.sft_corpus, r.vocab, ecfg, cfg.max_len);

    const TrainConfig sft_cfg = cfg.sft_train_config();
    PolicyParams init = init_params_seeded(r.vocab.size(), cfg.embed_dim, cfg.init_scale,
                                           cfg.master_seed, stage::kSftInit);
    r.sft = train_sft(sft_cfg, examples, init);

    r.pairs = build_preference_dataset(r.sft.params, r.vocab, r.lex, r.prompts, ecfg,
                                       cfg.scorer_config(), cfg.alpha,
                                       derive_stage_seed(cfg.master_seed, stage::kPrefBuild),
                                       cfg.max_len, cfg.jobs);
    r.header = DatasetHeader{cfg.alpha, vocab_hash(r.vocab), cfg.master_seed};
    return r;
}

inline std::string lines_to_text(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& line : lines) {
        out += line;
        out += '\n';
    }
    return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
    const std::string text = read_file(path);
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    return lines;
}

inline std::string sft_corpus_to_jsonl(
    const std::vector<std::pair<std::string, std::string>>& corpus) {
    std::string out;
    for (const auto& [x_text, y_text] : corpus) {
        out += "{\"x\":\"";
        out += json_escape(x_text);
        out += "\",\"y\":\"";
        out += json_escape(y_text);
        out += "\"}\n";
    }
    return out;
}

inline std::vector<std::pair<std::string, std::string>> read_sft_jsonl(const std::string& path) {
    const std::string text = read_file(path);
    std::vector<std::pair<std::string, std::string>> corpus;
    std::size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.empty()) continue;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            corpus.emplace_back(j.at("x").get<std::string>(), j.at("y").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("sft corpus line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
    }
    if (corpus.empty()) throw std::runtime_error("sft corpus: no examples in file");
    return corpus;
}

// Writes every gen-data artifact into out_dir (which must already exist).
inline void write_gen_data(const GenDataResult& r, const RunConfig& cfg,
                           const std::string& out_dir) {
    atomic_write_file(out_dir + "/config.json", runconfig_to_json(cfg) + "\n");
    const std::string config_json = experiment_config_json(cfg);
    atomic_write_file(out_dir + "/lexicon.json", lexicon_to_json(r.lex));
    atomic_write_file(out_dir + "/prompts.txt", lines_to_text(r.prompts));
    atomic_write_file(out_dir + "/eval_prompts.txt", lines_to_text(r.eval_prompts));
    atomic_write_file(out_dir + "/sft.jsonl", sft_corpus_to_jsonl(r.sft_corpus));
    Checkpoint sft_ck;
    sft_ck.params = r.sft.params;
    sft_ck.vocab = r.vocab;
    sft_ck.embedder = cfg.embedder_config();
    sft_ck.max_len = cfg.max_len;
    sft_ck.master_seed = cfg.master_seed;
    save_checkpoint(sft_ck, out_dir + "/sft_ckpt.json");
    atomic_write_file(out_dir + "/sft_loss.csv", loss_curve_to_csv(r.sft.loss_curve, config_json));
    write_jsonl(r.pairs, r.header, out_dir + "/prefs.jsonl");
}

} // namespace semdpo
