// Command-line front end: gen-data, train, eval, compare, sweep-alpha,
// verify-bounds. Every subcommand is deterministic given its config and
// seed; exit codes are 0 (success), 2 (usage/config error), 3 (training
// aborted on a non-finite loss).
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "semdpo/pipeline.hpp"

namespace {

using namespace semdpo;

std::uint64_t parse_u64(const std::string& text, const char* what) {
    if (text.empty()) throw std::invalid_argument(std::string(what) + ": empty integer");
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
    if (errno != 0 || end == nullptr || *end != '\0') {
        throw std::invalid_argument(std::string(what) + ": bad integer \"" + text + "\"");
    }
    return static_cast<std::uint64_t>(v);
}

// Merge order: defaults < config file < SEMDPO_SEED env < flags.
RunConfig load_base_config(const std::string& config_path) {
    RunConfig cfg;
    if (!config_path.empty()) {
        cfg = runconfig_from_json(read_file(config_path));
    }
    if (const char* env = std::getenv("SEMDPO_SEED")) {
        cfg.master_seed = parse_u64(env, "SEMDPO_SEED");
    }
    return cfg;
}

// Flags shared by subcommands; each keeps the CLI11 option pointer so only
// flags the user actually passed override the config file.
struct CommonFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    int jobs = 1;
    double alpha = 8.0;
    double beta = 0.05;
    double tau = 0.5;
    double lr = 0.1;
    int epochs = 5;
    int batch_size = 64;
    int n_prompts = 1000;
    double epsilon = 0.1;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* jobs_opt = nullptr;
    CLI::Option* alpha_opt = nullptr;
    CLI::Option* beta_opt = nullptr;
    CLI::Option* tau_opt = nullptr;
    CLI::Option* lr_opt = nullptr;
    CLI::Option* epochs_opt = nullptr;
    CLI::Option* batch_opt = nullptr;
    CLI::Option* n_prompts_opt = nullptr;
    CLI::Option* epsilon_opt = nullptr;

    void attach_core(CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file");
        seed_opt = sub->add_option("--seed", seed, "master seed (overrides config and env)");
        jobs_opt = sub->add_option("--jobs", jobs, "worker threads for per-item stages");
    }

    void attach_train(CLI::App* sub) {
        alpha_opt = sub->add_option("--alpha", alpha, "semantic weighting coefficient");
        beta_opt = sub->add_option("--beta", beta, "preference loss temperature");
        tau_opt = sub->add_option("--tau", tau, "drift threshold for hard filtering");
        lr_opt = sub->add_option("--lr", lr, "learning rate");
        epochs_opt = sub->add_option("--epochs", epochs, "training epochs");
        batch_opt = sub->add_option("--batch-size", batch_size, "minibatch size");
    }

    RunConfig merged() const {
        RunConfig cfg = load_base_config(config_path);
        if (seed_opt && seed_opt->count() > 0) cfg.master_seed = seed;
        if (jobs_opt && jobs_opt->count() > 0) cfg.jobs = jobs;
        if (alpha_opt && alpha_opt->count() > 0) cfg.alpha = alpha;
        if (beta_opt && beta_opt->count() > 0) cfg.beta = beta;
        if (tau_opt && tau_opt->count() > 0) cfg.tau = tau;
        if (lr_opt && lr_opt->count() > 0) cfg.lr = lr;
        if (epochs_opt && epochs_opt->count() > 0) cfg.epochs = epochs;
        if (batch_opt && batch_opt->count() > 0) cfg.batch_size = batch_size;
        if (n_prompts_opt && n_prompts_opt->count() > 0) cfg.n_prompts = n_prompts;
        if (epsilon_opt && epsilon_opt->count() > 0) cfg.t2i_epsilon = epsilon;
        return cfg;
    }
};

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

void ensure_parent_dir(const std::string& file_path) {
    const std::filesystem::path parent = std::filesystem::path(file_path).parent_path();
    if (!parent.empty()) ensure_dir(parent.string());
}

// Checkpoints are authoritative for model-defining settings; the merged
// config echo must describe the run actually performed.
void adopt_checkpoint_config(RunConfig& cfg, const Checkpoint& ck) {
    cfg.embed_dim = ck.embedder.embed_dim;
    cfg.ngram_size = ck.embedder.ngram_size;
    cfg.max_len = ck.max_len;
}

std::vector<PreferencePair> load_pairs_for_alpha(const std::string& data_path,
                                                 const Checkpoint& ref_ck, double alpha,
                                                 DatasetHeader* header_out) {
    DatasetHeader header;
    std::vector<PreferencePair> pairs =
        read_jsonl(data_path, ref_ck.vocab, ref_ck.embedder, &header, ref_ck.max_len);
    if (pairs.empty()) throw std::runtime_error("dataset has no preference pairs: " + data_path);
    if (header.alpha != alpha) reweight_pairs(pairs, alpha);
    if (header_out) *header_out = header;
    return pairs;
}

int cmd_gen_data(const CommonFlags& common, const std::string& out_dir) {
    RunConfig cfg = common.merged();
    cfg.validate();
    ensure_dir(out_dir);
    const GenDataResult r = gen_data(cfg);
    write_gen_data(r, cfg, out_dir);
    std::cout << "wrote " << r.pairs.size() << " preference pairs to " << out_dir << "\n";
    return 0;
}

int cmd_train(const CommonFlags& common, const std::string& mode_str,
              const std::string& data_path, const std::string& init_path,
              const std::string& ref_path, const std::string& out_dir) {
    RunConfig cfg = common.merged();
    cfg.mode = mode_str;
    const TrainMode mode = parse_train_mode(mode_str);

    ensure_dir(out_dir);
    Checkpoint out_ck;
    std::vector<double> curve;

    if (mode == TrainMode::kSft) {
        // --lr/--epochs/--batch-size address the stage actually being trained,
        // so for sft they land on the supervised-stage knobs.
        if (common.lr_opt && common.lr_opt->count() > 0) cfg.sft_lr = common.lr;
        if (common.epochs_opt && common.epochs_opt->count() > 0) cfg.sft_epochs = common.epochs;
        if (common.batch_opt && common.batch_opt->count() > 0) {
            cfg.sft_batch_size = common.batch_size;
        }
        const auto corpus = read_sft_jsonl(data_path);
        Vocab vocab;
        PolicyParams init;
        if (!init_path.empty()) {
            const Checkpoint init_ck = load_checkpoint(init_path);
            adopt_checkpoint_config(cfg, init_ck);
            vocab = init_ck.vocab;
            init = init_ck.params;
        } else {
            vocab = vocab_from_corpus(corpus);
            init = init_params_seeded(vocab.size(), cfg.embed_dim, cfg.init_scale,
                                      cfg.master_seed, stage::kSftInit);
        }
        cfg.validate();
        const auto examples =
            sft_examples_from_corpus(corpus, vocab, cfg.embedder_config(), cfg.max_len);
        const TrainConfig tcfg = cfg.sft_train_config();
        const TrainResult result = train_sft(tcfg, examples, init);
        out_ck.params = result.params;
        out_ck.vocab = vocab;
        curve = result.loss_curve;
    } else {
        if (ref_path.empty()) {
            throw std::invalid_argument("--ref is required for preference modes");
        }
        const Checkpoint ref_ck = load_checkpoint(ref_path);
        adopt_checkpoint_config(cfg, ref_ck);
        cfg.validate();
        const auto pairs = load_pairs_for_alpha(data_path, ref_ck, cfg.alpha, nullptr);
        PolicyParams init = ref_ck.params;
        if (!init_path.empty()) {
            const Checkpoint init_ck = load_checkpoint(init_path);
            if (init_ck.params.V != ref_ck.params.V ||
                init_ck.params.embed_dim != ref_ck.params.embed_dim) {
                throw std::invalid_argument("--init and --ref checkpoint shapes differ");
            }
            init = init_ck.params;
        }
        TrainConfig tcfg = cfg.train_config();
        const TrainResult result = train_preference(tcfg, pairs, init, ref_ck.params);
        out_ck.params = result.params;
        out_ck.vocab = ref_ck.vocab;
        curve = result.loss_curve;
    }

    out_ck.embedder = cfg.embedder_config();
    out_ck.max_len = cfg.max_len;
    out_ck.master_seed = cfg.master_seed;
    save_checkpoint(out_ck, out_dir + "/ckpt.json");
    atomic_write_file(out_dir + "/loss.csv", loss_curve_to_csv(curve, experiment_config_json(cfg)));
    std::cout << "trained " << mode_str << ", final loss " << fmt_double(curve.back())
              << ", wrote " << out_dir << "/ckpt.json\n";
    return 0;
}

int cmd_eval(const CommonFlags& common, const std::string& ckpt_path,
             const std::string& prompts_path, const std::string& out_path) {
    RunConfig cfg = common.merged();
    const Checkpoint ck = load_checkpoint(ckpt_path);
    adopt_checkpoint_config(cfg, ck);
    cfg.validate();
    const auto prompts = read_lines(prompts_path);
    if (prompts.empty()) throw std::runtime_error("no prompts in " + prompts_path);
    const Lexicon lex = default_lexicon();
    const auto records = evaluate_policy(ck.params, ck.vocab, lex, prompts, cfg.eval_config());
    ensure_parent_dir(out_path);
    atomic_write_file(out_path, metrics_to_csv(records, experiment_config_json(cfg)));
    std::cout << "evaluated " << records.size() << " prompts to " << out_path << "\n";
    return 0;
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
    const auto lines = read_lines(path);
    std::vector<MetricsRecord> records;
    bool header_seen = false;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != "prompt_idx,sem_consistency,pref_score,t2i_drift,drift_d") {
                throw std::runtime_error(path + ": unexpected metrics header: " + line);
            }
            header_seen = true;
            continue;
        }
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            const std::size_t comma = line.find(',', pos);
            if (comma == std::string::npos) {
                fields.push_back(line.substr(pos));
                break;
            }
            fields.push_back(line.substr(pos, comma - pos));
            pos = comma + 1;
        }
        if (fields.size() != 5) {
            throw std::runtime_error(path + " line " + std::to_string(i + 1) +
                                     ": expected 5 fields");
        }
        MetricsRecord rec;
        rec.prompt = fields[0];
        try {
            rec.sem_consistency = std::stod(fields[1]);
            rec.pref_score = std::stod(fields[2]);
            rec.t2i_drift = std::stod(fields[3]);
            rec.drift_d = std::stod(fields[4]);
        } catch (const std::exception&) {
            throw std::runtime_error(path + " line " + std::to_string(i + 1) +
                                     ": bad numeric field");
        }
        records.push_back(std::move(rec));
    }
    if (records.empty()) throw std::runtime_error(path + ": no metric rows");
    return records;
}

int cmd_compare(const CommonFlags& common, const std::string& a_path,
                const std::string& b_path, const std::string& out_path) {
    RunConfig cfg = common.merged();
    cfg.validate();
    const auto a = read_metrics_csv(a_path);
    const auto b = read_metrics_csv(b_path);
    const HeadToHead h = head_to_head(a, b, cfg.tie_eps);
    ensure_parent_dir(out_path);
    atomic_write_file(out_path, head_to_head_to_json(h, experiment_config_json(cfg)));
    std::cout << "compared " << a.size() << " rows to " << out_path << "\n";
    return 0;
}

int cmd_sweep_alpha(const CommonFlags& common, const std::string& data_path,
                    const std::string& ref_path, const std::string& prompts_path,
                    const std::vector<double>& alphas_flag, const std::string& out_path) {
    RunConfig cfg = common.merged();
    const Checkpoint ref_ck = load_checkpoint(ref_path);
    adopt_checkpoint_config(cfg, ref_ck);
    if (!alphas_flag.empty()) cfg.alphas = alphas_flag;
    cfg.mode = "semdpo";
    cfg.validate();
    std::set<double> unique_alphas(cfg.alphas.begin(), cfg.alphas.end());
    if (unique_alphas.size() != cfg.alphas.size()) {
        throw std::invalid_argument("duplicate alpha in sweep list");
    }
    const auto prompts = read_lines(prompts_path);
    if (prompts.empty()) throw std::runtime_error("no prompts in " + prompts_path);
    // Stored weights are irrelevant here: the sweep reweights per row. Load
    // at the header's own alpha so validation passes.
    DatasetHeader header;
    std::vector<PreferencePair> pairs =
        read_jsonl(data_path, ref_ck.vocab, ref_ck.embedder, &header, ref_ck.max_len);
    if (pairs.empty()) throw std::runtime_error("dataset has no preference pairs: " + data_path);
    const Lexicon lex = default_lexicon();
    const auto rows = alpha_sweep(cfg.train_config(), pairs, ref_ck.params, ref_ck.params,
                                  ref_ck.vocab, lex, prompts, cfg.eval_config(), cfg.alphas);
    ensure_parent_dir(out_path);
    atomic_write_file(out_path, sweep_to_csv(rows, experiment_config_json(cfg)));
    std::cout << "swept " << rows.size() << " alphas to " << out_path << "\n";
    return 0;
}

int cmd_verify_bounds(const CommonFlags& common, const std::string& ckpt_path,
                      const std::string& data_path, const std::string& ref_path,
                      const std::string& out_path) {
    RunConfig cfg = common.merged();
    const Checkpoint ck = load_checkpoint(ckpt_path);
    adopt_checkpoint_config(cfg, ck);
    cfg.validate();
    const Checkpoint ref_ck = ref_path.empty() ? ck : load_checkpoint(ref_path);
    if (ref_ck.params.V != ck.params.V || ref_ck.params.embed_dim != ck.params.embed_dim) {
        throw std::invalid_argument("--ref checkpoint shape differs from --ckpt");
    }
    const auto pairs = load_pairs_for_alpha(data_path, ck, cfg.alpha, nullptr);
    const Prop1Report p1 = verify_prop1(pairs, ck.params, ref_ck.params,
                                        LossConfig{cfg.alpha, cfg.beta, cfg.tau});
    std::vector<std::pair<std::string, std::string>> items;
    items.reserve(pairs.size());
    for (const auto& pair : pairs) items.emplace_back(pair.x_text, pair.yw_text);
    const Prop2Report p2 =
        verify_prop2(items, cfg.t2i_epsilon,
                     derive_stage_seed(cfg.master_seed, stage::kProp2), ck.embedder);
    ensure_parent_dir(out_path);
    atomic_write_file(out_path, bounds_report_to_json(p1, p2, experiment_config_json(cfg)));
    std::cout << "bounds report (" << pairs.size() << " pairs, violations "
              << p2.violations << ") to " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic lab for semantically weighted preference-loss training"};
    app.require_subcommand(1);
    int rc = 0;

    CommonFlags g_common;
    std::string g_out;
    auto* gen = app.add_subcommand("gen-data", "generate prompts, SFT corpus/policy, and preference pairs");
    g_common.attach_core(gen);
    g_common.alpha_opt = gen->add_option("--alpha", g_common.alpha, "alpha for stored weights");
    g_common.n_prompts_opt = gen->add_option("--n-prompts", g_common.n_prompts, "training prompt count");
    gen->add_option("--out", g_out, "output directory")->required();
    gen->callback([&] { rc = cmd_gen_data(g_common, g_out); });

    CommonFlags t_common;
    std::string t_mode, t_data, t_init, t_ref, t_out;
    auto* train = app.add_subcommand("train", "train sft or a preference mode");
    t_common.attach_core(train);
    t_common.attach_train(train);
    train->add_option("--mode", t_mode, "sft|dpo|semdpo|hardfilter")->required();
    train->add_option("--data", t_data, "sft.jsonl (sft) or prefs.jsonl (preference modes)")->required();
    train->add_option("--init", t_init, "initial checkpoint (defaults to --ref for preference modes)");
    train->add_option("--ref", t_ref, "frozen reference checkpoint (required for preference modes)");
    train->add_option("--out", t_out, "output directory")->required();
    train->callback([&] { rc = cmd_train(t_common, t_mode, t_data, t_init, t_ref, t_out); });

    CommonFlags e_common;
    std::string e_ckpt, e_prompts, e_out;
    auto* ev = app.add_subcommand("eval", "greedy-decode prompts and write the metrics CSV");
    e_common.attach_core(ev);
    e_common.epsilon_opt = ev->add_option("--epsilon", e_common.epsilon, "synthetic generator error bound");
    ev->add_option("--ckpt", e_ckpt, "policy checkpoint")->required();
    ev->add_option("--prompts", e_prompts, "prompt list, one per line")->required();
    ev->add_option("--out", e_out, "metrics CSV path")->required();
    ev->callback([&] { rc = cmd_eval(e_common, e_ckpt, e_prompts, e_out); });

    CommonFlags c_common;
    std::string c_a, c_b, c_out;
    auto* cmp = app.add_subcommand("compare", "head-to-head win/tie/loss between two metrics CSVs");
    c_common.attach_core(cmp);
    cmp->add_option("--a", c_a, "metrics CSV for side a")->required();
    cmp->add_option("--b", c_b, "metrics CSV for side b")->required();
    cmp->add_option("--out", c_out, "head-to-head JSON path")->required();
    cmp->callback([&] { rc = cmd_compare(c_common, c_a, c_b, c_out); });

    CommonFlags s_common;
    std::string s_data, s_ref, s_prompts, s_out;
    std::vector<double> s_alphas;
    auto* sweep = app.add_subcommand("sweep-alpha", "retrain at each alpha and write the sweep CSV");
    s_common.attach_core(sweep);
    s_common.attach_train(sweep);
    sweep->add_option("--data", s_data, "preference JSONL")->required();
    sweep->add_option("--ref", s_ref, "frozen reference checkpoint (also the init)")->required();
    sweep->add_option("--prompts", s_prompts, "evaluation prompt list")->required();
    sweep->add_option("--alphas", s_alphas, "alpha values (comma separated)")->delimiter(',');
    sweep->add_option("--out", s_out, "sweep CSV path")->required();
    sweep->callback([&] { rc = cmd_sweep_alpha(s_common, s_data, s_ref, s_prompts, s_alphas, s_out); });

    CommonFlags v_common;
    std::string v_ckpt, v_data, v_ref, v_out;
    auto* verify = app.add_subcommand("verify-bounds", "numerically audit both theoretical bounds");
    v_common.attach_core(verify);
    v_common.attach_train(verify);
    v_common.epsilon_opt = verify->add_option("--epsilon", v_common.epsilon, "synthetic generator error bound");
    verify->add_option("--ckpt", v_ckpt, "policy checkpoint to audit")->required();
    verify->add_option("--data", v_data, "preference JSONL")->required();
    verify->add_option("--ref", v_ref, "reference checkpoint (defaults to --ckpt)");
    verify->add_option("--out", v_out, "report JSON path")->required();
    verify->callback([&] { rc = cmd_verify_bounds(v_common, v_ckpt, v_data, v_ref, v_out); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const semdpo::TrainAbort& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return rc;
}
