#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "semdpo/embedder.hpp"
#include "semdpo/io.hpp"
#include "semdpo/policy.hpp"
#include "semdpo/vocab.hpp"

namespace semdpo {

constexpr int kCheckpointVersion = 1;

// A saved policy: parameters plus everything needed to use them (token
// table, embedder settings, decode length) and the seed that produced them.
struct Checkpoint {
    PolicyParams params;
    Vocab vocab;
    EmbedderConfig embedder;
    int max_len = kDefaultMaxLen;
    std::uint64_t master_seed = 0;

    void validate() const {
        params.validate();
        embedder.validate();
        if (params.embed_dim != embedder.embed_dim) {
            throw std::invalid_argument("Checkpoint: embed_dim mismatch");
        }
        if (vocab.size() != params.V) {
            throw std::invalid_argument("Checkpoint: vocab size != V");
        }
        if (max_len < 1) throw std::invalid_argument("Checkpoint: max_len must be >= 1");
    }
};

namespace detail {

inline void append_double_array(std::string& out, const std::vector<double>& xs) {
    out += '[';
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i > 0) out += ',';
        out += fmt_double(xs[i]);
    }
    out += ']';
}

} // namespace detail

// Serialization is fully deterministic: fixed key order, floats printed with
// 17 significant digits so every double round-trips exactly.
inline std::string checkpoint_to_json(const Checkpoint& ck) {
    ck.validate();
    std::string out;
    out.reserve(64 + 20 * (ck.params.B.size() + ck.params.C.size()));
    out += "{\"version\":";
    out += std::to_string(kCheckpointVersion);
    out += ",\"V\":";
    out += std::to_string(ck.params.V);
    out += ",\"embed_dim\":";
    out += std::to_string(ck.params.embed_dim);
    out += ",\"vocab\":[";
    for (std::size_t i = 0; i < ck.vocab.tokens.size(); ++i) {
        if (i > 0) out += ',';
        out += '"';
        out += json_escape(ck.vocab.tokens[i]);
        out += '"';
    }
    out += "],\"config\":{\"embed_dim\":";
    out += std::to_string(ck.embedder.embed_dim);
    out += ",\"ngram_size\":";
    out += std::to_string(ck.embedder.ngram_size);
    out += ",\"max_len\":";
    out += std::to_string(ck.max_len);
    out += "},\"master_seed\":";
    out += std::to_string(ck.master_seed);
    out += ",\"B\":";
    detail::append_double_array(out, ck.params.B);
    out += ",\"C\":";
    detail::append_double_array(out, ck.params.C);
    out += "}\n";
    return out;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    atomic_write_file(path, checkpoint_to_json(ck));
}

inline Checkpoint checkpoint_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: invalid JSON: ") + e.what());
    }
    try {
        const int version = j.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw std::runtime_error("checkpoint: version mismatch");
        }
        Checkpoint ck;
        ck.params.V = j.at("V").get<int>();
        ck.params.embed_dim = j.at("embed_dim").get<int>();
        ck.vocab.tokens = j.at("vocab").get<std::vector<std::string>>();
        const auto& cfg = j.at("config");
        ck.embedder.embed_dim = cfg.at("embed_dim").get<int>();
        ck.embedder.ngram_size = cfg.at("ngram_size").get<int>();
        ck.max_len = cfg.at("max_len").get<int>();
        ck.master_seed = j.at("master_seed").get<std::uint64_t>();
        ck.params.B = j.at("B").get<std::vector<double>>();
        ck.params.C = j.at("C").get<std::vector<double>>();
        const std::size_t expect_b =
            static_cast<std::size_t>(ck.params.V) * static_cast<std::size_t>(ck.params.V);
        const std::size_t expect_c =
            static_cast<std::size_t>(ck.params.V) * static_cast<std::size_t>(ck.params.embed_dim);
        if (ck.params.B.size() != expect_b || ck.params.C.size() != expect_c ||
            ck.vocab.tokens.size() != static_cast<std::size_t>(ck.params.V)) {
            throw std::runtime_error("checkpoint: shape mismatch");
        }
        ck.validate();
        return ck;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: bad field: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(std::string("checkpoint: ") + e.what());
    }
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return checkpoint_from_json(read_file(path));
}

} // namespace semdpo
