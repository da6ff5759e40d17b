#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "semdpo/embedder.hpp"

namespace semdpo {

constexpr int kBosId = 0;
constexpr int kEosId = 1;
constexpr int kUnkId = 2;
constexpr int kMaxVocab = 512;
constexpr int kDefaultMaxLen = 16;

inline std::vector<std::string> whitespace_tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

// Token table with reserved ids 0..2. Indices are stable once built.
struct Vocab {
    std::vector<std::string> tokens;

    int size() const { return static_cast<int>(tokens.size()); }

    int id_of(std::string_view tok) const {
        for (int i = 0; i < size(); ++i) {
            if (tokens[static_cast<std::size_t>(i)] == tok) return i;
        }
        return kUnkId;
    }
};

// Token id sequence terminated by exactly one EOS. BOS is implicit and
// never stored.
struct TokenSeq {
    std::vector<int> ids;

    std::size_t length() const { return ids.size(); } // includes EOS
};

// Keep the max_size-3 most frequent whitespace tokens, ties broken
// lexicographically, behind the three reserved ids.
inline Vocab build_vocab(const std::vector<std::string>& corpus, int max_size) {
    if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    if (max_size < 4) throw std::invalid_argument("build_vocab: max_size must be >= 4");
    if (max_size > kMaxVocab) throw std::invalid_argument("build_vocab: max_size exceeds limit");

    std::map<std::string, std::int64_t> counts;
    for (const auto& line : corpus) {
        for (auto& tok : whitespace_tokenize(line)) counts[tok] += 1;
    }
    std::vector<std::pair<std::string, std::int64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocab v;
    v.tokens = {"<bos>", "<eos>", "<unk>"};
    for (const auto& [tok, cnt] : ranked) {
        if (v.size() >= max_size) break;
        if (tok == "<bos>" || tok == "<eos>" || tok == "<unk>") continue;
        v.tokens.push_back(tok);
    }
    return v;
}

// Whitespace tokens mapped to ids (UNK for out-of-vocabulary), truncated to
// max_len - 1 tokens, EOS appended.
inline TokenSeq encode(std::string_view text, const Vocab& vocab,
                       int max_len = kDefaultMaxLen) {
    if (max_len < 1) throw std::invalid_argument("encode: max_len must be >= 1");
    TokenSeq seq;
    for (const auto& tok : whitespace_tokenize(text)) {
        if (static_cast<int>(seq.ids.size()) >= max_len - 1) break;
        seq.ids.push_back(vocab.id_of(tok));
    }
    seq.ids.push_back(kEosId);
    return seq;
}

inline std::string detok(const TokenSeq& seq, const Vocab& vocab) {
    std::string out;
    for (const int id : seq.ids) {
        if (id == kEosId) break;
        if (id < 0 || id >= vocab.size()) {
            throw std::invalid_argument("detok: token id out of range");
        }
        if (!out.empty()) out += ' ';
        out += vocab.tokens[static_cast<std::size_t>(id)];
    }
    return out;
}

// Fingerprint used to pair datasets with the checkpoint they were built
// against: FNV-1a over the token list joined with newlines, as 16 hex digits.
inline std::string vocab_hash(const Vocab& vocab) {
    std::string joined;
    for (std::size_t i = 0; i < vocab.tokens.size(); ++i) {
        if (i > 0) joined += '\n';
        joined += vocab.tokens[i];
    }
    const std::uint64_t h = fnv1a64(joined);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
}

} // namespace semdpo
