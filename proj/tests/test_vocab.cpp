#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "semdpo/vocab.hpp"

using namespace semdpo;

TEST_CASE("reserved ids occupy the first three slots") {
    const Vocab v = build_vocab({"a b c"}, 16);
    REQUIRE(v.size() >= 3);
    CHECK(v.tokens[kBosId] == "<bos>");
    CHECK(v.tokens[kEosId] == "<eos>");
    CHECK(v.tokens[kUnkId] == "<unk>");
}

TEST_CASE("vocabulary orders by frequency then lexicographically") {
    // freq: b=3, a=2, c=2, d=1 -> b, a, c, d after the reserved ids
    const Vocab v = build_vocab({"b a c", "b a c", "b d"}, 16);
    REQUIRE(v.size() == 7);
    CHECK(v.tokens[3] == "b");
    CHECK(v.tokens[4] == "a");
    CHECK(v.tokens[5] == "c");
    CHECK(v.tokens[6] == "d");
}

TEST_CASE("reserved literals in the corpus are never re-added") {
    const Vocab v = build_vocab({"<unk> <bos> x <eos> x"}, 16);
    REQUIRE(v.size() == 4);
    CHECK(v.tokens[3] == "x");
}

TEST_CASE("max_size truncates the tail of the ranking") {
    const Vocab v = build_vocab({"e d c b a", "d c b a", "c b a", "b a", "a"}, 5);
    REQUIRE(v.size() == 5);
    CHECK(v.tokens[3] == "a"); // freq 5
    CHECK(v.tokens[4] == "b"); // freq 4
    CHECK(v.id_of("e") == kUnkId);
}

TEST_CASE("build_vocab rejects bad inputs") {
    CHECK_THROWS_AS(build_vocab({}, 16), std::invalid_argument);
    CHECK_THROWS_AS(build_vocab({"a"}, 3), std::invalid_argument);
    CHECK_THROWS_AS(build_vocab({"a"}, kMaxVocab + 1), std::invalid_argument);
}

TEST_CASE("encode maps words, appends EOS, and truncates at max_len") {
    const Vocab v = build_vocab({"red fox jumps"}, 16);
    const TokenSeq seq = encode("red fox", v, 16);
    REQUIRE(seq.ids.size() == 3);
    CHECK(seq.ids[0] == v.id_of("red"));
    CHECK(seq.ids[1] == v.id_of("fox"));
    CHECK(seq.ids[2] == kEosId);

    const TokenSeq unk = encode("red wolf", v, 16);
    CHECK(unk.ids[1] == kUnkId);

    const TokenSeq trunc = encode("red fox jumps", v, 3);
    REQUIRE(trunc.ids.size() == 3); // 2 tokens + EOS
    CHECK(trunc.ids[2] == kEosId);

    const TokenSeq empty = encode("", v, 16);
    REQUIRE(empty.ids.size() == 1);
    CHECK(empty.ids[0] == kEosId);
}

TEST_CASE("detok inverts encode for in-vocabulary text") {
    const Vocab v = build_vocab({"misty harbor of dreams"}, 16);
    const std::string text = "misty harbor of dreams";
    CHECK(detok(encode(text, v, 16), v) == text);
    CHECK(detok(encode("", v, 16), v) == "");
}

TEST_CASE("detok renders unknown ids as the unk literal and rejects bad ids") {
    const Vocab v = build_vocab({"a b"}, 16);
    TokenSeq seq;
    seq.ids = {kUnkId, kEosId};
    CHECK(detok(seq, v) == "<unk>");
    TokenSeq bad;
    bad.ids = {v.size(), kEosId};
    CHECK_THROWS_AS(detok(bad, v), std::invalid_argument);
}

TEST_CASE("whitespace tokenizer splits on every ASCII whitespace run") {
    const auto toks = whitespace_tokenize("  a\tb\n c  d ");
    const std::vector<std::string> expect = {"a", "b", "c", "d"};
    CHECK(toks == expect);
    CHECK(whitespace_tokenize("").empty());
    CHECK(whitespace_tokenize("   ").empty());
}

TEST_CASE("vocab_hash matches the reference FNV value and tracks content") {
    Vocab v;
    v.tokens = {"<bos>", "<eos>", "<unk>", "a", "b"};
    CHECK(vocab_hash(v) == "010b2e6f061d001f");
    Vocab w = v;
    w.tokens.push_back("c");
    CHECK(vocab_hash(w) != vocab_hash(v));
}

TEST_CASE("encode rejects max_len below 1") {
    const Vocab v = build_vocab({"a"}, 16);
    CHECK_THROWS_AS(encode("a", v, 0), std::invalid_argument);
}
