#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "semdpo/policy.hpp"
#include "semdpo/prng.hpp"
#include "test_util.hpp"

using namespace semdpo;

namespace {
PolicyParams zero_params(int V, int dim) {
    PolicyParams p;
    p.V = V;
    p.embed_dim = dim;
    p.B.assign(static_cast<std::size_t>(V) * static_cast<std::size_t>(V), 0.0);
    p.C.assign(static_cast<std::size_t>(V) * static_cast<std::size_t>(dim), 0.0);
    return p;
}
} // namespace

TEST_CASE("logits add the bigram row and the prompt projection") {
    PolicyParams p = zero_params(4, 2);
    p.B[1 * 4 + 2] = 0.5;            // prev=1 -> token 2
    p.C[2 * 2 + 0] = 2.0;            // token 2 reads xe[0]
    p.C[3 * 2 + 1] = -1.0;           // token 3 reads xe[1]
    EmbeddingVector xe{{0.25, 0.75}};
    const auto logits = next_token_logits(p, 1, xe);
    CHECK(logits[0] == 0.0);
    CHECK(logits[1] == 0.0);
    CHECK(logits[2] == 0.5 + 2.0 * 0.25);
    CHECK(logits[3] == -0.75);
    CHECK_THROWS_AS(next_token_logits(p, 4, xe), std::invalid_argument);
    CHECK_THROWS_AS(next_token_logits(p, -1, xe), std::invalid_argument);
}

TEST_CASE("log_sum_exp is exact on uniform logits and immune to overflow") {
    const std::vector<double> five(5, 0.0);
    CHECK(log_sum_exp(five) == std::log(5.0));
    const std::vector<double> big = {1000.0, 1000.0};
    CHECK(log_sum_exp(big) == Catch::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
    const std::vector<double> tiny = {-1000.0, -1000.0};
    CHECK(log_sum_exp(tiny) == Catch::Approx(-1000.0 + std::log(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(log_sum_exp({}), std::invalid_argument);
}

TEST_CASE("softmax sums to 1 and matches exp(logit - lse)") {
    const auto p = testutil::random_params(6, 3, 0.5, 11);
    const auto xe = testutil::random_unit_embedding(3, 12);
    const auto logits = next_token_logits(p, 2, xe);
    const auto probs = softmax(logits);
    double sum = 0.0;
    for (const double q : probs) {
        CHECK(q > 0.0);
        sum += q;
    }
    CHECK(sum == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("sequence_logprob of a 3-step walk under a uniform policy") {
    // zero params, V=5: every step costs ln 5; two body tokens + EOS
    const PolicyParams p = zero_params(5, 2);
    EmbeddingVector xe{{1.0, 0.0}};
    TokenSeq seq;
    seq.ids = {3, 4, kEosId};
    CHECK(sequence_logprob(p, xe, seq) == -4.8283137373023006); // -3*ln5
}

TEST_CASE("sequence_logprob requires a terminal EOS and valid ids") {
    const PolicyParams p = zero_params(5, 2);
    EmbeddingVector xe{{1.0, 0.0}};
    TokenSeq no_eos;
    no_eos.ids = {3, 4};
    CHECK_THROWS_AS(sequence_logprob(p, xe, no_eos), std::invalid_argument);
    TokenSeq bad;
    bad.ids = {7, kEosId};
    CHECK_THROWS_AS(sequence_logprob(p, xe, bad), std::invalid_argument);
}

TEST_CASE("sampling golden walk: uniform policy picks [3, 1] under seed 42") {
    const PolicyParams p = zero_params(5, 2);
    EmbeddingVector xe{{1.0, 0.0}};
    Prng rng(42);
    const TokenSeq seq = sample(p, xe, rng, 3, 1.0);
    const std::vector<int> expect = {3, kEosId};
    CHECK(seq.ids == expect);
}

TEST_CASE("sampling never emits BOS, always terminates with EOS within max_len") {
    const auto p = testutil::random_params(8, 4, 0.8, 31);
    const auto xe = testutil::random_unit_embedding(4, 32);
    Prng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        const TokenSeq seq = sample(p, xe, rng, 6, 1.0);
        REQUIRE(!seq.ids.empty());
        CHECK(seq.ids.size() <= 6);
        CHECK(seq.ids.back() == kEosId);
        for (std::size_t i = 0; i + 1 < seq.ids.size(); ++i) {
            CHECK(seq.ids[i] != kBosId);
            CHECK(seq.ids[i] != kEosId);
        }
    }
}

TEST_CASE("the forced terminal EOS consumes no draw") {
    // Huge bias toward token 3 so the walk always runs to max_len.
    PolicyParams p = zero_params(5, 2);
    for (int prev = 0; prev < 5; ++prev) p.B[static_cast<std::size_t>(prev) * 5 + 3] = 50.0;
    EmbeddingVector xe{{1.0, 0.0}};
    Prng walk(9001);
    Prng twin(9001);
    const TokenSeq seq = sample(p, xe, walk, 4, 1.0);
    REQUIRE(seq.ids.size() == 4);            // 3 body tokens + forced EOS
    CHECK(seq.ids[3] == kEosId);
    (void)twin.u01();
    (void)twin.u01();
    (void)twin.u01();                        // exactly three free steps drew
    CHECK(walk.next() == twin.next());
}

TEST_CASE("near-zero temperature is argmax and consumes no draws") {
    PolicyParams p = zero_params(5, 2);
    p.B[0 * 5 + 4] = 1.0; // from BOS, token 4 dominates
    p.B[4 * 5 + 1] = 1.0; // then EOS dominates
    EmbeddingVector xe{{1.0, 0.0}};
    Prng rng(77);
    Prng untouched(77);
    const TokenSeq seq = sample(p, xe, rng, 8, 0.0);
    const std::vector<int> expect = {4, kEosId};
    CHECK(seq.ids == expect);
    CHECK(rng.next() == untouched.next());

    const TokenSeq greedy = greedy_decode(p, xe, 8);
    CHECK(greedy.ids == expect);
}

TEST_CASE("argmax tie-break picks the smallest non-BOS id") {
    const PolicyParams p = zero_params(5, 2); // all logits equal
    EmbeddingVector xe{{1.0, 0.0}};
    const TokenSeq seq = greedy_decode(p, xe, 4);
    REQUIRE(seq.ids.size() == 1);
    CHECK(seq.ids[0] == kEosId); // EOS=1 is the smallest non-BOS id
}

TEST_CASE("temperature rescales the sampling distribution") {
    PolicyParams p = zero_params(4, 2);
    p.B[0 * 4 + 3] = 1.0;
    EmbeddingVector xe{{1.0, 0.0}};
    // cold sampling concentrates on token 3 from BOS
    Prng rng(3);
    int hits = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const TokenSeq seq = sample(p, xe, rng, 2, 0.05);
        if (seq.ids[0] == 3) ++hits;
    }
    CHECK(hits == 200);
}

TEST_CASE("analytic log-probability gradient matches finite differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto p = testutil::random_params(6, 3, 0.7, seed * 101);
        const auto xe = testutil::random_unit_embedding(3, seed * 103);
        const auto seq = testutil::random_seq(6, 3, seed * 107);
        CHECK(finite_diff_check(p, xe, seq, 1e-5) < 1e-6);
    }
    const auto p = testutil::random_params(5, 2, 0.3, 1);
    const auto xe = testutil::random_unit_embedding(2, 2);
    const auto seq = testutil::random_seq(5, 2, 3);
    CHECK_THROWS_AS(finite_diff_check(p, xe, seq, 1e-8), std::invalid_argument);
    CHECK_THROWS_AS(finite_diff_check(p, xe, seq, 1e-2), std::invalid_argument);
}

TEST_CASE("gradient accumulation scales linearly") {
    const auto p = testutil::random_params(5, 3, 0.4, 41);
    const auto xe = testutil::random_unit_embedding(3, 42);
    const auto seq = testutil::random_seq(5, 3, 43);
    PolicyGrad g1(p);
    accumulate_logprob_grad(p, xe, seq, 1.0, g1);
    PolicyGrad g2(p);
    accumulate_logprob_grad(p, xe, seq, -2.5, g2);
    for (std::size_t i = 0; i < g1.B.size(); ++i) {
        CHECK(g2.B[i] == Catch::Approx(-2.5 * g1.B[i]).margin(1e-15));
    }
    for (std::size_t i = 0; i < g1.C.size(); ++i) {
        CHECK(g2.C[i] == Catch::Approx(-2.5 * g1.C[i]).margin(1e-15));
    }
}

TEST_CASE("init_params draws B then C from one stream, bounded by init_scale") {
    Prng rng(55);
    const PolicyParams p = init_params(4, 2, rng, 0.01);
    Prng twin(55);
    for (std::size_t i = 0; i < p.B.size(); ++i) {
        CHECK(p.B[i] == 0.01 * (2.0 * twin.u01() - 1.0));
        CHECK(std::fabs(p.B[i]) <= 0.01);
    }
    for (std::size_t i = 0; i < p.C.size(); ++i) {
        CHECK(p.C[i] == 0.01 * (2.0 * twin.u01() - 1.0));
    }
    Prng rng2(56);
    const PolicyParams zeros = init_params(4, 2, rng2, 0.0);
    for (const double v : zeros.B) CHECK(v == 0.0);
    for (const double v : zeros.C) CHECK(v == 0.0);
}

TEST_CASE("terminated-sequence distribution sums to 1 on a small policy") {
    const auto p = testutil::random_params(4, 2, 0.9, 71);
    const auto xe = testutil::random_unit_embedding(2, 72);
    const auto totals = testutil::enumerate_terminated(p, xe, 3);
    CHECK(std::fabs(totals.forced_distribution - 1.0) < 1e-12);
    CHECK(totals.plain_exp_logprob <= 1.0);
    CHECK(totals.plain_exp_logprob > 0.0);
}

TEST_CASE("enumerated sequence probability equals exp(sequence_logprob)") {
    const auto p = testutil::random_params(4, 2, 0.9, 81);
    const auto xe = testutil::random_unit_embedding(2, 82);
    TokenSeq seq;
    seq.ids = {3, 2, kEosId};
    const auto l0 = next_token_logits(p, kBosId, xe);
    const auto l1 = next_token_logits(p, 3, xe);
    const auto l2 = next_token_logits(p, 2, xe);
    const double manual = softmax(l0)[3] * softmax(l1)[2] * softmax(l2)[kEosId];
    CHECK(std::exp(sequence_logprob(p, xe, seq)) == Catch::Approx(manual).epsilon(1e-13));
}

TEST_CASE("parameter validation rejects malformed shapes") {
    PolicyParams p = zero_params(5, 2);
    p.B.pop_back();
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    PolicyParams q = zero_params(5, 2);
    q.embed_dim = 3;
    CHECK_THROWS_AS(q.validate(), std::invalid_argument);
    PolicyParams tiny = zero_params(4, 1);
    CHECK_NOTHROW(tiny.validate());
    tiny.V = 3;
    CHECK_THROWS_AS(tiny.validate(), std::invalid_argument);
}
