#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "semdpo/objectives.hpp"
#include "semdpo/prng.hpp"
#include "test_util.hpp"

using namespace semdpo;

namespace {

PreferencePair make_pair(int V, int dim, std::uint64_t seed, double alpha) {
    Prng rng(seed);
    PreferencePair pair;
    pair.x_text = "pair-" + std::to_string(seed);
    pair.xe = testutil::random_unit_embedding(dim, seed * 31 + 1);
    pair.y_w = testutil::random_seq(V, 1 + static_cast<int>(rng.below(3)), seed * 31 + 2);
    pair.y_l = testutil::random_seq(V, 1 + static_cast<int>(rng.below(3)), seed * 31 + 3);
    pair.drift_d = rng.u01();
    pair.weight = semantic_weight(alpha, pair.drift_d);
    return pair;
}

std::vector<PreferencePair> make_dataset(int n, int V, int dim, std::uint64_t seed,
                                         double alpha) {
    std::vector<PreferencePair> out;
    for (int i = 0; i < n; ++i) {
        out.push_back(make_pair(V, dim, seed + static_cast<std::uint64_t>(i) * 1000, alpha));
    }
    return out;
}

} // namespace

TEST_CASE("semantic weight closed forms and monotonicity") {
    CHECK(semantic_weight(8.0, 0.0) == 1.0);
    CHECK(semantic_weight(0.0, 0.73) == 1.0);
    CHECK(semantic_weight(8.0, 0.25) == 0.1353352832366127); // exp(-2)
    CHECK_THROWS_AS(semantic_weight(-1.0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(semantic_weight(2.0, -0.1), std::invalid_argument);

    // strictly decreasing in d for alpha > 0, and in alpha for d > 0
    double prev = semantic_weight(4.0, 0.0);
    for (double d = 0.05; d <= 1.0; d += 0.05) {
        const double w = semantic_weight(4.0, d);
        CHECK(w < prev);
        CHECK(w > 0.0);
        CHECK(w <= 1.0);
        prev = w;
    }
    prev = semantic_weight(0.0, 0.4);
    for (double a = 0.5; a <= 16.0; a += 0.5) {
        const double w = semantic_weight(a, 0.4);
        CHECK(w < prev);
        prev = w;
    }
}

TEST_CASE("log-odds difference arithmetic and antisymmetry") {
    CHECK(delta_logodds(0.05, 1.3, 1.3, 0.7, 0.7) == 0.0);
    CHECK(delta_logodds(0.05, 0.2, 0.0, -0.1, 0.0) ==
          Catch::Approx(0.015).epsilon(1e-12));
    const double d = delta_logodds(0.3, -1.1, -0.4, -2.2, -1.9);
    const double swapped = delta_logodds(0.3, -2.2, -1.9, -1.1, -0.4);
    CHECK(swapped == -d);
    CHECK_THROWS_AS(delta_logodds(0.05, std::nan(""), 0, 0, 0), std::invalid_argument);
    CHECK_THROWS_AS(delta_logodds(0.05, 0, INFINITY, 0, 0), std::invalid_argument);
}

TEST_CASE("pair loss closed forms, positivity, stable tails") {
    CHECK(pair_loss(0.0) == Catch::Approx(0.69314718055994529).margin(2e-16)); // ln 2
    CHECK(pair_loss(20.0) == 2.0611536203143808e-09);
    CHECK(pair_loss(-3.0) == 3.0485873515737421);
    CHECK(pair_loss(-20.0) == 20.000000002061153);
    CHECK(pair_loss(700.0) == std::exp(-700.0)); // tiny but nonzero: log1p(t) == t here
    CHECK(pair_loss(750.0) == 0.0);    // exp(-750) underflows even as a subnormal
    CHECK(pair_loss(-750.0) == 750.0); // would overflow a naive exp
    CHECK_THROWS_AS(pair_loss(std::nan("")), std::invalid_argument);

    // softplus identity: loss(delta) - loss(-delta) == -delta
    Prng rng(17);
    for (int i = 0; i < 200; ++i) {
        const double delta = 40.0 * (rng.u01() - 0.5);
        CHECK(pair_loss(delta) - pair_loss(-delta) ==
              Catch::Approx(-delta).margin(1e-10));
        CHECK(pair_loss(delta) > 0.0);
    }
}

TEST_CASE("weighted pair loss scales and validates its weight") {
    const double l = pair_loss(0.37);
    CHECK(semdpo_pair_loss(1.0, 0.37) == l);
    CHECK(semdpo_pair_loss(0.1353352832366127, 0.0) ==
          Catch::Approx(0.093807270005739726).margin(1e-15)); // exp(-2)*ln2
    CHECK(semdpo_pair_loss(1e-300, 5.0) < 1e-290);
    CHECK_THROWS_AS(semdpo_pair_loss(0.0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(semdpo_pair_loss(1.5, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(semdpo_pair_loss(-0.2, 0.1), std::invalid_argument);
}

TEST_CASE("hard filter keeps the boundary and zeroes beyond it") {
    CHECK(hard_filter_pair_loss(0.5, 0.5, 0.9) == pair_loss(0.9)); // d == tau included
    CHECK(hard_filter_pair_loss(0.5, 0.500001, 0.9) == 0.0);
    CHECK(hard_filter_pair_loss(0.5, 0.0, -1.2) == pair_loss(-1.2));
    CHECK_THROWS_AS(hard_filter_pair_loss(0.0, 0.1, 0.1), std::invalid_argument);
}

TEST_CASE("implicit reward and preference probability") {
    CHECK(implicit_reward(0.05, 2.2, 2.2) == 0.0);
    CHECK(implicit_reward(0.05, 0.1, -0.3) == Catch::Approx(0.02).epsilon(1e-12));
    // reward difference equals the log-odds difference (the partition term cancels)
    const double lpw = -3.1, lpwr = -3.4, lpl = -5.2, lplr = -4.9;
    const double rw = implicit_reward(0.05, lpw, lpwr);
    const double rl = implicit_reward(0.05, lpl, lplr);
    CHECK(rw - rl == Catch::Approx(delta_logodds(0.05, lpw, lpwr, lpl, lplr)).margin(1e-15));

    CHECK(bt_preference_prob(1.7, 1.7) == 0.5);
    CHECK(bt_preference_prob(std::log(3.0), 0.0) == Catch::Approx(0.75).epsilon(1e-14));
    Prng rng(23);
    for (int i = 0; i < 100; ++i) {
        const double a = 10.0 * (rng.u01() - 0.5);
        const double b = 10.0 * (rng.u01() - 0.5);
        const double p = bt_preference_prob(a, b);
        CHECK(p > 0.0);
        CHECK(p < 1.0);
        CHECK(p + bt_preference_prob(b, a) == Catch::Approx(1.0).margin(1e-15));
    }
}

TEST_CASE("batch loss is ln 2 at the reference point and respects modes") {
    const auto dataset = make_dataset(5, 6, 3, 900, 8.0);
    const auto params = testutil::random_params(6, 3, 0.5, 1);
    const LossConfig cfg{8.0, 0.05, 0.5};

    // theta == ref: every delta is exactly 0
    CHECK(batch_loss(dataset, params, params, cfg, Mode::kDpo) ==
          Catch::Approx(0.69314718055994529).margin(1e-13));

    // mean(W) * ln2 for the weighted mode at the reference point
    double mean_w = 0.0;
    for (const auto& pair : dataset) mean_w += pair.weight;
    mean_w /= static_cast<double>(dataset.size());
    CHECK(batch_loss(dataset, params, params, cfg, Mode::kSemdpo) ==
          Catch::Approx(mean_w * 0.69314718055994529).margin(1e-13));

    CHECK_THROWS_AS(batch_loss({}, params, params, cfg, Mode::kDpo), std::invalid_argument);
}

TEST_CASE("alpha 0 weighting reproduces plain preference loss bit-for-bit") {
    auto dataset = make_dataset(4, 6, 3, 2900, 0.0); // weights all exactly 1
    const auto p = testutil::random_params(6, 3, 0.6, 7);
    const auto ref = testutil::random_params(6, 3, 0.6, 8);
    const LossConfig cfg{0.0, 0.05, 0.5};
    CHECK(batch_loss(dataset, p, ref, cfg, Mode::kSemdpo) ==
          batch_loss(dataset, p, ref, cfg, Mode::kDpo));
    const PolicyGrad gs = batch_grad(dataset, p, ref, cfg, Mode::kSemdpo);
    const PolicyGrad gd = batch_grad(dataset, p, ref, cfg, Mode::kDpo);
    for (std::size_t i = 0; i < gs.B.size(); ++i) CHECK(gs.B[i] == gd.B[i]);
    for (std::size_t i = 0; i < gs.C.size(); ++i) CHECK(gs.C[i] == gd.C[i]);
}

TEST_CASE("batch loss equals an independent per-pair evaluation") {
    const auto dataset = make_dataset(3, 5, 2, 5100, 8.0);
    const auto p = testutil::random_params(5, 2, 0.4, 11);
    const auto ref = testutil::random_params(5, 2, 0.4, 12);
    const LossConfig cfg{8.0, 0.05, 0.5};
    for (const Mode mode : {Mode::kDpo, Mode::kSemdpo, Mode::kHardFilter}) {
        double expect = 0.0;
        for (const auto& pair : dataset) {
            const double delta = delta_logodds(
                cfg.beta, sequence_logprob(p, pair.xe, pair.y_w),
                sequence_logprob(ref, pair.xe, pair.y_w),
                sequence_logprob(p, pair.xe, pair.y_l),
                sequence_logprob(ref, pair.xe, pair.y_l));
            if (mode == Mode::kDpo) {
                expect += pair_loss(delta);
            } else if (mode == Mode::kSemdpo) {
                expect += pair.weight * pair_loss(delta);
            } else {
                expect += pair.drift_d <= cfg.tau ? pair_loss(delta) : 0.0;
            }
        }
        expect /= static_cast<double>(dataset.size());
        CHECK(batch_loss(dataset, p, ref, cfg, mode) ==
              Catch::Approx(expect).margin(1e-10));
    }
}

TEST_CASE("batch gradient matches central finite differences in every mode") {
    const auto dataset = make_dataset(3, 5, 2, 7300, 6.0);
    const auto ref = testutil::random_params(5, 2, 0.5, 21);
    const LossConfig cfg{6.0, 0.05, 0.5};
    const double eps = 1e-5;
    for (const Mode mode : {Mode::kDpo, Mode::kSemdpo, Mode::kHardFilter}) {
        PolicyParams p = testutil::random_params(5, 2, 0.5, 22);
        const PolicyGrad g = batch_grad(dataset, p, ref, cfg, mode);
        Prng pick(101);
        for (int probe = 0; probe < 20; ++probe) {
            const bool in_b = pick.u01() < 0.5;
            auto& coords = in_b ? p.B : p.C;
            const auto& grads = in_b ? g.B : g.C;
            const std::size_t i =
                static_cast<std::size_t>(pick.below(static_cast<std::uint64_t>(coords.size())));
            const double saved = coords[i];
            coords[i] = saved + eps;
            const double plus = batch_loss(dataset, p, ref, cfg, mode);
            coords[i] = saved - eps;
            const double minus = batch_loss(dataset, p, ref, cfg, mode);
            coords[i] = saved;
            const double fd = (plus - minus) / (2.0 * eps);
            const double denom = std::max({1.0, std::fabs(grads[i]), std::fabs(fd)});
            CHECK(std::fabs(grads[i] - fd) / denom < 1e-4);
        }
    }
}

TEST_CASE("weighting never enlarges a pair's gradient") {
    const std::vector<PreferencePair> one = {make_pair(5, 2, 4200, 8.0)};
    REQUIRE(one[0].weight < 1.0);
    const auto p = testutil::random_params(5, 2, 0.5, 31);
    const auto ref = testutil::random_params(5, 2, 0.5, 32);
    const LossConfig cfg{8.0, 0.05, 0.5};
    const PolicyGrad gd = batch_grad(one, p, ref, cfg, Mode::kDpo);
    const PolicyGrad gs = batch_grad(one, p, ref, cfg, Mode::kSemdpo);
    double nd = 0.0, ns = 0.0;
    for (const double v : gd.B) nd += v * v;
    for (const double v : gd.C) nd += v * v;
    for (const double v : gs.B) ns += v * v;
    for (const double v : gs.C) ns += v * v;
    CHECK(std::sqrt(ns) <= std::sqrt(nd));
}

TEST_CASE("filtered-out pairs contribute nothing to the gradient") {
    PreferencePair far = make_pair(5, 2, 6100, 8.0);
    far.drift_d = 0.9; // beyond tau
    far.weight = semantic_weight(8.0, far.drift_d);
    const std::vector<PreferencePair> one = {far};
    const auto p = testutil::random_params(5, 2, 0.5, 41);
    const auto ref = testutil::random_params(5, 2, 0.5, 42);
    const PolicyGrad g = batch_grad(one, p, ref, LossConfig{8.0, 0.05, 0.5}, Mode::kHardFilter);
    for (const double v : g.B) CHECK(v == 0.0);
    for (const double v : g.C) CHECK(v == 0.0);
}

TEST_CASE("weighted batch loss never exceeds the unweighted one") {
    const auto dataset = make_dataset(8, 6, 3, 8300, 5.0);
    const auto p = testutil::random_params(6, 3, 0.6, 51);
    const auto ref = testutil::random_params(6, 3, 0.6, 52);
    const LossConfig cfg{5.0, 0.05, 0.5};
    CHECK(batch_loss(dataset, p, ref, cfg, Mode::kSemdpo) <=
          batch_loss(dataset, p, ref, cfg, Mode::kDpo));
}

TEST_CASE("supervised loss closed form, positivity, and per-example oracle") {
    PolicyParams zero;
    zero.V = 5;
    zero.embed_dim = 2;
    zero.B.assign(25, 0.0);
    zero.C.assign(10, 0.0);
    std::vector<SftExample> data(2);
    data[0].x_text = "a";
    data[0].xe = EmbeddingVector{{1.0, 0.0}};
    data[0].y.ids = {3, 4, kEosId};
    data[1].x_text = "b";
    data[1].xe = EmbeddingVector{{0.0, 1.0}};
    data[1].y.ids = {2, 2, kEosId};
    // uniform policy: every length-3 sequence costs 3*ln5
    CHECK(sft_nll(data, zero) == 4.8283137373023006);
    CHECK(sft_nll(data, zero) > 0.0);

    const auto p = testutil::random_params(5, 2, 0.5, 61);
    double expect = 0.0;
    for (const auto& ex : data) expect += -sequence_logprob(p, ex.xe, ex.y);
    expect /= 2.0;
    CHECK(sft_nll(data, p) == Catch::Approx(expect).margin(1e-12));
    CHECK_THROWS_AS(sft_nll({}, p), std::invalid_argument);

    // gradient direction: one step of SGD lowers the loss
    PolicyParams stepped = p;
    const PolicyGrad g = sft_grad(data, p);
    for (std::size_t i = 0; i < stepped.B.size(); ++i) stepped.B[i] -= 0.05 * g.B[i];
    for (std::size_t i = 0; i < stepped.C.size(); ++i) stepped.C[i] -= 0.05 * g.C[i];
    CHECK(sft_nll(data, stepped) < sft_nll(data, p));
}

TEST_CASE("one preference step from the reference point increases delta") {
    const std::vector<PreferencePair> one = {make_pair(5, 2, 9700, 0.0)};
    const auto ref = testutil::random_params(5, 2, 0.5, 71);
    PolicyParams p = ref;
    const LossConfig cfg{0.0, 0.05, 0.5};
    const PolicyGrad g = batch_grad(one, p, ref, cfg, Mode::kDpo);
    for (std::size_t i = 0; i < p.B.size(); ++i) p.B[i] -= 0.5 * g.B[i];
    for (std::size_t i = 0; i < p.C.size(); ++i) p.C[i] -= 0.5 * g.C[i];
    const double delta_after = detail::pair_delta(one[0], p, ref, cfg.beta);
    CHECK(delta_after > 0.0);
}

TEST_CASE("mode names parse and print consistently") {
    CHECK(parse_mode("dpo") == Mode::kDpo);
    CHECK(parse_mode("semdpo") == Mode::kSemdpo);
    CHECK(parse_mode("hardfilter") == Mode::kHardFilter);
    CHECK_THROWS_AS(parse_mode("kto"), std::invalid_argument);
    for (const Mode m : {Mode::kDpo, Mode::kSemdpo, Mode::kHardFilter}) {
        CHECK(parse_mode(mode_name(m)) == m);
    }
}

TEST_CASE("loss config validation") {
    CHECK_NOTHROW((LossConfig{0.0, 0.05, 1.0}).validate());
    CHECK_THROWS_AS((LossConfig{-1.0, 0.05, 0.5}).validate(), std::invalid_argument);
    CHECK_THROWS_AS((LossConfig{8.0, 0.0, 0.5}).validate(), std::invalid_argument);
    CHECK_THROWS_AS((LossConfig{8.0, 0.05, 0.0}).validate(), std::invalid_argument);
    CHECK_THROWS_AS((LossConfig{8.0, 0.05, 1.1}).validate(), std::invalid_argument);
}
