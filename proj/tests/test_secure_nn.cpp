#include <cmath>
#include <random>

#include "doctest.h"
#include "fedinfer/secure_nn.hpp"
#include "test_helpers.hpp"

using namespace fedinfer;
using fedinfer::test::run_mpc;

namespace {

constexpr int kF = 16;

ShareTensor input_share(PartyContext& ctx, const RingTensor& enc, std::uint64_t seed) {
    Rng rng(seed);
    return share(enc, ctx.parties, rng, kF)[static_cast<std::size_t>(ctx.party)];
}

} // namespace

TEST_SUITE("secure_nn") {

TEST_CASE("provisioning a zero model reconstructs to zeros") {
    auto m = build_custom_model({4, 3});
    Rng rng(1);
    auto pm = provision(m, 3, rng, RingParams{});
    auto back = reconstruct_model(pm, RingParams{});
    for (double v : back.weights[0].data) CHECK(v == 0.0);
    for (double v : back.biases[0].data) CHECK(v == 0.0);
}

TEST_CASE("small_mlp provisioning hands every party two weight and two bias shares") {
    auto m = build_model("small_mlp");
    init_weights(m, 3);
    Rng rng(2);
    auto pm = provision(m, 3, rng, RingParams{});
    CHECK(pm.views.size() == 3);
    for (const auto& view : pm.views) {
        CHECK(view.weights.size() == 2);
        CHECK(view.biases.size() == 2);
        CHECK(view.weights[0].shape() == Shape{3072, 256});
        CHECK(view.weights[1].shape() == Shape{256, 10});
    }
}

TEST_CASE("provision rejects a single party") {
    auto m = build_custom_model({2, 2});
    Rng rng(3);
    CHECK_THROWS_AS(provision(m, 1, rng, RingParams{}), Error);
}

TEST_CASE("reconstructed weights match the plaintext model within half an ulp") {
    auto m = build_custom_model({6, 5, 4});
    init_weights(m, 17);
    Rng rng(4);
    auto pm = provision(m, 4, rng, RingParams{});
    auto back = reconstruct_model(pm, RingParams{});
    const double tol = std::ldexp(1.0, -kF - 1);
    for (std::size_t l = 0; l < m.weights.size(); ++l)
        for (std::size_t i = 0; i < m.weights[l].numel(); ++i)
            CHECK(std::abs(back.weights[l].data[i] - m.weights[l].data[i]) <= tol);
}

TEST_CASE("a single party's view of the weights looks uniform") {
    auto m = build_custom_model({64, 32});
    init_weights(m, 23);
    Rng rng(5);
    auto pm = provision(m, 3, rng, RingParams{});
    std::vector<std::uint8_t> bytes;
    for (u64 v : pm.views[0].weights[0].payload.data)
        for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
    CHECK(test::chi2_bytes(bytes) < test::kChi2Crit255);
}

TEST_CASE("protected model bundle round trips through share files") {
    auto m = build_custom_model({5, 4, 3});
    init_weights(m, 29);
    Rng rng(6);
    auto pm = provision(m, 3, rng, RingParams{});
    save_protected_model("/tmp/fi_bundle", pm, RingParams{});
    auto back = load_protected_model("/tmp/fi_bundle", 3, RingParams{});
    auto rec = reconstruct_model(back, RingParams{});
    const double tol = std::ldexp(1.0, -kF - 1);
    for (std::size_t l = 0; l < m.weights.size(); ++l)
        for (std::size_t i = 0; i < m.weights[l].numel(); ++i)
            CHECK(std::abs(rec.weights[l].data[i] - m.weights[l].data[i]) <= tol);
}

TEST_CASE("identity network: secure forward returns the input") {
    auto m = build_custom_model({3, 3});
    for (int i = 0; i < 3; ++i) m.weights[0].at(static_cast<std::size_t>(i), static_cast<std::size_t>(i)) = 1.0;
    Rng rng(7);
    auto pm = provision(m, 3, rng, RingParams{});
    RealTensor x({1, 3}, {0.25, -1.5, 2.0});
    auto xe = encode(x, kF);
    auto outs = run_mpc(3, 111, [&](PartyContext& ctx) {
        return secure_forward(ctx, pm.views[static_cast<std::size_t>(ctx.party)],
                              input_share(ctx, xe, 9));
    });
    auto got = decode(reconstruct(outs), outs[0].frac_scale);
    for (int i = 0; i < 3; ++i)
        CHECK(got.data[static_cast<std::size_t>(i)] ==
              doctest::Approx(x.data[static_cast<std::size_t>(i)]).epsilon(1e-4));
}

TEST_CASE("secure forward tracks the plaintext forward on a trained tiny model") {
    auto data = make_gaussian_blobs(300, 4, 16, 3.0, 0.7, 31);
    auto m = build_custom_model({16, 12, 4});
    init_weights(m, 37);
    TrainConfig tc;
    tc.epochs = 10;
    tc.seed = 5;
    m = train(m, data, tc);

    Rng rng(8);
    auto pm = provision(m, 3, rng, RingParams{});
    std::mt19937_64 qrng(41);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    RealTensor x({64, 16});
    for (auto& v : x.data) v = dist(qrng);
    auto xe = encode(x, kF);

    auto outs = run_mpc(3, 222, [&](PartyContext& ctx) {
        return secure_forward(ctx, pm.views[static_cast<std::size_t>(ctx.party)],
                              input_share(ctx, xe, 10));
    });
    auto got = decode(reconstruct(outs), outs[0].frac_scale);
    auto want = forward(m, x);
    int agree = 0;
    double max_err = 0.0;
    for (std::size_t q = 0; q < 64; ++q) {
        for (std::size_t j = 0; j < 4; ++j)
            max_err = std::max(max_err, std::abs(got.at(q, j) - want.at(q, j)));
        if (argmax_row(got, q) == argmax_row(want, q)) ++agree;
    }
    CHECK(max_err <= 0.05);
    CHECK(agree >= 63);
}

TEST_CASE("round accounting: one round per FC layer, zero for bias") {
    auto m = build_custom_model({8, 4});
    init_weights(m, 43);
    Rng rng(9);
    auto pm = provision(m, 2, rng, RingParams{});
    RealTensor x({2, 8});
    auto xe = encode(x, kF);
    RoundLedger ledger;
    run_mpc(
        2, 333,
        [&](PartyContext& ctx) {
            return secure_forward(ctx, pm.views[static_cast<std::size_t>(ctx.party)],
                                  input_share(ctx, xe, 11));
        },
        &ledger);
    CHECK(ledger.rounds == 1);
}

TEST_CASE("round accounting: relu rounds are linear in the comparison bit-length") {
    auto m = build_custom_model({6, 6, 3});
    init_weights(m, 47);
    std::vector<double> ells, rounds;
    for (int ell : {16, 32, 64}) {
        Rng rng(10);
        RingParams params;
        params.compare_bits = ell;
        auto pm = provision(m, 2, rng, params);
        RealTensor x({2, 6});
        auto xe = encode(x, kF);
        RoundLedger ledger;
        NetworkPreset loopback("loopback", 2, LinkProfile{0.01, 1e12});
        Transport transport(loopback);
        TrustedDealer dealer(444, 2);
        run_parties(2, transport, [&](int p) {
            PartyContext ctx{p, 2, params, &transport, &dealer};
            Rng srng(12);
            auto sx = share(xe, 2, srng, kF)[static_cast<std::size_t>(p)];
            secure_forward(ctx, pm.views[static_cast<std::size_t>(p)], sx);
        });
        ledger = transport.ledger();
        // 2 FC rounds + relu; relu = ell (compare, incl. fused rescale) + 1 (product)
        CHECK(ledger.rounds == static_cast<std::uint64_t>(2 + ell + 1));
        ells.push_back(ell);
        rounds.push_back(static_cast<double>(ledger.rounds));
    }
    CHECK(test::linear_fit_r2(ells, rounds) >= 0.99);
}

TEST_CASE("secure softmax: uniform logits give uniform probabilities") {
    RealTensor z({1, 10});
    auto ze = encode(z, 2 * kF);
    auto outs = run_mpc(3, 555, [&](PartyContext& ctx) {
        Rng rng(13);
        auto sz = share(ze, ctx.parties, rng, 2 * kF)[static_cast<std::size_t>(ctx.party)];
        return secure_softmax(ctx, sz, ApproxConfig{});
    });
    auto got = decode(reconstruct(outs), kF);
    double sum = 0.0;
    for (double v : got.data) {
        CHECK(std::abs(v - 0.1) <= 0.02);
        sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-2);
}

TEST_CASE("secure softmax tracks the plaintext softmax on random logits") {
    std::mt19937_64 rng(59);
    std::uniform_real_distribution<double> dist(-4.0, 4.0);
    RealTensor z({32, 10});
    for (auto& v : z.data) v = dist(rng);
    auto ze = encode(z, 2 * kF);
    auto outs = run_mpc(3, 666, [&](PartyContext& ctx) {
        Rng srng(14);
        auto sz = share(ze, ctx.parties, srng, 2 * kF)[static_cast<std::size_t>(ctx.party)];
        return secure_softmax(ctx, sz, ApproxConfig{});
    });
    auto got = decode(reconstruct(outs), kF);
    auto want = softmax(z);
    for (std::size_t q = 0; q < 32; ++q) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 10; ++j) {
            CHECK(std::abs(got.at(q, j) - want.at(q, j)) <= 0.02);
            sum += got.at(q, j);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-2);
    }
}

TEST_CASE("secure softmax rounds are linear in the exp iteration count") {
    RealTensor z({2, 6});
    auto ze = encode(z, 2 * kF);
    std::vector<double> iters, rounds;
    for (int n : {6, 9, 12}) {
        ApproxConfig cfg;
        cfg.exp_iterations = n;
        RoundLedger ledger;
        run_mpc(
            2, 777,
            [&](PartyContext& ctx) {
                Rng srng(15);
                auto sz =
                    share(ze, ctx.parties, srng, 2 * kF)[static_cast<std::size_t>(ctx.party)];
                return secure_softmax(ctx, sz, cfg);
            },
            &ledger);
        iters.push_back(n);
        rounds.push_back(static_cast<double>(ledger.rounds));
    }
    CHECK(rounds[1] > rounds[0]);
    CHECK(rounds[2] > rounds[1]);
    CHECK(test::linear_fit_r2(iters, rounds) >= 0.99);
}

TEST_CASE("secure entropy of the uniform distribution is ln 10") {
    RealTensor p({1, 10});
    for (auto& v : p.data) v = 0.1;
    auto pe = encode(p, kF);
    auto outs = run_mpc(3, 888, [&](PartyContext& ctx) {
        Rng srng(16);
        auto sp = share(pe, ctx.parties, srng, kF)[static_cast<std::size_t>(ctx.party)];
        return secure_entropy(ctx, sp, ApproxConfig{});
    });
    auto got = decode(reconstruct(outs), outs[0].frac_scale);
    CHECK(std::abs(got.data[0] - std::log(10.0)) <= 0.05);
}

TEST_CASE("secure entropy tracks the plaintext entropy on random distributions") {
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> dist(0.05, 1.0);
    RealTensor p({16, 8});
    for (std::size_t q = 0; q < 16; ++q) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 8; ++j) {
            p.at(q, j) = dist(rng);
            sum += p.at(q, j);
        }
        for (std::size_t j = 0; j < 8; ++j) p.at(q, j) /= sum;
    }
    auto pe = encode(p, kF);
    auto outs = run_mpc(3, 999, [&](PartyContext& ctx) {
        Rng srng(17);
        auto sp = share(pe, ctx.parties, srng, kF)[static_cast<std::size_t>(ctx.party)];
        return secure_entropy(ctx, sp, ApproxConfig{});
    });
    auto got = decode(reconstruct(outs), outs[0].frac_scale);
    for (std::size_t q = 0; q < 16; ++q) {
        std::vector<double> row(8);
        for (std::size_t j = 0; j < 8; ++j) row[j] = p.at(q, j);
        CHECK(std::abs(got.data[q] - entropy_nats(row)) <= 0.05);
    }
}

TEST_CASE("secure row max and argmax match plaintext oracles") {
    std::mt19937_64 rng(67);
    std::uniform_real_distribution<double> dist(-3.0, 3.0);
    RealTensor z({12, 7});
    for (auto& v : z.data) v = dist(rng);
    auto ze = encode(z, kF);

    auto maxes = run_mpc(3, 1111, [&](PartyContext& ctx) {
        Rng srng(18);
        auto sz = share(ze, ctx.parties, srng, kF)[static_cast<std::size_t>(ctx.party)];
        return secure_row_max(ctx, sz);
    });
    auto got_max = decode(reconstruct(maxes), kF);
    for (std::size_t q = 0; q < 12; ++q) {
        double want = -1e9;
        for (std::size_t j = 0; j < 7; ++j) want = std::max(want, z.at(q, j));
        CHECK(got_max.data[q] == doctest::Approx(want).epsilon(1e-3));
    }

    auto onehots = run_mpc(3, 2222, [&](PartyContext& ctx) {
        Rng srng(19);
        auto sz = share(ze, ctx.parties, srng, kF)[static_cast<std::size_t>(ctx.party)];
        return secure_argmax_onehot(ctx, sz);
    });
    auto got_oh = reconstruct(onehots);
    for (std::size_t q = 0; q < 12; ++q) {
        int onehot_class = -1;
        int ones = 0;
        for (std::size_t j = 0; j < 7; ++j)
            if (got_oh.data[q * 7 + j] == 1) {
                onehot_class = static_cast<int>(j);
                ++ones;
            }
        CHECK(ones == 1);
        CHECK(onehot_class == argmax_row(z, q));
    }
}

} // TEST_SUITE

TEST_SUITE("secure_nn_privacy") {

TEST_CASE("a party's received transcript is uniform across fresh-randomness runs") {
    // Every opening in the protected forward pass (beaver maskings and the
    // comparison maskings, whose same opening rescales) is masked by
    // full-ring uniform randomness, so one party's received bytes must pass
    // the uniformity check regardless of the fixed input.
    auto m = build_custom_model({6, 4, 3});
    init_weights(m, 71);
    RealTensor x({1, 6}, {0.9, -0.4, 0.25, 0.1, -0.8, 0.5});
    auto xe = encode(x, kF);

    std::vector<std::uint8_t> received_by_party1;
    for (int run = 0; run < 120; ++run) {
        Rng rng(5000 + static_cast<std::uint64_t>(run));
        auto pm = provision(m, 3, rng, RingParams{});
        NetworkPreset loopback("loopback", 3, LinkProfile{0.0, 1e12});
        Transport transport(loopback);
        transport.set_observer([&](std::uint64_t, int from, const Bytes& payload) {
            if (from != 1) // party 1's view: everything the others sent
                received_by_party1.insert(received_by_party1.end(), payload.begin(),
                                          payload.end());
        });
        TrustedDealer dealer(6000 + static_cast<std::uint64_t>(run), 3);
        run_parties(3, transport, [&](int p) {
            PartyContext ctx{p, 3, RingParams{}, &transport, &dealer};
            Rng srng(7000 + static_cast<std::uint64_t>(run));
            auto sx = share(xe, 3, srng, kF)[static_cast<std::size_t>(p)];
            secure_forward(ctx, pm.views[static_cast<std::size_t>(p)], sx);
        });
    }
    CHECK(received_by_party1.size() > 100000);
    CHECK(test::chi2_bytes(received_by_party1) < test::kChi2Crit255);
}

} // TEST_SUITE
