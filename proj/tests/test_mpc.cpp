#include <atomic>
#include <cmath>
#include <random>

#include "doctest.h"
#include "fedinfer/mpc.hpp"
#include "test_helpers.hpp"

using namespace fedinfer;
using fedinfer::test::run_mpc;

namespace {

constexpr int kF = 16;

// Shares a secret among ctx.parties deterministically for a test body.
std::vector<ShareTensor> make_shares(const RingTensor& secret, int parties,
                                     std::uint64_t seed, int scale) {
    Rng rng(seed);
    return share(secret, parties, rng, scale);
}

} // namespace

TEST_SUITE("mpc") {

TEST_CASE("beaver matmul: scalar product reconstructs to 12") {
    auto x = encode(RealTensor::matrix(1, 1, {3.0}), kF);
    auto w = encode(RealTensor::matrix(1, 1, {4.0}), kF);
    RoundLedger ledger;
    auto out = run_mpc(
        3, 42,
        [&](PartyContext& ctx) {
            auto sx = make_shares(x, ctx.parties, 1, kF)[static_cast<std::size_t>(ctx.party)];
            auto sw = make_shares(w, ctx.parties, 2, kF)[static_cast<std::size_t>(ctx.party)];
            return beaver_matmul(ctx, sx, sw);
        },
        &ledger);
    CHECK(decode(reconstruct(out), 2 * kF).data[0] == doctest::Approx(12.0).epsilon(1e-6));
    CHECK(ledger.rounds == 1);
}

TEST_CASE("beaver matmul: identity times vector") {
    RealTensor eye({4, 4});
    for (int i = 0; i < 4; ++i) eye.at(static_cast<std::size_t>(i), static_cast<std::size_t>(i)) = 1.0;
    RealTensor v({4, 1}, {0.5, -1.25, 2.0, 3.5});
    auto xe = encode(eye, kF);
    auto ve = encode(v, kF);
    auto out = run_mpc(2, 7, [&](PartyContext& ctx) {
        auto sx = make_shares(xe, ctx.parties, 3, kF)[static_cast<std::size_t>(ctx.party)];
        auto sv = make_shares(ve, ctx.parties, 4, kF)[static_cast<std::size_t>(ctx.party)];
        return beaver_matmul(ctx, sx, sv);
    });
    auto got = decode(reconstruct(out), 2 * kF);
    for (int i = 0; i < 4; ++i)
        CHECK(got.data[static_cast<std::size_t>(i)] ==
              doctest::Approx(v.data[static_cast<std::size_t>(i)]).epsilon(1e-6));
}

TEST_CASE("beaver matmul: random matrices against the real oracle, ring-exact, 1 round") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (int trial = 0; trial < 25; ++trial) {
        const int parties = 2 + trial % 4;
        RealTensor a({4, 8}), b({8, 2});
        for (auto& v : a.data) v = dist(rng);
        for (auto& v : b.data) v = dist(rng);
        auto ae = encode(a, kF);
        auto be = encode(b, kF);

        RoundLedger ledger;
        auto out = run_mpc(
            parties, 1000 + static_cast<std::uint64_t>(trial),
            [&](PartyContext& ctx) {
                auto sa = make_shares(ae, ctx.parties, 10 + static_cast<std::uint64_t>(trial),
                                      kF)[static_cast<std::size_t>(ctx.party)];
                auto sb = make_shares(be, ctx.parties, 20 + static_cast<std::uint64_t>(trial),
                                      kF)[static_cast<std::size_t>(ctx.party)];
                return beaver_matmul(ctx, sa, sb);
            },
            &ledger);
        CHECK(ledger.rounds == 1);
        // exact in the ring before any decoding
        auto ring_result = reconstruct(out);
        CHECK(ring_result.data == ring_matmul(ae, be).data);
        // decoded against the real matmul oracle
        auto got = decode(ring_result, 2 * kF);
        auto want = real_matmul(a, b);
        const double tol = 8.0 * std::ldexp(1.0, -kF + 1);
        for (std::size_t i = 0; i < got.numel(); ++i)
            CHECK(std::abs(got.data[i] - want.data[i]) <= tol);
    }
}

TEST_CASE("beaver matmul: bytes per party equal the two masked operands") {
    auto x = encode(RealTensor({3, 5}), kF);
    auto w = encode(RealTensor({5, 2}), kF);
    RoundLedger ledger;
    run_mpc(
        3, 5,
        [&](PartyContext& ctx) {
            auto sx = make_shares(x, ctx.parties, 1, kF)[static_cast<std::size_t>(ctx.party)];
            auto sw = make_shares(w, ctx.parties, 2, kF)[static_cast<std::size_t>(ctx.party)];
            return beaver_matmul(ctx, sx, sw);
        },
        &ledger);
    const std::uint64_t words = 3 * 5 + 5 * 2;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j) CHECK(ledger.bytes_sent[static_cast<std::size_t>(i)]
                                               [static_cast<std::size_t>(j)] == words * 8);
}

TEST_CASE("beaver matmul rejects a mismatched triple") {
    auto x = encode(RealTensor({2, 2}), kF);
    auto w = encode(RealTensor({2, 2}), kF);
    std::atomic<bool> threw{false};
    CHECK_THROWS_AS(
        run_mpc(2, 6,
                [&](PartyContext& ctx) -> ShareTensor {
                    auto sx =
                        make_shares(x, ctx.parties, 1, kF)[static_cast<std::size_t>(ctx.party)];
                    auto sw =
                        make_shares(w, ctx.parties, 2, kF)[static_cast<std::size_t>(ctx.party)];
                    auto triple = ctx.dealer->matmul_triple(ctx.party, 3, 3, 3);
                    try {
                        return beaver_matmul(ctx, sx, sw, triple);
                    } catch (const Error& e) {
                        if (e.code() == Err::triple_shape_mismatch) threw = true;
                        throw;
                    }
                }),
        Error);
    CHECK(threw.load());
}

TEST_CASE("share addition consumes zero rounds") {
    auto x = encode(RealTensor::vector({1.0, 2.0}), kF);
    RoundLedger ledger;
    run_mpc(
        2, 8,
        [&](PartyContext& ctx) {
            auto sx = make_shares(x, ctx.parties, 1, kF)[static_cast<std::size_t>(ctx.party)];
            auto sum = add_shares(sx, sx);
            return scale_public_scalar(sum, 3, 0);
        },
        &ledger);
    CHECK(ledger.rounds == 0);
    CHECK(ledger.bytes_total() == 0);
}

TEST_CASE("secure compare: boundary and sign cases") {
    auto run_compare = [&](double value) {
        auto x = encode(RealTensor::scalar(value), kF);
        auto out = run_mpc(3, 77, [&](PartyContext& ctx) {
            auto sx = make_shares(x, ctx.parties, 9, kF)[static_cast<std::size_t>(ctx.party)];
            return secure_ge_zero(ctx, sx);
        });
        return reconstruct(out).data[0];
    };
    CHECK(run_compare(0.0) == 1);
    CHECK(run_compare(-1.0) == 0);
    CHECK(run_compare(1.0) == 1);
    CHECK(run_compare(-1.0 / 65536.0) == 0);
}

TEST_CASE("secure compare equals the plaintext sign test on random values") {
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> dist(-100.0, 100.0);
    RealTensor vals({1000});
    for (auto& v : vals.data) v = dist(rng);
    auto x = encode(vals, kF);
    auto out = run_mpc(3, 5150, [&](PartyContext& ctx) {
        auto sx = make_shares(x, ctx.parties, 31, kF)[static_cast<std::size_t>(ctx.party)];
        return secure_ge_zero(ctx, sx);
    });
    auto got = reconstruct(out);
    for (std::size_t i = 0; i < vals.numel(); ++i)
        CHECK(got.data[i] == (vals.data[i] >= 0.0 ? 1 : 0));
}

TEST_CASE("secure compare consumes exactly ell rounds") {
    std::vector<double> ells, rounds;
    for (int ell : {16, 32, 64}) {
        auto x = encode(RealTensor::vector({1.0, -2.0, 3.0}), kF);
        RoundLedger ledger;
        run_mpc(
            2, 60 + static_cast<std::uint64_t>(ell),
            [&](PartyContext& ctx) {
                auto sx =
                    make_shares(x, ctx.parties, 1, kF)[static_cast<std::size_t>(ctx.party)];
                auto rnd = ctx.dealer->compare_bundle(ctx.party, sx.shape(), ell, 0);
                return secure_compare_ge_zero(ctx, sx, rnd).ge;
            },
            &ledger);
        CHECK(ledger.rounds == static_cast<std::uint64_t>(ell));
        ells.push_back(ell);
        rounds.push_back(static_cast<double>(ledger.rounds));
    }
    // exactly linear: unit slope, R^2 = 1
    CHECK(test::linear_fit_r2(ells, rounds) >= 0.99);
    CHECK((rounds[2] - rounds[1]) / 32.0 == doctest::Approx((rounds[1] - rounds[0]) / 16.0));
}

TEST_CASE("fused truncation rescales during the comparison") {
    std::mt19937_64 rng(321);
    std::uniform_real_distribution<double> dist(-50.0, 50.0);
    RealTensor vals({256});
    for (auto& v : vals.data) v = dist(rng);
    auto x2f = encode(vals, 2 * kF); // value at precision 2f

    auto outs = run_mpc(3, 999, [&](PartyContext& ctx) {
        auto sx = make_shares(x2f, ctx.parties, 17, 2 * kF)[static_cast<std::size_t>(ctx.party)];
        auto rnd = ctx.dealer->compare_bundle(ctx.party, sx.shape(), 64, kF);
        auto res = secure_compare_ge_zero(ctx, sx, rnd);
        REQUIRE(res.has_trunc);
        // pack ge and trunc side by side for reconstruction
        RingTensor both({2, vals.numel()});
        std::copy(res.ge.payload.data.begin(), res.ge.payload.data.end(), both.data.begin());
        std::copy(res.trunc.payload.data.begin(), res.trunc.payload.data.end(),
                  both.data.begin() + static_cast<std::ptrdiff_t>(vals.numel()));
        return ShareTensor{ctx.party, ctx.parties, res.ge.group_id, std::move(both), 0};
    });
    auto got = reconstruct(outs);
    for (std::size_t i = 0; i < vals.numel(); ++i) {
        CHECK(got.data[i] == (vals.data[i] >= 0.0 ? 1 : 0));
        const double tr = decode_scalar(got.data[vals.numel() + i], kF);
        CHECK(std::abs(tr - vals.data[i]) <= 2.0 * std::ldexp(1.0, -kF));
    }
}

TEST_CASE("statistical rescale drops precision within one ulp") {
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> dist(-30.0, 30.0);
    RealTensor vals({128});
    for (auto& v : vals.data) v = dist(rng);
    auto x = encode(vals, 2 * kF);
    RoundLedger ledger;
    auto outs = run_mpc(
        4, 31337,
        [&](PartyContext& ctx) {
            auto sx =
                make_shares(x, ctx.parties, 3, 2 * kF)[static_cast<std::size_t>(ctx.party)];
            return rescale_shares(ctx, sx, kF, 40);
        },
        &ledger);
    CHECK(ledger.rounds == 1);
    auto got = decode(reconstruct(outs), kF);
    for (std::size_t i = 0; i < vals.numel(); ++i)
        CHECK(std::abs(got.data[i] - vals.data[i]) <= 2.0 * std::ldexp(1.0, -kF));
}

TEST_CASE("dealer never reuses bundles and stays deterministic under seed") {
    auto issue = [&](std::uint64_t seed) {
        TrustedDealer dealer(seed, 2);
        auto t0 = dealer.matmul_triple(0, 2, 2, 2);
        auto t1 = dealer.matmul_triple(1, 2, 2, 2);
        auto u0 = dealer.matmul_triple(0, 2, 2, 2);
        auto u1 = dealer.matmul_triple(1, 2, 2, 2);
        CHECK(t0.a.payload.data != u0.a.payload.data); // fresh randomness each time
        return std::make_pair(ring_add(t0.a.payload, t1.a.payload),
                              ring_add(u0.a.payload, u1.a.payload));
    };
    auto [a1, b1] = issue(5);
    auto [a2, b2] = issue(5);
    CHECK(a1.data == a2.data);
    CHECK(b1.data == b2.data);
    auto [a3, b3] = issue(6);
    CHECK(a1.data != a3.data);
}

TEST_CASE("dealer flags lockstep divergence") {
    TrustedDealer dealer(1, 2);
    dealer.matmul_triple(0, 2, 2, 2);
    CHECK_THROWS_AS(dealer.matmul_triple(1, 3, 3, 3), Error);
}

TEST_CASE("masked openings look uniform across runs") {
    // transcript of one party: the opened values d = x - a over repeated runs
    std::vector<std::uint8_t> stream;
    for (int run = 0; run < 2000; ++run) {
        auto x = encode(RealTensor::matrix(1, 1, {1.5}), kF);
        auto outs = run_mpc(2, 10000 + static_cast<std::uint64_t>(run),
                            [&](PartyContext& ctx) {
                                auto sx = make_shares(x, ctx.parties,
                                                      20000 + static_cast<std::uint64_t>(run),
                                                      kF)[static_cast<std::size_t>(ctx.party)];
                                auto sw = make_shares(x, ctx.parties,
                                                      30000 + static_cast<std::uint64_t>(run),
                                                      kF)[static_cast<std::size_t>(ctx.party)];
                                auto triple = ctx.dealer->matmul_triple(ctx.party, 1, 1, 1);
                                RingTensor d = ring_sub(sx.payload, triple.a.payload);
                                auto opened = open_many(ctx, {d});
                                return ShareTensor{ctx.party, ctx.parties, sx.group_id,
                                                   opened[0], 0};
                            });
        const u64 v = outs[0].payload.data[0];
        for (int b = 0; b < 8; ++b) stream.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
    }
    CHECK(test::chi2_bytes(stream) < test::kChi2Crit255);
}

} // TEST_SUITE
