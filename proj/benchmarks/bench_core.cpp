#include <benchmark/benchmark.h>

#include <random>

#include "fedinfer/escrow.hpp"
#include "fedinfer/mpc.hpp"
#include "fedinfer/nn.hpp"
#include "fedinfer/secure_nn.hpp"

using namespace fedinfer;

namespace {

constexpr int kF = 16;

RealTensor random_real(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    RealTensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.data) v = dist(rng);
    return t;
}

void BM_EncodeDecode(benchmark::State& state) {
    auto x = random_real({static_cast<std::size_t>(state.range(0))}, 1);
    for (auto _ : state) {
        auto enc = encode(x, kF);
        auto dec = decode(enc, kF);
        benchmark::DoNotOptimize(dec.data.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncodeDecode)->Arg(1 << 10)->Arg(1 << 16);

void BM_ShareReconstruct(benchmark::State& state) {
    const int parties = static_cast<int>(state.range(0));
    auto secret = encode(random_real({4096}, 2), kF);
    Rng rng(3);
    for (auto _ : state) {
        auto shares = share(secret, parties, rng);
        auto back = reconstruct(shares);
        benchmark::DoNotOptimize(back.data.data());
    }
    state.SetItemsProcessed(state.iterations() * 4096);
}
BENCHMARK(BM_ShareReconstruct)->Arg(2)->Arg(5);

void BM_RingMatmul(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    auto a = encode(random_real({n, n}, 4), kF);
    auto b = encode(random_real({n, n}, 5), kF);
    for (auto _ : state) {
        auto c = ring_matmul(a, b);
        benchmark::DoNotOptimize(c.data.data());
    }
}
BENCHMARK(BM_RingMatmul)->Arg(64)->Arg(256);

void BM_BeaverMatmul3P(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    auto xe = encode(random_real({n, n}, 6), kF);
    auto we = encode(random_real({n, n}, 7), kF);
    for (auto _ : state) {
        NetworkPreset loopback("loopback", 3, LinkProfile{0.0, 1e12});
        Transport transport(loopback);
        TrustedDealer dealer(8, 3);
        std::vector<ShareTensor> outs(3);
        run_parties(3, transport, [&](int p) {
            PartyContext ctx{p, 3, RingParams{}, &transport, &dealer};
            Rng rng(9);
            auto sx = share(xe, 3, rng, kF)[static_cast<std::size_t>(p)];
            auto sw = share(we, 3, rng, kF)[static_cast<std::size_t>(p)];
            outs[static_cast<std::size_t>(p)] = beaver_matmul(ctx, sx, sw);
        });
        benchmark::DoNotOptimize(outs.data());
    }
}
BENCHMARK(BM_BeaverMatmul3P)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_SecureCompare3P(benchmark::State& state) {
    auto xe = encode(random_real({static_cast<std::size_t>(state.range(0))}, 10, -50, 50), kF);
    for (auto _ : state) {
        NetworkPreset loopback("loopback", 3, LinkProfile{0.0, 1e12});
        Transport transport(loopback);
        TrustedDealer dealer(11, 3);
        std::vector<ShareTensor> outs(3);
        run_parties(3, transport, [&](int p) {
            PartyContext ctx{p, 3, RingParams{}, &transport, &dealer};
            Rng rng(12);
            auto sx = share(xe, 3, rng, kF)[static_cast<std::size_t>(p)];
            outs[static_cast<std::size_t>(p)] = secure_ge_zero(ctx, sx);
        });
        benchmark::DoNotOptimize(outs.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SecureCompare3P)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_PlainForwardSmallMLP(benchmark::State& state) {
    auto m = build_model("small_mlp");
    init_weights(m, 13);
    auto x = random_real({8, 3072}, 14);
    for (auto _ : state) {
        auto y = forward(m, x);
        benchmark::DoNotOptimize(y.data.data());
    }
}
BENCHMARK(BM_PlainForwardSmallMLP)->Unit(benchmark::kMillisecond);

void BM_EscrowSettlement(benchmark::State& state) {
    KeyRegistry keys;
    std::vector<PartyAccount> roster;
    for (int k = 0; k < 3; ++k) {
        const AccountId id = "party_" + std::to_string(k);
        keys.register_account(id, 20 + static_cast<std::uint64_t>(k));
        roster.push_back(PartyAccount{id, keys.get(id).pk});
    }
    int j = 0;
    EscrowLedger ledger;
    ledger.fund("client", 1u << 30);
    for (auto _ : state) {
        const std::string job = "job-" + std::to_string(j++);
        ledger.create_job(job, "client", roster, 9);
        CompletionProof proof;
        for (const auto& acc : roster)
            proof.signatures.push_back(keys.sign_completion(acc.id, job, "client"));
        ledger.complete_job(job, "client", proof);
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EscrowSettlement);

} // namespace

BENCHMARK_MAIN();
