#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

#include "fedinfer/dealer.hpp"
#include "fedinfer/secret_sharing.hpp"
#include "fedinfer/transport.hpp"

namespace fedinfer {

// Everything one logical party needs to take part in a protocol.
struct PartyContext {
    int party = 0;
    int parties = 0;
    RingParams params;
    Transport* transport = nullptr;
    TrustedDealer* dealer = nullptr;
};

// Open one or more shared tensors in a single communication round.
std::vector<RingTensor> open_many(PartyContext& ctx, const std::vector<RingTensor>& local);
RingTensor open_shares(PartyContext& ctx, const ShareTensor& x);

// Secure matrix product via a Beaver triple: exactly one communication round
// (the masked openings of x-a and w-b travel together). The result carries
// scale x.frac_scale + w.frac_scale; rescaling is the caller's concern.
ShareTensor beaver_matmul(PartyContext& ctx, const ShareTensor& x, const ShareTensor& w,
                          const BeaverTripleShare& triple);
ShareTensor beaver_matmul(PartyContext& ctx, const ShareTensor& x, const ShareTensor& w);

// Element-wise secure product, same contract as beaver_matmul.
ShareTensor beaver_mul_elem(PartyContext& ctx, const ShareTensor& x, const ShareTensor& y,
                            const BeaverTripleShare& triple);
ShareTensor beaver_mul_elem(PartyContext& ctx, const ShareTensor& x, const ShareTensor& y);

// Sign test on shared fixed-point values via one masked opening followed by a
// shared borrow scan over the top `ell` bits of the mask: consumes exactly
// `ell` rounds. ge reconstructs to 1 where the signed value is >= 0, else 0
// (exact for ell = 64; error probability ~2^-ell otherwise).
//
// When the bundle carries truncation randomness (trunc_shift > 0), the same
// opening also yields shares of the operand rescaled down by trunc_shift at
// no extra rounds (+-1 ulp).
struct CompareOutput {
    ShareTensor ge;    // {0,1} ring integers, scale 0
    ShareTensor trunc; // filled iff the bundle had trunc_shift > 0
    bool has_trunc = false;
};
CompareOutput secure_compare_ge_zero(PartyContext& ctx, const ShareTensor& x,
                                     const CompareBundleShare& rnd);
// Convenience: fetches a compare bundle (ell from ctx.params) from the dealer.
ShareTensor secure_ge_zero(PartyContext& ctx, const ShareTensor& x);

// Drop `shift` fractional bits from a shared value whose magnitude is known
// to fit in magnitude_bits. One communication round; the masked opening is
// only statistically hiding (mask is 63 bits wide), +-1 ulp error.
ShareTensor rescale_shares(PartyContext& ctx, const ShareTensor& x, int shift,
                           int magnitude_bits, const RescalePairShare& pair);
ShareTensor rescale_shares(PartyContext& ctx, const ShareTensor& x, int shift,
                           int magnitude_bits);

// Run K party bodies on their own threads in lockstep over `transport`.
// A body that throws aborts the transport so peers unblock; PartyAbort is
// reported via the return value, any other exception is rethrown.
template <class Fn>
bool run_parties(int parties, Transport& transport, Fn&& fn) {
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(parties));
    std::atomic<bool> aborted{false};
    threads.reserve(static_cast<std::size_t>(parties));
    for (int p = 0; p < parties; ++p) {
        threads.emplace_back([&, p] {
            try {
                fn(p);
            } catch (const Error& e) {
                if (e.code() == Err::party_abort) {
                    aborted.store(true);
                } else {
                    errors[static_cast<std::size_t>(p)] = std::current_exception();
                    transport.abort(p);
                }
            } catch (...) {
                errors[static_cast<std::size_t>(p)] = std::current_exception();
                transport.abort(p);
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return aborted.load() || transport.aborted();
}

} // namespace fedinfer
