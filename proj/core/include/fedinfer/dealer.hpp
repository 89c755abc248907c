#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "fedinfer/secret_sharing.hpp"

namespace fedinfer {

// Matrix-multiplication triple: reconstruct(c) = reconstruct(a) @ reconstruct(b).
struct BeaverTripleShare {
    ShareTensor a, b, c;
};

// Randomness bundle for one masked-opening comparison over the top `ell` bits:
// a uniform mask r, shares of its top bits, and (optionally) shares of
// floor(r / 2^trunc_shift) so the same opening can also rescale the operand.
struct CompareBundleShare {
    ShareTensor r;
    std::vector<ShareTensor> r_bits; // bit positions 64-ell .. 63, low to high
    ShareTensor r_trunc;
    int ell = 0;
    int trunc_shift = 0;
};

// Statistical rescale pair: mask t = 2^(magnitude_bits+1) + uniform 63-bit r,
// plus shares of floor(t / 2^shift).
struct RescalePairShare {
    ShareTensor t;
    ShareTensor t_trunc;
    int shift = 0;
    int magnitude_bits = 0;
};

// Trusted dealer for the semi-honest preprocessing model.
//
// All correlated randomness is derived from one seeded generator. Parties
// must request bundles in lockstep: the i-th request of every party must
// name the same kind and parameters. A bundle is generated once, handed to
// each party exactly once, and then discarded — triples are never reused.
class TrustedDealer {
  public:
    TrustedDealer(std::uint64_t seed, int parties);

    int parties() const { return parties_; }

    BeaverTripleShare matmul_triple(int party, std::size_t m, std::size_t n, std::size_t p);
    BeaverTripleShare elem_triple(int party, const Shape& shape);
    CompareBundleShare compare_bundle(int party, const Shape& shape, int ell, int trunc_shift = 0);
    RescalePairShare rescale_pair(int party, const Shape& shape, int shift, int magnitude_bits);

    std::uint64_t triples_issued() const;
    std::uint64_t bundles_issued() const;

  private:
    // Lockstep bookkeeping: returns this party's next request index and
    // verifies it is either cached under `tag` or next in generation order.
    std::uint64_t begin_request(int party);

    RingTensor uniform_tensor(const Shape& shape);
    std::vector<ShareTensor> deal_shares(const RingTensor& secret, int frac_scale = 0);

    int parties_;
    Rng rng_;
    mutable std::mutex mu_;
    std::vector<std::uint64_t> next_request_;
    std::uint64_t generated_ = 0;
    std::uint64_t triples_issued_ = 0;
    std::uint64_t bundles_issued_ = 0;

    template <class T>
    struct Slot {
        std::string tag;
        std::vector<T> per_party;
        int taken = 0;
    };
    std::map<std::uint64_t, Slot<BeaverTripleShare>> triple_slots_;
    std::map<std::uint64_t, Slot<CompareBundleShare>> compare_slots_;
    std::map<std::uint64_t, Slot<RescalePairShare>> rescale_slots_;

    template <class T, class Make>
    T take_slot(std::map<std::uint64_t, Slot<T>>& slots, int party, const std::string& tag,
                Make&& make);
};

} // namespace fedinfer
