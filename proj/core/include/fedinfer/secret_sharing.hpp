#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include "fedinfer/fixedpoint.hpp"

namespace fedinfer {

using Rng = std::mt19937_64;
using GroupId = std::array<std::uint8_t, 16>;

GroupId random_group_id(Rng& rng);
GroupId combine_group_ids(const GroupId& a, const GroupId& b);

// One party's additive share of a secret RingTensor.
//
// The K payloads of one group sum to the secret mod 2^64; any strict subset
// is uniformly distributed. frac_scale tracks the fixed-point precision of
// the underlying secret (share arithmetic never rescales implicitly).
struct ShareTensor {
    int party_id = 0;
    int parties = 0;
    GroupId group_id{};
    RingTensor payload;
    int frac_scale = 0;

    std::size_t numel() const { return payload.numel(); }
    const Shape& shape() const { return payload.shape; }
};

// Split a secret into K additive shares; the first K-1 payloads are drawn
// uniformly at random. Throws InvalidPartyCount for K < 2.
std::vector<ShareTensor> share(const RingTensor& secret, int parties, Rng& rng,
                               int frac_scale = 0);

// Modular sum of all K payloads. Throws MissingShare unless every party's
// share of the group is present exactly once with matching shapes.
RingTensor reconstruct(const std::vector<ShareTensor>& shares);

// Local share arithmetic: zero communication, reconstruct distributes over it.
ShareTensor add_shares(const ShareTensor& x, const ShareTensor& y);
ShareTensor sub_shares(const ShareTensor& x, const ShareTensor& y);

// Multiply by a public ring tensor / scalar (element-wise). The public value
// carries its own fixed-point scale, which adds to the share's scale.
ShareTensor scale_public(const ShareTensor& x, const RingTensor& c, int c_scale = 0);
ShareTensor scale_public_scalar(const ShareTensor& x, u64 c, int c_scale = 0);

// Add a public ring tensor: party 0 absorbs the constant.
ShareTensor add_public(const ShareTensor& x, const RingTensor& c);
ShareTensor add_public_scalar(const ShareTensor& x, u64 c);
ShareTensor neg_share(const ShareTensor& x);

// Wire format: header {group_id: 16 bytes, party_id: u16, rank: u16,
// shape dims as u32 each}, then payload as little-endian 64-bit words.
void write_share(std::ostream& os, const ShareTensor& s);
ShareTensor read_share(std::istream& is, int parties, int frac_scale = 0);

std::vector<std::uint8_t> serialize_ring(const RingTensor& t);
RingTensor deserialize_ring(const std::uint8_t* data, std::size_t size, const Shape& shape);

} // namespace fedinfer
