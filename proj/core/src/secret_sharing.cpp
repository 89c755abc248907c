#include "fedinfer/secret_sharing.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

namespace fedinfer {

GroupId random_group_id(Rng& rng) {
    GroupId id{};
    for (std::size_t i = 0; i < id.size(); i += 8) {
        u64 w = rng();
        for (std::size_t b = 0; b < 8; ++b) id[i + b] = static_cast<std::uint8_t>(w >> (8 * b));
    }
    return id;
}

GroupId combine_group_ids(const GroupId& a, const GroupId& b) {
    GroupId out{};
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] ^ b[i];
    return out;
}

std::vector<ShareTensor> share(const RingTensor& secret, int parties, Rng& rng, int frac_scale) {
    require(parties >= 2, Err::invalid_party_count, "sharing requires at least two parties");
    const GroupId gid = random_group_id(rng);
    std::vector<ShareTensor> out(parties);
    RingTensor last = secret;
    for (int k = 0; k < parties - 1; ++k) {
        RingTensor r(secret.shape);
        for (auto& v : r.data) v = rng();
        last = ring_sub(last, r);
        out[k] = ShareTensor{k, parties, gid, std::move(r), frac_scale};
    }
    out[parties - 1] = ShareTensor{parties - 1, parties, gid, std::move(last), frac_scale};
    return out;
}

RingTensor reconstruct(const std::vector<ShareTensor>& shares) {
    require(!shares.empty(), Err::missing_share, "no shares supplied");
    const int parties = shares[0].parties;
    require(static_cast<int>(shares.size()) == parties, Err::missing_share,
            "expected " + std::to_string(parties) + " shares, got " +
                std::to_string(shares.size()));
    std::vector<bool> seen(parties, false);
    RingTensor sum(shares[0].shape());
    for (const auto& s : shares) {
        require(s.group_id == shares[0].group_id, Err::missing_share,
                "shares from different groups");
        require(s.party_id >= 0 && s.party_id < parties && !seen[s.party_id], Err::missing_share,
                "missing or duplicate party share");
        require(s.shape() == shares[0].shape(), Err::shape_mismatch, "share shape mismatch");
        seen[s.party_id] = true;
        sum = ring_add(sum, s.payload);
    }
    return sum;
}

static void check_pairwise(const ShareTensor& x, const ShareTensor& y) {
    require(x.shape() == y.shape(), Err::shape_mismatch, "share shape mismatch");
    require(x.party_id == y.party_id && x.parties == y.parties, Err::shape_mismatch,
            "share party mismatch");
    require(x.frac_scale == y.frac_scale, Err::shape_mismatch,
            "share fixed-point scale mismatch");
}

ShareTensor add_shares(const ShareTensor& x, const ShareTensor& y) {
    check_pairwise(x, y);
    return ShareTensor{x.party_id, x.parties, combine_group_ids(x.group_id, y.group_id),
                       ring_add(x.payload, y.payload), x.frac_scale};
}

ShareTensor sub_shares(const ShareTensor& x, const ShareTensor& y) {
    check_pairwise(x, y);
    return ShareTensor{x.party_id, x.parties, combine_group_ids(x.group_id, y.group_id),
                       ring_sub(x.payload, y.payload), x.frac_scale};
}

ShareTensor scale_public(const ShareTensor& x, const RingTensor& c, int c_scale) {
    require(x.shape() == c.shape, Err::shape_mismatch, "public factor shape mismatch");
    return ShareTensor{x.party_id, x.parties, x.group_id, ring_mul_elem(x.payload, c),
                       x.frac_scale + c_scale};
}

ShareTensor scale_public_scalar(const ShareTensor& x, u64 c, int c_scale) {
    return ShareTensor{x.party_id, x.parties, x.group_id, ring_scale(x.payload, c),
                       x.frac_scale + c_scale};
}

ShareTensor add_public(const ShareTensor& x, const RingTensor& c) {
    require(x.shape() == c.shape, Err::shape_mismatch, "public addend shape mismatch");
    ShareTensor out = x;
    if (x.party_id == 0) out.payload = ring_add(out.payload, c);
    return out;
}

ShareTensor add_public_scalar(const ShareTensor& x, u64 c) {
    ShareTensor out = x;
    if (x.party_id == 0) out.payload = ring_add_scalar(out.payload, c);
    return out;
}

ShareTensor neg_share(const ShareTensor& x) {
    return ShareTensor{x.party_id, x.parties, x.group_id, ring_neg(x.payload), x.frac_scale};
}

namespace {

void put_u16(std::ostream& os, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

void put_u64(std::ostream& os, u64 v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

std::uint16_t get_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

u64 get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    u64 v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<u64>(b[i]) << (8 * i);
    return v;
}

} // namespace

void write_share(std::ostream& os, const ShareTensor& s) {
    os.write(reinterpret_cast<const char*>(s.group_id.data()),
             static_cast<std::streamsize>(s.group_id.size()));
    put_u16(os, static_cast<std::uint16_t>(s.party_id));
    put_u16(os, static_cast<std::uint16_t>(s.shape().size()));
    for (auto d : s.shape()) put_u32(os, static_cast<std::uint32_t>(d));
    for (auto v : s.payload.data) put_u64(os, v);
}

ShareTensor read_share(std::istream& is, int parties, int frac_scale) {
    ShareTensor s;
    is.read(reinterpret_cast<char*>(s.group_id.data()),
            static_cast<std::streamsize>(s.group_id.size()));
    require(is.good(), Err::io_error, "truncated share record");
    s.party_id = get_u16(is);
    const std::uint16_t rank = get_u16(is);
    Shape shape(rank);
    for (auto& d : shape) d = get_u32(is);
    RingTensor payload(shape);
    for (auto& v : payload.data) v = get_u64(is);
    require(is.good(), Err::io_error, "truncated share payload");
    s.payload = std::move(payload);
    s.parties = parties;
    s.frac_scale = frac_scale;
    return s;
}

std::vector<std::uint8_t> serialize_ring(const RingTensor& t) {
    std::vector<std::uint8_t> out(t.data.size() * 8);
    for (std::size_t i = 0; i < t.data.size(); ++i)
        for (int b = 0; b < 8; ++b)
            out[i * 8 + b] = static_cast<std::uint8_t>(t.data[i] >> (8 * b));
    return out;
}

RingTensor deserialize_ring(const std::uint8_t* data, std::size_t size, const Shape& shape) {
    RingTensor t(shape);
    require(size == t.data.size() * 8, Err::transport_failure, "ring payload size mismatch");
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        u64 v = 0;
        for (int b = 0; b < 8; ++b) v |= static_cast<u64>(data[i * 8 + b]) << (8 * b);
        t.data[i] = v;
    }
    return t;
}

} // namespace fedinfer
