#include "fedinfer/mpc.hpp"

namespace fedinfer {

namespace {

void check_ctx(const PartyContext& ctx) {
    require(ctx.transport != nullptr && ctx.dealer != nullptr, Err::transport_failure,
            "party context missing transport or dealer");
    require(ctx.parties == ctx.transport->party_count(), Err::transport_failure,
            "party count mismatch between context and transport");
}

} // namespace

std::vector<RingTensor> open_many(PartyContext& ctx, const std::vector<RingTensor>& local) {
    check_ctx(ctx);
    Bytes payload;
    for (const auto& t : local) {
        auto chunk = serialize_ring(t);
        payload.insert(payload.end(), chunk.begin(), chunk.end());
    }
    auto delivered = ctx.transport->exchange(ctx.party, std::move(payload));

    std::vector<RingTensor> sums;
    sums.reserve(local.size());
    for (const auto& t : local) sums.push_back(RingTensor(t.shape));
    for (int k = 0; k < ctx.parties; ++k) {
        const auto& buf = delivered[static_cast<std::size_t>(k)];
        std::size_t off = 0;
        for (std::size_t i = 0; i < local.size(); ++i) {
            const std::size_t bytes = local[i].numel() * 8;
            require(off + bytes <= buf.size(), Err::transport_failure,
                    "short payload in opening");
            RingTensor part = deserialize_ring(buf.data() + off, bytes, local[i].shape);
            sums[i] = ring_add(sums[i], part);
            off += bytes;
        }
    }
    return sums;
}

RingTensor open_shares(PartyContext& ctx, const ShareTensor& x) {
    return open_many(ctx, {x.payload})[0];
}

ShareTensor beaver_matmul(PartyContext& ctx, const ShareTensor& x, const ShareTensor& w,
                          const BeaverTripleShare& triple) {
    check_ctx(ctx);
    require(x.shape().size() == 2 && w.shape().size() == 2 && x.shape()[1] == w.shape()[0],
            Err::shape_mismatch, "matmul operand shape mismatch");
    require(triple.a.shape() == x.shape() && triple.b.shape() == w.shape(),
            Err::triple_shape_mismatch, "beaver triple does not match operands");

    // One round: open d = x - a and e = w - b together.
    auto opened = open_many(ctx, {ring_sub(x.payload, triple.a.payload),
                                  ring_sub(w.payload, triple.b.payload)});
    const RingTensor& d = opened[0];
    const RingTensor& e = opened[1];

    // z_k = c_k + d @ b_k + a_k @ e (+ d @ e at party 0).
    RingTensor z = ring_add(triple.c.payload, ring_matmul(d, triple.b.payload));
    z = ring_add(z, ring_matmul(triple.a.payload, e));
    if (ctx.party == 0) z = ring_add(z, ring_matmul(d, e));

    GroupId gid = combine_group_ids(combine_group_ids(x.group_id, w.group_id),
                                    triple.c.group_id);
    return ShareTensor{ctx.party, ctx.parties, gid, std::move(z),
                       x.frac_scale + w.frac_scale};
}

ShareTensor beaver_matmul(PartyContext& ctx, const ShareTensor& x, const ShareTensor& w) {
    check_ctx(ctx);
    require(x.shape().size() == 2 && w.shape().size() == 2, Err::shape_mismatch,
            "matmul operands must be matrices");
    auto triple =
        ctx.dealer->matmul_triple(ctx.party, x.shape()[0], x.shape()[1], w.shape()[1]);
    return beaver_matmul(ctx, x, w, triple);
}

ShareTensor beaver_mul_elem(PartyContext& ctx, const ShareTensor& x, const ShareTensor& y,
                            const BeaverTripleShare& triple) {
    check_ctx(ctx);
    require(x.shape() == y.shape(), Err::shape_mismatch, "elementwise operand shape mismatch");
    require(triple.a.shape() == x.shape() && triple.b.shape() == y.shape(),
            Err::triple_shape_mismatch, "beaver triple does not match operands");

    auto opened = open_many(ctx, {ring_sub(x.payload, triple.a.payload),
                                  ring_sub(y.payload, triple.b.payload)});
    const RingTensor& d = opened[0];
    const RingTensor& e = opened[1];

    RingTensor z = ring_add(triple.c.payload, ring_mul_elem(d, triple.b.payload));
    z = ring_add(z, ring_mul_elem(triple.a.payload, e));
    if (ctx.party == 0) z = ring_add(z, ring_mul_elem(d, e));

    GroupId gid = combine_group_ids(combine_group_ids(x.group_id, y.group_id),
                                    triple.c.group_id);
    return ShareTensor{ctx.party, ctx.parties, gid, std::move(z),
                       x.frac_scale + y.frac_scale};
}

ShareTensor beaver_mul_elem(PartyContext& ctx, const ShareTensor& x, const ShareTensor& y) {
    check_ctx(ctx);
    auto triple = ctx.dealer->elem_triple(ctx.party, x.shape());
    return beaver_mul_elem(ctx, x, y, triple);
}

namespace {

// share of (public_bit ? a : b) where both a, b are share payload arrays.
RingTensor select_by_public_bit(const RingTensor& c, int bit_pos, const RingTensor& a,
                                const RingTensor& b) {
    RingTensor out(a.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = ((c.data[i] >> bit_pos) & 1u) ? a.data[i] : b.data[i];
    return out;
}

} // namespace

CompareOutput secure_compare_ge_zero(PartyContext& ctx, const ShareTensor& x,
                                     const CompareBundleShare& rnd) {
    check_ctx(ctx);
    const int ell = rnd.ell;
    require(static_cast<int>(rnd.r_bits.size()) == ell && ell >= 2, Err::insufficient_randomness,
            "compare bundle lacks bit decomposition randomness");
    require(rnd.r.shape() == x.shape(), Err::insufficient_randomness,
            "compare bundle shape mismatch");

    // Round 1: open c = x + r. r is uniform over the full ring, so c leaks
    // nothing. The signed value is x = c - r (mod 2^64); its sign bit and the
    // subtraction wrap are recovered from a borrow scan over the top ell bits.
    RingTensor c = open_many(ctx, {ring_add(x.payload, rnd.r.payload)})[0];

    const int lo = 64 - ell;
    const std::size_t n = x.numel();

    // Borrow into the lowest scanned bit is taken as zero (exact when ell=64).
    // B_{lo+1} = (1 - c_lo) * r_lo, affine in the shared bit.
    RingTensor borrow(x.shape()); // shares of borrow into current bit
    {
        const RingTensor& r0 = rnd.r_bits[0].payload;
        RingTensor zero(x.shape());
        borrow = select_by_public_bit(c, lo, zero, r0);
    }

    ShareTensor prod_msb, borrow_msb; // r_63*B_63 and B_63, kept for the MSB combine
    auto as_share = [&](RingTensor t) {
        return ShareTensor{ctx.party, ctx.parties, rnd.r.group_id, std::move(t), 0};
    };

    for (int pos = lo + 1; pos <= 63; ++pos) {
        const ShareTensor& rbit = rnd.r_bits[static_cast<std::size_t>(pos - lo)];
        ShareTensor bshare = as_share(borrow);
        ShareTensor prod = beaver_mul_elem(ctx, rbit, bshare); // one round per bit
        if (pos == 63) {
            prod_msb = prod;
            borrow_msb = bshare;
            break;
        }
        // borrow_out = c ? r*b : r + b - r*b  (c public per element)
        RingTensor or_path = ring_sub(ring_add(rbit.payload, borrow), prod.payload);
        borrow = select_by_public_bit(c, pos, prod.payload, or_path);
    }

    // msb(x) = c_63 xor r_63 xor B_63. With t = c_63 xor r_63 (affine) this is
    // t + B - 2 t*B, and t*B = c_63*B + (1-2c_63)*(r_63*B) reuses the last product.
    const ShareTensor& r63 = rnd.r_bits[static_cast<std::size_t>(ell - 1)];
    RingTensor msb(x.shape()), wrap(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const u64 c63 = (c.data[i] >> 63) & 1u;
        const u64 rb = r63.payload.data[i];
        const u64 bb = borrow_msb.payload.data[i];
        const u64 pp = prod_msb.payload.data[i];
        // t share: party 0 adds the public bit.
        u64 t = (c63 ? (~rb + 1) : rb); // (1-2c)*r
        if (ctx.party == 0) t += c63;
        const u64 tb = c63 * bb + (c63 ? (~pp + 1) : pp); // c*B + (1-2c)*(rB)
        msb.data[i] = t + bb - 2 * tb;
        // wrap w = borrow out of bit 63 = c ? rB : r + B - rB
        wrap.data[i] = c63 ? pp : (rb + bb - pp);
    }

    CompareOutput out;
    {
        RingTensor ge = ring_neg(msb);
        if (ctx.party == 0) ge = ring_add_scalar(ge, 1);
        out.ge = ShareTensor{ctx.party, ctx.parties,
                             combine_group_ids(x.group_id, rnd.r.group_id), std::move(ge), 0};
    }

    if (rnd.trunc_shift > 0) {
        // floor(x_u / 2^s) = floor(c/2^s) - floor(r/2^s) + w*2^(64-s) (+-1),
        // and the signed rescale subtracts msb * 2^(64-s).
        const int s = rnd.trunc_shift;
        const u64 hi = u64{1} << (64 - s);
        RingTensor tr(x.shape());
        for (std::size_t i = 0; i < n; ++i) {
            u64 v = hi * (wrap.data[i] - msb.data[i]) - rnd.r_trunc.payload.data[i];
            if (ctx.party == 0) v += c.data[i] >> s;
            tr.data[i] = v;
        }
        out.trunc = ShareTensor{ctx.party, ctx.parties,
                                combine_group_ids(x.group_id, rnd.r.group_id), std::move(tr),
                                x.frac_scale - s};
        out.has_trunc = true;
    }
    return out;
}

ShareTensor secure_ge_zero(PartyContext& ctx, const ShareTensor& x) {
    check_ctx(ctx);
    auto rnd = ctx.dealer->compare_bundle(ctx.party, x.shape(), ctx.params.compare_bits, 0);
    return secure_compare_ge_zero(ctx, x, rnd).ge;
}

ShareTensor rescale_shares(PartyContext& ctx, const ShareTensor& x, int shift,
                           int magnitude_bits, const RescalePairShare& pair) {
    check_ctx(ctx);
    require(pair.shift == shift && pair.magnitude_bits == magnitude_bits &&
                pair.t.shape() == x.shape(),
            Err::insufficient_randomness, "rescale pair does not match operand");

    RingTensor c = open_many(ctx, {ring_add(x.payload, pair.t.payload)})[0];
    RingTensor outp = ring_neg(pair.t_trunc.payload);
    if (ctx.party == 0) {
        for (std::size_t i = 0; i < outp.data.size(); ++i) outp.data[i] += c.data[i] >> shift;
    }
    return ShareTensor{ctx.party, ctx.parties, combine_group_ids(x.group_id, pair.t.group_id),
                       std::move(outp), x.frac_scale - shift};
}

ShareTensor rescale_shares(PartyContext& ctx, const ShareTensor& x, int shift,
                           int magnitude_bits) {
    check_ctx(ctx);
    auto pair = ctx.dealer->rescale_pair(ctx.party, x.shape(), shift, magnitude_bits);
    return rescale_shares(ctx, x, shift, magnitude_bits, pair);
}

} // namespace fedinfer
