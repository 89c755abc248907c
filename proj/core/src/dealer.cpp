#include "fedinfer/dealer.hpp"

#include <sstream>

namespace fedinfer {

TrustedDealer::TrustedDealer(std::uint64_t seed, int parties)
    : parties_(parties), rng_(seed), next_request_(static_cast<std::size_t>(parties), 0) {
    require(parties >= 2, Err::invalid_party_count, "dealer requires at least two parties");
}

RingTensor TrustedDealer::uniform_tensor(const Shape& shape) {
    RingTensor t(shape);
    for (auto& v : t.data) v = rng_();
    return t;
}

std::vector<ShareTensor> TrustedDealer::deal_shares(const RingTensor& secret, int frac_scale) {
    return share(secret, parties_, rng_, frac_scale);
}

template <class T, class Make>
T TrustedDealer::take_slot(std::map<std::uint64_t, Slot<T>>& slots, int party,
                           const std::string& tag, Make&& make) {
    std::lock_guard<std::mutex> lk(mu_);
    require(party >= 0 && party < parties_, Err::invalid_party_count, "bad party id");
    const std::uint64_t idx = next_request_[party]++;
    auto it = slots.find(idx);
    if (it == slots.end()) {
        // Not cached: this must be the next bundle to generate. Anything else
        // means the parties diverged in their preprocessing request order.
        require(idx == generated_, Err::transport_failure,
                "dealer requests out of lockstep (request " + std::to_string(idx) + ", tag " +
                    tag + ")");
        Slot<T> slot;
        slot.tag = tag;
        slot.per_party = make();
        ++generated_;
        it = slots.emplace(idx, std::move(slot)).first;
    }
    require(it->second.tag == tag, Err::transport_failure,
            "dealer lockstep mismatch: expected " + it->second.tag + ", got " + tag);
    T out = it->second.per_party[static_cast<std::size_t>(party)];
    if (++it->second.taken == parties_) slots.erase(it);
    return out;
}

BeaverTripleShare TrustedDealer::matmul_triple(int party, std::size_t m, std::size_t n,
                                               std::size_t p) {
    std::ostringstream tag;
    tag << "matmul:" << m << "x" << n << "x" << p;
    return take_slot(triple_slots_, party, tag.str(), [&] {
        RingTensor a = uniform_tensor({m, n});
        RingTensor b = uniform_tensor({n, p});
        RingTensor c = ring_matmul(a, b);
        auto sa = deal_shares(a), sb = deal_shares(b), sc = deal_shares(c);
        std::vector<BeaverTripleShare> out(static_cast<std::size_t>(parties_));
        for (int k = 0; k < parties_; ++k)
            out[static_cast<std::size_t>(k)] = BeaverTripleShare{sa[k], sb[k], sc[k]};
        ++triples_issued_;
        return out;
    });
}

BeaverTripleShare TrustedDealer::elem_triple(int party, const Shape& shape) {
    std::ostringstream tag;
    tag << "elem:";
    for (auto d : shape) tag << d << ",";
    return take_slot(triple_slots_, party, tag.str(), [&] {
        RingTensor a = uniform_tensor(shape);
        RingTensor b = uniform_tensor(shape);
        RingTensor c = ring_mul_elem(a, b);
        auto sa = deal_shares(a), sb = deal_shares(b), sc = deal_shares(c);
        std::vector<BeaverTripleShare> out(static_cast<std::size_t>(parties_));
        for (int k = 0; k < parties_; ++k)
            out[static_cast<std::size_t>(k)] = BeaverTripleShare{sa[k], sb[k], sc[k]};
        ++triples_issued_;
        return out;
    });
}

CompareBundleShare TrustedDealer::compare_bundle(int party, const Shape& shape, int ell,
                                                 int trunc_shift) {
    require(ell >= 2 && ell <= 64, Err::insufficient_randomness,
            "comparison bit-length out of range");
    require(trunc_shift >= 0 && trunc_shift < 64, Err::bad_config, "bad trunc shift");
    std::ostringstream tag;
    tag << "cmp:" << ell << ":" << trunc_shift << ":";
    for (auto d : shape) tag << d << ",";
    return take_slot(compare_slots_, party, tag.str(), [&] {
        RingTensor r = uniform_tensor(shape);
        auto sr = deal_shares(r);

        std::vector<std::vector<ShareTensor>> bit_shares(static_cast<std::size_t>(ell));
        for (int j = 0; j < ell; ++j) {
            const int pos = 64 - ell + j;
            RingTensor bit(shape);
            for (std::size_t i = 0; i < r.data.size(); ++i)
                bit.data[i] = (r.data[i] >> pos) & 1u;
            bit_shares[static_cast<std::size_t>(j)] = deal_shares(bit);
        }

        std::vector<ShareTensor> trunc_shares;
        if (trunc_shift > 0) {
            RingTensor rt(shape);
            for (std::size_t i = 0; i < r.data.size(); ++i)
                rt.data[i] = r.data[i] >> trunc_shift; // unsigned floor
            trunc_shares = deal_shares(rt);
        }

        std::vector<CompareBundleShare> out(static_cast<std::size_t>(parties_));
        for (int k = 0; k < parties_; ++k) {
            auto& bundle = out[static_cast<std::size_t>(k)];
            bundle.r = sr[k];
            bundle.ell = ell;
            bundle.trunc_shift = trunc_shift;
            bundle.r_bits.reserve(static_cast<std::size_t>(ell));
            for (int j = 0; j < ell; ++j)
                bundle.r_bits.push_back(bit_shares[static_cast<std::size_t>(j)][k]);
            if (trunc_shift > 0) bundle.r_trunc = trunc_shares[static_cast<std::size_t>(k)];
        }
        ++bundles_issued_;
        return out;
    });
}

RescalePairShare TrustedDealer::rescale_pair(int party, const Shape& shape, int shift,
                                             int magnitude_bits) {
    require(shift >= 1 && shift < 64, Err::bad_config, "bad rescale shift");
    require(magnitude_bits >= 1 && magnitude_bits <= 60, Err::bad_config,
            "bad rescale magnitude bound");
    std::ostringstream tag;
    tag << "rescale:" << shift << ":" << magnitude_bits << ":";
    for (auto d : shape) tag << d << ",";
    return take_slot(rescale_slots_, party, tag.str(), [&] {
        // Mask t = offset + r with r uniform in [0, 2^63); the offset keeps
        // masked openings of bounded operands strictly positive integers.
        const u64 offset = u64{1} << (magnitude_bits + 1);
        RingTensor t(shape), tt(shape);
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const u64 r = rng_() >> 1;
            t.data[i] = r + offset;
            tt.data[i] = t.data[i] >> shift;
        }
        auto st = deal_shares(t), stt = deal_shares(tt);
        std::vector<RescalePairShare> out(static_cast<std::size_t>(parties_));
        for (int k = 0; k < parties_; ++k)
            out[static_cast<std::size_t>(k)] =
                RescalePairShare{st[k], stt[k], shift, magnitude_bits};
        ++bundles_issued_;
        return out;
    });
}

std::uint64_t TrustedDealer::triples_issued() const {
    std::lock_guard<std::mutex> lk(mu_);
    return triples_issued_;
}

std::uint64_t TrustedDealer::bundles_issued() const {
    std::lock_guard<std::mutex> lk(mu_);
    return bundles_issued_;
}

} // namespace fedinfer
