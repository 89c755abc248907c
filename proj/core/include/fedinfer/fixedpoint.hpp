#pragma once

#include <cstdint>
#include <vector>

#include "fedinfer/errors.hpp"
#include "fedinfer/tensor.hpp"

namespace fedinfer {

using u64 = std::uint64_t;
using i64 = std::int64_t;

// Parameters of the fixed-point ring Z_{2^64}.
//   frac_bits    f: fractional precision of the two's-complement encoding.
//   compare_bits l: number of (top) bits scanned by the secure comparison.
// Reals representable at precision f lie in [-2^(63-f), 2^(63-f)).
struct RingParams {
    static constexpr int modulus_bits = 64;
    int frac_bits = 16;
    int compare_bits = 64;

    void validate() const {
        require(frac_bits >= 1 && frac_bits <= 32, Err::bad_config, "frac_bits must be in [1,32]");
        require(compare_bits >= 2 && compare_bits <= 64, Err::bad_config,
                "compare_bits must be in [2,64]");
    }
};

// Flat row-major tensor of ring elements. All arithmetic wraps mod 2^64.
struct RingTensor {
    Shape shape;
    std::vector<u64> data;

    RingTensor() = default;
    explicit RingTensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0) {}
    RingTensor(Shape s, std::vector<u64> d) : shape(std::move(s)), data(std::move(d)) {
        require(data.size() == shape_numel(shape), Err::shape_mismatch,
                "ring tensor data length does not match shape");
    }

    static RingTensor scalar(u64 v) { return RingTensor({1}, {v}); }
    std::size_t numel() const { return data.size(); }
};

inline u64 to_ring(i64 v) { return static_cast<u64>(v); }
inline i64 to_signed(u64 v) { return static_cast<i64>(v); }

// round(v * 2^f), half away from zero, mapped into the ring via two's complement.
u64 encode_scalar(double v, int frac_bits);
double decode_scalar(u64 v, int frac_bits);

// Element-wise codec. encode throws RangeOverflow when any |v| >= 2^(63-f).
RingTensor encode(const RealTensor& value, const RingParams& params);
RingTensor encode(const RealTensor& value, int frac_bits);
RealTensor decode(const RingTensor& t, const RingParams& params);
RealTensor decode(const RingTensor& t, int frac_bits);

// Rescale a tensor holding a value at precision (f + shift) down to precision f.
// Signed arithmetic shift with half-up rounding; error <= 2^-f per element.
RingTensor truncate(const RingTensor& t, int shift);
inline RingTensor truncate(const RingTensor& t, const RingParams& params) {
    return truncate(t, params.frac_bits);
}

// Ring arithmetic (wrapping mod 2^64).
RingTensor ring_add(const RingTensor& a, const RingTensor& b);
RingTensor ring_sub(const RingTensor& a, const RingTensor& b);
RingTensor ring_neg(const RingTensor& a);
RingTensor ring_mul_elem(const RingTensor& a, const RingTensor& b);
RingTensor ring_scale(const RingTensor& a, u64 c);
RingTensor ring_add_scalar(const RingTensor& a, u64 c);
RingTensor ring_matmul(const RingTensor& a, const RingTensor& b);

} // namespace fedinfer
