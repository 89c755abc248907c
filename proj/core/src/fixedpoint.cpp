#include "fedinfer/fixedpoint.hpp"

#include <cmath>

namespace fedinfer {

u64 encode_scalar(double v, int frac_bits) {
    // Scale, then round half away from zero (std::round does exactly that).
    const double scaled = std::round(v * std::ldexp(1.0, frac_bits));
    const double bound = std::ldexp(1.0, 63); // 2^63
    if (!(scaled < bound && scaled >= -bound) || !std::isfinite(v))
        fail(Err::range_overflow, "value out of fixed-point range");
    return static_cast<u64>(static_cast<i64>(scaled));
}

double decode_scalar(u64 v, int frac_bits) {
    return std::ldexp(static_cast<double>(to_signed(v)), -frac_bits);
}

RingTensor encode(const RealTensor& value, const RingParams& params) {
    return encode(value, params.frac_bits);
}

RingTensor encode(const RealTensor& value, int frac_bits) {
    RingTensor out(value.shape);
    for (std::size_t i = 0; i < value.data.size(); ++i)
        out.data[i] = encode_scalar(value.data[i], frac_bits);
    return out;
}

RealTensor decode(const RingTensor& t, const RingParams& params) {
    return decode(t, params.frac_bits);
}

RealTensor decode(const RingTensor& t, int frac_bits) {
    RealTensor out(t.shape);
    for (std::size_t i = 0; i < t.data.size(); ++i)
        out.data[i] = decode_scalar(t.data[i], frac_bits);
    return out;
}

RingTensor truncate(const RingTensor& t, int shift) {
    require(shift >= 0 && shift < 64, Err::bad_config, "truncate shift out of range");
    if (shift == 0) return t;
    RingTensor out(t.shape);
    const u64 half = u64{1} << (shift - 1);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        // Wrapping add of the rounding constant, then arithmetic shift.
        const i64 v = to_signed(t.data[i] + half);
        out.data[i] = to_ring(v >> shift);
    }
    return out;
}

static void check_same_shape(const RingTensor& a, const RingTensor& b) {
    require(a.shape == b.shape, Err::shape_mismatch, "ring tensor shape mismatch");
}

RingTensor ring_add(const RingTensor& a, const RingTensor& b) {
    check_same_shape(a, b);
    RingTensor out(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

RingTensor ring_sub(const RingTensor& a, const RingTensor& b) {
    check_same_shape(a, b);
    RingTensor out(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] - b.data[i];
    return out;
}

RingTensor ring_neg(const RingTensor& a) {
    RingTensor out(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = ~a.data[i] + 1;
    return out;
}

RingTensor ring_mul_elem(const RingTensor& a, const RingTensor& b) {
    check_same_shape(a, b);
    RingTensor out(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    return out;
}

RingTensor ring_scale(const RingTensor& a, u64 c) {
    RingTensor out(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * c;
    return out;
}

RingTensor ring_add_scalar(const RingTensor& a, u64 c) {
    RingTensor out(a.shape);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + c;
    return out;
}

RingTensor ring_matmul(const RingTensor& a, const RingTensor& b) {
    require(a.shape.size() == 2 && b.shape.size() == 2 && a.shape[1] == b.shape[0],
            Err::shape_mismatch, "ring matmul shape mismatch");
    const std::size_t m = a.shape[0], n = a.shape[1], p = b.shape[1];
    RingTensor c({m, p});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            const u64 aik = a.data[i * n + k];
            if (aik == 0) continue;
            for (std::size_t j = 0; j < p; ++j) c.data[i * p + j] += aik * b.data[k * p + j];
        }
    return c;
}

} // namespace fedinfer
