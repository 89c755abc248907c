#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "fedinfer/errors.hpp"

namespace fedinfer {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

// Dense row-major tensor of doubles. All plaintext math runs on this.
struct RealTensor {
    Shape shape;
    std::vector<double> data;

    RealTensor() = default;
    explicit RealTensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}
    RealTensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        require(data.size() == shape_numel(shape), Err::shape_mismatch,
                "tensor data length does not match shape");
    }

    static RealTensor scalar(double v) { return RealTensor({1}, {v}); }
    static RealTensor vector(std::vector<double> v) {
        Shape s{v.size()};
        return RealTensor(std::move(s), std::move(v));
    }
    static RealTensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        return RealTensor({rows, cols}, std::move(v));
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
};

inline bool same_shape(const RealTensor& a, const RealTensor& b) { return a.shape == b.shape; }

// c = a @ b for 2-d tensors.
inline RealTensor real_matmul(const RealTensor& a, const RealTensor& b) {
    require(a.shape.size() == 2 && b.shape.size() == 2 && a.shape[1] == b.shape[0],
            Err::shape_mismatch, "matmul shape mismatch");
    const std::size_t m = a.shape[0], n = a.shape[1], p = b.shape[1];
    RealTensor c({m, p});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = a.data[i * n + k];
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < p; ++j) c.data[i * p + j] += aik * b.data[k * p + j];
        }
    return c;
}

} // namespace fedinfer
