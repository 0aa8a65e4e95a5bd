#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "polyper/error.hpp"

namespace polyper {

/// Dense row-major tensor. Rank 3 tensors are feature maps laid out as
/// {channels, height, width}; rank 2 are row matrices {rows, cols};
/// rank 1 are vectors. A scalar is stored as shape {1}.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(count(shape), T(0)) {}
    Tensor(std::vector<int> s, std::vector<T> data) : shape(std::move(s)), v(std::move(data)) {
        if (static_cast<std::int64_t>(v.size()) != count(shape))
            throw SizingError("tensor data size does not match shape");
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, T value) {
        Tensor t(std::move(s));
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }
    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    static std::int64_t count(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    // Feature-map accessors, valid for rank 3 only.
    int channels() const { return shape[0]; }
    int height() const { return shape[rank() == 3 ? 1 : 0]; }
    int width() const { return shape[rank() == 3 ? 2 : 1]; }

    int rows() const { return shape[0]; }
    int cols() const { return shape[1]; }

    T& at(int c, int y, int x) { return v[(static_cast<std::int64_t>(c) * shape[1] + y) * shape[2] + x]; }
    T at(int c, int y, int x) const { return v[(static_cast<std::int64_t>(c) * shape[1] + y) * shape[2] + x]; }
    T& at(int r, int c) { return v[static_cast<std::int64_t>(r) * shape[1] + c]; }
    T at(int r, int c) const { return v[static_cast<std::int64_t>(r) * shape[1] + c]; }

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    bool all_finite() const {
        for (T x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.v.resize(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw SizingError("max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double m = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.v[i]) - static_cast<double>(b.v[i])));
    return m;
}

}  // namespace polyper
