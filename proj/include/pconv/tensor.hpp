#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "pconv/errors.hpp"

namespace pconv {

/// Extents of a dense 4-D tensor in (batch, channel, height, width) order.
struct Shape {
    int n = 0, c = 0, h = 0, w = 0;

    std::size_t count() const {
        return std::size_t(n) * std::size_t(c) * std::size_t(h) * std::size_t(w);
    }
    bool operator==(const Shape& o) const = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

/// Dense 4-D array in row-major (N,C,H,W) order. Float storage by default;
/// the scalar type is a template parameter so tests can run the same code
/// paths with 64-bit shadows.
template <typename T = float>
class Tensor {
public:
    Tensor() = default;

    Tensor(int n, int c, int h, int w, T fill = T(0))
        : shape_{n, c, h, w}, v_(check_extents(shape_), fill) {}

    explicit Tensor(const Shape& s, T fill = T(0)) : Tensor(s.n, s.c, s.h, s.w, fill) {}

    static Tensor from_values(int n, int c, int h, int w, std::vector<T> values) {
        Tensor t;
        t.shape_ = {n, c, h, w};
        if (check_extents(t.shape_) != values.size())
            throw ShapeError("tensor " + t.shape_.str() + " expects " +
                             std::to_string(t.shape_.count()) + " values, got " +
                             std::to_string(values.size()));
        t.v_ = std::move(values);
        return t;
    }

    static Tensor scalar(T v) { return from_values(1, 1, 1, 1, {v}); }

    /// A per-channel vector laid out as (1,C,1,1); used for biases and
    /// batch-norm parameters.
    static Tensor channel_vector(std::vector<T> values) {
        const int c = int(values.size());
        return from_values(1, c, 1, 1, std::move(values));
    }

    const Shape& shape() const { return shape_; }
    int n() const { return shape_.n; }
    int c() const { return shape_.c; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    std::size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    T* data() { return v_.data(); }
    const T* data() const { return v_.data(); }

    T& operator[](std::size_t i) { return v_[i]; }
    T operator[](std::size_t i) const { return v_[i]; }

    std::size_t index(int n, int c, int y, int x) const {
        return ((std::size_t(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& at(int n, int c, int y, int x) { return v_[index(n, c, y, x)]; }
    T at(int n, int c, int y, int x) const { return v_[index(n, c, y, x)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool is_scalar() const { return shape_ == Shape{1, 1, 1, 1}; }
    T scalar_value() const {
        if (!is_scalar())
            throw ContractError("expected a scalar tensor, got " + shape_.str());
        return v_[0];
    }

    void fill(T v) { std::fill(v_.begin(), v_.end(), v); }

    bool all_finite() const {
        for (T x : v_)
            if (!std::isfinite(double(x))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(v_.size());
        for (std::size_t i = 0; i < v_.size(); ++i) out[i] = U(v_[i]);
        return Tensor<U>::from_values(shape_.n, shape_.c, shape_.h, shape_.w, std::move(out));
    }

    const std::vector<T>& values() const { return v_; }

private:
    static std::size_t check_extents(const Shape& s) {
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
            throw ShapeError("negative tensor extent in " + s.str());
        return s.count();
    }

    Shape shape_{};
    std::vector<T> v_;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shapes differ, " + a.shape().str() +
                         " vs " + b.shape().str());
}

} // namespace pconv
