#pragma once

// Forward-mode dual number used to push a single directional derivative
// through the hand-written backward passes (forward-over-reverse). Running a
// backward pass in Dual<double> with an input tangent v yields, in the
// tangent part of every parameter gradient, the Hessian-vector product
// d/dtheta <grad_x f, v>.

#include <Eigen/Core>
#include <cmath>
#include <ostream>

namespace dmc {

template <typename T>
struct Dual {
    T v{};  // value
    T d{};  // tangent

    constexpr Dual() = default;
    constexpr Dual(T value) : v(value) {}  // NOLINT(google-explicit-constructor)
    constexpr Dual(T value, T tangent) : v(value), d(tangent) {}

    Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
    Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
    Dual& operator*=(const Dual& o) { d = d * o.v + v * o.d; v *= o.v; return *this; }
    Dual& operator/=(const Dual& o) { *this = *this / o; return *this; }

    friend Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, a.d + b.d}; }
    friend Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.d - b.d}; }
    friend Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
    friend Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
    friend Dual operator/(const Dual& a, const Dual& b) {
        return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
    }

    // Ordering looks only at the value part (used for max-subtraction in softmax).
    friend bool operator==(const Dual& a, const Dual& b) { return a.v == b.v; }
    friend bool operator!=(const Dual& a, const Dual& b) { return a.v != b.v; }
    friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
    friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
    friend bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
    friend bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }

    friend std::ostream& operator<<(std::ostream& os, const Dual& a) {
        return os << a.v << "+" << a.d << "e";
    }
};

template <typename T>
Dual<T> sqrt(const Dual<T>& a) {
    const T s = std::sqrt(a.v);
    return {s, a.d / (T(2) * s)};
}

template <typename T>
Dual<T> exp(const Dual<T>& a) {
    const T e = std::exp(a.v);
    return {e, a.d * e};
}

template <typename T>
Dual<T> tanh(const Dual<T>& a) {
    const T t = std::tanh(a.v);
    return {t, a.d * (T(1) - t * t)};
}

template <typename T>
Dual<T> abs(const Dual<T>& a) {
    return a.v < T(0) ? -a : a;
}

template <typename T>
bool isfinite(const Dual<T>& a) {
    return std::isfinite(a.v) && std::isfinite(a.d);
}

/// Value part of a scalar; identity for plain floating point.
template <typename T>
constexpr T value_of(const T& x) { return x; }
template <typename T>
constexpr T value_of(const Dual<T>& x) { return x.v; }

template <typename S>
struct is_dual : std::false_type {};
template <typename T>
struct is_dual<Dual<T>> : std::true_type {};

}  // namespace dmc

namespace Eigen {

template <typename T>
struct NumTraits<dmc::Dual<T>> : NumTraits<T> {
    using Real = dmc::Dual<T>;
    using NonInteger = dmc::Dual<T>;
    using Nested = dmc::Dual<T>;
    using Literal = dmc::Dual<T>;
    enum {
        IsComplex = 0,
        IsInteger = 0,
        IsSigned = 1,
        RequireInitialization = 1,
        ReadCost = 2,
        AddCost = 2 * NumTraits<T>::AddCost,
        MulCost = 3 * NumTraits<T>::MulCost + NumTraits<T>::AddCost
    };
};

}  // namespace Eigen
