#pragma once

#include <Eigen/Dense>

#include "dmc/core/dual.hpp"

namespace dmc {

using Index = Eigen::Index;

/// Row-major dense matrix: rows are tokens / frames, columns are features.
template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVecX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatX<double>;
using Vector = VecX<double>;

namespace detail {

template <typename Derived>
auto value_part(const Eigen::MatrixBase<Derived>& a) {
    using S = typename Derived::Scalar;
    return a.unaryExpr([](const S& x) { return x.v; });
}

template <typename Derived>
auto tangent_part(const Eigen::MatrixBase<Derived>& a) {
    using S = typename Derived::Scalar;
    return a.unaryExpr([](const S& x) { return x.d; });
}

}  // namespace detail

/// Dense product. For dual scalars the product is split into three real
/// products, (A + eA')(B + eB') = AB + e(A'B + AB'), so the heavy lifting
/// stays on Eigen's vectorised real kernels.
template <typename DA, typename DB>
MatX<typename DA::Scalar> mm(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
    using S = typename DA::Scalar;
    static_assert(std::is_same_v<S, typename DB::Scalar>);
    if constexpr (is_dual<S>::value) {
        using T = decltype(S{}.v);
        const MatX<T> av = detail::value_part(a);
        const MatX<T> ad = detail::tangent_part(a);
        const MatX<T> bv = detail::value_part(b);
        const MatX<T> bd = detail::tangent_part(b);
        MatX<T> v;
        v.noalias() = av * bv;
        MatX<T> d;
        d.noalias() = ad * bv;
        d.noalias() += av * bd;
        MatX<S> out(v.rows(), v.cols());
        for (Index i = 0; i < v.rows(); ++i)
            for (Index j = 0; j < v.cols(); ++j) out(i, j) = S(v(i, j), d(i, j));
        return out;
    } else {
        MatX<S> out;
        out.noalias() = a * b;
        return out;
    }
}

/// Cast a real matrix into any scalar type (zero tangent for duals).
template <typename Scalar, typename Derived>
MatX<Scalar> lift(const Eigen::MatrixBase<Derived>& a) {
    return a.template cast<Scalar>();
}

}  // namespace dmc
