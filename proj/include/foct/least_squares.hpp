#pragma once

#include <Eigen/Dense>

namespace foct {

/// Relative pivot threshold below which a direction counts as rank-deficient.
template <typename Scalar>
inline constexpr Scalar kRankTolerance = Scalar(1e-10);

/// Minimum-norm least-squares solution of a * x ~= b.
template <typename DerivedA, typename DerivedB>
Eigen::Matrix<typename DerivedA::Scalar, Eigen::Dynamic, 1> min_norm_solve(const Eigen::MatrixBase<DerivedA>& a,
                                                                            const Eigen::MatrixBase<DerivedB>& b)
{
    using Scalar = typename DerivedA::Scalar;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (a.cols() == 0)
        return {};
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a.rows(), a.cols());
    cod.setThreshold(kRankTolerance<Scalar>);
    cod.compute(a);
    return cod.solve(b);
}

/// Residual sum of squares min_x ||b - a x||^2, read off the trailing part of
/// Q^T b so it stays accurate when the fit is near exact.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar residual_sum_squares(const Eigen::MatrixBase<DerivedA>& a,
                                               const Eigen::MatrixBase<DerivedB>& b,
                                               typename DerivedA::Scalar absolute_tol = 0)
{
    using Scalar = typename DerivedA::Scalar;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    if (a.cols() == 0 || a.rows() == 0)
        return b.squaredNorm();
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    Scalar max_pivot = qr.maxPivot();
    if (max_pivot <= Scalar(0))
        return b.squaredNorm();
    Scalar rel = kRankTolerance<Scalar>;
    if (absolute_tol > Scalar(0))
        rel = std::max(rel, absolute_tol / max_pivot);
    qr.setThreshold(rel);
    Vector w = qr.householderQ().adjoint() * b;
    Eigen::Index rank = qr.rank();
    return w.tail(w.size() - rank).squaredNorm();
}

/// Removes from the columns of `target` their projection onto range(a).
template <typename DerivedA, typename Target>
void project_out(const Eigen::MatrixBase<DerivedA>& a, Eigen::MatrixBase<Target>& target)
{
    using Scalar = typename DerivedA::Scalar;
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (a.cols() == 0)
        return;
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    qr.setThreshold(kRankTolerance<Scalar>);
    Matrix w = qr.householderQ().adjoint() * target;
    w.topRows(qr.rank()).setZero();
    target.derived() = qr.householderQ() * w;
}

} // namespace foct
