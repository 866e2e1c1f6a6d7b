#pragma once

#include <random>

#include "foct/data.hpp"

namespace testing {

using foct::Index;
using foct::MatrixXd;
using foct::VectorXd;

/// Gaussian covariates rounded to `digits` decimals (ties are frequent
/// when digits is small), Bernoulli(0.5) treatment, noisy linear outcome.
inline foct::Dataset random_dataset(std::mt19937_64& rng, Index n, Index d, int digits = 3, double noise = 1.0)
{
    std::normal_distribution<double> normal;
    std::bernoulli_distribution coin(0.5);
    const double scale = std::pow(10.0, digits);
    MatrixXd x(n, d);
    VectorXd t(n), y(n);
    for (Index i = 0; i < n; ++i) {
        for (Index k = 0; k < d; ++k)
            x(i, k) = std::round(normal(rng) * scale) / scale;
        t[i] = coin(rng) ? 1.0 : 0.0;
    }
    VectorXd w(d);
    for (Index k = 0; k < d; ++k)
        w[k] = normal(rng);
    for (Index i = 0; i < n; ++i) {
        double step = x(i, 0) > 0 ? 2.0 : -1.0;
        y[i] = step + t[i] * (1.0 + x(i, d - 1)) + x.row(i).dot(w) + noise * normal(rng);
    }
    return foct::Dataset(std::move(x), std::move(t), std::move(y));
}

/// SSE of the least-squares fit through a rank-revealing SVD, used as an
/// oracle independent of the library's QR-based solvers.
inline double svd_sse(const MatrixXd& a, const VectorXd& b)
{
    if (a.rows() == 0)
        return 0.0;
    Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-10);
    VectorXd coef = svd.solve(b);
    return (b - a * coef).squaredNorm();
}

inline VectorXd svd_solve(const MatrixXd& a, const VectorXd& b)
{
    Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-10);
    return svd.solve(b);
}

/// Rows of `ds` whose index satisfies pred, as a design block.
template <typename Pred>
inline std::pair<MatrixXd, VectorXd> rows_where(const foct::Dataset& ds, Pred pred)
{
    std::vector<Index> rows;
    for (Index i = 0; i < ds.n(); ++i)
        if (pred(i))
            rows.push_back(i);
    MatrixXd z(static_cast<Index>(rows.size()), ds.p());
    VectorXd y(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        z.row(static_cast<Index>(r)) = foct::design_row(ds, rows[r]).transpose();
        y[static_cast<Index>(r)] = ds.y()[rows[r]];
    }
    return {z, y};
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

} // namespace testing
