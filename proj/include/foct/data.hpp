#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "foct/common.hpp"

namespace foct {

/// Observed sample: covariates X (n x d), binary treatment T, outcome Y.
/// Immutable after construction; the constructor validates every invariant.
class Dataset {
public:
    Dataset(MatrixXd x, VectorXd t, VectorXd y, std::vector<std::string> feature_names = {});

    Index n() const { return x_.rows(); }
    Index d() const { return x_.cols(); }
    /// Length of the design vector [1, T, X, T*X].
    Index p() const { return 2 * x_.cols() + 2; }

    const MatrixXd& x() const { return x_; }
    const VectorXd& t() const { return t_; }
    const VectorXd& y() const { return y_; }
    const std::vector<std::string>& feature_names() const { return names_; }

    /// Rows picked by index, in the given order (duplicates allowed).
    Dataset subset(const std::vector<Index>& rows) const;

private:
    MatrixXd x_;
    VectorXd t_;
    VectorXd y_;
    std::vector<std::string> names_;
};

/// Per-column affine map to zero mean and unit sample sd (n-1 denominator).
struct Standardizer {
    VectorXd means;
    VectorXd sds;
    std::optional<double> y_mean;
    std::optional<double> y_sd;

    Dataset apply(const Dataset& ds) const;
    Dataset invert(const Dataset& ds) const;
};

struct ColumnRoles {
    std::string outcome;
    std::string treatment;
    /// Empty selects every column that is neither outcome nor treatment.
    std::vector<std::string> covariates;
};

Dataset load_csv(const std::filesystem::path& path, const ColumnRoles& roles);

/// Writes columns y, t, then the covariates, with 17 significant digits.
void save_csv(const Dataset& ds, const std::filesystem::path& path,
              const std::string& outcome = "y", const std::string& treatment = "t");

std::pair<Dataset, Standardizer> standardize(const Dataset& ds, bool include_outcome = true);

/// Z_i = [1, T_i, X_i, T_i * X_i], length 2d + 2.
VectorXd design_row(const Dataset& ds, Index i);

/// All design rows stacked, n x (2d + 2).
MatrixXd design_matrix(const Dataset& ds);

/// Coefficient-layout helpers for a length 2d + 2 coefficient vector.
namespace coef {
inline constexpr Index intercept = 0;
inline constexpr Index treatment = 1;
inline Index main(Index k) { return 2 + k; }
inline Index interaction(Index d, Index k) { return 2 + d + k; }
} // namespace coef

} // namespace foct
