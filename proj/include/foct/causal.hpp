#pragma once

#include <filesystem>
#include <optional>
#include <utility>

#include "foct/fitting.hpp"

namespace foct {

struct SubgroupEffect {
    Index leaf = 0;  // leaf position
    Index n = 0;
    double mu_hat = 0.0;
    VectorXd beta_hat;
    VectorXd xbar;
    double tau_hat = 0.0;
    std::optional<std::pair<double, double>> ci;
};

/// tau = mu + beta' xbar per active leaf, xbar being the mean covariate
/// vector of the leaf's rows in ds.
std::vector<SubgroupEffect> estimate_sate(const Dataset& ds, const FittedModel& model);

struct BootstrapOptions {
    int replicates = 1000;
    double alpha = 0.10;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct BootstrapResult {
    std::vector<SubgroupEffect> effects;  // point estimates with percentile intervals
    MatrixXd draws;                       // replicates x leaves
    Index redraws = 0;                    // degenerate resamples that were replaced
};

/// Percentile bootstrap with the tree and fusion pattern held fixed. A
/// resample leaving some leaf without rows, or without treated rows, is
/// redrawn; more than 10 * replicates redraws in total is an error.
BootstrapResult bootstrap_ci(const Dataset& ds, const FittedModel& model, const BootstrapOptions& options);

/// Type-7 sample quantile of unsorted values.
double quantile(std::vector<double> values, double level);

/// Columns: leaf, n, tau, lo, hi.
void save_effects_csv(const std::vector<SubgroupEffect>& effects, const std::filesystem::path& path);

} // namespace foct
