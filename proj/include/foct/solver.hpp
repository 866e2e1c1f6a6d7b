#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>

#include "foct/fitting.hpp"

namespace foct {

struct SolveConfig {
    int depth = 2;
    Index n_min = 1;
    double lambda = 0.0;
    ThresholdMode thresholds = AutoThresholds{};
    FusionBudget fusion = DescentFusion{};
    int top_k_fusion = 50;
    double time_limit = 3600.0;  // seconds
    std::uint64_t seed = 0;
    unsigned threads = 1;
    /// Disables lower-bound pruning in the certification phase (every tree
    /// gets a full fusion search). Only useful for checking pruning soundness.
    bool prune = true;

    void validate() const;
};

struct SolveReport {
    FittedModel best;
    bool certified_optimal = false;
    Index trees_total = 0;
    Index trees_evaluated = 0;
    Index trees_pruned = 0;
    double wall_time = 0.0;
};

/// Every feasible tree over node-local candidate thresholds, organized so the
/// unfused loss of a tree is a sum of independent subtree losses. Built once
/// per dataset and reusable across lambda values.
class SearchSpace {
public:
    SearchSpace(const Dataset& ds, int depth, Index n_min, const ThresholdMode& thresholds);
    ~SearchSpace();
    SearchSpace(SearchSpace&&) noexcept;
    SearchSpace& operator=(SearchSpace&&) noexcept;

    int depth() const { return depth_; }
    Index n_min() const { return n_min_; }
    double baseline_sse() const { return baseline_; }
    /// Smallest unfused SSE over all trees (+inf if none is feasible).
    double best_unfused_sse() const;
    double tree_count() const;

    struct Candidate {
        TreeStructure tree;
        double unfused_sse = 0.0;
    };

    /// Calls visit(tree, unfused_sse) for every tree with unfused_sse < bound().
    /// `bound` is re-read during the walk so callers may tighten it.
    void enumerate(const std::function<double()>& bound,
                   const std::function<void(const TreeStructure&, double)>& visit) const;

    /// The k trees of smallest unfused SSE, ordered by (SSE, tree key).
    std::vector<Candidate> best_trees(int k) const;
    /// All trees with unfused SSE strictly below `bound`, same order.
    std::vector<Candidate> trees_below(double bound) const;

    struct Node;

private:
    int depth_;
    Index n_min_;
    double baseline_;
    std::unique_ptr<Node> root_;
};

SolveReport solve(const Dataset& ds, const SolveConfig& cfg);
SolveReport solve(const Dataset& ds, const SolveConfig& cfg, const SearchSpace& space);

struct LpOptions {
    std::optional<double> big_m;
    double epsilon = 1e-6;
};

struct LpSummary {
    Index n_vars = 0;
    Index n_binaries = 0;
    Index n_constraints = 0;
    double big_m = 0.0;
};

/// Default coefficient box: 10 * max|Y| / max(1, smallest nonzero covariate sd).
double default_big_m(const Dataset& scaled);

/// Covariates min-max scaled to [0, 1]; constant columns map to 0.
Dataset min_max_scale(const Dataset& ds);

/// Writes the mixed-integer quadratic program for the fused tree problem in
/// CPLEX LP text format. Variable grammar:
///   z_<i>_<t>      row i assigned to leaf t      (binary)
///   l_<t>          leaf t nonempty               (binary)
///   a_<m>_<k>      branch m splits on feature k  (binary)
///   d_<m>          branch m is split             (binary)
///   r_<j>_<t1>_<t2> leaves t1 < t2 unfused on j  (binary)
///   b_<m>          threshold of branch m         in [0, 1]
///   gam_<t>_<j>    coefficient j of leaf t       in [-M, M]
///   w_<i>_<t>_<j>  z_<i>_<t> * gam_<t>_<j>       in [-M, M]
///   e_<i>          residual of row i             free
/// Leaves t are heap leaf positions, branches m heap node ids, j design index.
LpSummary emit_lp(const Dataset& ds, const SolveConfig& cfg, const std::filesystem::path& out,
                  const LpOptions& options = {});

} // namespace foct
