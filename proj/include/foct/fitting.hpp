#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "foct/partition.hpp"

namespace foct {

/// A set partition of L items as a restricted growth string: labels[0] = 0
/// and labels[i] <= 1 + max(labels[0..i)). Classes are thereby ordered by
/// their smallest member.
using Partition = std::vector<Index>;

Partition canonical_partition(const std::vector<Index>& labels);
Index class_count(const Partition& p);
/// Number of unordered item pairs in different classes.
Index unfused_pairs(const Partition& p);

/// Every set partition of {0..L-1}, Bell(L) of them, in lexicographic RGS order.
const std::vector<Partition>& set_partitions(Index items);
double bell_number(Index items);

/// Per coefficient j, which active leaves share gamma_j. Leaves are addressed
/// by slot (index into the tree's active leaf list).
class FusionPattern {
public:
    FusionPattern() = default;
    explicit FusionPattern(std::vector<Partition> per_coefficient);

    static FusionPattern all_distinct(Index coefficients, Index leaves);
    static FusionPattern all_fused(Index coefficients, Index leaves);

    Index coefficient_count() const { return static_cast<Index>(parts_.size()); }
    Index leaf_count() const { return parts_.empty() ? 0 : static_cast<Index>(parts_.front().size()); }

    const Partition& partition(Index j) const { return parts_[static_cast<std::size_t>(j)]; }
    void set_partition(Index j, Partition p);

    Index class_count(Index j) const { return foct::class_count(partition(j)); }
    std::vector<std::vector<Index>> classes(Index j) const;

    /// Number of (coefficient, unordered leaf pair) combinations left unfused.
    Index penalty_count() const;
    /// Sum over coefficients of the number of classes.
    Index distinct_count() const;

    /// True if every class of *this lies inside a class of `coarser`.
    bool refines(const FusionPattern& coarser) const;

    friend bool operator==(const FusionPattern&, const FusionPattern&) = default;
    friend auto operator<=>(const FusionPattern&, const FusionPattern&) = default;

private:
    std::vector<Partition> parts_;
};

/// Leaf coefficients, one row per active leaf (slot order), columns in
/// design order [delta, mu, alpha_1..d, beta_1..d].
struct CoefTable {
    std::vector<Index> leaves;
    MatrixXd gamma;
};

struct FitResult {
    CoefTable coef;
    double sse = 0.0;
    double baseline_sse = 0.0;
    double normalized_loss = 0.0;
    Index penalty_count = 0;
    double lambda = 0.0;
    double objective = 0.0;
};

/// SSE of the pooled least-squares fit of Y on the full design, snapped to
/// zero when it is round-off of an exact fit.
double baseline_loss(const Dataset& ds);

/// Divisor used to normalize SSE; falls back to 1 when the pooled fit is exact.
double loss_normalizer(double baseline_sse);

FitResult fit_fused(const Dataset& ds, const TreeStructure& tree, const FusionPattern& pattern, double lambda);
FitResult fit_fused(const Dataset& ds, const Membership& membership, const FusionPattern& pattern, double lambda,
                    double baseline_sse);

/// Sum of squared residuals of `coef` on ds under `membership`, computed row by row.
double recompute_sse(const Dataset& ds, const Membership& membership, const CoefTable& coef);

/// Fused least squares reduced to per-leaf triangular factors. With
/// Z_l = Q_l R_l, every fused fit becomes a problem with at most L * p rows,
/// so scoring a fusion pattern costs nothing proportional to n.
class FusedSystem {
public:
    FusedSystem(const MatrixXd& design, const VectorXd& y, const Membership& membership);

    Index leaf_count() const { return static_cast<Index>(blocks_.size()); }
    Index coefficient_count() const { return p_; }

    double sse(const FusionPattern& pattern) const;
    double unfused_sse() const;
    /// Per-leaf least-squares coefficients (minimum norm when a leaf is
    /// rank deficient), one row per leaf.
    MatrixXd unfused_coefficients() const;

    /// SSE for each candidate partition of coefficient j with every other
    /// coefficient held at `pattern`.
    std::vector<double> coordinate_sse(const FusionPattern& pattern, Index j,
                                       const std::vector<Partition>& candidates) const;

private:
    struct Block {
        Index offset = 0;
        Index rows = 0;
        double residual = 0.0;
    };
    MatrixXd merged(const FusionPattern& pattern, Index skip_coefficient) const;

    Index p_ = 0;
    std::vector<Block> blocks_;
    MatrixXd r_;   // stacked R factors, (sum of block rows) x p
    VectorXd qy_;  // stacked leading parts of Q^T y
    double residual_ = 0.0;
};

struct ExactFusion {};
struct DescentFusion {
    int max_iter = 50;
    int restarts = 8;
    std::uint64_t seed = 0;
};
using FusionBudget = std::variant<ExactFusion, DescentFusion>;

inline constexpr double kExactPatternLimit = 1e6;

struct FusionSearchResult {
    FusionPattern pattern;
    FitResult fit;
};

/// Pattern minimizing sse / baseline + lambda * penalty_count, scored through
/// a FusedSystem. Ties go to fewer unfused pairs, then the smaller pattern.
struct PatternScore {
    FusionPattern pattern;
    double objective = 0.0;
    Index penalty = 0;
};
PatternScore search_patterns(const FusedSystem& system, double baseline_sse, double lambda,
                             const FusionBudget& budget, unsigned threads = 1);

FusionSearchResult search_fusion(const Dataset& ds, const TreeStructure& tree, double lambda,
                                 const FusionBudget& budget, unsigned threads = 1);
FusionSearchResult search_fusion(const Dataset& ds, const Membership& membership, double lambda,
                                 const FusionBudget& budget, double baseline_sse, unsigned threads = 1);

/// Strict weak "better than" on (objective, penalty, pattern) with objectives
/// equal up to a relative 1e-12 treated as tied.
bool better_score(double obj_a, Index pen_a, const FusionPattern& a, double obj_b, Index pen_b,
                  const FusionPattern& b);
bool objectives_tied(double a, double b);

/// Unfused OLS SSE of y on the design restricted to `rows`.
double leaf_ols_sse(const MatrixXd& design, const VectorXd& y, const std::vector<Index>& rows);

/// Tree, fusion pattern, fused coefficients and the training-sample leaf
/// statistics that SATE estimation needs.
struct FittedModel {
    TreeStructure tree;
    FusionPattern pattern;
    FitResult fit;
    MatrixXd leaf_means;            // active leaves x d, training covariate means
    std::vector<Index> leaf_sizes;  // training rows per active leaf
};

FittedModel make_model(const Dataset& ds, const TreeStructure& tree, const FusionPattern& pattern, double lambda,
                       double baseline_sse);
FittedModel make_model(const Dataset& ds, const TreeStructure& tree, const FusionPattern& pattern, double lambda);

/// Per-slot covariate means over the rows of each leaf (zero for empty leaves).
MatrixXd leaf_means(const Dataset& ds, const Membership& membership);

/// Fitted mean gamma_leaf^T Z_i for each row of ds.
VectorXd predict_mean(const FittedModel& model, const Dataset& ds);
/// mu_leaf + beta_leaf^T xbar_leaf for each row, xbar from the training sample.
VectorXd predict_tau(const FittedModel& model, const Dataset& ds);

} // namespace foct
