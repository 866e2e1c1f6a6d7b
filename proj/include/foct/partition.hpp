#pragma once

#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "foct/data.hpp"

namespace foct {

/// Axis-aligned split: rows with x[variable] < threshold go left, the rest right.
struct Split {
    Index variable = 0;
    double threshold = 0.0;

    bool goes_left(double value) const { return value < threshold; }
    friend bool operator==(const Split&, const Split&) = default;
};

/// Full binary tree of a fixed depth stored in heap order.
///
/// Branch node h has children 2h+1 and 2h+2; the 2^K nodes at depth K are leaf
/// positions 0 .. 2^K - 1. A branch without a split collapses its whole
/// subtree into one region, represented by the leftmost leaf position under
/// it. Active leaves are exactly the positions reachable under that rule.
class TreeStructure {
public:
    explicit TreeStructure(int depth = 0);
    TreeStructure(int depth, std::vector<std::optional<Split>> splits);

    int depth() const { return depth_; }
    Index branch_count() const { return static_cast<Index>(splits_.size()); }
    Index leaf_positions() const { return Index{1} << depth_; }

    const std::optional<Split>& split(Index node) const { return splits_[static_cast<std::size_t>(node)]; }
    const std::vector<std::optional<Split>>& splits() const { return splits_; }

    /// Sets or clears a branch split. Clearing also clears every descendant so
    /// the hierarchy invariant keeps holding.
    void set_split(Index node, std::optional<Split> s);

    const std::vector<bool>& leaf_active() const { return active_; }
    /// Active leaf positions in increasing order.
    const std::vector<Index>& active_leaves() const { return active_list_; }
    Index active_count() const { return static_cast<Index>(active_list_.size()); }
    /// Index of a leaf position inside active_leaves(), or -1.
    Index slot_of(Index leaf_position) const;

    /// Leaf position reached by covariate row x.
    template <typename Row>
    Index route(const Row& x) const
    {
        Index h = 0;
        while (h < branch_count()) {
            const auto& s = splits_[static_cast<std::size_t>(h)];
            h = (s && !s->goes_left(x[s->variable])) ? 2 * h + 2 : 2 * h + 1;
        }
        return h - branch_count();
    }

    /// True when the node lies on a path whose ancestors are all split.
    bool reachable(Index node) const;

    /// Preorder (root, left subtree, right subtree) list of (variable,
    /// threshold); unsplit reachable branches contribute (-1, 0). Used as the
    /// deterministic tie-break between equal-objective trees.
    std::vector<std::pair<Index, double>> order_key() const;

    void validate(Index d) const;

    friend bool operator==(const TreeStructure& a, const TreeStructure& b)
    {
        return a.depth_ == b.depth_ && a.splits_ == b.splits_;
    }

private:
    void refresh();

    int depth_;
    std::vector<std::optional<Split>> splits_;
    std::vector<bool> active_;
    std::vector<Index> active_list_;
};

bool tree_key_less(const TreeStructure& a, const TreeStructure& b);

/// Each row's active leaf. assignment holds slots into tree.active_leaves().
struct Membership {
    std::vector<Index> leaves;       // active leaf positions
    std::vector<Index> assignment;   // per row, slot in `leaves`
    std::vector<Index> leaf_counts;  // per slot

    Index leaf_count() const { return static_cast<Index>(leaves.size()); }
    std::vector<Index> rows_of(Index slot) const;
};

Membership assign(const TreeStructure& tree, const Dataset& ds);

struct Midpoints {};
struct QuantileGrid {
    int q = 16;
};
/// Midpoints when the node holds at most `max_distinct` distinct values,
/// otherwise a quantile grid of `q` levels.
struct AutoThresholds {
    int max_distinct = 64;
    int q = 16;
};
using ThresholdMode = std::variant<Midpoints, QuantileGrid, AutoThresholds>;

/// Sorted, strictly increasing candidate thresholds for a covariate, computed
/// from `values` (typically the covariate restricted to a node's rows).
std::vector<double> candidate_thresholds(std::vector<double> values, const ThresholdMode& mode);
std::vector<double> candidate_thresholds(const Dataset& ds, Index variable, const ThresholdMode& mode);

/// Lexicographic enumeration of every tree over fixed per-variable candidate
/// grids. Plain value type: copies continue independently from the same point.
class TreeEnumerator {
public:
    TreeEnumerator(int depth, std::vector<std::vector<double>> candidates_per_var, bool allow_partial);

    bool done() const { return done_; }
    const TreeStructure& current() const { return tree_; }
    void advance();

    /// Total number of trees the enumerator will produce.
    double count() const;

private:
    Split option(Index choice) const;
    bool free_node(Index node) const;
    void reset_from(Index first);
    void rebuild();

    int depth_;
    std::vector<Split> options_;
    bool allow_partial_;
    std::vector<Index> choice_;  // 0 = unsplit, c > 0 = options_[c - 1]
    TreeStructure tree_;
    bool done_ = false;
};

TreeEnumerator enumerate_trees(int depth, std::vector<std::vector<double>> candidates_per_var, bool allow_partial);

inline constexpr int kMaxDepth = 3;

} // namespace foct
