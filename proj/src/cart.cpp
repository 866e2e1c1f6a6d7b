#include "foct/cart.hpp"

#include <algorithm>
#include <limits>

namespace foct {

namespace {

constexpr double kRelativeGain = 1e-12;

struct Grower {
    const Dataset& ds;
    const MatrixXd& design;
    const CartConfig& cfg;
    TreeStructure tree;
    double scale;  // centred sum of squares of Y; gains below round-off of it are noise

    void grow(const std::vector<Index>& rows, Index heap, int remaining)
    {
        if (remaining == 0)
            return;
        const auto n = static_cast<Index>(rows.size());
        const double node_sse = leaf_ols_sse(design, ds.y(), rows);

        double best = std::numeric_limits<double>::infinity();
        std::optional<Split> chosen;
        std::vector<Index> best_left, best_right;
        for (Index k = 0; k < ds.d(); ++k) {
            std::vector<Index> by_value = rows;
            std::stable_sort(by_value.begin(), by_value.end(),
                             [&](Index a, Index b) { return ds.x()(a, k) < ds.x()(b, k); });
            std::vector<double> values(by_value.size());
            for (std::size_t r = 0; r < by_value.size(); ++r)
                values[r] = ds.x()(by_value[r], k);
            Index previous_left = -1;
            for (double b : candidate_thresholds(values, cfg.thresholds)) {
                auto left_count =
                    static_cast<Index>(std::lower_bound(values.begin(), values.end(), b) - values.begin());
                if (left_count == previous_left || left_count < cfg.n_min || n - left_count < cfg.n_min ||
                    left_count == 0 || left_count == n)
                    continue;
                previous_left = left_count;
                std::vector<Index> left(by_value.begin(), by_value.begin() + left_count);
                std::vector<Index> right(by_value.begin() + left_count, by_value.end());
                std::sort(left.begin(), left.end());
                std::sort(right.begin(), right.end());
                double total = leaf_ols_sse(design, ds.y(), left) + leaf_ols_sse(design, ds.y(), right);
                if (total < best) {
                    best = total;
                    chosen = Split{k, b};
                    best_left = std::move(left);
                    best_right = std::move(right);
                }
            }
        }
        if (!chosen || !(node_sse - best > kRelativeGain * std::max(node_sse, scale)))
            return;
        tree.set_split(heap, chosen);
        if (heap * 2 + 1 < tree.branch_count()) {
            grow(best_left, 2 * heap + 1, remaining - 1);
            grow(best_right, 2 * heap + 2, remaining - 1);
        }
    }
};

} // namespace

void CartConfig::validate() const
{
    if (depth < 0 || depth > kMaxDepth)
        throw InvalidInput("depth must lie in [0, " + std::to_string(kMaxDepth) + "]");
    if (n_min < 1)
        throw InvalidInput("n_min must be at least 1");
}

FittedModel fit_cart(const Dataset& ds, const CartConfig& cfg)
{
    cfg.validate();
    if (ds.n() < cfg.n_min)
        throw Infeasible("n_min exceeds the number of rows");
    const MatrixXd design = design_matrix(ds);
    const double scale = (ds.y().array() - ds.y().mean()).square().sum();
    Grower g{ds, design, cfg, TreeStructure(cfg.depth), scale};
    std::vector<Index> rows(static_cast<std::size_t>(ds.n()));
    for (Index i = 0; i < ds.n(); ++i)
        rows[static_cast<std::size_t>(i)] = i;
    g.grow(rows, 0, cfg.depth);
    const Index leaves = g.tree.active_count();
    return make_model(ds, g.tree, FusionPattern::all_distinct(ds.p(), leaves), 0.0);
}

} // namespace foct
