#include "foct/partition.hpp"

#include <algorithm>
#include <cmath>

namespace foct {

TreeStructure::TreeStructure(int depth) : TreeStructure(depth, {}) {}

TreeStructure::TreeStructure(int depth, std::vector<std::optional<Split>> splits)
    : depth_(depth), splits_(std::move(splits))
{
    if (depth < 0 || depth > kMaxDepth)
        throw InvalidInput("tree depth must lie in [0, " + std::to_string(kMaxDepth) + "]");
    auto branches = static_cast<std::size_t>((1 << depth) - 1);
    if (splits_.empty())
        splits_.resize(branches);
    if (splits_.size() != branches)
        throw InvalidInput("a depth-" + std::to_string(depth) + " tree has " + std::to_string(branches) +
                           " branch nodes");
    for (std::size_t h = 1; h < splits_.size(); ++h)
        if (splits_[h] && !splits_[(h - 1) / 2])
            throw InvalidInput("branch node " + std::to_string(h) + " is split but its parent is not");
    refresh();
}

void TreeStructure::set_split(Index node, std::optional<Split> s)
{
    if (node < 0 || node >= branch_count())
        throw InvalidInput("branch node index out of range");
    if (s && node > 0 && !splits_[static_cast<std::size_t>((node - 1) / 2)])
        throw InvalidInput("cannot split a node whose parent is unsplit");
    splits_[static_cast<std::size_t>(node)] = s;
    if (!s) {
        std::vector<Index> stack{2 * node + 1, 2 * node + 2};
        while (!stack.empty()) {
            Index h = stack.back();
            stack.pop_back();
            if (h >= branch_count())
                continue;
            splits_[static_cast<std::size_t>(h)].reset();
            stack.push_back(2 * h + 1);
            stack.push_back(2 * h + 2);
        }
    }
    refresh();
}

void TreeStructure::refresh()
{
    active_.assign(static_cast<std::size_t>(leaf_positions()), false);
    active_list_.clear();
    for (Index leaf = 0; leaf < leaf_positions(); ++leaf) {
        bool active = true;
        for (Index h = leaf + branch_count(); h > 0; h = (h - 1) / 2) {
            Index parent = (h - 1) / 2;
            bool right_child = (h == 2 * parent + 2);
            if (!splits_[static_cast<std::size_t>(parent)] && right_child) {
                active = false;
                break;
            }
        }
        active_[static_cast<std::size_t>(leaf)] = active;
        if (active)
            active_list_.push_back(leaf);
    }
}

Index TreeStructure::slot_of(Index leaf_position) const
{
    auto it = std::lower_bound(active_list_.begin(), active_list_.end(), leaf_position);
    if (it == active_list_.end() || *it != leaf_position)
        return -1;
    return static_cast<Index>(it - active_list_.begin());
}

bool TreeStructure::reachable(Index node) const
{
    for (Index h = node; h > 0; h = (h - 1) / 2)
        if (!splits_[static_cast<std::size_t>((h - 1) / 2)])
            return false;
    return true;
}

std::vector<std::pair<Index, double>> TreeStructure::order_key() const
{
    std::vector<std::pair<Index, double>> key;
    std::vector<Index> stack{0};
    while (!stack.empty()) {
        Index h = stack.back();
        stack.pop_back();
        if (h >= branch_count())
            continue;
        const auto& s = splits_[static_cast<std::size_t>(h)];
        if (!s) {
            key.emplace_back(-1, 0.0);
            continue;
        }
        key.emplace_back(s->variable, s->threshold);
        stack.push_back(2 * h + 2);
        stack.push_back(2 * h + 1);
    }
    return key;
}

void TreeStructure::validate(Index d) const
{
    for (const auto& s : splits_)
        if (s && (s->variable < 0 || s->variable >= d || !std::isfinite(s->threshold)))
            throw InvalidInput("split variable out of range or threshold not finite");
}

bool tree_key_less(const TreeStructure& a, const TreeStructure& b)
{
    return a.order_key() < b.order_key();
}

std::vector<Index> Membership::rows_of(Index slot) const
{
    std::vector<Index> rows;
    rows.reserve(static_cast<std::size_t>(leaf_counts[static_cast<std::size_t>(slot)]));
    for (std::size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] == slot)
            rows.push_back(static_cast<Index>(i));
    return rows;
}

Membership assign(const TreeStructure& tree, const Dataset& ds)
{
    tree.validate(ds.d());
    Membership m;
    m.leaves = tree.active_leaves();
    m.assignment.resize(static_cast<std::size_t>(ds.n()));
    m.leaf_counts.assign(m.leaves.size(), 0);
    for (Index i = 0; i < ds.n(); ++i) {
        Index slot = tree.slot_of(tree.route(ds.x().row(i)));
        m.assignment[static_cast<std::size_t>(i)] = slot;
        ++m.leaf_counts[static_cast<std::size_t>(slot)];
    }
    return m;
}

namespace {

double sorted_quantile(const std::vector<double>& sorted, double level)
{
    double h = static_cast<double>(sorted.size() - 1) * level;
    auto lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

} // namespace

std::vector<double> candidate_thresholds(std::vector<double> values, const ThresholdMode& mode)
{
    std::vector<double> out;
    if (values.size() < 2)
        return out;
    std::sort(values.begin(), values.end());
    std::vector<double> distinct = values;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 2)
        return out;

    auto midpoints = [&] {
        for (std::size_t k = 0; k + 1 < distinct.size(); ++k)
            out.push_back(0.5 * (distinct[k] + distinct[k + 1]));
    };
    auto quantiles = [&](int q) {
        if (q < 1)
            throw InvalidInput("quantile grid needs q >= 1");
        for (int i = 0; i < q; ++i)
            out.push_back(sorted_quantile(values, (i + 0.5) / q));
        out.erase(std::unique(out.begin(), out.end()), out.end());
    };

    if (std::holds_alternative<Midpoints>(mode)) {
        midpoints();
    } else if (const auto* g = std::get_if<QuantileGrid>(&mode)) {
        quantiles(g->q);
    } else {
        const auto& a = std::get<AutoThresholds>(mode);
        if (static_cast<int>(distinct.size()) <= a.max_distinct)
            midpoints();
        else
            quantiles(a.q);
    }
    return out;
}

std::vector<double> candidate_thresholds(const Dataset& ds, Index variable, const ThresholdMode& mode)
{
    if (variable < 0 || variable >= ds.d())
        throw InvalidInput("variable index out of range");
    const auto col = ds.x().col(variable);
    return candidate_thresholds(std::vector<double>(col.begin(), col.end()), mode);
}

TreeEnumerator::TreeEnumerator(int depth, std::vector<std::vector<double>> candidates_per_var, bool allow_partial)
    : depth_(depth), allow_partial_(allow_partial), tree_(std::min(std::max(depth, 0), kMaxDepth))
{
    if (depth < 0 || depth > kMaxDepth)
        throw InvalidInput("enumeration depth must lie in [0, " + std::to_string(kMaxDepth) + "]");
    for (std::size_t k = 0; k < candidates_per_var.size(); ++k)
        for (double b : candidates_per_var[k])
            options_.push_back(Split{static_cast<Index>(k), b});
    choice_.assign(static_cast<std::size_t>((1 << depth) - 1), 0);
    if (!allow_partial_ && depth_ > 0 && options_.empty()) {
        done_ = true;
        return;
    }
    reset_from(0);
    rebuild();
}

Split TreeEnumerator::option(Index choice) const { return options_[static_cast<std::size_t>(choice - 1)]; }

bool TreeEnumerator::free_node(Index node) const
{
    return node == 0 || choice_[static_cast<std::size_t>((node - 1) / 2)] > 0;
}

void TreeEnumerator::reset_from(Index first)
{
    for (auto h = static_cast<std::size_t>(first); h < choice_.size(); ++h)
        choice_[h] = (free_node(static_cast<Index>(h)) && !allow_partial_) ? 1 : 0;
}

void TreeEnumerator::rebuild()
{
    std::vector<std::optional<Split>> splits(choice_.size());
    for (std::size_t h = 0; h < choice_.size(); ++h)
        if (choice_[h] > 0)
            splits[h] = option(choice_[h]);
    tree_ = TreeStructure(depth_, std::move(splits));
}

void TreeEnumerator::advance()
{
    if (done_)
        return;
    const auto options = static_cast<Index>(options_.size());
    for (auto h = static_cast<Index>(choice_.size()) - 1; h >= 0; --h) {
        auto& c = choice_[static_cast<std::size_t>(h)];
        if (free_node(h) && c < options) {
            ++c;
            reset_from(h + 1);
            rebuild();
            return;
        }
    }
    done_ = true;
}

double TreeEnumerator::count() const
{
    double n = 1.0;
    for (int r = 1; r <= depth_; ++r)
        n = (allow_partial_ ? 1.0 : 0.0) + static_cast<double>(options_.size()) * n * n;
    return n;
}

TreeEnumerator enumerate_trees(int depth, std::vector<std::vector<double>> candidates_per_var, bool allow_partial)
{
    return TreeEnumerator(depth, std::move(candidates_per_var), allow_partial);
}

} // namespace foct
