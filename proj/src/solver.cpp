#include "foct/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>
#include <set>

namespace foct {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kBatch = 32;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

} // namespace

void SolveConfig::validate() const
{
    if (depth < 0 || depth > kMaxDepth)
        throw InvalidInput("depth must lie in [0, " + std::to_string(kMaxDepth) + "]");
    if (n_min < 1)
        throw InvalidInput("n_min must be at least 1");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw InvalidInput("lambda must be a finite nonnegative number");
    if (top_k_fusion < 1)
        throw InvalidInput("top_k_fusion must be at least 1");
    if (!(time_limit > 0.0))
        throw InvalidInput("time_limit must be positive");
}

struct SearchSpace::Node {
    double leaf_sse = kInf;
    double best = kInf;
    double count = 0.0;
    struct Option {
        Split split;
        std::unique_ptr<Node> left;
        std::unique_ptr<Node> right;
    };
    std::vector<Option> options;
};

namespace {

using Node = SearchSpace::Node;

std::unique_ptr<Node> build_node(const Dataset& ds, const MatrixXd& design, std::vector<Index> rows, int remaining,
                                 Index n_min, const ThresholdMode& mode)
{
    auto node = std::make_unique<Node>();
    const auto n = static_cast<Index>(rows.size());
    if (n >= n_min && n > 0) {
        node->leaf_sse = leaf_ols_sse(design, ds.y(), rows);
        node->count = 1.0;
    }
    node->best = node->leaf_sse;
    if (remaining == 0 || n < 2)
        return node;

    for (Index k = 0; k < ds.d(); ++k) {
        std::vector<Index> by_value = rows;
        std::stable_sort(by_value.begin(), by_value.end(),
                         [&](Index a, Index b) { return ds.x()(a, k) < ds.x()(b, k); });
        std::vector<double> values(by_value.size());
        for (std::size_t r = 0; r < by_value.size(); ++r)
            values[r] = ds.x()(by_value[r], k);
        Index previous_left = -1;
        for (double b : candidate_thresholds(values, mode)) {
            auto left_count = static_cast<Index>(std::lower_bound(values.begin(), values.end(), b) - values.begin());
            if (left_count == 0 || left_count == n || left_count == previous_left)
                continue;
            previous_left = left_count;
            std::vector<Index> left(by_value.begin(), by_value.begin() + left_count);
            std::vector<Index> right(by_value.begin() + left_count, by_value.end());
            std::sort(left.begin(), left.end());
            std::sort(right.begin(), right.end());
            auto l = build_node(ds, design, std::move(left), remaining - 1, n_min, mode);
            auto r = build_node(ds, design, std::move(right), remaining - 1, n_min, mode);
            if (!std::isfinite(l->best) || !std::isfinite(r->best))
                continue;
            double combined = l->best + r->best;
            node->count += l->count * r->count;
            if (combined < node->best)
                node->best = combined;
            node->options.push_back({Split{k, b}, std::move(l), std::move(r)});
        }
    }
    return node;
}

struct Walker {
    const std::function<double()>& bound;
    const std::function<void(const TreeStructure&, double)>& visit;
    TreeStructure tree;

    void walk(const Node& node, Index heap, double offset, const std::function<void(double)>& emit)
    {
        if (offset + node.leaf_sse < bound()) {
            if (heap < tree.branch_count())
                tree.set_split(heap, std::nullopt);
            emit(node.leaf_sse);
        }
        if (heap >= tree.branch_count())
            return;
        for (const auto& opt : node.options) {
            if (offset + opt.left->best + opt.right->best >= bound())
                continue;
            tree.set_split(heap, opt.split);
            const Node& right = *opt.right;
            walk(*opt.left, 2 * heap + 1, offset + right.best, [&](double left_sse) {
                walk(right, 2 * heap + 2, offset + left_sse, [&](double right_sse) { emit(left_sse + right_sse); });
            });
        }
    }
};

bool candidate_less(const SearchSpace::Candidate& a, const SearchSpace::Candidate& b)
{
    if (a.unfused_sse != b.unfused_sse)
        return a.unfused_sse < b.unfused_sse;
    return tree_key_less(a.tree, b.tree);
}

} // namespace

SearchSpace::SearchSpace(const Dataset& ds, int depth, Index n_min, const ThresholdMode& thresholds)
    : depth_(depth), n_min_(n_min), baseline_(baseline_loss(ds))
{
    if (depth < 0 || depth > kMaxDepth)
        throw InvalidInput("depth must lie in [0, " + std::to_string(kMaxDepth) + "]");
    if (n_min < 1)
        throw InvalidInput("n_min must be at least 1");
    std::vector<Index> rows(static_cast<std::size_t>(ds.n()));
    std::iota(rows.begin(), rows.end(), Index{0});
    root_ = build_node(ds, design_matrix(ds), std::move(rows), depth, n_min, thresholds);
}

SearchSpace::~SearchSpace() = default;
SearchSpace::SearchSpace(SearchSpace&&) noexcept = default;
SearchSpace& SearchSpace::operator=(SearchSpace&&) noexcept = default;

double SearchSpace::best_unfused_sse() const { return root_->best; }
double SearchSpace::tree_count() const { return root_->count; }

void SearchSpace::enumerate(const std::function<double()>& bound,
                            const std::function<void(const TreeStructure&, double)>& visit) const
{
    Walker w{bound, visit, TreeStructure(depth_)};
    w.walk(*root_, 0, 0.0, [&](double sse) { visit(w.tree, sse); });
}

std::vector<SearchSpace::Candidate> SearchSpace::best_trees(int k) const
{
    auto worse = [](const Candidate& a, const Candidate& b) { return a.unfused_sse < b.unfused_sse; };
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> heap(worse);
    double bound = kInf;
    enumerate([&] { return bound; },
              [&](const TreeStructure& tree, double sse) {
                  heap.push({tree, sse});
                  if (static_cast<int>(heap.size()) > k)
                      heap.pop();
                  if (static_cast<int>(heap.size()) == k)
                      bound = heap.top().unfused_sse;
              });
    std::vector<Candidate> out;
    while (!heap.empty()) {
        out.push_back(heap.top());
        heap.pop();
    }
    std::sort(out.begin(), out.end(), candidate_less);
    return out;
}

std::vector<SearchSpace::Candidate> SearchSpace::trees_below(double bound) const
{
    std::vector<Candidate> out;
    enumerate([&] { return bound; }, [&](const TreeStructure& tree, double sse) { out.push_back({tree, sse}); });
    std::sort(out.begin(), out.end(), candidate_less);
    return out;
}

namespace {

struct Evaluated {
    TreeStructure tree;
    FusionPattern pattern;
    double objective = kInf;
    Index penalty = 0;
};

bool better_tree(const Evaluated& a, const Evaluated& b)
{
    if (!objectives_tied(a.objective, b.objective))
        return a.objective < b.objective;
    return tree_key_less(a.tree, b.tree);
}

} // namespace

SolveReport solve(const Dataset& ds, const SolveConfig& cfg, const SearchSpace& space)
{
    const auto start = Clock::now();
    cfg.validate();
    if (space.depth() != cfg.depth || space.n_min() != cfg.n_min)
        throw InvalidInput("search space was built for a different depth or n_min");
    if (ds.n() < cfg.n_min || !std::isfinite(space.best_unfused_sse()))
        throw Infeasible("no tree of depth " + std::to_string(cfg.depth) + " has every leaf with at least " +
                         std::to_string(cfg.n_min) + " rows");

    const double norm = loss_normalizer(space.baseline_sse());
    const MatrixXd design = design_matrix(ds);
    const Index p = ds.p();

    auto evaluate = [&](const SearchSpace::Candidate& c) {
        Evaluated e{c.tree, {}, kInf, 0};
        auto membership = assign(c.tree, ds);
        if (cfg.lambda == 0.0) {
            e.pattern = FusionPattern::all_distinct(p, membership.leaf_count());
            e.penalty = e.pattern.penalty_count();
            e.objective = c.unfused_sse / norm;
            return e;
        }
        FusedSystem system(design, ds.y(), membership);
        auto score = search_patterns(system, space.baseline_sse(), cfg.lambda, cfg.fusion, 1);
        e.pattern = std::move(score.pattern);
        e.objective = score.objective;
        e.penalty = score.penalty;
        return e;
    };

    SolveReport report;
    report.trees_total = static_cast<Index>(space.tree_count());
    std::optional<Evaluated> incumbent;
    auto absorb = [&](std::vector<Evaluated>& batch) {
        for (auto& e : batch)
            if (!incumbent || better_tree(e, *incumbent))
                incumbent = std::move(e);
    };

    // Incumbent from the trees with the smallest unfused loss.
    auto top = space.best_trees(cfg.top_k_fusion);
    {
        std::vector<Evaluated> results(top.size());
        parallel_for(top.size(), cfg.threads, [&](std::size_t i) { results[i] = evaluate(top[i]); });
        report.trees_evaluated += static_cast<Index>(top.size());
        absorb(results);
    }
    std::set<std::vector<std::pair<Index, double>>> seen;
    for (const auto& c : top)
        seen.insert(c.tree.order_key());

    // Certification: fusion never lowers SSE and the penalty is nonnegative,
    // so a tree whose unfused loss exceeds the incumbent cannot win.
    bool timed_out = seconds_since(start) > cfg.time_limit;
    auto prunable = [&](double unfused_sse) {
        double lb = unfused_sse / norm;
        return cfg.prune && lb > incumbent->objective && !objectives_tied(lb, incumbent->objective);
    };
    Index unprocessed = 0;
    if (!timed_out) {
        double bound = cfg.prune ? incumbent->objective * norm * (1.0 + 1e-9) + 1e-300 : kInf;
        auto queue = space.trees_below(bound);
        std::vector<SearchSpace::Candidate> pending;
        pending.reserve(queue.size());
        for (auto& c : queue)
            if (!seen.count(c.tree.order_key()))
                pending.push_back(std::move(c));

        for (std::size_t begin = 0; begin < pending.size(); begin += kBatch) {
            if (seconds_since(start) > cfg.time_limit) {
                timed_out = true;
                unprocessed = static_cast<Index>(pending.size() - begin);
                break;
            }
            std::vector<const SearchSpace::Candidate*> work;
            for (std::size_t i = begin; i < std::min(pending.size(), begin + kBatch); ++i)
                if (!prunable(pending[i].unfused_sse))
                    work.push_back(&pending[i]);
            std::vector<Evaluated> results(work.size());
            parallel_for(work.size(), cfg.threads, [&](std::size_t i) { results[i] = evaluate(*work[i]); });
            report.trees_evaluated += static_cast<Index>(work.size());
            absorb(results);
        }
    }

    report.certified_optimal = !timed_out;
    report.trees_pruned = std::max<Index>(0, report.trees_total - report.trees_evaluated - unprocessed);
    report.best = make_model(ds, incumbent->tree, incumbent->pattern, cfg.lambda, space.baseline_sse());
    report.wall_time = seconds_since(start);
    return report;
}

SolveReport solve(const Dataset& ds, const SolveConfig& cfg)
{
    cfg.validate();
    if (ds.n() < cfg.n_min)
        throw Infeasible("dataset has fewer rows than n_min");
    SearchSpace space(ds, cfg.depth, cfg.n_min, cfg.thresholds);
    return solve(ds, cfg, space);
}

} // namespace foct
