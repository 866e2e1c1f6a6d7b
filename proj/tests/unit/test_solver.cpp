#include <doctest.h>

#include <map>

#include "foct/simlab.hpp"
#include "oracles.hpp"

using namespace foct;

TEST_CASE("depth-1 solve equals exhaustive stump enumeration")
{
    std::mt19937_64 rng(101);
    for (int rep = 0; rep < 25; ++rep) {
        auto ds = testing::random_dataset(rng, 30, 2, 2);
        SolveConfig cfg;
        cfg.depth = 1;
        cfg.thresholds = Midpoints{};
        auto report = solve(ds, cfg);
        CHECK(report.certified_optimal);
        double oracle = testing::brute_force_stump_objective(ds, 1);
        CHECK(testing::rel_diff(report.best.fit.objective, oracle) < 1e-9);
    }
}

TEST_CASE("n_min is respected and infeasibility reported")
{
    std::mt19937_64 rng(103);
    auto ds = testing::random_dataset(rng, 30, 2);
    SolveConfig cfg;
    cfg.depth = 2;
    cfg.n_min = 8;
    auto report = solve(ds, cfg);
    for (Index c : report.best.leaf_sizes)
        CHECK(c >= 8);
    cfg.n_min = 31;
    CHECK_THROWS_AS(solve(ds, cfg), Infeasible);
}

TEST_CASE("disabling pruning changes counters but not the answer")
{
    std::mt19937_64 rng(107);
    for (int rep = 0; rep < 4; ++rep) {
        auto ds = testing::random_dataset(rng, 24, 2, 1);
        SolveConfig cfg;
        cfg.depth = 2;
        cfg.lambda = 0.01;
        cfg.thresholds = QuantileGrid{4};
        cfg.top_k_fusion = 2;
        auto pruned = solve(ds, cfg);
        cfg.prune = false;
        auto full = solve(ds, cfg);
        CHECK(std::abs(pruned.best.fit.objective - full.best.fit.objective) < 1e-9);
        CHECK(full.trees_evaluated == full.trees_total);
        CHECK(pruned.trees_evaluated <= full.trees_evaluated);
    }
}

TEST_CASE("global solve is never worse than greedy CART at lambda 0")
{
    std::mt19937_64 rng(109);
    for (int rep = 0; rep < 10; ++rep) {
        auto ds = testing::random_dataset(rng, 60, 3);
        SolveConfig cfg;
        cfg.thresholds = QuantileGrid{8};
        auto report = solve(ds, cfg);
        auto cart = fit_cart(ds, CartConfig{2, 1, QuantileGrid{8}});
        CHECK(report.best.fit.objective <= testing::unfused_objective(ds, cart.tree) + 1e-9);
    }
}

TEST_CASE("solve is identical across thread counts")
{
    std::mt19937_64 rng(113);
    auto ds = testing::random_dataset(rng, 50, 2);
    SolveConfig cfg;
    cfg.lambda = 0.002;
    cfg.thresholds = QuantileGrid{6};
    cfg.threads = 1;
    auto a = solve(ds, cfg);
    cfg.threads = 4;
    auto b = solve(ds, cfg);
    CHECK(a.best.tree == b.best.tree);
    CHECK(a.best.pattern == b.best.pattern);
    CHECK(a.best.fit.objective == b.best.fit.objective);
    CHECK(a.best.fit.coef.gamma == b.best.fit.coef.gamma);
}

TEST_CASE("penalty count falls along a lambda ladder")
{
    std::mt19937_64 rng(127);
    auto ds = testing::random_dataset(rng, 40, 1);
    SolveConfig cfg;
    cfg.depth = 2;
    cfg.thresholds = QuantileGrid{4};
    cfg.fusion = ExactFusion{};
    SearchSpace space(ds, cfg.depth, cfg.n_min, cfg.thresholds);
    Index previous = std::numeric_limits<Index>::max();
    for (double lambda : {0.0, 0.001, 0.003, 0.01, 0.03, 0.1, 1.0}) {
        cfg.lambda = lambda;
        auto r = solve(ds, cfg, space);
        CHECK(r.best.fit.penalty_count <= previous);
        previous = r.best.fit.penalty_count;
    }
}

TEST_CASE("noiseless tree data is recovered exactly")
{
    auto sc = SimScenario::make(120, 0.3);
    sc.noise_sd = 0.0;
    sc.seed = 5;
    auto draw = generate(sc);
    SolveConfig cfg;
    cfg.depth = 2;
    cfg.lambda = 1e-3;
    cfg.thresholds = Midpoints{};
    cfg.top_k_fusion = 5;
    auto report = solve(draw.data, cfg);
    auto truth = assign(true_tree(3), draw.data);
    auto found = assign(report.best.tree, draw.data);
    REQUIRE(found.leaf_count() == 4);
    // Same induced partition, up to relabeling of leaves.
    std::map<Index, Index> relabel;
    bool same = true;
    for (Index i = 0; i < draw.data.n(); ++i) {
        auto [it, fresh] = relabel.emplace(found.assignment[static_cast<std::size_t>(i)],
                                           truth.assignment[static_cast<std::size_t>(i)]);
        same = same && it->second == truth.assignment[static_cast<std::size_t>(i)];
    }
    CHECK(same);
    CHECK(report.best.fit.sse < 1e-16 * draw.data.y().squaredNorm());
    // The default parameters leave delta fully shared, alpha_1 and alpha_2
    // shared, and beta in two classes.
    auto gamma = truth_model(sc).fit.coef.gamma;
    Index shared = 0;
    for (Index j = 0; j < gamma.cols(); ++j) {
        std::vector<Index> labels;
        for (Index l = 0; l < 4; ++l) {
            Index label = l;
            for (Index e = 0; e < l; ++e)
                if (gamma(e, j) == gamma(l, j)) {
                    label = labels[static_cast<std::size_t>(e)];
                    break;
                }
            labels.push_back(label);
        }
        shared += unfused_pairs(canonical_partition(labels));
    }
    // mu, alpha_3, beta_1 and beta_3 differ across leaves: 4 + 6 + 4 + 4.
    CHECK(shared == 18);
    CHECK(report.best.fit.penalty_count == shared);
    CHECK(report.best.fit.objective == doctest::Approx(cfg.lambda * static_cast<double>(shared)).epsilon(1e-8));
}

TEST_CASE("search space agrees with the brute-force tree enumerator")
{
    std::mt19937_64 rng(131);
    auto ds = testing::random_dataset(rng, 12, 2, 1);
    for (int depth = 0; depth <= 2; ++depth) {
        SearchSpace space(ds, depth, 1, Midpoints{});
        auto all = space.trees_below(std::numeric_limits<double>::infinity());
        CHECK(static_cast<double>(all.size()) == space.tree_count());
        for (const auto& c : all) {
            auto m = assign(c.tree, ds);
            double s = 0.0;
            for (Index l = 0; l < m.leaf_count(); ++l) {
                CHECK(m.leaf_counts[static_cast<std::size_t>(l)] > 0);
                auto [z, y] = testing::rows_where(ds, [&](Index i) { return m.assignment[static_cast<std::size_t>(i)] == l; });
                s += testing::svd_sse(z, y);
            }
            CHECK(std::abs(s - c.unfused_sse) < 1e-9 * std::max(1.0, s));
        }
        // Best tree equals the minimum over the list.
        auto top = space.best_trees(3);
        REQUIRE(!top.empty());
        CHECK(top.front().unfused_sse == all.front().unfused_sse);
    }
}
