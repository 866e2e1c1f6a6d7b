#include <doctest.h>

#include <numeric>

#include "foct/causal.hpp"
#include "helpers.hpp"

using namespace foct;

namespace {

/// x1 on an even ten-point grid over [0, 1], treatment alternating in blocks.
Dataset noiseless(double beta, Index n = 200)
{
    MatrixXd x(n, 1);
    VectorXd t(n), y(n);
    for (Index i = 0; i < n; ++i) {
        x(i, 0) = static_cast<double>(i % 10) / 9.0;
        t[i] = (i / 10) % 2 == 0 ? 1.0 : 0.0;
        y[i] = t[i] + x(i, 0) + beta * t[i] * x(i, 0);
    }
    return Dataset(x, t, y);
}

TreeStructure stump_tree() { return TreeStructure(1, {Split{0, 0.0}}); }
TreeStructure split_tree() { return TreeStructure(1, {Split{0, 0.5}}); }

} // namespace

TEST_CASE("single-leaf noiseless model gives tau 1.5")
{
    auto ds = noiseless(1.0);
    CHECK(ds.x().col(0).mean() == doctest::Approx(0.5));
    auto model = make_model(ds, TreeStructure(0), FusionPattern::all_distinct(4, 1), 0.0);
    auto effects = estimate_sate(ds, model);
    REQUIRE(effects.size() == 1);
    CHECK(effects[0].tau_hat == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(effects[0].n == 200);
}

TEST_CASE("zero interactions make tau equal mu")
{
    std::mt19937_64 rng(3);
    auto ds = testing::random_dataset(rng, 60, 2);
    auto model = make_model(ds, TreeStructure(1, {Split{0, 0.0}}), FusionPattern::all_distinct(6, 2), 0.0);
    model.fit.coef.gamma.rightCols(2).setZero();
    for (const auto& e : estimate_sate(ds, model))
        CHECK(e.tau_hat == e.mu_hat);
}

TEST_CASE("tau is recomputable from its parts")
{
    std::mt19937_64 rng(5);
    auto ds = testing::random_dataset(rng, 80, 3);
    TreeStructure tree(2, {Split{0, 0.0}, Split{1, 0.0}, Split{1, 0.0}});
    auto model = make_model(ds, tree, FusionPattern::all_distinct(8, 4), 0.0);
    for (const auto& e : estimate_sate(ds, model))
        CHECK(std::abs(e.tau_hat - (e.mu_hat + e.beta_hat.dot(e.xbar))) < 1e-12);
}

TEST_CASE("estimate_sate ignores row order")
{
    std::mt19937_64 rng(7);
    auto ds = testing::random_dataset(rng, 50, 2);
    auto model = make_model(ds, stump_tree(), FusionPattern::all_distinct(6, 2), 0.0);
    std::vector<Index> perm(50);
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    auto a = estimate_sate(ds, model);
    auto b = estimate_sate(ds.subset(perm), model);
    for (std::size_t l = 0; l < a.size(); ++l)
        CHECK(a[l].tau_hat == doctest::Approx(b[l].tau_hat).epsilon(1e-13));
}

TEST_CASE("empty leaves are an error")
{
    auto ds = noiseless(0.0);
    auto model = make_model(ds, TreeStructure(1, {Split{0, 5.0}}), FusionPattern::all_distinct(4, 2), 0.0);
    CHECK_THROWS_AS(estimate_sate(ds, model), InvalidInput);
}

TEST_CASE("noiseless data without interactions gives degenerate intervals")
{
    auto ds = noiseless(0.0);
    auto model = make_model(ds, split_tree(), FusionPattern::all_distinct(4, 2), 0.0);
    auto result = bootstrap_ci(ds, model, BootstrapOptions{50, 0.1, 11, 1});
    for (const auto& e : result.effects) {
        REQUIRE(e.ci);
        CHECK(e.ci->first == doctest::Approx(e.tau_hat).epsilon(1e-9));
        CHECK(e.ci->second == doctest::Approx(e.tau_hat).epsilon(1e-9));
        CHECK(e.tau_hat == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("bootstrap intervals bracket the bootstrap median")
{
    std::mt19937_64 rng(13);
    auto ds = testing::random_dataset(rng, 120, 2);
    auto model = make_model(ds, stump_tree(), FusionPattern::all_distinct(6, 2), 0.0);
    auto result = bootstrap_ci(ds, model, BootstrapOptions{200, 0.1, 3, 1});
    for (Index l = 0; l < result.draws.cols(); ++l) {
        std::vector<double> col(result.draws.col(l).data(), result.draws.col(l).data() + result.draws.rows());
        double median = quantile(col, 0.5);
        const auto& ci = *result.effects[static_cast<std::size_t>(l)].ci;
        CHECK(ci.first <= median);
        CHECK(median <= ci.second);
    }
}

TEST_CASE("more replicates only append draws, at any thread count")
{
    std::mt19937_64 rng(17);
    auto ds = testing::random_dataset(rng, 60, 1);
    auto model = make_model(ds, stump_tree(), FusionPattern::all_distinct(4, 2), 0.0);
    auto small = bootstrap_ci(ds, model, BootstrapOptions{10, 0.1, 99, 1});
    auto large = bootstrap_ci(ds, model, BootstrapOptions{25, 0.1, 99, 3});
    CHECK(large.draws.topRows(10) == small.draws);
}

TEST_CASE("bootstrap argument checks and redraw exhaustion")
{
    auto ds = noiseless(0.0);
    auto model = make_model(ds, split_tree(), FusionPattern::all_distinct(4, 2), 0.0);
    CHECK_THROWS_AS(bootstrap_ci(ds, model, BootstrapOptions{1, 0.1, 0, 1}), InvalidInput);
    CHECK_THROWS_AS(bootstrap_ci(ds, model, BootstrapOptions{10, 0.0, 0, 1}), InvalidInput);
    CHECK_THROWS_AS(bootstrap_ci(ds, model, BootstrapOptions{10, 1.0, 0, 1}), InvalidInput);

    // A leaf without treated rows cannot be resampled into a valid replicate.
    VectorXd t = ds.t();
    for (Index i = 0; i < ds.n(); ++i)
        if (ds.x()(i, 0) >= 0.5)
            t[i] = 0.0;
    Dataset untreated(ds.x(), t, ds.y());
    auto m2 = make_model(untreated, split_tree(), FusionPattern::all_distinct(4, 2), 0.0);
    CHECK_THROWS_AS(bootstrap_ci(untreated, m2, BootstrapOptions{5, 0.1, 0, 1}), BudgetExceeded);
}

TEST_CASE("type-7 quantiles")
{
    CHECK(quantile({3, 1, 2, 4}, 0.5) == 2.5);
    CHECK(quantile({3, 1, 2, 4}, 0.0) == 1.0);
    CHECK(quantile({3, 1, 2, 4}, 1.0) == 4.0);
    CHECK(quantile({10, 20}, 0.25) == 12.5);
}
