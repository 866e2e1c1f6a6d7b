#include <doctest.h>

#include "foct/fitting.hpp"
#include "helpers.hpp"

using namespace foct;

namespace {

/// Merged-column fused fit computed from scratch with an SVD solve.
double oracle_fused_sse(const Dataset& ds, const Membership& m, const FusionPattern& pattern)
{
    std::vector<Index> offset{0};
    for (Index j = 0; j < ds.p(); ++j)
        offset.push_back(offset.back() + pattern.class_count(j));
    MatrixXd a = MatrixXd::Zero(ds.n(), offset.back());
    for (Index i = 0; i < ds.n(); ++i) {
        VectorXd z = design_row(ds, i);
        Index slot = m.assignment[static_cast<std::size_t>(i)];
        for (Index j = 0; j < ds.p(); ++j)
            a(i, offset[static_cast<std::size_t>(j)] + pattern.partition(j)[static_cast<std::size_t>(slot)]) = z[j];
    }
    return testing::svd_sse(a, ds.y());
}

FusionPattern random_pattern(std::mt19937_64& rng, Index p, Index leaves)
{
    const auto& all = set_partitions(leaves);
    std::vector<Partition> parts;
    for (Index j = 0; j < p; ++j)
        parts.push_back(all[rng() % all.size()]);
    return FusionPattern(parts);
}

TreeStructure two_leaf_tree() { return TreeStructure(1, {Split{0, 0.0}}); }
TreeStructure four_leaf_tree() { return TreeStructure(2, {Split{0, 0.0}, Split{1, 0.0}, Split{1, 0.0}}); }

} // namespace

TEST_CASE("set partitions and counts")
{
    for (Index l = 1; l <= 6; ++l)
        CHECK(static_cast<double>(set_partitions(l).size()) == bell_number(l));
    CHECK(bell_number(4) == 15.0);
    CHECK(canonical_partition({5, 5, 2, 7}) == Partition{0, 0, 1, 2});
    CHECK(unfused_pairs({0, 0, 1, 2}) == 5);
    CHECK(unfused_pairs({0, 0, 0}) == 0);
}

TEST_CASE("penalty and df of extreme patterns")
{
    for (Index d = 1; d <= 3; ++d)
        for (Index l = 1; l <= 4; ++l) {
            Index p = 2 * d + 2;
            CHECK(FusionPattern::all_distinct(p, l).penalty_count() == p * l * (l - 1) / 2);
            CHECK(FusionPattern::all_fused(p, l).penalty_count() == 0);
            CHECK(FusionPattern::all_fused(p, l).distinct_count() == p);
            CHECK(FusionPattern::all_distinct(p, l).distinct_count() == p * l);
        }
}

TEST_CASE("penalty counts unordered unfused pairs")
{
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 100; ++rep) {
        auto pattern = random_pattern(rng, 6, 4);
        Index expected = 0;
        for (Index j = 0; j < 6; ++j) {
            Index fused_pairs = 0;
            for (const auto& cls : pattern.classes(j))
                fused_pairs += static_cast<Index>(cls.size() * (cls.size() - 1) / 2);
            expected += 6 - fused_pairs;
        }
        CHECK(pattern.penalty_count() == expected);
    }
}

TEST_CASE("baseline loss")
{
    MatrixXd x(4, 1);
    x << 0, 0, 1, 1;
    VectorXd t(4), y(4);
    t << 0, 1, 0, 1;
    y << 0, 1, 1, 2;
    Dataset ds(x, t, y);
    CHECK(baseline_loss(ds) == doctest::Approx(0.0).epsilon(1e-20));
    CHECK(loss_normalizer(0.0) == 1.0);

    std::mt19937_64 rng(8);
    auto noisy = testing::random_dataset(rng, 40, 2);
    auto fit = fit_fused(noisy, TreeStructure(0), FusionPattern::all_distinct(6, 1), 0.0);
    CHECK(testing::rel_diff(fit.sse, baseline_loss(noisy)) < 1e-10);
    CHECK(testing::rel_diff(baseline_loss(noisy), testing::svd_sse(design_matrix(noisy), noisy.y())) < 1e-10);
}

TEST_CASE("all-distinct fit equals per-leaf OLS")
{
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 30; ++rep) {
        auto ds = testing::random_dataset(rng, 60, 2);
        auto tree = four_leaf_tree();
        auto m = assign(tree, ds);
        auto fit = fit_fused(ds, tree, FusionPattern::all_distinct(ds.p(), m.leaf_count()), 0.0);
        for (Index l = 0; l < m.leaf_count(); ++l) {
            auto [z, y] = testing::rows_where(ds, [&](Index i) { return m.assignment[static_cast<std::size_t>(i)] == l; });
            if (z.rows() < z.cols())
                continue;  // rank-deficient leaves have non-unique coefficients
            VectorXd ols = testing::svd_solve(z, y);
            for (Index j = 0; j < ds.p(); ++j)
                CHECK(std::abs(fit.coef.gamma(l, j) - ols[j]) < 1e-8 * std::max(1.0, std::abs(ols[j])));
        }
    }
}

TEST_CASE("all-fused fit equals the pooled fit")
{
    std::mt19937_64 rng(13);
    auto ds = testing::random_dataset(rng, 50, 2);
    auto fit = fit_fused(ds, four_leaf_tree(), FusionPattern::all_fused(ds.p(), 4), 0.3);
    VectorXd pooled = testing::svd_solve(design_matrix(ds), ds.y());
    for (Index l = 0; l < 4; ++l) {
        CHECK(fit.coef.gamma.row(l) == fit.coef.gamma.row(0));
        for (Index j = 0; j < ds.p(); ++j)
            CHECK(std::abs(fit.coef.gamma(l, j) - pooled[j]) < 1e-9);
    }
    CHECK(fit.normalized_loss == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(fit.objective == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("fusing only the interaction matches the normal equations")
{
    // 12 rows, two leaves split on x at 0, distinct beta per leaf.
    MatrixXd x(12, 1);
    VectorXd t(12), y(12);
    double xs[12] = {-2.1, -1.7, -1.2, -0.9, -0.5, -0.2, 0.3, 0.6, 0.8, 1.1, 1.5, 2.2};
    for (Index i = 0; i < 12; ++i) {
        x(i, 0) = xs[i];
        t[i] = (i % 3 == 0 || i % 4 == 1) ? 1.0 : 0.0;
        double beta = xs[i] < 0 ? 0.5 : 2.0;
        y[i] = 1.0 + 0.7 * t[i] - 0.4 * xs[i] + beta * t[i] * xs[i] + 0.05 * std::sin(3.0 * i);
    }
    Dataset ds(x, t, y);
    TreeStructure tree = two_leaf_tree();
    std::vector<Partition> parts(4, Partition{0, 1});
    parts[3] = Partition{0, 0};
    FusionPattern pattern(parts);
    auto fit = fit_fused(ds, tree, pattern, 0.0);

    // Columns: delta_L, delta_R, mu_L, mu_R, alpha_L, alpha_R, beta (shared).
    MatrixXd a = MatrixXd::Zero(12, 7);
    for (Index i = 0; i < 12; ++i) {
        Index side = xs[i] < 0 ? 0 : 1;
        a(i, side) = 1.0;
        a(i, 2 + side) = t[i];
        a(i, 4 + side) = xs[i];
        a(i, 6) = t[i] * xs[i];
    }
    VectorXd normal = (a.transpose() * a).ldlt().solve(a.transpose() * y);
    CHECK(fit.coef.gamma(0, 3) == fit.coef.gamma(1, 3));
    CHECK(fit.coef.gamma(0, 3) == doctest::Approx(normal[6]).epsilon(1e-9));
    CHECK(fit.coef.gamma(1, 2) == doctest::Approx(normal[5]).epsilon(1e-9));
    CHECK(fit.penalty_count == 3);
}

TEST_CASE("fit result invariants on fuzzed patterns")
{
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 100; ++rep) {
        auto ds = testing::random_dataset(rng, 40, 1 + rep % 2);
        auto tree = rep % 2 ? four_leaf_tree() : two_leaf_tree();
        if (ds.d() < 2)
            tree = two_leaf_tree();
        auto m = assign(tree, ds);
        auto pattern = random_pattern(rng, ds.p(), m.leaf_count());
        double lambda = 0.01 * (rep % 5);
        auto fit = fit_fused(ds, m, pattern, lambda, baseline_loss(ds));
        CHECK(testing::rel_diff(fit.sse, recompute_sse(ds, m, fit.coef)) < 1e-9);
        CHECK(testing::rel_diff(fit.sse, oracle_fused_sse(ds, m, pattern)) < 1e-9);
        CHECK(fit.objective == doctest::Approx(fit.normalized_loss + lambda * pattern.penalty_count()));
        for (Index j = 0; j < ds.p(); ++j)
            for (const auto& cls : pattern.classes(j))
                for (Index slot : cls)
                    CHECK(fit.coef.gamma(slot, j) == fit.coef.gamma(cls.front(), j));

        FusedSystem system(design_matrix(ds), ds.y(), m);
        CHECK(testing::rel_diff(system.sse(pattern), fit.sse) < 1e-9);
    }
}

TEST_CASE("refining a pattern never raises the SSE")
{
    std::mt19937_64 rng(19);
    for (int rep = 0; rep < 200; ++rep) {
        auto ds = testing::random_dataset(rng, 30, 2);
        auto m = assign(four_leaf_tree(), ds);
        auto coarse = random_pattern(rng, ds.p(), m.leaf_count());
        // Refine one coefficient by splitting a class.
        FusionPattern fine = coarse;
        Index j = static_cast<Index>(rng() % static_cast<std::uint64_t>(ds.p()));
        auto labels = coarse.partition(j);
        Index fresh = *std::max_element(labels.begin(), labels.end()) + 1;
        labels[rng() % labels.size()] = fresh;
        fine.set_partition(j, canonical_partition(labels));
        REQUIRE(fine.refines(coarse));
        double base = baseline_loss(ds);
        double sse_fine = fit_fused(ds, m, fine, 0.0, base).sse;
        double sse_coarse = fit_fused(ds, m, coarse, 0.0, base).sse;
        CHECK(sse_fine <= sse_coarse * (1.0 + 1e-10) + 1e-12);
    }
}

TEST_CASE("coordinate_sse agrees with full fits")
{
    std::mt19937_64 rng(23);
    for (int rep = 0; rep < 20; ++rep) {
        auto ds = testing::random_dataset(rng, 25, 1);
        auto m = assign(TreeStructure(2, {Split{0, 0.0}, Split{0, -0.7}, Split{0, 0.7}}), ds);
        FusedSystem system(design_matrix(ds), ds.y(), m);
        auto pattern = random_pattern(rng, ds.p(), m.leaf_count());
        Index j = rep % ds.p();
        const auto& cands = set_partitions(m.leaf_count());
        auto scores = system.coordinate_sse(pattern, j, cands);
        for (std::size_t c = 0; c < cands.size(); ++c) {
            FusionPattern q = pattern;
            q.set_partition(j, cands[c]);
            CHECK(std::abs(scores[c] - oracle_fused_sse(ds, m, q)) < 1e-8 * std::max(1.0, scores[c]));
        }
    }
}

TEST_CASE("exact fusion search equals brute force")
{
    std::mt19937_64 rng(29);
    for (int rep = 0; rep < 20; ++rep) {
        auto ds = testing::random_dataset(rng, 20, 1);
        auto tree = two_leaf_tree();
        auto m = assign(tree, ds);
        if (m.leaf_counts[0] == 0 || m.leaf_counts[1] == 0)
            continue;
        double base = baseline_loss(ds);
        double lambda = 0.02 * rep;
        double best = std::numeric_limits<double>::infinity();
        for (int mask = 0; mask < 16; ++mask) {
            std::vector<Partition> parts;
            for (int j = 0; j < 4; ++j)
                parts.push_back((mask >> j) & 1 ? Partition{0, 1} : Partition{0, 0});
            FusionPattern q(parts);
            best = std::min(best, oracle_fused_sse(ds, m, q) / base + lambda * q.penalty_count());
        }
        auto exact = search_fusion(ds, tree, lambda, ExactFusion{});
        CHECK(std::abs(exact.fit.objective - best) < 1e-9);
    }
}

TEST_CASE("limits of the penalty")
{
    std::mt19937_64 rng(31);
    auto ds = testing::random_dataset(rng, 40, 1);
    auto tree = two_leaf_tree();
    auto zero = search_fusion(ds, tree, 0.0, ExactFusion{});
    auto m = assign(tree, ds);
    double unfused = fit_fused(ds, m, FusionPattern::all_distinct(4, 2), 0.0, baseline_loss(ds)).normalized_loss;
    CHECK(zero.fit.objective == doctest::Approx(unfused).epsilon(1e-10));
    auto huge = search_fusion(ds, tree, 1e6, DescentFusion{});
    CHECK(huge.pattern == FusionPattern::all_fused(4, 2));
    auto wide = testing::random_dataset(rng, 40, 2);
    CHECK_THROWS_AS(search_fusion(wide, four_leaf_tree(), 0.1, ExactFusion{}), BudgetExceeded);
}

TEST_CASE("descent never beats exact and is thread independent")
{
    std::mt19937_64 rng(37);
    for (int rep = 0; rep < 10; ++rep) {
        auto ds = testing::random_dataset(rng, 30, 1);
        TreeStructure tree(2, {Split{0, 0.0}, Split{0, -0.6}, Split{0, 0.6}});
        double lambda = 0.005 * (rep + 1);
        auto exact = search_fusion(ds, tree, lambda, ExactFusion{});
        auto one = search_fusion(ds, tree, lambda, DescentFusion{50, 8, 5}, 1);
        auto four = search_fusion(ds, tree, lambda, DescentFusion{50, 8, 5}, 4);
        CHECK(one.fit.objective >= exact.fit.objective - 1e-9);
        CHECK(one.pattern == four.pattern);
        CHECK(one.fit.objective == four.fit.objective);
    }
}

TEST_CASE("predictions use training leaf means")
{
    std::mt19937_64 rng(41);
    auto ds = testing::random_dataset(rng, 80, 2);
    auto tree = four_leaf_tree();
    auto model = make_model(ds, tree, FusionPattern::all_distinct(ds.p(), 4), 0.0);
    VectorXd f = predict_mean(model, ds);
    auto m = assign(tree, ds);
    CHECK(testing::rel_diff((ds.y() - f).squaredNorm(), model.fit.sse) < 1e-10);
    VectorXd tau = predict_tau(model, ds);
    for (Index i = 0; i < ds.n(); ++i) {
        Index l = m.assignment[static_cast<std::size_t>(i)];
        double expected = model.fit.coef.gamma(l, 1) + model.fit.coef.gamma.row(l).tail(2).dot(model.leaf_means.row(l));
        CHECK(tau[i] == doctest::Approx(expected).epsilon(1e-14));
    }
}
