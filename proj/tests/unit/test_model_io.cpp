#include <doctest.h>

#include <filesystem>

#include "foct/model_io.hpp"
#include "helpers.hpp"

using namespace foct;

namespace {

std::filesystem::path scratch(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / "foct_model_io";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("tree and pattern survive a JSON round trip")
{
    TreeStructure tree(2, {Split{1, -0.25}, std::nullopt, Split{0, 1.5}});
    CHECK(tree_from_json(tree_to_json(tree)).splits() == tree.splits());

    auto leaves = tree.active_leaves();
    REQUIRE(leaves.size() == 3);
    std::vector<Partition> parts(4, Partition{0, 1, 2});
    parts[0] = {0, 0, 0};
    parts[3] = {0, 1, 0};
    FusionPattern pattern(parts);
    auto back = pattern_from_json(pattern_to_json(pattern, leaves), leaves);
    for (Index j = 0; j < 4; ++j)
        CHECK(back.partition(j) == pattern.partition(j));

    Json bad = tree_to_json(tree);
    bad["depth"] = 7;
    CHECK_THROWS_AS(tree_from_json(bad), InvalidInput);
}

TEST_CASE("saved model reproduces predictions and BIC")
{
    std::mt19937_64 rng(12);
    auto raw = testing::random_dataset(rng, 90, 2);
    auto [ds, st] = standardize(raw);
    SolveConfig cfg;
    cfg.depth = 2;
    cfg.lambda = 0.004;
    cfg.thresholds = QuantileGrid{6};
    auto report = solve(ds, cfg);
    const auto& model = report.best;

    auto path = scratch("model.json");
    write_json(model_to_json(model, {"a", "b"}, st), path);
    auto loaded = model_from_json(read_json(path));

    CHECK(loaded.feature_names == std::vector<std::string>{"a", "b"});
    REQUIRE(loaded.standardizer);
    CHECK(loaded.standardizer->means == st.means);
    CHECK(*loaded.standardizer->y_sd == *st.y_sd);
    CHECK(loaded.model.tree.splits() == model.tree.splits());
    CHECK(loaded.model.fit.coef.gamma == model.fit.coef.gamma);
    CHECK(loaded.model.leaf_means == model.leaf_means);
    CHECK(predict_tau(loaded.model, ds) == predict_tau(model, ds));

    auto original = bic(ds, model);
    auto membership = assign(loaded.model.tree, ds);
    double sse = recompute_sse(ds, membership, loaded.model.fit.coef);
    auto recomputed = bic_formula(sse, ds.n(), loaded.model.pattern.distinct_count());
    CHECK(recomputed == doctest::Approx(original.bic).epsilon(1e-12));
    CHECK(loaded.model.pattern.distinct_count() == original.df);
}

TEST_CASE("schema problems are reported")
{
    std::mt19937_64 rng(1);
    auto ds = testing::random_dataset(rng, 30, 1);
    auto model = make_model(ds, TreeStructure(1, {Split{0, 0.0}}), FusionPattern::all_distinct(4, 2), 0.0);
    Json j = model_to_json(model, {"x"});
    Json wrong = j;
    wrong["schema_version"] = 99;
    CHECK_THROWS_AS(model_from_json(wrong), InvalidInput);
    Json missing = j;
    missing.erase("tree");
    CHECK_THROWS(model_from_json(missing));
    CHECK_THROWS_AS(read_json(scratch("does_not_exist.json")), InvalidInput);
    CHECK(coefficient_names({"age"}) == std::vector<std::string>{"intercept", "T", "age", "T:age"});
}
