#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "foct/solver.hpp"
#include "lp_checker.hpp"

using namespace foct;

namespace {

Dataset tiny()
{
    MatrixXd x(4, 1);
    x << 0.3, -1.2, 2.0, 0.8;
    VectorXd t(4), y(4);
    t << 0, 1, 1, 0;
    y << 1.0, -0.5, 2.5, 0.2;
    return Dataset(x, t, y);
}

std::filesystem::path lp_path(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

} // namespace

TEST_CASE("depth-1, n=4, d=1 program matches the hand count")
{
    // Variables: z 4x2, l 2, a 1x1, d 1, b 1, gam 2x4, w 4x2x4, r 4x1, e 4.
    const Index vars = 8 + 2 + 1 + 1 + 1 + 8 + 32 + 4 + 4;
    const Index binaries = 8 + 2 + 1 + 1 + 4;
    // Rows: assignment 4, z <= l 8, n_min 2, one ancestor per leaf per row
    // (4 right + 4 left), one-hot 1, b <= d 1, no parent rows, four big-M
    // rows for each of the 32 w, two fusion rows for each of the 4 r, and
    // 4 residual definitions.
    const Index rows = 4 + 8 + 2 + 4 + 4 + 1 + 1 + 0 + 128 + 8 + 4;
    CHECK(vars == 61);
    CHECK(rows == 164);

    SolveConfig cfg;
    cfg.depth = 1;
    cfg.lambda = 0.01;
    auto path = lp_path("foct_test_tiny.lp");
    auto summary = emit_lp(tiny(), cfg, path);
    CHECK(summary.n_vars == vars);
    CHECK(summary.n_binaries == binaries);
    CHECK(summary.n_constraints == rows);

    auto parsed = testing::check_lp_file(path);
    CHECK(parsed.errors.empty());
    for (const auto& e : parsed.errors)
        MESSAGE(e);
    CHECK(static_cast<Index>(parsed.variables.size()) == vars);
    CHECK(static_cast<Index>(parsed.binaries.size()) == binaries);
    CHECK(static_cast<Index>(parsed.constraints) == rows);
    CHECK(parsed.objective_linear.size() == 4);
}

TEST_CASE("lambda 0 leaves r out of the objective")
{
    SolveConfig cfg;
    cfg.depth = 2;
    auto path = lp_path("foct_test_l0.lp");
    emit_lp(tiny(), cfg, path);
    auto parsed = testing::check_lp_file(path);
    CHECK(parsed.errors.empty());
    CHECK(parsed.objective_linear.empty());
    CHECK(parsed.objective_quadratic.size() == 4);
}

TEST_CASE("big-M override and defaults")
{
    SolveConfig cfg;
    cfg.depth = 1;
    auto path = lp_path("foct_test_m.lp");
    auto s = emit_lp(tiny(), cfg, path, LpOptions{50.0, 1e-6});
    CHECK(s.big_m == 50.0);
    std::ifstream in(path);
    std::stringstream text;
    text << in.rdbuf();
    CHECK(text.str().find("-50 <= gam_0_0 <= 50") != std::string::npos);
    // Default: 10 * max|Y| over max(1, smallest sd) of scaled covariates.
    auto scaled = min_max_scale(tiny());
    CHECK(scaled.x().minCoeff() == 0.0);
    CHECK(scaled.x().maxCoeff() == 1.0);
    CHECK(default_big_m(scaled) == doctest::Approx(25.0));
    CHECK_THROWS_AS(emit_lp(tiny(), cfg, "/nonexistent/dir/x.lp"), InvalidInput);
}

TEST_CASE("the formulation admits the native optimum of a stump")
{
    // Assign every row to leaf 0 of a depth-1 tree with no split and check
    // that the solution satisfies every emitted row.
    SolveConfig cfg;
    cfg.depth = 1;
    cfg.lambda = 0.0;
    auto path = lp_path("foct_test_feasible.lp");
    auto ds = tiny();
    emit_lp(ds, cfg, path, LpOptions{1000.0, 1e-6});
    auto parsed = testing::check_lp_file(path);
    REQUIRE(parsed.errors.empty());

    // Unsplit root: a = 0, b = 0, every row goes right, i.e. to leaf 1.
    auto scaled = min_max_scale(ds);
    MatrixXd z = design_matrix(scaled);
    VectorXd g = (z.transpose() * z).ldlt().solve(z.transpose() * scaled.y());
    std::map<std::string, double> sol;
    for (const auto& v : parsed.variables)
        sol[v] = 0.0;
    sol["l_1"] = 1.0;
    for (Index j = 0; j < 4; ++j) {
        sol["gam_1_" + std::to_string(j)] = g[j];
        sol["gam_0_" + std::to_string(j)] = g[j];
    }
    for (Index i = 0; i < 4; ++i) {
        sol["z_" + std::to_string(i) + "_1"] = 1.0;
        for (Index j = 0; j < 4; ++j)
            sol["w_" + std::to_string(i) + "_1_" + std::to_string(j)] = g[j];
        sol["e_" + std::to_string(i)] = scaled.y()[i] - z.row(i).dot(g);
    }
    REQUIRE(g.cwiseAbs().maxCoeff() < 1000.0);
    auto violated = testing::violated_rows(parsed, sol, 1e-9);
    CHECK(violated.empty());
    for (const auto& v : violated)
        MESSAGE(v);
}
