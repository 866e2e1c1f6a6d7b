#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "foct/cart.hpp"
#include "foct/select.hpp"

namespace foct {

struct GroupParams {
    double delta = 0.0;
    double mu = 0.0;
    VectorXd alpha;
    VectorXd beta;
};

/// Four subgroups cut by the signs of X1 and X2; X2..X_{d - noise_vars}
/// are equicorrelated with correlation rho, the trailing noise_vars
/// covariates are independent and carry zero coefficients.
struct SimScenario {
    Index n = 200;
    Index d = 3;
    Index noise_vars = 0;
    double p = 0.3;
    double rho = 0.7;
    double noise_sd = 1.0;
    std::array<GroupParams, 4> groups = default_groups(3);
    std::uint64_t seed = 0;

    static std::array<GroupParams, 4> default_groups(Index d);
    /// d = 3 + noise_vars with the default group parameters padded by zeros.
    static SimScenario make(Index n, double rho, double p = 0.3, Index noise_vars = 0);

    bool default_parameters() const;
    void validate() const;
};

struct SimDraw {
    Dataset data;
    std::vector<int> subgroup;  // 1..4
    VectorXd f_true;
    VectorXd tau_true;
};

/// Subgroup 1..4 of a covariate row: 1 + 2 [x1 >= 0] + [x2 >= 0].
int subgroup_of(const VectorXd& x);
double true_mean(const SimScenario& sc, const VectorXd& x, double t);

SimDraw generate(const SimScenario& sc, Index n_rows, std::mt19937_64& rng);
SimDraw generate(const SimScenario& sc, Index n_rows);
SimDraw generate(const SimScenario& sc);

/// Conditional mean of X given membership of subgroup m.
VectorXd subgroup_mean(const SimScenario& sc, int m);
/// mu_m + beta_m' E[X | subgroup m], valid for any group parameters.
double subgroup_sate(const SimScenario& sc, int m);
/// Printed closed forms; refuses non-default group parameters.
double oracle_sate(const SimScenario& sc, int m);

/// Depth-2 tree: X1 at 0, then X2 at 0 on both sides. Leaf position m - 1.
TreeStructure true_tree(Index d);
/// The generating model as a FittedModel; leaf means are the population
/// conditional means, so its tau predictions equal the oracle SATE.
FittedModel truth_model(const SimScenario& sc);

bool structure_recovered(const FittedModel& model);

enum class Method { foct, oct, cart };
std::string to_string(Method m);
Method parse_method(const std::string& name);

struct MetricsRow {
    bool recovered = false;
    double sate_mse = 0.0;
    double oos_risk = 0.0;
    Method method = Method::foct;
};

MetricsRow evaluate(const FittedModel& model, const SimDraw& test, Method method);

struct ExperimentConfig {
    SimScenario scenario;
    std::vector<Method> methods{Method::foct, Method::oct, Method::cart};
    int reps = 100;
    Index n_test = 2000;
    LambdaGrid grid = LambdaGrid::paper();
    SolveConfig solver;
    unsigned threads = 1;  // replicates in flight; each solve is single-threaded
};

/// Named scenario with its grid and replicate count.
ExperimentConfig preset(const std::string& name);
const std::vector<std::string>& preset_names();

struct ExperimentRow {
    int replicate = 0;
    MetricsRow metrics;
    std::string error;  // nonempty when the method failed on this replicate
};

struct MethodSummary {
    Method method = Method::foct;
    int runs = 0;
    int failures = 0;
    int recovered = 0;
    double mean_sate_mse = 0.0;
    double median_sate_mse = 0.0;
    double mean_oos_risk = 0.0;
    double median_oos_risk = 0.0;
};

struct ExperimentTable {
    std::vector<ExperimentRow> rows;
    std::vector<MethodSummary> summary() const;
    int recovered(Method m) const;
};

ExperimentTable run_experiment(const ExperimentConfig& cfg);

/// Columns: replicate, method, recovered, sate_mse, oos_risk.
void save_experiment_csv(const ExperimentTable& table, const std::filesystem::path& path);

} // namespace foct
