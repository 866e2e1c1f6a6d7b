#include "foct/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace foct {

namespace {

const double kHalfNormalMean = std::sqrt(2.0 / std::numbers::pi);

VectorXd padded(std::initializer_list<double> head, Index d)
{
    VectorXd v = VectorXd::Zero(d);
    Index k = 0;
    for (double x : head)
        if (k < d)
            v[k++] = x;
    return v;
}

Index correlated_end(const SimScenario& sc) { return sc.d - sc.noise_vars; }

} // namespace

std::array<GroupParams, 4> SimScenario::default_groups(Index d)
{
    return {GroupParams{0.0, 1.0, padded({1, 1, 2}, d), padded({0, 1, 0}, d)},
            GroupParams{0.0, 2.0, padded({1, 1, 4}, d), padded({0, 1, 0}, d)},
            GroupParams{0.0, 1.0, padded({1, 1, 3}, d), padded({1, 1, 2}, d)},
            GroupParams{0.0, 2.0, padded({1, 1, 5}, d), padded({1, 1, 2}, d)}};
}

SimScenario SimScenario::make(Index n, double rho, double p, Index noise_vars)
{
    SimScenario sc;
    sc.n = n;
    sc.d = 3 + noise_vars;
    sc.noise_vars = noise_vars;
    sc.p = p;
    sc.rho = rho;
    sc.groups = default_groups(sc.d);
    return sc;
}

bool SimScenario::default_parameters() const
{
    if (d - noise_vars != 3)
        return false;
    auto ref = default_groups(d);
    for (std::size_t m = 0; m < 4; ++m)
        if (groups[m].delta != ref[m].delta || groups[m].mu != ref[m].mu || groups[m].alpha != ref[m].alpha ||
            groups[m].beta != ref[m].beta)
            return false;
    return true;
}

void SimScenario::validate() const
{
    if (d < 3)
        throw InvalidInput("scenario needs d >= 3");
    if (noise_vars < 0 || d - noise_vars < 2)
        throw InvalidInput("X1 and X2 must both be signal covariates");
    if (!(std::abs(rho) < 1.0))
        throw InvalidInput("rho must satisfy |rho| < 1");
    if (!(p >= 0.0 && p <= 1.0))
        throw InvalidInput("treatment probability must lie in [0, 1]");
    if (!(noise_sd >= 0.0))
        throw InvalidInput("noise_sd must be nonnegative");
    for (const auto& g : groups)
        if (g.alpha.size() != d || g.beta.size() != d)
            throw InvalidInput("group coefficient vectors must have length d");
}

int subgroup_of(const VectorXd& x) { return 1 + 2 * (x[0] >= 0.0 ? 1 : 0) + (x[1] >= 0.0 ? 1 : 0); }

double true_mean(const SimScenario& sc, const VectorXd& x, double t)
{
    const auto& g = sc.groups[static_cast<std::size_t>(subgroup_of(x) - 1)];
    return g.delta + g.mu * t + g.alpha.dot(x) + t * g.beta.dot(x);
}

SimDraw generate(const SimScenario& sc, Index n_rows, std::mt19937_64& rng)
{
    sc.validate();
    if (n_rows < 1)
        throw InvalidInput("n_rows must be at least 1");
    const Index d = sc.d;
    const Index q = correlated_end(sc) - 1;  // size of the equicorrelated block X2..
    std::normal_distribution<double> normal(0.0, 1.0);

    MatrixXd chol;
    if (sc.rho < 0.0) {
        MatrixXd sigma = MatrixXd::Constant(q, q, sc.rho);
        sigma.diagonal().setOnes();
        Eigen::LLT<MatrixXd> llt(sigma);
        if (llt.info() != Eigen::Success)
            throw InvalidInput("equicorrelation matrix is not positive definite for this rho");
        chol = llt.matrixL();
    }

    MatrixXd x(n_rows, d);
    VectorXd t(n_rows), y(n_rows), f(n_rows), tau(n_rows);
    std::vector<int> group(static_cast<std::size_t>(n_rows));
    const double load = std::sqrt(std::max(sc.rho, 0.0));
    const double own = std::sqrt(1.0 - std::max(sc.rho, 0.0));
    VectorXd w(q);
    for (Index i = 0; i < n_rows; ++i) {
        x(i, 0) = normal(rng);
        if (sc.rho >= 0.0) {
            double shared = normal(rng);
            for (Index k = 0; k < q; ++k)
                x(i, 1 + k) = load * shared + own * normal(rng);
        } else {
            for (Index k = 0; k < q; ++k)
                w[k] = normal(rng);
            x.row(i).segment(1, q) = (chol * w).transpose();
        }
        for (Index k = 1 + q; k < d; ++k)
            x(i, k) = normal(rng);
        t[i] = uniform01(rng) < sc.p ? 1.0 : 0.0;
        double eps = normal(rng);
        VectorXd xi = x.row(i).transpose();
        f[i] = true_mean(sc, xi, t[i]);
        y[i] = f[i] + sc.noise_sd * eps;
        group[static_cast<std::size_t>(i)] = subgroup_of(xi);
    }
    std::array<double, 4> sate{};
    for (int m = 1; m <= 4; ++m)
        sate[static_cast<std::size_t>(m - 1)] = subgroup_sate(sc, m);
    for (Index i = 0; i < n_rows; ++i)
        tau[i] = sate[static_cast<std::size_t>(group[static_cast<std::size_t>(i)] - 1)];
    return SimDraw{Dataset(std::move(x), std::move(t), std::move(y)), std::move(group), std::move(f), std::move(tau)};
}

SimDraw generate(const SimScenario& sc, Index n_rows)
{
    auto rng = stream(sc.seed, {});
    return generate(sc, n_rows, rng);
}

SimDraw generate(const SimScenario& sc) { return generate(sc, sc.n); }

VectorXd subgroup_mean(const SimScenario& sc, int m)
{
    if (m < 1 || m > 4)
        throw InvalidInput("subgroup must be 1..4");
    const double s1 = (m >= 3) ? kHalfNormalMean : -kHalfNormalMean;
    const double s2 = (m % 2 == 0) ? kHalfNormalMean : -kHalfNormalMean;
    VectorXd mean = VectorXd::Zero(sc.d);
    mean[0] = s1;
    mean[1] = s2;
    // Within the equicorrelated block E[X_k | X2] = rho X2, and X1 is independent of it.
    for (Index k = 2; k < correlated_end(sc); ++k)
        mean[k] = sc.rho * s2;
    return mean;
}

double subgroup_sate(const SimScenario& sc, int m)
{
    const auto& g = sc.groups[static_cast<std::size_t>(m - 1)];
    return g.mu + g.beta.dot(subgroup_mean(sc, m));
}

double oracle_sate(const SimScenario& sc, int m)
{
    if (m < 1 || m > 4)
        throw InvalidInput("subgroup must be 1..4");
    if (!sc.default_parameters())
        throw InvalidInput("closed-form SATE only holds for the default group parameters; "
                           "estimate it by Monte Carlo instead");
    const double c = kHalfNormalMean;
    switch (m) {
    case 1: return 1.0 - c;
    case 2: return 2.0 + c;
    case 3: return 1.0 - 2.0 * sc.rho * c;
    default: return 2.0 + (2.0 * sc.rho + 2.0) * c;
    }
}

TreeStructure true_tree(Index d)
{
    if (d < 2)
        throw InvalidInput("true tree needs at least two covariates");
    return TreeStructure(2, {Split{0, 0.0}, Split{1, 0.0}, Split{1, 0.0}});
}

FittedModel truth_model(const SimScenario& sc)
{
    sc.validate();
    FittedModel model;
    model.tree = true_tree(sc.d);
    model.pattern = FusionPattern::all_distinct(2 * sc.d + 2, 4);
    model.fit.coef.leaves = model.tree.active_leaves();
    model.fit.coef.gamma.resize(4, 2 * sc.d + 2);
    model.leaf_means.resize(4, sc.d);
    for (int m = 1; m <= 4; ++m) {
        const auto& g = sc.groups[static_cast<std::size_t>(m - 1)];
        auto row = model.fit.coef.gamma.row(m - 1);
        row[coef::intercept] = g.delta;
        row[coef::treatment] = g.mu;
        row.segment(2, sc.d) = g.alpha.transpose();
        row.segment(2 + sc.d, sc.d) = g.beta.transpose();
        model.leaf_means.row(m - 1) = subgroup_mean(sc, m).transpose();
    }
    model.leaf_sizes.assign(4, 0);
    return model;
}

bool structure_recovered(const FittedModel& model)
{
    const auto& tree = model.tree;
    if (tree.depth() < 2 || tree.active_count() != 4)
        return false;
    for (Index h = 3; h < tree.branch_count(); ++h)
        if (tree.split(h))
            return false;
    const auto &root = tree.split(0), &left = tree.split(1), &right = tree.split(2);
    if (!root || !left || !right)
        return false;
    if (root->variable == 0)
        return left->variable == 1 && right->variable == 1;
    if (root->variable == 1)
        return left->variable == 0 && right->variable == 0;
    return false;
}

std::string to_string(Method m)
{
    switch (m) {
    case Method::foct: return "foct";
    case Method::oct: return "oct";
    default: return "cart";
    }
}

Method parse_method(const std::string& name)
{
    if (name == "foct")
        return Method::foct;
    if (name == "oct")
        return Method::oct;
    if (name == "cart")
        return Method::cart;
    throw InvalidInput("unknown method '" + name + "' (expected foct, oct or cart)");
}

MetricsRow evaluate(const FittedModel& model, const SimDraw& test, Method method)
{
    MetricsRow row;
    row.method = method;
    row.recovered = structure_recovered(model);
    row.sate_mse = (predict_tau(model, test.data) - test.tau_true).squaredNorm() / static_cast<double>(test.data.n());
    row.oos_risk = (predict_mean(model, test.data) - test.f_true).squaredNorm() / static_cast<double>(test.data.n());
    return row;
}

ExperimentConfig preset(const std::string& name)
{
    ExperimentConfig cfg;
    cfg.solver.depth = 2;
    cfg.solver.n_min = 1;
    cfg.solver.thresholds = QuantileGrid{16};
    cfg.solver.top_k_fusion = 50;
    if (name == "main-rho07" || name == "main-rho08" || name == "appE-rho06") {
        double rho = name == "main-rho07" ? 0.7 : name == "main-rho08" ? 0.8 : 0.6;
        cfg.scenario = SimScenario::make(200, rho);
        cfg.grid = LambdaGrid::paper();
        cfg.reps = 100;
    } else if (name == "appE-n100-d3" || name == "appE-n100-d5") {
        cfg.scenario = SimScenario::make(100, 0.5, 0.3, name == "appE-n100-d5" ? 2 : 0);
        cfg.grid = LambdaGrid::fractions(500.0, 5);
        cfg.reps = 50;
    } else if (name == "appE-p05") {
        cfg.scenario = SimScenario::make(200, 0.5, 0.5);
        cfg.grid = LambdaGrid::fractions(10000.0, 20);
        cfg.reps = 50;
    } else {
        throw InvalidInput("unknown preset '" + name + "'");
    }
    return cfg;
}

const std::vector<std::string>& preset_names()
{
    static const std::vector<std::string> names{"main-rho07",   "main-rho08", "appE-n100-d3",
                                                "appE-n100-d5", "appE-p05",   "appE-rho06"};
    return names;
}

ExperimentTable run_experiment(const ExperimentConfig& cfg)
{
    if (cfg.reps < 1)
        throw InvalidInput("experiment needs at least one replicate");
    cfg.scenario.validate();
    const auto reps = static_cast<std::size_t>(cfg.reps);
    std::vector<std::vector<ExperimentRow>> per_rep(reps);
    parallel_for(reps, cfg.threads, [&](std::size_t r) {
        auto train_rng = stream(cfg.scenario.seed, {static_cast<std::uint64_t>(r), 0});
        auto test_rng = stream(cfg.scenario.seed, {static_cast<std::uint64_t>(r), 1});
        SimDraw train = generate(cfg.scenario, cfg.scenario.n, train_rng);
        SimDraw test = generate(cfg.scenario, cfg.n_test, test_rng);
        SolveConfig solver = cfg.solver;
        solver.threads = 1;
        std::optional<SearchSpace> space;
        for (Method method : cfg.methods) {
            ExperimentRow row;
            row.replicate = static_cast<int>(r);
            row.metrics.method = method;
            try {
                FittedModel model;
                if (method == Method::cart) {
                    model = fit_cart(train.data, CartConfig{solver.depth, solver.n_min, solver.thresholds});
                } else {
                    if (!space)
                        space.emplace(train.data, solver.depth, solver.n_min, solver.thresholds);
                    if (method == Method::foct) {
                        model = select_lambda(train.data, solver, cfg.grid, *space).best().report->best;
                    } else {
                        solver.lambda = 0.0;
                        model = solve(train.data, solver, *space).best;
                    }
                }
                row.metrics = evaluate(model, test, method);
            } catch (const Error& e) {
                row.error = e.what();
            }
            per_rep[r].push_back(std::move(row));
        }
    });
    ExperimentTable table;
    for (auto& rows : per_rep)
        for (auto& row : rows)
            table.rows.push_back(std::move(row));
    return table;
}

namespace {

double median(std::vector<double> v)
{
    if (v.empty())
        return std::nan("");
    std::sort(v.begin(), v.end());
    std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

} // namespace

std::vector<MethodSummary> ExperimentTable::summary() const
{
    std::vector<MethodSummary> out;
    for (Method m : {Method::foct, Method::oct, Method::cart}) {
        MethodSummary s;
        s.method = m;
        std::vector<double> mse, risk;
        for (const auto& row : rows) {
            if (row.metrics.method != m)
                continue;
            ++s.runs;
            if (!row.error.empty()) {
                ++s.failures;
                continue;
            }
            s.recovered += row.metrics.recovered ? 1 : 0;
            mse.push_back(row.metrics.sate_mse);
            risk.push_back(row.metrics.oos_risk);
        }
        if (s.runs == 0)
            continue;
        auto mean = [](const std::vector<double>& v) {
            double total = 0.0;
            for (double x : v)
                total += x;
            return v.empty() ? std::nan("") : total / static_cast<double>(v.size());
        };
        s.mean_sate_mse = mean(mse);
        s.median_sate_mse = median(mse);
        s.mean_oos_risk = mean(risk);
        s.median_oos_risk = median(risk);
        out.push_back(s);
    }
    return out;
}

int ExperimentTable::recovered(Method m) const
{
    int count = 0;
    for (const auto& row : rows)
        if (row.metrics.method == m && row.error.empty() && row.metrics.recovered)
            ++count;
    return count;
}

void save_experiment_csv(const ExperimentTable& table, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw InvalidInput("cannot write '" + path.string() + "'");
    out.precision(17);
    out << "replicate,method,recovered,sate_mse,oos_risk\n";
    for (const auto& row : table.rows) {
        out << row.replicate << ',' << to_string(row.metrics.method) << ',';
        if (row.error.empty())
            out << (row.metrics.recovered ? 1 : 0) << ',' << row.metrics.sate_mse << ',' << row.metrics.oos_risk
                << '\n';
        else
            out << ",nan,nan\n";
    }
}

} // namespace foct
