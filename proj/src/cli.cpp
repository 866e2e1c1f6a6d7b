#include "foct/cli.hpp"

#include <CLI11.hpp>
#include <iostream>
#include <random>
#include <sstream>

#include "foct/model_io.hpp"
#include "foct/simlab.hpp"

namespace foct {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::string> split_list(const std::string& s, char sep)
{
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, sep))
        out.push_back(item);
    return out;
}

double parse_double(const std::string& s, const std::string& what)
{
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size())
            throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw UsageError("invalid number '" + s + "' in " + what);
    }
}

LambdaGrid parse_grid(const std::string& spec)
{
    if (spec == "paper")
        return LambdaGrid::paper();
    if (spec == "case-study")
        return LambdaGrid::case_study();
    try {
        auto parts = split_list(spec, ':');
        if (parts.size() == 3) {
            double count = parse_double(parts[2], "--grid");
            if (count < 1 || count != std::floor(count))
                throw UsageError("grid point count must be a positive integer");
            return LambdaGrid::linspace(parse_double(parts[0], "--grid"), parse_double(parts[1], "--grid"),
                                        static_cast<int>(count));
        }
        std::vector<double> values;
        for (const auto& v : split_list(spec, ','))
            values.push_back(parse_double(v, "--grid"));
        return LambdaGrid(values);
    } catch (const InvalidInput& e) {
        throw UsageError(std::string("invalid --grid: ") + e.what());
    }
}

ThresholdMode parse_thresholds(const std::string& spec)
{
    auto parts = split_list(spec, ':');
    auto level = [&](std::size_t i, int fallback) {
        if (parts.size() <= i)
            return fallback;
        double q = parse_double(parts[i], "--thresholds");
        if (q < 1 || q != std::floor(q))
            throw UsageError("threshold grid size must be a positive integer");
        return static_cast<int>(q);
    };
    if (parts.empty())
        throw UsageError("empty --thresholds");
    if (parts[0] == "midpoints" && parts.size() == 1)
        return Midpoints{};
    if (parts[0] == "quantile" && parts.size() <= 2)
        return QuantileGrid{level(1, 16)};
    if (parts[0] == "auto" && parts.size() <= 3)
        return AutoThresholds{level(1, 64), level(2, 16)};
    throw UsageError("--thresholds must be midpoints, quantile[:Q] or auto[:MAX[:Q]]");
}

std::string json_as_string(const Json& v)
{
    if (v.is_string())
        return v.get<std::string>();
    if (v.is_boolean())
        return v.get<bool>() ? "true" : "false";
    return v.dump();
}

/// Values from a JSON config file fill every option the command line left
/// unset. Options excluded by a flag that was given are skipped as well.
void apply_config(CLI::App& sub, const std::string& path)
{
    Json file = read_json(path);
    if (!file.is_object())
        throw UsageError("config file must hold a JSON object");
    if (file.value("schema_version", -1) != kSchemaVersion)
        throw UsageError("config file needs \"schema_version\": " + std::to_string(kSchemaVersion));
    for (const auto& [key, value] : file.items()) {
        if (key == "schema_version")
            continue;
        CLI::Option* opt = sub.get_option_no_throw("--" + key);
        if (!opt || key == "config")
            throw UsageError("unknown config key '" + key + "' for " + sub.get_name());
        if (opt->count() > 0)
            continue;
        bool excluded = false;
        for (const CLI::Option* other : opt->get_excludes())
            excluded = excluded || other->count() > 0;
        if (excluded)
            continue;
        if (value.is_array()) {
            for (const auto& item : value)
                opt->add_result(json_as_string(item));
        } else {
            opt->add_result(json_as_string(value));
        }
        opt->run_callback();
    }
}

struct DataFlags {
    std::string path;
    std::string outcome;
    std::string treatment;
    std::vector<std::string> covariates;

    void add(CLI::App& sub)
    {
        sub.add_option("--data", path, "Input CSV with a header row");
        sub.add_option("--outcome", outcome, "Outcome column name");
        sub.add_option("--treatment", treatment, "Binary (0/1) treatment column name");
        sub.add_option("--covariates", covariates, "Covariate columns (default: all other columns)")
            ->delimiter(',');
    }
    Dataset load(const CLI::App& sub) const
    {
        if (path.empty())
            throw UsageError("--data is required\n" + sub.help());
        if (outcome.empty())
            throw UsageError("--outcome is required\n" + sub.help());
        if (treatment.empty())
            throw UsageError("--treatment is required\n" + sub.help());
        return load_csv(path, ColumnRoles{outcome, treatment, covariates});
    }
};

struct SolverFlags {
    int depth = 2;
    Index n_min = 1;
    std::string thresholds = "auto";
    std::string fusion = "descent";
    int restarts = 8;
    int max_iter = 50;
    int top_k = 50;
    double time_limit = 3600.0;

    void add(CLI::App& sub, bool fusion_flags)
    {
        sub.add_option("--depth", depth, "Tree depth (0-3)")->capture_default_str();
        sub.add_option("--nmin", n_min, "Minimum rows per leaf")->capture_default_str();
        sub.add_option("--thresholds", thresholds, "midpoints, quantile[:Q] or auto[:MAX[:Q]]")
            ->capture_default_str();
        if (!fusion_flags)
            return;
        sub.add_option("--fusion", fusion, "Fusion search: exact or descent")
            ->check(CLI::IsMember({"exact", "descent"}))
            ->capture_default_str();
        sub.add_option("--restarts", restarts, "Random restarts of the descent search")->capture_default_str();
        sub.add_option("--max-iter", max_iter, "Sweeps per descent run")->capture_default_str();
        sub.add_option("--top-k", top_k, "Trees given a fusion search before certification")
            ->capture_default_str();
        sub.add_option("--time-limit", time_limit, "Seconds per solve")->capture_default_str();
    }
    SolveConfig config(std::uint64_t seed, unsigned threads) const
    {
        SolveConfig c;
        c.depth = depth;
        c.n_min = n_min;
        c.thresholds = parse_thresholds(thresholds);
        if (fusion == "exact")
            c.fusion = ExactFusion{};
        else
            c.fusion = DescentFusion{max_iter, restarts, seed};
        c.top_k_fusion = top_k;
        c.time_limit = time_limit;
        c.seed = seed;
        c.threads = threads;
        try {
            c.validate();
        } catch (const InvalidInput& e) {
            throw UsageError(e.what());
        }
        return c;
    }
};

struct RunFlags {
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string config;
    CLI::Option* seed_opt = nullptr;

    void add(CLI::App& sub)
    {
        seed_opt = sub.add_option("--seed", seed, "Seed for every random draw (default: from entropy)");
        sub.add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();
        sub.add_option("--config", config, "JSON file supplying defaults for these flags");
    }
    std::uint64_t resolve_seed(std::ostream& out)
    {
        if (seed_opt->count() == 0) {
            std::random_device rd;
            seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
            out << "seed: " << seed << '\n';
        }
        return seed;
    }
};

struct BootstrapFlags {
    int replicates = 1000;
    double alpha = 0.10;

    void add(CLI::App& sub)
    {
        sub.add_option("--bootstrap", replicates, "Bootstrap replicates (0 skips intervals)")->capture_default_str();
        sub.add_option("--alpha", alpha, "Interval level is 1 - alpha")->capture_default_str();
    }
};

/// Treatment effects are differences of outcomes, so undoing outcome
/// standardization only rescales them.
std::vector<SubgroupEffect> outcome_units(std::vector<SubgroupEffect> effects, const std::optional<Standardizer>& st)
{
    if (!st || !st->y_sd)
        return effects;
    const double s = *st->y_sd;
    for (auto& e : effects) {
        e.tau_hat *= s;
        if (e.ci)
            e.ci = std::pair{e.ci->first * s, e.ci->second * s};
    }
    return effects;
}

std::vector<SubgroupEffect> effects_with_ci(const Dataset& ds, const FittedModel& model, const BootstrapFlags& b,
                                            std::uint64_t seed, unsigned threads, std::ostream& out)
{
    if (b.replicates == 0)
        return estimate_sate(ds, model);
    if (b.replicates < 2 || !(b.alpha > 0.0 && b.alpha < 1.0))
        throw UsageError("--bootstrap must be 0 or at least 2 and --alpha must lie in (0, 1)");
    auto result = bootstrap_ci(ds, model, BootstrapOptions{b.replicates, b.alpha, seed, threads});
    if (result.redraws > 0)
        out << "bootstrap: redrew " << result.redraws << " degenerate resamples\n";
    return result.effects;
}

void print_effects(const std::vector<SubgroupEffect>& effects, std::ostream& out)
{
    for (const auto& e : effects) {
        out << "  leaf " << e.leaf << ": n = " << e.n << ", tau = " << e.tau_hat;
        if (e.ci)
            out << ", interval [" << e.ci->first << ", " << e.ci->second << "]";
        out << '\n';
    }
}

std::filesystem::path output_dir(const std::string& dir)
{
    std::filesystem::path p(dir);
    std::error_code ec;
    std::filesystem::create_directories(p, ec);
    if (ec)
        throw InvalidInput("cannot create output directory '" + dir + "'");
    return p;
}

struct Cli {
    CLI::App app{"Fused optimal causal trees: subgroup discovery and treatment effects", "foct"};

    CLI::App* fit;
    CLI::App* cart;
    CLI::App* sate;
    CLI::App* simulate;
    CLI::App* emit;

    struct {
        DataFlags data;
        SolverFlags solver;
        RunFlags run;
        BootstrapFlags boot;
        double lambda = 0.0;
        CLI::Option* lambda_opt = nullptr;
        std::string grid = "paper";
        bool no_standardize = false;
        std::string out = ".";
    } f;
    struct {
        DataFlags data;
        SolverFlags solver;
        RunFlags run;
        BootstrapFlags boot;
        bool no_standardize = false;
        std::string out = ".";
    } c;
    struct {
        DataFlags data;
        RunFlags run;
        BootstrapFlags boot;
        std::string model;
        std::string out = "effects.csv";
    } s;
    struct {
        SolverFlags solver;
        RunFlags run;
        std::string preset = "main-rho07";
        Index n = 0;
        double rho = 0.0, p = 0.0, noise_sd = 0.0;
        Index noise_vars = 0;
        int reps = 0;
        Index n_test = 0;
        std::vector<std::string> methods{"foct", "oct", "cart"};
        std::string grid;
        std::string out = "experiment.csv";
        CLI::Option *n_opt, *rho_opt, *p_opt, *sd_opt, *noise_opt, *reps_opt, *test_opt, *grid_opt;
    } m;
    struct {
        DataFlags data;
        SolverFlags solver;
        RunFlags run;
        double lambda = 0.0;
        double big_m = 0.0;
        CLI::Option* big_m_opt = nullptr;
        double epsilon = 1e-6;
        std::string out = "model.lp";
    } e;

    Cli()
    {
        app.require_subcommand(1);

        fit = app.add_subcommand("fit", "Select lambda by BIC, fit the fused tree, estimate subgroup effects");
        f.data.add(*fit);
        f.solver.add(*fit, true);
        f.run.add(*fit);
        f.boot.add(*fit);
        f.lambda_opt = fit->add_option("--lambda", f.lambda, "Fixed fusion penalty (skips selection)");
        auto* grid = fit->add_option("--grid,--lambda-grid", f.grid, "paper, case-study, LO:HI:N or a comma list")
                         ->capture_default_str();
        f.lambda_opt->excludes(grid);
        fit->add_flag("--no-standardize", f.no_standardize, "Fit on the raw scale");
        fit->add_option("--out", f.out, "Output directory for model.json, effects.csv, trace.csv")
            ->capture_default_str();

        cart = app.add_subcommand("cart", "Fit the greedy tree baseline and estimate subgroup effects");
        c.data.add(*cart);
        c.solver.add(*cart, false);
        c.run.add(*cart);
        c.boot.add(*cart);
        cart->add_flag("--no-standardize", c.no_standardize, "Fit on the raw scale");
        cart->add_option("--out", c.out, "Output directory for model.json and effects.csv")->capture_default_str();

        sate = app.add_subcommand("sate", "Subgroup effects and bootstrap intervals for a saved model");
        sate->add_option("--model", s.model, "model.json written by fit or cart");
        s.data.add(*sate);
        s.run.add(*sate);
        s.boot.add(*sate);
        sate->add_option("--out", s.out, "Effects CSV path")->capture_default_str();

        simulate = app.add_subcommand("simulate", "Monte Carlo comparison of foct, oct and cart");
        simulate->add_option("--preset", m.preset, "Scenario preset")
            ->check(CLI::IsMember(preset_names()))
            ->capture_default_str();
        m.n_opt = simulate->add_option("--n", m.n, "Training rows per replicate");
        m.rho_opt = simulate->add_option("--rho", m.rho, "Equicorrelation of X2, X3, ...");
        m.p_opt = simulate->add_option("--p", m.p, "Treatment probability");
        m.sd_opt = simulate->add_option("--noise-sd", m.noise_sd, "Outcome noise sd");
        m.noise_opt = simulate->add_option("--noise-vars", m.noise_vars, "Extra independent covariates");
        m.reps_opt = simulate->add_option("--reps", m.reps, "Replicates");
        m.test_opt = simulate->add_option("--n-test", m.n_test, "Test rows per replicate");
        simulate->add_option("--methods", m.methods, "Comma list of foct, oct, cart")
            ->delimiter(',')
            ->check(CLI::IsMember({"foct", "oct", "cart"}));
        m.grid_opt = simulate->add_option("--grid,--lambda-grid", m.grid, "Lambda grid (default: the preset's)");
        m.solver.add(*simulate, true);
        m.solver.thresholds = "quantile:16";
        m.run.add(*simulate);
        simulate->add_option("--out", m.out, "Experiment CSV path")->capture_default_str();

        emit = app.add_subcommand("emit-mip", "Write the mixed-integer program in LP format");
        e.data.add(*emit);
        e.solver.add(*emit, false);
        e.run.add(*emit);
        emit->add_option("--lambda", e.lambda, "Fusion penalty")->capture_default_str();
        e.big_m_opt = emit->add_option("--bigM", e.big_m, "Coefficient box (default: data-driven)");
        emit->add_option("--epsilon", e.epsilon, "Margin for strict split inequalities")->capture_default_str();
        emit->add_option("--out", e.out, "LP file path")->capture_default_str();
    }

    int run_fit(std::ostream& out)
    {
        Dataset raw = f.data.load(*fit);
        std::optional<Standardizer> st;
        Dataset ds = raw;
        if (!f.no_standardize) {
            auto [scaled, s] = standardize(raw, true);
            ds = std::move(scaled);
            st = std::move(s);
        }
        const auto seed = f.run.resolve_seed(out);
        SolveConfig cfg = f.solver.config(seed, f.run.threads);
        LambdaGrid grid = f.lambda_opt->count() > 0 ? LambdaGrid({f.lambda}) : parse_grid(f.grid);

        SelectionTrace trace = select_lambda(ds, cfg, grid);
        const TraceEntry& chosen = trace.best();
        const FittedModel& model = chosen.report->best;
        auto effects = effects_with_ci(ds, model, f.boot, seed, f.run.threads, out);

        auto dir = output_dir(f.out);
        Json j = model_to_json(model, ds.feature_names(), st);
        j["selection"] = {{"lambda", chosen.lambda}, {"bic", chosen.score.bic}, {"df", chosen.score.df}};
        Json solve = report_to_json(*chosen.report);
        solve.erase("wall_time");
        j["solve"] = solve;
        write_json(j, dir / "model.json");
        save_effects_csv(outcome_units(effects, st), dir / "effects.csv");
        save_trace_csv(trace, dir / "trace.csv");

        out << "lambda = " << chosen.lambda << ", bic = " << chosen.score.bic << ", df = " << chosen.score.df
            << ", leaves = " << model.tree.active_count()
            << (chosen.report->certified_optimal ? ", certified" : ", not certified (time limit)") << '\n';
        for (const auto& entry : trace.entries)
            if (!entry.error.empty())
                out << "lambda " << entry.lambda << " failed: " << entry.error << '\n';
        print_effects(outcome_units(effects, st), out);
        return 0;
    }

    int run_cart(std::ostream& out)
    {
        Dataset raw = c.data.load(*cart);
        std::optional<Standardizer> st;
        Dataset ds = raw;
        if (!c.no_standardize) {
            auto [scaled, s] = standardize(raw, true);
            ds = std::move(scaled);
            st = std::move(s);
        }
        const auto seed = c.run.resolve_seed(out);
        CartConfig cfg{c.solver.depth, c.solver.n_min, parse_thresholds(c.solver.thresholds)};
        try {
            cfg.validate();
        } catch (const InvalidInput& ex) {
            throw UsageError(ex.what());
        }
        FittedModel model = fit_cart(ds, cfg);
        auto effects = effects_with_ci(ds, model, c.boot, seed, c.run.threads, out);
        auto dir = output_dir(c.out);
        write_json(model_to_json(model, ds.feature_names(), st), dir / "model.json");
        save_effects_csv(outcome_units(effects, st), dir / "effects.csv");
        out << "leaves = " << model.tree.active_count() << ", sse = " << model.fit.sse << '\n';
        print_effects(outcome_units(effects, st), out);
        return 0;
    }

    int run_sate(std::ostream& out)
    {
        if (s.model.empty())
            throw UsageError("--model is required\n" + sate->help());
        LoadedModel loaded = model_from_json(read_json(s.model));
        Dataset ds = s.data.load(*sate);
        if (ds.feature_names() != loaded.feature_names)
            throw InvalidInput("data covariates do not match the model's");
        if (loaded.standardizer)
            ds = loaded.standardizer->apply(ds);
        const auto seed = s.run.resolve_seed(out);
        auto effects = effects_with_ci(ds, loaded.model, s.boot, seed, s.run.threads, out);
        save_effects_csv(outcome_units(effects, loaded.standardizer), s.out);
        print_effects(outcome_units(effects, loaded.standardizer), out);
        return 0;
    }

    int run_simulate(std::ostream& out)
    {
        ExperimentConfig cfg;
        try {
            cfg = preset(m.preset);
        } catch (const InvalidInput& ex) {
            throw UsageError(ex.what());
        }
        auto& sc = cfg.scenario;
        if (m.noise_opt->count() > 0) {
            sc.noise_vars = m.noise_vars;
            sc.d = 3 + m.noise_vars;
            sc.groups = SimScenario::default_groups(sc.d);
        }
        if (m.n_opt->count() > 0)
            sc.n = m.n;
        if (m.rho_opt->count() > 0)
            sc.rho = m.rho;
        if (m.p_opt->count() > 0)
            sc.p = m.p;
        if (m.sd_opt->count() > 0)
            sc.noise_sd = m.noise_sd;
        if (m.reps_opt->count() > 0)
            cfg.reps = m.reps;
        if (m.test_opt->count() > 0)
            cfg.n_test = m.n_test;
        if (m.grid_opt->count() > 0)
            cfg.grid = parse_grid(m.grid);
        try {
            sc.validate();
        } catch (const InvalidInput& ex) {
            throw UsageError(ex.what());
        }
        if (cfg.reps < 1 || sc.n < 1 || cfg.n_test < 1)
            throw UsageError("--reps, --n and --n-test must be positive");
        cfg.methods.clear();
        for (const auto& name : m.methods)
            cfg.methods.push_back(parse_method(name));
        sc.seed = m.run.resolve_seed(out);
        cfg.solver = m.solver.config(sc.seed, 1);
        cfg.threads = m.run.threads;

        ExperimentTable table = run_experiment(cfg);
        save_experiment_csv(table, m.out);
        out << "preset " << m.preset << ": " << cfg.reps << " replicates, n = " << sc.n << ", rho = " << sc.rho
            << ", p = " << sc.p << '\n';
        for (const auto& s : table.summary()) {
            out << "  " << to_string(s.method) << ": recovered " << s.recovered << "/" << s.runs
                << ", sate mse mean " << s.mean_sate_mse << " median " << s.median_sate_mse << ", risk mean "
                << s.mean_oos_risk << " median " << s.median_oos_risk;
            if (s.failures > 0)
                out << ", " << s.failures << " failed";
            out << '\n';
        }
        return 0;
    }

    int run_emit(std::ostream& out)
    {
        Dataset ds = e.data.load(*emit);
        SolveConfig cfg;
        cfg.depth = e.solver.depth;
        cfg.n_min = e.solver.n_min;
        cfg.lambda = e.lambda;
        try {
            cfg.validate();
        } catch (const InvalidInput& ex) {
            throw UsageError(ex.what());
        }
        LpOptions options;
        if (e.big_m_opt->count() > 0)
            options.big_m = e.big_m;
        options.epsilon = e.epsilon;
        LpSummary summary = emit_lp(ds, cfg, e.out, options);
        out << "variables: " << summary.n_vars << " (" << summary.n_binaries << " binary)\n"
            << "constraints: " << summary.n_constraints << '\n'
            << "bigM: " << summary.big_m << '\n';
        return 0;
    }
};

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    Cli cli;
    try {
        cli.app.parse(argc, argv);
        for (auto* sub : {cli.fit, cli.cart, cli.sate, cli.simulate, cli.emit}) {
            if (!sub->parsed())
                continue;
            auto* cfg = sub->get_option("--config");
            if (cfg->count() > 0)
                apply_config(*sub, cfg->as<std::string>());
        }
        if (cli.fit->parsed())
            return cli.run_fit(out);
        if (cli.cart->parsed())
            return cli.run_cart(out);
        if (cli.sate->parsed())
            return cli.run_sate(out);
        if (cli.simulate->parsed())
            return cli.run_simulate(out);
        return cli.run_emit(out);
    } catch (const CLI::CallForHelp&) {
        out << (cli.app.get_subcommands().empty() ? cli.app.help() : cli.app.get_subcommands().front()->help());
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << cli.app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        auto subs = cli.app.get_subcommands();
        err << (subs.empty() ? cli.app.help() : subs.front()->help());
        return 2;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const CLI::Error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace foct
