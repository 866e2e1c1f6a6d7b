#include "foct/causal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace foct {

namespace {

std::vector<SubgroupEffect> effects_for(const Dataset& ds, const Membership& membership, const CoefTable& coef)
{
    const Index d = ds.d();
    const MatrixXd means = leaf_means(ds, membership);
    std::vector<SubgroupEffect> out;
    for (Index l = 0; l < membership.leaf_count(); ++l) {
        SubgroupEffect e;
        e.leaf = membership.leaves[static_cast<std::size_t>(l)];
        e.n = membership.leaf_counts[static_cast<std::size_t>(l)];
        if (e.n == 0)
            throw InvalidInput("leaf " + std::to_string(e.leaf) + " holds no rows");
        e.mu_hat = coef.gamma(l, coef::treatment);
        e.beta_hat = coef.gamma.row(l).segment(2 + d, d).transpose();
        e.xbar = means.row(l).transpose();
        e.tau_hat = e.mu_hat + e.beta_hat.dot(e.xbar);
        out.push_back(std::move(e));
    }
    return out;
}

bool degenerate(const Dataset& ds, const Membership& m)
{
    std::vector<bool> treated(m.leaves.size(), false);
    for (Index i = 0; i < ds.n(); ++i)
        if (ds.t()[i] == 1.0)
            treated[static_cast<std::size_t>(m.assignment[static_cast<std::size_t>(i)])] = true;
    for (std::size_t l = 0; l < m.leaves.size(); ++l)
        if (m.leaf_counts[l] == 0 || !treated[l])
            return true;
    return false;
}

} // namespace

std::vector<SubgroupEffect> estimate_sate(const Dataset& ds, const FittedModel& model)
{
    auto membership = assign(model.tree, ds);
    if (membership.leaf_count() != model.fit.coef.gamma.rows())
        throw InvalidInput("model does not match its tree");
    return effects_for(ds, membership, model.fit.coef);
}

double quantile(std::vector<double> values, double level)
{
    if (values.empty())
        throw InvalidInput("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    double h = static_cast<double>(values.size() - 1) * level;
    auto lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

BootstrapResult bootstrap_ci(const Dataset& ds, const FittedModel& model, const BootstrapOptions& options)
{
    if (options.replicates < 2)
        throw InvalidInput("bootstrap needs at least 2 replicates");
    if (!(options.alpha > 0.0 && options.alpha < 1.0))
        throw InvalidInput("alpha must lie in (0, 1)");

    BootstrapResult result;
    result.effects = estimate_sate(ds, model);
    const Index leaves = static_cast<Index>(result.effects.size());
    const auto b_count = static_cast<std::size_t>(options.replicates);
    const Index max_redraws = 10 * static_cast<Index>(options.replicates);
    const Index n = ds.n();

    result.draws.resize(options.replicates, leaves);
    std::vector<Index> redraws(b_count, 0);
    parallel_for(b_count, options.threads, [&](std::size_t b) {
        auto rng = stream(options.seed, {static_cast<std::uint64_t>(b)});
        std::uniform_int_distribution<Index> pick(0, n - 1);
        std::vector<Index> rows(static_cast<std::size_t>(n));
        for (;;) {
            for (auto& r : rows)
                r = pick(rng);
            Dataset sample = ds.subset(rows);
            auto membership = assign(model.tree, sample);
            if (degenerate(sample, membership)) {
                if (++redraws[b] > max_redraws)
                    throw BudgetExceeded("bootstrap resamples keep leaving a leaf or its treated arm empty");
                continue;
            }
            auto fit = fit_fused(sample, membership, model.pattern, 0.0, 1.0);
            auto effects = effects_for(sample, membership, fit.coef);
            for (Index l = 0; l < leaves; ++l)
                result.draws(static_cast<Index>(b), l) = effects[static_cast<std::size_t>(l)].tau_hat;
            return;
        }
    });
    for (Index r : redraws)
        result.redraws += r;
    if (result.redraws > max_redraws)
        throw BudgetExceeded("bootstrap needed " + std::to_string(result.redraws) + " redraws, more than " +
                             std::to_string(max_redraws));

    for (Index l = 0; l < leaves; ++l) {
        std::vector<double> column(result.draws.col(l).data(), result.draws.col(l).data() + result.draws.rows());
        result.effects[static_cast<std::size_t>(l)].ci =
            std::pair{quantile(column, options.alpha / 2.0), quantile(column, 1.0 - options.alpha / 2.0)};
    }
    return result;
}

void save_effects_csv(const std::vector<SubgroupEffect>& effects, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw InvalidInput("cannot write '" + path.string() + "'");
    out.precision(17);
    out << "leaf,n,tau,lo,hi\n";
    for (const auto& e : effects) {
        out << e.leaf << ',' << e.n << ',' << e.tau_hat << ',';
        if (e.ci)
            out << e.ci->first << ',' << e.ci->second << '\n';
        else
            out << ",\n";
    }
}

} // namespace foct
