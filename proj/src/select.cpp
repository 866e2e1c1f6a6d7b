#include "foct/select.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace foct {

LambdaGrid::LambdaGrid(std::vector<double> values) : values_(std::move(values))
{
    if (values_.empty())
        throw InvalidInput("lambda grid is empty");
    for (double v : values_)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw InvalidInput("lambda grid values must be finite and nonnegative");
    std::sort(values_.begin(), values_.end());
    if (std::adjacent_find(values_.begin(), values_.end()) != values_.end())
        throw InvalidInput("lambda grid values must be distinct");
}

LambdaGrid LambdaGrid::paper() { return fractions(10000.0, 15); }

LambdaGrid LambdaGrid::case_study() { return linspace(0.0, 0.005, 50); }

LambdaGrid LambdaGrid::linspace(double lo, double hi, int count)
{
    if (count < 1)
        throw InvalidInput("grid needs at least one point");
    if (count == 1)
        return LambdaGrid({lo});
    std::vector<double> v(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (count - 1);
    return LambdaGrid(std::move(v));
}

LambdaGrid LambdaGrid::fractions(double denominator, int count)
{
    if (count < 1 || !(denominator > 0.0))
        throw InvalidInput("grid needs at least one point and a positive denominator");
    std::vector<double> v(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        v[static_cast<std::size_t>(i)] = (i + 1) / denominator;
    return LambdaGrid(std::move(v));
}

double bic_formula(double sse, Index n, Index df)
{
    if (sse <= 0.0)
        return -std::numeric_limits<double>::infinity();
    const double nn = static_cast<double>(n);
    return nn * std::log(sse / nn) + static_cast<double>(df) * std::log(nn);
}

BicValue bic(const Dataset& ds, const FittedModel& model)
{
    BicValue v;
    v.df = model.pattern.distinct_count();
    v.bic = bic_formula(model.fit.sse, ds.n(), v.df);
    return v;
}

Index distinct_coefficients(const CoefTable& coef)
{
    Index total = 0;
    for (Index j = 0; j < coef.gamma.cols(); ++j) {
        std::set<double> values;
        for (Index t = 0; t < coef.gamma.rows(); ++t)
            values.insert(coef.gamma(t, j));
        total += static_cast<Index>(values.size());
    }
    return total;
}

const TraceEntry& SelectionTrace::best() const
{
    if (chosen < 0)
        throw Infeasible("no lambda value produced a fit");
    return entries[static_cast<std::size_t>(chosen)];
}

namespace {

SelectionTrace run_grid(const Dataset& ds, SolveConfig base, const LambdaGrid& grid, const SearchSpace* space,
                        const std::string& space_error)
{
    SelectionTrace trace;
    for (double lambda : grid.values()) {
        TraceEntry entry;
        entry.lambda = lambda;
        if (!space) {
            entry.error = space_error;
        } else {
            try {
                base.lambda = lambda;
                entry.report = solve(ds, base, *space);
                entry.score = bic(ds, entry.report->best);
            } catch (const Error& e) {
                entry.error = e.what();
            }
        }
        trace.entries.push_back(std::move(entry));
    }
    for (std::size_t i = 0; i < trace.entries.size(); ++i) {
        const auto& e = trace.entries[i];
        if (!e.report)
            continue;
        if (trace.chosen < 0 || e.score.bic < trace.entries[static_cast<std::size_t>(trace.chosen)].score.bic)
            trace.chosen = static_cast<Index>(i);
    }
    return trace;
}

} // namespace

SelectionTrace select_lambda(const Dataset& ds, const SolveConfig& cfg, const LambdaGrid& grid,
                             const SearchSpace& space)
{
    cfg.validate();
    return run_grid(ds, cfg, grid, &space, {});
}

SelectionTrace select_lambda(const Dataset& ds, const SolveConfig& cfg, const LambdaGrid& grid)
{
    cfg.validate();
    try {
        SearchSpace space(ds, cfg.depth, cfg.n_min, cfg.thresholds);
        return run_grid(ds, cfg, grid, &space, {});
    } catch (const InvalidInput&) {
        throw;
    } catch (const Error& e) {
        return run_grid(ds, cfg, grid, nullptr, e.what());
    }
}

void save_trace_csv(const SelectionTrace& trace, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw InvalidInput("cannot write '" + path.string() + "'");
    out.precision(17);
    out << "lambda,objective,sse,df,bic,certified\n";
    for (const auto& e : trace.entries) {
        out << e.lambda << ',';
        if (e.report)
            out << e.report->best.fit.objective << ',' << e.report->best.fit.sse << ',' << e.score.df << ','
                << e.score.bic << ',' << (e.report->certified_optimal ? 1 : 0) << '\n';
        else
            out << "nan,nan,,nan,0\n";
    }
}

} // namespace foct
