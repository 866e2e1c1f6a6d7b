#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "foct/solver.hpp"

namespace foct {

class LambdaGrid {
public:
    explicit LambdaGrid(std::vector<double> values);

    /// {i / 10000 : i = 1..15}, the simulation grid.
    static LambdaGrid paper();
    /// 50 evenly spaced values over [0, 0.005], the case-study grid.
    static LambdaGrid case_study();
    /// `count` evenly spaced values over [lo, hi] (inclusive).
    static LambdaGrid linspace(double lo, double hi, int count);
    /// {i / denominator : i = 1..count}.
    static LambdaGrid fractions(double denominator, int count);

    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }

private:
    std::vector<double> values_;
};

struct BicValue {
    double bic = 0.0;
    Index df = 0;
};

/// n log(sse / n) + df log n with the unnormalized training SSE; -inf when
/// the fit is exact. df counts distinct coefficient values across leaves.
BicValue bic(const Dataset& ds, const FittedModel& model);
double bic_formula(double sse, Index n, Index df);

/// Distinct values per coefficient column, summed (exact equality).
Index distinct_coefficients(const CoefTable& coef);

struct TraceEntry {
    double lambda = 0.0;
    std::optional<SolveReport> report;  // absent when the solve failed
    std::string error;
    BicValue score;
};

struct SelectionTrace {
    std::vector<TraceEntry> entries;
    Index chosen = -1;

    const TraceEntry& best() const;
};

/// Solves once per grid value (cfg.lambda is ignored) and picks the smallest
/// BIC; ties go to the smaller lambda. The tree search space is shared
/// across grid points since it does not depend on lambda.
SelectionTrace select_lambda(const Dataset& ds, const SolveConfig& cfg, const LambdaGrid& grid);
SelectionTrace select_lambda(const Dataset& ds, const SolveConfig& cfg, const LambdaGrid& grid,
                             const SearchSpace& space);

/// Columns: lambda, objective, sse, df, bic, certified.
void save_trace_csv(const SelectionTrace& trace, const std::filesystem::path& path);

} // namespace foct
