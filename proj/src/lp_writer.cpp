#include <cmath>
#include <fstream>
#include <sstream>

#include "foct/solver.hpp"

namespace foct {

namespace {

std::string num(double v)
{
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

/// Accumulates "+ c name" terms and wraps lines well below the format's
/// 255-character limit.
class Expr {
public:
    void add(double coef, const std::string& name)
    {
        if (coef == 0.0)
            return;
        std::string term = (coef < 0 ? "- " : "+ ") + (std::abs(coef) == 1.0 ? "" : num(std::abs(coef)) + " ") + name;
        if (line_.size() + term.size() > 200) {
            lines_ += line_ + "\n";
            line_ = "   ";
        }
        line_ += " " + term;
        empty_ = false;
    }
    void raw(const std::string& text)
    {
        if (line_.size() + text.size() > 200) {
            lines_ += line_ + "\n";
            line_ = "   ";
        }
        line_ += " " + text;
        empty_ = false;
    }
    bool empty() const { return empty_; }
    std::string str() const { return lines_ + line_; }

private:
    std::string lines_;
    std::string line_;
    bool empty_ = true;
};

std::string id(std::initializer_list<Index> parts, const char* prefix)
{
    std::string s = prefix;
    for (Index v : parts)
        s += "_" + std::to_string(v);
    return s;
}

} // namespace

Dataset min_max_scale(const Dataset& ds)
{
    MatrixXd x = ds.x();
    for (Index k = 0; k < x.cols(); ++k) {
        double lo = x.col(k).minCoeff();
        double hi = x.col(k).maxCoeff();
        if (hi > lo)
            x.col(k) = (x.col(k).array() - lo) / (hi - lo);
        else
            x.col(k).setZero();
    }
    return Dataset(std::move(x), ds.t(), ds.y(), ds.feature_names());
}

double default_big_m(const Dataset& scaled)
{
    double min_sd = std::numeric_limits<double>::infinity();
    for (Index k = 0; k < scaled.d(); ++k) {
        auto col = scaled.x().col(k).array();
        double sd = scaled.n() > 1 ? std::sqrt((col - col.mean()).square().sum() / static_cast<double>(scaled.n() - 1))
                                   : 0.0;
        if (sd > 0.0)
            min_sd = std::min(min_sd, sd);
    }
    if (!std::isfinite(min_sd))
        min_sd = 1.0;
    double max_y = scaled.y().cwiseAbs().maxCoeff();
    return 10.0 * std::max(max_y, 1e-12) / std::max(1.0, min_sd);
}

LpSummary emit_lp(const Dataset& raw, const SolveConfig& cfg, const std::filesystem::path& out,
                  const LpOptions& options)
{
    cfg.validate();
    const Dataset ds = min_max_scale(raw);
    const Index n = ds.n(), d = ds.d(), p = ds.p();
    const Index branches = (Index{1} << cfg.depth) - 1;
    const Index leaves = Index{1} << cfg.depth;
    const double big_m = options.big_m.value_or(default_big_m(ds));
    if (!(big_m > 0.0))
        throw InvalidInput("big-M must be positive");
    const double eps = options.epsilon;
    const double norm = loss_normalizer(baseline_loss(ds));
    const MatrixXd z = design_matrix(ds);

    std::ofstream file(out);
    if (!file)
        throw InvalidInput("cannot write '" + out.string() + "'");

    LpSummary summary;
    summary.big_m = big_m;

    file << "\\ Fused optimal causal tree, depth " << cfg.depth << ", n = " << n << ", d = " << d << "\n"
         << "\\ Covariates min-max scaled to [0, 1]; M = " << num(big_m) << ", eps = " << num(eps) << "\n"
         << "\\ Unsplit branches send every row right (a = 0, b = 0).\n";

    // Objective: sum_i e_i^2 / baseline + lambda * sum r.
    Expr obj;
    if (cfg.lambda > 0.0)
        for (Index j = 0; j < p; ++j)
            for (Index t1 = 0; t1 < leaves; ++t1)
                for (Index t2 = t1 + 1; t2 < leaves; ++t2)
                    obj.add(cfg.lambda, id({j, t1, t2}, "r"));
    obj.raw("+ [");
    for (Index i = 0; i < n; ++i)
        obj.raw((i == 0 ? "" : "+ ") + num(2.0 / norm) + " " + id({i}, "e") + " ^ 2");
    obj.raw("] / 2");
    file << "Minimize\n obj:" << obj.str() << "\nSubject To\n";

    auto constraint = [&](const std::string& name, const Expr& e, const char* sense, double rhs) {
        file << " " << name << ":" << e.str() << " " << sense << " " << num(rhs) << "\n";
        ++summary.n_constraints;
    };

    // Subgroup membership.
    for (Index i = 0; i < n; ++i) {
        Expr e;
        for (Index t = 0; t < leaves; ++t)
            e.add(1.0, id({i, t}, "z"));
        constraint(id({i}, "assign"), e, "=", 1.0);
    }
    for (Index i = 0; i < n; ++i)
        for (Index t = 0; t < leaves; ++t) {
            Expr e;
            e.add(1.0, id({i, t}, "z"));
            e.add(-1.0, id({t}, "l"));
            constraint(id({i, t}, "empty"), e, "<=", 0.0);
        }
    for (Index t = 0; t < leaves; ++t) {
        Expr e;
        for (Index i = 0; i < n; ++i)
            e.add(1.0, id({i, t}, "z"));
        e.add(-static_cast<double>(cfg.n_min), id({t}, "l"));
        constraint(id({t}, "nmin"), e, ">=", 0.0);
    }

    // Tree structure: routing through every ancestor of each leaf.
    for (Index t = 0; t < leaves; ++t) {
        for (Index h = t + branches; h > 0; h = (h - 1) / 2) {
            Index m = (h - 1) / 2;
            bool left = (h == 2 * m + 1);
            for (Index i = 0; i < n; ++i) {
                Expr e;
                for (Index k = 0; k < d; ++k)
                    e.add(ds.x()(i, k), id({m, k}, "a"));
                e.add(-1.0, id({m}, "b"));
                if (left) {
                    // a'x <= b + (1 + eps)(1 - z) - eps
                    e.add(1.0 + eps, id({i, t}, "z"));
                    constraint(id({i, t, m}, "left"), e, "<=", 1.0);
                } else {
                    // a'x >= b - (1 - z)
                    e.add(-1.0, id({i, t}, "z"));
                    constraint(id({i, t, m}, "right"), e, ">=", -1.0);
                }
            }
        }
    }
    for (Index m = 0; m < branches; ++m) {
        Expr e;
        for (Index k = 0; k < d; ++k)
            e.add(1.0, id({m, k}, "a"));
        e.add(-1.0, id({m}, "d"));
        constraint(id({m}, "onehot"), e, "=", 0.0);
    }
    for (Index m = 0; m < branches; ++m) {
        Expr e;
        e.add(1.0, id({m}, "b"));
        e.add(-1.0, id({m}, "d"));
        constraint(id({m}, "bcap"), e, "<=", 0.0);
    }
    for (Index m = 1; m < branches; ++m) {
        Expr e;
        e.add(1.0, id({m}, "d"));
        e.add(-1.0, id({(m - 1) / 2}, "d"));
        constraint(id({m}, "hier"), e, "<=", 0.0);
    }

    // w = z * gam through four big-M rows.
    for (Index i = 0; i < n; ++i)
        for (Index t = 0; t < leaves; ++t)
            for (Index j = 0; j < p; ++j) {
                const auto w = id({i, t, j}, "w");
                const auto zv = id({i, t}, "z");
                const auto g = id({t, j}, "gam");
                Expr e1, e2, e3, e4;
                e1.add(1.0, w);
                e1.add(-big_m, zv);
                constraint(id({i, t, j}, "wub"), e1, "<=", 0.0);
                e2.add(1.0, w);
                e2.add(big_m, zv);
                constraint(id({i, t, j}, "wlb"), e2, ">=", 0.0);
                e3.add(1.0, w);
                e3.add(-1.0, g);
                e3.add(big_m, zv);
                constraint(id({i, t, j}, "wgu"), e3, "<=", big_m);
                e4.add(1.0, w);
                e4.add(-1.0, g);
                e4.add(-big_m, zv);
                constraint(id({i, t, j}, "wgl"), e4, ">=", -big_m);
            }

    // Fusion: r = 0 forces equality.
    for (Index j = 0; j < p; ++j)
        for (Index t1 = 0; t1 < leaves; ++t1)
            for (Index t2 = t1 + 1; t2 < leaves; ++t2) {
                const auto r = id({j, t1, t2}, "r");
                Expr up, lo;
                up.add(1.0, id({t1, j}, "gam"));
                up.add(-1.0, id({t2, j}, "gam"));
                up.add(-2.0 * big_m, r);
                constraint(id({j, t1, t2}, "fuseu"), up, "<=", 0.0);
                lo.add(1.0, id({t1, j}, "gam"));
                lo.add(-1.0, id({t2, j}, "gam"));
                lo.add(2.0 * big_m, r);
                constraint(id({j, t1, t2}, "fusel"), lo, ">=", 0.0);
            }

    // Residuals.
    for (Index i = 0; i < n; ++i) {
        Expr e;
        e.add(1.0, id({i}, "e"));
        for (Index t = 0; t < leaves; ++t)
            for (Index j = 0; j < p; ++j)
                e.add(z(i, j), id({i, t, j}, "w"));
        constraint(id({i}, "resid"), e, "=", ds.y()[i]);
    }

    file << "Bounds\n";
    for (Index m = 0; m < branches; ++m)
        file << " 0 <= " << id({m}, "b") << " <= 1\n";
    for (Index t = 0; t < leaves; ++t)
        for (Index j = 0; j < p; ++j)
            file << " " << num(-big_m) << " <= " << id({t, j}, "gam") << " <= " << num(big_m) << "\n";
    for (Index i = 0; i < n; ++i)
        for (Index t = 0; t < leaves; ++t)
            for (Index j = 0; j < p; ++j)
                file << " " << num(-big_m) << " <= " << id({i, t, j}, "w") << " <= " << num(big_m) << "\n";
    for (Index i = 0; i < n; ++i)
        file << " " << id({i}, "e") << " free\n";

    file << "Binaries\n";
    auto binary = [&](const std::string& name) {
        file << " " << name << "\n";
        ++summary.n_binaries;
    };
    for (Index i = 0; i < n; ++i)
        for (Index t = 0; t < leaves; ++t)
            binary(id({i, t}, "z"));
    for (Index t = 0; t < leaves; ++t)
        binary(id({t}, "l"));
    for (Index m = 0; m < branches; ++m) {
        for (Index k = 0; k < d; ++k)
            binary(id({m, k}, "a"));
        binary(id({m}, "d"));
    }
    for (Index j = 0; j < p; ++j)
        for (Index t1 = 0; t1 < leaves; ++t1)
            for (Index t2 = t1 + 1; t2 < leaves; ++t2)
                binary(id({j, t1, t2}, "r"));
    file << "End\n";
    if (!file)
        throw InvalidInput("failed writing '" + out.string() + "'");

    const Index continuous = branches + leaves * p + n * leaves * p + n;
    summary.n_vars = summary.n_binaries + continuous;
    return summary;
}

} // namespace foct
