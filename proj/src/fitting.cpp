#include "foct/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "foct/least_squares.hpp"

namespace foct {

Partition canonical_partition(const std::vector<Index>& labels)
{
    std::map<Index, Index> relabel;
    Partition out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto [it, inserted] = relabel.try_emplace(labels[i], static_cast<Index>(relabel.size()));
        out[i] = it->second;
    }
    return out;
}

Index class_count(const Partition& p)
{
    Index top = -1;
    for (Index v : p)
        top = std::max(top, v);
    return top + 1;
}

Index unfused_pairs(const Partition& p)
{
    auto L = static_cast<Index>(p.size());
    std::vector<Index> sizes(static_cast<std::size_t>(class_count(p)), 0);
    for (Index v : p)
        ++sizes[static_cast<std::size_t>(v)];
    Index fused = 0;
    for (Index s : sizes)
        fused += s * (s - 1) / 2;
    return L * (L - 1) / 2 - fused;
}

namespace {

void grow_partitions(Partition& prefix, Index top, Index items, std::vector<Partition>& out)
{
    if (static_cast<Index>(prefix.size()) == items) {
        out.push_back(prefix);
        return;
    }
    for (Index v = 0; v <= top + 1; ++v) {
        prefix.push_back(v);
        grow_partitions(prefix, std::max(top, v), items, out);
        prefix.pop_back();
    }
}

constexpr Index kMaxPartitionItems = Index{1} << kMaxDepth;

} // namespace

const std::vector<Partition>& set_partitions(Index items)
{
    static const std::vector<std::vector<Partition>> table = [] {
        std::vector<std::vector<Partition>> t(static_cast<std::size_t>(kMaxPartitionItems + 1));
        for (Index n = 0; n <= kMaxPartitionItems; ++n) {
            Partition prefix;
            if (n == 0)
                t[0].push_back({});
            else
                grow_partitions(prefix, -1, n, t[static_cast<std::size_t>(n)]);
        }
        return t;
    }();
    if (items < 0 || items > kMaxPartitionItems)
        throw InvalidInput("set partitions are tabulated for at most " + std::to_string(kMaxPartitionItems) +
                           " leaves");
    return table[static_cast<std::size_t>(items)];
}

double bell_number(Index items)
{
    // Bell triangle.
    std::vector<double> row{1.0};
    for (Index n = 1; n <= items; ++n) {
        std::vector<double> next{row.back()};
        for (double v : row)
            next.push_back(next.back() + v);
        row = std::move(next);
    }
    return row.front();
}

FusionPattern::FusionPattern(std::vector<Partition> per_coefficient) : parts_(std::move(per_coefficient))
{
    for (auto& p : parts_) {
        if (p.size() != parts_.front().size())
            throw InvalidInput("every coefficient's partition must cover the same leaves");
        p = canonical_partition(p);
    }
}

FusionPattern FusionPattern::all_distinct(Index coefficients, Index leaves)
{
    Partition p(static_cast<std::size_t>(leaves));
    for (Index l = 0; l < leaves; ++l)
        p[static_cast<std::size_t>(l)] = l;
    return FusionPattern(std::vector<Partition>(static_cast<std::size_t>(coefficients), p));
}

FusionPattern FusionPattern::all_fused(Index coefficients, Index leaves)
{
    return FusionPattern(std::vector<Partition>(static_cast<std::size_t>(coefficients),
                                                Partition(static_cast<std::size_t>(leaves), 0)));
}

void FusionPattern::set_partition(Index j, Partition p)
{
    if (static_cast<Index>(p.size()) != leaf_count())
        throw InvalidInput("partition size does not match the leaf count");
    parts_[static_cast<std::size_t>(j)] = canonical_partition(p);
}

std::vector<std::vector<Index>> FusionPattern::classes(Index j) const
{
    const auto& p = partition(j);
    std::vector<std::vector<Index>> out(static_cast<std::size_t>(foct::class_count(p)));
    for (std::size_t l = 0; l < p.size(); ++l)
        out[static_cast<std::size_t>(p[l])].push_back(static_cast<Index>(l));
    return out;
}

Index FusionPattern::penalty_count() const
{
    Index total = 0;
    for (const auto& p : parts_)
        total += unfused_pairs(p);
    return total;
}

Index FusionPattern::distinct_count() const
{
    Index total = 0;
    for (const auto& p : parts_)
        total += foct::class_count(p);
    return total;
}

bool FusionPattern::refines(const FusionPattern& coarser) const
{
    if (coefficient_count() != coarser.coefficient_count() || leaf_count() != coarser.leaf_count())
        return false;
    for (std::size_t j = 0; j < parts_.size(); ++j) {
        const auto& fine = parts_[j];
        const auto& coarse = coarser.parts_[j];
        std::map<Index, Index> image;
        for (std::size_t l = 0; l < fine.size(); ++l) {
            auto [it, inserted] = image.try_emplace(fine[l], coarse[l]);
            if (!inserted && it->second != coarse[l])
                return false;
        }
    }
    return true;
}

double baseline_loss(const Dataset& ds)
{
    MatrixXd z = design_matrix(ds);
    VectorXd gamma = min_norm_solve(z, ds.y());
    double sse = (ds.y() - z * gamma).squaredNorm();
    // An interpolating pooled fit leaves only round-off; call it exact.
    return sse <= 1e-20 * ds.y().squaredNorm() ? 0.0 : sse;
}

double loss_normalizer(double baseline_sse)
{
    return baseline_sse > 0.0 ? baseline_sse : 1.0;
}

double recompute_sse(const Dataset& ds, const Membership& membership, const CoefTable& coef)
{
    double sse = 0.0;
    for (Index i = 0; i < ds.n(); ++i) {
        Index slot = membership.assignment[static_cast<std::size_t>(i)];
        double r = ds.y()[i] - coef.gamma.row(slot).dot(design_row(ds, i));
        sse += r * r;
    }
    return sse;
}

namespace {

void check_pattern(const Dataset& ds, const Membership& membership, const FusionPattern& pattern)
{
    if (pattern.coefficient_count() != ds.p())
        throw InvalidInput("fusion pattern covers " + std::to_string(pattern.coefficient_count()) +
                           " coefficients, the design has " + std::to_string(ds.p()));
    if (pattern.leaf_count() != membership.leaf_count())
        throw InvalidInput("fusion pattern covers " + std::to_string(pattern.leaf_count()) +
                           " leaves, the tree has " + std::to_string(membership.leaf_count()) + " active leaves");
}

std::vector<Index> column_offsets(const FusionPattern& pattern, Index skip = -1)
{
    std::vector<Index> base(static_cast<std::size_t>(pattern.coefficient_count() + 1), 0);
    for (Index j = 0; j < pattern.coefficient_count(); ++j)
        base[static_cast<std::size_t>(j + 1)] =
            base[static_cast<std::size_t>(j)] + (j == skip ? 0 : pattern.class_count(j));
    return base;
}

} // namespace

FitResult fit_fused(const Dataset& ds, const Membership& membership, const FusionPattern& pattern, double lambda,
                    double baseline_sse)
{
    check_pattern(ds, membership, pattern);
    const Index p = ds.p();
    const auto base = column_offsets(pattern);
    const MatrixXd z = design_matrix(ds);

    MatrixXd merged = MatrixXd::Zero(ds.n(), base.back());
    for (Index i = 0; i < ds.n(); ++i) {
        Index slot = membership.assignment[static_cast<std::size_t>(i)];
        for (Index j = 0; j < p; ++j)
            merged(i, base[static_cast<std::size_t>(j)] + pattern.partition(j)[static_cast<std::size_t>(slot)]) =
                z(i, j);
    }
    VectorXd theta = min_norm_solve(merged, ds.y());

    FitResult fit;
    fit.coef.leaves = membership.leaves;
    fit.coef.gamma.resize(membership.leaf_count(), p);
    for (Index l = 0; l < membership.leaf_count(); ++l)
        for (Index j = 0; j < p; ++j)
            fit.coef.gamma(l, j) =
                theta[base[static_cast<std::size_t>(j)] + pattern.partition(j)[static_cast<std::size_t>(l)]];
    fit.sse = recompute_sse(ds, membership, fit.coef);
    fit.baseline_sse = baseline_sse;
    fit.normalized_loss = fit.sse / loss_normalizer(baseline_sse);
    fit.penalty_count = pattern.penalty_count();
    fit.lambda = lambda;
    fit.objective = fit.normalized_loss + lambda * static_cast<double>(fit.penalty_count);
    return fit;
}

FitResult fit_fused(const Dataset& ds, const TreeStructure& tree, const FusionPattern& pattern, double lambda)
{
    return fit_fused(ds, assign(tree, ds), pattern, lambda, baseline_loss(ds));
}

FusedSystem::FusedSystem(const MatrixXd& design, const VectorXd& y, const Membership& membership)
    : p_(design.cols())
{
    const Index leaves = membership.leaf_count();
    std::vector<MatrixXd> rs;
    std::vector<VectorXd> qys;
    Index offset = 0;
    for (Index l = 0; l < leaves; ++l) {
        auto rows = membership.rows_of(l);
        auto n_l = static_cast<Index>(rows.size());
        MatrixXd zl(n_l, p_);
        VectorXd yl(n_l);
        for (Index r = 0; r < n_l; ++r) {
            zl.row(r) = design.row(rows[static_cast<std::size_t>(r)]);
            yl[r] = y[rows[static_cast<std::size_t>(r)]];
        }
        Block b;
        b.offset = offset;
        b.rows = std::min(n_l, p_);
        if (n_l > 0) {
            Eigen::HouseholderQR<MatrixXd> qr(zl);
            VectorXd qty = qr.householderQ().adjoint() * yl;
            MatrixXd r = qr.matrixQR().topRows(b.rows).triangularView<Eigen::Upper>();
            rs.push_back(std::move(r));
            qys.push_back(qty.head(b.rows));
            b.residual = qty.tail(n_l - b.rows).squaredNorm();
        } else {
            rs.emplace_back(0, p_);
            qys.emplace_back(0);
        }
        residual_ += b.residual;
        offset += b.rows;
        blocks_.push_back(b);
    }
    r_.resize(offset, p_);
    qy_.resize(offset);
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        r_.middleRows(blocks_[l].offset, blocks_[l].rows) = rs[l];
        qy_.segment(blocks_[l].offset, blocks_[l].rows) = qys[l];
    }
}

MatrixXd FusedSystem::merged(const FusionPattern& pattern, Index skip_coefficient) const
{
    const auto base = column_offsets(pattern, skip_coefficient);
    MatrixXd x = MatrixXd::Zero(r_.rows(), base.back());
    for (Index j = 0; j < p_; ++j) {
        if (j == skip_coefficient)
            continue;
        const auto& part = pattern.partition(j);
        for (std::size_t l = 0; l < blocks_.size(); ++l) {
            const auto& b = blocks_[l];
            x.block(b.offset, base[static_cast<std::size_t>(j)] + part[l], b.rows, 1) =
                r_.block(b.offset, j, b.rows, 1);
        }
    }
    return x;
}

MatrixXd FusedSystem::unfused_coefficients() const
{
    MatrixXd coef = MatrixXd::Zero(leaf_count(), p_);
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        const auto& b = blocks_[l];
        if (b.rows > 0)
            coef.row(static_cast<Index>(l)) =
                min_norm_solve(r_.middleRows(b.offset, b.rows), qy_.segment(b.offset, b.rows)).transpose();
    }
    return coef;
}

double FusedSystem::sse(const FusionPattern& pattern) const
{
    return residual_sum_squares(merged(pattern, -1), qy_) + residual_;
}

double FusedSystem::unfused_sse() const
{
    return sse(FusionPattern::all_distinct(p_, leaf_count()));
}

std::vector<double> FusedSystem::coordinate_sse(const FusionPattern& pattern, Index j,
                                                const std::vector<Partition>& candidates) const
{
    const Index leaves = leaf_count();
    const Index rows = r_.rows();
    // Columns 0..L-1: leaf l's copy of coefficient j. Column L: the response.
    MatrixXd target = MatrixXd::Zero(rows, leaves + 1);
    VectorXd leaf_norm2(leaves);
    for (Index l = 0; l < leaves; ++l) {
        const auto& b = blocks_[static_cast<std::size_t>(l)];
        target.block(b.offset, l, b.rows, 1) = r_.block(b.offset, j, b.rows, 1);
        leaf_norm2[l] = r_.block(b.offset, j, b.rows, 1).squaredNorm();
    }
    target.col(leaves) = qy_;
    MatrixXd others = merged(pattern, j);
    project_out(others, target);
    const VectorXd y_perp = target.col(leaves);

    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& part : candidates) {
        Index k = foct::class_count(part);
        MatrixXd m = MatrixXd::Zero(rows, k);
        VectorXd scale2 = VectorXd::Zero(k);
        for (Index l = 0; l < leaves; ++l) {
            m.col(part[static_cast<std::size_t>(l)]) += target.col(l);
            scale2[part[static_cast<std::size_t>(l)]] += leaf_norm2[l];
        }
        double tol = kRankTolerance<double> * std::sqrt(scale2.maxCoeff());
        out.push_back(residual_sum_squares(m, y_perp, tol) + residual_);
    }
    return out;
}

bool objectives_tied(double a, double b)
{
    return std::abs(a - b) <= 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
}

bool better_score(double obj_a, Index pen_a, const FusionPattern& a, double obj_b, Index pen_b,
                  const FusionPattern& b)
{
    if (!objectives_tied(obj_a, obj_b))
        return obj_a < obj_b;
    if (pen_a != pen_b)
        return pen_a < pen_b;
    return a < b;
}

namespace {

PatternScore exact_search(const FusedSystem& system, double norm, double lambda)
{
    const Index p = system.coefficient_count();
    const Index leaves = system.leaf_count();
    const auto& parts = set_partitions(leaves);
    const auto bell = static_cast<Index>(parts.size());
    if (std::pow(static_cast<double>(bell), static_cast<double>(p)) > kExactPatternLimit)
        throw BudgetExceeded("exact fusion search needs Bell(" + std::to_string(leaves) + ")^" + std::to_string(p) +
                             " patterns, above the limit of 1e6");
    std::vector<Index> pen(parts.size());
    for (std::size_t c = 0; c < parts.size(); ++c)
        pen[c] = unfused_pairs(parts[c]);

    std::vector<Index> digit(static_cast<std::size_t>(p), 0);
    FusionPattern current(std::vector<Partition>(static_cast<std::size_t>(p), parts[0]));
    PatternScore best;
    bool have = false;
    for (;;) {
        Index pen_head = 0;
        for (Index j = 0; j + 1 < p; ++j)
            pen_head += pen[static_cast<std::size_t>(digit[static_cast<std::size_t>(j)])];
        auto losses = system.coordinate_sse(current, p - 1, parts);
        for (Index c = 0; c < bell; ++c) {
            double obj = losses[static_cast<std::size_t>(c)] / norm +
                         lambda * static_cast<double>(pen_head + pen[static_cast<std::size_t>(c)]);
            Index total_pen = pen_head + pen[static_cast<std::size_t>(c)];
            if (have && !objectives_tied(obj, best.objective) && obj > best.objective)
                continue;
            FusionPattern cand = current;
            cand.set_partition(p - 1, parts[static_cast<std::size_t>(c)]);
            if (!have || better_score(obj, total_pen, cand, best.objective, best.penalty, best.pattern)) {
                best = {std::move(cand), obj, total_pen};
                have = true;
            }
        }
        Index j = p - 2;
        for (; j >= 0; --j) {
            auto& dj = digit[static_cast<std::size_t>(j)];
            if (++dj < bell) {
                current.set_partition(j, parts[static_cast<std::size_t>(dj)]);
                break;
            }
            dj = 0;
            current.set_partition(j, parts[0]);
        }
        if (j < 0)
            break;
    }
    return best;
}

PatternScore descend(const FusedSystem& system, double norm, double lambda, FusionPattern start, int max_iter)
{
    const Index p = system.coefficient_count();
    const auto& parts = set_partitions(system.leaf_count());
    FusionPattern cur = std::move(start);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (Index j = 0; j < p; ++j) {
            Index pen_rest = cur.penalty_count() - unfused_pairs(cur.partition(j));
            auto losses = system.coordinate_sse(cur, j, parts);
            std::size_t best = parts.size();
            double best_obj = 0.0;
            Index best_pen = 0;
            for (std::size_t c = 0; c < parts.size(); ++c) {
                Index pen = pen_rest + unfused_pairs(parts[c]);
                double obj = losses[c] / norm + lambda * static_cast<double>(pen);
                bool take = best == parts.size();
                if (!take) {
                    if (!objectives_tied(obj, best_obj))
                        take = obj < best_obj;
                    else if (pen != best_pen)
                        take = pen < best_pen;
                    else
                        take = parts[c] < parts[best];
                }
                if (take) {
                    best = c;
                    best_obj = obj;
                    best_pen = pen;
                }
            }
            if (parts[best] != cur.partition(j)) {
                cur.set_partition(j, parts[best]);
                changed = true;
            }
        }
        if (!changed)
            break;
    }
    Index pen = cur.penalty_count();
    double obj = system.sse(cur) / norm + lambda * static_cast<double>(pen);
    return {std::move(cur), obj, pen};
}

FusionPattern random_pattern(Index p, Index leaves, std::mt19937_64& rng)
{
    std::vector<Partition> parts(static_cast<std::size_t>(p), Partition(static_cast<std::size_t>(leaves)));
    for (auto& part : parts)
        for (auto& v : part)
            v = static_cast<Index>(rng() % static_cast<std::uint64_t>(leaves));
    return FusionPattern(std::move(parts));
}

// Leaves whose unfused estimates of coefficient j lie within `tol` of a
// neighbour (after sorting) share a class: single linkage on a line.
FusionPattern clustered_pattern(const MatrixXd& coef, double tol)
{
    const Index leaves = coef.rows();
    std::vector<Partition> parts;
    for (Index j = 0; j < coef.cols(); ++j) {
        std::vector<Index> order(static_cast<std::size_t>(leaves));
        std::iota(order.begin(), order.end(), Index{0});
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return coef(a, j) < coef(b, j); });
        const double scale = 1.0 + coef.col(j).cwiseAbs().maxCoeff();
        std::vector<Index> labels(static_cast<std::size_t>(leaves));
        Index label = 0;
        for (std::size_t k = 0; k < order.size(); ++k) {
            if (k > 0 && coef(order[k], j) - coef(order[k - 1], j) > tol * scale)
                ++label;
            labels[static_cast<std::size_t>(order[k])] = label;
        }
        parts.push_back(canonical_partition(labels));
    }
    return FusionPattern(std::move(parts));
}

} // namespace

PatternScore search_patterns(const FusedSystem& system, double baseline_sse, double lambda,
                             const FusionBudget& budget, unsigned threads)
{
    if (system.leaf_count() < 1)
        throw InvalidInput("fusion search needs at least one active leaf");
    if (lambda < 0.0)
        throw InvalidInput("lambda must be nonnegative");
    const double norm = loss_normalizer(baseline_sse);
    if (std::holds_alternative<ExactFusion>(budget))
        return exact_search(system, norm, lambda);

    const auto& cfg = std::get<DescentFusion>(budget);
    const Index p = system.coefficient_count();
    const Index leaves = system.leaf_count();
    std::vector<FusionPattern> starts{FusionPattern::all_distinct(p, leaves), FusionPattern::all_fused(p, leaves)};
    const MatrixXd unfused = system.unfused_coefficients();
    for (double tol : {1e-8, 0.05, 0.25})
        starts.push_back(clustered_pattern(unfused, tol));
    for (int r = 0; r < cfg.restarts; ++r) {
        auto rng = stream(cfg.seed, {static_cast<std::uint64_t>(r)});
        starts.push_back(random_pattern(p, leaves, rng));
    }
    std::vector<PatternScore> results(starts.size());
    parallel_for(starts.size(), threads, [&](std::size_t s) {
        results[s] = descend(system, norm, lambda, starts[s], std::max(1, cfg.max_iter));
    });
    std::size_t best = 0;
    for (std::size_t s = 1; s < results.size(); ++s)
        if (better_score(results[s].objective, results[s].penalty, results[s].pattern, results[best].objective,
                         results[best].penalty, results[best].pattern))
            best = s;
    return results[best];
}

FusionSearchResult search_fusion(const Dataset& ds, const Membership& membership, double lambda,
                                 const FusionBudget& budget, double baseline_sse, unsigned threads)
{
    FusedSystem system(design_matrix(ds), ds.y(), membership);
    auto score = search_patterns(system, baseline_sse, lambda, budget, threads);
    auto fit = fit_fused(ds, membership, score.pattern, lambda, baseline_sse);
    return {std::move(score.pattern), std::move(fit)};
}

FusionSearchResult search_fusion(const Dataset& ds, const TreeStructure& tree, double lambda,
                                 const FusionBudget& budget, unsigned threads)
{
    return search_fusion(ds, assign(tree, ds), lambda, budget, baseline_loss(ds), threads);
}

} // namespace foct

namespace foct {

double leaf_ols_sse(const MatrixXd& design, const VectorXd& y, const std::vector<Index>& rows)
{
    auto n = static_cast<Index>(rows.size());
    MatrixXd z(n, design.cols());
    VectorXd v(n);
    for (Index r = 0; r < n; ++r) {
        z.row(r) = design.row(rows[static_cast<std::size_t>(r)]);
        v[r] = y[rows[static_cast<std::size_t>(r)]];
    }
    return residual_sum_squares(z, v);
}

MatrixXd leaf_means(const Dataset& ds, const Membership& membership)
{
    MatrixXd means = MatrixXd::Zero(membership.leaf_count(), ds.d());
    for (Index i = 0; i < ds.n(); ++i)
        means.row(membership.assignment[static_cast<std::size_t>(i)]) += ds.x().row(i);
    for (Index l = 0; l < membership.leaf_count(); ++l)
        if (auto c = membership.leaf_counts[static_cast<std::size_t>(l)]; c > 0)
            means.row(l) /= static_cast<double>(c);
    return means;
}

FittedModel make_model(const Dataset& ds, const TreeStructure& tree, const FusionPattern& pattern, double lambda,
                       double baseline_sse)
{
    auto membership = assign(tree, ds);
    FittedModel m{tree, pattern, fit_fused(ds, membership, pattern, lambda, baseline_sse), leaf_means(ds, membership),
                  membership.leaf_counts};
    return m;
}

FittedModel make_model(const Dataset& ds, const TreeStructure& tree, const FusionPattern& pattern, double lambda)
{
    return make_model(ds, tree, pattern, lambda, baseline_loss(ds));
}

VectorXd predict_mean(const FittedModel& model, const Dataset& ds)
{
    auto membership = assign(model.tree, ds);
    VectorXd f(ds.n());
    for (Index i = 0; i < ds.n(); ++i)
        f[i] = model.fit.coef.gamma.row(membership.assignment[static_cast<std::size_t>(i)]).dot(design_row(ds, i));
    return f;
}

VectorXd predict_tau(const FittedModel& model, const Dataset& ds)
{
    const Index d = ds.d();
    if (model.leaf_means.cols() != d)
        throw InvalidInput("model covariate count does not match the dataset");
    const auto& g = model.fit.coef.gamma;
    VectorXd leaf_tau(g.rows());
    for (Index l = 0; l < g.rows(); ++l)
        leaf_tau[l] = g(l, coef::treatment) + g.row(l).segment(2 + d, d).dot(model.leaf_means.row(l));
    auto membership = assign(model.tree, ds);
    VectorXd tau(ds.n());
    for (Index i = 0; i < ds.n(); ++i)
        tau[i] = leaf_tau[membership.assignment[static_cast<std::size_t>(i)]];
    return tau;
}

} // namespace foct
