#include "foct/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace foct {

namespace {

std::vector<std::string> split_row(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    for (auto& c : cells) {
        auto b = c.find_first_not_of(" \t\r\"");
        auto e = c.find_last_not_of(" \t\r\"");
        c = b == std::string::npos ? std::string{} : c.substr(b, e - b + 1);
    }
    return cells;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column)
{
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (cell.empty() || ec != std::errc{} || ptr != last || !std::isfinite(v))
        throw InvalidInput("row " + std::to_string(row) + ", column '" + column +
                           "': cannot parse '" + cell + "' as a finite number");
    return v;
}

double sample_sd(const VectorXd& v, double mean)
{
    if (v.size() < 2)
        return 0.0;
    return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

} // namespace

Dataset::Dataset(MatrixXd x, VectorXd t, VectorXd y, std::vector<std::string> feature_names)
    : x_(std::move(x)), t_(std::move(t)), y_(std::move(y)), names_(std::move(feature_names))
{
    if (x_.rows() < 1 || x_.cols() < 1)
        throw InvalidInput("dataset needs at least one row and one covariate");
    if (t_.size() != x_.rows() || y_.size() != x_.rows())
        throw InvalidInput("treatment and outcome lengths must match the covariate rows");
    if (!x_.allFinite() || !y_.allFinite())
        throw InvalidInput("dataset entries must be finite");
    for (Index i = 0; i < t_.size(); ++i)
        if (t_[i] != 0.0 && t_[i] != 1.0)
            throw InvalidInput("treatment at row " + std::to_string(i) + " is not 0/1");
    if (names_.empty())
        for (Index k = 0; k < x_.cols(); ++k)
            names_.push_back("x" + std::to_string(k + 1));
    if (static_cast<Index>(names_.size()) != x_.cols())
        throw InvalidInput("feature_names length must equal the number of covariates");
}

Dataset Dataset::subset(const std::vector<Index>& rows) const
{
    auto count = static_cast<Index>(rows.size());
    MatrixXd x(count, d());
    VectorXd t(count), y(count);
    for (Index r = 0; r < count; ++r) {
        x.row(r) = x_.row(rows[r]);
        t[r] = t_[rows[r]];
        y[r] = y_[rows[r]];
    }
    return Dataset(std::move(x), std::move(t), std::move(y), names_);
}

Dataset load_csv(const std::filesystem::path& path, const ColumnRoles& roles)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidInput("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line))
        throw InvalidInput("'" + path.string() + "' is empty; a header row is required");
    auto header = split_row(line);

    auto column_of = [&](const std::string& name) -> std::size_t {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == name)
                return c;
        throw InvalidInput("column '" + name + "' not found in header of '" + path.string() + "'");
    };
    if (roles.outcome.empty() || roles.treatment.empty())
        throw InvalidInput("outcome and treatment columns must be named");
    std::size_t y_col = column_of(roles.outcome);
    std::size_t t_col = column_of(roles.treatment);
    std::vector<std::size_t> x_cols;
    std::vector<std::string> names;
    if (roles.covariates.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (c != y_col && c != t_col) {
                x_cols.push_back(c);
                names.push_back(header[c]);
            }
    } else {
        for (const auto& name : roles.covariates) {
            x_cols.push_back(column_of(name));
            names.push_back(name);
        }
    }
    if (x_cols.empty())
        throw InvalidInput("no covariate columns selected");

    std::vector<double> xs, ts, ys;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        auto cells = split_row(line);
        if (cells.size() != header.size())
            throw InvalidInput("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                               " cells, header has " + std::to_string(header.size()));
        double t = parse_cell(cells[t_col], row, roles.treatment);
        if (t != 0.0 && t != 1.0)
            throw InvalidInput("row " + std::to_string(row) + ": treatment value '" + cells[t_col] +
                               "' is not 0 or 1");
        ts.push_back(t);
        ys.push_back(parse_cell(cells[y_col], row, roles.outcome));
        for (std::size_t k = 0; k < x_cols.size(); ++k)
            xs.push_back(parse_cell(cells[x_cols[k]], row, names[k]));
        ++row;
    }
    if (row == 0)
        throw InvalidInput("'" + path.string() + "' has no data rows");

    auto n = static_cast<Index>(row);
    auto d = static_cast<Index>(x_cols.size());
    MatrixXd x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        xs.data(), n, d);
    return Dataset(std::move(x), Eigen::Map<VectorXd>(ts.data(), n), Eigen::Map<VectorXd>(ys.data(), n),
                   std::move(names));
}

void save_csv(const Dataset& ds, const std::filesystem::path& path, const std::string& outcome,
              const std::string& treatment)
{
    std::ofstream out(path);
    if (!out)
        throw InvalidInput("cannot write '" + path.string() + "'");
    out << outcome << ',' << treatment;
    for (const auto& name : ds.feature_names())
        out << ',' << name;
    out << '\n' << std::setprecision(17);
    for (Index i = 0; i < ds.n(); ++i) {
        out << ds.y()[i] << ',' << static_cast<int>(ds.t()[i]);
        for (Index k = 0; k < ds.d(); ++k)
            out << ',' << ds.x()(i, k);
        out << '\n';
    }
}

Dataset Standardizer::apply(const Dataset& ds) const
{
    MatrixXd x = (ds.x().rowwise() - means.transpose()).array().rowwise() / sds.transpose().array();
    VectorXd y = ds.y();
    if (y_mean && y_sd)
        y = (y.array() - *y_mean) / *y_sd;
    return Dataset(std::move(x), ds.t(), std::move(y), ds.feature_names());
}

Dataset Standardizer::invert(const Dataset& ds) const
{
    MatrixXd x = (ds.x().array().rowwise() * sds.transpose().array()).matrix().rowwise() + means.transpose();
    VectorXd y = ds.y();
    if (y_mean && y_sd)
        y = y.array() * *y_sd + *y_mean;
    return Dataset(std::move(x), ds.t(), std::move(y), ds.feature_names());
}

std::pair<Dataset, Standardizer> standardize(const Dataset& ds, bool include_outcome)
{
    Standardizer s;
    s.means = ds.x().colwise().mean().transpose();
    s.sds.resize(ds.d());
    for (Index k = 0; k < ds.d(); ++k) {
        s.sds[k] = sample_sd(ds.x().col(k), s.means[k]);
        if (!(s.sds[k] > 0.0))
            throw InvalidInput("covariate '" + ds.feature_names()[static_cast<std::size_t>(k)] +
                               "' has zero variance and cannot be standardized");
    }
    if (include_outcome) {
        double m = ds.y().mean();
        double sd = sample_sd(ds.y(), m);
        if (!(sd > 0.0))
            throw InvalidInput("outcome has zero variance and cannot be standardized");
        s.y_mean = m;
        s.y_sd = sd;
    }
    return {s.apply(ds), s};
}

VectorXd design_row(const Dataset& ds, Index i)
{
    if (i < 0 || i >= ds.n())
        throw InvalidInput("row index " + std::to_string(i) + " out of range [0, " + std::to_string(ds.n()) + ")");
    const Index d = ds.d();
    VectorXd z(2 * d + 2);
    const double t = ds.t()[i];
    z[0] = 1.0;
    z[1] = t;
    z.segment(2, d) = ds.x().row(i).transpose();
    z.segment(2 + d, d) = t * ds.x().row(i).transpose();
    return z;
}

MatrixXd design_matrix(const Dataset& ds)
{
    const Index d = ds.d();
    MatrixXd z(ds.n(), 2 * d + 2);
    z.col(0).setOnes();
    z.col(1) = ds.t();
    z.middleCols(2, d) = ds.x();
    z.middleCols(2 + d, d) = ds.x().array().colwise() * ds.t().array();
    return z;
}

} // namespace foct
