#include "foct/model_io.hpp"

#include <fstream>

namespace foct {

namespace {

Json vector_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd json_vector(const Json& j)
{
    auto v = j.get<std::vector<double>>();
    return Eigen::Map<VectorXd>(v.data(), static_cast<Index>(v.size()));
}

Json matrix_json(const MatrixXd& m)
{
    Json rows = Json::array();
    for (Index r = 0; r < m.rows(); ++r)
        rows.push_back(vector_json(m.row(r).transpose()));
    return rows;
}

MatrixXd json_matrix(const Json& j, Index cols)
{
    MatrixXd m(static_cast<Index>(j.size()), cols);
    for (Index r = 0; r < m.rows(); ++r) {
        VectorXd row = json_vector(j.at(static_cast<std::size_t>(r)));
        if (row.size() != cols)
            throw InvalidInput("matrix row has the wrong length");
        m.row(r) = row.transpose();
    }
    return m;
}

} // namespace

Json tree_to_json(const TreeStructure& tree)
{
    Json nodes = Json::array();
    for (Index h = 0; h < tree.branch_count(); ++h) {
        const auto& s = tree.split(h);
        nodes.push_back({{"id", h},
                         {"variable", s ? Json(s->variable) : Json(nullptr)},
                         {"threshold", s ? Json(s->threshold) : Json(nullptr)}});
    }
    return {{"depth", tree.depth()}, {"nodes", nodes}, {"active_leaves", tree.active_leaves()}};
}

TreeStructure tree_from_json(const Json& j)
{
    int depth = j.at("depth").get<int>();
    if (depth < 0 || depth > kMaxDepth)
        throw InvalidInput("tree depth out of range");
    std::vector<std::optional<Split>> splits(static_cast<std::size_t>((Index{1} << depth) - 1));
    for (const auto& node : j.at("nodes")) {
        auto id = node.at("id").get<Index>();
        if (id < 0 || id >= static_cast<Index>(splits.size()))
            throw InvalidInput("tree node id out of range");
        if (!node.at("variable").is_null())
            splits[static_cast<std::size_t>(id)] =
                Split{node.at("variable").get<Index>(), node.at("threshold").get<double>()};
    }
    return TreeStructure(depth, std::move(splits));
}

Json pattern_to_json(const FusionPattern& pattern, const std::vector<Index>& leaves)
{
    Json out = Json::array();
    for (Index j = 0; j < pattern.coefficient_count(); ++j) {
        Json classes = Json::array();
        for (const auto& cls : pattern.classes(j)) {
            Json ids = Json::array();
            for (Index slot : cls)
                ids.push_back(leaves[static_cast<std::size_t>(slot)]);
            classes.push_back(ids);
        }
        out.push_back(classes);
    }
    return out;
}

FusionPattern pattern_from_json(const Json& j, const std::vector<Index>& leaves)
{
    std::vector<Partition> parts;
    for (const auto& classes : j) {
        std::vector<Index> labels(leaves.size(), -1);
        Index label = 0;
        for (const auto& cls : classes) {
            for (const auto& id : cls) {
                auto it = std::find(leaves.begin(), leaves.end(), id.get<Index>());
                if (it == leaves.end())
                    throw InvalidInput("fusion pattern names an inactive leaf");
                labels[static_cast<std::size_t>(it - leaves.begin())] = label;
            }
            ++label;
        }
        if (std::find(labels.begin(), labels.end(), -1) != labels.end())
            throw InvalidInput("fusion pattern leaves a leaf unassigned");
        parts.push_back(canonical_partition(labels));
    }
    return FusionPattern(std::move(parts));
}

std::vector<std::string> coefficient_names(const std::vector<std::string>& feature_names)
{
    std::vector<std::string> names{"intercept", "T"};
    for (const auto& f : feature_names)
        names.push_back(f);
    for (const auto& f : feature_names)
        names.push_back("T:" + f);
    return names;
}

Json model_to_json(const FittedModel& model, const std::vector<std::string>& feature_names,
                   const std::optional<Standardizer>& standardizer)
{
    const auto& fit = model.fit;
    Json j{{"schema_version", kSchemaVersion},
           {"feature_names", feature_names},
           {"coefficient_names", coefficient_names(feature_names)},
           {"tree", tree_to_json(model.tree)},
           {"pattern", pattern_to_json(model.pattern, fit.coef.leaves)},
           {"coefficients", {{"leaves", fit.coef.leaves}, {"gamma", matrix_json(fit.coef.gamma)}}},
           {"fit",
            {{"sse", fit.sse},
             {"baseline_sse", fit.baseline_sse},
             {"normalized_loss", fit.normalized_loss},
             {"penalty_count", fit.penalty_count},
             {"distinct_count", model.pattern.distinct_count()},
             {"lambda", fit.lambda},
             {"objective", fit.objective}}},
           {"leaf_means", matrix_json(model.leaf_means)},
           {"leaf_sizes", model.leaf_sizes}};
    if (standardizer) {
        Json s{{"means", vector_json(standardizer->means)}, {"sds", vector_json(standardizer->sds)}};
        s["y_mean"] = standardizer->y_mean ? Json(*standardizer->y_mean) : Json(nullptr);
        s["y_sd"] = standardizer->y_sd ? Json(*standardizer->y_sd) : Json(nullptr);
        j["standardizer"] = s;
    }
    return j;
}

LoadedModel model_from_json(const Json& j)
{
    if (j.value("schema_version", -1) != kSchemaVersion)
        throw InvalidInput("unsupported model schema version");
    try {
        LoadedModel out;
        out.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        const auto d = static_cast<Index>(out.feature_names.size());
        auto& m = out.model;
        m.tree = tree_from_json(j.at("tree"));
        m.tree.validate(d);
        m.fit.coef.leaves = j.at("coefficients").at("leaves").get<std::vector<Index>>();
        if (m.fit.coef.leaves != m.tree.active_leaves())
            throw InvalidInput("coefficient leaves do not match the tree");
        m.fit.coef.gamma = json_matrix(j.at("coefficients").at("gamma"), 2 * d + 2);
        m.pattern = pattern_from_json(j.at("pattern"), m.fit.coef.leaves);
        const auto& fit = j.at("fit");
        m.fit.sse = fit.at("sse").get<double>();
        m.fit.baseline_sse = fit.at("baseline_sse").get<double>();
        m.fit.normalized_loss = fit.at("normalized_loss").get<double>();
        m.fit.penalty_count = fit.at("penalty_count").get<Index>();
        m.fit.lambda = fit.at("lambda").get<double>();
        m.fit.objective = fit.at("objective").get<double>();
        m.leaf_means = json_matrix(j.at("leaf_means"), d);
        m.leaf_sizes = j.at("leaf_sizes").get<std::vector<Index>>();
        if (j.contains("standardizer")) {
            const auto& s = j.at("standardizer");
            Standardizer st;
            st.means = json_vector(s.at("means"));
            st.sds = json_vector(s.at("sds"));
            if (!s.at("y_mean").is_null())
                st.y_mean = s.at("y_mean").get<double>();
            if (!s.at("y_sd").is_null())
                st.y_sd = s.at("y_sd").get<double>();
            out.standardizer = st;
        }
        return out;
    } catch (const Json::exception& e) {
        throw InvalidInput(std::string("malformed model file: ") + e.what());
    }
}

Json report_to_json(const SolveReport& report)
{
    return {{"certified_optimal", report.certified_optimal},
            {"trees_total", report.trees_total},
            {"trees_evaluated", report.trees_evaluated},
            {"trees_pruned", report.trees_pruned},
            {"wall_time", report.wall_time}};
}

Json effects_to_json(const std::vector<SubgroupEffect>& effects)
{
    Json out = Json::array();
    for (const auto& e : effects) {
        Json item{{"leaf", e.leaf},         {"n", e.n},
                  {"mu_hat", e.mu_hat},     {"beta_hat", vector_json(e.beta_hat)},
                  {"xbar", vector_json(e.xbar)}, {"tau_hat", e.tau_hat}};
        if (e.ci)
            item["ci"] = {e.ci->first, e.ci->second};
        out.push_back(item);
    }
    return out;
}

void write_json(const Json& j, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw InvalidInput("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

Json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidInput("cannot read '" + path.string() + "'");
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw InvalidInput("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

} // namespace foct
