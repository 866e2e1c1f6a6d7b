#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "foct/causal.hpp"
#include "foct/select.hpp"

namespace foct {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

Json tree_to_json(const TreeStructure& tree);
TreeStructure tree_from_json(const Json& j);

/// Per coefficient, the classes as lists of leaf positions.
Json pattern_to_json(const FusionPattern& pattern, const std::vector<Index>& leaves);
FusionPattern pattern_from_json(const Json& j, const std::vector<Index>& leaves);

/// Everything needed to predict with, and recompute statistics of, a model.
/// The standardizer, when given, records the transform applied to the
/// training data before fitting.
Json model_to_json(const FittedModel& model, const std::vector<std::string>& feature_names,
                   const std::optional<Standardizer>& standardizer = std::nullopt);

struct LoadedModel {
    FittedModel model;
    std::vector<std::string> feature_names;
    std::optional<Standardizer> standardizer;
};
LoadedModel model_from_json(const Json& j);

Json report_to_json(const SolveReport& report);
Json effects_to_json(const std::vector<SubgroupEffect>& effects);

void write_json(const Json& j, const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

/// Names of the design entries: intercept, T, each covariate, T:covariate.
std::vector<std::string> coefficient_names(const std::vector<std::string>& feature_names);

} // namespace foct
