#pragma once

#include "foct/fitting.hpp"

namespace foct {

struct CartConfig {
    int depth = 2;
    Index n_min = 1;
    ThresholdMode thresholds = AutoThresholds{};

    void validate() const;
};

/// Greedy regression tree with an OLS model on the full design in every
/// leaf. A node is split on the candidate minimizing the children's summed
/// SSE, and only if that sum is strictly below the node's own SSE.
FittedModel fit_cart(const Dataset& ds, const CartConfig& cfg);

} // namespace foct
