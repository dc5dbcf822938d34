#pragma once

#include <optional>
#include <string>

#include <Eigen/Dense>

#include "mortsmooth/core.hpp"

namespace mortsmooth {

/// Fitted log-rate schedule for one population, common to every model.
struct FitResult {
    std::string area_id;
    Sex sex = Sex::both;
    std::string model;
    Eigen::VectorXd log_rate_hat;
    // Pointwise interval bounds; absent for point-estimate models.
    std::optional<Eigen::VectorXd> lower;
    std::optional<Eigen::VectorXd> upper;

    bool has_interval() const noexcept { return lower.has_value() && upper.has_value(); }
};

}  // namespace mortsmooth
