#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace mortsmooth {

struct MetricsRow {
    double rbias = 0.0;
    double rmse = 0.0;  // square root of the mean squared error
    double mape = 0.0;
    int n_ages_used = 0;
};

/// Errors of estimated against true log-rates, averaged over all ages:
///   RBias = mean((t - e) / t),  MSE = mean((t - e)^2),  MAPE = mean(|t - e| / |t|).
/// RBias keeps the sign of the ratio literally, so with negative log-rates an
/// overestimate gives a positive RBias.
/// Throws DegenerateDenominator if any true log-rate is exactly 0.
MetricsRow evaluate(const Eigen::VectorXd& true_log_rates, const Eigen::VectorXd& estimated_log_rates);

/// Same metrics against an observed schedule; ages without an observed
/// log-rate are skipped and n_ages_used counts the rest.
MetricsRow evaluate_observed(const std::vector<std::optional<double>>& observed_log_rates,
                             const Eigen::VectorXd& estimated_log_rates);

}  // namespace mortsmooth
