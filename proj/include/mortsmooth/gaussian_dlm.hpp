#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mortsmooth/core.hpp"
#include "mortsmooth/fit_result.hpp"

namespace mortsmooth {

// Local-level dynamic linear model over ages:
//   y[x] = level[x] + v[x],          v ~ N(0, V)
//   level[x] = level[x-1] + w[x],    w ~ N(0, W)
//   level[0] ~ N(m0, C0)
// Missing observations skip the update step.

struct DlmSpec {
    double obs_variance = 1.0;      // V
    double state_variance = 1.0;    // W
    double initial_mean = 0.0;      // m0
    double initial_variance = 1.0;  // C0
    bool regression = false;        // observations carry a mu * S[x] term

    void validate() const;
};

struct FilterOutput {
    Eigen::VectorXd predicted_means;
    Eigen::VectorXd predicted_variances;
    Eigen::VectorXd filtered_means;
    Eigen::VectorXd filtered_variances;
    double loglik = 0.0;  // sum of one-step predictive log densities over observed ages
    int observed = 0;
};

struct SmootherOutput {
    Eigen::VectorXd means;
    Eigen::VectorXd variances;
};

/// Throws InsufficientData when every observation is missing.
FilterOutput kalman_filter(const std::vector<std::optional<double>>& observations, const DlmSpec& spec);

/// Rauch-Tung-Striebel backward pass.
SmootherOutput kalman_smoother(const FilterOutput& filtered, const DlmSpec& spec);

struct DlmOptions {
    bool regression = false;
    // Loading on the standard when regression is on; estimated with V and W when absent.
    std::optional<double> mu;
    double min_variance = 1e-10;
    double max_variance = 100.0;
    double initial_variance = 10.0;  // C0; m0 is the mean of the observed values
    int min_observed = 5;
    int max_evaluations = 20000;
};

struct DlmFit {
    Eigen::VectorXd filtered_means;
    Eigen::VectorXd filtered_variances;
    Eigen::VectorXd smoothed_means;
    Eigen::VectorXd smoothed_variances;
    double loglik = 0.0;
    double obs_variance = 0.0;
    double state_variance = 0.0;
    double mu = 0.0;  // 0 unless regression is on
    int observed = 0;
    DlmSpec spec;
};

/// Observation vector for a record: log naive rates, absent at zero-death and
/// zero-exposure ages.
std::vector<std::optional<double>> dlm_observations(const PopulationRecord& record);

/// Maximum-likelihood (V, W) by bounded Nelder-Mead on log variances, then
/// smoothing. `standard` is required when options.regression is set.
/// Throws InsufficientData below options.min_observed observed ages.
std::pair<DlmFit, FitResult> fit_dlm(const PopulationRecord& record, const StandardSchedule* standard,
                                     const DlmOptions& options = {});

}  // namespace mortsmooth
