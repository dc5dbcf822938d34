#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mortsmooth/core.hpp"
#include "mortsmooth/fit_result.hpp"

namespace mortsmooth {

inline constexpr int kDefaultKnots[] = {0, 1, 10, 20, 40, 70, 100};

/// Linear B-spline (hat function) basis over single-year ages.
struct SplineBasis {
    Eigen::MatrixXd matrix;  // ages x knots
    std::vector<int> knots;

    int num_ages() const noexcept { return static_cast<int>(matrix.rows()); }
    int num_knots() const noexcept { return static_cast<int>(matrix.cols()); }
};

/// Knots must be strictly increasing with the first <= 0 and the last
/// >= max age + 1, so every age falls inside a knot span. Throws InvalidKnots.
SplineBasis build_basis(const AgeGrid& grid, std::span<const int> knots = kDefaultKnots);

struct TopalsOptions {
    double penalty_weight = 1.0;
    int max_iter = 50;
    double tolerance = 1e-8;  // on the max-norm of the gradient
    int max_halvings = 20;
};

struct TopalsFit {
    Eigen::VectorXd alpha;  // log-rate offsets at the knots
    Eigen::VectorXd fitted_log_rates;
    int iterations = 0;
    bool converged = false;
    double final_gradient_norm = 0.0;
    double penalty_weight = 0.0;
    std::vector<double> objective_trace;  // objective at the start and after each accepted step
};

// Penalized Poisson log-likelihood of the offsets, without terms that depend
// only on the deaths:
//   sum_x [ Y_x eta_x - E_x exp(eta_x) ] - (penalty/2) sum_k (alpha_k - alpha_{k-1})^2
// with eta = S + B alpha.
double topals_log_posterior(const Eigen::VectorXd& alpha, const Eigen::VectorXd& deaths,
                            const Eigen::VectorXd& exposures, const Eigen::VectorXd& standard,
                            const SplineBasis& basis, double penalty_weight);

Eigen::VectorXd topals_gradient(const Eigen::VectorXd& alpha, const Eigen::VectorXd& deaths,
                                const Eigen::VectorXd& exposures, const Eigen::VectorXd& standard,
                                const SplineBasis& basis, double penalty_weight);

Eigen::MatrixXd topals_hessian(const Eigen::VectorXd& alpha, const Eigen::VectorXd& exposures,
                               const Eigen::VectorXd& standard, const SplineBasis& basis,
                               double penalty_weight);

/// Newton ascent with step halving, starting from alpha = 0.
/// Throws NonIdentifiable when the Hessian is singular.
TopalsFit topals_fit(const Eigen::VectorXd& deaths, const Eigen::VectorXd& exposures,
                     const Eigen::VectorXd& standard, const SplineBasis& basis,
                     const TopalsOptions& options = {});

TopalsFit topals_fit(const PopulationRecord& record, const StandardSchedule& standard,
                     const SplineBasis& basis, const TopalsOptions& options = {});

FitResult to_fit_result(const TopalsFit& fit, const PopulationRecord& record);

}  // namespace mortsmooth
