#include "mortsmooth/topals.hpp"

#include <cmath>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "mortsmooth/errors.hpp"

namespace mortsmooth {

namespace {

// (K-1) x K first-difference operator.
Eigen::MatrixXd difference_matrix(int k) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(k - 1, k);
    for (int i = 0; i < k - 1; ++i) {
        d(i, i) = -1.0;
        d(i, i + 1) = 1.0;
    }
    return d;
}

void check_dimensions(const Eigen::VectorXd& alpha, const Eigen::VectorXd& deaths,
                      const Eigen::VectorXd& exposures, const Eigen::VectorXd& standard,
                      const SplineBasis& basis) {
    const auto a = basis.matrix.rows();
    if (deaths.size() != a || exposures.size() != a || standard.size() != a) {
        throw InvalidArgument(fmt::format("topals: basis has {} ages but deaths/exposures/standard have {}/{}/{}",
                                          a, deaths.size(), exposures.size(), standard.size()));
    }
    if (alpha.size() != basis.matrix.cols()) {
        throw InvalidArgument(fmt::format("topals: {} offsets for {} knots", alpha.size(), basis.matrix.cols()));
    }
}

Eigen::VectorXd expected_deaths(const Eigen::VectorXd& alpha, const Eigen::VectorXd& exposures,
                                const Eigen::VectorXd& standard, const SplineBasis& basis) {
    Eigen::ArrayXd eta = (standard + basis.matrix * alpha).array();
    Eigen::VectorXd mu = (exposures.array() * eta.exp()).matrix();
    // Zero exposure contributes nothing, even if exp overflows.
    for (Eigen::Index x = 0; x < mu.size(); ++x) {
        if (exposures(x) == 0.0) mu(x) = 0.0;
    }
    return mu;
}

}  // namespace

SplineBasis build_basis(const AgeGrid& grid, std::span<const int> knots) {
    if (knots.size() < 2) throw InvalidKnots("need at least two knots");
    for (std::size_t k = 1; k < knots.size(); ++k) {
        if (knots[k] <= knots[k - 1]) {
            throw InvalidKnots(fmt::format("knots must be strictly increasing: {}", fmt::join(knots, ",")));
        }
    }
    if (knots.front() > 0 || knots.back() < grid.max_age() + 1) {
        throw InvalidKnots(fmt::format("knots {}..{} do not cover ages 0..{} (need first <= 0, last >= {})",
                                       knots.front(), knots.back(), grid.max_age(), grid.max_age() + 1));
    }

    SplineBasis basis;
    basis.knots.assign(knots.begin(), knots.end());
    basis.matrix = Eigen::MatrixXd::Zero(grid.size(), static_cast<Eigen::Index>(knots.size()));
    std::size_t span = 0;
    for (int x = 0; x < grid.size(); ++x) {
        while (x >= knots[span + 1]) ++span;
        const double w = static_cast<double>(x - knots[span]) / static_cast<double>(knots[span + 1] - knots[span]);
        // Left piece of the next hat, right piece of this one.
        basis.matrix(x, static_cast<Eigen::Index>(span)) = 1.0 - w;
        basis.matrix(x, static_cast<Eigen::Index>(span + 1)) = w;
    }
    return basis;
}

double topals_log_posterior(const Eigen::VectorXd& alpha, const Eigen::VectorXd& deaths,
                            const Eigen::VectorXd& exposures, const Eigen::VectorXd& standard,
                            const SplineBasis& basis, double penalty_weight) {
    check_dimensions(alpha, deaths, exposures, standard, basis);
    const Eigen::VectorXd eta = standard + basis.matrix * alpha;
    double loglik = 0.0;
    for (Eigen::Index x = 0; x < eta.size(); ++x) {
        if (exposures(x) == 0.0) continue;
        loglik += deaths(x) * eta(x) - exposures(x) * std::exp(eta(x));
    }
    double rough = 0.0;
    for (Eigen::Index k = 1; k < alpha.size(); ++k) {
        const double d = alpha(k) - alpha(k - 1);
        rough += d * d;
    }
    return loglik - 0.5 * penalty_weight * rough;
}

Eigen::VectorXd topals_gradient(const Eigen::VectorXd& alpha, const Eigen::VectorXd& deaths,
                                const Eigen::VectorXd& exposures, const Eigen::VectorXd& standard,
                                const SplineBasis& basis, double penalty_weight) {
    check_dimensions(alpha, deaths, exposures, standard, basis);
    const Eigen::VectorXd mu = expected_deaths(alpha, exposures, standard, basis);
    const Eigen::MatrixXd d = difference_matrix(static_cast<int>(alpha.size()));
    const Eigen::VectorXd observed = (exposures.array() > 0.0).select(deaths, 0.0);
    return basis.matrix.transpose() * (observed - mu) - penalty_weight * (d.transpose() * (d * alpha));
}

Eigen::MatrixXd topals_hessian(const Eigen::VectorXd& alpha, const Eigen::VectorXd& exposures,
                               const Eigen::VectorXd& standard, const SplineBasis& basis,
                               double penalty_weight) {
    const Eigen::VectorXd mu = expected_deaths(alpha, exposures, standard, basis);
    const Eigen::MatrixXd d = difference_matrix(static_cast<int>(alpha.size()));
    return -(basis.matrix.transpose() * mu.asDiagonal() * basis.matrix) - penalty_weight * d.transpose() * d;
}

TopalsFit topals_fit(const Eigen::VectorXd& deaths, const Eigen::VectorXd& exposures,
                     const Eigen::VectorXd& standard, const SplineBasis& basis,
                     const TopalsOptions& options) {
    if (!(options.penalty_weight >= 0.0)) {
        throw InvalidArgument(fmt::format("penalty weight must be >= 0, got {}", options.penalty_weight));
    }
    const double lambda = options.penalty_weight;
    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(basis.num_knots());
    check_dimensions(alpha, deaths, exposures, standard, basis);

    TopalsFit fit;
    fit.penalty_weight = lambda;
    double objective = topals_log_posterior(alpha, deaths, exposures, standard, basis, lambda);
    fit.objective_trace.push_back(objective);

    Eigen::VectorXd gradient = topals_gradient(alpha, deaths, exposures, standard, basis, lambda);
    while (gradient.lpNorm<Eigen::Infinity>() > options.tolerance && fit.iterations < options.max_iter) {
        // Newton direction: (-H) step = g, with -H positive semidefinite.
        const Eigen::MatrixXd neg_hessian = -topals_hessian(alpha, exposures, standard, basis, lambda);
        const Eigen::VectorXd curvature = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(neg_hessian, Eigen::EigenvaluesOnly).eigenvalues();
        Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_hessian);
        if (ldlt.info() != Eigen::Success || !(curvature.minCoeff() > 1e-12 * curvature.maxCoeff())) {
            throw NonIdentifiable(lambda == 0.0
                ? "topals: singular Hessian; the data do not identify every offset, use a positive penalty weight"
                : "topals: singular Hessian; no exposure to inform the offsets");
        }
        const Eigen::VectorXd step = ldlt.solve(gradient);

        // Inside the quadratic region the predicted gain is below what the
        // objective can resolve, so the full step is taken without a test.
        const double predicted_gain = 0.5 * gradient.dot(step);
        const bool tiny = predicted_gain <= 1e-13 * (1.0 + std::abs(objective));

        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd candidate;
        double cand_objective = 0.0;
        for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
            candidate = alpha + t * step;
            cand_objective = topals_log_posterior(candidate, deaths, exposures, standard, basis, lambda);
            if (std::isfinite(cand_objective) && (tiny || cand_objective >= objective)) {
                accepted = true;
                break;
            }
        }
        if (!accepted) break;  // no ascent left at machine precision

        alpha = candidate;
        objective = cand_objective;
        fit.objective_trace.push_back(objective);
        ++fit.iterations;
        gradient = topals_gradient(alpha, deaths, exposures, standard, basis, lambda);
    }

    fit.final_gradient_norm = gradient.lpNorm<Eigen::Infinity>();
    fit.converged = fit.final_gradient_norm <= options.tolerance;
    fit.fitted_log_rates = standard + basis.matrix * alpha;
    fit.alpha = std::move(alpha);
    return fit;
}

TopalsFit topals_fit(const PopulationRecord& record, const StandardSchedule& standard,
                     const SplineBasis& basis, const TopalsOptions& options) {
    return topals_fit(record.deaths_vector(), record.exposure_vector(), standard.log_rates, basis, options);
}

FitResult to_fit_result(const TopalsFit& fit, const PopulationRecord& record) {
    FitResult out;
    out.area_id = record.id;
    out.sex = record.sex;
    out.model = "topals";
    out.log_rate_hat = fit.fitted_log_rates;
    return out;
}

}  // namespace mortsmooth
