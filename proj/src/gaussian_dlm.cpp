#include "mortsmooth/gaussian_dlm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "mortsmooth/errors.hpp"

namespace mortsmooth {

void DlmSpec::validate() const {
    if (!(obs_variance > 0.0) || !(state_variance > 0.0) || !(initial_variance > 0.0)) {
        throw InvalidArgument(fmt::format("DLM variances must be positive (V={}, W={}, C0={})",
                                          obs_variance, state_variance, initial_variance));
    }
}

FilterOutput kalman_filter(const std::vector<std::optional<double>>& observations, const DlmSpec& spec) {
    spec.validate();
    const auto t_len = static_cast<Eigen::Index>(observations.size());
    FilterOutput out;
    out.predicted_means.resize(t_len);
    out.predicted_variances.resize(t_len);
    out.filtered_means.resize(t_len);
    out.filtered_variances.resize(t_len);

    const double v = spec.obs_variance;
    double m = spec.initial_mean;
    double c = spec.initial_variance;
    for (Eigen::Index t = 0; t < t_len; ++t) {
        const double a = m;
        const double r = t == 0 ? c : c + spec.state_variance;
        out.predicted_means(t) = a;
        out.predicted_variances(t) = r;
        const auto& y = observations[static_cast<std::size_t>(t)];
        if (y) {
            const double q = r + v;
            const double e = *y - a;
            const double gain = r / q;
            m = a + gain * e;
            c = r * v / q;
            out.loglik += -0.5 * (std::log(2.0 * std::numbers::pi * q) + e * e / q);
            ++out.observed;
        } else {
            m = a;
            c = r;
        }
        out.filtered_means(t) = m;
        out.filtered_variances(t) = c;
    }
    if (out.observed == 0) throw InsufficientData("Kalman filter: every observation is missing");
    return out;
}

SmootherOutput kalman_smoother(const FilterOutput& filtered, const DlmSpec& spec) {
    const auto t_len = filtered.filtered_means.size();
    SmootherOutput out;
    out.means = filtered.filtered_means;
    out.variances = filtered.filtered_variances;
    for (Eigen::Index t = t_len - 2; t >= 0; --t) {
        const double c = filtered.filtered_variances(t);
        const double r_next = c + spec.state_variance;
        const double j = c / r_next;
        out.means(t) = filtered.filtered_means(t) + j * (out.means(t + 1) - filtered.filtered_means(t));
        out.variances(t) = c + j * j * (out.variances(t + 1) - r_next);
    }
    return out;
}

std::vector<std::optional<double>> dlm_observations(const PopulationRecord& record) {
    return log_rates(naive_rates(record));
}

namespace {

struct Problem {
    const std::vector<std::optional<double>>* observations;
    const Eigen::VectorXd* standard;  // non-null when mu is estimated
    double m0;
    double c0;
    double log_lo;
    double log_hi;
};

DlmSpec spec_at(const Problem& p, const gsl_vector* x) {
    DlmSpec spec;
    spec.obs_variance = std::exp(std::clamp(gsl_vector_get(x, 0), p.log_lo, p.log_hi));
    spec.state_variance = std::exp(std::clamp(gsl_vector_get(x, 1), p.log_lo, p.log_hi));
    spec.initial_mean = p.m0;
    spec.initial_variance = p.c0;
    return spec;
}

double negative_loglik(const gsl_vector* x, void* params) {
    const auto& p = *static_cast<const Problem*>(params);
    const DlmSpec spec = spec_at(p, x);
    if (!p.standard) return -kalman_filter(*p.observations, spec).loglik;
    const double mu = gsl_vector_get(x, 2);
    auto shifted = *p.observations;
    for (std::size_t t = 0; t < shifted.size(); ++t) {
        if (shifted[t]) *shifted[t] -= mu * (*p.standard)(static_cast<Eigen::Index>(t));
    }
    return -kalman_filter(shifted, spec).loglik;
}

// Nelder-Mead with restarts from the incumbent until the optimum stops moving.
std::vector<double> maximize(Problem& problem, std::vector<double> start, int max_evaluations) {
    const std::size_t dim = start.size();
    gsl_multimin_function fn{&negative_loglik, dim, &problem};
    gsl_vector* x = gsl_vector_alloc(dim);
    gsl_vector* step = gsl_vector_alloc(dim);
    gsl_multimin_fminimizer* solver = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim);

    int evaluations = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < 10 && evaluations < max_evaluations; ++restart) {
        for (std::size_t k = 0; k < dim; ++k) {
            gsl_vector_set(x, k, start[k]);
            gsl_vector_set(step, k, restart == 0 ? 1.0 : 0.1);
        }
        gsl_multimin_fminimizer_set(solver, &fn, x, step);
        int status = GSL_CONTINUE;
        while (status == GSL_CONTINUE && evaluations < max_evaluations) {
            if (gsl_multimin_fminimizer_iterate(solver) != GSL_SUCCESS) break;
            ++evaluations;
            status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(solver), 1e-9);
        }
        const double value = solver->fval;
        double moved = 0.0;
        for (std::size_t k = 0; k < dim; ++k) {
            moved = std::max(moved, std::fabs(gsl_vector_get(solver->x, k) - start[k]));
            start[k] = gsl_vector_get(solver->x, k);
        }
        const bool improved = value < best - 1e-12;
        best = std::min(best, value);
        if (restart > 0 && (!improved || moved < 1e-8)) break;
    }

    gsl_multimin_fminimizer_free(solver);
    gsl_vector_free(step);
    gsl_vector_free(x);
    return start;
}

}  // namespace

std::pair<DlmFit, FitResult> fit_dlm(const PopulationRecord& record, const StandardSchedule* standard,
                                     const DlmOptions& options) {
    if (options.regression && !standard) throw InvalidArgument("DLM regression needs a standard schedule");
    if (standard && standard->size() != record.size()) {
        throw InvalidArgument(fmt::format("standard has {} ages, record has {}", standard->size(), record.size()));
    }
    if (!(options.min_variance > 0.0) || !(options.max_variance > options.min_variance)) {
        throw InvalidArgument("DLM variance bounds must satisfy 0 < min < max");
    }
    auto observations = dlm_observations(record);
    const int observed = static_cast<int>(std::count_if(observations.begin(), observations.end(),
                                                        [](const auto& o) { return o.has_value(); }));
    if (observed < options.min_observed) {
        throw InsufficientData(fmt::format("population '{}': {} ages with observed deaths, the Gaussian DLM needs {}",
                                           record.id, observed, options.min_observed));
    }

    const bool fixed_mu = options.regression && options.mu.has_value();
    const bool free_mu = options.regression && !options.mu.has_value();
    if (fixed_mu) {
        for (std::size_t t = 0; t < observations.size(); ++t) {
            if (observations[t]) *observations[t] -= *options.mu * standard->log_rates(static_cast<Eigen::Index>(t));
        }
    }

    double mean = 0.0;
    for (const auto& o : observations) if (o) mean += *o;
    mean /= observed;

    Problem problem{&observations, free_mu ? &standard->log_rates : nullptr, mean, options.initial_variance,
                    std::log(options.min_variance), std::log(options.max_variance)};
    if (free_mu) {
        // Levels are centered on the raw observations; re-center on the residual scale.
        double s_mean = 0.0;
        for (std::size_t t = 0; t < observations.size(); ++t) {
            if (observations[t]) s_mean += standard->log_rates(static_cast<Eigen::Index>(t));
        }
        problem.m0 = mean - s_mean / observed;
    }

    // Start from the spread of successive observed differences.
    double diff_ss = 0.0;
    int diffs = 0;
    std::optional<double> last;
    for (const auto& o : observations) {
        if (!o) continue;
        if (last) {
            diff_ss += (*o - *last) * (*o - *last);
            ++diffs;
        }
        last = o;
    }
    const double spread = diffs > 0 ? std::max(diff_ss / diffs, 1e-6) : 1.0;
    std::vector<double> start{std::log(spread / 2.0), std::log(spread / 10.0)};
    if (free_mu) start.push_back(1.0);
    for (std::size_t k = 0; k < 2; ++k) start[k] = std::clamp(start[k], problem.log_lo, problem.log_hi);

    const std::vector<double> best = maximize(problem, start, options.max_evaluations);

    DlmFit fit;
    fit.spec.obs_variance = std::exp(std::clamp(best[0], problem.log_lo, problem.log_hi));
    fit.spec.state_variance = std::exp(std::clamp(best[1], problem.log_lo, problem.log_hi));
    fit.spec.initial_mean = problem.m0;
    fit.spec.initial_variance = problem.c0;
    fit.spec.regression = options.regression;
    fit.mu = free_mu ? best[2] : (fixed_mu ? *options.mu : 0.0);
    if (free_mu) {
        for (std::size_t t = 0; t < observations.size(); ++t) {
            if (observations[t]) *observations[t] -= fit.mu * standard->log_rates(static_cast<Eigen::Index>(t));
        }
    }

    const FilterOutput filtered = kalman_filter(observations, fit.spec);
    const SmootherOutput smoothed = kalman_smoother(filtered, fit.spec);
    fit.filtered_means = filtered.filtered_means;
    fit.filtered_variances = filtered.filtered_variances;
    fit.smoothed_means = smoothed.means;
    fit.smoothed_variances = smoothed.variances;
    fit.loglik = filtered.loglik;
    fit.obs_variance = fit.spec.obs_variance;
    fit.state_variance = fit.spec.state_variance;
    fit.observed = observed;

    FitResult result;
    result.area_id = record.id;
    result.sex = record.sex;
    result.model = "gaussian-dlm";
    result.log_rate_hat = smoothed.means;
    if (options.regression) result.log_rate_hat += fit.mu * standard->log_rates;
    const Eigen::VectorXd half_width = 1.959963984540054 * smoothed.variances.array().sqrt().matrix();
    result.lower = result.log_rate_hat - half_width;
    result.upper = result.log_rate_hat + half_width;
    return {std::move(fit), std::move(result)};
}

}  // namespace mortsmooth
