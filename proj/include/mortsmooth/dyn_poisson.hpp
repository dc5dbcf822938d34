#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mortsmooth/core.hpp"
#include "mortsmooth/fit_result.hpp"
#include "mortsmooth/rng.hpp"

namespace mortsmooth {

// Hierarchical dynamic Poisson model, jointly over n populations:
//
//   Y[i,x] ~ Poisson(E[i,x] theta[i,x]),   log theta[i,x] = beta[i,x] + mu[i] S[x]
//   beta[i,0] | beta0[i] ~ N(beta0[i], prec tau_beta)
//   beta[i,x] | beta[i,x-1] ~ N(beta[i,x-1], prec tau_beta),  x = 1..A-1
//   mu[i] ~ N(0, prec tau_mu),   beta0[i] ~ N(0, prec init_precision)
//   tau_beta, tau_mu ~ Gamma(a, b)   (shape, rate)
//
// Normals are in mean/precision form throughout. The precisions are shared by
// all populations.

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct DynPoissonConfig {
    int chains = 2;
    long burn_in = 100000;
    long thin = 5000;
    long keep = 2000;  // stored draws per chain, after thinning
    std::uint64_t seed = 1;
    double proposal_scale_beta = 0.1;
    double proposal_scale_mu = 0.05;
    bool adapt = true;  // Robbins-Monro scale tuning during burn-in only
    double prior_a = 0.01;
    double prior_b = 0.01;
    double init_precision = 100.0;
    // Hold a precision at a fixed value instead of sampling it.
    std::optional<double> fixed_tau_beta;
    std::optional<double> fixed_tau_mu;
    int threads = 1;

    void validate() const;
};

struct PriorParams {
    double a = 0.01;
    double b = 0.01;
    double init_precision = 100.0;
};

/// Deaths, exposures and standard as n x A matrices, one row per population.
struct DynPoissonData {
    RowMatrix deaths;
    RowMatrix exposures;
    RowMatrix standard;
    std::vector<std::string> ids;
    std::vector<Sex> sexes;

    int populations() const noexcept { return static_cast<int>(deaths.rows()); }
    int ages() const noexcept { return static_cast<int>(deaths.cols()); }

    /// One standard shared by every population.
    static DynPoissonData from(const MortalityDataset& dataset, const StandardSchedule& standard);
    /// One standard per population, in dataset order.
    static DynPoissonData from(const MortalityDataset& dataset, std::span<const StandardSchedule> standards);
    void validate() const;
};

struct DynPoissonState {
    RowMatrix beta;          // n x A
    Eigen::VectorXd beta0;   // initial-condition node per population
    Eigen::VectorXd mu;      // loading on the standard per population
    double tau_beta = 1.0;
    double tau_mu = 1.0;

    int populations() const noexcept { return static_cast<int>(beta.rows()); }
    int ages() const noexcept { return static_cast<int>(beta.cols()); }
    /// log theta = beta + mu * S for one population.
    Eigen::VectorXd log_rates(const DynPoissonData& data, int population) const;
};

struct MoveStats {
    long accepted = 0;
    long proposed = 0;
    double rate() const noexcept { return proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed); }
    MoveStats& operator+=(const MoveStats& o) noexcept {
        accepted += o.accepted;
        proposed += o.proposed;
        return *this;
    }
};

struct GammaParams {
    double shape;
    double rate;
};

struct AcceptanceRates {
    double beta = 0.0;
    double mu = 0.0;
};

struct PosteriorSamples {
    int chains = 0;
    long keep = 0;
    std::vector<DynPoissonState> draws;  // chain-major: draws[chain * keep + iteration]
    std::vector<AcceptanceRates> chain_acceptance;
    AcceptanceRates acceptance;  // pooled over chains, post burn-in
    DynPoissonConfig config;

    const DynPoissonState& draw(int chain, long iteration) const {
        return draws[static_cast<std::size_t>(chain * keep + iteration)];
    }
};

/// sum_{i,x} [Y log(E theta) - E theta], dropping log Y!; cells with E = 0 add nothing.
double log_likelihood(const DynPoissonState& state, const DynPoissonData& data);
double log_prior(const DynPoissonState& state, const PriorParams& prior);

/// Metropolis rule; log_ratio >= 0 always accepts without consuming randomness.
bool metropolis_accept(double log_ratio, Rng& rng);

/// Single-site Gaussian random-walk Metropolis over every beta[i,x].
/// `rngs` holds one stream per population; `scales` is n x A proposal sds.
/// `site_accepts`, if given, is incremented at each accepted site.
MoveStats update_beta(DynPoissonState& state, const DynPoissonData& data, std::span<Rng> rngs,
                      const RowMatrix& scales, RowMatrix* site_accepts = nullptr);

MoveStats update_mu(DynPoissonState& state, const DynPoissonData& data, std::span<Rng> rngs,
                    const Eigen::VectorXd& scales, Eigen::VectorXd* accepts = nullptr);

/// Full conditionals of the precisions.
GammaParams tau_beta_conditional(const DynPoissonState& state, const PriorParams& prior);
GammaParams tau_mu_conditional(const DynPoissonState& state, const PriorParams& prior);

void update_precisions(DynPoissonState& state, const PriorParams& prior, Rng& rng,
                       bool sample_tau_beta = true, bool sample_tau_mu = true);

/// Conjugate draw beta0[i] ~ N(tau_beta beta[i,0] / (p0 + tau_beta), prec p0 + tau_beta).
void update_beta0(DynPoissonState& state, double init_precision, std::span<Rng> rngs);

/// Starting point: mu = 1 and beta = TOPALS offsets (zero when those are not
/// identifiable); precisions at their fixed values or tau_beta = 100, tau_mu = 1.
DynPoissonState initial_state(const DynPoissonData& data, const DynPoissonConfig& config);

/// Metropolis-within-Gibbs. Sweep order: beta, mu, beta0, precisions.
/// Bit-identical output for identical data and config.
PosteriorSamples run_mcmc(const DynPoissonData& data, const DynPoissonConfig& config);

/// Pointwise posterior mean and quantiles of log theta per population.
std::vector<FitResult> posterior_summary(const PosteriorSamples& samples, const DynPoissonData& data,
                                         const std::vector<double>& probs = {0.025, 0.975});

/// Split-chain potential scale reduction for a scalar quantity.
double split_rhat(const std::vector<std::vector<double>>& chains);

/// Largest split R-hat over every log theta[i,x].
double max_split_rhat(const PosteriorSamples& samples, const DynPoissonData& data);

/// Sample quantile with linear interpolation between order statistics (R type 7).
double quantile(std::vector<double> values, double prob);

}  // namespace mortsmooth
