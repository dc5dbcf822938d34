#include "mortsmooth/dyn_poisson.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "mortsmooth/errors.hpp"
#include "mortsmooth/parallel.hpp"
#include "mortsmooth/topals.hpp"

namespace mortsmooth {

namespace {

constexpr long kAdaptBatch = 50;
constexpr double kTargetAcceptance = 0.44;
constexpr std::uint64_t kSharedStream = 0x5eed0001;

double normal_logpdf(double x, double mean, double precision) {
    const double d = x - mean;
    return 0.5 * std::log(precision / (2.0 * std::numbers::pi)) - 0.5 * precision * d * d;
}

double gamma_logpdf(double x, double shape, double rate) {
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

// Poisson kernel Y eta - E exp(eta) of one cell.
double cell_loglik(double y, double e, double eta) {
    if (e == 0.0) return 0.0;
    return y * eta - e * std::exp(eta);
}

std::vector<Rng> population_streams(const DynPoissonData& data, std::uint64_t seed, int chain) {
    std::vector<Rng> rngs;
    rngs.reserve(static_cast<std::size_t>(data.populations()));
    for (int i = 0; i < data.populations(); ++i) {
        const auto& id = data.ids.empty() ? std::to_string(i) : data.ids[static_cast<std::size_t>(i)];
        const auto sex = data.sexes.empty() ? Sex::both : data.sexes[static_cast<std::size_t>(i)];
        const auto key = stable_hash(id + "/" + std::string(to_string(sex)));
        rngs.emplace_back(derive_seed(seed, {static_cast<std::uint64_t>(chain), key}));
    }
    return rngs;
}

struct ChainOutput {
    std::vector<DynPoissonState> draws;
    MoveStats beta;
    MoveStats mu;
};

ChainOutput run_chain(const DynPoissonData& data, const DynPoissonConfig& config, int chain) {
    const int n = data.populations();
    const int a = data.ages();
    const PriorParams prior{config.prior_a, config.prior_b, config.init_precision};

    Rng shared(derive_seed(config.seed, {static_cast<std::uint64_t>(chain), kSharedStream}));
    std::vector<Rng> rngs = population_streams(data, config.seed, chain);

    DynPoissonState state = initial_state(data, config);
    if (config.chains > 1) {
        // Overdispersed starts so that between-chain diagnostics mean something.
        for (int i = 0; i < n; ++i) {
            auto& rng = rngs[static_cast<std::size_t>(i)];
            state.mu(i) += 0.05 * rng.normal();
            state.beta.row(i).array() += 0.1 * rng.normal();
            state.beta0(i) = state.beta(i, 0);
        }
    }

    RowMatrix beta_scales = RowMatrix::Constant(n, a, config.proposal_scale_beta);
    Eigen::VectorXd mu_scales = Eigen::VectorXd::Constant(n, config.proposal_scale_mu);
    RowMatrix beta_batch = RowMatrix::Zero(n, a);
    Eigen::VectorXd mu_batch = Eigen::VectorXd::Zero(n);
    long batch_index = 0;

    ChainOutput out;
    out.draws.reserve(static_cast<std::size_t>(config.keep));
    const long total = config.burn_in + config.keep * config.thin;
    const bool tune = config.adapt && config.burn_in > 0;

    for (long t = 1; t <= total; ++t) {
        const bool burning = t <= config.burn_in;
        const MoveStats sb = update_beta(state, data, rngs, beta_scales, tune && burning ? &beta_batch : nullptr);
        const MoveStats sm = update_mu(state, data, rngs, mu_scales, tune && burning ? &mu_batch : nullptr);
        update_beta0(state, prior.init_precision, rngs);
        update_precisions(state, prior, shared, !config.fixed_tau_beta, !config.fixed_tau_mu);

        if (burning) {
            if (tune && t % kAdaptBatch == 0) {
                ++batch_index;
                const double delta = std::min(0.1, 1.0 / std::sqrt(static_cast<double>(batch_index)));
                const double batch = static_cast<double>(kAdaptBatch);
                for (int i = 0; i < n; ++i) {
                    for (int x = 0; x < a; ++x) {
                        const double rate = beta_batch(i, x) / batch;
                        beta_scales(i, x) *= std::exp(rate > kTargetAcceptance ? delta : -delta);
                    }
                    mu_scales(i) *= std::exp(mu_batch(i) / batch > kTargetAcceptance ? delta : -delta);
                }
                beta_batch.setZero();
                mu_batch.setZero();
            }
            continue;
        }
        out.beta += sb;
        out.mu += sm;
        if ((t - config.burn_in) % config.thin == 0) out.draws.push_back(state);
    }
    return out;
}

}  // namespace

void DynPoissonConfig::validate() const {
    if (chains < 1) throw InvalidArgument("chains must be >= 1");
    if (burn_in < 0) throw InvalidArgument("burn-in must be >= 0");
    if (thin < 1) throw InvalidArgument("thin must be >= 1");
    if (keep < 1) throw InvalidArgument("keep must be >= 1");
    if (!(proposal_scale_beta > 0.0) || !(proposal_scale_mu > 0.0)) {
        throw InvalidArgument("proposal scales must be positive");
    }
    if (!(prior_a > 0.0) || !(prior_b > 0.0)) throw InvalidArgument("Gamma hyperparameters must be positive");
    if (!(init_precision > 0.0)) throw InvalidArgument("initial-node precision must be positive");
    if (fixed_tau_beta && !(*fixed_tau_beta > 0.0)) throw InvalidArgument("fixed tau_beta must be positive");
    if (fixed_tau_mu && !(*fixed_tau_mu > 0.0)) throw InvalidArgument("fixed tau_mu must be positive");
}

DynPoissonData DynPoissonData::from(const MortalityDataset& dataset, const StandardSchedule& standard) {
    std::vector<StandardSchedule> standards(dataset.size(), standard);
    return from(dataset, standards);
}

DynPoissonData DynPoissonData::from(const MortalityDataset& dataset, std::span<const StandardSchedule> standards) {
    if (dataset.empty()) throw InvalidArgument("dynamic Poisson model needs at least one population");
    if (standards.size() != dataset.size()) {
        throw InvalidArgument(fmt::format("{} standards for {} populations", standards.size(), dataset.size()));
    }
    const auto n = static_cast<Eigen::Index>(dataset.size());
    const int a = dataset.age_grid().size();
    DynPoissonData data;
    data.deaths.resize(n, a);
    data.exposures.resize(n, a);
    data.standard.resize(n, a);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& rec = dataset[static_cast<std::size_t>(i)];
        const auto& std_i = standards[static_cast<std::size_t>(i)];
        std_i.validate(dataset.age_grid());
        data.deaths.row(i) = rec.deaths_vector().transpose();
        data.exposures.row(i) = rec.exposure_vector().transpose();
        data.standard.row(i) = std_i.log_rates.transpose();
        data.ids.push_back(rec.id);
        data.sexes.push_back(rec.sex);
    }
    return data;
}

void DynPoissonData::validate() const {
    if (deaths.rows() < 1 || deaths.cols() < 1) throw InvalidArgument("empty dynamic Poisson data");
    if (exposures.rows() != deaths.rows() || exposures.cols() != deaths.cols() ||
        standard.rows() != deaths.rows() || standard.cols() != deaths.cols()) {
        throw InvalidArgument("deaths, exposures and standard must have the same shape");
    }
    if ((exposures.array() < 0.0).any() || (deaths.array() < 0.0).any()) {
        throw InvalidArgument("deaths and exposures must be non-negative");
    }
    if (((exposures.array() == 0.0) && (deaths.array() > 0.0)).any()) {
        throw InvalidArgument("deaths recorded at an age with zero exposure");
    }
    if (!exposures.allFinite() || !deaths.allFinite()) throw InvalidArgument("deaths and exposures must be finite");
    if (!standard.allFinite()) throw InvalidArgument("standard must be finite");
}

Eigen::VectorXd DynPoissonState::log_rates(const DynPoissonData& data, int population) const {
    return (beta.row(population) + mu(population) * data.standard.row(population)).transpose();
}

double log_likelihood(const DynPoissonState& state, const DynPoissonData& data) {
    double total = 0.0;
    for (int i = 0; i < data.populations(); ++i) {
        for (int x = 0; x < data.ages(); ++x) {
            const double e = data.exposures(i, x);
            if (e == 0.0) continue;
            const double eta = state.beta(i, x) + state.mu(i) * data.standard(i, x);
            const double y = data.deaths(i, x);
            total += y * (std::log(e) + eta) - e * std::exp(eta);
        }
    }
    return total;
}

double log_prior(const DynPoissonState& state, const PriorParams& prior) {
    double lp = gamma_logpdf(state.tau_beta, prior.a, prior.b) + gamma_logpdf(state.tau_mu, prior.a, prior.b);
    for (int i = 0; i < state.populations(); ++i) {
        lp += normal_logpdf(state.beta0(i), 0.0, prior.init_precision);
        lp += normal_logpdf(state.beta(i, 0), state.beta0(i), state.tau_beta);
        for (int x = 1; x < state.ages(); ++x) {
            lp += normal_logpdf(state.beta(i, x), state.beta(i, x - 1), state.tau_beta);
        }
        lp += normal_logpdf(state.mu(i), 0.0, state.tau_mu);
    }
    return lp;
}

bool metropolis_accept(double log_ratio, Rng& rng) {
    if (log_ratio >= 0.0) return true;
    return std::log(rng.uniform()) < log_ratio;
}

MoveStats update_beta(DynPoissonState& state, const DynPoissonData& data, std::span<Rng> rngs,
                      const RowMatrix& scales, RowMatrix* site_accepts) {
    MoveStats stats;
    const int a = data.ages();
    const double tau = state.tau_beta;
    for (int i = 0; i < data.populations(); ++i) {
        Rng& rng = rngs[static_cast<std::size_t>(i)];
        const double mu = state.mu(i);
        for (int x = 0; x < a; ++x) {
            const double current = state.beta(i, x);
            const double proposal = current + scales(i, x) * rng.normal();
            const double prev = x == 0 ? state.beta0(i) : state.beta(i, x - 1);
            const double offset = mu * data.standard(i, x);
            const double y = data.deaths(i, x);
            const double e = data.exposures(i, x);

            double delta = cell_loglik(y, e, proposal + offset) - cell_loglik(y, e, current + offset);
            const double dp = proposal - prev;
            const double dc = current - prev;
            delta -= 0.5 * tau * (dp * dp - dc * dc);
            if (x + 1 < a) {
                const double next = state.beta(i, x + 1);
                const double np = next - proposal;
                const double nc = next - current;
                delta -= 0.5 * tau * (np * np - nc * nc);
            }
            ++stats.proposed;
            if (metropolis_accept(delta, rng)) {
                state.beta(i, x) = proposal;
                ++stats.accepted;
                if (site_accepts) (*site_accepts)(i, x) += 1.0;
            }
        }
    }
    return stats;
}

MoveStats update_mu(DynPoissonState& state, const DynPoissonData& data, std::span<Rng> rngs,
                    const Eigen::VectorXd& scales, Eigen::VectorXd* accepts) {
    MoveStats stats;
    for (int i = 0; i < data.populations(); ++i) {
        Rng& rng = rngs[static_cast<std::size_t>(i)];
        const double current = state.mu(i);
        const double proposal = current + scales(i) * rng.normal();
        double delta = -0.5 * state.tau_mu * (proposal * proposal - current * current);
        for (int x = 0; x < data.ages(); ++x) {
            const double e = data.exposures(i, x);
            if (e == 0.0) continue;
            const double s = data.standard(i, x);
            const double b = state.beta(i, x);
            delta += cell_loglik(data.deaths(i, x), e, b + proposal * s) -
                     cell_loglik(data.deaths(i, x), e, b + current * s);
        }
        ++stats.proposed;
        if (metropolis_accept(delta, rng)) {
            state.mu(i) = proposal;
            ++stats.accepted;
            if (accepts) (*accepts)(i) += 1.0;
        }
    }
    return stats;
}

GammaParams tau_beta_conditional(const DynPoissonState& state, const PriorParams& prior) {
    double ss = 0.0;
    for (int i = 0; i < state.populations(); ++i) {
        const double d0 = state.beta(i, 0) - state.beta0(i);
        ss += d0 * d0;
        for (int x = 1; x < state.ages(); ++x) {
            const double d = state.beta(i, x) - state.beta(i, x - 1);
            ss += d * d;
        }
    }
    const double increments = static_cast<double>(state.populations()) * state.ages();
    return {prior.a + 0.5 * increments, prior.b + 0.5 * ss};
}

GammaParams tau_mu_conditional(const DynPoissonState& state, const PriorParams& prior) {
    return {prior.a + 0.5 * state.populations(), prior.b + 0.5 * state.mu.squaredNorm()};
}

void update_precisions(DynPoissonState& state, const PriorParams& prior, Rng& rng,
                       bool sample_tau_beta, bool sample_tau_mu) {
    if (sample_tau_beta) {
        const auto g = tau_beta_conditional(state, prior);
        state.tau_beta = rng.gamma(g.shape, g.rate);
    }
    if (sample_tau_mu) {
        const auto g = tau_mu_conditional(state, prior);
        state.tau_mu = rng.gamma(g.shape, g.rate);
    }
}

void update_beta0(DynPoissonState& state, double init_precision, std::span<Rng> rngs) {
    const double precision = init_precision + state.tau_beta;
    const double sd = 1.0 / std::sqrt(precision);
    for (int i = 0; i < state.populations(); ++i) {
        const double mean = state.tau_beta * state.beta(i, 0) / precision;
        state.beta0(i) = rngs[static_cast<std::size_t>(i)].normal(mean, sd);
    }
}

DynPoissonState initial_state(const DynPoissonData& data, const DynPoissonConfig& config) {
    const int n = data.populations();
    const int a = data.ages();
    DynPoissonState state;
    state.beta = RowMatrix::Zero(n, a);
    state.beta0 = Eigen::VectorXd::Zero(n);
    state.mu = Eigen::VectorXd::Ones(n);
    state.tau_beta = config.fixed_tau_beta.value_or(100.0);
    state.tau_mu = config.fixed_tau_mu.value_or(1.0);

    std::optional<SplineBasis> basis;
    try {
        basis = build_basis(AgeGrid(std::max(a, 2)));
    } catch (const Error&) {
        // grid longer than the default knots cover
    }
    for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd y = data.deaths.row(i).transpose();
        const Eigen::VectorXd e = data.exposures.row(i).transpose();
        const Eigen::VectorXd s = data.standard.row(i).transpose();
        bool done = false;
        if (basis && a >= 2) {
            try {
                const TopalsFit fit = topals_fit(y, e, s, *basis);
                if (fit.alpha.allFinite()) {
                    state.beta.row(i) = (basis->matrix * fit.alpha).transpose();
                    done = true;
                }
            } catch (const Error&) {
            }
        }
        if (!done) {
            const double expected = (e.array() * s.array().exp()).sum();
            state.beta.row(i).setConstant(std::log((y.sum() + 0.5) / (expected + 0.5)));
        }
        state.beta0(i) = state.beta(i, 0);
    }
    return state;
}

PosteriorSamples run_mcmc(const DynPoissonData& data, const DynPoissonConfig& config) {
    config.validate();
    data.validate();

    std::vector<ChainOutput> outputs(static_cast<std::size_t>(config.chains));
    parallel_for(outputs.size(), config.threads, [&](std::size_t c) {
        outputs[c] = run_chain(data, config, static_cast<int>(c));
    });

    PosteriorSamples samples;
    samples.chains = config.chains;
    samples.keep = config.keep;
    samples.config = config;
    samples.draws.reserve(static_cast<std::size_t>(config.chains * config.keep));
    MoveStats beta_total, mu_total;
    for (auto& out : outputs) {
        samples.chain_acceptance.push_back({out.beta.rate(), out.mu.rate()});
        beta_total += out.beta;
        mu_total += out.mu;
        for (auto& d : out.draws) samples.draws.push_back(std::move(d));
    }
    samples.acceptance = {beta_total.rate(), mu_total.rate()};
    return samples;
}

double quantile(std::vector<double> values, double prob) {
    if (values.empty()) throw InvalidArgument("quantile of an empty sample");
    if (!(prob >= 0.0 && prob <= 1.0)) throw InvalidArgument(fmt::format("quantile probability {} outside [0,1]", prob));
    std::sort(values.begin(), values.end());
    const double h = prob * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<FitResult> posterior_summary(const PosteriorSamples& samples, const DynPoissonData& data,
                                         const std::vector<double>& probs) {
    if (samples.draws.empty()) throw InvalidArgument("posterior summary of an empty sample");
    if (probs.size() != 2) throw InvalidArgument("posterior summary needs exactly two probabilities (lower, upper)");
    const int n = data.populations();
    const int a = data.ages();
    std::vector<FitResult> out;
    std::vector<double> values(samples.draws.size());
    for (int i = 0; i < n; ++i) {
        FitResult fit;
        fit.area_id = data.ids.empty() ? std::to_string(i) : data.ids[static_cast<std::size_t>(i)];
        fit.sex = data.sexes.empty() ? Sex::both : data.sexes[static_cast<std::size_t>(i)];
        fit.model = "dyn-poisson";
        fit.log_rate_hat.resize(a);
        fit.lower = Eigen::VectorXd(a);
        fit.upper = Eigen::VectorXd(a);
        for (int x = 0; x < a; ++x) {
            double sum = 0.0;
            for (std::size_t d = 0; d < samples.draws.size(); ++d) {
                const auto& s = samples.draws[d];
                values[d] = s.beta(i, x) + s.mu(i) * data.standard(i, x);
                sum += values[d];
            }
            fit.log_rate_hat(x) = sum / static_cast<double>(values.size());
            (*fit.lower)(x) = quantile(values, probs[0]);
            (*fit.upper)(x) = quantile(values, probs[1]);
        }
        out.push_back(std::move(fit));
    }
    return out;
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
    std::vector<std::vector<double>> halves;
    for (const auto& c : chains) {
        const std::size_t half = c.size() / 2;
        if (half < 2) throw InvalidArgument("split R-hat needs at least 4 draws per chain");
        halves.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
        halves.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
    }
    const double m = static_cast<double>(halves.size());
    const double len = static_cast<double>(halves.front().size());
    std::vector<double> means;
    double within = 0.0;
    for (const auto& h : halves) {
        double mean = 0.0;
        for (double v : h) mean += v;
        mean /= len;
        double var = 0.0;
        for (double v : h) var += (v - mean) * (v - mean);
        within += var / (len - 1.0);
        means.push_back(mean);
    }
    within /= m;
    double grand = 0.0;
    for (double v : means) grand += v;
    grand /= m;
    double between = 0.0;  // B / n
    for (double v : means) between += (v - grand) * (v - grand);
    between /= (m - 1.0);
    if (within == 0.0) return between == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    const double var_plus = (len - 1.0) / len * within + between;
    return std::sqrt(var_plus / within);
}

double max_split_rhat(const PosteriorSamples& samples, const DynPoissonData& data) {
    double worst = 0.0;
    std::vector<std::vector<double>> chains(static_cast<std::size_t>(samples.chains),
                                            std::vector<double>(static_cast<std::size_t>(samples.keep)));
    for (int i = 0; i < data.populations(); ++i) {
        for (int x = 0; x < data.ages(); ++x) {
            for (int c = 0; c < samples.chains; ++c) {
                for (long t = 0; t < samples.keep; ++t) {
                    const auto& s = samples.draw(c, t);
                    chains[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)] =
                        s.beta(i, x) + s.mu(i) * data.standard(i, x);
                }
            }
            worst = std::max(worst, split_rhat(chains));
        }
    }
    return worst;
}

}  // namespace mortsmooth
