#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mortsmooth/dyn_poisson.hpp"
#include "mortsmooth/errors.hpp"
#include "oracles.hpp"

using namespace mortsmooth;

namespace {

DynPoissonData make_data(int n, int a) {
    DynPoissonData d;
    d.deaths = RowMatrix::Zero(n, a);
    d.exposures = RowMatrix::Zero(n, a);
    d.standard = RowMatrix::Zero(n, a);
    for (int i = 0; i < n; ++i) {
        d.ids.push_back("p" + std::to_string(i));
        d.sexes.push_back(Sex::both);
    }
    return d;
}

DynPoissonState make_state(int n, int a) {
    DynPoissonState s;
    s.beta = RowMatrix::Zero(n, a);
    s.beta0 = Eigen::VectorXd::Zero(n);
    s.mu = Eigen::VectorXd::Zero(n);
    return s;
}

std::vector<Rng> streams(int n, std::uint64_t seed) {
    std::vector<Rng> r;
    for (int i = 0; i < n; ++i) r.emplace_back(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    return r;
}

double half_log_prec(double tau) { return 0.5 * std::log(tau / (2.0 * M_PI)); }

double gamma_lpdf(double x, double a, double b) {
    return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(x) - b * x;
}

// Smooth synthetic standard and a population simulated from the model with mu = 1.
DynPoissonData simulated(int n, double exposure, std::uint64_t seed) {
    const int a = 100;
    auto d = make_data(n, a);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        for (int x = 0; x < a; ++x) {
            const double s = std::log(0.003 * std::exp(-0.7 * x) + 0.0003 + 4e-5 * std::exp(0.09 * x));
            d.standard(i, x) = s;
            d.exposures(i, x) = exposure;
            d.deaths(i, x) = static_cast<double>(rng.poisson(exposure * std::exp(s + 0.1 * std::sin(x / 15.0))));
        }
    }
    return d;
}

}  // namespace

TEST_CASE("log likelihood by hand") {
    auto d = make_data(1, 1);
    auto s = make_state(1, 1);
    d.exposures(0, 0) = 1.0;
    CHECK(log_likelihood(s, d) == doctest::Approx(-1.0));

    d.deaths(0, 0) = 1.0;
    s.mu(0) = 1.0;
    CHECK(log_likelihood(s, d) == doctest::Approx(-1.0));

    d.deaths(0, 0) = 0.0;
    d.exposures(0, 0) = 2.0;
    CHECK(log_likelihood(s, d) == doctest::Approx(-2.0));

    d.exposures(0, 0) = 0.0;
    s.beta(0, 0) = 800.0;  // exp would overflow if the cell were evaluated
    CHECK(log_likelihood(s, d) == 0.0);
}

TEST_CASE("log prior by hand") {
    PriorParams prior;
    auto s = make_state(2, 3);
    s.tau_beta = 2.0;
    s.tau_mu = 0.5;
    // flat betas at zero, beta0 = 0, mu = 0: only normalizing constants remain
    const double expected = gamma_lpdf(2.0, 0.01, 0.01) + gamma_lpdf(0.5, 0.01, 0.01) +
                            2 * (half_log_prec(100.0) + 3 * half_log_prec(2.0) + half_log_prec(0.5));
    CHECK(log_prior(s, prior) == doctest::Approx(expected).epsilon(1e-12));

    CHECK(gamma_lpdf(1.0, 0.01, 0.01) == doctest::Approx(std::log(std::pow(0.01, 0.01) / std::tgamma(0.01)) - 0.01));
    s.tau_beta = 1.0;
    s.tau_mu = 1.0;
    const double base = log_prior(s, prior);
    s.beta(1, 2) = 1.0;  // one increment of size 1
    CHECK(log_prior(s, prior) == doctest::Approx(base - 0.5));
}

TEST_CASE("metropolis rule") {
    Rng rng(1), untouched(1);
    CHECK(metropolis_accept(0.0, rng));
    CHECK(metropolis_accept(3.0, rng));
    CHECK(rng.next_u64() == untouched.next_u64());  // no randomness consumed
    int accepted = 0;
    for (int i = 0; i < 100000; ++i) accepted += metropolis_accept(std::log(0.3), rng) ? 1 : 0;
    CHECK(accepted / 1e5 == doctest::Approx(0.3).epsilon(0.02));
    CHECK_FALSE(metropolis_accept(-INFINITY, rng));
}

TEST_CASE("precision conditionals") {
    PriorParams prior;
    SUBCASE("one age, zero increment") {
        auto s = make_state(1, 1);
        const auto g = tau_beta_conditional(s, prior);
        CHECK(g.shape == doctest::Approx(0.51));
        CHECK(g.rate == doctest::Approx(0.01));
        Rng rng(4);
        double sum = 0.0;
        for (int i = 0; i < 100000; ++i) {
            update_precisions(s, prior, rng, true, false);
            sum += s.tau_beta;
        }
        CHECK(sum / 1e5 == doctest::Approx(51.0).epsilon(0.02));
    }
    SUBCASE("mu all zero, four populations") {
        auto s = make_state(4, 3);
        const auto g = tau_mu_conditional(s, prior);
        CHECK(g.shape == doctest::Approx(2.01));
        CHECK(g.rate == doctest::Approx(0.01));
    }
    SUBCASE("sum of squared increments 2") {
        auto s = make_state(1, 2);
        s.beta0(0) = 0.0;
        s.beta(0, 0) = 1.0;
        s.beta(0, 1) = 2.0;
        const auto g = tau_beta_conditional(s, prior);
        CHECK(g.shape == doctest::Approx(1.01));
        CHECK(g.rate == 1.01);
    }
    SUBCASE("fixed flags leave precisions alone") {
        auto s = make_state(2, 2);
        s.tau_beta = 7.0;
        s.tau_mu = 3.0;
        Rng rng(1);
        update_precisions(s, prior, rng, false, false);
        CHECK(s.tau_beta == 7.0);
        CHECK(s.tau_mu == 3.0);
    }
}

TEST_CASE("beta0 conjugate draw") {
    auto s = make_state(1, 1);
    auto rngs = streams(1, 9);
    SUBCASE("precision-weighted mean") {
        s.tau_beta = 1.0;
        s.beta(0, 0) = 2.0;
        double m = 0.0, v = 0.0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            update_beta0(s, 1.0, rngs);
            m += s.beta0(0);
            v += s.beta0(0) * s.beta0(0);
        }
        m /= n;
        v = v / n - m * m;
        CHECK(std::abs(m - 1.0) < 4 * std::sqrt(0.5 / n));
        CHECK(v == doctest::Approx(0.5).epsilon(0.02));
    }
    SUBCASE("dominant prior") {
        s.tau_beta = 1.0;
        s.beta(0, 0) = 5.0;
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            update_beta0(s, 1e8, rngs);
            worst = std::max(worst, std::abs(s.beta0(0)));
        }
        CHECK(worst < 6e-4);
    }
    SUBCASE("symmetric at zero") {
        s.tau_beta = 3.0;
        double m = 0.0;
        for (int i = 0; i < 100000; ++i) {
            update_beta0(s, 2.0, rngs);
            m += s.beta0(0);
        }
        CHECK(std::abs(m / 1e5) < 4 * std::sqrt(1.0 / 5.0 / 1e5));
    }
}

TEST_CASE("mu samples its prior when the standard is zero") {
    auto d = make_data(1, 5);
    d.exposures.setConstant(100.0);
    d.deaths.setConstant(3.0);
    auto s = make_state(1, 5);
    s.tau_mu = 4.0;
    auto rngs = streams(1, 2);
    const Eigen::VectorXd scales = Eigen::VectorXd::Constant(1, 1.0);
    double m = 0.0, v = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        update_mu(s, d, rngs, scales);
        m += s.mu(0);
        v += s.mu(0) * s.mu(0);
    }
    m /= n;
    v = v / n - m * m;
    CHECK(std::abs(m) < 0.02);
    CHECK(v == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("beta chain samples its prior with no exposure") {
    const int a = 6;
    auto d = make_data(1, a);
    auto s = make_state(1, a);
    s.tau_beta = 2.0;
    auto rngs = streams(1, 5);
    const RowMatrix scales = RowMatrix::Constant(1, a, 0.9);
    double ss = 0.0, sum = 0.0;
    long count = 0;
    for (int it = 0; it < 100000; ++it) {
        update_beta(s, d, rngs, scales);
        update_beta0(s, 100.0, rngs);
        for (int x = 1; x < a; ++x) {
            const double inc = s.beta(0, x) - s.beta(0, x - 1);
            sum += inc;
            ss += inc * inc;
            ++count;
        }
    }
    CHECK(std::abs(sum / count) < 0.02);
    CHECK(ss / count == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("untouched coordinates stay put") {
    auto d = make_data(2, 4);
    d.exposures.setConstant(50.0);
    auto s = make_state(2, 4);
    s.tau_beta = s.tau_mu = 1.0;
    auto rngs = streams(2, 3);
    const DynPoissonState before = s;
    update_beta(s, d, rngs, RowMatrix::Constant(2, 4, 0.1));
    CHECK(s.mu == before.mu);
    CHECK(s.beta0 == before.beta0);
    CHECK(s.tau_beta == before.tau_beta);
    const DynPoissonState mid = s;
    update_mu(s, d, rngs, Eigen::VectorXd::Constant(2, 0.1));
    CHECK(s.beta == mid.beta);
}

TEST_CASE("two-age toy against grid integration") {
    const double tau = 4.0;
    const std::array<double, 2> y{2, 4}, e{20, 30}, sd{-1.0, -0.8};
    auto d = make_data(1, 2);
    for (int x = 0; x < 2; ++x) {
        d.deaths(0, x) = y[x];
        d.exposures(0, x) = e[x];
        d.standard(0, x) = sd[x];
    }
    DynPoissonConfig cfg;
    cfg.chains = 2;
    cfg.burn_in = 5000;
    cfg.thin = 1;
    cfg.keep = 50000;
    cfg.seed = 77;
    cfg.fixed_tau_beta = tau;
    cfg.fixed_tau_mu = tau;
    const auto samples = run_mcmc(d, cfg);
    REQUIRE(samples.draws.size() == 100000);
    double m[4] = {0, 0, 0, 0};
    bool fixed = true;
    for (const auto& st : samples.draws) {
        fixed = fixed && st.tau_beta == tau && st.tau_mu == tau;
        m[0] += st.beta0(0);
        m[1] += st.beta(0, 0);
        m[2] += st.beta(0, 1);
        m[3] += st.mu(0);
    }
    CHECK(fixed);
    for (double& v : m) v /= static_cast<double>(samples.draws.size());
    const auto g = oracle::two_age_grid_means(y, e, sd, tau, tau, cfg.init_precision);
    CHECK(std::abs(m[1] - g.beta[0]) <= 0.02);
    CHECK(std::abs(m[2] - g.beta[1]) <= 0.02);
    CHECK(std::abs(m[3] - g.mu) <= 0.02);
    CHECK(std::abs(m[0] - g.beta0) <= 0.02);
}

TEST_CASE("run_mcmc storage, determinism and summary") {
    const auto d = simulated(2, 2000.0, 3);
    DynPoissonConfig cfg;
    cfg.chains = 2;
    cfg.burn_in = 500;
    cfg.thin = 3;
    cfg.keep = 40;
    cfg.seed = 12;
    const auto a = run_mcmc(d, cfg);
    CHECK(a.draws.size() == 80);
    CHECK(a.chains == 2);
    CHECK(a.keep == 40);
    CHECK(a.acceptance.beta > 0.0);
    CHECK(a.acceptance.beta < 1.0);

    cfg.threads = 2;
    const auto b = run_mcmc(d, cfg);
    REQUIRE(b.draws.size() == a.draws.size());
    for (std::size_t k = 0; k < a.draws.size(); ++k) {
        CHECK(a.draws[k].beta == b.draws[k].beta);
        CHECK(a.draws[k].mu == b.draws[k].mu);
        CHECK(a.draws[k].tau_beta == b.draws[k].tau_beta);
        CHECK(a.draws[k].tau_mu == b.draws[k].tau_mu);
    }

    cfg.seed = 13;
    const auto c = run_mcmc(d, cfg);
    CHECK(c.draws.back().beta != a.draws.back().beta);

    const auto fits = posterior_summary(a, d);
    REQUIRE(fits.size() == 2);
    for (const auto& f : fits) {
        CHECK(f.model == "dyn-poisson");
        REQUIRE(f.has_interval());
        CHECK((f.lower->array() <= f.log_rate_hat.array()).all());
        CHECK((f.log_rate_hat.array() <= f.upper->array()).all());
    }
}

TEST_CASE("shared precisions are scalars in every state") {
    const auto d = simulated(3, 500.0, 5);
    DynPoissonConfig cfg;
    cfg.chains = 1;
    cfg.burn_in = 200;
    cfg.thin = 1;
    cfg.keep = 20;
    const auto s = run_mcmc(d, cfg);
    for (const auto& st : s.draws) {
        CHECK(st.beta.rows() == 3);
        CHECK(st.mu.size() == 3);
        CHECK(st.tau_beta > 0.0);
        CHECK(st.tau_mu > 0.0);
    }
}

TEST_CASE("posterior summary on constructed draws") {
    auto d = make_data(1, 3);
    d.standard.row(0) << -5.0, -4.0, -3.0;
    PosteriorSamples s;
    s.chains = 1;
    s.keep = 2;
    SUBCASE("identical draws") {
        auto st = make_state(1, 3);
        st.mu(0) = 1.0;
        s.draws = {st, st};
        const auto f = posterior_summary(s, d).front();
        CHECK(f.log_rate_hat == d.standard.row(0).transpose());
        CHECK(*f.lower == f.log_rate_hat);
        CHECK(*f.upper == f.log_rate_hat);
    }
    SUBCASE("two draws, full range") {
        auto lo = make_state(1, 3), hi = make_state(1, 3);
        hi.beta.setConstant(2.0);
        s.draws = {lo, hi};
        const auto f = posterior_summary(s, d, {0.0, 1.0}).front();
        CHECK(f.log_rate_hat.isApprox(Eigen::VectorXd::Constant(3, 1.0)));
        CHECK(*f.lower == Eigen::VectorXd::Zero(3));
        CHECK(*f.upper == Eigen::VectorXd::Constant(3, 2.0));
    }
    SUBCASE("symmetric draws around the standard") {
        s.keep = 4;
        for (double shift : {-0.3, -0.1, 0.1, 0.3}) {
            auto st = make_state(1, 3);
            st.mu(0) = 1.0;
            st.beta.setConstant(shift);
            s.draws.push_back(st);
        }
        const auto f = posterior_summary(s, d).front();
        CHECK((f.log_rate_hat - d.standard.row(0).transpose()).lpNorm<Eigen::Infinity>() < 1e-12);
    }
}

TEST_CASE("quantile type 7") {
    CHECK(quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
    CHECK(quantile({1.0, 2.0, 3.0, 4.0}, 0.25) == doctest::Approx(1.75));
    CHECK(quantile({5.0}, 0.9) == 5.0);
    CHECK(quantile({0.0, 10.0}, 0.0) == 0.0);
    CHECK(quantile({0.0, 10.0}, 1.0) == 10.0);
}

TEST_CASE("split R-hat") {
    std::vector<std::vector<double>> same{{1, 2, 3, 4, 1, 2, 3, 4}, {1, 2, 3, 4, 1, 2, 3, 4}};
    CHECK(split_rhat(same) < 1.1);
    std::vector<std::vector<double>> apart{{0, 0.1, 0, 0.1}, {10, 10.1, 10, 10.1}};
    CHECK(split_rhat(apart) > 5.0);
}

TEST_CASE("large data recovers mu near one") {
    const auto d = simulated(1, 200000.0, 8);
    DynPoissonConfig cfg;
    cfg.chains = 1;
    cfg.burn_in = 20000;
    cfg.thin = 10;
    cfg.keep = 500;
    const auto s = run_mcmc(d, cfg);
    double m = 0.0;
    for (const auto& st : s.draws) m += st.mu(0);
    m /= static_cast<double>(s.draws.size());
    CHECK(m >= 0.9);
    CHECK(m <= 1.1);
}

TEST_CASE("relabelling populations permutes the output") {
    auto d = simulated(3, 800.0, 2);
    DynPoissonConfig cfg;
    cfg.chains = 1;
    cfg.burn_in = 300;
    cfg.thin = 2;
    cfg.keep = 50;
    const auto a = posterior_summary(run_mcmc(d, cfg), d);

    DynPoissonData p = d;
    const int order[3] = {2, 0, 1};
    for (int i = 0; i < 3; ++i) {
        p.deaths.row(i) = d.deaths.row(order[i]);
        p.exposures.row(i) = d.exposures.row(order[i]);
        p.standard.row(i) = d.standard.row(order[i]);
        p.ids[static_cast<std::size_t>(i)] = d.ids[static_cast<std::size_t>(order[i])];
    }
    const auto b = posterior_summary(run_mcmc(p, cfg), p);
    for (int i = 0; i < 3; ++i) {
        CHECK(b[static_cast<std::size_t>(i)].area_id == a[static_cast<std::size_t>(order[i])].area_id);
        CHECK((b[static_cast<std::size_t>(i)].log_rate_hat - a[static_cast<std::size_t>(order[i])].log_rate_hat)
                  .lpNorm<Eigen::Infinity>() < 1e-6);
    }
}

TEST_CASE("config and data validation") {
    DynPoissonConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.chains = 0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.prior_a = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.fixed_tau_beta = -1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);

    auto d = make_data(1, 3);
    d.deaths(0, 1) = 2.0;  // deaths with zero exposure
    CHECK_THROWS_AS(d.validate(), InvalidArgument);
}
