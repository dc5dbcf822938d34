#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mortsmooth/core.hpp"
#include "mortsmooth/dyn_poisson.hpp"
#include "mortsmooth/gaussian_dlm.hpp"
#include "mortsmooth/metrics.hpp"
#include "mortsmooth/topals.hpp"

namespace mortsmooth {

/// Population shares by age and the true mortality rates used to simulate deaths.
struct ReferenceSchedule {
    Eigen::VectorXd age_structure;  // sums to 1
    Eigen::VectorXd true_rates;     // per person-year, > 0
    std::string label;

    int size() const noexcept { return static_cast<int>(true_rates.size()); }
    Eigen::VectorXd true_log_rates() const { return true_rates.array().log().matrix(); }
    void validate() const;
};

/// E[x] = total_size * structure[x]; exposures stay real-valued.
Eigen::VectorXd make_exposures(const ReferenceSchedule& reference, double total_size);

/// Independent Poisson(E[x] rate[x]) counts; deterministic per seed.
std::vector<std::int64_t> simulate_deaths(const Eigen::VectorXd& exposures, const Eigen::VectorXd& true_rates,
                                          std::uint64_t seed);

struct SimulatedPopulation {
    PopulationRecord record;
    double total_size = 0.0;
    std::uint64_t seed = 0;
    const ReferenceSchedule* truth = nullptr;
};

SimulatedPopulation simulate_population(const ReferenceSchedule& reference, double total_size, std::uint64_t seed,
                                        Sex sex = Sex::both);

/// "sim_1000" for size 1000.
std::string simulated_id(double total_size);

enum class ModelKind { dyn_poisson, topals, gaussian_dlm, truth };

std::string_view to_string(ModelKind model);
ModelKind parse_model(std::string_view text);

/// Population sizes of the simulation experiment.
std::vector<double> default_benchmark_sizes();

struct BenchmarkOptions {
    DynPoissonConfig mcmc;
    TopalsOptions topals;
    DlmOptions dlm;
    int threads = 1;
    // Fit the dynamic Poisson model once per seed over all sizes, sharing the
    // precisions, instead of separately per population.
    bool joint_poisson = true;
};

struct BenchmarkRow {
    double size = 0.0;
    std::uint64_t seed = 0;
    ModelKind model = ModelKind::truth;
    std::optional<MetricsRow> metrics;  // absent when the fit failed
    std::string status = "ok";          // error message when the fit failed
    int zero_death_ages = 0;
    double seconds = 0.0;               // wall clock; not reproducible
};

/// Fits every model to one simulated population per (size, seed) and scores
/// the fitted log-rates against the truth. Rows are ordered by size, then
/// seed, then model as given. With joint_poisson, a dyn-poisson row's seconds
/// is the time of the joint fit it came from.
std::vector<BenchmarkRow> run_benchmark(const ReferenceSchedule& reference, const std::vector<double>& sizes,
                                        const std::vector<ModelKind>& models, const StandardSchedule& standard,
                                        const std::vector<std::uint64_t>& seeds, const BenchmarkOptions& options = {});

/// Fitted log-rates of one model for one population (truth only in simulation).
FitResult fit_model(ModelKind model, const PopulationRecord& record, const StandardSchedule* standard,
                    const BenchmarkOptions& options, const ReferenceSchedule* truth = nullptr);

}  // namespace mortsmooth
