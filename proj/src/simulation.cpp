#include "mortsmooth/simulation.hpp"

#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "mortsmooth/errors.hpp"
#include "mortsmooth/parallel.hpp"
#include "mortsmooth/rng.hpp"

namespace mortsmooth {

void ReferenceSchedule::validate() const {
    if (age_structure.size() != true_rates.size()) {
        throw InvalidArgument(fmt::format("reference '{}': {} shares for {} rates", label, age_structure.size(),
                                          true_rates.size()));
    }
    if ((age_structure.array() < 0.0).any() || !age_structure.allFinite()) {
        throw InvalidArgument(fmt::format("reference '{}': population shares must be finite and >= 0", label));
    }
    if (std::fabs(age_structure.sum() - 1.0) > 1e-9) {
        throw InvalidArgument(fmt::format("reference '{}': population shares sum to {:.12f}, not 1", label,
                                          age_structure.sum()));
    }
    if (!true_rates.allFinite() || (true_rates.array() <= 0.0).any()) {
        throw InvalidArgument(fmt::format("reference '{}': true rates must be finite and > 0", label));
    }
}

Eigen::VectorXd make_exposures(const ReferenceSchedule& reference, double total_size) {
    if (!(total_size > 0.0) || !std::isfinite(total_size)) {
        throw InvalidArgument(fmt::format("population size must be positive, got {}", total_size));
    }
    return total_size * reference.age_structure;
}

std::vector<std::int64_t> simulate_deaths(const Eigen::VectorXd& exposures, const Eigen::VectorXd& true_rates,
                                          std::uint64_t seed) {
    if (exposures.size() != true_rates.size()) throw InvalidArgument("exposures and rates differ in length");
    Rng rng(seed);
    std::vector<std::int64_t> deaths(static_cast<std::size_t>(exposures.size()));
    for (Eigen::Index x = 0; x < exposures.size(); ++x) {
        deaths[static_cast<std::size_t>(x)] = rng.poisson(exposures(x) * true_rates(x));
    }
    return deaths;
}

std::string simulated_id(double total_size) {
    if (total_size == std::floor(total_size) && total_size < 1e15) return fmt::format("sim_{:.0f}", total_size);
    return fmt::format("sim_{}", total_size);
}

SimulatedPopulation simulate_population(const ReferenceSchedule& reference, double total_size, std::uint64_t seed,
                                        Sex sex) {
    reference.validate();
    SimulatedPopulation sim;
    sim.total_size = total_size;
    sim.seed = seed;
    sim.truth = &reference;
    const Eigen::VectorXd e = make_exposures(reference, total_size);
    sim.record.id = simulated_id(total_size);
    sim.record.sex = sex;
    sim.record.exposures.assign(e.data(), e.data() + e.size());
    sim.record.deaths = simulate_deaths(e, reference.true_rates, seed);
    return sim;
}

std::string_view to_string(ModelKind model) {
    switch (model) {
        case ModelKind::dyn_poisson: return "dyn-poisson";
        case ModelKind::topals: return "topals";
        case ModelKind::gaussian_dlm: return "gaussian-dlm";
        case ModelKind::truth: return "truth";
    }
    return "truth";
}

ModelKind parse_model(std::string_view text) {
    if (text == "dyn-poisson" || text == "poisson") return ModelKind::dyn_poisson;
    if (text == "topals") return ModelKind::topals;
    if (text == "gaussian-dlm" || text == "gaussian") return ModelKind::gaussian_dlm;
    if (text == "truth") return ModelKind::truth;
    throw InvalidArgument(fmt::format("unknown model '{}' (expected dyn-poisson, topals, gaussian-dlm or truth)", text));
}

std::vector<double> default_benchmark_sizes() {
    // The experiment's nine sizes plus 30,000, which appears among the reported results.
    return {1000, 2000, 5000, 10000, 20000, 30000, 50000, 100000, 500000, 1000000};
}

FitResult fit_model(ModelKind model, const PopulationRecord& record, const StandardSchedule* standard,
                    const BenchmarkOptions& options, const ReferenceSchedule* truth) {
    switch (model) {
        case ModelKind::truth: {
            if (!truth) throw InvalidArgument("the truth model is only available in simulation");
            FitResult fit;
            fit.area_id = record.id;
            fit.sex = record.sex;
            fit.model = "truth";
            fit.log_rate_hat = truth->true_log_rates();
            return fit;
        }
        case ModelKind::topals: {
            if (!standard) throw InvalidArgument("topals needs a standard schedule");
            const SplineBasis basis = build_basis(AgeGrid(record.size()));
            return to_fit_result(topals_fit(record, *standard, basis, options.topals), record);
        }
        case ModelKind::gaussian_dlm:
            return fit_dlm(record, standard, options.dlm).second;
        case ModelKind::dyn_poisson: {
            if (!standard) throw InvalidArgument("dyn-poisson needs a standard schedule");
            const MortalityDataset single(AgeGrid(record.size()), {record});
            const DynPoissonData data = DynPoissonData::from(single, *standard);
            const PosteriorSamples samples = run_mcmc(data, options.mcmc);
            return posterior_summary(samples, data).front();
        }
    }
    throw InvalidArgument("unknown model");
}

std::vector<BenchmarkRow> run_benchmark(const ReferenceSchedule& reference, const std::vector<double>& sizes,
                                        const std::vector<ModelKind>& models, const StandardSchedule& standard,
                                        const std::vector<std::uint64_t>& seeds, const BenchmarkOptions& options) {
    if (sizes.empty()) throw InvalidArgument("benchmark needs at least one population size");
    if (models.empty()) throw InvalidArgument("benchmark needs at least one model");
    if (seeds.empty()) throw InvalidArgument("benchmark needs at least one seed");
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (simulated_id(sizes[i]) == simulated_id(sizes[j])) {
                throw InvalidArgument(fmt::format("population size {} listed twice", sizes[i]));
            }
        }
    }
    reference.validate();
    standard.validate(AgeGrid(reference.size()));
    const Eigen::VectorXd truth = reference.true_log_rates();
    const std::size_t n_models = models.size();

    // Cells are (seed, size) with sizes innermost; rows[cell * n_models + m].
    std::vector<SimulatedPopulation> pops;
    std::vector<BenchmarkRow> rows;
    for (double size : sizes) {
        for (auto seed : seeds) {
            const auto size_key = static_cast<std::uint64_t>(std::llround(size));
            pops.push_back(simulate_population(reference, size, derive_seed(seed, {size_key})));
            int zeros = 0;
            for (auto y : pops.back().record.deaths) zeros += y == 0 ? 1 : 0;
            for (ModelKind model : models) {
                BenchmarkRow row;
                row.size = size;
                row.seed = seed;
                row.model = model;
                row.zero_death_ages = zeros;
                rows.push_back(std::move(row));
            }
        }
    }
    auto cell_of = [&](std::size_t size_index, std::size_t seed_index) { return size_index * seeds.size() + seed_index; };

    // One task per single-population fit, plus one joint dynamic Poisson fit
    // per seed covering every size.
    struct Task {
        std::size_t model_index;
        std::size_t seed_index;
        std::optional<std::size_t> size_index;  // empty for a joint fit
    };
    std::vector<Task> tasks;
    for (std::size_t m = 0; m < n_models; ++m) {
        if (models[m] == ModelKind::dyn_poisson && options.joint_poisson) {
            for (std::size_t k = 0; k < seeds.size(); ++k) tasks.push_back({m, k, std::nullopt});
        }
    }
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        for (std::size_t k = 0; k < seeds.size(); ++k) {
            for (std::size_t m = 0; m < n_models; ++m) {
                if (models[m] == ModelKind::dyn_poisson && options.joint_poisson) continue;
                tasks.push_back({m, k, i});
            }
        }
    }

    parallel_for(tasks.size(), options.threads, [&](std::size_t t) {
        const Task& task = tasks[t];
        const auto seed = seeds[task.seed_index];
        BenchmarkOptions local = options;
        local.mcmc.threads = 1;
        const auto start = std::chrono::steady_clock::now();
        auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

        if (!task.size_index) {
            local.mcmc.seed = derive_seed(seed, {1});
            std::vector<PopulationRecord> records;
            for (std::size_t i = 0; i < sizes.size(); ++i) records.push_back(pops[cell_of(i, task.seed_index)].record);
            std::vector<FitResult> fits;
            std::string failure;
            try {
                const MortalityDataset joint(AgeGrid(reference.size()), std::move(records));
                const DynPoissonData data = DynPoissonData::from(joint, standard);
                fits = posterior_summary(run_mcmc(data, local.mcmc), data);
            } catch (const Error& e) {
                failure = e.what();
            }
            const double secs = elapsed();
            for (std::size_t i = 0; i < sizes.size(); ++i) {
                BenchmarkRow& row = rows[cell_of(i, task.seed_index) * n_models + task.model_index];
                row.seconds = secs;
                if (failure.empty()) {
                    row.metrics = evaluate(truth, fits[i].log_rate_hat);
                } else {
                    row.status = failure;
                }
            }
            return;
        }

        const std::size_t cell = cell_of(*task.size_index, task.seed_index);
        const auto size_key = static_cast<std::uint64_t>(std::llround(sizes[*task.size_index]));
        local.mcmc.seed = derive_seed(seed, {size_key, 1});
        BenchmarkRow& row = rows[cell * n_models + task.model_index];
        try {
            const FitResult fit = fit_model(models[task.model_index], pops[cell].record, &standard, local, &reference);
            row.metrics = evaluate(truth, fit.log_rate_hat);
        } catch (const Error& e) {
            row.status = e.what();
        }
        row.seconds = elapsed();
    });
    return rows;
}

}  // namespace mortsmooth
