#include "mortsmooth/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "mortsmooth/chart.hpp"
#include "mortsmooth/errors.hpp"
#include "mortsmooth/io.hpp"
#include "mortsmooth/parallel.hpp"

namespace mortsmooth {

namespace {

/// Bad command line; maps to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void require_file(const std::filesystem::path& path, std::string_view what) {
    if (!std::filesystem::is_regular_file(path)) {
        throw InvalidArgument(fmt::format("{} file '{}' does not exist", what, path.string()));
    }
}

std::optional<Sex> parse_sex_filter(const std::string& text) {
    if (text.empty() || text == "all") return std::nullopt;
    return parse_sex(text);
}

std::vector<StandardSchedule> standards_for(const MortalityDataset& dataset, const StandardTable& table) {
    std::vector<StandardSchedule> out;
    for (const auto& rec : dataset.populations()) {
        auto s = table.select(rec.sex);
        s.validate(dataset.age_grid());
        out.push_back(std::move(s));
    }
    return out;
}

// Options shared by every subcommand.
struct Common {
    std::uint64_t seed = 1;
    std::string config;
    int threads = 1;
};

void add_common(CLI::App* app, Common& common) {
    app->add_option("--seed", common.seed, "Random seed")->capture_default_str();
    app->add_option("--config", common.config, "Run file of 'key = value' lines mirroring the long options");
    app->add_option("--threads", common.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

void add_mcmc_options(CLI::App* app, DynPoissonConfig& mcmc, bool& no_adapt) {
    app->add_option("--chains", mcmc.chains, "MCMC chains")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--burn-in", mcmc.burn_in, "Burn-in sweeps per chain")->capture_default_str();
    app->add_option("--thin", mcmc.thin, "Thinning interval")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--keep", mcmc.keep, "Stored draws per chain")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--scale-beta", mcmc.proposal_scale_beta, "Initial proposal sd for beta")->capture_default_str();
    app->add_option("--scale-mu", mcmc.proposal_scale_mu, "Initial proposal sd for mu")->capture_default_str();
    app->add_flag("--no-adapt", no_adapt, "Disable proposal tuning during burn-in");
    app->add_option("--prior-a", mcmc.prior_a, "Gamma shape of the precision priors")->capture_default_str();
    app->add_option("--prior-b", mcmc.prior_b, "Gamma rate of the precision priors")->capture_default_str();
    app->add_option("--init-precision", mcmc.init_precision, "Prior precision of the initial node")
        ->capture_default_str();
}

void add_model_options(CLI::App* app, TopalsOptions& topals, DlmOptions& dlm, double& dlm_mu) {
    app->add_option("--penalty", topals.penalty_weight, "TOPALS roughness penalty weight")->capture_default_str();
    app->add_option("--max-iter", topals.max_iter, "TOPALS Newton iteration limit")->capture_default_str();
    app->add_flag("--regression", dlm.regression, "Gaussian DLM: include a loading on the standard");
    app->add_option("--mu", dlm_mu, "Gaussian DLM: fixed loading (estimated when omitted)");
}

/// Fills options not given on the command line from a flat `key = value` file.
void apply_config(CLI::App* app, const std::string& path, const std::set<std::string>& known_keys) {
    std::ifstream in(path);
    if (!in) throw UsageError(fmt::format("cannot open config file '{}'", path));
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = CLI::detail::trim_copy(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw UsageError(fmt::format("{}:{}: expected 'key = value'", path, number));
        }
        const std::string key = CLI::detail::trim_copy(line.substr(0, eq));
        const std::string value = CLI::detail::trim_copy(line.substr(eq + 1));
        if (key == "config") throw UsageError(fmt::format("{}:{}: config files cannot nest", path, number));
        CLI::Option* opt = nullptr;
        try {
            opt = app->get_option("--" + key);
        } catch (const CLI::OptionNotFound&) {
            if (known_keys.contains(key)) continue;  // belongs to another subcommand
            throw UsageError(fmt::format("{}:{}: unknown key '{}'", path, number, key));
        }
        if (opt->count() > 0) continue;  // command line wins
        try {
            if (opt->get_type_size() == 0) {
                opt->add_result(value);
            } else {
                for (const auto& piece : CLI::detail::split(value, ',')) opt->add_result(CLI::detail::trim_copy(piece));
            }
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw UsageError(fmt::format("{}:{}: {}", path, number, e.what()));
        }
    }
}

std::string describe(const MetricsRow& m) {
    return fmt::format("RBias {:+.4f}  sqrtMSE {:.4f}  MAPE {:.4f}", m.rbias, m.rmse, m.mape);
}

int cmd_validate(const std::string& input, const std::string& standard, const std::string& reference,
                 std::ostream& out) {
    if (input.empty() && standard.empty() && reference.empty()) {
        throw UsageError("validate needs at least one of --input, --standard, --reference");
    }
    if (!input.empty()) {
        require_file(input, "dataset");
        const auto ds = read_dataset(input);
        std::size_t zeros = 0;
        std::size_t cells = 0;
        for (const auto& rec : ds.populations()) {
            for (auto y : rec.deaths) zeros += y == 0 ? 1 : 0;
            cells += rec.deaths.size();
        }
        fmt::print(out, "{}: ok, {} populations x {} ages, {:.1f}% zero-death cells\n", input, ds.size(),
                   ds.age_grid().size(), cells ? 100.0 * static_cast<double>(zeros) / static_cast<double>(cells) : 0.0);
    }
    if (!standard.empty()) {
        require_file(standard, "standard");
        const auto table = read_standard(standard);
        std::string sexes;
        for (const auto& [sex, s] : table.schedules()) sexes += fmt::format(" {}", to_string(sex));
        fmt::print(out, "{}: ok, schedules:{}\n", standard, sexes);
    }
    if (!reference.empty()) {
        require_file(reference, "reference");
        const auto ref = read_reference(reference);
        ref.validate();
        fmt::print(out, "{}: ok, {} ages\n", reference, ref.size());
    }
    return 0;
}

}  // namespace

void RunConfig::validate() const {
    require_file(input, "dataset");
    const bool needs_standard =
        model == ModelKind::topals || model == ModelKind::dyn_poisson || (model == ModelKind::gaussian_dlm && dlm.regression);
    if (needs_standard && !standard) {
        throw InvalidArgument(fmt::format("model {} requires --standard", to_string(model)));
    }
    if (standard) require_file(*standard, "standard");
    if (model == ModelKind::truth) throw InvalidArgument("the truth model is only available in the benchmark");
    if (threads < 1) throw InvalidArgument("threads must be >= 1");
}

std::filesystem::path run_fit(const RunConfig& config, std::ostream& log) {
    config.validate();
    const MortalityDataset dataset = read_dataset(config.input, config.sex_filter);
    if (dataset.empty()) throw InvalidArgument("no populations match the sex filter");
    std::optional<StandardTable> table;
    std::vector<StandardSchedule> standards;
    if (config.standard) {
        table = read_standard(*config.standard, dataset.age_grid());
        standards = standards_for(dataset, *table);
    }

    std::vector<FitResult> fits(dataset.size());
    std::vector<std::string> failures(dataset.size());
    switch (config.model) {
        case ModelKind::dyn_poisson: {
            DynPoissonConfig mcmc = config.mcmc;
            mcmc.seed = config.seed;
            mcmc.threads = config.threads;
            const DynPoissonData data = DynPoissonData::from(dataset, standards);
            const PosteriorSamples samples = run_mcmc(data, mcmc);
            fits = posterior_summary(samples, data);
            fmt::print(log, "dyn-poisson: {} populations, {} chains x {} draws, acceptance beta {:.3f} mu {:.3f}\n",
                       data.populations(), samples.chains, samples.keep, samples.acceptance.beta,
                       samples.acceptance.mu);
            if (samples.chains >= 2 && samples.keep >= 4) {
                const double rhat = max_split_rhat(samples, data);
                fmt::print(log, "dyn-poisson: max split R-hat over log-rates {:.3f}{}\n", rhat,
                           rhat > 1.1 ? " (chains have not mixed; lengthen the burn-in)" : "");
            }
            break;
        }
        case ModelKind::topals: {
            const SplineBasis basis = build_basis(dataset.age_grid());
            std::vector<TopalsFit> raw(dataset.size());
            parallel_for(dataset.size(), config.threads, [&](std::size_t i) {
                try {
                    raw[i] = topals_fit(dataset[i], standards[i], basis, config.topals);
                    fits[i] = to_fit_result(raw[i], dataset[i]);
                } catch (const Error& e) {
                    failures[i] = e.what();
                }
            });
            for (std::size_t i = 0; i < raw.size(); ++i) {
                if (!failures[i].empty()) continue;
                fmt::print(log, "topals {} {}: {} iterations, {}, |grad| {:.2e}\n", dataset[i].id,
                           to_string(dataset[i].sex), raw[i].iterations,
                           raw[i].converged ? "converged" : "NOT converged", raw[i].final_gradient_norm);
            }
            break;
        }
        case ModelKind::gaussian_dlm: {
            std::vector<DlmFit> raw(dataset.size());
            parallel_for(dataset.size(), config.threads, [&](std::size_t i) {
                try {
                    auto [fit, result] = fit_dlm(dataset[i], standards.empty() ? nullptr : &standards[i], config.dlm);
                    raw[i] = std::move(fit);
                    fits[i] = std::move(result);
                } catch (const Error& e) {
                    failures[i] = e.what();
                }
            });
            for (std::size_t i = 0; i < raw.size(); ++i) {
                if (!failures[i].empty()) continue;
                fmt::print(log, "gaussian-dlm {} {}: V {:.4g}, W {:.4g}, {} observed ages\n", dataset[i].id,
                           to_string(dataset[i].sex), raw[i].obs_variance, raw[i].state_variance, raw[i].observed);
            }
            break;
        }
        case ModelKind::truth:
            throw InvalidArgument("the truth model is only available in the benchmark");
    }

    std::vector<FitResult> written;
    std::string first_failure;
    for (std::size_t i = 0; i < fits.size(); ++i) {
        if (failures[i].empty()) {
            written.push_back(std::move(fits[i]));
        } else {
            fmt::print(log, "{} {} {}: failed: {}\n", to_string(config.model), dataset[i].id,
                       to_string(dataset[i].sex), failures[i]);
            if (first_failure.empty()) first_failure = failures[i];
        }
    }
    const auto path = config.output_dir / fmt::format("fit_{}.csv", to_string(config.model));
    write_fit(written, path);
    fmt::print(log, "wrote {}\n", path.string());
    if (!first_failure.empty()) {
        throw Error(fmt::format("{} of {} populations failed; first: {}", fits.size() - written.size(), fits.size(),
                                first_failure));
    }
    return path;
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Smoothed mortality schedules for small populations", "mortsmooth"};
    app.require_subcommand(1);

    // fit
    RunConfig run;
    Common fit_common;
    std::string fit_model, fit_input, fit_standard, fit_sex = "all", fit_output = ".";
    bool fit_no_adapt = false;
    double fit_mu = std::numeric_limits<double>::quiet_NaN();
    auto* fit = app.add_subcommand("fit", "Fit one model to a dataset");
    add_common(fit, fit_common);
    fit->add_option("--model", fit_model, "dyn-poisson, topals or gaussian-dlm");
    fit->add_option("--input", fit_input, "Dataset file (area_id,sex,age,deaths,exposure)");
    fit->add_option("--standard", fit_standard, "Standard file (age,sex,log_rate)");
    fit->add_option("--sex", fit_sex, "female, male, both or all")->capture_default_str();
    fit->add_option("--output", fit_output, "Output directory")->capture_default_str();
    add_mcmc_options(fit, run.mcmc, fit_no_adapt);
    add_model_options(fit, run.topals, run.dlm, fit_mu);

    // simulate
    Common sim_common;
    std::string sim_reference, sim_output, sim_sex = "both";
    std::vector<double> sim_sizes;
    auto* sim = app.add_subcommand("simulate", "Simulate deaths from a reference schedule");
    add_common(sim, sim_common);
    sim->add_option("--reference", sim_reference, "Reference file (age,population_share,rate)");
    sim->add_option("--sizes", sim_sizes, "Total population sizes")->delimiter(',');
    sim->add_option("--sex", sim_sex, "Sex label of the simulated records")->capture_default_str();
    sim->add_option("--output", sim_output, "Dataset file to write");

    // benchmark
    Common bench_common;
    BenchmarkOptions bench;
    std::string bench_reference, bench_standard, bench_std_sex = "both", bench_output = ".", bench_seeds;
    std::vector<double> bench_sizes;
    std::vector<std::string> bench_models{"dyn-poisson", "topals", "gaussian-dlm"};
    bool bench_no_adapt = false, bench_timings = false;
    double bench_mu = std::numeric_limits<double>::quiet_NaN();
    auto* benchmark = app.add_subcommand("benchmark", "Simulation benchmark: fit models, score against the truth");
    add_common(benchmark, bench_common);
    benchmark->add_option("--reference", bench_reference, "Reference file (age,population_share,rate)");
    benchmark->add_option("--standard", bench_standard, "Standard file (age,sex,log_rate)");
    benchmark->add_option("--standard-sex", bench_std_sex, "Which standard schedule to use")->capture_default_str();
    benchmark->add_option("--sizes", bench_sizes, "Total population sizes")->delimiter(',');
    benchmark->add_option("--models", bench_models, "Models to fit")->delimiter(',')->capture_default_str();
    benchmark->add_option("--seeds", bench_seeds, "File with one replicate seed per line (overrides --seed)");
    benchmark->add_option("--output", bench_output, "Output directory")->capture_default_str();
    benchmark->add_flag("--timings", bench_timings, "Add a wall-clock seconds column");
    add_mcmc_options(benchmark, bench.mcmc, bench_no_adapt);
    add_model_options(benchmark, bench.topals, bench.dlm, bench_mu);

    // chart
    Common chart_common;
    std::string chart_input, chart_area, chart_sex, chart_standard, chart_output, chart_title;
    std::vector<std::string> chart_fits;
    auto* chart = app.add_subcommand("chart", "Draw observed log-rates and fitted curves as SVG");
    add_common(chart, chart_common);
    chart->add_option("--input", chart_input, "Dataset file");
    chart->add_option("--area", chart_area, "Area to draw (optional if the dataset has one population)");
    chart->add_option("--sex", chart_sex, "Sex to draw");
    chart->add_option("--fits", chart_fits, "Fit files written by 'fit'")->delimiter(',');
    chart->add_option("--standard", chart_standard, "Standard file");
    chart->add_option("--output", chart_output, "SVG file to write");
    chart->add_option("--title", chart_title, "Chart title");

    // validate
    Common val_common;
    std::string val_input, val_standard, val_reference;
    auto* validate = app.add_subcommand("validate", "Schema-check input files");
    add_common(validate, val_common);
    validate->add_option("--input", val_input, "Dataset file");
    validate->add_option("--standard", val_standard, "Standard file");
    validate->add_option("--reference", val_reference, "Reference file");

    std::set<std::string> known_keys;
    for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) {
        for (const auto* opt : sub->get_options()) {
            for (const auto& name : opt->get_lnames()) known_keys.insert(name);
        }
    }

    auto usage = [&](const std::string& message, CLI::App* sub) {
        fmt::print(err, "error: {}\n{}", message, (sub ? sub : &app)->help("", CLI::AppFormatMode::Normal));
        return 2;
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        CLI::App* shown = &app;
        for (auto* sub : app.get_subcommands()) shown = sub;
        out << shown->help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        const auto subs = app.get_subcommands();
        return usage(e.what(), subs.empty() ? nullptr : subs.front());
    }

    CLI::App* active = app.get_subcommands().front();
    try {
        for (auto [sub, common] : {std::pair{fit, &fit_common}, std::pair{sim, &sim_common},
                                   std::pair{benchmark, &bench_common}, std::pair{chart, &chart_common},
                                   std::pair{validate, &val_common}}) {
            if (sub == active && !common->config.empty()) apply_config(sub, common->config, known_keys);
        }

        if (active == fit) {
            if (fit_model.empty()) throw UsageError("fit requires --model");
            if (fit_input.empty()) throw UsageError("fit requires --input");
            run.model = parse_model(fit_model);
            if (run.model == ModelKind::truth) throw UsageError("--model truth is only available in the benchmark");
            if (fit_standard.empty() &&
                (run.model != ModelKind::gaussian_dlm || run.dlm.regression)) {
                throw UsageError(fmt::format("fit --model {} requires --standard", to_string(run.model)));
            }
            run.input = fit_input;
            if (!fit_standard.empty()) run.standard = fit_standard;
            run.sex_filter = parse_sex_filter(fit_sex);
            run.output_dir = fit_output;
            run.seed = fit_common.seed;
            run.threads = fit_common.threads;
            run.mcmc.adapt = !fit_no_adapt;
            if (!std::isnan(fit_mu)) run.dlm.mu = fit_mu;
            run_fit(run, out);
            return 0;
        }

        if (active == sim) {
            if (sim_reference.empty()) throw UsageError("simulate requires --reference");
            if (sim_output.empty()) throw UsageError("simulate requires --output");
            require_file(sim_reference, "reference");
            const auto reference = read_reference(sim_reference);
            const Sex sex = parse_sex(sim_sex);
            if (sim_sizes.empty()) sim_sizes = default_benchmark_sizes();
            std::vector<PopulationRecord> records;
            for (double size : sim_sizes) {
                const auto key = static_cast<std::uint64_t>(std::llround(size));
                records.push_back(simulate_population(reference, size, derive_seed(sim_common.seed, {key}), sex).record);
            }
            write_dataset(MortalityDataset(AgeGrid(reference.size()), std::move(records)), sim_output);
            fmt::print(out, "wrote {} ({} populations)\n", sim_output, sim_sizes.size());
            return 0;
        }

        if (active == benchmark) {
            if (bench_reference.empty()) throw UsageError("benchmark requires --reference");
            if (bench_standard.empty()) throw UsageError("benchmark requires --standard");
            require_file(bench_reference, "reference");
            require_file(bench_standard, "standard");
            const auto reference = read_reference(bench_reference);
            const auto standard = read_standard(bench_standard, parse_sex(bench_std_sex), AgeGrid(reference.size()));
            std::vector<ModelKind> models;
            for (const auto& m : bench_models) models.push_back(parse_model(m));
            std::vector<std::uint64_t> seeds{bench_common.seed};
            if (!bench_seeds.empty()) seeds = read_seeds(bench_seeds);
            if (bench_sizes.empty()) bench_sizes = default_benchmark_sizes();
            bench.mcmc.adapt = !bench_no_adapt;
            bench.threads = bench_common.threads;
            if (!std::isnan(bench_mu)) bench.dlm.mu = bench_mu;

            const auto rows = run_benchmark(reference, bench_sizes, models, standard, seeds, bench);
            const auto path = std::filesystem::path(bench_output) / "metrics.csv";
            write_metrics(rows, path, bench_timings);
            for (const auto& row : rows) {
                fmt::print(out, "{:>9} seed {:<6} {:<13} {}\n", row.size, row.seed, to_string(row.model),
                           row.metrics ? describe(*row.metrics) : "failed: " + row.status);
            }
            fmt::print(out, "wrote {}\n", path.string());
            return 0;
        }

        if (active == chart) {
            if (chart_input.empty()) throw UsageError("chart requires --input");
            if (chart_output.empty()) throw UsageError("chart requires --output");
            require_file(chart_input, "dataset");
            const auto dataset = read_dataset(chart_input);
            const PopulationRecord* record = nullptr;
            std::size_t matches = 0;
            for (const auto& rec : dataset.populations()) {
                if (!chart_area.empty() && rec.id != chart_area) continue;
                if (!chart_sex.empty() && to_string(rec.sex) != chart_sex) continue;
                record = &rec;
                ++matches;
            }
            if (matches == 0) throw InvalidArgument("no population matches --area/--sex");
            if (matches > 1) throw UsageError("several populations match; narrow with --area and --sex");

            std::vector<FitResult> fits;
            for (const auto& file : chart_fits) {
                require_file(file, "fit");
                for (auto& f : read_fit(file)) {
                    if (f.area_id == record->id && f.sex == record->sex) fits.push_back(std::move(f));
                }
            }
            std::optional<StandardSchedule> standard;
            if (!chart_standard.empty()) {
                require_file(chart_standard, "standard");
                standard = read_standard(chart_standard, record->sex, dataset.age_grid());
            }
            const std::string title = chart_title.empty()
                ? fmt::format("{} ({})", record->id, to_string(record->sex)) : chart_title;
            emit_chart(naive_rates(*record), fits, standard ? &*standard : nullptr, chart_output, title);
            fmt::print(out, "wrote {}\n", chart_output);
            return 0;
        }

        if (active == validate) return cmd_validate(val_input, val_standard, val_reference, out);
    } catch (const UsageError& e) {
        fmt::print(err, "error: {}\nrun 'mortsmooth {} --help' for usage\n", e.what(), active->get_name());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return 1;
    }
    return usage("unknown subcommand", nullptr);
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"mortsmooth"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace mortsmooth
