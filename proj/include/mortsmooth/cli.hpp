#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mortsmooth/core.hpp"
#include "mortsmooth/dyn_poisson.hpp"
#include "mortsmooth/gaussian_dlm.hpp"
#include "mortsmooth/simulation.hpp"
#include "mortsmooth/topals.hpp"

namespace mortsmooth {

/// Everything one `fit` invocation needs.
struct RunConfig {
    ModelKind model = ModelKind::topals;
    std::filesystem::path input;
    std::optional<std::filesystem::path> standard;
    std::optional<Sex> sex_filter;  // all sexes when absent
    DynPoissonConfig mcmc;
    TopalsOptions topals;
    DlmOptions dlm;
    std::filesystem::path output_dir = ".";
    std::uint64_t seed = 1;
    int threads = 1;

    /// Throws InvalidArgument for missing files or a model without its standard.
    void validate() const;
};

/// Fits the configured model to every selected population and writes
/// `<output_dir>/fit_<model>.csv`. Returns the written path.
std::filesystem::path run_fit(const RunConfig& config, std::ostream& log);

/// Exit codes: 0 success, 1 runtime or model error, 2 usage error.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mortsmooth
