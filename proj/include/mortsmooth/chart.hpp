#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mortsmooth/core.hpp"
#include "mortsmooth/fit_result.hpp"

namespace mortsmooth {

/// Log-scale mortality chart as a self-contained SVG document: open circles
/// for observed log-rates, tick marks on the age axis where no rate is
/// observable, one curve per fit and one for the standard.
std::string render_chart(const ObservedRates& observed, const std::vector<FitResult>& fits,
                         const StandardSchedule* standard, const std::string& title = {});

void emit_chart(const ObservedRates& observed, const std::vector<FitResult>& fits, const StandardSchedule* standard,
                const std::filesystem::path& path, const std::string& title = {});

}  // namespace mortsmooth
