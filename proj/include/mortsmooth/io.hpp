#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mortsmooth/core.hpp"
#include "mortsmooth/fit_result.hpp"
#include "mortsmooth/simulation.hpp"

namespace mortsmooth {

// All files are comma-separated UTF-8 text with a mandatory header row and
// '.' as the decimal separator. Readers reject malformed input with a
// SchemaError (or ValidationError) naming the offending line.

/// Female and male standards from one file, with "both" derived on request.
class StandardTable {
public:
    explicit StandardTable(std::map<Sex, StandardSchedule> schedules) : schedules_(std::move(schedules)) {}

    bool has(Sex sex) const;
    /// "both", when not in the file, is the elementwise mean of female and male.
    StandardSchedule select(Sex sex) const;
    const std::map<Sex, StandardSchedule>& schedules() const noexcept { return schedules_; }

private:
    std::map<Sex, StandardSchedule> schedules_;
};

/// Header `age,sex,log_rate`; every sex present must cover ages 0..A-1 of the
/// grid. Rows for older ages are ignored.
StandardTable read_standard(const std::filesystem::path& path, const AgeGrid& grid = AgeGrid{});
StandardSchedule read_standard(const std::filesystem::path& path, Sex sex, const AgeGrid& grid = AgeGrid{});
void write_standard(const StandardTable& table, const std::filesystem::path& path);

/// Header `area_id,sex,age,deaths,exposure`. One record per (area, sex) in
/// order of first appearance; `sex_filter` keeps only that sex. Every age of
/// the grid must be present for each record (zeros are explicit).
MortalityDataset read_dataset(const std::filesystem::path& path, std::optional<Sex> sex_filter = std::nullopt,
                              const AgeGrid& grid = AgeGrid{});
void write_dataset(const MortalityDataset& dataset, const std::filesystem::path& path);

/// Header `area_id,sex,age,log_rate_hat,lower,upper,model`; rows in the order
/// of `fits`, ages ascending; interval columns empty when absent.
void write_fit(const std::vector<FitResult>& fits, const std::filesystem::path& path);
std::vector<FitResult> read_fit(const std::filesystem::path& path);

/// Header `age,population_share,rate`.
ReferenceSchedule read_reference(const std::filesystem::path& path);
void write_reference(const ReferenceSchedule& reference, const std::filesystem::path& path);

/// Header `size,seed,model,status,rbias,rmse,mape,n_ages,zero_death_ages`,
/// plus `seconds` when include_timing is set (timings are not reproducible).
void write_metrics(const std::vector<BenchmarkRow>& rows, const std::filesystem::path& path,
                   bool include_timing = false);

/// One unsigned integer per line; blank lines and '#' comments skipped.
std::vector<std::uint64_t> read_seeds(const std::filesystem::path& path);

}  // namespace mortsmooth
