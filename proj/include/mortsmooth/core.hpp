#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mortsmooth {

enum class Sex { female, male, both };

std::string_view to_string(Sex sex);
/// Parses "female", "male" or "both"; throws InvalidArgument otherwise.
Sex parse_sex(std::string_view text);

/// Consecutive single-year ages 0..A-1.
class AgeGrid {
public:
    static constexpr int kDefaultSize = 100;

    explicit AgeGrid(int size = kDefaultSize);

    int size() const noexcept { return size_; }
    int age(int index) const noexcept { return index; }
    int max_age() const noexcept { return size_ - 1; }
    std::vector<int> ages() const;

    friend bool operator==(const AgeGrid&, const AgeGrid&) = default;

private:
    int size_;
};

/// Deaths and exposures of one population (area and sex) by single-year age.
struct PopulationRecord {
    std::string id;
    Sex sex = Sex::both;
    std::vector<std::int64_t> deaths;
    std::vector<double> exposures;

    int size() const noexcept { return static_cast<int>(deaths.size()); }
    Eigen::VectorXd deaths_vector() const;
    Eigen::VectorXd exposure_vector() const;
    /// Checks lengths, finiteness, non-negativity and the no-deaths-without-exposure rule.
    void validate(const AgeGrid& grid) const;
};

class MortalityDataset {
public:
    MortalityDataset() = default;
    MortalityDataset(AgeGrid grid, std::vector<PopulationRecord> populations);

    const AgeGrid& age_grid() const noexcept { return grid_; }
    const std::vector<PopulationRecord>& populations() const noexcept { return populations_; }
    std::size_t size() const noexcept { return populations_.size(); }
    bool empty() const noexcept { return populations_.empty(); }
    const PopulationRecord& operator[](std::size_t i) const { return populations_[i]; }

private:
    AgeGrid grid_;
    std::vector<PopulationRecord> populations_;
};

/// Log mortality rates of a reference population, one per age.
struct StandardSchedule {
    Eigen::VectorXd log_rates;
    std::string label;
    Sex sex = Sex::both;

    int size() const noexcept { return static_cast<int>(log_rates.size()); }
    void validate(const AgeGrid& grid) const;
};

struct RateCell {
    enum class Kind { rate, zero_deaths, no_exposure };
    Kind kind = Kind::no_exposure;
    double value = 0.0;  // deaths / exposure; meaningful only for Kind::rate

    static RateCell rate(double r) { return {Kind::rate, r}; }
    static RateCell zero_deaths() { return {Kind::zero_deaths, 0.0}; }
    static RateCell no_exposure() { return {Kind::no_exposure, 0.0}; }

    bool has_rate() const noexcept { return kind == Kind::rate; }
};

using ObservedRates = std::vector<RateCell>;

ObservedRates naive_rates(const PopulationRecord& record);
std::vector<std::optional<double>> log_rates(const ObservedRates& rates);

}  // namespace mortsmooth
