#include "mortsmooth/core.hpp"

#include <cmath>
#include <set>

#include <fmt/format.h>

#include "mortsmooth/errors.hpp"

namespace mortsmooth {

std::string_view to_string(Sex sex) {
    switch (sex) {
        case Sex::female: return "female";
        case Sex::male: return "male";
        case Sex::both: return "both";
    }
    return "both";
}

Sex parse_sex(std::string_view text) {
    if (text == "female") return Sex::female;
    if (text == "male") return Sex::male;
    if (text == "both") return Sex::both;
    throw InvalidArgument(fmt::format("unknown sex '{}' (expected female, male or both)", text));
}

AgeGrid::AgeGrid(int size) : size_(size) {
    if (size < 2) throw InvalidArgument(fmt::format("age grid needs at least 2 ages, got {}", size));
}

std::vector<int> AgeGrid::ages() const {
    std::vector<int> out(static_cast<std::size_t>(size_));
    for (int x = 0; x < size_; ++x) out[static_cast<std::size_t>(x)] = x;
    return out;
}

Eigen::VectorXd PopulationRecord::deaths_vector() const {
    Eigen::VectorXd y(size());
    for (int x = 0; x < size(); ++x) y(x) = static_cast<double>(deaths[static_cast<std::size_t>(x)]);
    return y;
}

Eigen::VectorXd PopulationRecord::exposure_vector() const {
    return Eigen::Map<const Eigen::VectorXd>(exposures.data(), static_cast<Eigen::Index>(exposures.size()));
}

void PopulationRecord::validate(const AgeGrid& grid) const {
    const auto n = static_cast<std::size_t>(grid.size());
    if (deaths.size() != n || exposures.size() != n) {
        throw InvalidArgument(fmt::format("population '{}': expected {} ages, got {} deaths and {} exposures",
                                          id, n, deaths.size(), exposures.size()));
    }
    for (std::size_t x = 0; x < n; ++x) {
        if (deaths[x] < 0) throw InvalidArgument(fmt::format("population '{}', age {}: negative deaths", id, x));
        if (!std::isfinite(exposures[x]) || exposures[x] < 0.0) {
            throw InvalidArgument(fmt::format("population '{}', age {}: exposure must be finite and >= 0", id, x));
        }
        if (exposures[x] == 0.0 && deaths[x] > 0) {
            throw InvalidArgument(fmt::format("population '{}', age {}: {} deaths with zero exposure", id, x, deaths[x]));
        }
    }
}

MortalityDataset::MortalityDataset(AgeGrid grid, std::vector<PopulationRecord> populations)
    : grid_(grid), populations_(std::move(populations)) {
    std::set<std::string> seen;
    for (const auto& p : populations_) {
        p.validate(grid_);
        std::string key = p.id + "\x1f" + std::string(to_string(p.sex));
        if (!seen.insert(key).second) {
            throw InvalidArgument(fmt::format("duplicate population '{}' ({})", p.id, to_string(p.sex)));
        }
    }
}

void StandardSchedule::validate(const AgeGrid& grid) const {
    if (size() != grid.size()) {
        throw InvalidArgument(fmt::format("standard '{}' has {} ages, grid has {}", label, size(), grid.size()));
    }
    if (!log_rates.allFinite()) throw InvalidArgument(fmt::format("standard '{}' has non-finite entries", label));
}

ObservedRates naive_rates(const PopulationRecord& record) {
    ObservedRates out;
    out.reserve(record.deaths.size());
    for (std::size_t x = 0; x < record.deaths.size(); ++x) {
        const double e = record.exposures[x];
        const auto y = record.deaths[x];
        if (e == 0.0) {
            out.push_back(RateCell::no_exposure());
        } else if (y == 0) {
            out.push_back(RateCell::zero_deaths());
        } else {
            out.push_back(RateCell::rate(static_cast<double>(y) / e));
        }
    }
    return out;
}

std::vector<std::optional<double>> log_rates(const ObservedRates& rates) {
    std::vector<std::optional<double>> out;
    out.reserve(rates.size());
    for (const auto& cell : rates) {
        if (cell.has_rate()) {
            out.emplace_back(std::log(cell.value));
        } else {
            out.emplace_back(std::nullopt);
        }
    }
    return out;
}

}  // namespace mortsmooth
