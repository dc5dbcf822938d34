#include "mortsmooth/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "mortsmooth/errors.hpp"

namespace mortsmooth {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

class CsvReader {
public:
    CsvReader(const std::filesystem::path& path, std::vector<std::string_view> header)
        : path_(path.string()), in_(path), width_(header.size()) {
        if (!in_) throw Error(fmt::format("cannot open '{}'", path_));
        if (!next()) fail(fmt::format("empty file; expected header '{}'", fmt::join(header, ",")));
        for (std::size_t k = 0; k < width_; ++k) {
            if (fields_[k] != header[k]) {
                fail(fmt::format("expected header '{}'", fmt::join(header, ",")));
            }
        }
    }

    /// Advances to the next non-blank line; false at end of file.
    bool next() {
        while (std::getline(in_, buffer_)) {
            ++line_;
            const std::string_view row = trim(buffer_);
            if (row.empty()) continue;
            fields_.clear();
            std::size_t start = 0;
            for (;;) {
                const auto comma = row.find(',', start);
                fields_.push_back(trim(row.substr(start, comma == std::string_view::npos ? row.npos : comma - start)));
                if (comma == std::string_view::npos) break;
                start = comma + 1;
            }
            if (fields_.size() != width_) {
                fail(fmt::format("expected {} fields, found {}", width_, fields_.size()));
            }
            return true;
        }
        return false;
    }

    std::size_t line() const noexcept { return line_; }
    const std::string& path() const noexcept { return path_; }
    std::string_view field(std::size_t k) const { return fields_[k]; }

    [[noreturn]] void fail(const std::string& what) const { throw SchemaError(path_, line_, what); }
    [[noreturn]] void invalid(const std::string& what) const { throw ValidationError(path_, line_, what); }

    double real(std::size_t k, std::string_view name) const {
        const auto text = fields_[k];
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (text.empty() || ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value)) {
            fail(fmt::format("{} '{}' is not a finite number", name, text));
        }
        return value;
    }

    std::int64_t integer(std::size_t k, std::string_view name) const {
        const auto text = fields_[k];
        std::int64_t value = 0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
        if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
            double as_real = 0.0;
            const auto r = std::from_chars(text.data(), text.data() + text.size(), as_real);
            if (!text.empty() && r.ec == std::errc() && r.ptr == text.data() + text.size()) {
                invalid(fmt::format("{} '{}' is not an integer", name, text));
            }
            fail(fmt::format("{} '{}' is not an integer", name, text));
        }
        return value;
    }

    Sex sex(std::size_t k) const {
        try {
            return parse_sex(fields_[k]);
        } catch (const InvalidArgument& e) {
            fail(e.what());
        }
    }

private:
    std::string path_;
    std::ifstream in_;
    std::size_t width_;
    std::string buffer_;
    std::vector<std::string_view> fields_;
    std::size_t line_ = 0;
};

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw Error(fmt::format("error writing '{}'", path.string()));
}

std::string csv_safe(std::string_view text) {
    std::string s(text);
    for (auto& c : s) {
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    }
    return s;
}

}  // namespace

bool StandardTable::has(Sex sex) const {
    return schedules_.contains(sex) ||
           (sex == Sex::both && schedules_.contains(Sex::female) && schedules_.contains(Sex::male));
}

StandardSchedule StandardTable::select(Sex sex) const {
    if (auto it = schedules_.find(sex); it != schedules_.end()) return it->second;
    if (sex == Sex::both && schedules_.contains(Sex::female) && schedules_.contains(Sex::male)) {
        StandardSchedule both;
        both.sex = Sex::both;
        both.log_rates = 0.5 * (schedules_.at(Sex::female).log_rates + schedules_.at(Sex::male).log_rates);
        both.label = schedules_.at(Sex::female).label;
        return both;
    }
    throw InvalidArgument(fmt::format("standard has no '{}' schedule", to_string(sex)));
}

StandardTable read_standard(const std::filesystem::path& path, const AgeGrid& grid) {
    CsvReader csv(path, {"age", "sex", "log_rate"});
    struct Partial {
        std::vector<double> values;
        std::vector<std::size_t> lines;  // 0 where the age is missing
    };
    std::map<Sex, Partial> partial;
    std::size_t last_line = csv.line();
    while (csv.next()) {
        last_line = csv.line();
        const auto age = csv.integer(0, "age");
        const Sex sex = csv.sex(1);
        const double value = csv.real(2, "log_rate");
        if (age < 0) csv.fail(fmt::format("negative age {}", age));
        if (age >= grid.size()) continue;
        auto& p = partial[sex];
        if (p.values.empty()) {
            p.values.assign(static_cast<std::size_t>(grid.size()), 0.0);
            p.lines.assign(static_cast<std::size_t>(grid.size()), 0);
        }
        const auto a = static_cast<std::size_t>(age);
        if (p.lines[a] != 0) {
            csv.fail(fmt::format("duplicate row for age {} sex {} (first at line {})", age, to_string(sex), p.lines[a]));
        }
        p.values[a] = value;
        p.lines[a] = csv.line();
    }
    if (partial.empty()) throw SchemaError(csv.path(), last_line, "no standard rows");

    std::map<Sex, StandardSchedule> schedules;
    for (auto& [sex, p] : partial) {
        for (std::size_t a = 0; a < p.lines.size(); ++a) {
            if (p.lines[a] != 0) continue;
            // Point at the first row after the gap, or the end of the file.
            std::size_t where = last_line;
            for (std::size_t b = a + 1; b < p.lines.size(); ++b) {
                if (p.lines[b] != 0) {
                    where = p.lines[b];
                    break;
                }
            }
            throw SchemaError(csv.path(), where, fmt::format("sex {}: missing age {}", to_string(sex), a));
        }
        StandardSchedule s;
        s.sex = sex;
        s.label = path.stem().string();
        s.log_rates = Eigen::Map<const Eigen::VectorXd>(p.values.data(), static_cast<Eigen::Index>(p.values.size()));
        schedules.emplace(sex, std::move(s));
    }
    return StandardTable(std::move(schedules));
}

StandardSchedule read_standard(const std::filesystem::path& path, Sex sex, const AgeGrid& grid) {
    return read_standard(path, grid).select(sex);
}

void write_standard(const StandardTable& table, const std::filesystem::path& path) {
    auto out = open_output(path);
    out << "age,sex,log_rate\n";
    for (const auto& [sex, schedule] : table.schedules()) {
        for (Eigen::Index x = 0; x < schedule.log_rates.size(); ++x) {
            out << fmt::format("{},{},{}\n", x, to_string(sex), schedule.log_rates(x));
        }
    }
    finish(out, path);
}

MortalityDataset read_dataset(const std::filesystem::path& path, std::optional<Sex> sex_filter, const AgeGrid& grid) {
    CsvReader csv(path, {"area_id", "sex", "age", "deaths", "exposure"});
    struct Partial {
        PopulationRecord record;
        std::vector<std::size_t> lines;
        std::size_t first_line;
    };
    std::vector<Partial> partial;
    std::map<std::pair<std::string, Sex>, std::size_t> index;
    const auto a_size = static_cast<std::size_t>(grid.size());

    while (csv.next()) {
        const std::string area(csv.field(0));
        if (area.empty()) csv.fail("empty area_id");
        const Sex sex = csv.sex(1);
        const auto age = csv.integer(2, "age");
        const auto deaths = csv.integer(3, "deaths");
        const double exposure = csv.real(4, "exposure");
        if (age < 0 || age >= grid.size()) csv.fail(fmt::format("age {} outside 0..{}", age, grid.max_age()));
        if (deaths < 0) csv.invalid(fmt::format("negative deaths {}", deaths));
        if (exposure < 0.0) csv.invalid(fmt::format("negative exposure {}", exposure));
        if (deaths > 0 && exposure == 0.0) csv.invalid(fmt::format("{} deaths with zero exposure", deaths));

        auto [it, inserted] = index.try_emplace({area, sex}, partial.size());
        if (inserted) {
            Partial p;
            p.record.id = area;
            p.record.sex = sex;
            p.record.deaths.assign(a_size, 0);
            p.record.exposures.assign(a_size, 0.0);
            p.lines.assign(a_size, 0);
            p.first_line = csv.line();
            partial.push_back(std::move(p));
        }
        auto& p = partial[it->second];
        const auto a = static_cast<std::size_t>(age);
        if (p.lines[a] != 0) {
            csv.fail(fmt::format("duplicate row for area {} sex {} age {} (first at line {})", area, to_string(sex),
                                 age, p.lines[a]));
        }
        p.lines[a] = csv.line();
        p.record.deaths[a] = deaths;
        p.record.exposures[a] = exposure;
    }

    std::vector<PopulationRecord> records;
    for (auto& p : partial) {
        for (std::size_t a = 0; a < a_size; ++a) {
            if (p.lines[a] == 0) {
                throw SchemaError(csv.path(), p.first_line,
                                  fmt::format("area {} sex {}: missing row for age {} (zero deaths must be explicit)",
                                              p.record.id, to_string(p.record.sex), a));
            }
        }
        if (!sex_filter || p.record.sex == *sex_filter) records.push_back(std::move(p.record));
    }
    return MortalityDataset(grid, std::move(records));
}

void write_dataset(const MortalityDataset& dataset, const std::filesystem::path& path) {
    auto out = open_output(path);
    out << "area_id,sex,age,deaths,exposure\n";
    for (const auto& rec : dataset.populations()) {
        for (std::size_t x = 0; x < rec.deaths.size(); ++x) {
            out << fmt::format("{},{},{},{},{}\n", rec.id, to_string(rec.sex), x, rec.deaths[x], rec.exposures[x]);
        }
    }
    finish(out, path);
}

void write_fit(const std::vector<FitResult>& fits, const std::filesystem::path& path) {
    auto out = open_output(path);
    out << "area_id,sex,age,log_rate_hat,lower,upper,model\n";
    for (const auto& fit : fits) {
        const bool interval = fit.has_interval();
        for (Eigen::Index x = 0; x < fit.log_rate_hat.size(); ++x) {
            if (interval) {
                out << fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{}\n", fit.area_id, to_string(fit.sex), x,
                                   fit.log_rate_hat(x), (*fit.lower)(x), (*fit.upper)(x), fit.model);
            } else {
                out << fmt::format("{},{},{},{:.6f},,,{}\n", fit.area_id, to_string(fit.sex), x, fit.log_rate_hat(x),
                                   fit.model);
            }
        }
    }
    finish(out, path);
}

std::vector<FitResult> read_fit(const std::filesystem::path& path) {
    CsvReader csv(path, {"area_id", "sex", "age", "log_rate_hat", "lower", "upper", "model"});
    std::vector<FitResult> fits;
    std::vector<double> hat, lo, hi;
    bool interval = false;

    auto flush = [&] {
        if (fits.empty()) return;
        auto& f = fits.back();
        f.log_rate_hat = Eigen::Map<Eigen::VectorXd>(hat.data(), static_cast<Eigen::Index>(hat.size()));
        if (interval) {
            f.lower = Eigen::Map<Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()));
            f.upper = Eigen::Map<Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()));
        }
        hat.clear();
        lo.clear();
        hi.clear();
    };

    while (csv.next()) {
        const std::string area(csv.field(0));
        const Sex sex = csv.sex(1);
        const auto age = csv.integer(2, "age");
        const std::string model(csv.field(6));
        const bool starts = fits.empty() || fits.back().area_id != area || fits.back().sex != sex ||
                            fits.back().model != model;
        if (starts) {
            flush();
            if (age != 0) csv.fail(fmt::format("fit for area {} starts at age {}, expected 0", area, age));
            FitResult f;
            f.area_id = area;
            f.sex = sex;
            f.model = model;
            fits.push_back(std::move(f));
            interval = !csv.field(4).empty() || !csv.field(5).empty();
        } else if (age != static_cast<std::int64_t>(hat.size())) {
            csv.fail(fmt::format("expected age {}, found {}", hat.size(), age));
        }
        hat.push_back(csv.real(3, "log_rate_hat"));
        const bool has_interval = !csv.field(4).empty() || !csv.field(5).empty();
        if (has_interval != interval) csv.fail("interval columns must be filled for all ages of a fit or none");
        if (interval) {
            lo.push_back(csv.real(4, "lower"));
            hi.push_back(csv.real(5, "upper"));
        }
    }
    flush();
    return fits;
}

ReferenceSchedule read_reference(const std::filesystem::path& path) {
    CsvReader csv(path, {"age", "population_share", "rate"});
    std::vector<double> share, rate;
    while (csv.next()) {
        const auto age = csv.integer(0, "age");
        if (age != static_cast<std::int64_t>(share.size())) {
            csv.fail(fmt::format("expected age {}, found {}", share.size(), age));
        }
        const double s = csv.real(1, "population_share");
        const double r = csv.real(2, "rate");
        if (s < 0.0) csv.invalid(fmt::format("negative population share {}", s));
        if (!(r > 0.0)) csv.invalid(fmt::format("rate must be positive, got {}", r));
        share.push_back(s);
        rate.push_back(r);
    }
    if (share.size() < 2) throw SchemaError(csv.path(), csv.line(), "reference needs at least two ages");
    ReferenceSchedule ref;
    ref.label = path.stem().string();
    ref.age_structure = Eigen::Map<Eigen::VectorXd>(share.data(), static_cast<Eigen::Index>(share.size()));
    ref.true_rates = Eigen::Map<Eigen::VectorXd>(rate.data(), static_cast<Eigen::Index>(rate.size()));
    if (std::fabs(ref.age_structure.sum() - 1.0) > 1e-9) {
        throw ValidationError(csv.path(), csv.line(),
                              fmt::format("population shares sum to {:.12f}, not 1", ref.age_structure.sum()));
    }
    return ref;
}

void write_reference(const ReferenceSchedule& reference, const std::filesystem::path& path) {
    auto out = open_output(path);
    out << "age,population_share,rate\n";
    for (Eigen::Index x = 0; x < reference.true_rates.size(); ++x) {
        out << fmt::format("{},{},{}\n", x, reference.age_structure(x), reference.true_rates(x));
    }
    finish(out, path);
}

void write_metrics(const std::vector<BenchmarkRow>& rows, const std::filesystem::path& path, bool include_timing) {
    auto out = open_output(path);
    out << "size,seed,model,status,rbias,rmse,mape,n_ages,zero_death_ages";
    out << (include_timing ? ",seconds\n" : "\n");
    for (const auto& row : rows) {
        out << fmt::format("{},{},{},", row.size, row.seed, to_string(row.model));
        if (row.metrics) {
            const auto& m = *row.metrics;
            out << fmt::format("ok,{:.6f},{:.6f},{:.6f},{},{}", m.rbias, m.rmse, m.mape, m.n_ages_used,
                               row.zero_death_ages);
        } else {
            out << fmt::format("error: {},,,,,{}", csv_safe(row.status), row.zero_death_ages);
        }
        out << (include_timing ? fmt::format(",{:.3f}\n", row.seconds) : std::string("\n"));
    }
    finish(out, path);
}

std::vector<std::uint64_t> read_seeds(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
    std::vector<std::uint64_t> seeds;
    std::string buffer;
    std::size_t line = 0;
    while (std::getline(in, buffer)) {
        ++line;
        std::string_view text = buffer;
        if (auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
        text = trim(text);
        if (text.empty()) continue;
        std::uint64_t seed = 0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
        if (ec != std::errc() || ptr != text.data() + text.size()) {
            throw SchemaError(path.string(), line, fmt::format("seed '{}' is not an unsigned integer", text));
        }
        seeds.push_back(seed);
    }
    if (seeds.empty()) throw SchemaError(path.string(), line, "no seeds");
    return seeds;
}

}  // namespace mortsmooth
