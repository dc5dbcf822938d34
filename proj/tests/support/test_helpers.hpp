#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "mortsmooth/core.hpp"

namespace testing {

inline std::filesystem::path data_dir() { return MORTSMOOTH_DATA_DIR; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("mortsmooth_test_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

/// Record with constant exposure and the given deaths per age.
inline mortsmooth::PopulationRecord make_record(std::string id, mortsmooth::Sex sex, std::vector<std::int64_t> deaths,
                                                double exposure) {
    mortsmooth::PopulationRecord r;
    r.id = std::move(id);
    r.sex = sex;
    r.exposures.assign(deaths.size(), exposure);
    r.deaths = std::move(deaths);
    return r;
}

}  // namespace testing
