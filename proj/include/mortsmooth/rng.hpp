#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace mortsmooth {

/// Mixes a base seed with keys (chain index, population hash, ...) into an
/// independent-looking substream seed. SplitMix64 finalizer.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

/// FNV-1a; stable across platforms, unlike std::hash.
std::uint64_t stable_hash(std::string_view text);

/// Random source with platform-independent variate generation.
///
/// The engine (mt19937_64) has a fully specified output sequence; the
/// distributions below are implemented here rather than taken from <random>
/// because the standard library leaves their algorithms unspecified, and the
/// toolkit promises identical draws for identical seeds on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on the open interval (0, 1).
    double uniform();
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    /// Gamma with the given shape and rate (mean shape / rate).
    double gamma(double shape, double rate);
    /// Inversion below mean 10, transformed rejection (PTRS) above.
    std::int64_t poisson(double mean);

private:
    std::mt19937_64 engine_;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace mortsmooth
