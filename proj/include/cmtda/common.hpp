#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace cmtda {

// Thrown when an input's dimensions don't match what an operation expects.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File absent where one is required.
struct FileMissingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Unreadable, truncated, or wrong-version container file.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A stored architecture descriptor disagrees with the expected one.
struct DescriptorMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration or arguments.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic pseudo-random stream. Wraps splitmix64 state directly so the
// draw sequence does not depend on the standard library's distribution
// implementations. Substreams are derived by hashing (seed, tag) pairs, which
// keeps independent concerns (batch sampling, crops, replay, init) on
// independent streams.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

    static Rng derive(std::uint64_t seed, std::uint64_t tag) {
        return Rng(splitmix64(seed) ^ splitmix64(tag * 0x9e3779b97f4a7c15ULL + 0x3c6ef372fe94f82bULL));
    }

    Rng child(std::uint64_t tag) { return derive(next_u64(), tag); }

    std::uint64_t next_u64() {
        state_ = state_ * 6364136223846793005ULL + 1442695040888963407ULL;
        return splitmix64(state_);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        if (hi <= lo) return lo;
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    // Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// FNV-1a over arbitrary bytes; used for config hashes and parameter digests.
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace cmtda
