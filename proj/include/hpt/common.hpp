#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hpt {

using Vec = std::vector<double>;

// Dense row-major matrix. Small enough at desk scale that we keep it dumb.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
    double* row(std::size_t r) { return a.data() + r * cols; }
    const double* row(std::size_t r) const { return a.data() + r * cols; }
    std::size_t size() const { return a.size(); }

    bool operator==(const Mat&) const = default;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a64_bytes(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Every stream of randomness in the artifact is keyed off one root seed plus a
// fixed label (and optionally an index), so runs are reproducible end to end.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view label, std::uint64_t index = 0) {
    return splitmix64(splitmix64(base ^ fnv1a64(label)) ^ index);
}

// Sub-seed labels used across the project.
namespace seed_label {
inline constexpr const char* encoder_visual = "enc.visual";
inline constexpr const char* encoder_text = "enc.text";
inline constexpr const char* encoder_aux = "enc.aux";
inline constexpr const char* context = "train.ctx";
inline constexpr const char* remote_net = "train.remote";
inline constexpr const char* visual_net = "train.visualnet";
inline constexpr const char* sampler = "train.sample";
inline constexpr const char* shuffle = "train.shuffle";
inline constexpr const char* synth_background = "synth.bg";
inline constexpr const char* synth_jitter = "synth.jitter";
}  // namespace seed_label

// Deterministic RNG: mt19937_64 (bit-portable per the standard) plus a
// hand-rolled Box-Muller so normal draws do not depend on libstdc++ internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double normal(double stddev) {
        if (has_spare_) {
            has_spare_ = false;
            return spare_ * stddev;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta) * stddev;
    }

    // uniform integer in [0, n)
    std::uint64_t bounded(std::uint64_t n) { return gen_() % n; }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline void fill_normal(Vec& v, Rng& rng, double stddev) {
    for (double& x : v) x = rng.normal(stddev);
}

inline void fill_normal(Mat& m, Rng& rng, double stddev) {
    for (double& x : m.a) x = rng.normal(stddev);
}

// Deterministic Fisher-Yates; std::shuffle is implementation-defined.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = rng.bounded(i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace hpt
