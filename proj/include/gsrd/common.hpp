#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gsrd {

using Vec = std::vector<double>;

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double sigmoid_deriv(double x) {
    double s = sigmoid(x);
    return s * (1.0 - s);
}

// log(1+exp(x)), overflow safe
inline double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// inverse of softplus for y > 0
inline double softplus_inv(double y) {
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

// Deterministic RNG wrapper. mt19937_64 is fully specified by the standard and
// the value transforms below are fixed, so streams are reproducible across
// platforms (std::uniform_real_distribution is not, which is why we avoid it).
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    int uniform_int(int n) { return int(gen_() % uint64_t(n)); }

    // Marsaglia polar method, fixed consumption order
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    // derive an independent stream
    Rng fork(uint64_t salt) { return Rng(gen_() ^ (salt * 0x9e3779b97f4a7c15ull)); }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace gsrd
