#pragma once

// independent test oracles; nothing here may call into the implementation
// paths under test

#include <cmath>
#include <cstdint>
#include <vector>

namespace gsrd::testing {

// composite Simpson integration of the N(mu, sigma) pdf over [lo, hi] in long
// double; the integration range is clipped to mu +- 14 sigma
inline long double simpson_normal_mass(long double mu, long double sigma, long double lo,
                                       long double hi, int intervals = 8192) {
    const long double clip_lo = mu - 14.0L * sigma;
    const long double clip_hi = mu + 14.0L * sigma;
    lo = std::max(lo, clip_lo);
    hi = std::min(hi, clip_hi);
    if (hi <= lo) return 0.0L;
    if (intervals % 2) ++intervals;
    const long double h = (hi - lo) / intervals;
    const long double inv_norm = 1.0L / (sigma * std::sqrt(2.0L * 3.14159265358979323846264338327950288L));
    auto pdf = [&](long double x) {
        long double z = (x - mu) / sigma;
        return inv_norm * std::exp(-0.5L * z * z);
    };
    long double s = pdf(lo) + pdf(hi);
    for (int i = 1; i < intervals; ++i) s += pdf(lo + h * i) * (i % 2 ? 4.0L : 2.0L);
    return s * h / 3.0L;
}

// nearest half-precision neighbour by searching the full table of finite f16
// values (independent of any bit-twiddling conversion under test)
class HalfTableOracle {
public:
    HalfTableOracle() {
        for (int bits = 0; bits < 0x7C00; ++bits) {  // positive finite halfs
            values_.push_back(decode(uint16_t(bits)));
        }
    }

    // round-to-nearest-even reference
    double nearest(double x) const {
        double ax = std::abs(x);
        // binary search over sorted positive half values
        size_t lo = 0, hi = values_.size() - 1;
        if (ax >= values_.back()) return std::copysign(values_.back(), x);
        while (hi - lo > 1) {
            size_t mid = (lo + hi) / 2;
            if (values_[mid] <= ax)
                lo = mid;
            else
                hi = mid;
        }
        double dl = ax - values_[lo], dh = values_[hi] - ax;
        double pick;
        if (dl < dh)
            pick = values_[lo];
        else if (dh < dl)
            pick = values_[hi];
        else  // tie: even mantissa wins; consecutive halfs alternate parity
            pick = (lo % 2 == 0) ? values_[lo] : values_[hi];
        return std::copysign(pick, x);
    }

private:
    static double decode(uint16_t h) {
        int exp = (h >> 10) & 0x1F;
        int mant = h & 0x3FF;
        if (exp == 0) return std::ldexp(double(mant), -24);
        return std::ldexp(double(mant + 1024), exp - 25);
    }
    std::vector<double> values_;
};

}  // namespace gsrd::testing
