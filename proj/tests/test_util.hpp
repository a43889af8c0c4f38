#pragma once

#include <cmath>
#include <functional>

#include "gsrd/common.hpp"

namespace gsrd::testing {

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// central finite difference of a scalar function of one coordinate
inline double central_diff(const std::function<double()>& loss, double& coord,
                           double h = 1e-4) {
    double save = coord;
    coord = save + h;
    double fp = loss();
    coord = save - h;
    double fm = loss();
    coord = save;
    return (fp - fm) / (2.0 * h);
}

}  // namespace gsrd::testing
