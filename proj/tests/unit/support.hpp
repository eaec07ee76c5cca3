#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "qlab/circuit.hpp"

namespace qlab::test {

inline std::vector<double> random_state(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, 1.0);
    std::vector<double> x(n);
    for (auto& v : x) v = scale * d(rng);
    return x;
}

inline std::vector<double> rhs(const CircuitSpec& spec, const std::vector<double>& x) {
    std::vector<double> dx(x.size());
    spec.evaluate(x, dx);
    return dx;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline double max_abs(const std::vector<double>& a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::fabs(v));
    return m;
}

}  // namespace qlab::test
