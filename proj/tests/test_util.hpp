#pragma once

#include <algorithm>
#include <vector>

#include <pfplan/pfplan.hpp>

namespace pfplan::testing {

inline double rel_err(const Vec& a, const Vec& b) {
    const double scale = std::max({1.0, a.norm(), b.norm()});
    return (a - b).norm() / scale;
}

inline double rel_err(double a, double b) {
    return rel_err(Vec::Constant(1, a), Vec::Constant(1, b));
}

inline Vec scalar(double v) { return Vec::Constant(1, v); }

inline double uniform_in(RngStream& rng, double lo, double hi) {
    return lo + (hi - lo) * rng.uniform();
}

inline NoiseDistribution coin_pm1() {
    return NoiseDistribution::finite_support({scalar(-1.0), scalar(1.0)}, {0.5, 0.5}, 1.0, 1.0);
}

inline NoiseDistribution coin01() {
    return NoiseDistribution::finite_support({scalar(0.0), scalar(1.0)}, {0.5, 0.5}, 1.0, 4.0);
}

inline NoiseDistribution unit_gaussian() {
    return NoiseDistribution::diagonal_gaussian(scalar(0.0), scalar(1.0), 1.0);
}

inline NoiseDistribution point_mass_zero() { return NoiseDistribution::dirac(scalar(0.0)); }

// Scalar system with +/-1 coin transition noise and unit Gaussian
// observations; enumeration-exact.
inline SystemSpec random_two_atom_system(RngStream& rng, int horizon) {
    return SystemSpec::time_invariant(Mat::Constant(1, 1, uniform_in(rng, 0.3, 1.0)),
                                      Mat::Constant(1, 1, uniform_in(rng, 0.2, 1.0)),
                                      Mat::Identity(1, 1), coin_pm1(), unit_gaussian(),
                                      scalar(uniform_in(rng, -1.0, 1.0)), horizon);
}

inline SystemSpec scalar_gaussian_system(double a, double b, double c, double q, double r,
                                         double x0, int horizon) {
    return SystemSpec::time_invariant(
        Mat::Constant(1, 1, a), Mat::Constant(1, 1, b), Mat::Constant(1, 1, c),
        NoiseDistribution::diagonal_gaussian(scalar(0.0), scalar(q), 1.0 / q),
        NoiseDistribution::diagonal_gaussian(scalar(0.0), scalar(r)), scalar(x0), horizon);
}

inline SystemSpec zero_noise_system(double a, double b, double c, double x0, int horizon) {
    return SystemSpec::time_invariant(Mat::Constant(1, 1, a), Mat::Constant(1, 1, b),
                                      Mat::Constant(1, 1, c), point_mass_zero(),
                                      point_mass_zero(), scalar(x0), horizon);
}

inline Policy random_scalar_policy(RngStream& rng) {
    return Policy::linear(Mat::Constant(1, 1, uniform_in(rng, -0.8, -0.1)));
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace pfplan::testing
