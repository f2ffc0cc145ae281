#pragma once

#include <cmath>
#include <limits>

namespace pfplan {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Neumaier compensated accumulator. Used for every order-fixed reduction so
// that serial and sweep-parallel runs produce identical bits.
class CompensatedSum {
  public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }

    double value() const noexcept { return sum_ + comp_; }

  private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace pfplan
