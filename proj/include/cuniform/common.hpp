#pragma once

#include <cmath>

namespace cuniform {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double deg) { return deg * kPi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
    double r = std::fmod(a + kPi, 2.0 * kPi);
    if (r <= 0.0) r += 2.0 * kPi;
    return r - kPi;
}

// Wraps an angle to [0, 2*pi).
inline double wrap_angle_2pi(double a) {
    double r = std::fmod(a, 2.0 * kPi);
    if (r < 0.0) r += 2.0 * kPi;
    return r;
}

}  // namespace cuniform
