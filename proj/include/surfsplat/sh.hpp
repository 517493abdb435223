// SPDX-License-Identifier: Apache-2.0

/// \file sh.hpp
/// \brief Real spherical-harmonic color evaluation up to degree 3.

#pragma once

#include "surfsplat/core.hpp"

#include <algorithm>
#include <array>
#include <span>

namespace surfsplat::sh {

inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kC2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                              -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kC3 = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                              0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                              -0.5900435899266435};

/// Degree-0 coefficient that evaluates to `rgb` after the +0.5 offset.
inline std::array<double, 3> rgb_to_dc(const std::array<double, 3> &rgb) {
    return {(rgb[0] - 0.5) / kC0, (rgb[1] - 0.5) / kC0, (rgb[2] - 0.5) / kC0};
}

inline std::array<double, 3> dc_to_rgb(const std::array<double, 3> &dc) {
    return {kC0 * dc[0] + 0.5, kC0 * dc[1] + 0.5, kC0 * dc[2] + 0.5};
}

/// Evaluates coefficient triples (coefficient-major) along unit direction `dir`.
/// The result is offset by 0.5 and clamped below at zero.
template <typename T>
std::array<double, 3> evaluate(int degree, std::span<const T> coeffs, const Vec3 &dir) {
    auto c = [&](int k, int ch) { return static_cast<double>(coeffs[3 * k + ch]); };
    std::array<double, 3> out{};
    const double x = dir.x(), y = dir.y(), z = dir.z();
    const double xx = x * x, yy = y * y, zz = z * z;
    const double xy = x * y, yz = y * z, xz = x * z;
    for (int ch = 0; ch < 3; ++ch) {
        double r = kC0 * c(0, ch);
        if (degree > 0) {
            r += -kC1 * y * c(1, ch) + kC1 * z * c(2, ch) - kC1 * x * c(3, ch);
            if (degree > 1) {
                r += kC2[0] * xy * c(4, ch) + kC2[1] * yz * c(5, ch) + kC2[2] * (2.0 * zz - xx - yy) * c(6, ch) +
                     kC2[3] * xz * c(7, ch) + kC2[4] * (xx - yy) * c(8, ch);
                if (degree > 2) {
                    r += kC3[0] * y * (3.0 * xx - yy) * c(9, ch) + kC3[1] * xy * z * c(10, ch) +
                         kC3[2] * y * (4.0 * zz - xx - yy) * c(11, ch) +
                         kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * c(12, ch) +
                         kC3[4] * x * (4.0 * zz - xx - yy) * c(13, ch) + kC3[5] * z * (xx - yy) * c(14, ch) +
                         kC3[6] * x * (xx - 3.0 * yy) * c(15, ch);
                }
            }
        }
        out[ch] = std::max(r + 0.5, 0.0);
    }
    return out;
}

inline std::array<double, 3> evaluate(const Surfel &s, const Vec3 &dir) {
    return evaluate<float>(s.sh_degree, std::span<const float>(s.sh), dir);
}

}  // namespace surfsplat::sh
