// SPDX-License-Identifier: Apache-2.0

/// \file lift.hpp
/// \brief Depth map to oriented surfel scene via the surface continuity prior.
///
/// Every valid pixel becomes one surfel. Its orientation comes from two
/// virtual neighbors obtained with rightward/downward Sobel filters over the
/// 3x3 position neighborhood; its tangent scales come from the same tangent
/// vectors, times clamped per-pixel multipliers.

#pragma once

#include "surfsplat/core.hpp"
#include "surfsplat/sh.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

namespace surfsplat::lift {

inline constexpr double kDegenerateEpsilon = 1e-12;  // on |t1 x t2|^2
inline constexpr double kScaleFloor = 1e-8;
inline constexpr double kMultiplierMin = 1.0 / 3.0;
inline constexpr double kMultiplierMax = 3.0;
inline constexpr double kAntiparallelTolerance = 1e-6;

struct PositionMap {
    int width = 0;
    int height = 0;
    std::vector<Vec3> points;
    std::vector<std::uint8_t> valid;

    PositionMap() = default;
    PositionMap(int w, int h)
        : width(w), height(h), points(static_cast<std::size_t>(w) * h, Vec3::Zero()),
          valid(static_cast<std::size_t>(w) * h, 0) {}

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    const Vec3 &at(int x, int y) const { return points[index(x, y)]; }
    bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
};

namespace detail {

inline PositionMap unproject_in_frame(const DepthMap &depth, const Camera &camera, bool world) {
    validate(depth);
    if (depth.width != camera.width() || depth.height != camera.height()) {
        fail_validation("depth map and camera resolutions differ");
    }
    PositionMap out(depth.width, depth.height);
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            if (!depth.is_valid(x, y)) continue;
            const double d = depth.at(x, y);
            const Vec3 cam = camera.camera_direction(x + 0.5, y + 0.5) * d;
            const auto i = out.index(x, y);
            out.points[i] = world ? camera.to_world(cam) : cam;
            out.valid[i] = 1;
        }
    }
    return out;
}

}  // namespace detail

/// World-space position of every valid pixel (depth is camera z, not ray length).
inline PositionMap unproject(const DepthMap &depth, const Camera &camera) {
    return detail::unproject_in_frame(depth, camera, true);
}

/// Same as unproject() but in the camera frame.
inline PositionMap unproject_camera_frame(const DepthMap &depth, const Camera &camera) {
    return detail::unproject_in_frame(depth, camera, false);
}

/// Virtual neighbors p1 = p0 + Sobel_x/8, p2 = p0 + Sobel_y/8.
///
/// Borders replicate the edge pixel. A pixel whose (clamped) 3x3 window
/// touches a masked pixel is left invalid in both outputs.
struct VirtualNeighbors {
    PositionMap p1;
    PositionMap p2;
};

inline VirtualNeighbors sobel_virtual_neighbors(const PositionMap &positions) {
    const int w = positions.width, h = positions.height;
    if (w < 3 || h < 3) fail_validation("Sobel filtering needs at least a 3x3 grid");
    VirtualNeighbors out{PositionMap(w, h), PositionMap(w, h)};
    auto cx = [w](int x) { return std::clamp(x, 0, w - 1); };
    auto cy = [h](int y) { return std::clamp(y, 0, h - 1); };
    constexpr double kWeights[3] = {1.0, 2.0, 1.0};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool ok = true;
            for (int dy = -1; dy <= 1 && ok; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (!positions.is_valid(cx(x + dx), cy(y + dy))) {
                        ok = false;
                        break;
                    }
                }
            }
            if (!ok) continue;
            Vec3 gx = Vec3::Zero(), gy = Vec3::Zero();
            for (int k = -1; k <= 1; ++k) {
                const double wk = kWeights[k + 1];
                gx += wk * (positions.at(cx(x + 1), cy(y + k)) - positions.at(cx(x - 1), cy(y + k)));
                gy += wk * (positions.at(cx(x + k), cy(y + 1)) - positions.at(cx(x + k), cy(y - 1)));
            }
            const auto i = positions.index(x, y);
            const Vec3 &p0 = positions.points[i];
            out.p1.points[i] = p0 + gx / 8.0;
            out.p2.points[i] = p0 + gy / 8.0;
            out.p1.valid[i] = out.p2.valid[i] = 1;
        }
    }
    return out;
}

/// Unit normal (t1 x t2)/|t1 x t2|, or nullopt when |t1 x t2|^2 < eps.
inline std::optional<Vec3> surface_normal(const Vec3 &t1, const Vec3 &t2, double eps = kDegenerateEpsilon) {
    const Vec3 n = t1.cross(t2);
    const double sq = n.squaredNorm();
    if (!(sq >= eps) || !std::isfinite(sq)) return std::nullopt;
    return n / std::sqrt(sq);
}

inline Mat3 skew(const Vec3 &v) {
    Mat3 k;
    k << 0.0, -v.z(), v.y(),  //
        v.z(), 0.0, -v.x(),   //
        -v.y(), v.x(), 0.0;
    return k;
}

/// Rotation taking (0,0,1) onto unit vector n via Rodrigues' formula.
///
/// Uses (1 - c)/|v|^2 = 1/(1 + c), which stays finite as n approaches +z.
/// For n within 1e-6 of -z the formula is singular and the half turn about
/// x is returned.
inline Mat3 rotation_matrix_from_normal(const Vec3 &normal) {
    const double len = normal.norm();
    if (std::abs(len - 1.0) > 1e-6) fail_validation("normal must be unit length");
    const Vec3 n = normal / len;
    const double c = n.z();
    if (c <= -1.0 + kAntiparallelTolerance) {
        return Eigen::AngleAxisd(M_PI, Vec3::UnitX()).toRotationMatrix();
    }
    const Vec3 v = Vec3::UnitZ().cross(n);
    const Mat3 k = skew(v);
    return Mat3::Identity() + k + (k * k) / (1.0 + c);
}

/// Unit quaternion with w >= 0 (w, x, y, z) for a rotation matrix.
inline Eigen::Quaterniond canonical_quaternion(const Mat3 &r) {
    Eigen::Quaterniond q(r);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    return q;
}

inline Eigen::Quaterniond rotation_from_normal(const Vec3 &n) {
    if (n.z() <= -1.0 + kAntiparallelTolerance && std::abs(n.norm() - 1.0) <= 1e-6) {
        return {0.0, 1.0, 0.0, 0.0};
    }
    return canonical_quaternion(rotation_matrix_from_normal(n));
}

/// Coarse tangent scales from camera-frame tangents:
/// su^2 = t1x^2 + t1z^2, sv^2 = t2y^2 + t2z^2, floored at `floor`.
inline std::pair<double, double> coarse_scales(const Vec3 &t1, const Vec3 &t2, double floor = kScaleFloor) {
    if (!t1.allFinite() || !t2.allFinite()) fail_validation("tangents must be finite");
    const double su = std::sqrt(t1.x() * t1.x() + t1.z() * t1.z());
    const double sv = std::sqrt(t2.y() * t2.y() + t2.z() * t2.z());
    return {std::max(su, floor), std::max(sv, floor)};
}

inline double clamp_multiplier(double raw) { return std::clamp(raw, kMultiplierMin, kMultiplierMax); }

inline std::pair<double, double> apply_multipliers(double coarse_u, double coarse_v, double raw_u, double raw_v) {
    return {coarse_u * clamp_multiplier(raw_u), coarse_v * clamp_multiplier(raw_v)};
}

/// Screen-space covariance J W (R S S^T R^T) W^T J^T of a surfel.
///
/// Diagnostic only; the renderer intersects surfels exactly instead.
inline Eigen::Matrix2d project_covariance(const Surfel &surfel, const Camera &camera) {
    const Vec3 mu = camera.to_camera(surfel.center());
    if (!(mu.z() > 0.0)) fail_validation("surfel center is behind the camera");
    const Mat3 r = surfel.rotation_matrix();
    const Vec3 s2(double(surfel.scale_u) * surfel.scale_u, double(surfel.scale_v) * surfel.scale_v, 0.0);
    const Mat3 sigma = r * s2.asDiagonal() * r.transpose();
    Eigen::Matrix<double, 2, 3> j;
    const double z = mu.z();
    j << camera.fx() / z, 0.0, -camera.fx() * mu.x() / (z * z),  //
        0.0, camera.fy() / z, -camera.fy() * mu.y() / (z * z);
    const Mat3 &w = camera.rotation();
    return j * w * sigma * w.transpose() * j.transpose();
}

struct LiftOptions {
    double degenerate_epsilon = kDegenerateEpsilon;
    double scale_floor = kScaleFloor;
    /// Cap each scale at scale_cap_factor times the 5x5 median coarse scale.
    bool scale_cap = false;
    double scale_cap_factor = 10.0;
    /// Replace oriented surfels with identity-rotation isotropic point surfels.
    bool ablate_point_surfels = false;
    double point_surfel_footprint = 0.3;
};

/// Per-pixel inputs. Optional grids are empty when defaulted.
struct LiftInputs {
    DepthMap depth;
    Camera camera;
    ImageBuffer rgb;
    std::vector<double> multiplier_u;  // raw, default 1
    std::vector<double> multiplier_v;  // raw, default 1
    std::vector<double> opacity;       // default 1
    int sh_degree = 0;
    /// 3 * (sh_coeff_count(sh_degree) - 1) values per pixel, coefficient-major.
    std::vector<double> sh_rest;
};

struct LiftResult {
    SurfelScene scene;
    /// Row-major pixel index of each surfel.
    std::vector<std::size_t> pixel;
    /// Camera-frame normal and coarse scales of each surfel (double precision).
    std::vector<Vec3> normal;
    std::vector<std::pair<double, double>> coarse;
    std::vector<std::uint8_t> degenerate;
    std::size_t degenerate_count = 0;
};

namespace detail {

inline void check_grid(const std::vector<double> &grid, std::size_t n, const char *name) {
    if (!grid.empty() && grid.size() != n) {
        fail_validation(std::string(name) + " grid does not match the depth resolution");
    }
}

inline double median_of(std::vector<double> &v) {
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

}  // namespace detail

inline LiftResult lift(const LiftInputs &in, const LiftOptions &opt = {}) {
    const int w = in.depth.width, h = in.depth.height;
    const auto n = static_cast<std::size_t>(w) * h;
    const Camera &cam = in.camera;
    if (w != cam.width() || h != cam.height()) fail_validation("depth map and camera resolutions differ");
    validate(in.rgb);
    if (in.rgb.width != w || in.rgb.height != h || in.rgb.channels != 3) {
        fail_validation("image must be 3-channel and match the depth resolution");
    }
    detail::check_grid(in.multiplier_u, n, "multiplier_u");
    detail::check_grid(in.multiplier_v, n, "multiplier_v");
    detail::check_grid(in.opacity, n, "opacity");
    if (in.sh_degree < 0 || in.sh_degree > 3) fail_validation("SH degree must be in 0..3");
    const std::size_t rest = 3 * static_cast<std::size_t>(sh_coeff_count(in.sh_degree) - 1);
    if (!in.sh_rest.empty() && in.sh_rest.size() != rest * n) {
        fail_validation("sh_rest grid does not match the depth resolution and SH degree");
    }

    const PositionMap positions = unproject_camera_frame(in.depth, cam);
    const VirtualNeighbors nb = sobel_virtual_neighbors(positions);
    if (std::none_of(nb.p1.valid.begin(), nb.p1.valid.end(), [](auto v) { return v != 0; })) {
        fail_validation("insufficient support: no pixel has a fully valid 3x3 neighborhood");
    }

    const double inv_f = 1.0 / std::sqrt(cam.fx() * cam.fy());
    std::vector<std::pair<double, double>> coarse(n, {0.0, 0.0});
    std::vector<Vec3> normals(n, Vec3::UnitZ());
    std::vector<std::uint8_t> degenerate(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!positions.valid[i]) continue;
        const double d = in.depth.values[i];
        if (!nb.p1.valid[i]) {
            // Window touches the mask: canonical normal, one-pixel footprint.
            degenerate[i] = 1;
            coarse[i] = {std::max(d / cam.fx(), opt.scale_floor), std::max(d / cam.fy(), opt.scale_floor)};
            continue;
        }
        const Vec3 t1 = nb.p1.points[i] - positions.points[i];
        const Vec3 t2 = nb.p2.points[i] - positions.points[i];
        coarse[i] = coarse_scales(t1, t2, opt.scale_floor);
        if (auto nrm = surface_normal(t1, t2, opt.degenerate_epsilon)) {
            normals[i] = *nrm;
        } else {
            degenerate[i] = 1;
        }
    }

    LiftResult res;
    res.scene.surfels.reserve(positions.valid.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto i = positions.index(x, y);
            if (!positions.valid[i]) continue;
            Surfel s;
            const Vec3 world = cam.to_world(positions.points[i]);
            s.position = {float(world.x()), float(world.y()), float(world.z())};

            double su, sv;
            Eigen::Quaterniond q;
            if (opt.ablate_point_surfels) {
                su = sv = std::max(opt.point_surfel_footprint * in.depth.values[i] * inv_f, opt.scale_floor);
                q = Eigen::Quaterniond::Identity();
            } else {
                const double ru = in.multiplier_u.empty() ? 1.0 : in.multiplier_u[i];
                const double rv = in.multiplier_v.empty() ? 1.0 : in.multiplier_v[i];
                std::tie(su, sv) = apply_multipliers(coarse[i].first, coarse[i].second, ru, rv);
                if (opt.scale_cap) {
                    std::vector<double> cu, cv;
                    for (int dy = -2; dy <= 2; ++dy) {
                        for (int dx = -2; dx <= 2; ++dx) {
                            const int xx = x + dx, yy = y + dy;
                            if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
                            const auto j = positions.index(xx, yy);
                            if (!positions.valid[j]) continue;
                            cu.push_back(coarse[j].first);
                            cv.push_back(coarse[j].second);
                        }
                    }
                    su = std::min(su, opt.scale_cap_factor * detail::median_of(cu));
                    sv = std::min(sv, opt.scale_cap_factor * detail::median_of(cv));
                }
                const Mat3 r_cam = rotation_matrix_from_normal(normals[i]);
                q = canonical_quaternion(cam.camera_to_world_rotation() * r_cam);
            }
            s.rotation = {float(q.w()), float(q.x()), float(q.y()), float(q.z())};
            s.scale_u = float(su);
            s.scale_v = float(sv);

            const double a = in.opacity.empty() ? 1.0 : in.opacity[i];
            if (!(a >= 0.0 && a <= 1.0)) fail_validation("opacity must lie in [0, 1]");
            s.opacity = float(a);

            const std::array<double, 3> rgb = {in.rgb.at(x, y, 0), in.rgb.at(x, y, 1), in.rgb.at(x, y, 2)};
            for (double c : rgb) {
                if (!(c >= 0.0 && c <= 1.0)) fail_validation("image colors must lie in [0, 1]");
            }
            const auto dc = sh::rgb_to_dc(rgb);
            s.sh_degree = in.sh_degree;
            s.sh.assign(3 * static_cast<std::size_t>(sh_coeff_count(in.sh_degree)), 0.f);
            for (int c = 0; c < 3; ++c) s.sh[c] = float(dc[c]);
            if (!in.sh_rest.empty()) {
                for (std::size_t k = 0; k < rest; ++k) s.sh[3 + k] = float(in.sh_rest[i * rest + k]);
            }

            res.scene.surfels.push_back(std::move(s));
            res.pixel.push_back(i);
            res.normal.push_back(normals[i]);
            res.coarse.push_back(coarse[i]);
            res.degenerate.push_back(degenerate[i]);
            res.degenerate_count += degenerate[i];
        }
    }
    res.scene.metadata["generator"] = "surfsplat lift";
    res.scene.metadata["mode"] = opt.ablate_point_surfels ? "point-surfels" : "continuity-prior";
    return res;
}

inline SurfelScene lift_scene(const LiftInputs &in, const LiftOptions &opt = {}) {
    return lift(in, opt).scene;
}

}  // namespace surfsplat::lift
