// SPDX-License-Identifier: Apache-2.0

/// \file synth.hpp
/// \brief Analytic test scenes (plane, sphere, crease) with exact depth and normals.

#pragma once

#include "surfsplat/core.hpp"

#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace surfsplat::synth {

enum class TextureKind { Constant, Checker, Gradient };

struct Texture {
    TextureKind kind = TextureKind::Checker;
    int period = 8;
    std::array<double, 3> color_a{0.85, 0.35, 0.20};
    std::array<double, 3> color_b{0.15, 0.45, 0.80};
};

/// Parses "constant", "gradient" or "checker:<period>".
inline Texture parse_texture(const std::string &desc) {
    Texture t;
    if (desc == "constant") {
        t.kind = TextureKind::Constant;
    } else if (desc == "gradient") {
        t.kind = TextureKind::Gradient;
    } else if (desc.rfind("checker", 0) == 0) {
        t.kind = TextureKind::Checker;
        if (desc.size() > 7) {
            if (desc[7] != ':') fail_validation("unknown texture '" + desc + "'");
            try {
                std::size_t used = 0;
                t.period = std::stoi(desc.substr(8), &used);
                if (used != desc.size() - 8) throw std::invalid_argument(desc);
            } catch (const std::exception &) {
                fail_validation("bad checker period in '" + desc + "'");
            }
        }
        if (t.period < 1) fail_validation("checker period must be positive");
    } else {
        fail_validation("unknown texture '" + desc + "'");
    }
    return t;
}

inline std::string to_string(const Texture &t) {
    switch (t.kind) {
    case TextureKind::Constant: return "constant";
    case TextureKind::Gradient: return "gradient";
    case TextureKind::Checker: return "checker:" + std::to_string(t.period);
    }
    return "checker";
}

/// Image-space texture lookup for pixel (x, y) of a w x h frame.
inline std::array<double, 3> sample(const Texture &t, int x, int y, int w, int h) {
    switch (t.kind) {
    case TextureKind::Constant: return t.color_a;
    case TextureKind::Gradient:
        return {w > 1 ? double(x) / (w - 1) : 0.0, h > 1 ? double(y) / (h - 1) : 0.0, 0.5};
    case TextureKind::Checker: break;
    }
    return ((x / t.period) + (y / t.period)) % 2 == 0 ? t.color_a : t.color_b;
}

struct SynthScene {
    DepthMap depth;
    Camera camera;
    ImageBuffer image;
    /// Camera-frame unit normals; zero at masked pixels.
    std::vector<Vec3> gt_normals;
    /// Pixels excluded from accuracy assertions (e.g. next to a crease).
    std::vector<std::uint8_t> flagged;
    std::string preset;
    std::map<std::string, std::string> params;

    bool is_flagged(int x, int y) const { return flagged[static_cast<std::size_t>(y) * depth.width + x] != 0; }
    const Vec3 &normal(int x, int y) const { return gt_normals[static_cast<std::size_t>(y) * depth.width + x]; }
};

namespace detail {

inline std::string num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

/// Identity-pose camera, principal point at the frame center, fx = fy = focal
/// (default: the frame width).
inline Camera make_camera(int w, int h, double focal) {
    const double f = focal > 0.0 ? focal : static_cast<double>(w);
    return Camera(f, f, w / 2.0, h / 2.0, w, h);
}

inline SynthScene blank(int w, int h, double focal, const Texture &tex, const std::string &preset) {
    if (w < 3 || h < 3) fail_validation("synthetic scenes need at least 3x3 pixels");
    SynthScene s{DepthMap(w, h), make_camera(w, h, focal), ImageBuffer(w, h, 3),
                 std::vector<Vec3>(static_cast<std::size_t>(w) * h, Vec3::Zero()),
                 std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0), preset, {}};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto c = sample(tex, x, y, w, h);
            for (int ch = 0; ch < 3; ++ch) s.image.at(x, y, ch) = c[ch];
        }
    }
    s.params["width"] = std::to_string(w);
    s.params["height"] = std::to_string(h);
    s.params["focal"] = num(s.camera.fx());
    s.params["texture"] = to_string(tex);
    return s;
}

}  // namespace detail

/// Plane z = depth_at_axis + tx * x + ty * y (camera frame).
inline SynthScene synth_plane(int width, int height, double depth_at_axis, std::array<double, 2> tilt,
                              const Texture &texture = {}, double focal = 0.0) {
    if (!(depth_at_axis > 0.0)) fail_validation("plane depth on the axis must be positive");
    auto s = detail::blank(width, height, focal, texture, "plane");
    const Vec3 n = Vec3(-tilt[0], -tilt[1], 1.0).normalized();
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Vec3 r = s.camera.camera_direction(x + 0.5, y + 0.5);
            const double denom = 1.0 - tilt[0] * r.x() - tilt[1] * r.y();
            const double z = denom > 0.0 ? depth_at_axis / denom : -1.0;
            if (!(z > 0.0) || !std::isfinite(z)) fail_validation("plane intersects the camera or is not visible");
            s.depth.set(x, y, z);
            s.gt_normals[s.depth.index(x, y)] = n;
        }
    }
    s.params["depth"] = detail::num(depth_at_axis);
    s.params["tilt"] = detail::num(tilt[0]) + "," + detail::num(tilt[1]);
    return s;
}

/// Nearest ray-sphere hit per pixel; pixels missing the sphere are masked.
/// Normals point outward from the sphere (towards the camera).
inline SynthScene synth_sphere(int width, int height, const Vec3 &center, double radius,
                               const Texture &texture = {}, double focal = 0.0) {
    if (!(radius > 0.0)) fail_validation("sphere radius must be positive");
    if (!(center.z() > 0.0) || center.norm() <= radius) {
        fail_validation("sphere is behind the camera or contains it");
    }
    auto s = detail::blank(width, height, focal, texture, "sphere");
    std::size_t hits = 0;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Vec3 r = s.camera.camera_direction(x + 0.5, y + 0.5);
            const double a = r.squaredNorm();
            const double b = -2.0 * r.dot(center);
            const double c = center.squaredNorm() - radius * radius;
            const double disc = b * b - 4.0 * a * c;
            if (disc < 0.0) {
                s.depth.mask(x, y);
                continue;
            }
            const double t = (-b - std::sqrt(disc)) / (2.0 * a);
            if (!(t > 0.0)) {
                s.depth.mask(x, y);
                continue;
            }
            s.depth.set(x, y, t);  // r.z == 1, so t is the z-depth
            s.gt_normals[s.depth.index(x, y)] = (t * r - center).normalized();
            ++hits;
        }
    }
    if (hits == 0) fail_validation("sphere does not cover any pixel");
    s.params["center"] = detail::num(center.x()) + "," + detail::num(center.y()) + "," + detail::num(center.z());
    s.params["radius"] = detail::num(radius);
    return s;
}

/// Two planes meeting at a vertical ridge that projects onto the boundary
/// before pixel column `crease_column`; their normals differ by `angle_deg`.
/// Columns crease_column - 1 and crease_column are flagged.
inline SynthScene synth_corner(int width, int height, double depth, int crease_column, double angle_deg,
                               const Texture &texture = {}, double focal = 0.0) {
    if (!(angle_deg > 0.0 && angle_deg < 180.0)) fail_validation("crease angle must lie strictly between 0 and 180");
    if (!(depth > 0.0)) fail_validation("crease depth must be positive");
    if (crease_column < 1 || crease_column > width - 1) fail_validation("crease column must be inside the frame");
    auto s = detail::blank(width, height, focal, texture, "corner");
    const double slope = std::tan(angle_deg * M_PI / 360.0);
    const double xc = (crease_column - s.camera.cx()) / s.camera.fx() * depth;
    const Vec3 n_left = Vec3(slope, 0.0, 1.0).normalized();
    const Vec3 n_right = Vec3(-slope, 0.0, 1.0).normalized();
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Vec3 r = s.camera.camera_direction(x + 0.5, y + 0.5);
            const bool left = x + 0.5 < crease_column;
            // Left: z = depth + slope (xc - X); right: z = depth + slope (X - xc), X = z r.x.
            const double denom = left ? 1.0 + slope * r.x() : 1.0 - slope * r.x();
            const double numer = left ? depth + slope * xc : depth - slope * xc;
            const double z = denom > 0.0 ? numer / denom : -1.0;
            if (!(z > 0.0) || !std::isfinite(z)) fail_validation("crease half-plane is not visible");
            s.depth.set(x, y, z);
            s.gt_normals[s.depth.index(x, y)] = left ? n_left : n_right;
            if (x == crease_column - 1 || x == crease_column) s.flagged[s.depth.index(x, y)] = 1;
        }
    }
    s.params["depth"] = detail::num(depth);
    s.params["crease_column"] = std::to_string(crease_column);
    s.params["angle"] = detail::num(angle_deg);
    return s;
}

}  // namespace surfsplat::synth
