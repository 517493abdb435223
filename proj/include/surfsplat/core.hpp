// SPDX-License-Identifier: Apache-2.0

/// \file core.hpp
/// \brief Shared value types: camera, rays, images, depth maps and surfels.
///
/// Conventions: camera x points right, y down, z forward into the scene.
/// Integer pixel (i, j) is sampled at (i + 0.5, j + 0.5).

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace surfsplat {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Category of a failure; the CLI maps these onto exit codes.
enum class ErrorKind { Usage, Io, Validation };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string &what) {
    throw Error(ErrorKind::Validation, what);
}
[[noreturn]] inline void fail_io(const std::string &what) { throw Error(ErrorKind::Io, what); }

/// Largest absolute entry of R^T R - I.
inline double orthonormality_error(const Mat3 &r) {
    return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit length
};

/// Pinhole camera with a rigid world-to-camera pose.
///
/// The inverse pose is computed once at construction.
class Camera {
public:
    Camera(double fx, double fy, double cx, double cy, int width, int height,
           const Mat4 &world_to_camera = Mat4::Identity())
        : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height),
          world_to_camera_(world_to_camera) {
        if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
            fail_validation("camera focal lengths must be positive and finite");
        }
        if (!std::isfinite(cx) || !std::isfinite(cy)) {
            fail_validation("camera principal point must be finite");
        }
        if (width < 3 || height < 3) {
            fail_validation("camera resolution must be at least 3x3");
        }
        if (!world_to_camera.allFinite()) {
            fail_validation("camera pose contains non-finite values");
        }
        const Eigen::RowVector4d last = world_to_camera.row(3);
        if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12) {
            fail_validation("camera pose last row must be (0, 0, 0, 1)");
        }
        rotation_ = world_to_camera.topLeftCorner<3, 3>();
        translation_ = world_to_camera.topRightCorner<3, 1>();
        if (orthonormality_error(rotation_) > 1e-6) {
            fail_validation("camera rotation is not orthonormal");
        }
        if (std::abs(rotation_.determinant() - 1.0) > 1e-6) {
            fail_validation("camera rotation must have determinant +1");
        }
        camera_to_world_rotation_ = rotation_.transpose();
        center_ = -camera_to_world_rotation_ * translation_;
    }

    double fx() const { return fx_; }
    double fy() const { return fy_; }
    double cx() const { return cx_; }
    double cy() const { return cy_; }
    int width() const { return width_; }
    int height() const { return height_; }
    const Mat4 &world_to_camera() const { return world_to_camera_; }

    /// World-to-camera rotation.
    const Mat3 &rotation() const { return rotation_; }
    const Vec3 &translation() const { return translation_; }
    const Mat3 &camera_to_world_rotation() const { return camera_to_world_rotation_; }
    /// Camera center in world coordinates.
    const Vec3 &center() const { return center_; }

    Vec3 to_camera(const Vec3 &world) const { return rotation_ * world + translation_; }
    Vec3 to_world(const Vec3 &cam) const { return camera_to_world_rotation_ * cam + center_; }

    /// Unnormalized camera-frame direction with z = 1 through image point (u, v).
    Vec3 camera_direction(double u, double v) const {
        return {(u - cx_) / fx_, (v - cy_) / fy_, 1.0};
    }

    /// Pixel coordinates of a camera-frame point (z must be positive).
    Eigen::Vector2d project_camera(const Vec3 &cam) const {
        return {fx_ * cam.x() / cam.z() + cx_, fy_ * cam.y() / cam.z() + cy_};
    }
    Eigen::Vector2d project(const Vec3 &world) const { return project_camera(to_camera(world)); }

private:
    double fx_, fy_, cx_, cy_;
    int width_, height_;
    Mat4 world_to_camera_;
    Mat3 rotation_;
    Vec3 translation_;
    Mat3 camera_to_world_rotation_;
    Vec3 center_;
};

/// World-space ray through image point (u, v); pass i + 0.5, j + 0.5 for pixel centers.
inline Ray pixel_ray(const Camera &camera, double u, double v) {
    if (!(u >= 0.0 && u < camera.width() && v >= 0.0 && v < camera.height())) {
        fail_validation("pixel coordinate outside the image");
    }
    Ray ray;
    ray.origin = camera.center();
    ray.direction = (camera.camera_to_world_rotation() * camera.camera_direction(u, v)).normalized();
    return ray;
}

/// Scales intrinsics and resolution by k; the pose is unchanged.
inline Camera scale_camera(const Camera &camera, double k) {
    if (!(k > 0.0) || !std::isfinite(k)) {
        fail_validation("camera scale factor must be positive");
    }
    const double w = k * camera.width();
    const double h = k * camera.height();
    const double wr = std::round(w);
    const double hr = std::round(h);
    if (std::abs(w - wr) > 1e-9 * std::max(1.0, w) || std::abs(h - hr) > 1e-9 * std::max(1.0, h)) {
        fail_validation("scaled camera resolution is not integral");
    }
    return Camera(camera.fx() * k, camera.fy() * k, camera.cx() * k, camera.cy() * k,
                  static_cast<int>(wr), static_cast<int>(hr), camera.world_to_camera());
}

/// Dense row-major float grid with 1, 3 or 4 interleaved channels.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, int c, double fill = 0.0) : width(w), height(h), channels(c) {
        if (w <= 0 || h <= 0) fail_validation("image dimensions must be positive");
        if (c != 1 && c != 3 && c != 4) fail_validation("image must have 1, 3 or 4 channels");
        data.assign(static_cast<std::size_t>(w) * h * c, fill);
    }

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double &at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

    bool same_shape(const ImageBuffer &other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }
};

/// Throws unless the buffer is consistently sized and all values are finite.
inline void validate(const ImageBuffer &img) {
    if (img.channels != 1 && img.channels != 3 && img.channels != 4) {
        fail_validation("image must have 1, 3 or 4 channels");
    }
    if (img.width <= 0 || img.height <= 0 ||
        img.data.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
        fail_validation("image data length does not match its dimensions");
    }
    for (double v : img.data) {
        if (!std::isfinite(v)) fail_validation("image contains non-finite values");
    }
}

/// Metric z-depth per pixel with a validity mask.
struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> valid;

    DepthMap() = default;
    DepthMap(int w, int h, double fill = 0.0)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill),
          valid(static_cast<std::size_t>(w) * h, fill > 0.0 ? 1 : 0) {
        if (w <= 0 || h <= 0) fail_validation("depth map dimensions must be positive");
    }

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    double at(int x, int y) const { return values[index(x, y)]; }
    bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
    void set(int x, int y, double d) {
        values[index(x, y)] = d;
        valid[index(x, y)] = 1;
    }
    void mask(int x, int y) {
        values[index(x, y)] = 0.0;
        valid[index(x, y)] = 0;
    }
    std::size_t valid_count() const {
        std::size_t n = 0;
        for (auto v : valid) n += v != 0;
        return n;
    }
};

inline void validate(const DepthMap &depth) {
    const auto n = static_cast<std::size_t>(depth.width) * depth.height;
    if (depth.width <= 0 || depth.height <= 0 || depth.values.size() != n || depth.valid.size() != n) {
        fail_validation("depth map data length does not match its dimensions");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (depth.valid[i] && !(depth.values[i] > 0.0 && std::isfinite(depth.values[i]))) {
            fail_validation("depth map has a non-positive or non-finite unmasked value");
        }
    }
}

/// Number of SH coefficients per channel for a degree.
constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Flat 2D Gaussian primitive. The third scale is identically zero.
///
/// Stored in single precision so that scene files round-trip bit-exactly.
/// `sh` holds coefficient triples, coefficient-major: sh[3 * k + channel],
/// with k = 0 the DC term.
struct Surfel {
    std::array<float, 3> position{0.f, 0.f, 0.f};
    std::array<float, 4> rotation{1.f, 0.f, 0.f, 0.f};  // w, x, y, z
    float scale_u = 1.f;
    float scale_v = 1.f;
    float opacity = 1.f;
    int sh_degree = 0;
    std::vector<float> sh = std::vector<float>(3, 0.f);

    Vec3 center() const { return {position[0], position[1], position[2]}; }
    Eigen::Quaterniond quaternion() const {
        return {rotation[0], rotation[1], rotation[2], rotation[3]};
    }
    /// Columns are the tangent axes t_u, t_v and the normal.
    Mat3 rotation_matrix() const { return quaternion().normalized().toRotationMatrix(); }
};

inline void validate(const Surfel &s) {
    const double qn = std::sqrt(double(s.rotation[0]) * s.rotation[0] + double(s.rotation[1]) * s.rotation[1] +
                                double(s.rotation[2]) * s.rotation[2] + double(s.rotation[3]) * s.rotation[3]);
    if (std::abs(qn - 1.0) > 1e-6) fail_validation("surfel quaternion is not unit length");
    if (!(s.scale_u > 0.f) || !(s.scale_v > 0.f) || !std::isfinite(s.scale_u) || !std::isfinite(s.scale_v)) {
        fail_validation("surfel scales must be positive and finite");
    }
    if (!(s.opacity >= 0.f && s.opacity <= 1.f)) fail_validation("surfel opacity must lie in [0, 1]");
    if (s.sh_degree < 0 || s.sh_degree > 3) fail_validation("surfel SH degree must be in 0..3");
    if (s.sh.size() != static_cast<std::size_t>(3 * sh_coeff_count(s.sh_degree))) {
        fail_validation("surfel SH coefficient count does not match its degree");
    }
    for (float p : s.position) {
        if (!std::isfinite(p)) fail_validation("surfel position is not finite");
    }
    for (float c : s.sh) {
        if (!std::isfinite(c)) fail_validation("surfel SH coefficient is not finite");
    }
}

struct SurfelScene {
    std::vector<Surfel> surfels;
    std::map<std::string, std::string> metadata;
};

inline void validate(const SurfelScene &scene) {
    for (const auto &s : scene.surfels) validate(s);
}

}  // namespace surfsplat
