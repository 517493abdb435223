// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for the test binaries.

#pragma once

#include "surfsplat/surfsplat.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

namespace testsupport {

using namespace surfsplat;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("surfsplat-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;

    const std::filesystem::path &path() const { return path_; }
    std::filesystem::path operator/(const std::string &name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Surfel make_surfel(const Vec3 &pos, const Eigen::Quaterniond &q, double su, double sv, double opacity,
                          const std::array<double, 3> &rgb) {
    Surfel s;
    s.position = {float(pos.x()), float(pos.y()), float(pos.z())};
    const auto qn = q.normalized();
    s.rotation = {float(qn.w()), float(qn.x()), float(qn.y()), float(qn.z())};
    s.scale_u = float(su);
    s.scale_v = float(sv);
    s.opacity = float(opacity);
    s.sh_degree = 0;
    const auto dc = sh::rgb_to_dc(rgb);
    s.sh = {float(dc[0]), float(dc[1]), float(dc[2])};
    return s;
}

/// Lift inputs straight from a synthetic scene.
inline lift::LiftInputs inputs_from(const synth::SynthScene &s) { return {s.depth, s.camera, s.image}; }

/// Random scene whose center-depth order agrees with every ray's
/// intersection-depth order: surfels sit on separated depth layers and
/// their tilt is bounded so a 3-sigma disk never crosses half a layer gap.
inline SurfelScene random_layered_scene(std::mt19937 &rng, const Camera &cam, int count) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    constexpr double kLayerGap = 0.2, kMaxTilt = 25.0 * M_PI / 180.0, kMaxSigma = 0.06;
    std::vector<int> layer(count);
    for (int i = 0; i < count; ++i) layer[i] = i;
    std::shuffle(layer.begin(), layer.end(), rng);
    SurfelScene scene;
    for (int i = 0; i < count; ++i) {
        const double z = 1.5 + kLayerGap * layer[i];
        const double u = uni(rng) * cam.width(), v = uni(rng) * cam.height();
        const Vec3 pos = cam.camera_direction(u, v) * z;
        const double tilt = uni(rng) * kMaxTilt, phi = uni(rng) * 2.0 * M_PI;
        const Vec3 axis(std::cos(phi), std::sin(phi), 0.0);
        const Eigen::Quaterniond q(Eigen::AngleAxisd(tilt, axis) * Eigen::AngleAxisd(uni(rng) * M_PI, Vec3::UnitZ()));
        const double su = 0.01 + uni(rng) * (kMaxSigma - 0.01), sv = 0.01 + uni(rng) * (kMaxSigma - 0.01);
        scene.surfels.push_back(
            make_surfel(pos, q, su, sv, 0.2 + 0.8 * uni(rng), {uni(rng), uni(rng), uni(rng)}));
    }
    return scene;
}

inline ImageBuffer random_image(std::mt19937 &rng, int w, int h, int c = 3) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    ImageBuffer img(w, h, c);
    for (auto &v : img.data) v = uni(rng);
    return img;
}

inline double max_abs_diff(const ImageBuffer &a, const ImageBuffer &b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

/// Independent 3x3 Sobel evaluation with clamp-replicated borders.
inline std::pair<Vec3, Vec3> sobel_oracle(const std::function<Vec3(int, int)> &p, int x, int y, int w, int h) {
    const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    Vec3 gx = Vec3::Zero(), gy = Vec3::Zero();
    for (int j = 0; j < 3; ++j) {
        for (int i = 0; i < 3; ++i) {
            const Vec3 q = p(std::clamp(x + i - 1, 0, w - 1), std::clamp(y + j - 1, 0, h - 1));
            gx += kx[j][i] * q;
            gy += kx[i][j] * q;  // transpose
        }
    }
    return {gx / 8.0, gy / 8.0};
}

/// Keys cubic kernel, a = -0.5.
inline double keys(double x) {
    const double a = -0.5, t = std::abs(x);
    if (t <= 1.0) return (a + 2) * t * t * t - (a + 3) * t * t + 1;
    if (t < 2.0) return a * t * t * t - 5 * a * t * t + 8 * a * t - 4 * a;
    return 0.0;
}

/// Direct 16-tap evaluation with clamped source indices.
inline ImageBuffer upsample_oracle(const ImageBuffer &img, int k) {
    ImageBuffer out(img.width * k, img.height * k, img.channels);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const double sx = (x + 0.5) / k - 0.5, sy = (y + 0.5) / k - 0.5;
            const int bx = int(std::floor(sx)), by = int(std::floor(sy));
            for (int c = 0; c < img.channels; ++c) {
                double v = 0.0;
                for (int n = by - 1; n <= by + 2; ++n) {
                    for (int m = bx - 1; m <= bx + 2; ++m) {
                        const int cm = std::clamp(m, 0, img.width - 1), cn = std::clamp(n, 0, img.height - 1);
                        v += keys(sx - m) * keys(sy - n) * img.at(cm, cn, c);
                    }
                }
                out.at(x, y, c) = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return out;
}

inline bool bit_identical(const render::RenderOutput &a, const render::RenderOutput &b) {
    return a.color.data == b.color.data && a.alpha.data == b.alpha.data && a.depth.data == b.depth.data;
}

/// Arbitrary valid scene for serialization tests; SH degree fixed per scene.
inline SurfelScene random_surfel_scene(std::mt19937 &rng, std::size_t count, int degree) {
    std::uniform_real_distribution<float> uni(-10.f, 10.f), pos01(1e-4f, 1.f);
    std::normal_distribution<double> g;
    SurfelScene scene;
    scene.surfels.resize(count);
    for (auto &s : scene.surfels) {
        s.position = {uni(rng), uni(rng), uni(rng)};
        const Eigen::Quaterniond q = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized();
        s.rotation = {float(q.w()), float(q.x()), float(q.y()), float(q.z())};
        s.scale_u = pos01(rng);
        s.scale_v = pos01(rng);
        s.opacity = pos01(rng);
        s.sh_degree = degree;
        s.sh.resize(3 * static_cast<std::size_t>(sh_coeff_count(degree)));
        for (auto &c : s.sh) c = uni(rng);
    }
    return scene;
}

inline bool same_surfels(const SurfelScene &a, const SurfelScene &b) {
    if (a.surfels.size() != b.surfels.size()) return false;
    for (std::size_t i = 0; i < a.surfels.size(); ++i) {
        const auto &x = a.surfels[i], &y = b.surfels[i];
        if (x.position != y.position || x.rotation != y.rotation || x.scale_u != y.scale_u ||
            x.scale_v != y.scale_v || x.opacity != y.opacity || x.sh_degree != y.sh_degree || x.sh != y.sh) {
            return false;
        }
    }
    return true;
}

/// Random rigid pose with translation in [-5, 5]^3.
inline Mat4 random_pose(std::mt19937 &rng) {
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> t(-5.0, 5.0);
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized().toRotationMatrix();
    m.topRightCorner<3, 1>() = Vec3(t(rng), t(rng), t(rng));
    return m;
}

inline Camera random_camera(std::mt19937 &rng) {
    std::uniform_real_distribution<double> f(10.0, 2000.0), c(0.0, 500.0);
    std::uniform_int_distribution<int> sz(3, 4096);
    return Camera(f(rng), f(rng), c(rng), c(rng), sz(rng), sz(rng), random_pose(rng));
}

/// Runs a shell command, returning its exit status and captured stdout.
struct CommandResult {
    int status = -1;
    std::string out;
};

inline CommandResult run(const std::string &cmd) {
    CommandResult r;
    std::FILE *p = ::popen((cmd + " 2>&1").c_str(), "r");
    if (!p) return r;
    char buf[512];
    while (std::fgets(buf, sizeof buf, p)) r.out += buf;
    const int st = ::pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

}  // namespace testsupport
