// SPDX-License-Identifier: Apache-2.0

/// \file render.hpp
/// \brief Tile-based CPU rasterizer for 2D Gaussian surfels with forced alpha blending.
///
/// Pipeline: transform surfels to the camera frame and cull behind the near
/// plane, bound each 3-sigma disk on screen, bin into tiles, sort each tile
/// front to back by center depth (ties by surfel index), then per pixel
/// intersect, composite and normalize by the accumulated alpha.
///
/// Opacity is clipped to tau_opa at render time, so any surfel a ray hits
/// keeps a nonzero share of the pixel. Tiles are independent work units and
/// each pixel belongs to exactly one tile, so the output does not depend on
/// the worker count.

#pragma once

#include "surfsplat/core.hpp"
#include "surfsplat/sh.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <vector>

namespace surfsplat::render {

struct RenderSettings {
    double tau_opa = 0.6;
    double tau_alpha = 0.001;
    double sigma_cutoff = 3.0;
    double lowpass_px = 0.3;
    int tile_size = 16;
    std::array<double, 3> background{0.0, 0.0, 0.0};
    double transmittance_floor = 1e-4;
    int sh_degree_used = 3;
    double znear = 1e-4;
    /// 0 selects std::thread::hardware_concurrency().
    int workers = 1;
};

/// Training-regime normalization threshold.
inline constexpr double kTrainTauAlpha = 0.1;

inline void validate(const RenderSettings &s) {
    if (!(s.tau_opa > 0.0 && s.tau_opa <= 1.0)) fail_validation("tau_opa must lie in (0, 1]");
    if (!(s.tau_alpha > 0.0 && s.tau_alpha < 1.0)) fail_validation("tau_alpha must lie in (0, 1)");
    if (!(s.sigma_cutoff > 0.0) || !std::isfinite(s.sigma_cutoff)) fail_validation("sigma_cutoff must be positive");
    if (!(s.lowpass_px >= 0.0) || !std::isfinite(s.lowpass_px)) fail_validation("lowpass_px must be non-negative");
    if (s.tile_size < 1) fail_validation("tile_size must be positive");
    for (double b : s.background) {
        if (!(b >= 0.0 && b <= 1.0)) fail_validation("background must lie in [0, 1]");
    }
    if (!(s.transmittance_floor >= 0.0 && s.transmittance_floor < 1.0)) {
        fail_validation("transmittance_floor must lie in [0, 1)");
    }
    if (s.sh_degree_used < 0 || s.sh_degree_used > 3) fail_validation("sh_degree_used must be in 0..3");
    if (!(s.znear > 0.0)) fail_validation("znear must be positive");
    if (s.workers < 0) fail_validation("workers must be non-negative");
}

struct Fragment {
    std::size_t surfel = 0;
    double weight = 0.0;  // Gaussian weight g in (0, 1]
    double depth = 0.0;   // camera-frame z of the hit
    Vec3 view_dir = Vec3::UnitZ();
};

struct RenderOutput {
    ImageBuffer color;  // 3 channels
    ImageBuffer alpha;  // 1 channel
    ImageBuffer depth;  // 1 channel
};

inline double clamp_opacity(double alpha_in, double tau_opa) { return std::min(alpha_in, tau_opa); }

/// Front-to-back accumulation state for one pixel.
struct Accumulator {
    std::array<double, 3> color{0.0, 0.0, 0.0};
    double alpha = 0.0;
    double depth = 0.0;
    double transmittance = 1.0;

    void add(const std::array<double, 3> &c, double a, double d) {
        const double w = a * transmittance;
        color[0] += c[0] * w;
        color[1] += c[1] * w;
        color[2] += c[2] * w;
        alpha += w;
        depth += d * w;
        transmittance *= 1.0 - a;
    }
};

struct CompositeResult {
    std::array<double, 3> color{0.0, 0.0, 0.0};
    double alpha = 0.0;
    double depth = 0.0;
};

/// Sum c_i a_i T_i and a_i T_i over depth-ordered fragments, T_i = prod_{j<i}(1 - a_j).
/// `opacities` are effective per-fragment opacities (clipped opacity times g).
inline CompositeResult composite(std::span<const Fragment> fragments, std::span<const std::array<double, 3>> colors,
                                 std::span<const double> opacities, double transmittance_floor = 1e-4) {
    if (colors.size() != fragments.size() || opacities.size() != fragments.size()) {
        fail_validation("composite inputs differ in length");
    }
    Accumulator acc;
    for (std::size_t i = 0; i < fragments.size(); ++i) {
        acc.add(colors[i], opacities[i], fragments[i].depth);
        if (acc.transmittance < transmittance_floor) break;
    }
    return {acc.color, acc.alpha, acc.depth};
}

/// Divides by alpha where alpha >= tau_alpha; elsewhere composites the
/// background additively. Clamped to [0, 1].
inline std::array<double, 3> normalize_color(const std::array<double, 3> &raw, double alpha, double tau_alpha,
                                             const std::array<double, 3> &background = {0.0, 0.0, 0.0}) {
    std::array<double, 3> out;
    for (int c = 0; c < 3; ++c) {
        const double v = alpha >= tau_alpha ? raw[c] / alpha : raw[c] + (1.0 - alpha) * background[c];
        out[c] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

namespace detail {

/// Surfel expressed in the camera frame, with its screen bound.
struct ProjectedSurfel {
    Vec3 center;
    Vec3 tu, tv, normal;
    double inv_su = 0.0, inv_sv = 0.0;
    double px = 0.0, py = 0.0;  // projected center in pixels
    double opacity = 0.0;       // clipped
    bool view_dependent = false;
    int degree = 0;
    std::array<double, 3> color{0.0, 0.0, 0.0};
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bound
    bool visible = false;
};

inline ProjectedSurfel project(const Surfel &s, const Camera &cam, const RenderSettings &set) {
    ProjectedSurfel p;
    p.center = cam.to_camera(s.center());
    if (!(p.center.z() > set.znear)) return p;
    const Mat3 r = cam.rotation() * s.rotation_matrix();
    p.tu = r.col(0);
    p.tv = r.col(1);
    p.normal = r.col(2);
    p.inv_su = 1.0 / double(s.scale_u);
    p.inv_sv = 1.0 / double(s.scale_v);
    const Eigen::Vector2d c = cam.project_camera(p.center);
    p.px = c.x();
    p.py = c.y();
    p.opacity = clamp_opacity(double(s.opacity), set.tau_opa);
    p.degree = std::min(s.sh_degree, set.sh_degree_used);
    p.view_dependent = p.degree > 0;
    if (!p.view_dependent) {
        p.color = sh::evaluate<float>(0, std::span<const float>(s.sh), Vec3::UnitZ());
    }

    // Screen bound: hull of the projected corners of the square holding the
    // sigma_cutoff disk, padded for the low-pass footprint.
    const double k = set.sigma_cutoff;
    const Vec3 du = p.tu * (k * double(s.scale_u));
    const Vec3 dv = p.tv * (k * double(s.scale_v));
    double xmin = p.px, xmax = p.px, ymin = p.py, ymax = p.py;
    bool clipped = false;
    for (int a = -1; a <= 1; a += 2) {
        for (int b = -1; b <= 1; b += 2) {
            const Vec3 q = p.center + a * du + b * dv;
            if (!(q.z() > set.znear)) {
                clipped = true;
                continue;
            }
            const Eigen::Vector2d pq = cam.project_camera(q);
            xmin = std::min(xmin, pq.x());
            xmax = std::max(xmax, pq.x());
            ymin = std::min(ymin, pq.y());
            ymax = std::max(ymax, pq.y());
        }
    }
    const int w = cam.width(), h = cam.height();
    if (clipped) {
        p.x0 = 0;
        p.x1 = w - 1;
        p.y0 = 0;
        p.y1 = h - 1;
    } else {
        const double pad = k * set.lowpass_px + 1.0;
        const double fx0 = std::floor(xmin - pad - 0.5), fx1 = std::ceil(xmax + pad - 0.5);
        const double fy0 = std::floor(ymin - pad - 0.5), fy1 = std::ceil(ymax + pad - 0.5);
        if (fx1 < 0.0 || fy1 < 0.0 || fx0 > w - 1 || fy0 > h - 1) return p;
        p.x0 = static_cast<int>(std::max(fx0, 0.0));
        p.x1 = static_cast<int>(std::min(fx1, double(w - 1)));
        p.y0 = static_cast<int>(std::max(fy0, 0.0));
        p.y1 = static_cast<int>(std::min(fy1, double(h - 1)));
    }
    p.visible = true;
    return p;
}

/// Weight and depth of a camera-frame unit ray through pixel point (u, v).
///
/// Object-space hits are accepted within sigma_cutoff; the screen-space
/// low-pass weight applies when the projected center is within
/// sigma_cutoff * lowpass_px pixels. The larger weight wins. Low-pass-only
/// fragments report the center depth.
inline bool intersect(const ProjectedSurfel &p, const Vec3 &dir, double u, double v, const RenderSettings &set,
                      double &weight, double &depth) {
    double g_obj = 0.0;
    double hit_z = 0.0;
    const double denom = p.normal.dot(dir);
    if (std::abs(denom) >= 1e-12) {
        const double t = p.normal.dot(p.center) / denom;
        if (t > 0.0) {
            const Vec3 diff = t * dir - p.center;
            const double a = p.tu.dot(diff) * p.inv_su;
            const double b = p.tv.dot(diff) * p.inv_sv;
            const double r2 = a * a + b * b;
            if (r2 <= set.sigma_cutoff * set.sigma_cutoff) {
                g_obj = std::exp(-0.5 * r2);
                hit_z = t * dir.z();
            }
        }
    }
    double g_lp = 0.0;
    if (set.lowpass_px > 0.0) {
        const double dx = u - p.px, dy = v - p.py;
        const double d2 = dx * dx + dy * dy;
        const double reach = set.sigma_cutoff * set.lowpass_px;
        if (d2 <= reach * reach) g_lp = std::exp(-d2 / (2.0 * set.lowpass_px * set.lowpass_px));
    }
    if (g_obj <= 0.0 && g_lp <= 0.0) return false;
    weight = std::max(g_obj, g_lp);
    depth = g_obj > 0.0 ? hit_z : p.center.z();
    return true;
}

inline std::array<double, 3> fragment_color(const Surfel &s, const ProjectedSurfel &p, const Camera &cam,
                                            const Vec3 &dir) {
    if (!p.view_dependent) return p.color;
    return sh::evaluate<float>(p.degree, std::span<const float>(s.sh), cam.camera_to_world_rotation() * dir);
}

inline std::vector<ProjectedSurfel> project_all(const SurfelScene &scene, const Camera &cam,
                                                const RenderSettings &set) {
    std::vector<ProjectedSurfel> out;
    out.reserve(scene.surfels.size());
    for (const auto &s : scene.surfels) out.push_back(project(s, cam, set));
    return out;
}

inline void write_pixel(RenderOutput &out, int x, int y, const Accumulator &acc, const RenderSettings &set) {
    const auto c = normalize_color(acc.color, acc.alpha, set.tau_alpha, set.background);
    for (int ch = 0; ch < 3; ++ch) out.color.at(x, y, ch) = c[ch];
    out.alpha.at(x, y) = acc.alpha;
    out.depth.at(x, y) = acc.alpha >= set.tau_alpha ? acc.depth / acc.alpha : 0.0;
}

inline int resolve_workers(int requested) {
    if (requested > 0) return requested;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

inline void check_inputs(const SurfelScene &scene, const RenderSettings &set) {
    validate(set);
    if (scene.surfels.empty()) fail_validation("cannot render an empty scene");
}

}  // namespace detail

/// Single-surfel intersection for the pixel point (u, v) of `camera`.
inline std::optional<Fragment> intersect_surfel(const Camera &camera, const Surfel &surfel, double u, double v,
                                                const RenderSettings &settings = {}) {
    const auto p = detail::project(surfel, camera, settings);
    if (p.center.z() <= settings.znear) return std::nullopt;
    const Vec3 dir = camera.camera_direction(u, v).normalized();
    Fragment f;
    f.surfel = 0;
    f.view_dir = camera.camera_to_world_rotation() * dir;
    if (!detail::intersect(p, dir, u, v, settings, f.weight, f.depth)) return std::nullopt;
    return f;
}

/// Tiled renderer.
inline RenderOutput render(const SurfelScene &scene, const Camera &camera, const RenderSettings &settings = {}) {
    detail::check_inputs(scene, settings);
    const int w = camera.width(), h = camera.height();
    const int ts = settings.tile_size;
    const int tiles_x = (w + ts - 1) / ts, tiles_y = (h + ts - 1) / ts;

    const auto projected = detail::project_all(scene, camera, settings);

    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::size_t i = 0; i < projected.size(); ++i) {
        const auto &p = projected[i];
        if (!p.visible) continue;
        for (int ty = p.y0 / ts; ty <= p.y1 / ts; ++ty) {
            for (int tx = p.x0 / ts; tx <= p.x1 / ts; ++tx) {
                bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(i));
            }
        }
    }

    RenderOutput out{ImageBuffer(w, h, 3), ImageBuffer(w, h, 1), ImageBuffer(w, h, 1)};
    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= bins.size()) return;
            auto &list = bins[t];
            std::sort(list.begin(), list.end(), [&](std::uint32_t a, std::uint32_t b) {
                const double za = projected[a].center.z(), zb = projected[b].center.z();
                return za < zb || (za == zb && a < b);
            });
            const int tx = static_cast<int>(t % tiles_x), ty = static_cast<int>(t / tiles_x);
            const int xe = std::min(w, (tx + 1) * ts), ye = std::min(h, (ty + 1) * ts);
            for (int y = ty * ts; y < ye; ++y) {
                for (int x = tx * ts; x < xe; ++x) {
                    const double u = x + 0.5, v = y + 0.5;
                    const Vec3 dir = camera.camera_direction(u, v).normalized();
                    Accumulator acc;
                    for (std::uint32_t idx : list) {
                        const auto &p = projected[idx];
                        if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) continue;
                        double g, d;
                        if (!detail::intersect(p, dir, u, v, settings, g, d)) continue;
                        acc.add(detail::fragment_color(scene.surfels[idx], p, camera, dir), p.opacity * g, d);
                        if (acc.transmittance < settings.transmittance_floor) break;
                    }
                    detail::write_pixel(out, x, y, acc, settings);
                }
            }
        }
    };
    const int workers = std::min<int>(detail::resolve_workers(settings.workers), static_cast<int>(bins.size()));
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int i = 0; i < workers; ++i) pool.emplace_back(work);
    }
    return out;
}

/// Reference renderer: every surfel against every pixel, fragments sorted by
/// intersection depth (ties by index), no early termination.
inline RenderOutput render_bruteforce(const SurfelScene &scene, const Camera &camera,
                                      const RenderSettings &settings = {}) {
    detail::check_inputs(scene, settings);
    const int w = camera.width(), h = camera.height();
    const auto projected = detail::project_all(scene, camera, settings);
    RenderOutput out{ImageBuffer(w, h, 3), ImageBuffer(w, h, 1), ImageBuffer(w, h, 1)};
    std::vector<Fragment> frags;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double u = x + 0.5, v = y + 0.5;
            const Vec3 dir = camera.camera_direction(u, v).normalized();
            frags.clear();
            for (std::size_t i = 0; i < projected.size(); ++i) {
                const auto &p = projected[i];
                if (!(p.center.z() > settings.znear)) continue;
                Fragment f;
                if (!detail::intersect(p, dir, u, v, settings, f.weight, f.depth)) continue;
                f.surfel = i;
                frags.push_back(f);
            }
            std::sort(frags.begin(), frags.end(), [](const Fragment &a, const Fragment &b) {
                return a.depth < b.depth || (a.depth == b.depth && a.surfel < b.surfel);
            });
            Accumulator acc;
            for (const auto &f : frags) {
                const auto &p = projected[f.surfel];
                acc.add(detail::fragment_color(scene.surfels[f.surfel], p, camera, dir), p.opacity * f.weight,
                        f.depth);
            }
            detail::write_pixel(out, x, y, acc, settings);
        }
    }
    return out;
}

}  // namespace surfsplat::render
