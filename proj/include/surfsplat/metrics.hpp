// SPDX-License-Identifier: Apache-2.0

/// \file metrics.hpp
/// \brief MSE/PSNR/SSIM, Catmull-Rom upsampling and the high-resolution
/// rendering consistency (HRRC) protocol.
///
/// HRRC renders a scene through a k-times scaled camera and scores it
/// against the bicubic-upsampled ground truth. k = 1 is the standard metric.

#pragma once

#include "surfsplat/core.hpp"
#include "surfsplat/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace surfsplat::metrics {

inline constexpr double kPsnrCap = 99.0;
inline constexpr double kPerceptualWeight = 0.05;

namespace detail {

inline void require_same_shape(const ImageBuffer &a, const ImageBuffer &b) {
    if (!a.same_shape(b) || a.data.size() != b.data.size()) fail_validation("image shapes differ");
}

}  // namespace detail

inline double mse(const ImageBuffer &a, const ImageBuffer &b) {
    detail::require_same_shape(a, b);
    if (a.data.empty()) fail_validation("cannot compare empty images");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.data.size());
}

inline double psnr_from_mse(double m) {
    if (m < 1e-10) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

inline double psnr(const ImageBuffer &a, const ImageBuffer &b) { return psnr_from_mse(mse(a, b)); }

/// Normalized 1D Gaussian taps.
inline std::vector<double> gaussian_kernel(int size, double sigma) {
    std::vector<double> k(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
        k[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
        sum += k[i];
    }
    for (double &v : k) v /= sum;
    return k;
}

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double range = 1.0;
};

/// Mean SSIM over channels and all fully interior window positions.
inline double ssim(const ImageBuffer &a, const ImageBuffer &b, const SsimParams &p = {}) {
    detail::require_same_shape(a, b);
    const int w = a.width, h = a.height, win = p.window;
    if (std::min(w, h) < win) fail_validation("image is smaller than the SSIM window");
    const auto g = gaussian_kernel(win, p.sigma);
    const double c1 = (p.k1 * p.range) * (p.k1 * p.range);
    const double c2 = (p.k2 * p.range) * (p.k2 * p.range);
    const int ow = w - win + 1, oh = h - win + 1;

    // Separable filtering of x, y, x^2, y^2, xy: horizontal then vertical.
    std::array<std::vector<double>, 5> horiz;
    for (auto &v : horiz) v.assign(static_cast<std::size_t>(ow) * h, 0.0);
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < ow; ++x) {
                double s[5] = {0, 0, 0, 0, 0};
                for (int k = 0; k < win; ++k) {
                    const double va = a.at(x + k, y, c), vb = b.at(x + k, y, c);
                    s[0] += g[k] * va;
                    s[1] += g[k] * vb;
                    s[2] += g[k] * va * va;
                    s[3] += g[k] * vb * vb;
                    s[4] += g[k] * va * vb;
                }
                const auto i = static_cast<std::size_t>(y) * ow + x;
                for (int m = 0; m < 5; ++m) horiz[m][i] = s[m];
            }
        }
        double channel_sum = 0.0;
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double s[5] = {0, 0, 0, 0, 0};
                for (int k = 0; k < win; ++k) {
                    const auto i = static_cast<std::size_t>(y + k) * ow + x;
                    for (int m = 0; m < 5; ++m) s[m] += g[k] * horiz[m][i];
                }
                const double mx = s[0], my = s[1];
                const double vx = s[2] - mx * mx, vy = s[3] - my * my, cxy = s[4] - mx * my;
                channel_sum += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) /
                               ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
        total += channel_sum / (static_cast<double>(ow) * oh);
    }
    return total / a.channels;
}

/// Catmull-Rom cubic convolution weight (a = -0.5).
inline double cubic_weight(double x, double a = -0.5) {
    x = std::abs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

/// Source coordinate sampled by output pixel i at integer factor k.
inline double upsample_source_coord(int i, int k) { return (i + 0.5) / k - 0.5; }

/// Bicubic upsampling by integer factor k >= 2 with edge clamping.
/// Pixel centers align with scale_camera(), so outputs register with renders
/// from the scaled camera. Output is clamped to [0, 1].
inline ImageBuffer bicubic_upsample(const ImageBuffer &img, int k) {
    validate(img);
    if (k < 2) fail_validation("upsampling factor must be an integer >= 2");
    const int w = img.width, h = img.height, ch = img.channels;
    const int ow = w * k, oh = h * k;

    struct Taps {
        std::array<int, 4> idx;
        std::array<double, 4> wt;
    };
    auto taps = [k](int n_out, int n_in) {
        std::vector<Taps> out(static_cast<std::size_t>(n_out));
        for (int i = 0; i < n_out; ++i) {
            const double s = upsample_source_coord(i, k);
            const int i0 = static_cast<int>(std::floor(s));
            const double t = s - i0;
            for (int m = 0; m < 4; ++m) {
                out[i].idx[m] = std::clamp(i0 - 1 + m, 0, n_in - 1);
                out[i].wt[m] = cubic_weight(t - (m - 1));
            }
        }
        return out;
    };
    const auto tx = taps(ow, w);
    const auto ty = taps(oh, h);

    std::vector<double> tmp(static_cast<std::size_t>(ow) * h * ch);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            for (int c = 0; c < ch; ++c) {
                double s = 0.0;
                for (int m = 0; m < 4; ++m) s += tx[x].wt[m] * img.at(tx[x].idx[m], y, c);
                tmp[(static_cast<std::size_t>(y) * ow + x) * ch + c] = s;
            }
        }
    }
    ImageBuffer out(ow, oh, ch);
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            for (int c = 0; c < ch; ++c) {
                double s = 0.0;
                for (int m = 0; m < 4; ++m) {
                    s += ty[y].wt[m] * tmp[(static_cast<std::size_t>(ty[y].idx[m]) * ow + x) * ch + c];
                }
                out.at(x, y, c) = std::clamp(s, 0.0, 1.0);
            }
        }
    }
    return out;
}

/// Externally supplied perceptual metric. Returning nullopt marks a provider failure.
struct PerceptualHook {
    std::string provider;
    std::function<std::optional<double>(const ImageBuffer &, const ImageBuffer &)> fn;

    explicit operator bool() const { return static_cast<bool>(fn); }
};

struct LossResult {
    double value = 0.0;
    double mse = 0.0;
    std::optional<double> perceptual;
    bool perceptual_skipped = true;
};

/// MSE + lambda * perceptual; the perceptual term is skipped (and flagged)
/// without a hook or when the hook fails.
inline LossResult gs_loss(const ImageBuffer &rendered, const ImageBuffer &gt, double lambda = kPerceptualWeight,
                          const PerceptualHook &hook = {}) {
    LossResult r;
    r.mse = mse(rendered, gt);
    r.value = r.mse;
    if (hook) {
        r.perceptual = hook.fn(rendered, gt);
        if (r.perceptual) {
            r.value += lambda * *r.perceptual;
            r.perceptual_skipped = false;
        }
    }
    return r;
}

inline constexpr const char *kFlagPerceptualSkipped = "perceptual-skipped";
inline constexpr const char *kFlagProviderFailed = "provider-failed";

struct MetricsRow {
    int view = -1;  // -1 for averages
    int scale = 1;  // 0 for the all-scale average
    int width = 0;
    int height = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::optional<double> lpips;
    std::string label;
    std::vector<std::string> flags;

    long long pixel_count() const { return static_cast<long long>(width) * height; }
};

struct MetricsReport {
    std::string provider;  // empty without a perceptual hook
    std::vector<MetricsRow> rows;
    std::vector<MetricsRow> averages;

    const MetricsRow *average_for_scale(int scale) const {
        for (const auto &r : averages) {
            if (r.scale == scale) return &r;
        }
        return nullptr;
    }
};

inline std::string scale_label(int scale) {
    if (scale == 0) return "Average";
    return scale == 1 ? "Standard" : "HRRC";
}

/// Scores one rendered/reference pair.
inline MetricsRow score_pair(const ImageBuffer &rendered, const ImageBuffer &reference, const PerceptualHook &hook) {
    MetricsRow row;
    row.width = rendered.width;
    row.height = rendered.height;
    row.psnr = psnr(rendered, reference);
    row.ssim = ssim(rendered, reference);
    if (hook) {
        row.lpips = hook.fn(rendered, reference);
        if (!row.lpips) row.flags.emplace_back(kFlagProviderFailed);
    } else {
        row.flags.emplace_back(kFlagPerceptualSkipped);
    }
    return row;
}

namespace detail {

inline MetricsRow average_rows(const std::vector<const MetricsRow *> &rows, int scale) {
    MetricsRow avg;
    avg.scale = scale;
    avg.label = scale_label(scale);
    if (rows.empty()) return avg;
    double lp = 0.0;
    bool all_lp = true;
    std::vector<std::string> flags;
    for (const auto *r : rows) {
        avg.psnr += r->psnr;
        avg.ssim += r->ssim;
        if (r->lpips) {
            lp += *r->lpips;
        } else {
            all_lp = false;
        }
        for (const auto &f : r->flags) {
            if (std::find(flags.begin(), flags.end(), f) == flags.end()) flags.push_back(f);
        }
    }
    const double n = static_cast<double>(rows.size());
    avg.psnr /= n;
    avg.ssim /= n;
    if (all_lp) avg.lpips = lp / n;
    avg.flags = flags;
    if (scale != 0) {
        avg.width = rows.front()->width;
        avg.height = rows.front()->height;
    }
    return avg;
}

}  // namespace detail

/// Builds per-scale and overall average rows from per-view rows.
inline void finalize_averages(MetricsReport &report, const std::vector<int> &scales) {
    report.averages.clear();
    std::vector<const MetricsRow *> all;
    for (int k : scales) {
        std::vector<const MetricsRow *> sel;
        for (const auto &r : report.rows) {
            if (r.scale == k) sel.push_back(&r);
        }
        report.averages.push_back(detail::average_rows(sel, k));
    }
    for (const auto &a : report.averages) all.push_back(&a);
    if (scales.size() > 1) report.averages.push_back(detail::average_rows(all, 0));
}

/// HRRC evaluation over views and integer scales.
inline MetricsReport hrrc_eval(const SurfelScene &scene, const std::vector<Camera> &cameras,
                               const std::vector<ImageBuffer> &gt_images, const std::vector<int> &scales,
                               const render::RenderSettings &settings = {}, const PerceptualHook &hook = {}) {
    if (cameras.size() != gt_images.size()) fail_validation("camera and ground-truth lists differ in length");
    if (cameras.empty()) fail_validation("no views to evaluate");
    if (scales.empty()) fail_validation("no scales to evaluate");
    for (int k : scales) {
        if (k < 1) fail_validation("scales must be positive integers");
    }
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        const auto &gt = gt_images[v];
        if (gt.width != cameras[v].width() || gt.height != cameras[v].height() || gt.channels != 3) {
            fail_validation("ground-truth image does not match its camera resolution");
        }
    }
    MetricsReport report;
    report.provider = hook ? hook.provider : std::string();
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        for (int k : scales) {
            const Camera cam = k == 1 ? cameras[v] : scale_camera(cameras[v], k);
            const auto out = render::render(scene, cam, settings);
            const ImageBuffer reference = k == 1 ? gt_images[v] : bicubic_upsample(gt_images[v], k);
            MetricsRow row = score_pair(out.color, reference, hook);
            row.view = static_cast<int>(v);
            row.scale = k;
            row.label = scale_label(k);
            report.rows.push_back(std::move(row));
        }
    }
    finalize_averages(report, scales);
    return report;
}

}  // namespace surfsplat::metrics
