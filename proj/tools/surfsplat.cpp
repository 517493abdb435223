// SPDX-License-Identifier: Apache-2.0

// Command-line front end: synth | lift | render | eval.
//
// Exit codes: 0 success, 1 usage error, 2 I/O error, 3 validation error.

#include "surfsplat/surfsplat.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace surfsplat;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kValidation = 3 };

[[noreturn]] void usage_error(const std::string &what) { throw Error(ErrorKind::Usage, what); }

std::vector<double> parse_list(const std::string &text, std::size_t expected, const char *flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception &) {
            usage_error(std::string("bad value '") + text + "' for " + flag);
        }
    }
    if (expected != 0 && out.size() != expected) {
        usage_error(std::string(flag) + " expects " + std::to_string(expected) + " comma-separated numbers");
    }
    return out;
}

std::vector<int> parse_scales(const std::string &text) {
    std::vector<int> out;
    for (double v : parse_list(text, 0, "--scales")) {
        if (v < 1 || v != static_cast<int>(v)) usage_error("--scales takes positive integers");
        out.push_back(static_cast<int>(v));
    }
    if (out.empty()) usage_error("--scales is empty");
    return out;
}

int workers_from_env() {
    const char *env = std::getenv("SURFSPLAT_THREADS");
    if (!env || !*env) return 0;
    try {
        const int n = std::stoi(env);
        if (n > 0) return n;
    } catch (const std::exception &) {
    }
    std::cerr << "warning: ignoring invalid SURFSPLAT_THREADS='" << env << "'\n";
    return 0;
}

struct RenderFlags {
    render::RenderSettings settings;
    std::string background = "0,0,0";

    void add_to(CLI::App *cmd) {
        cmd->add_option("--tau-opa", settings.tau_opa, "Opacity upper bound (1.0 disables forced alpha blending)");
        cmd->add_option("--tau-alpha", settings.tau_alpha, "Alpha normalization threshold (0.1 = training regime)");
        cmd->add_option("--sigma-cutoff", settings.sigma_cutoff, "Gaussian support radius in standard deviations");
        cmd->add_option("--lowpass-px", settings.lowpass_px, "Screen-space low-pass radius in pixels");
        cmd->add_option("--tile-size", settings.tile_size, "Tile edge length in pixels");
        cmd->add_option("--background", background, "Background color r,g,b");
        cmd->add_option("--transmittance-floor", settings.transmittance_floor, "Early-termination transmittance");
        cmd->add_option("--sh-degree", settings.sh_degree_used, "SH degree used for color evaluation");
    }

    render::RenderSettings resolve() {
        const auto bg = parse_list(background, 3, "--background");
        settings.background = {bg[0], bg[1], bg[2]};
        settings.workers = workers_from_env();
        try {
            render::validate(settings);
        } catch (const Error &e) {
            usage_error(e.what());
        }
        return settings;
    }
};

Camera load_camera(const std::string &path) {
    std::vector<std::string> warnings;
    Camera cam = io::read_camera(path, &warnings);
    for (const auto &w : warnings) std::cerr << "warning: " << path << ": " << w << "\n";
    return cam;
}

ImageBuffer load_image(const std::string &path) {
    const auto ext = fs::path(path).extension().string();
    return ext == ".pfm" ? io::read_pfm_image(path) : io::read_png(path);
}

std::vector<double> load_grid(const std::string &path, const DepthMap &depth, const char *what) {
    const auto img = io::read_pfm_image(path);
    if (img.channels != 1 || img.width != depth.width || img.height != depth.height) {
        fail_validation(std::string(what) + " map must be single-channel and match the depth resolution");
    }
    return img.data;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string preset;
    std::string size = "64x64";
    double depth = 2.0;
    std::string tilt = "0,0";
    std::string texture = "checker:8";
    double focal = 0.0;
    std::string center = "0,0,3";
    double radius = 1.0;
    int crease_column = -1;
    double angle = 90.0;
    std::string out;
    bool force = false;
};

int run_synth(const SynthArgs &a) {
    int w = 0, h = 0;
    char x = 0;
    std::istringstream ss(a.size);
    if (!(ss >> w >> x >> h) || x != 'x' || !ss.eof() || w < 3 || h < 3) usage_error("--size expects WxH with W,H >= 3");
    if (a.preset != "plane" && a.preset != "sphere" && a.preset != "corner") {
        usage_error("unknown preset '" + a.preset + "' (expected plane, sphere or corner)");
    }
    synth::Texture tex;
    try {
        tex = synth::parse_texture(a.texture);
    } catch (const Error &e) {
        usage_error(e.what());
    }
    const fs::path dir(a.out);
    const std::vector<std::pair<std::string, fs::path>> files = {{"depth", dir / "depth.pfm"},
                                                                 {"camera", dir / "camera.txt"},
                                                                 {"image", dir / "image.png"},
                                                                 {"normals", dir / "normals.pfm"}};
    if (!a.force) {
        for (const auto &f : files) {
            if (fs::exists(f.second)) fail_io("refusing to overwrite '" + f.second.string() + "' (use --force)");
        }
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail_io("cannot create directory '" + dir.string() + "': " + ec.message());

    std::optional<synth::SynthScene> scene;
    if (a.preset == "plane") {
        const auto t = parse_list(a.tilt, 2, "--tilt");
        scene = synth::synth_plane(w, h, a.depth, {t[0], t[1]}, tex, a.focal);
    } else if (a.preset == "sphere") {
        const auto c = parse_list(a.center, 3, "--center");
        scene = synth::synth_sphere(w, h, Vec3(c[0], c[1], c[2]), a.radius, tex, a.focal);
    } else {
        const int col = a.crease_column < 0 ? w / 2 : a.crease_column;
        scene = synth::synth_corner(w, h, a.depth, col, a.angle, tex, a.focal);
    }

    ImageBuffer normals(w, h, 3);
    for (std::size_t i = 0; i < scene->gt_normals.size(); ++i) {
        for (int c = 0; c < 3; ++c) normals.data[i * 3 + c] = scene->gt_normals[i][c];
    }
    io::write_pfm(files[0].second, scene->depth);
    io::write_camera(files[1].second, scene->camera);
    io::write_png(files[2].second, scene->image);
    io::write_pfm(files[3].second, normals);
    for (const auto &f : files) std::cout << f.first << " " << f.second.string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct LiftArgs {
    std::string depth, camera, image, out;
    std::string multiplier_u, multiplier_v, opacity;
    double max_scale = 0.0;
    bool ablate = false;
    double point_footprint = 0.3;
};

int run_lift(const LiftArgs &a) {
    lift::LiftInputs in{io::read_pfm_depth(a.depth), load_camera(a.camera), load_image(a.image)};
    if (in.rgb.channels == 4) {
        ImageBuffer rgb(in.rgb.width, in.rgb.height, 3);
        for (std::size_t i = 0; i < static_cast<std::size_t>(rgb.width) * rgb.height; ++i) {
            for (int c = 0; c < 3; ++c) rgb.data[i * 3 + c] = in.rgb.data[i * 4 + c];
        }
        in.rgb = std::move(rgb);
    }
    if (in.rgb.width != in.depth.width || in.rgb.height != in.depth.height || in.rgb.channels != 3) {
        fail_validation("image " + std::to_string(in.rgb.width) + "x" + std::to_string(in.rgb.height) +
                        " does not match depth " + std::to_string(in.depth.width) + "x" +
                        std::to_string(in.depth.height) + " (or is not RGB)");
    }
    if (!a.multiplier_u.empty()) in.multiplier_u = load_grid(a.multiplier_u, in.depth, "multiplier-u");
    if (!a.multiplier_v.empty()) in.multiplier_v = load_grid(a.multiplier_v, in.depth, "multiplier-v");
    if (!a.opacity.empty()) in.opacity = load_grid(a.opacity, in.depth, "opacity");

    lift::LiftOptions opt;
    if (a.max_scale > 0.0) {
        opt.scale_cap = true;
        opt.scale_cap_factor = a.max_scale;
    } else if (a.max_scale < 0.0) {
        usage_error("--max-scale must be positive");
    }
    opt.ablate_point_surfels = a.ablate;
    if (!(a.point_footprint > 0.0)) usage_error("--point-footprint must be positive");
    opt.point_surfel_footprint = a.point_footprint;

    auto res = lift::lift(in, opt);
    res.scene.metadata["source_camera"] = fs::path(a.camera).filename().string();
    res.scene.metadata["scale_cap"] = opt.scale_cap ? std::to_string(opt.scale_cap_factor) : "off";
    io::write_scene(a.out, res.scene);

    std::vector<double> scales;
    scales.reserve(res.scene.surfels.size() * 2);
    for (const auto &s : res.scene.surfels) {
        scales.push_back(s.scale_u);
        scales.push_back(s.scale_v);
    }
    std::sort(scales.begin(), scales.end());
    std::cout << "surfels " << res.scene.surfels.size() << "\n";
    std::cout << "degenerate " << res.degenerate_count << "\n";
    std::cout << std::setprecision(6) << "scale min " << scales.front() << " median " << scales[scales.size() / 2]
              << " max " << scales.back() << "\n";
    std::cout << "scale_cap " << (opt.scale_cap ? "on" : "off") << "\n";
    std::cout << "scene " << a.out << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
    std::string scene, camera, out, depth_out, alpha_out;
    double scale = 1.0;
    RenderFlags flags;
};

int run_render(RenderArgs &a) {
    if (!(a.scale > 0.0)) usage_error("--scale must be positive");
    const auto settings = a.flags.resolve();
    const auto scene = io::read_scene(a.scene);
    const Camera base = load_camera(a.camera);
    const Camera cam = scale_camera(base, a.scale);
    const auto out = render::render(scene, cam, settings);
    io::write_png(a.out, out.color);
    std::cout << "image " << a.out << " " << cam.width() << "x" << cam.height() << "\n";
    if (!a.depth_out.empty()) {
        io::write_pfm(a.depth_out, out.depth);
        std::cout << "depth " << a.depth_out << "\n";
    }
    if (!a.alpha_out.empty()) {
        io::write_pfm(a.alpha_out, out.alpha);
        std::cout << "alpha " << a.alpha_out << "\n";
    }
    return kOk;
}

// ---------------------------------------------------------------------------

std::string shell_quote(const std::string &s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

/// Runs `cmd <a.png> <b.png>` and parses one float from its stdout.
metrics::PerceptualHook command_hook(const std::string &cmd) {
    metrics::PerceptualHook hook;
    hook.provider = cmd;
    hook.fn = [cmd](const ImageBuffer &a, const ImageBuffer &b) -> std::optional<double> {
        std::error_code ec;
        const fs::path dir = fs::temp_directory_path(ec) / ("surfsplat-perceptual-" + std::to_string(::getpid()));
        fs::create_directories(dir, ec);
        const fs::path pa = dir / "rendered.png", pb = dir / "reference.png";
        try {
            io::write_png(pa, a);
            io::write_png(pb, b);
        } catch (const Error &e) {
            std::cerr << "warning: perceptual provider input: " << e.what() << "\n";
            return std::nullopt;
        }
        const std::string line = cmd + " " + shell_quote(pa.string()) + " " + shell_quote(pb.string());
        std::FILE *pipe = ::popen(line.c_str(), "r");
        if (!pipe) {
            std::cerr << "warning: cannot start perceptual provider\n";
            return std::nullopt;
        }
        std::string output;
        char buf[256];
        while (std::fgets(buf, sizeof buf, pipe)) output += buf;
        const int status = ::pclose(pipe);
        fs::remove_all(dir, ec);
        if (status != 0) {
            std::cerr << "warning: perceptual provider exited with status " << status << "; lpips set to null\n";
            return std::nullopt;
        }
        try {
            std::size_t used = 0;
            const double v = std::stod(output, &used);
            if (!std::isfinite(v)) throw std::invalid_argument(output);
            return v;
        } catch (const std::exception &) {
            std::cerr << "warning: perceptual provider printed no number; lpips set to null\n";
            return std::nullopt;
        }
    };
    return hook;
}

void print_summary(const metrics::MetricsReport &report, const std::vector<int> &scales) {
    std::vector<const metrics::MetricsRow *> cols;
    for (int k : scales) cols.push_back(report.average_for_scale(k));
    if (const auto *all = report.average_for_scale(0)) cols.push_back(all);
    std::ostringstream head;
    head << std::left << std::setw(8) << "Metric";
    for (const auto *c : cols) {
        const std::string name = c->scale == 0 ? "Average"
                                               : std::to_string(c->width) + "x" + std::to_string(c->height) + " (" +
                                                     c->label + ")";
        head << " | " << std::setw(20) << name;
    }
    std::cout << head.str() << "\n";
    auto line = [&](const char *name, auto get) {
        std::ostringstream os;
        os << std::left << std::setw(8) << name;
        for (const auto *c : cols) os << " | " << std::setw(20) << get(*c);
        std::cout << os.str() << "\n";
    };
    auto num = [](double v, int prec) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(prec) << v;
        return os.str();
    };
    line("PSNR", [&](const metrics::MetricsRow &r) { return num(r.psnr, 3); });
    line("SSIM", [&](const metrics::MetricsRow &r) { return num(r.ssim, 3); });
    line("LPIPS", [&](const metrics::MetricsRow &r) { return r.lpips ? num(*r.lpips, 3) : std::string("null"); });
}

struct EvalArgs {
    std::string scene, report, perceptual_cmd;
    std::vector<std::string> cameras, gts;
    std::string scales = "1,2,4";
    RenderFlags flags;
};

int run_eval(EvalArgs &a) {
    if (a.cameras.size() != a.gts.size()) {
        usage_error("got " + std::to_string(a.cameras.size()) + " --camera but " + std::to_string(a.gts.size()) +
                    " --gt");
    }
    const auto scales = parse_scales(a.scales);
    const auto settings = a.flags.resolve();
    const auto scene = io::read_scene(a.scene);
    std::vector<Camera> cams;
    std::vector<ImageBuffer> gts;
    for (std::size_t i = 0; i < a.cameras.size(); ++i) {
        cams.push_back(load_camera(a.cameras[i]));
        auto gt = load_image(a.gts[i]);
        if (gt.channels == 4) {
            ImageBuffer rgb(gt.width, gt.height, 3);
            for (std::size_t p = 0; p < static_cast<std::size_t>(gt.width) * gt.height; ++p) {
                for (int c = 0; c < 3; ++c) rgb.data[p * 3 + c] = gt.data[p * 4 + c];
            }
            gt = std::move(rgb);
        }
        gts.push_back(std::move(gt));
    }
    metrics::PerceptualHook hook;
    if (!a.perceptual_cmd.empty()) hook = command_hook(a.perceptual_cmd);
    const auto report = metrics::hrrc_eval(scene, cams, gts, scales, settings, hook);
    io::write_report(a.report, report);
    print_summary(report, scales);
    std::cout << "report " << a.report << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"surfsplat: depth-to-surfel lifting, forced-alpha surfel rendering and HRRC evaluation"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    SynthArgs synth_args;
    auto *synth = app.add_subcommand("synth", "Write an analytic scene bundle (depth, camera, image, normals)");
    synth->add_option("--preset", synth_args.preset, "plane | sphere | corner")->required();
    synth->add_option("--size", synth_args.size, "Resolution WxH");
    synth->add_option("--depth", synth_args.depth, "Depth on the optical axis (plane, corner)");
    synth->add_option("--tilt", synth_args.tilt, "Plane slopes tx,ty in z = d + tx*x + ty*y");
    synth->add_option("--texture", synth_args.texture, "constant | gradient | checker:<period>");
    synth->add_option("--focal", synth_args.focal, "Focal length in pixels (0 = image width)");
    synth->add_option("--center", synth_args.center, "Sphere center x,y,z (camera frame)");
    synth->add_option("--radius", synth_args.radius, "Sphere radius");
    synth->add_option("--crease-column", synth_args.crease_column, "Corner crease column (-1 = center)");
    synth->add_option("--angle", synth_args.angle, "Corner angle between the two normals, degrees");
    synth->add_option("--out", synth_args.out, "Output directory")->required();
    synth->add_flag("--force", synth_args.force, "Overwrite existing files");

    LiftArgs lift_args;
    auto *lift = app.add_subcommand("lift", "Lift a depth map and image into a surfel scene (PLY)");
    lift->add_option("--depth", lift_args.depth, "Depth PFM")->required();
    lift->add_option("--camera", lift_args.camera, "Camera descriptor")->required();
    lift->add_option("--image", lift_args.image, "RGB image (PNG or PFM)")->required();
    lift->add_option("--multiplier-u", lift_args.multiplier_u, "Raw u-scale multipliers (1-channel PFM)");
    lift->add_option("--multiplier-v", lift_args.multiplier_v, "Raw v-scale multipliers (1-channel PFM)");
    lift->add_option("--opacity", lift_args.opacity, "Per-pixel opacity (1-channel PFM)");
    lift->add_option("--max-scale", lift_args.max_scale, "Cap scales at K x local median coarse scale (0 = off)");
    lift->add_flag("--ablate-point-surfels", lift_args.ablate, "Identity rotations and isotropic point scales");
    lift->add_option("--point-footprint", lift_args.point_footprint, "Point-surfel scale in pixel footprints");
    lift->add_option("--out", lift_args.out, "Output scene PLY")->required();

    RenderArgs render_args;
    auto *rend = app.add_subcommand("render", "Render a surfel scene through a (scaled) camera");
    rend->add_option("--scene", render_args.scene, "Scene PLY")->required();
    rend->add_option("--camera", render_args.camera, "Camera descriptor")->required();
    rend->add_option("--scale", render_args.scale, "Resolution factor k");
    render_args.flags.add_to(rend);
    rend->add_option("--out", render_args.out, "Color PNG")->required();
    rend->add_option("--depth-out", render_args.depth_out, "Alpha-weighted depth PFM");
    rend->add_option("--alpha-out", render_args.alpha_out, "Accumulated alpha PFM");

    EvalArgs eval_args;
    auto *eval = app.add_subcommand("eval", "HRRC evaluation of a scene against ground-truth views");
    eval->add_option("--scene", eval_args.scene, "Scene PLY")->required();
    eval->add_option("--camera", eval_args.cameras, "Camera descriptor (repeat per view)")->required();
    eval->add_option("--gt", eval_args.gts, "Ground-truth image at scale 1 (repeat per view)")->required();
    eval->add_option("--scales", eval_args.scales, "Comma-separated integer scales");
    eval->add_option("--report", eval_args.report, "Report output path")->required();
    eval->add_option("--perceptual-cmd", eval_args.perceptual_cmd,
                     "Command run as `CMD a.png b.png` that prints one perceptual score");
    eval_args.flags.add_to(eval);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*synth) return run_synth(synth_args);
        if (*lift) return run_lift(lift_args);
        if (*rend) return run_render(render_args);
        if (*eval) return run_eval(eval_args);
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
        case ErrorKind::Usage: return kUsage;
        case ErrorKind::Io: return kIo;
        case ErrorKind::Validation: return kValidation;
        }
    } catch (const fs::filesystem_error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    }
    return kUsage;
}
