// SPDX-License-Identifier: Apache-2.0

/// \file io.hpp
/// \brief Readers and writers for surfel scenes (binary PLY), float maps (PFM),
/// 8-bit images (PNG), camera descriptors and metric reports.
///
/// All multi-byte binary values are little-endian.

#pragma once

#include "surfsplat/core.hpp"
#include "surfsplat/metrics.hpp"

#include <Eigen/SVD>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace surfsplat::io {

// ---------------------------------------------------------------------------
// Byte helpers

namespace detail {

template <typename T>
T byteswap_if_big(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

inline void put_f32(std::string &buf, float v) {
    const auto u = byteswap_if_big(std::bit_cast<std::uint32_t>(v));
    char b[4];
    std::memcpy(b, &u, 4);
    buf.append(b, 4);
}

inline float get_f32(const char *p, bool little = true) {
    std::uint32_t u;
    std::memcpy(&u, p, 4);
    const bool swap = (std::endian::native == std::endian::little) != little;
    if (swap) u = ((u & 0xffu) << 24) | ((u & 0xff00u) << 8) | ((u >> 8) & 0xff00u) | (u >> 24);
    return std::bit_cast<float>(u);
}

inline std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_io("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path &path, const std::string &bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_io("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail_io("failed writing '" + path.string() + "'");
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PLY surfel scenes

inline constexpr int kSceneFormatVersion = 1;

enum class PlyFault { MalformedHeader, UnknownProperty, CountMismatch };

class PlyError : public Error {
public:
    PlyError(PlyFault fault, const std::string &what) : Error(ErrorKind::Validation, what), fault_(fault) {}
    PlyFault fault() const noexcept { return fault_; }

private:
    PlyFault fault_;
};

struct SceneFileHeader {
    int version = kSceneFormatVersion;
    std::size_t count = 0;
    int sh_degree = 0;
    std::vector<std::string> properties;
};

/// Vertex property names, in file order, for an SH degree.
inline std::vector<std::string> scene_properties(int sh_degree) {
    std::vector<std::string> p = {"x",       "y",       "z",     "rot_0",   "rot_1",  "rot_2",
                                  "rot_3",   "scale_u", "scale_v", "opacity", "f_dc_0", "f_dc_1",
                                  "f_dc_2"};
    const int rest = 3 * (sh_coeff_count(sh_degree) - 1);
    for (int i = 0; i < rest; ++i) p.push_back("f_rest_" + std::to_string(i));
    return p;
}

/// Serializes a scene. f_rest_* is channel-major: all red coefficients, then
/// green, then blue, matching common Gaussian-splatting tools.
inline std::string encode_scene(const SurfelScene &scene) {
    validate(scene);
    const int degree = scene.surfels.empty() ? 0 : scene.surfels.front().sh_degree;
    for (const auto &s : scene.surfels) {
        if (s.sh_degree != degree) fail_validation("all surfels in a scene file must share one SH degree");
    }
    const auto props = scene_properties(degree);
    std::ostringstream hdr;
    hdr << "ply\nformat binary_little_endian 1.0\n";
    hdr << "comment surfsplat format_version " << kSceneFormatVersion << "\n";
    hdr << "comment surfsplat sh_degree " << degree << "\n";
    for (const auto &[k, v] : scene.metadata) {
        if (k.find_first_of("=\n\r") != std::string::npos || v.find_first_of("\n\r") != std::string::npos) {
            fail_validation("scene metadata keys/values must be single-line and keys must not contain '='");
        }
        hdr << "comment meta " << k << "=" << v << "\n";
    }
    hdr << "element vertex " << scene.surfels.size() << "\n";
    for (const auto &p : props) hdr << "property float " << p << "\n";
    hdr << "end_header\n";

    std::string buf = hdr.str();
    const int k = sh_coeff_count(degree);
    buf.reserve(buf.size() + scene.surfels.size() * props.size() * 4);
    for (const auto &s : scene.surfels) {
        for (float v : s.position) detail::put_f32(buf, v);
        for (float v : s.rotation) detail::put_f32(buf, v);
        detail::put_f32(buf, s.scale_u);
        detail::put_f32(buf, s.scale_v);
        detail::put_f32(buf, s.opacity);
        for (int c = 0; c < 3; ++c) detail::put_f32(buf, s.sh[c]);
        for (int c = 0; c < 3; ++c) {
            for (int j = 1; j < k; ++j) detail::put_f32(buf, s.sh[3 * j + c]);
        }
    }
    return buf;
}

inline void write_scene(const std::filesystem::path &path, const SurfelScene &scene) {
    detail::write_file(path, encode_scene(scene));
}

/// Parses the header; `body_offset` receives the first byte after end_header.
inline SceneFileHeader parse_scene_header(const std::string &bytes, std::size_t &body_offset,
                                          std::map<std::string, std::string> *metadata = nullptr) {
    auto malformed = [](const std::string &why) { throw PlyError(PlyFault::MalformedHeader, "malformed PLY header: " + why); };
    SceneFileHeader h;
    h.sh_degree = -1;
    h.version = -1;
    std::size_t pos = 0;
    bool have_element = false, ended = false;
    int line_no = 0;
    while (pos < bytes.size()) {
        const auto nl = bytes.find('\n', pos);
        if (nl == std::string::npos) malformed("unterminated header");
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++line_no;
        if (line_no == 1) {
            if (line != "ply") malformed("missing 'ply' magic");
            continue;
        }
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "format") {
            std::string fmt, ver;
            ls >> fmt >> ver;
            if (fmt != "binary_little_endian" || ver != "1.0") malformed("unsupported format '" + fmt + " " + ver + "'");
        } else if (kw == "comment") {
            std::string tag;
            ls >> tag;
            if (tag == "surfsplat") {
                std::string key;
                int value = 0;
                if (!(ls >> key >> value)) malformed("bad surfsplat comment");
                if (key == "format_version") h.version = value;
                if (key == "sh_degree") h.sh_degree = value;
            } else if (tag == "meta" && metadata) {
                std::string rest;
                std::getline(ls, rest);
                if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
                const auto eq = rest.find('=');
                if (eq != std::string::npos) (*metadata)[rest.substr(0, eq)] = rest.substr(eq + 1);
            }
        } else if (kw == "obj_info") {
            continue;
        } else if (kw == "element") {
            std::string name;
            long long count = -1;
            ls >> name >> count;
            if (have_element || name != "vertex" || count < 0) malformed("expected a single 'element vertex <count>'");
            h.count = static_cast<std::size_t>(count);
            have_element = true;
        } else if (kw == "property") {
            std::string type, name;
            ls >> type >> name;
            if (!have_element) malformed("property before element");
            if (type == "list") throw PlyError(PlyFault::UnknownProperty, "unknown PLY property: list property");
            if (type != "float" && type != "float32") {
                throw PlyError(PlyFault::UnknownProperty, "unknown PLY property: '" + name + "' of type " + type);
            }
            h.properties.push_back(name);
        } else if (kw == "end_header") {
            ended = true;
            break;
        } else {
            malformed("unexpected line '" + line + "'");
        }
    }
    if (!ended) malformed("missing end_header");
    if (!have_element) malformed("missing vertex element");
    if (h.version != kSceneFormatVersion) malformed("unrecognized or missing format version");
    if (h.sh_degree < 0 || h.sh_degree > 3) malformed("missing or invalid sh_degree comment");
    const auto expected = scene_properties(h.sh_degree);
    for (const auto &p : h.properties) {
        if (std::find(expected.begin(), expected.end(), p) == expected.end()) {
            throw PlyError(PlyFault::UnknownProperty, "unknown PLY property: '" + p + "'");
        }
    }
    if (h.properties != expected) malformed("vertex properties missing or out of order");
    body_offset = pos;
    return h;
}

inline SurfelScene decode_scene(const std::string &bytes) {
    std::size_t off = 0;
    SurfelScene scene;
    const auto h = parse_scene_header(bytes, off, &scene.metadata);
    const std::size_t stride = h.properties.size() * 4;
    const std::size_t body = bytes.size() - off;
    if (body != h.count * stride) {
        throw PlyError(PlyFault::CountMismatch, "PLY vertex count mismatch: header declares " +
                                                    std::to_string(h.count) + " vertices, body holds " +
                                                    std::to_string(body / stride) + " (" +
                                                    std::to_string(body % stride) + " stray bytes)");
    }
    const int k = sh_coeff_count(h.sh_degree);
    scene.surfels.resize(h.count);
    const char *p = bytes.data() + off;
    for (auto &s : scene.surfels) {
        auto next = [&p] {
            const float v = detail::get_f32(p);
            p += 4;
            return v;
        };
        for (auto &v : s.position) v = next();
        for (auto &v : s.rotation) v = next();
        s.scale_u = next();
        s.scale_v = next();
        s.opacity = next();
        s.sh_degree = h.sh_degree;
        s.sh.assign(3 * static_cast<std::size_t>(k), 0.f);
        for (int c = 0; c < 3; ++c) s.sh[c] = next();
        for (int c = 0; c < 3; ++c) {
            for (int j = 1; j < k; ++j) s.sh[3 * j + c] = next();
        }
    }
    return scene;
}

inline SurfelScene read_scene(const std::filesystem::path &path) { return decode_scene(detail::read_file(path)); }

// ---------------------------------------------------------------------------
// PFM

/// Encodes a 1- or 3-channel grid ("Pf"/"PF"), little-endian, rows bottom-up.
inline std::string encode_pfm(int width, int height, int channels, const std::vector<double> &data) {
    if (channels != 1 && channels != 3) fail_validation("PFM holds 1 or 3 channels");
    if (width <= 0 || height <= 0 || data.size() != static_cast<std::size_t>(width) * height * channels) {
        fail_validation("PFM data does not match its dimensions");
    }
    std::string buf = (channels == 3 ? "PF\n" : "Pf\n") + std::to_string(width) + " " + std::to_string(height) +
                      "\n-1.0\n";
    buf.reserve(buf.size() + data.size() * 4);
    for (int y = height - 1; y >= 0; --y) {
        for (std::size_t i = 0; i < static_cast<std::size_t>(width) * channels; ++i) {
            const float f = static_cast<float>(data[static_cast<std::size_t>(y) * width * channels + i]);
            if (!std::isfinite(f)) fail_validation("PFM payload contains non-finite values");
            detail::put_f32(buf, f);
        }
    }
    return buf;
}

struct PfmData {
    int width = 0, height = 0, channels = 0;
    std::vector<double> data;  // row-major, top row first
};

inline PfmData decode_pfm(const std::string &bytes) {
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        const auto start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        return bytes.substr(start, pos - start);
    };
    const std::string magic = token();
    PfmData out;
    if (magic == "PF") {
        out.channels = 3;
    } else if (magic == "Pf") {
        out.channels = 1;
    } else {
        fail_validation("bad PFM magic '" + magic.substr(0, 8) + "'");
    }
    double scale = 0.0;
    try {
        out.width = std::stoi(token());
        out.height = std::stoi(token());
        scale = std::stod(token());
    } catch (const std::exception &) {
        fail_validation("malformed PFM header");
    }
    if (out.width <= 0 || out.height <= 0 || scale == 0.0 || !std::isfinite(scale)) {
        fail_validation("malformed PFM header");
    }
    ++pos;  // single whitespace after the scale
    const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
    if (bytes.size() < pos || bytes.size() - pos != n * 4) fail_validation("PFM payload size does not match header");
    const bool little = scale < 0.0;
    out.data.resize(n);
    const std::size_t row = static_cast<std::size_t>(out.width) * out.channels;
    const char *p = bytes.data() + pos;
    for (int y = out.height - 1; y >= 0; --y) {
        for (std::size_t i = 0; i < row; ++i, p += 4) {
            const float f = detail::get_f32(p, little);
            if (!std::isfinite(f)) fail_validation("PFM payload contains non-finite values");
            out.data[static_cast<std::size_t>(y) * row + i] = f;
        }
    }
    return out;
}

inline void write_pfm(const std::filesystem::path &path, const ImageBuffer &img) {
    detail::write_file(path, encode_pfm(img.width, img.height, img.channels, img.data));
}

/// Masked depth pixels are stored as 0.
inline void write_pfm(const std::filesystem::path &path, const DepthMap &depth) {
    std::vector<double> v(depth.values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = depth.valid[i] ? depth.values[i] : 0.0;
    detail::write_file(path, encode_pfm(depth.width, depth.height, 1, v));
}

inline ImageBuffer read_pfm_image(const std::filesystem::path &path) {
    auto d = decode_pfm(detail::read_file(path));
    ImageBuffer img;
    img.width = d.width;
    img.height = d.height;
    img.channels = d.channels;
    img.data = std::move(d.data);
    return img;
}

/// Pixels with value <= 0 are masked.
inline DepthMap read_pfm_depth(const std::filesystem::path &path) {
    const auto d = decode_pfm(detail::read_file(path));
    if (d.channels != 1) fail_validation("depth PFM must have one channel");
    DepthMap depth(d.width, d.height);
    for (std::size_t i = 0; i < d.data.size(); ++i) {
        depth.values[i] = d.data[i] > 0.0 ? d.data[i] : 0.0;
        depth.valid[i] = d.data[i] > 0.0 ? 1 : 0;
    }
    return depth;
}

// ---------------------------------------------------------------------------
// PNG (8-bit, no gamma transform)

inline std::uint8_t quantize_u8(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

inline void write_png(const std::filesystem::path &path, const ImageBuffer &img) {
    validate(img);
    std::unique_ptr<std::FILE, int (*)(std::FILE *)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
    if (!fp) fail_io("cannot open '" + path.string() + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail_io("libpng initialization failed");
    }
    std::vector<std::uint8_t> bytes(img.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize_u8(img.data[i]);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) rows[y] = bytes.data() + static_cast<std::size_t>(y) * img.width * img.channels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail_io("failed writing PNG '" + path.string() + "'");
    }
    const int type = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_RGBA;
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline ImageBuffer read_png(const std::filesystem::path &path) {
    std::unique_ptr<std::FILE, int (*)(std::FILE *)> fp(std::fopen(path.string().c_str(), "rb"), &std::fclose);
    if (!fp) fail_io("cannot open '" + path.string() + "' for reading");
    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        fail_validation("'" + path.string() + "' is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail_io("libpng initialization failed");
    }
    ImageBuffer img;
    std::vector<std::uint8_t> bytes;
    std::vector<png_bytep> rows;
    bool unsupported = false;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail_validation("corrupt PNG '" + path.string() + "'");
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int type = png_get_color_type(png, info);
    if (depth == 16) {
        unsupported = true;
    } else {
        if (type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        if (type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
        png_read_update_info(png, info);
        img.width = static_cast<int>(png_get_image_width(png, info));
        img.height = static_cast<int>(png_get_image_height(png, info));
        img.channels = png_get_channels(png, info);
        bytes.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
        rows.resize(static_cast<std::size_t>(img.height));
        for (int y = 0; y < img.height; ++y) {
            rows[y] = bytes.data() + static_cast<std::size_t>(y) * img.width * img.channels;
        }
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    if (unsupported) fail_validation("unsupported PNG bit depth 16 in '" + path.string() + "'");
    if (img.channels != 1 && img.channels != 3 && img.channels != 4) {
        fail_validation("unsupported PNG channel layout in '" + path.string() + "'");
    }
    img.data.resize(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

// ---------------------------------------------------------------------------
// Camera descriptor

inline constexpr double kRotationTolerance = 1e-4;

inline std::string encode_camera(const Camera &cam) {
    std::ostringstream os;
    os << "# surfsplat camera v1\n";
    os << "fx " << detail::fmt_double(cam.fx()) << "\n";
    os << "fy " << detail::fmt_double(cam.fy()) << "\n";
    os << "cx " << detail::fmt_double(cam.cx()) << "\n";
    os << "cy " << detail::fmt_double(cam.cy()) << "\n";
    os << "width " << cam.width() << "\n";
    os << "height " << cam.height() << "\n";
    os << "world_to_camera";
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) os << " " << detail::fmt_double(cam.world_to_camera()(r, c));
    }
    os << "\n";
    return os.str();
}

inline void write_camera(const std::filesystem::path &path, const Camera &cam) {
    detail::write_file(path, encode_camera(cam));
}

/// Parses a descriptor. Rotations off SO(3) by at most 1e-4 are projected
/// back onto it and reported in `warnings`; larger drift or det -1 is rejected.
inline Camera decode_camera(const std::string &text, std::vector<std::string> *warnings = nullptr) {
    std::istringstream in(text);
    std::string line;
    std::map<std::string, std::vector<double>> fields;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        std::vector<double> vals;
        std::string tok;
        while (ls >> tok) {
            try {
                std::size_t used = 0;
                vals.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception &) {
                fail_validation("camera field '" + key + "' has a non-numeric value '" + tok + "'");
            }
        }
        fields[key] = vals;
    }
    auto scalar = [&](const char *k) {
        auto it = fields.find(k);
        if (it == fields.end()) fail_validation(std::string("camera descriptor is missing field '") + k + "'");
        if (it->second.size() != 1) fail_validation(std::string("camera field '") + k + "' needs one value");
        return it->second[0];
    };
    const double fx = scalar("fx"), fy = scalar("fy"), cx = scalar("cx"), cy = scalar("cy");
    const double w = scalar("width"), h = scalar("height");
    if (w != std::floor(w) || h != std::floor(h)) fail_validation("camera width/height must be integers");
    auto it = fields.find("world_to_camera");
    if (it == fields.end()) fail_validation("camera descriptor is missing field 'world_to_camera'");
    if (it->second.size() != 16) fail_validation("world_to_camera needs 16 values");
    Mat4 m;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) m(r, c) = it->second[static_cast<std::size_t>(r * 4 + c)];
    }
    if (!m.allFinite()) fail_validation("world_to_camera contains non-finite values");
    Mat3 rot = m.topLeftCorner<3, 3>();
    if (rot.determinant() <= 0.0) fail_validation("camera rotation has non-positive determinant (reflection)");
    const double err = orthonormality_error(rot);
    if (err > kRotationTolerance) {
        fail_validation("camera rotation is not orthonormal (error " + detail::fmt_double(err) + ")");
    }
    if (err > 1e-12) {
        Eigen::JacobiSVD<Mat3> svd(rot, Eigen::ComputeFullU | Eigen::ComputeFullV);
        rot = svd.matrixU() * svd.matrixV().transpose();
        m.topLeftCorner<3, 3>() = rot;
        if (err > 1e-9 && warnings) {
            warnings->push_back("camera rotation renormalized (orthonormality error " + detail::fmt_double(err) + ")");
        }
    }
    return Camera(fx, fy, cx, cy, static_cast<int>(w), static_cast<int>(h), m);
}

inline Camera read_camera(const std::filesystem::path &path, std::vector<std::string> *warnings = nullptr) {
    return decode_camera(detail::read_file(path), warnings);
}

// ---------------------------------------------------------------------------
// Metric reports: line-oriented "key=value" records under a versioned header.

inline constexpr const char *kReportHeader = "# surfsplat-metrics v1";

namespace detail {

inline std::string encode_row(const char *kind, const metrics::MetricsRow &r) {
    std::ostringstream os;
    os << kind << " view=" << (r.view < 0 ? std::string("all") : std::to_string(r.view))
       << " scale=" << (r.scale == 0 ? std::string("all") : std::to_string(r.scale)) << " width=" << r.width
       << " height=" << r.height << " pixels=" << r.pixel_count() << " psnr=" << fmt_double(r.psnr)
       << " ssim=" << fmt_double(r.ssim) << " lpips=" << (r.lpips ? fmt_double(*r.lpips) : std::string("null"))
       << " label=" << r.label << " flags=";
    if (r.flags.empty()) {
        os << "-";
    } else {
        for (std::size_t i = 0; i < r.flags.size(); ++i) os << (i ? "," : "") << r.flags[i];
    }
    return os.str();
}

inline metrics::MetricsRow decode_row(std::istringstream &ls) {
    metrics::MetricsRow r;
    std::string kv;
    while (ls >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) fail_validation("malformed report field '" + kv + "'");
        const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        if (k == "view") {
            r.view = v == "all" ? -1 : std::stoi(v);
        } else if (k == "scale") {
            r.scale = v == "all" ? 0 : std::stoi(v);
        } else if (k == "width") {
            r.width = std::stoi(v);
        } else if (k == "height") {
            r.height = std::stoi(v);
        } else if (k == "psnr") {
            r.psnr = std::stod(v);
        } else if (k == "ssim") {
            r.ssim = std::stod(v);
        } else if (k == "lpips") {
            if (v != "null") r.lpips = std::stod(v);
        } else if (k == "label") {
            r.label = v;
        } else if (k == "flags") {
            if (v != "-") {
                std::istringstream fs(v);
                std::string f;
                while (std::getline(fs, f, ',')) r.flags.push_back(f);
            }
        }
    }
    return r;
}

}  // namespace detail

inline std::string encode_report(const metrics::MetricsReport &report) {
    std::ostringstream os;
    os << kReportHeader << "\n";
    os << "provider " << (report.provider.empty() ? std::string("none") : report.provider) << "\n";
    for (const auto &r : report.rows) os << detail::encode_row("row", r) << "\n";
    for (const auto &r : report.averages) os << detail::encode_row("avg", r) << "\n";
    return os.str();
}

inline metrics::MetricsReport decode_report(const std::string &text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kReportHeader) fail_validation("unrecognized metrics report header");
    metrics::MetricsReport rep;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string kind;
        if (!(ls >> kind)) continue;
        try {
            if (kind == "provider") {
                std::string p;
                std::getline(ls >> std::ws, p);
                rep.provider = p == "none" ? std::string() : p;
            } else if (kind == "row") {
                rep.rows.push_back(detail::decode_row(ls));
            } else if (kind == "avg") {
                rep.averages.push_back(detail::decode_row(ls));
            } else {
                fail_validation("unknown report record '" + kind + "'");
            }
        } catch (const std::invalid_argument &) {
            fail_validation("malformed report line '" + line + "'");
        } catch (const std::out_of_range &) {
            fail_validation("malformed report line '" + line + "'");
        }
    }
    return rep;
}

inline void write_report(const std::filesystem::path &path, const metrics::MetricsReport &report) {
    detail::write_file(path, encode_report(report));
}

inline metrics::MetricsReport read_report(const std::filesystem::path &path) {
    return decode_report(detail::read_file(path));
}

}  // namespace surfsplat::io
