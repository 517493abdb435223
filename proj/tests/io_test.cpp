// SPDX-License-Identifier: Apache-2.0

#include "support.hpp"

#include <gtest/gtest.h>
#include <png.h>

#include <fstream>

using namespace surfsplat;
using testsupport::TempDir;

namespace {

void dump(const std::filesystem::path &p, const std::string &bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

io::PlyFault ply_fault_of(const std::string &bytes) {
    try {
        io::decode_scene(bytes);
    } catch (const io::PlyError &e) {
        return e.fault();
    }
    ADD_FAILURE() << "decode accepted a corrupt file";
    return io::PlyFault::MalformedHeader;
}

void write_png16(const std::filesystem::path &path, int w, int h) {
    std::FILE *fp = std::fopen(path.string().c_str(), "wb");
    ASSERT_NE(fp, nullptr);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    png_init_io(png, fp);
    png_set_IHDR(png, info, w, h, 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(2 * static_cast<std::size_t>(w), 0x7f);
    for (int y = 0; y < h; ++y) png_write_row(png, row.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace

TEST(PlyScene, RandomRoundTrips) {
    std::mt19937 rng(101);
    std::uniform_int_distribution<int> count(0, 40), degree(0, 3);
    for (int i = 0; i < 1000; ++i) {
        const auto scene = testsupport::random_surfel_scene(rng, count(rng), degree(rng));
        const auto back = io::decode_scene(io::encode_scene(scene));
        ASSERT_TRUE(testsupport::same_surfels(scene, back)) << "case " << i;
    }
}

TEST(PlyScene, FileRoundTripWithMetadata) {
    TempDir dir;
    std::mt19937 rng(5);
    auto scene = testsupport::random_surfel_scene(rng, 17, 1);
    scene.metadata["source"] = "synth plane";
    scene.metadata["multiplier_u"] = "1";
    io::write_scene(dir / "s.ply", scene);
    const auto back = io::read_scene(dir / "s.ply");
    EXPECT_TRUE(testsupport::same_surfels(scene, back));
    EXPECT_EQ(back.metadata, scene.metadata);
}

TEST(PlyScene, LargeScene) {
    std::mt19937 rng(9);
    const auto scene = testsupport::random_surfel_scene(rng, 100000, 0);
    const auto bytes = io::encode_scene(scene);
    EXPECT_TRUE(testsupport::same_surfels(scene, io::decode_scene(bytes)));
}

TEST(PlyScene, HeaderLayout) {
    SurfelScene scene;
    scene.surfels.resize(2);
    const auto bytes = io::encode_scene(scene);
    EXPECT_EQ(bytes.rfind("ply\nformat binary_little_endian 1.0\n", 0), 0u);
    EXPECT_NE(bytes.find("element vertex 2\n"), std::string::npos);
    EXPECT_NE(bytes.find("property float x\nproperty float y\nproperty float z\nproperty float rot_0\n"),
              std::string::npos);
    EXPECT_EQ(io::scene_properties(3).size(), 13u + 45u);
    EXPECT_EQ(io::scene_properties(1).back(), "f_rest_8");
}

TEST(PlyScene, RestCoefficientsChannelMajor) {
    Surfel s;
    s.sh_degree = 1;
    s.sh = {0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9};  // coefficient-major in memory
    SurfelScene scene;
    scene.surfels = {s};
    const auto bytes = io::encode_scene(scene);
    const char *body = bytes.data() + bytes.size() - 9 * 4;
    const std::array<float, 9> expected{1, 4, 7, 2, 5, 8, 3, 6, 9};
    for (int i = 0; i < 9; ++i) EXPECT_EQ(io::detail::get_f32(body + 4 * i), expected[i]);
}

TEST(PlyScene, MalformedHeader) {
    SurfelScene scene;
    scene.surfels.resize(1);
    const auto good = io::encode_scene(scene);
    EXPECT_EQ(ply_fault_of("plx\n" + good.substr(4)), io::PlyFault::MalformedHeader);
    std::string ascii = good;
    ascii.replace(ascii.find("binary_little_endian"), 20, "ascii");
    EXPECT_EQ(ply_fault_of(ascii), io::PlyFault::MalformedHeader);
    std::string noend = good.substr(0, good.find("end_header"));
    EXPECT_EQ(ply_fault_of(noend), io::PlyFault::MalformedHeader);
    std::string noversion = good;
    noversion.erase(noversion.find("comment surfsplat format_version"), 35);
    EXPECT_EQ(ply_fault_of(noversion), io::PlyFault::MalformedHeader);
    std::string missing = good;
    missing.erase(missing.find("property float opacity\n"), 23);
    EXPECT_EQ(ply_fault_of(missing), io::PlyFault::MalformedHeader);
}

TEST(PlyScene, UnknownProperty) {
    SurfelScene scene;
    scene.surfels.resize(1);
    std::string bytes = io::encode_scene(scene);
    bytes.replace(bytes.find("property float opacity"), 22, "property float alpha_x");
    EXPECT_EQ(ply_fault_of(bytes), io::PlyFault::UnknownProperty);
    bytes = io::encode_scene(scene);
    bytes.replace(bytes.find("property float opacity"), 22, "property uchar opacity");
    EXPECT_EQ(ply_fault_of(bytes), io::PlyFault::UnknownProperty);
}

TEST(PlyScene, CountMismatch) {
    std::mt19937 rng(3);
    const auto bytes = io::encode_scene(testsupport::random_surfel_scene(rng, 10, 0));
    EXPECT_EQ(ply_fault_of(bytes.substr(0, bytes.size() - 4)), io::PlyFault::CountMismatch);
    EXPECT_EQ(ply_fault_of(bytes.substr(0, bytes.size() - 52)), io::PlyFault::CountMismatch);
    EXPECT_EQ(ply_fault_of(bytes + std::string(52, '\0')), io::PlyFault::CountMismatch);
}

TEST(PlyScene, ThirdPartyReader) {
    const std::string python = SURFSPLAT_PYTHON, checker = SURFSPLAT_PLY_CHECK;
    if (python.empty() || testsupport::run(python + " -c 'import plyfile'").status != 0) {
        GTEST_SKIP() << "python plyfile unavailable";
    }
    TempDir dir;
    std::mt19937 rng(12);
    io::write_scene(dir / "s.ply", testsupport::random_surfel_scene(rng, 321, 2));
    const auto r = testsupport::run(python + " " + checker + " " + (dir / "s.ply").string() + " 321");
    EXPECT_EQ(r.status, 0) << r.out;
}

TEST(Pfm, RandomRoundTrips) {
    std::mt19937 rng(202);
    std::uniform_int_distribution<int> dim(1, 24), ch(0, 1);
    std::uniform_real_distribution<double> val(-1e3, 1e3);
    for (int i = 0; i < 1000; ++i) {
        ImageBuffer img(dim(rng), dim(rng), ch(rng) ? 3 : 1);
        for (auto &v : img.data) v = double(float(val(rng)));
        const auto d = io::decode_pfm(io::encode_pfm(img.width, img.height, img.channels, img.data));
        ASSERT_EQ(d.width, img.width);
        ASSERT_EQ(d.height, img.height);
        ASSERT_EQ(d.channels, img.channels);
        ASSERT_EQ(d.data, img.data) << "case " << i;
    }
}

TEST(Pfm, RowsStoredBottomUp) {
    const auto bytes = io::encode_pfm(1, 2, 1, {1.0, 2.0});
    const char *body = bytes.data() + bytes.size() - 8;
    EXPECT_EQ(io::detail::get_f32(body), 2.0f);
    EXPECT_EQ(io::detail::get_f32(body + 4), 1.0f);
}

TEST(Pfm, DepthMaskedAsZero) {
    TempDir dir;
    DepthMap d(3, 2, 1.5);
    d.mask(2, 1);
    io::write_pfm(dir / "d.pfm", d);
    const auto back = io::read_pfm_depth(dir / "d.pfm");
    EXPECT_EQ(back.values, std::vector<double>({1.5, 1.5, 1.5, 1.5, 1.5, 0.0}));
    EXPECT_FALSE(back.is_valid(2, 1));
    EXPECT_EQ(back.valid_count(), 5u);
}

TEST(Pfm, RejectsNonFiniteAndBadInput) {
    EXPECT_THROW(io::encode_pfm(1, 1, 1, {std::nan("")}), Error);
    std::string bytes = io::encode_pfm(2, 1, 1, {1.0, 2.0});
    const float nan = std::nanf("");
    std::memcpy(bytes.data() + bytes.size() - 4, &nan, 4);
    EXPECT_THROW(io::decode_pfm(bytes), Error);
    EXPECT_THROW(io::decode_pfm("P6\n2 1\n-1.0\n12345678"), Error);
    EXPECT_THROW(io::decode_pfm("Pf\n2 1\n-1.0\n1234"), Error);
    TempDir dir;
    io::write_pfm(dir / "rgb.pfm", ImageBuffer(2, 2, 3, 0.5));
    EXPECT_THROW(io::read_pfm_depth(dir / "rgb.pfm"), Error);
    EXPECT_THROW(io::read_pfm_depth(dir / "missing.pfm"), Error);
}

TEST(Pfm, BigEndianAccepted) {
    std::string bytes = "Pf\n1 1\n1.0\n";
    const char be[4] = {0x3f, static_cast<char>(0xc0), 0, 0};  // 1.5f
    bytes.append(be, 4);
    EXPECT_EQ(io::decode_pfm(bytes).data, std::vector<double>{1.5});
}

TEST(Png, RandomRoundTripsAtEightBits) {
    TempDir dir;
    std::mt19937 rng(303);
    std::uniform_int_distribution<int> dim(1, 20), chi(0, 2);
    std::uniform_real_distribution<double> val(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        ImageBuffer img(dim(rng), dim(rng), std::array<int, 3>{1, 3, 4}[chi(rng)]);
        for (auto &v : img.data) v = val(rng);
        io::write_png(dir / "p.png", img);
        const auto back = io::read_png(dir / "p.png");
        ASSERT_EQ(back.width, img.width);
        ASSERT_EQ(back.height, img.height);
        ASSERT_EQ(back.channels, img.channels);
        for (std::size_t j = 0; j < img.data.size(); ++j) {
            ASSERT_LE(std::abs(back.data[j] - img.data[j]), 0.5 / 255.0 + 1e-12) << "case " << i;
        }
        io::write_png(dir / "q.png", back);
        ASSERT_EQ(io::read_png(dir / "q.png").data, back.data);
    }
}

TEST(Png, Quantization) {
    EXPECT_EQ(io::quantize_u8(0.5), 128);
    EXPECT_EQ(io::quantize_u8(0.0), 0);
    EXPECT_EQ(io::quantize_u8(1.0), 255);
    EXPECT_EQ(io::quantize_u8(-0.2), 0);
    EXPECT_EQ(io::quantize_u8(1.7), 255);
    TempDir dir;
    ImageBuffer img(2, 1, 3);
    for (int c = 0; c < 3; ++c) img.at(1, 0, c) = 1.0;
    io::write_png(dir / "bw.png", img);
    const auto back = io::read_png(dir / "bw.png");
    EXPECT_EQ(back.data, img.data);
}

TEST(Png, SixteenBitUnsupported) {
    TempDir dir;
    write_png16(dir / "deep.png", 4, 4);
    try {
        io::read_png(dir / "deep.png");
        FAIL() << "16-bit PNG accepted";
    } catch (const Error &e) {
        EXPECT_NE(std::string(e.what()).find("unsupported"), std::string::npos) << e.what();
    }
}

TEST(Png, NotAPng) {
    TempDir dir;
    dump(dir / "x.png", "definitely not a png");
    EXPECT_THROW(io::read_png(dir / "x.png"), Error);
    EXPECT_THROW(io::read_png(dir / "none.png"), Error);
}

TEST(CameraFile, RandomRoundTrips) {
    std::mt19937 rng(404);
    for (int i = 0; i < 1000; ++i) {
        const Camera cam = testsupport::random_camera(rng);
        std::vector<std::string> warnings;
        const Camera back = io::decode_camera(io::encode_camera(cam), &warnings);
        ASSERT_TRUE(warnings.empty());
        ASSERT_EQ(back.fx(), cam.fx());
        ASSERT_EQ(back.fy(), cam.fy());
        ASSERT_EQ(back.cx(), cam.cx());
        ASSERT_EQ(back.cy(), cam.cy());
        ASSERT_EQ(back.width(), cam.width());
        ASSERT_EQ(back.height(), cam.height());
        ASSERT_LT((back.world_to_camera() - cam.world_to_camera()).cwiseAbs().maxCoeff(), 1e-12) << "case " << i;
    }
}

TEST(CameraFile, IdentityPose) {
    TempDir dir;
    const Camera cam(100, 100, 50, 50, 100, 100);
    io::write_camera(dir / "c.txt", cam);
    const auto back = io::read_camera(dir / "c.txt");
    EXPECT_LT((back.world_to_camera() - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CameraFile, SmallDriftRenormalizedWithWarning) {
    const std::string text =
        "fx 100\nfy 100\ncx 50\ncy 50\nwidth 100\nheight 100\nworld_to_camera 1 1e-5 0 0 0 1 0 0 0 0 1 0 0 0 0 1\n";
    std::vector<std::string> warnings;
    const auto cam = io::decode_camera(text, &warnings);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_LT(orthonormality_error(cam.world_to_camera().topLeftCorner<3, 3>()), 1e-12);
}

TEST(CameraFile, Rejections) {
    const std::string base = "fx 100\nfy 100\ncx 50\ncy 50\nwidth 100\nheight 100\n";
    EXPECT_THROW(io::decode_camera(base + "world_to_camera 1 0 0 0 0 1 0 0 0 0 -1 0 0 0 0 1\n"), Error);
    EXPECT_THROW(io::decode_camera(base + "world_to_camera 1 1e-3 0 0 0 1 0 0 0 0 1 0 0 0 0 1\n"), Error);
    EXPECT_THROW(io::decode_camera(base + "world_to_camera 1 0 0 0 0 1 0 0 0 0 1 0\n"), Error);
    EXPECT_THROW(io::decode_camera(base), Error);
    EXPECT_THROW(io::decode_camera("fx 100\nfy 100\ncx 50\nwidth 100\nheight 100\n"), Error);
    EXPECT_THROW(io::decode_camera("fx abc\n"), Error);
    EXPECT_THROW(io::decode_camera(base + "world_to_camera 1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1\n" + "width 10.5\n"),
                 Error);
}

TEST(Report, RoundTrip) {
    metrics::MetricsReport rep;
    rep.provider = "lpips-alex";
    metrics::MetricsRow a;
    a.view = 0;
    a.scale = 2;
    a.width = 128;
    a.height = 96;
    a.psnr = 27.123456789012345;
    a.ssim = 0.87654321;
    a.lpips = 0.125;
    a.label = "HRRC";
    metrics::MetricsRow b = a;
    b.view = -1;
    b.scale = 0;
    b.lpips.reset();
    b.label = "Average";
    b.flags = {"perceptual_failed", "psnr_capped"};
    rep.rows = {a};
    rep.averages = {b};
    const auto text = io::encode_report(rep);
    EXPECT_EQ(text.rfind("# surfsplat-metrics v1\n", 0), 0u);
    const auto back = io::decode_report(text);
    EXPECT_EQ(back.provider, rep.provider);
    ASSERT_EQ(back.rows.size(), 1u);
    ASSERT_EQ(back.averages.size(), 1u);
    EXPECT_EQ(back.rows[0].psnr, a.psnr);
    EXPECT_EQ(back.rows[0].ssim, a.ssim);
    EXPECT_EQ(back.rows[0].lpips, a.lpips);
    EXPECT_EQ(back.rows[0].width, 128);
    EXPECT_EQ(back.rows[0].label, "HRRC");
    EXPECT_EQ(back.averages[0].view, -1);
    EXPECT_EQ(back.averages[0].scale, 0);
    EXPECT_FALSE(back.averages[0].lpips.has_value());
    EXPECT_EQ(back.averages[0].flags, b.flags);
    EXPECT_THROW(io::decode_report("# other\n"), Error);
    EXPECT_THROW(io::decode_report(std::string(io::kReportHeader) + "\nrow psnr=abc\n"), Error);
}
