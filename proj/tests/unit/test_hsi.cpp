#include "doctest.h"

#include <cmath>
#include <cstring>
#include <fstream>

#include "fixtures.hpp"
#include "spectragen/hsi/io.hpp"
#include "spectragen/hsi/processing.hpp"
#include "spectragen/numerics/error.hpp"

using namespace spectragen;
using namespace spectragen::hsi;

namespace {

// Independent scalar interpolation: linear scan for the bracketing pair.
double interpolate_scalar(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        if (x >= xs[i] && x <= xs[i + 1]) {
            const double t = (x - xs[i]) / (xs[i + 1] - xs[i]);
            return ys[i] + t * (ys[i + 1] - ys[i]);
        }
    }
    return xs.size() == 1 ? ys[0] : NAN;
}

void write_envi(const std::filesystem::path& dir, const HsiCube& cube, const std::string& interleave) {
    std::ofstream hdr(dir / "scene.hdr");
    hdr << "ENVI\ndescription = {synthetic}\nsamples = " << cube.width() << "\nlines = " << cube.height()
        << "\nbands = " << cube.bands() << "\nheader offset = 0\nfile type = ENVI Standard\ndata type = 4\n"
        << "interleave = " << interleave << "\nbyte order = 0\nwavelength = {\n";
    for (std::size_t i = 0; i < cube.bands(); ++i) hdr << (i ? ",\n " : " ") << cube.wavelengths()[i];
    hdr << "}\n";
    std::ofstream raw(dir / "scene.img", std::ios::binary);
    for (double v : cube.values().data()) {
        const float f = static_cast<float>(v);
        raw.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
}

}  // namespace

TEST_CASE("HSC round trip preserves header fields and values bit-exactly") {
    const auto dir = testing::scratch_dir("hsc_roundtrip");
    auto cube = testing::random_cube(8, 8, {410.0, 500.5, 620.25, 700.0, 950.125}, 11);
    write_cube(cube, dir / "c.hsc");
    auto back = read_cube(dir / "c.hsc");
    CHECK(back.height() == 8);
    CHECK(back.width() == 8);
    CHECK(back.wavelengths() == cube.wavelengths());
    CHECK(back.values() == cube.values());

    std::ifstream in(dir / "c.hsc", std::ios::binary);
    char magic[8];
    in.read(magic, 8);
    CHECK(std::memcmp(magic, "HSCUBE\0\1", 8) == 0);
}

TEST_CASE("HSC reader rejects inconsistent headers and payloads") {
    const auto dir = testing::scratch_dir("hsc_bad");
    auto write_raw = [&](const std::string& header, std::size_t floats) {
        std::ofstream out(dir / "bad.hsc", std::ios::binary);
        out.write(kHscMagic, 8);
        const auto len = static_cast<std::uint32_t>(header.size());
        out.write(reinterpret_cast<const char*>(&len), 4);
        out << header;
        std::vector<float> zeros(floats);
        out.write(reinterpret_cast<const char*>(zeros.data()), static_cast<std::streamsize>(floats * 4));
    };
    std::string wl9 = "[400,410,420,430,440,450,460,470,480]";
    write_raw(R"({"height":2,"width":2,"bands":10,"wavelengths_nm":)" + wl9 + R"(,"dtype":"f32le","layout":"bsq"})", 40);
    CHECK_THROWS_AS(read_cube(dir / "bad.hsc"), DataError);

    write_raw(R"({"height":2,"width":2,"bands":1,"wavelengths_nm":[500],"dtype":"f32le","layout":"bsq"})", 3);
    CHECK_THROWS_AS(read_cube(dir / "bad.hsc"), DataError);

    write_raw(R"({"height":2,"width":2,"bands":1,"wavelengths_nm":[500],"dtype":"f32le","layout":"bil"})", 4);
    CHECK_THROWS_AS(read_cube(dir / "bad.hsc"), DataError);

    write_raw(R"({"height":2,"width":)", 4);
    CHECK_THROWS_AS(read_cube(dir / "bad.hsc"), DataError);

    std::ofstream(dir / "junk.hsc") << "not a cube at all";
    CHECK_THROWS_AS(read_cube(dir / "junk.hsc"), DataError);
}

TEST_CASE("ENVI subset: bsq accepted, bil rejected") {
    const auto dir = testing::scratch_dir("envi");
    auto cube = testing::random_cube(3, 4, {450.0, 550.0, 650.0}, 12);
    write_envi(dir, cube, "bsq");
    auto back = read_cube(dir / "scene.hdr");
    CHECK(back.values() == cube.values());
    CHECK(back.wavelengths() == cube.wavelengths());
    CHECK(back.height() == 3);
    CHECK(back.width() == 4);

    write_envi(dir, cube, "bil");
    CHECK_THROWS_AS(read_cube(dir / "scene.hdr"), DataError);
}

TEST_CASE("cube invariants") {
    CHECK_THROWS_AS(HsiCube({500.0, 400.0}, DenseArray({2, 2, 2})), DataError);
    CHECK_THROWS_AS(HsiCube({500.0}, DenseArray({2, 2, 2})), DataError);
    DenseArray bad({1, 1, 1});
    bad[0] = NAN;
    CHECK_THROWS(HsiCube({500.0}, bad));
}

TEST_CASE("align_wavelengths: identity on the target grid and exact on affine spectra") {
    const auto grid = default_wavelength_grid();
    REQUIRE(grid.size() == 48);
    CHECK(grid.front() == 400.0);
    CHECK(grid.back() == 1000.0);
    CHECK(grid[1] - grid[0] == doctest::Approx(600.0 / 47.0));

    auto on_grid = testing::random_cube(4, 3, grid, 13);
    auto same = align_wavelengths(on_grid, grid);
    CHECK(same.values() == on_grid.values());
    CHECK(align_wavelengths(same, grid).values() == same.values());

    // 128 bands spanning 343-1018 nm, per-pixel affine spectra.
    const auto src_grid = uniform_grid(343.0, 1018.0, 128);
    RandomSource rng(14);
    DenseArray v({128, 5, 6});
    std::vector<double> slope(30), offset(30);
    for (std::size_t p = 0; p < 30; ++p) {
        slope[p] = (rng.uniform() - 0.5) * 1e-3;
        offset[p] = 0.5 + 0.2 * (rng.uniform() - 0.5);
    }
    for (std::size_t b = 0; b < 128; ++b)
        for (std::size_t p = 0; p < 30; ++p) v[b * 30 + p] = slope[p] * src_grid[b] + offset[p];
    HsiCube affine(src_grid, v);
    auto aligned = align_wavelengths(affine, grid);
    CHECK(aligned.bands() == 48);
    double worst_affine = 0.0, worst_oracle = 0.0;
    for (std::size_t p = 0; p < 30; ++p) {
        std::vector<double> ys(128);
        for (std::size_t b = 0; b < 128; ++b) ys[b] = v[b * 30 + p];
        for (std::size_t t = 0; t < 48; ++t) {
            const double got = aligned.values()[t * 30 + p];
            worst_affine = std::max(worst_affine, std::abs(got - (slope[p] * grid[t] + offset[p])));
            worst_oracle = std::max(worst_oracle, std::abs(got - interpolate_scalar(src_grid, ys, grid[t])));
        }
    }
    CHECK(worst_affine <= 1e-7);
    CHECK(worst_oracle <= 1e-12);
}

TEST_CASE("align_wavelengths: no extrapolation, partial coverage is flagged") {
    auto narrow = testing::random_cube(2, 2, uniform_grid(450.0, 900.0, 20), 15);
    CHECK_THROWS_AS(align_wavelengths(narrow, default_wavelength_grid()), DataError);
    auto result = align_to_covered_grid(narrow, default_wavelength_grid());
    CHECK(result.partial);
    CHECK(result.cube.wavelengths().front() >= 450.0);
    CHECK(result.cube.wavelengths().back() <= 900.0);
    auto wide = testing::random_cube(2, 2, uniform_grid(343.0, 1018.0, 30), 16);
    CHECK_FALSE(align_to_covered_grid(wide, default_wavelength_grid()).partial);
}

TEST_CASE("crop_patches: counts follow floor((extent - size) / stride) + 1") {
    auto grid = make_patch_grid(2517, 2335, 256, 128);
    CHECK(grid.rows == 18);
    CHECK(grid.cols == 17);
    CHECK(grid.origins.size() == 306);
    CHECK(make_patch_grid(256, 256, 256, 128).origins.size() == 1);
    CHECK(make_patch_grid(384, 384, 256, 128).origins.size() == 4);
    CHECK_THROWS_AS(make_patch_grid(100, 300, 128, 64), DataError);

    RandomSource rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t h = 1 + rng.uniform_index(300), w = 1 + rng.uniform_index(300);
        const std::size_t s = 1 + rng.uniform_index(std::min(h, w)), d = 1 + rng.uniform_index(64);
        auto g = make_patch_grid(h, w, s, d);
        CHECK(g.origins.size() == ((h - s) / d + 1) * ((w - s) / d + 1));
        for (const auto& o : g.origins) {
            CHECK(o.y + s <= h);
            CHECK(o.x + s <= w);
            CHECK(o.y % d == 0);
            CHECK(o.x % d == 0);
        }
    }
}

TEST_CASE("crop_patches: non-overlapping patches reassemble the covered region") {
    auto cube = testing::random_cube(21, 17, {500.0, 600.0}, 18);
    auto set = crop_patches(cube, 5, 5);
    CHECK(set.patches.size() == 4 * 3);
    DenseArray rebuilt({2, 20, 15});
    for (std::size_t i = 0; i < set.patches.size(); ++i) {
        const auto o = set.grid.origins[i];
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t y = 0; y < 5; ++y)
                for (std::size_t x = 0; x < 5; ++x) rebuilt.at(b, o.y + y, o.x + x) = set.patches[i].at(b, y, x);
    }
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t y = 0; y < 20; ++y)
            for (std::size_t x = 0; x < 15; ++x) CHECK(rebuilt.at(b, y, x) == cube.at(b, y, x));
}

TEST_CASE("extract_rgb: exact targets, argmin oracle, and tie rule") {
    auto exact = testing::random_cube(2, 2, {400.0, 450.0, 500.0, 550.0, 600.0, 650.0, 700.0}, 19);
    auto rgb = extract_rgb(exact);
    CHECK(rgb.source_bands == std::array<std::size_t, 3>{5, 3, 1});
    CHECK(rgb.cube.wavelengths() == std::vector<double>{450.0, 550.0, 650.0});
    CHECK(rgb.cube.at(2, 1, 0) == exact.at(5, 1, 0));

    const auto grid = default_wavelength_grid();
    auto cube48 = testing::random_cube(2, 2, grid, 20);
    auto rgb48 = extract_rgb(cube48);
    for (std::size_t i = 0; i < 3; ++i) {
        std::size_t best = 0;
        for (std::size_t b = 0; b < grid.size(); ++b) {
            if (std::abs(grid[b] - kRgbTargetsNm[i]) < std::abs(grid[best] - kRgbTargetsNm[i])) best = b;
        }
        CHECK(rgb48.source_bands[i] == best);
    }
    CHECK(rgb48.source_bands == std::array<std::size_t, 3>{20, 12, 4});

    // 640 and 660 are equidistant from 650.
    auto tied = testing::random_cube(1, 1, {440.0, 460.0, 540.0, 560.0, 640.0, 660.0}, 21);
    auto rgb_tied = extract_rgb(tied);
    CHECK(rgb_tied.source_bands == std::array<std::size_t, 3>{4, 2, 0});

    auto gap = testing::random_cube(1, 1, {500.0, 600.0, 700.0}, 22);
    CHECK_THROWS_AS(extract_rgb(gap), DataError);
}

TEST_CASE("degrade: identity at sigma 0, reproducible noise, area downsampling") {
    auto cube = testing::random_cube(8, 8, {450.0, 550.0, 650.0}, 23);
    DegradationSpec none{.kind = DegradationKind::gaussian_noise, .sigma = 0.0, .seed = 1};
    CHECK(degrade(cube, none).values() == cube.values());

    DegradationSpec noise{.kind = DegradationKind::gaussian_noise, .sigma = 0.2, .seed = 99};
    auto a = degrade(cube, noise);
    auto b = degrade(cube, noise);
    CHECK(a.values() == b.values());
    for (double v : a.values().data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    noise.seed = 100;
    CHECK_FALSE(degrade(cube, noise).values() == a.values());

    HsiCube flat({500.0, 600.0}, DenseArray({2, 16, 12}, 0.3));
    auto small = degrade(flat, {.kind = DegradationKind::downsample, .factor = 4});
    CHECK(small.height() == 4);
    CHECK(small.width() == 3);
    for (double v : small.values().data()) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));
    CHECK_THROWS_AS(degrade(flat, {.kind = DegradationKind::downsample, .factor = 3}), DataError);
    HsiCube odd({500.0}, DenseArray({1, 10, 10}, 0.3));
    CHECK_THROWS_AS(degrade(odd, {.kind = DegradationKind::downsample, .factor = 4}), DataError);
    CHECK_THROWS_AS(degrade(odd, {.kind = DegradationKind::gaussian_noise, .sigma = -1.0}), DataError);
}

TEST_CASE("degrade: sigma 0.2 noise statistics on a zero cube") {
    HsiCube zero({500.0, 600.0, 700.0, 800.0}, DenseArray({4, 500, 500}));
    auto noisy = degrade(zero, {.kind = DegradationKind::gaussian_noise, .sigma = 0.2, .seed = 7, .clamp = false});
    const double n = static_cast<double>(noisy.values().size());
    REQUIRE(n == 1e6);
    double mean = 0.0;
    for (double v : noisy.values().data()) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : noisy.values().data()) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / (n - 1.0));
    CHECK(std::abs(mean) <= 3.0 * 0.2 / std::sqrt(n));
    CHECK(std::abs(sd - 0.2) <= 0.02 * 0.2);
}
