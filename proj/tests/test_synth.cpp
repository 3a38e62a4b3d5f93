#include "support.hpp"

#include <aecn/synth.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace aecn;
using namespace aecn::testing;

namespace {

double mean_of(const Tensor& t) {
    double s = 0.0;
    for (float v : t.values()) s += v;
    return s / static_cast<double>(t.size());
}

} // namespace

TEST(Synth, AnomalyRaisesMeanOverHundredSeeds) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        SeededRng rng(seed);
        const auto s = synth_image(rng, 64, true);
        EXPECT_GT(mean_of(s.anomalous), mean_of(s.normal)) << "seed " << seed;
    }
}

// The disk is the only difference, it is round, and its radius respects 8-16% of the size.
TEST(Synth, AnomalyIsOneBoundedDisk) {
    const std::size_t size = 64;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        SeededRng rng(seed + 1000);
        const auto s = synth_image(rng, size, true);
        double cx = 0, cy = 0;
        std::size_t n = 0;
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                const float d = s.anomalous.at(0, y, x) - s.normal.at(0, y, x);
                ASSERT_GE(d, 0.0f);
                ASSERT_LE(d, 0.4f + 1e-6f);
                if (d > 0.0f) {
                    cx += x;
                    cy += y;
                    ++n;
                }
            }
        ASSERT_GT(n, 0u) << "seed " << seed;
        cx /= n;
        cy /= n;
        const double r_max = 0.16 * size + 1.0;
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                if (s.anomalous.at(0, y, x) == s.normal.at(0, y, x)) continue;
                ASSERT_LE(std::hypot(x - cx, y - cy), 2 * r_max) << "seed " << seed;
            }
        // Brightened pixels may be fewer than the disk area where the lung is already near 1.
        EXPECT_LE(static_cast<double>(n), M_PI * r_max * r_max) << "seed " << seed;
    }
}

TEST(Synth, PixelsStayInUnitRange) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SeededRng rng(seed);
        const auto s = synth_image(rng, 32, true);
        for (float v : s.normal.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
        for (float v : s.anomalous.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    }
}

TEST(Synth, LungsBrightBackgroundDark) {
    double lung = 0.0, corner = 0.0;
    const int n = 50;
    for (int seed = 0; seed < n; ++seed) {
        SeededRng rng(seed);
        const Tensor img = synth_image(rng, 64, false).normal;
        lung += 0.5 * (img.at(0, 32, 20) + img.at(0, 32, 43));
        corner += img.at(0, 2, 2);
    }
    EXPECT_NEAR(lung / n, 0.5, 0.06);
    EXPECT_NEAR(corner / n, 0.1, 0.02);
}

TEST(Synth, NormalDrawHasNoAnomaly) {
    SeededRng rng(1);
    EXPECT_EQ(synth_image(rng, 32, false).anomalous.size(), 0u);
}

TEST(GenSynth, WritesImagesAndManifest) {
    TempDir dir("gen");
    const auto m = gen_synth(3, 2, 32, 7, dir.path());
    EXPECT_EQ(m.count(Label::normal), 3u);
    EXPECT_EQ(m.count(Label::anomalous), 2u);
    const auto back = read_manifest(dir / "manifest.csv");
    EXPECT_EQ(back.entries, m.entries);
    for (const auto& e : m.entries) EXPECT_EQ(load_pgm_file(dir / e.path).dims(), (Shape{1, 32, 32}));
}

TEST(GenSynth, EmptyRequestWritesNothing) {
    TempDir dir("gen0");
    const auto m = gen_synth(0, 0, 64, 1, dir / "out");
    EXPECT_TRUE(m.entries.empty());
    EXPECT_TRUE(std::filesystem::is_empty(dir / "out"));
}

TEST(GenSynth, SameSeedSameBytes) {
    TempDir a("gena"), b("genb"), c("genc");
    gen_synth(2, 2, 32, 11, a.path());
    gen_synth(2, 2, 32, 11, b.path());
    gen_synth(2, 2, 32, 12, c.path());
    for (const char* f : {"normal_0000.pgm", "normal_0001.pgm", "anomalous_0001.pgm", "manifest.csv"}) {
        EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    }
    EXPECT_NE(slurp(a / "normal_0000.pgm"), slurp(c / "normal_0000.pgm"));
}

// Image k does not depend on how many images of either class are requested.
TEST(GenSynth, ImagesIndependentOfCounts) {
    TempDir a("gi1"), b("gi2");
    gen_synth(1, 1, 32, 5, a.path());
    gen_synth(4, 3, 32, 5, b.path());
    EXPECT_EQ(slurp(a / "normal_0000.pgm"), slurp(b / "normal_0000.pgm"));
    EXPECT_EQ(slurp(a / "anomalous_0000.pgm"), slurp(b / "anomalous_0000.pgm"));
}

TEST(GenSynth, Errors) {
    TempDir dir("generr");
    EXPECT_THROW(gen_synth(1, 0, 15, 0, dir.path()), ValidationError);
    spit(dir / "file", "x");
    EXPECT_THROW(gen_synth(1, 0, 32, 0, dir / "file" / "sub"), IoError);
}
