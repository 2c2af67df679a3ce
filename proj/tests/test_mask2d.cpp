#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "oracles.hpp"
#include "spikevol/mask.hpp"
#include "spikevol/profile.hpp"
#include "spikevol/skeleton.hpp"
#include "spikevol/synthgen.hpp"
#include "spikevol/types.hpp"

using namespace spikevol;
using mask::BinaryMask;
using mask::Pixel;

namespace {

constexpr double kPi = std::numbers::pi;

int component_count(const BinaryMask& m) {
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(m.width() * m.height()), 0);
    int count = 0;
    for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c) {
            if (!m.at(r, c) || seen[static_cast<std::size_t>(r * m.width() + c)]) continue;
            ++count;
            std::vector<Pixel> stack{{r, c}};
            seen[static_cast<std::size_t>(r * m.width() + c)] = 1;
            while (!stack.empty()) {
                const Pixel p = stack.back();
                stack.pop_back();
                for (int k = 0; k < 8; ++k) {
                    const Pixel q{p.row + oracle::kDr[k], p.col + oracle::kDc[k]};
                    if (!m.at(q) || seen[static_cast<std::size_t>(q.row * m.width() + q.col)]) continue;
                    seen[static_cast<std::size_t>(q.row * m.width() + q.col)] = 1;
                    stack.push_back(q);
                }
            }
        }
    return count;
}

bool has_2x2_block(const BinaryMask& m) {
    for (int r = 0; r + 1 < m.height(); ++r)
        for (int c = 0; c + 1 < m.width(); ++c)
            if (m.at(r, c) && m.at(r + 1, c) && m.at(r, c + 1) && m.at(r + 1, c + 1)) return true;
    return false;
}

mask::Skeleton skeleton_of(const std::vector<Pixel>& pixels, int size = 80) {
    mask::Skeleton s{BinaryMask(size, size, 0.05)};
    for (auto p : pixels) s.raster.set(p.row, p.col);
    return s;
}

mask::SmoothedAxis straight_axis(Vec2 a, Vec2 b, int samples = mask::kProfileSamples) {
    mask::SmoothedAxis axis;
    for (int i = 0; i < samples; ++i) {
        const double t = static_cast<double>(i) / (samples - 1);
        axis.points.push_back(a + t * (b - a));
    }
    axis.length_mm = norm(b - a);
    return axis;
}

}  // namespace

TEST(PixelArea, Basics) {
    EXPECT_EQ(mask::pixel_area(BinaryMask(10, 10, 0.05)), 0);
    EXPECT_EQ(mask::pixel_area(oracle::rect(10, 10, 0, 0, 10, 10)), 100);
    const auto d = synth::render_mask(geo::make_icosphere(5.0, 5), {0, 0, 0.05, 230, 230});
    EXPECT_LT(std::abs(static_cast<double>(mask::pixel_area(d)) - 31416.0) / 31416.0, 0.01);
}

TEST(MeanArea, Basics) {
    const auto a = oracle::rect(20, 20, 0, 0, 10, 10);
    const auto b = oracle::rect(20, 20, 0, 0, 15, 20);
    EXPECT_DOUBLE_EQ(mask::mean_area(std::vector<BinaryMask>{a}), 100.0);
    EXPECT_DOUBLE_EQ(mask::mean_area(std::vector<BinaryMask>{a, b}), 200.0);
    EXPECT_DOUBLE_EQ(mask::mean_area(std::vector<BinaryMask>(6, b)), 300.0);
    EXPECT_THROW(mask::mean_area(std::vector<BinaryMask>{}), DataError);
    EXPECT_THROW(mask::mean_area(std::vector<BinaryMask>{a, oracle::rect(20, 20, 0, 0, 1, 1, 0.1)}), DataError);
}

TEST(Pgm, RoundTripSkipsComments) {
    const auto m = oracle::disk(40, 20, 20, 12);
    const auto path = std::filesystem::temp_directory_path() / "spikevol_test_mask.pgm";
    mask::write_pgm(m, path, "config_hash 0123456789abcdef");
    EXPECT_EQ(mask::read_pgm(path, 0.05), m);
    std::filesystem::remove(path);
    EXPECT_THROW(mask::read_pgm(path, 0.05), DataError);
}

TEST(Thin, LineUnchanged) {
    const auto line = oracle::rect(60, 10, 4, 5, 1, 50);
    EXPECT_EQ(mask::thin(line).raster, line);
}

TEST(Thin, RectangleBecomesOnePixelPath) {
    const auto sk = mask::thin(oracle::rect(120, 20, 7, 10, 5, 100));
    const auto n = sk.size();
    EXPECT_GE(n, 94u);
    EXPECT_LE(n, 100u);
    EXPECT_FALSE(has_2x2_block(sk.raster));
    EXPECT_EQ(mask::thin(sk.raster).raster, sk.raster);
    const auto path = mask::main_axis(sk, mask::choose_start(sk));
    EXPECT_EQ(path.size(), n);
}

TEST(Thin, EmptyInEmptyOut) { EXPECT_EQ(mask::thin(BinaryMask(7, 9, 0.05)).size(), 0u); }

TEST(Thin, IdempotentAndConnectedOnRandomBlobs) {
    Rng rng(11);
    for (int i = 0; i < 40; ++i) {
        const auto blob = oracle::random_blob(rng);
        const auto once = mask::thin(blob);
        EXPECT_EQ(mask::thin(once.raster).raster, once.raster) << i;
        EXPECT_EQ(component_count(once.raster), component_count(blob)) << i;
        for (auto p : once.pixels()) EXPECT_TRUE(blob.at(p));
    }
}

TEST(MainAxis, StraightLine) {
    std::vector<Pixel> px;
    for (int c = 10; c < 60; ++c) px.push_back({40, c});
    const auto sk = skeleton_of(px);
    const auto path = mask::main_axis(sk, {40, 10});
    EXPECT_EQ(path.size(), 50u);
    EXPECT_EQ(path.front(), (Pixel{40, 10}));
    EXPECT_EQ(path.back(), (Pixel{40, 59}));
}

TEST(MainAxis, YShapeFollowsLongerArm) {
    std::vector<Pixel> px;
    for (int r = 5; r <= 25; ++r) px.push_back({r, 40});
    for (int k = 1; k <= 30; ++k) px.push_back({25 + k, 40 - k});
    for (int k = 1; k <= 20; ++k) px.push_back({25 + k, 40 + k});
    const auto sk = skeleton_of(px);
    EXPECT_EQ(mask::thin(sk.raster).raster, sk.raster);
    const Pixel start = mask::choose_start(sk);
    EXPECT_EQ(start, (Pixel{5, 40}));
    const auto path = mask::main_axis(sk, start);
    EXPECT_EQ(path.size(), oracle::longest_path_from(sk.raster, start));
    EXPECT_EQ(path.size(), 51u);
    EXPECT_EQ(path.back(), (Pixel{55, 10}));
}

TEST(MainAxis, SinglePixelAndBadStart) {
    const auto sk = skeleton_of({{3, 3}});
    EXPECT_EQ(mask::main_axis(sk, {3, 3}).size(), 1u);
    EXPECT_THROW(mask::main_axis(sk, {4, 4}), DataError);
}

TEST(MainAxis, PathIsSimpleAndConnected) {
    Rng rng(2);
    for (int i = 0; i < 30; ++i) {
        const mask::Skeleton sk{oracle::random_tree(rng, 150)};
        const auto path = mask::main_axis(sk, mask::choose_start(sk));
        std::set<Pixel> unique(path.begin(), path.end());
        EXPECT_EQ(unique.size(), path.size());
        for (std::size_t k = 1; k < path.size(); ++k) {
            EXPECT_LE(std::abs(path[k].row - path[k - 1].row), 1);
            EXPECT_LE(std::abs(path[k].col - path[k - 1].col), 1);
            EXPECT_TRUE(sk.contains(path[k]));
        }
    }
}

TEST(MainAxis, MatchesExhaustiveLongestPathOnTrees) {
    Rng rng(17);
    for (int i = 0; i < 30; ++i) {
        const auto tree = oracle::random_tree(rng, 200);
        const mask::Skeleton sk{tree};
        ASSERT_EQ(mask::thin(tree).raster, tree) << i;
        const Pixel start = mask::choose_start(sk);
        EXPECT_EQ(mask::main_axis(sk, start).size(), oracle::longest_path_from(tree, start)) << i;
    }
}

TEST(ChooseStart, TieRules) {
    std::vector<Pixel> line;
    for (int c = 5; c < 25; ++c) line.push_back({10, c});
    EXPECT_EQ(mask::choose_start(skeleton_of(line)), (Pixel{10, 5}));

    std::vector<Pixel> ring;
    for (int c = 10; c <= 20; ++c) ring.push_back({10, c}), ring.push_back({20, c});
    for (int r = 11; r < 20; ++r) ring.push_back({r, 10}), ring.push_back({r, 20});
    EXPECT_EQ(mask::choose_start(skeleton_of(ring)), (Pixel{10, 10}));

    EXPECT_EQ(mask::choose_start(skeleton_of({{7, 9}})), (Pixel{7, 9}));
}

TEST(SmoothAxis, StraightPath) {
    mask::AxisPath path;
    for (int c = 0; c < 100; ++c) path.push_back({50, c + 10});
    const auto axis = mask::smooth_axis(path, 0.05);
    EXPECT_EQ(axis.points.size(), 600u);
    EXPECT_GE(axis.length_mm, 4.95 - 1e-9);
    EXPECT_LE(axis.length_mm, 5.00);
}

TEST(SmoothAxis, QuarterCircle) {
    mask::AxisPath path;
    const double R = 200.0;
    for (int i = 0; i <= 4000; ++i) {
        const double a = 0.5 * kPi * i / 4000;
        const Pixel p{static_cast<int>(std::lround(R * std::sin(a))) + 5, static_cast<int>(std::lround(R * std::cos(a))) + 5};
        if (path.empty() || !(path.back() == p)) path.push_back(p);
    }
    const auto axis = mask::smooth_axis(path, 0.05);
    const double expected = 0.5 * kPi * R * 0.05;
    EXPECT_LT(std::abs(axis.length_mm - expected) / expected, 0.02) << axis.length_mm;
}

TEST(SmoothAxis, TooShort) {
    EXPECT_THROW(mask::smooth_axis({{0, 0}, {0, 1}, {0, 2}}, 0.05), DataError);
}

TEST(RadiusProfile, Rectangle) {
    const double g = 0.05;
    const auto m = oracle::rect(300, 80, 20, 20, 40, 260, g);
    const auto prof = mask::radius_profile(m, straight_axis({20 * g, 40 * g}, {280 * g, 40 * g}));
    ASSERT_EQ(prof.radius.size(), 600u);
    for (std::size_t i = 1; i + 1 < prof.radius.size(); ++i) EXPECT_NEAR(prof.radius[i], 1.0, 1e-6);
    EXPECT_EQ(prof.t.front(), 0.0);
    EXPECT_EQ(prof.t.back(), 1.0);
}

TEST(RadiusProfile, AsymmetricHalfWidths) {
    const double g = 0.05;
    const auto m = oracle::rect(200, 100, 50, 10, 40, 180, g);
    const auto prof = mask::radius_profile(m, straight_axis({20 * g, 60 * g}, {180 * g, 60 * g}));
    for (std::size_t i = 1; i + 1 < prof.radius.size(); ++i) {
        EXPECT_NEAR(prof.left[i], 30 * g, 1e-6);
        EXPECT_NEAR(prof.right[i], 10 * g, 1e-6);
        EXPECT_NEAR(prof.radius[i], 20 * g, 1e-6);
    }
}

TEST(RadiusProfile, DiskFollowsChordFormula) {
    const double g = 0.05, R = 100.0, c = 110.0;
    const auto m = oracle::disk(220, c, c, R, g);
    const auto prof = mask::radius_profile(m, straight_axis({(c - R) * g, c * g}, {(c + R) * g, c * g}));
    for (std::size_t i = 0; i < prof.t.size(); ++i) {
        const double s = prof.t[i] * 2 * R;
        if (std::abs(s - R) > 0.8 * R) continue;  // tips: pixel staircase dominates
        EXPECT_NEAR(prof.radius[i], std::sqrt(R * R - (s - R) * (s - R)) * g, g) << i;
    }
    const double v = mask::geometric_volume(prof);
    const double expected = 4.0 / 3.0 * kPi * R * R * R * g * g * g;
    EXPECT_LT(std::abs(v - expected) / expected, 0.02);
}

TEST(RadiusProfile, OffMaskSamplesAreZero) {
    const auto m = oracle::rect(100, 100, 40, 0, 20, 50);
    const auto prof = mask::radius_profile(m, straight_axis({1.0, 2.5}, {4.5, 2.5}));
    EXPECT_GT(prof.radius.front(), 0.0);
    EXPECT_EQ(prof.radius.back(), 0.0);
}

TEST(GeometricVolume, ConstantAndZeroProfiles) {
    mask::RadiusProfile p;
    p.length_mm = 30.0;
    for (int i = 0; i < 600; ++i) {
        p.t.push_back(i / 599.0);
        p.radius.push_back(2.0);
    }
    const double cyl = kPi * 4.0 * 30.0;
    EXPECT_LT(std::abs(mask::geometric_volume(p) - cyl) / cyl, 1e-3);
    std::fill(p.radius.begin(), p.radius.end(), 0.0);
    EXPECT_EQ(mask::geometric_volume(p), 0.0);
}

TEST(GeometricEstimate, CylinderViewsAndMean) {
    const auto cyl = geo::make_cylinder(2.0, 30.0, 128);
    const auto m = synth::render_mask(cyl, {0, 0, 0.05, 200, 700});
    const double expected = kPi * 4.0 * 30.0;
    const std::vector<BinaryMask> six(6, m);
    EXPECT_LT(std::abs(mask::geometric_estimate(six) - expected) / expected, 0.03);

    const auto small = oracle::rect(200, 100, 40, 20, 20, 150);
    const auto big = oracle::rect(200, 100, 30, 20, 40, 150);
    const double vs = mask::view_geometric_volume(small), vb = mask::view_geometric_volume(big);
    EXPECT_NEAR(mask::geometric_estimate(std::vector<BinaryMask>{small, big}), (vs + vb) / 2, 1e-12);
    EXPECT_THROW(mask::geometric_estimate(std::vector<BinaryMask>{}), DataError);
}

TEST(GeometricVolume, TranslationRotationAndScale) {
    const auto base = synth::render_mask(geo::make_cylinder(2.5, 25.0, 96), {0, 0, 0.05, 200, 600});
    const double v0 = mask::view_geometric_volume(base);

    BinaryMask shifted(base.width() + 37, base.height() + 11, base.gsd());
    BinaryMask turned(base.height(), base.width(), base.gsd());
    BinaryMask doubled(base.width() * 2, base.height() * 2, base.gsd() / 2);
    for (int r = 0; r < base.height(); ++r)
        for (int c = 0; c < base.width(); ++c) {
            if (!base.at(r, c)) continue;
            shifted.set(r + 11, c + 37);
            turned.set(c, base.height() - 1 - r);
            for (int dr = 0; dr < 2; ++dr)
                for (int dc = 0; dc < 2; ++dc) doubled.set(2 * r + dr, 2 * c + dc);
        }
    EXPECT_LT(std::abs(mask::view_geometric_volume(shifted) - v0) / v0, 0.02);
    EXPECT_LT(std::abs(mask::view_geometric_volume(turned) - v0) / v0, 0.02);
    EXPECT_LT(std::abs(mask::view_geometric_volume(doubled) - v0) / v0, 0.02);
}

TEST(GeometricVolume, SphereIdentity) {
    for (double r : {3.0, 8.0}) {
        const int px = static_cast<int>(2 * r / 0.05) + 40;
        const auto m = synth::render_mask(geo::make_icosphere(r, 5), {0, 0, 0.05, px, px});
        const double expected = 4.0 / 3.0 * kPi * r * r * r;
        EXPECT_LT(std::abs(mask::view_geometric_volume(m) - expected) / expected, 0.03) << r;
    }
}

TEST(DistanceTransform, MatchesBruteForce) {
    const auto m = oracle::disk(30, 14, 16, 9);
    const auto dt = mask::distance_transform(m);
    for (int r = 0; r < 30; ++r)
        for (int c = 0; c < 30; ++c) {
            double best = m.at(r, c) ? 1e9 : 0.0;
            if (m.at(r, c)) {
                for (int rr = -1; rr <= 30; ++rr)
                    for (int cc = -1; cc <= 30; ++cc)
                        if (!m.at(rr, cc)) best = std::min(best, std::hypot(rr - r, cc - c));
            }
            EXPECT_NEAR(dt[static_cast<std::size_t>(r * 30 + c)], best, 1e-9);
        }
}
