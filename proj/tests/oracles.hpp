#pragma once

// Independent reference computations shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "spikevol/mask.hpp"
#include "spikevol/mesh.hpp"
#include "spikevol/rng.hpp"
#include "spikevol/skeleton.hpp"

namespace oracle {

using spikevol::mask::BinaryMask;
using spikevol::mask::Pixel;

inline constexpr int kDr[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
inline constexpr int kDc[8] = {0, 1, 1, 1, 0, -1, -1, -1};

/// Pixels whose centers lie within `radius` of (cx, cy), in pixel units.
inline BinaryMask disk(int size, double cx, double cy, double radius, double gsd = 0.05) {
    BinaryMask m(size, size, gsd);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
            if (std::hypot(c + 0.5 - cx, r + 0.5 - cy) <= radius) m.set(r, c);
    return m;
}

inline BinaryMask rect(int width, int height, int r0, int c0, int rows, int cols, double gsd = 0.05) {
    BinaryMask m(width, height, gsd);
    for (int r = r0; r < r0 + rows; ++r)
        for (int c = c0; c < c0 + cols; ++c) m.set(r, c);
    return m;
}

/// Random 8-connected tree whose induced 8-adjacency graph is itself a tree:
/// each new pixel touches exactly one existing pixel. Such rasters are fixed
/// points of Zhang-Suen thinning (no pixel has A(p) = 1 with B(p) >= 2).
inline BinaryMask random_tree(spikevol::Rng& rng, int max_pixels, int size = 64) {
    BinaryMask m(size, size, 1.0);
    std::vector<Pixel> pixels{{size / 2, size / 2}};
    m.set(size / 2, size / 2);
    const int target = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_pixels - 1)));
    int attempts = 0;
    while (static_cast<int>(pixels.size()) < target && attempts < 40 * max_pixels) {
        ++attempts;
        // Grow mostly from recent pixels so branches get long.
        const std::size_t n = pixels.size();
        const std::size_t pick = rng.uniform() < 0.7 ? n - 1 - rng.below(std::min<std::size_t>(n, 4)) : rng.below(n);
        const Pixel base = pixels[pick];
        const int d = static_cast<int>(rng.below(8));
        const Pixel cand{base.row + kDr[d], base.col + kDc[d]};
        if (cand.row < 1 || cand.col < 1 || cand.row >= size - 1 || cand.col >= size - 1 || m.at(cand)) continue;
        int touching = 0;
        for (int k = 0; k < 8; ++k) touching += m.at(cand.row + kDr[k], cand.col + kDc[k]) ? 1 : 0;
        if (touching != 1) continue;
        m.set(cand.row, cand.col);
        pixels.push_back(cand);
    }
    return m;
}

/// Longest simple path (pixel count) starting at `start` in the 8-adjacency
/// graph of the raster, by exhaustive depth-first enumeration.
inline std::size_t longest_path_from(const BinaryMask& raster, Pixel start) {
    std::vector<std::uint8_t> used(static_cast<std::size_t>(raster.width()) * static_cast<std::size_t>(raster.height()), 0);
    auto idx = [&](Pixel p) { return static_cast<std::size_t>(p.row) * static_cast<std::size_t>(raster.width()) + static_cast<std::size_t>(p.col); };
    std::function<std::size_t(Pixel)> dfs = [&](Pixel p) -> std::size_t {
        used[idx(p)] = 1;
        std::size_t best = 0;
        for (int k = 0; k < 8; ++k) {
            const Pixel q{p.row + kDr[k], p.col + kDc[k]};
            if (raster.at(q) && !used[idx(q)]) best = std::max(best, dfs(q));
        }
        used[idx(p)] = 0;
        return best + 1;
    };
    return dfs(start);
}

/// Blob of overlapping random disks and bars; used for thinning properties.
inline BinaryMask random_blob(spikevol::Rng& rng, int size = 96) {
    BinaryMask m(size, size, 0.05);
    const int shapes = 1 + static_cast<int>(rng.below(5));
    for (int s = 0; s < shapes; ++s) {
        const double cx = rng.uniform(10, size - 10), cy = rng.uniform(10, size - 10);
        if (rng.uniform() < 0.5) {
            const double rad = rng.uniform(2, 14);
            for (int r = 0; r < size; ++r)
                for (int c = 0; c < size; ++c)
                    if (std::hypot(c - cx, r - cy) <= rad) m.set(r, c);
        } else {
            const double ang = rng.uniform(0, std::numbers::pi), len = rng.uniform(10, 70), half = rng.uniform(1, 6);
            const double ux = std::cos(ang), uy = std::sin(ang);
            for (int r = 0; r < size; ++r)
                for (int c = 0; c < size; ++c) {
                    const double dx = c - cx, dy = r - cy;
                    const double along = dx * ux + dy * uy, across = -dx * uy + dy * ux;
                    if (std::abs(along) <= len / 2 && std::abs(across) <= half) m.set(r, c);
                }
        }
    }
    // Sprinkle noise so that thinning meets ragged borders and holes.
    const int flips = static_cast<int>(rng.below(40));
    for (int f = 0; f < flips; ++f) {
        const int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(size)));
        const int c = static_cast<int>(rng.below(static_cast<std::uint64_t>(size)));
        m.set(r, c, !m.at(r, c));
    }
    return m;
}

/// Volume of a closed mesh from the inside intervals of +x rays on a y-z grid
/// (a different axis and rule from the library's voxel count).
inline double grid_volume_x(const spikevol::geo::TriangleMesh& mesh, double h) {
    const auto box = spikevol::geo::bounding_box(mesh);
    double inside = 0.0;
    for (double y = box.min.y + h / 2 + 1e-7; y < box.max.y; y += h) {
        for (double z = box.min.z + h / 2 + 1.3e-7; z < box.max.z; z += h) {
            std::vector<double> xs;
            for (const auto& f : mesh.faces) {
                const auto& a = mesh.vertices[f[0]];
                const auto& b = mesh.vertices[f[1]];
                const auto& c = mesh.vertices[f[2]];
                const double d = (b.y - a.y) * (c.z - a.z) - (c.y - a.y) * (b.z - a.z);
                if (d == 0.0) continue;
                const double u = ((y - a.y) * (c.z - a.z) - (c.y - a.y) * (z - a.z)) / d;
                const double v = ((b.y - a.y) * (z - a.z) - (y - a.y) * (b.z - a.z)) / d;
                if (u < 0 || v < 0 || u + v > 1) continue;
                xs.push_back(a.x + u * (b.x - a.x) + v * (c.x - a.x));
            }
            std::sort(xs.begin(), xs.end());
            for (std::size_t i = 0; i + 1 < xs.size(); i += 2) inside += xs[i + 1] - xs[i];
        }
    }
    return inside * h * h;
}

}  // namespace oracle
