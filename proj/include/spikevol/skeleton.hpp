#pragma once

#include <vector>

#include "spikevol/mask.hpp"

namespace spikevol::mask {

/// Thinned foreground. `raster` has the source dimensions and gsd.
struct Skeleton {
    BinaryMask raster;

    std::vector<Pixel> pixels() const;
    std::size_t size() const { return static_cast<std::size_t>(pixel_area(raster)); }
    bool contains(Pixel p) const { return raster.at(p); }
};

/// Ordered 8-connected pixel chain without repeats.
using AxisPath = std::vector<Pixel>;

/// Zhang-Suen two-subiteration parallel thinning run to its fixed point.
/// Pixels outside the raster are treated as background.
Skeleton thin(const BinaryMask& mask);

/// Number of foreground 8-neighbors of p.
int neighbor_count(const BinaryMask& raster, Pixel p);

/// Endpoint (exactly one neighbor) with the smallest row, then column; the
/// topmost-leftmost pixel if the skeleton has no endpoint.
Pixel choose_start(const Skeleton& skeleton);

/// Longest-branch traversal of the skeleton from `start`: take the pixel,
/// consume it and its neighbors, recurse into each neighbor in turn and keep
/// the first longest sub-path. The recursion runs on an explicit stack.
AxisPath main_axis(const Skeleton& skeleton, Pixel start);

/// Removes end branches whose pixel count is below `factor` times the
/// distance-to-background at the junction they hang from. Branch ends are
/// classified by crossing number so staircase corners are not mistaken for
/// junctions.
Skeleton prune_spurs(const Skeleton& skeleton, const BinaryMask& mask, double factor = 2.0);

}  // namespace spikevol::mask
