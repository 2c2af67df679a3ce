#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "spikevol/skeleton.hpp"

namespace spikevol::mask {

inline constexpr int kProfileSamples = 600;

/// Subpixel center line in mm (x = column direction, y = row direction).
struct SmoothedAxis {
    std::vector<Vec2> points;
    double length_mm = 0.0;
};

/// Radius function sampled along the axis. Half-widths are kept separately:
/// `left` lies on the +normal side where normal = (-tangent.y, tangent.x).
struct RadiusProfile {
    double length_mm = 0.0;
    std::vector<double> t;       // strictly increasing, 0 .. 1
    std::vector<double> radius;  // mm, (left + right) / 2
    std::vector<double> left;    // mm
    std::vector<double> right;   // mm
};

/// Cubic smoothing spline (lambda by generalized cross-validation) through the
/// pixel centers, parameterized by cumulative chord length and resampled at
/// `samples` parameter values.
SmoothedAxis smooth_axis(const AxisPath& path, double gsd, int samples = kProfileSamples);

/// Resamples a polyline at `samples` points evenly spaced in arc length.
SmoothedAxis resample(const std::vector<Vec2>& polyline, int samples = kProfileSamples);

/// Prolongs both ends along their end tangents up to the silhouette boundary
/// (the skeleton stops roughly one radius short of each tip), then resamples.
SmoothedAxis extend_to_boundary(const BinaryMask& mask, const SmoothedAxis& axis, int samples = kProfileSamples);

/// Orthogonal half-widths at every axis sample. Samples whose center falls on
/// background get radius 0.
RadiusProfile radius_profile(const BinaryMask& mask, const SmoothedAxis& axis);

/// pi * integral of r^2 over the axis by the trapezoidal rule on the profile
/// samples (spacing L / (N - 1)).
double geometric_volume(const RadiusProfile& profile);

struct AxisExtraction {
    SmoothedAxis axis;         // extended to the boundary, kProfileSamples points
    AxisPath main_path;        // pixel chain from the pruned skeleton
    bool used_fallback = false;  // principal-axis line instead of skeleton
};

/// Largest component -> thinning -> spur pruning -> start selection -> main
/// axis -> smoothing -> extension. Falls back to the principal axis through
/// the centroid when the main path has fewer than 4 pixels (e.g. discs).
AxisExtraction extract_axis(const BinaryMask& mask, int samples = kProfileSamples);

/// Geometric volume of one view, mm^3.
double view_geometric_volume(const BinaryMask& mask, RadiusProfile* profile_out = nullptr);

/// Mean of the per-view geometric volumes.
double geometric_estimate(std::span<const BinaryMask> masks);

/// CSV dump: t, radius_mm, left_mm, right_mm.
void write_profile_csv(const RadiusProfile& profile, const std::filesystem::path& path);

}  // namespace spikevol::mask
