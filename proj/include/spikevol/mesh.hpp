#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "spikevol/types.hpp"

namespace spikevol::geo {

using Face = std::array<std::uint32_t, 3>;

/// Triangle surface in millimeters. Faces are counter-clockwise when viewed
/// from outside, so the signed volume of a closed mesh is positive.
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;

    bool empty() const { return faces.empty(); }

    /// Appends `other` as an additional (disjoint) component.
    void append(const TriangleMesh& other);
};

struct BoundingBox {
    Vec3 min;
    Vec3 max;
};

BoundingBox bounding_box(const TriangleMesh& mesh);

/// Throws DataError naming one offending edge if some directed edge is not
/// matched by exactly one opposite edge, or if an index is out of range.
void check_watertight(const TriangleMesh& mesh);

struct SignedVolume {
    double volume = 0.0;  // absolute value, mm^3
    bool outward = true;  // false when faces are wound inward
};

/// Signed tetrahedron sum over faces (divergence theorem). Requires a
/// watertight mesh.
SignedVolume mesh_signed_volume(const TriangleMesh& mesh);

/// Same sum without the watertightness check.
double raw_signed_volume(const TriangleMesh& mesh);

TriangleMesh flipped(const TriangleMesh& mesh);

/// Applies p -> rotation * p + translation, rotation given row-major.
TriangleMesh transformed(const TriangleMesh& mesh, const std::array<double, 9>& rotation, Vec3 translation);

std::array<double, 9> rotation_from_euler(double rx, double ry, double rz);

// Primitive shapes used by tests and the generator.
TriangleMesh make_box(Vec3 lo, Vec3 hi);
TriangleMesh make_icosphere(double radius, int subdivisions, Vec3 center = {});
/// Closed cylinder along +z from z0 to z0 + length.
TriangleMesh make_cylinder(double radius, double length, int segments, Vec3 base_center = {});
/// Closed cone with its base disc at base_z and apex above it.
TriangleMesh make_cone(Vec2 center, double base_z, double apex_height, double base_radius, int segments);

// --- cones -----------------------------------------------------------------

struct ConeSpec {
    Vec2 center_xy;
    double base_z = 0.0;
    double apex_height = 0.0;
    double base_radius = 0.0;

    double apex_z() const { return base_z + apex_height; }
    bool contains(Vec3 p) const;
};

inline constexpr double kDefaultConeBand = 2.0;

/// Center from the x/y extents of the vertices whose z lies in
/// [base_z, base_z + z_band]; apex height and radius come from the caller.
ConeSpec locate_cone(const TriangleMesh& mesh, double base_z, double apex_height, double base_radius,
                     double z_band = kDefaultConeBand);

/// Removes the cone solid by clipping everything below the cone apex plane
/// and capping the cut (clip-and-cap). Returns the input unchanged when the
/// cone is degenerate or contains no mesh vertex.
TriangleMesh remove_cone(const TriangleMesh& mesh, const ConeSpec& cone);

inline constexpr const char* kConeRemovalMethod = "clip-and-cap at apex plane";

/// Keeps the part of the mesh above z = level and closes the cut with planar
/// caps (ear-clipped per boundary loop).
TriangleMesh clip_below(const TriangleMesh& mesh, double level);

// --- traits ----------------------------------------------------------------

struct SpikeTraits {
    double length = 0.0;     // mm
    double width = 0.0;      // mm
    double curvature = 0.0;  // arc / chord - 1
};

struct Slice {
    double z = 0.0;
    double area = 0.0;
    Vec2 centroid;
};

/// Cross-section area and centroid of the solid at height z.
Slice slice_at(const TriangleMesh& mesh, double z);

/// Length, width and curvature from `slice_count` z-slices of a watertight
/// spike mesh standing along z.
SpikeTraits extract_traits(const TriangleMesh& mesh, int slice_count = 200);

}  // namespace spikevol::geo
