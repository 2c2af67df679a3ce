#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spikevol/mask.hpp"
#include "spikevol/mesh.hpp"

namespace spikevol::synth {

/// Parameters of one synthetic spike. Spikelets are ellipsoids placed
/// alternately on the +x / -x side of a smoothed axis through the control
/// points; `asymmetry` stretches each spikelet along x, which widens the
/// frontal (azimuth 90) silhouette relative to the side (azimuth 0) one.
struct SpikePhenotype {
    std::string genotype_id;
    std::vector<Vec3> axis_control_points;    // mm, ordered base to tip
    int spikelet_count = 0;
    std::vector<double> spikelet_radius_profile;  // mm, interpolated base to tip
    double asymmetry = 1.0;        // lateral / depth semi-axis ratio, >= 1
    double elongation = 1.6;       // along-axis semi-axis / radius
    double lateral_offset = 0.35;  // alternating offset, fraction of lateral semi-axis
    double tilt = 0.35;            // rad, spikelets lean outward by this angle
    double rachis_radius = 0.5;    // mm
    double awn_density = 0.0;      // expected awns per spikelet
    double awn_length = 8.0;       // mm
    double awn_width = 0.08;       // mm, side of the triangular cross-section
    double noise_amplitude = 0.0;  // relative jitter of spikelet radius/position
    std::uint64_t rng_seed = 0;
};

struct MeshingOptions {
    double resolution = 0.25;  // mm, marching-tetrahedra grid spacing
};

/// Watertight union of spikelets and rachis (marching tetrahedra on the
/// implicit union), plus one closed prism per awn. Deterministic in
/// (phenotype, options).
geo::TriangleMesh generate_spike(const SpikePhenotype& phenotype, const MeshingOptions& options = {});

/// Spike standing on a support cone, meshed as one implicit union.
geo::TriangleMesh generate_spike_on_cone(const SpikePhenotype& phenotype, const geo::ConeSpec& cone,
                                         const MeshingOptions& options = {});

/// Exact inside test of the analytic spike solid (without awns); for oracles.
bool spike_contains(const SpikePhenotype& phenotype, Vec3 p);

/// Counts voxel centers inside the mesh (parity of +z ray crossings) times
/// resolution^3.
double voxel_volume(const geo::TriangleMesh& mesh, double resolution);

struct ViewSpec {
    double azimuth = 0.0;    // degrees about +z, 0 looks along -x
    double elevation = 0.0;  // degrees above the horizontal
    double gsd = 0.05;       // mm / px
    int width = 0;           // px
    int height = 0;          // px
};

enum class ViewKind { Side, Front, Oblique };

/// Capture order side, front, side, front, oblique, oblique.
std::array<ViewSpec, 6> six_views(double gsd, int width, int height);
ViewKind view_kind(std::size_t index);

/// Orthographic silhouette: a pixel is set iff the ray through its center
/// along the view direction meets the mesh. The projected mesh is centered
/// in the image.
mask::BinaryMask render_mask(const geo::TriangleMesh& mesh, const ViewSpec& view);

/// Flips each pixel independently with probability `rate`.
void add_salt_and_pepper(mask::BinaryMask& mask, double rate, std::uint64_t seed);

// --- datasets --------------------------------------------------------------

struct GenerationConfig {
    int genotypes = 10;
    int spikes_per_genotype = 5;
    int field_spikes_per_genotype = 0;
    double gsd = 0.05;
    double image_width_mm = 40.0;
    double image_height_mm = 140.0;
    double mesh_resolution = 0.3;
    std::array<double, 3> stage_scales = {0.85, 1.0, 0.95};
    double field_awn_density = 1.0;
    double field_noise_rate = 0.001;
    bool write_meshes = true;
    std::uint64_t master_seed = 1;

    int image_width() const;
    int image_height() const;
};

void to_json(nlohmann::json& j, const GenerationConfig& c);
void from_json(const nlohmann::json& j, GenerationConfig& c);

enum class Domain { Indoor, Field };
std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

inline constexpr const char* kStageNames[3] = {"flowering", "post_flowering", "maturity"};

/// One generated spike with its rendered views (6 indoor, 1 field).
struct Sample {
    std::string spike_id;
    std::string genotype;
    std::string stage;
    Domain domain = Domain::Indoor;
    double volume_mm3 = 0.0;
    std::vector<mask::BinaryMask> views;
    std::optional<geo::SpikeTraits> traits;
    SpikePhenotype phenotype;
};

/// Phenotype of spike `index` (0-based over all spikes) for the configuration.
/// Genotype parameters come from (master_seed, genotype); per-spike variation
/// from (master_seed, spike index).
SpikePhenotype phenotype_for(const GenerationConfig& config, int genotype, int replicate, Domain domain);

struct BuildOptions {
    bool with_traits = false;
    bool keep_meshes = false;
};

/// Generates every spike in memory; parallel across spikes, identical to a
/// serial run. Meshes are returned only when requested.
std::vector<Sample> build_samples(const GenerationConfig& config, const BuildOptions& options = {},
                                  std::vector<geo::TriangleMesh>* meshes = nullptr);

}  // namespace spikevol::synth
