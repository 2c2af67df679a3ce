#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "spikevol/dataset.hpp"
#include "spikevol/mask.hpp"
#include "spikevol/mesh.hpp"
#include "spikevol/synthgen.hpp"
#include "spikevol/types.hpp"

using namespace spikevol;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

synth::SpikePhenotype straight_phenotype(std::uint64_t seed = 1) {
    synth::SpikePhenotype ph;
    ph.genotype_id = "T";
    ph.axis_control_points = {{0, 0, 0}, {0, 0, 30}};
    ph.spikelet_count = 8;
    ph.spikelet_radius_profile = {1.5};
    ph.rng_seed = seed;
    return ph;
}

// Volume of the analytic solid by counting grid points inside it.
double implicit_volume(const synth::SpikePhenotype& ph, const geo::BoundingBox& box, double h) {
    std::int64_t inside = 0;
    for (double x = box.min.x - 1 + h / 2; x < box.max.x + 1; x += h)
        for (double y = box.min.y - 1 + h / 2; y < box.max.y + 1; y += h)
            for (double z = box.min.z - 1 + h / 2; z < box.max.z + 1; z += h)
                if (synth::spike_contains(ph, {x, y, z})) ++inside;
    return static_cast<double>(inside) * h * h * h;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

synth::GenerationConfig small_config() {
    synth::GenerationConfig c;
    c.genotypes = 10;
    c.spikes_per_genotype = 5;
    c.gsd = 0.25;
    c.mesh_resolution = 0.6;
    c.write_meshes = false;
    c.master_seed = 3;
    return c;
}

}  // namespace

TEST(GenerateSpike, TubeMatchesImplicitSolid) {
    const auto ph = straight_phenotype();
    const auto mesh = synth::generate_spike(ph, {0.2});
    geo::check_watertight(mesh);
    const double v = geo::mesh_signed_volume(mesh).volume;
    const double ref = implicit_volume(ph, geo::bounding_box(mesh), 0.1);
    EXPECT_LT(std::abs(v - ref) / ref, 0.05) << v << " vs " << ref;
}

TEST(GenerateSpike, SeedIrrelevantWithoutNoise) {
    const auto a = synth::generate_spike(straight_phenotype(1), {0.4});
    const auto b = synth::generate_spike(straight_phenotype(99), {0.4});
    EXPECT_EQ(a.faces, b.faces);
    ASSERT_EQ(a.vertices.size(), b.vertices.size());
    for (std::size_t i = 0; i < a.vertices.size(); ++i) {
        EXPECT_EQ(a.vertices[i].x, b.vertices[i].x);
        EXPECT_EQ(a.vertices[i].z, b.vertices[i].z);
    }
}

TEST(GenerateSpike, DeterministicWithNoise) {
    auto ph = straight_phenotype(7);
    ph.noise_amplitude = 0.05;
    ph.awn_density = 1.0;
    const auto a = synth::generate_spike(ph, {0.4});
    const auto b = synth::generate_spike(ph, {0.4});
    EXPECT_EQ(a.faces, b.faces);
    EXPECT_EQ(geo::raw_signed_volume(a), geo::raw_signed_volume(b));
}

TEST(GenerateSpike, InvalidPhenotypes) {
    auto ph = straight_phenotype();
    ph.spikelet_count = 2;
    EXPECT_THROW(synth::generate_spike(ph), DataError);
    ph = straight_phenotype();
    ph.axis_control_points = {{0, 0, 0}, {0, 0, 0.5}, {0, 0, 30}};
    EXPECT_THROW(synth::generate_spike(ph), DataError);
    ph = straight_phenotype();
    ph.spikelet_radius_profile = {1.0, -1.0};
    EXPECT_THROW(synth::generate_spike(ph), DataError);
}

TEST(GenerateSpike, AwnsAddLittleVolume) {
    synth::GenerationConfig cfg;
    auto ph = synth::phenotype_for(cfg, 1, 0, synth::Domain::Indoor);
    EXPECT_EQ(ph.awn_density, 0.0);
    const double bare = geo::mesh_signed_volume(synth::generate_spike(ph, {0.4})).volume;
    ph.awn_density = 1.0;
    const auto awned = synth::generate_spike(ph, {0.4});
    const double with_awns = geo::mesh_signed_volume(awned).volume;
    EXPECT_GT(with_awns, bare);
    EXPECT_LT((with_awns - bare) / bare, 0.005);
}

TEST(GeneratedSpike, VoxelOracleAgreesWithinOnePercent) {
    synth::GenerationConfig cfg;
    for (int g = 0; g < 2; ++g) {
        const auto mesh = synth::generate_spike(synth::phenotype_for(cfg, g, g, synth::Domain::Indoor), {0.3});
        const double v = geo::mesh_signed_volume(mesh).volume;
        EXPECT_LT(std::abs(synth::voxel_volume(mesh, 0.1) - v) / v, 0.01);
    }
}

TEST(VoxelVolume, UnitCube) {
    EXPECT_NEAR(synth::voxel_volume(geo::make_box({0, 0, 0}, {1, 1, 1}), 0.05), 1.0, 0.005);
}

TEST(VoxelVolume, IcosphereMatchesMeshVolume) {
    const auto s = geo::make_icosphere(10.0, 3);
    const double v = geo::mesh_signed_volume(s).volume;
    EXPECT_LT(std::abs(synth::voxel_volume(s, 0.1) - v) / v, 0.01);
}

TEST(VoxelVolume, EdgeCases) {
    EXPECT_EQ(synth::voxel_volume(geo::TriangleMesh{}, 0.1), 0.0);
    EXPECT_THROW(synth::voxel_volume(geo::make_box({0, 0, 0}, {1, 1, 1}), 2.0), DataError);
    EXPECT_THROW(synth::voxel_volume(geo::make_box({0, 0, 0}, {1, 1, 1}), 0.0), DataError);
}

TEST(RenderMask, SphereGivesDisk) {
    const auto s = geo::make_icosphere(5.0, 5);
    const auto m = synth::render_mask(s, {0, 0, 0.05, 240, 240});
    const double area = static_cast<double>(mask::pixel_area(m));
    EXPECT_LT(std::abs(area - kPi * 100 * 100) / (kPi * 100 * 100), 0.01);
    int lo = m.width(), hi = -1;
    for (int c = 0; c < m.width(); ++c)
        if (m.at(120, c)) lo = std::min(lo, c), hi = std::max(hi, c);
    EXPECT_NEAR((hi - lo + 1) / 2.0, 100.0, 1.0);
}

TEST(RenderMask, CylinderAlongAxisIsDisk) {
    const auto cyl = geo::make_cylinder(3.0, 20.0, 128);
    const auto m = synth::render_mask(cyl, {0, 90, 0.05, 160, 160});
    const double area = static_cast<double>(mask::pixel_area(m));
    EXPECT_LT(std::abs(area - kPi * 60 * 60) / (kPi * 60 * 60), 0.01);
    // Rows and columns through the center have equal extent.
    int rows = 0, cols = 0;
    for (int i = 0; i < 160; ++i) {
        rows += m.at(i, 80) ? 1 : 0;
        cols += m.at(80, i) ? 1 : 0;
    }
    EXPECT_NEAR(rows, cols, 2);
}

TEST(RenderMask, OppositeAzimuthsAgree) {
    synth::GenerationConfig cfg;
    const auto mesh = synth::generate_spike(synth::phenotype_for(cfg, 2, 1, synth::Domain::Indoor), {0.4});
    for (double az : {0.0, 45.0, 90.0}) {
        const auto a = synth::render_mask(mesh, {az, 0, 0.1, 400, 1400});
        const auto b = synth::render_mask(mesh, {az + 180, 0, 0.1, 400, 1400});
        EXPECT_EQ(mask::pixel_area(a), mask::pixel_area(b)) << az;
    }
}

TEST(RenderMask, AreaScalesWithInverseSquareGsd) {
    synth::GenerationConfig cfg;
    const auto mesh = synth::generate_spike(synth::phenotype_for(cfg, 0, 0, synth::Domain::Indoor), {0.4});
    const double coarse = static_cast<double>(mask::pixel_area(synth::render_mask(mesh, {0, 0, 0.1, 400, 1400})));
    const double fine = static_cast<double>(mask::pixel_area(synth::render_mask(mesh, {0, 0, 0.05, 800, 2800})));
    EXPECT_LT(std::abs(fine / coarse - 4.0) / 4.0, 0.02);
}

TEST(RenderMask, FrontWiderThanSide) {
    synth::GenerationConfig cfg;
    for (int g = 0; g < 3; ++g) {
        const auto ph = synth::phenotype_for(cfg, g, 0, synth::Domain::Indoor);
        ASSERT_GT(ph.asymmetry, 1.0);
        const auto mesh = synth::generate_spike(ph, {0.4});
        const auto views = synth::six_views(0.1, 400, 1400);
        EXPECT_GE(mask::pixel_area(synth::render_mask(mesh, views[1])), mask::pixel_area(synth::render_mask(mesh, views[0])));
    }
}

TEST(RenderMask, TooSmallImageNamesRequiredSize) {
    const auto s = geo::make_icosphere(5.0, 2);
    try {
        synth::render_mask(s, {0, 0, 0.05, 100, 100});
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("required image size"), std::string::npos);
    }
}

TEST(Views, CaptureOrder) {
    const auto v = synth::six_views(0.05, 10, 10);
    EXPECT_EQ(v[0].azimuth, 0.0);
    EXPECT_EQ(v[1].azimuth, 90.0);
    EXPECT_EQ(synth::view_kind(0), synth::ViewKind::Side);
    EXPECT_EQ(synth::view_kind(1), synth::ViewKind::Front);
    EXPECT_EQ(synth::view_kind(2), synth::ViewKind::Side);
    EXPECT_EQ(synth::view_kind(3), synth::ViewKind::Front);
    EXPECT_EQ(synth::view_kind(4), synth::ViewKind::Oblique);
    EXPECT_EQ(synth::view_kind(5), synth::ViewKind::Oblique);
}

TEST(SaltAndPepper, RateAndDeterminism) {
    mask::BinaryMask a(200, 200, 0.05), b(200, 200, 0.05);
    synth::add_salt_and_pepper(a, 0.01, 5);
    synth::add_salt_and_pepper(b, 0.01, 5);
    EXPECT_EQ(a, b);
    EXPECT_NEAR(static_cast<double>(mask::pixel_area(a)), 400.0, 80.0);
}

TEST(Phenotypes, DomainsAndStages) {
    synth::GenerationConfig cfg;
    cfg.field_spikes_per_genotype = 1;
    const auto indoor = synth::phenotype_for(cfg, 0, 0, synth::Domain::Indoor);
    const auto field = synth::phenotype_for(cfg, 0, 0, synth::Domain::Field);
    EXPECT_EQ(indoor.awn_density, 0.0);
    EXPECT_EQ(field.awn_density, cfg.field_awn_density);
    EXPECT_GE(indoor.spikelet_count, 3);
    EXPECT_NE(indoor.rng_seed, field.rng_seed);
}

TEST(GenerationConfig, JsonRoundTripAndValidation) {
    const auto c = small_config();
    const nlohmann::json j = c;
    const auto back = j.get<synth::GenerationConfig>();
    EXPECT_EQ(nlohmann::json(back), j);
    EXPECT_EQ(c.image_width(), static_cast<int>(std::ceil(c.image_width_mm / c.gsd)));
    auto bad = j;
    bad["colour"] = 1;
    EXPECT_THROW(bad.get<synth::GenerationConfig>(), ConfigError);
    bad = j;
    bad["genotypes"] = 1;
    EXPECT_THROW(bad.get<synth::GenerationConfig>(), ConfigError);
}

TEST(MakeDataset, CountsAndDeterminism) {
    const auto root = fs::temp_directory_path() / "spikevol_test_dataset";
    fs::remove_all(root);
    const auto cfg = small_config();
    const auto manifest = synth::make_dataset(cfg, root / "a");
    EXPECT_EQ(manifest.rows.size(), 50u);
    std::size_t masks = 0;
    for (const auto& e : fs::directory_iterator(root / "a" / "masks")) masks += e.path().extension() == ".pgm" ? 1 : 0;
    EXPECT_EQ(masks, 300u);
    for (const auto& row : manifest.rows) {
        EXPECT_EQ(row.domain, "indoor");
        EXPECT_EQ(row.views.size(), 6u);
        EXPECT_GT(row.volume_mm3, 0.0);
    }
    synth::make_dataset(cfg, root / "b");
    EXPECT_EQ(read_file(root / "a" / "manifest.csv"), read_file(root / "b" / "manifest.csv"));
    EXPECT_EQ(read_file(root / "a" / manifest.rows[7].views[3]), read_file(root / "b" / manifest.rows[7].views[3]));
    const auto stored = synth::read_dataset_config(root / "a");
    EXPECT_EQ(nlohmann::json(stored), nlohmann::json(cfg));
    fs::remove_all(root);
}

TEST(MakeDataset, FieldSpikesHaveOneViewAndAwns) {
    auto cfg = small_config();
    cfg.genotypes = 2;
    cfg.spikes_per_genotype = 1;
    cfg.field_spikes_per_genotype = 2;
    const auto samples = synth::build_samples(cfg);
    ASSERT_EQ(samples.size(), 6u);
    int field = 0;
    for (const auto& s : samples) {
        if (s.domain == synth::Domain::Field) {
            ++field;
            EXPECT_EQ(s.views.size(), 1u);
            EXPECT_GT(s.phenotype.awn_density, 0.0);
            EXPECT_NE(s.spike_id.find("-F"), std::string::npos);
        } else {
            EXPECT_EQ(s.views.size(), 6u);
            EXPECT_EQ(s.phenotype.awn_density, 0.0);
        }
    }
    EXPECT_EQ(field, 4);
}

TEST(MakeDataset, TooFewGenotypes) {
    auto cfg = small_config();
    cfg.genotypes = 1;
    EXPECT_THROW(synth::make_dataset(cfg, fs::temp_directory_path() / "spikevol_never"), ConfigError);
}
