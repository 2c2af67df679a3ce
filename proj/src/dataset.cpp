#include "spikevol/dataset.hpp"

#include <fstream>

#include "spikevol/ply.hpp"

namespace spikevol::synth {

eval::DatasetManifest make_dataset(const GenerationConfig& config, const std::filesystem::path& dir) {
    if (config.genotypes < 2) throw ConfigError("a dataset needs at least 2 genotypes");
    std::error_code ec;
    std::filesystem::create_directories(dir / "masks", ec);
    if (ec) throw DataError("cannot create " + (dir / "masks").string() + ": " + ec.message());
    if (config.write_meshes) {
        std::filesystem::create_directories(dir / "meshes", ec);
        if (ec) throw DataError("cannot create " + (dir / "meshes").string() + ": " + ec.message());
    }

    std::vector<geo::TriangleMesh> meshes;
    const auto samples = build_samples(config, BuildOptions{false, config.write_meshes}, &meshes);

    const nlohmann::json cfg = config;
    const std::string hash = eval::config_hash(cfg);
    const std::string comment = "config_hash " + hash;

    eval::DatasetManifest manifest;
    manifest.root = dir;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        eval::ManifestRow row;
        row.spike_id = s.spike_id;
        row.genotype = s.genotype;
        row.stage = s.stage;
        row.domain = to_string(s.domain);
        row.volume_mm3 = s.volume_mm3;
        for (std::size_t v = 0; v < s.views.size(); ++v) {
            const std::string rel = "masks/" + s.spike_id + "_v" + std::to_string(v + 1) + ".pgm";
            mask::write_pgm(s.views[v], dir / rel, comment);
            row.views.push_back(rel);
        }
        if (config.write_meshes) geo::save_ply(meshes[i], dir / "meshes" / (s.spike_id + ".ply"), geo::PlyFormat::BinaryLittleEndian,
                                          comment);
        manifest.rows.push_back(std::move(row));
    }
    eval::validate(manifest);
    eval::write_manifest(manifest, dir / "manifest.csv");

    const nlohmann::json meta{{"generation", cfg},
                              {"config_hash", hash},
                              {"spikes", samples.size()},
                              {"awn_model", "triangular prisms at spikelet tips (field domain only)"},
                              {"cone_removal", geo::kConeRemovalMethod},
                              {"meshes_include_cone", false}};
    std::ofstream out(dir / "dataset.json", std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / "dataset.json").string());
    out << meta.dump(2) << '\n';
    return manifest;
}

GenerationConfig read_dataset_config(const std::filesystem::path& dir) {
    std::ifstream in(dir / "dataset.json", std::ios::binary);
    if (!in) throw DataError("dataset description not found: " + (dir / "dataset.json").string());
    try {
        const auto j = nlohmann::json::parse(in);
        return j.at("generation").get<GenerationConfig>();
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("dataset.json: malformed JSON", e.byte);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("dataset.json: ") + e.what());
    }
}

}  // namespace spikevol::synth
