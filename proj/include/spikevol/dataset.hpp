#pragma once

#include <filesystem>

#include "spikevol/eval.hpp"
#include "spikevol/synthgen.hpp"

namespace spikevol::synth {

/// Generates the configured spikes and writes, under `dir`:
///   masks/<spike_id>_v<k>.pgm   one per view (indoor 6, field 1)
///   meshes/<spike_id>.ply       when write_meshes is set
///   manifest.csv                spike_id, genotype, stage, domain, volume_mm3, view1..view6
///   dataset.json                generation config and its hash
/// Returns the manifest (view paths relative to `dir`).
eval::DatasetManifest make_dataset(const GenerationConfig& config, const std::filesystem::path& dir);

/// Reads the generation config stored next to a manifest.
GenerationConfig read_dataset_config(const std::filesystem::path& dir);

}  // namespace spikevol::synth
