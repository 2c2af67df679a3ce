#pragma once

#include <filesystem>
#include <string>

#include "spikevol/mesh.hpp"

namespace spikevol::geo {

enum class PlyFormat { Ascii, BinaryLittleEndian };

/// Reads ASCII or binary little-endian PLY. Polygons with more than three
/// vertices are fan-triangulated. Errors are ParseError with a byte offset.
TriangleMesh load_ply(const std::filesystem::path& path);
TriangleMesh parse_ply(const std::string& bytes);

void save_ply(const TriangleMesh& mesh, const std::filesystem::path& path,
              PlyFormat format = PlyFormat::BinaryLittleEndian, const std::string& comment = {});
std::string serialize_ply(const TriangleMesh& mesh, PlyFormat format, const std::string& comment = {});

}  // namespace spikevol::geo
